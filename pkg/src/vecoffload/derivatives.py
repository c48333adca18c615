"""Analytic first and second derivatives of the worst-case utility.

The utility of one task on a path, with the sum-form delay bound, is

    U(rho, p, f) = log2(w0),
    w0 = 1 + alpha * (1 - E / E_max) + beta * (1 - T_wc / T_max).

The closed forms below are written with the same intermediate scalars
``w0 .. w5`` that structure the hand derivation.  They are checked against
high-precision finite differences by :mod:`vecoffload.verification`.
``rho_gradient`` is also what the ratio solver drives to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import LN2, REF_DISTANCE, PathModel


@dataclass(frozen=True)
class DerivativeBundle:
    """Derivatives of ``U`` at one point; f-entries are ``nan`` on the vehicle path."""

    d_rho: float
    d_p: float
    d_f: float
    d2_rho: float
    d2_p: float
    d2_cross: float
    d2_f: float
    d2_f_p: float
    d2_f_rho: float
    omega: tuple[float, float, float, float, float, float]

    def entries(self) -> dict[str, float]:
        names = ("d_rho", "d_p", "d_f", "d2_rho", "d2_p", "d2_cross",
                 "d2_f", "d2_f_p", "d2_f_rho")
        return {n: getattr(self, n) for n in names if np.isfinite(getattr(self, n))}


def _v2v_terms(path: PathModel, rho: float) -> tuple[float, float]:
    """First and second rho-derivatives of the hand-over time ``rho*O/R_vv(rho)``."""
    if path.v2v_snr <= 0:
        return 0.0, 0.0
    O, kappa, s, B = path.output_bits, path.v2v_kappa, path.v2v_snr, path.bandwidth
    d = kappa * rho
    if d <= REF_DISTANCE:
        # Distance clamped at the reference: the rate is constant in rho.
        return O / float(path.v2v_rate(rho)), 0.0
    R = B * np.log2(1.0 + s / d ** 2)
    R1 = -2.0 * B * s / (LN2 * (d ** 3 + s * d))
    R2 = 2.0 * B * s * (3.0 * d ** 2 + s) / (LN2 * (d ** 3 + s * d) ** 2)
    q = 1.0 / R
    q1 = -kappa * R1 / R ** 2
    q2 = kappa ** 2 * (2.0 * R1 ** 2 / R ** 3 - R2 / R ** 2)
    return O * (q + rho * q1), O * (2.0 * q1 + rho * q2)


def _omegas(path: PathModel, rho: float, p: float):
    I, O, c = path.input_bits, path.output_bits, path.cycles
    E, T = path.energy_budget, path.delay_budget
    a, b, eta = path.alpha, path.beta, path.amplifier_eff
    sigma, B = path.up_snr, path.bandwidth
    R = float(path.up_rate(p))
    Rp = B * sigma / (LN2 * (1.0 + p * sigma))
    w0 = float(path.log_arg(rho, p, worst=True))
    w1 = a * (p + path.circuit_power) / (eta * E) + b / T
    w2 = (b / T) * (path.fixed_per_rho() - c / path.local_cpu) + a * (
        O * path.rx_energy_per_bit - path.cap_coeff * path.local_cpu ** 2 * c) / E
    w3, w3_prime = _v2v_terms(path, rho)
    w4 = I * Rp / R ** 2
    w5 = sigma / (1.0 + p * sigma) * (1.0 + 2.0 * B / (LN2 * R))
    g = I * w1 / R + w2 + (b / T) * w3
    chi = a * I / (eta * E * R) - w1 * w4
    return w0, w1, w2, w3, w3_prime, w4, w5, g, chi


def rho_gradient(path: PathModel, rho: float, p: float) -> float:
    """``dU/drho`` of the worst-case utility at fixed power."""
    w0, *_, g, _ = _omegas(path, rho, p)
    return -g / (LN2 * w0)


def lagrangian_rho_residual(path: PathModel, rho: float, p: float, zeta: float = 0.0,
                            varsigma: float = 0.0, tau: float = 0.0) -> float:
    """Stationarity residual of the ratio Lagrangian (delay, upper and lower bounds)."""
    w0, *_, g, _ = _omegas(path, rho, p)
    dT = delay_slope(path, rho, p)
    return -g / (LN2 * w0) - zeta * dT - varsigma + tau


def delay_slope(path: PathModel, rho: float, p: float) -> float:
    """``dT_wc/drho`` at fixed power."""
    w3, _ = _v2v_terms(path, rho)
    return (path.input_bits / float(path.up_rate(p)) + path.fixed_per_rho()
            - path.cycles / path.local_cpu + w3)


def analytic_derivatives(path: PathModel, rho: float, p: float) -> DerivativeBundle:
    """Evaluate every closed-form derivative of ``U`` at ``(rho, p, f)``.

    ``f`` is ``path.exec_cpu``; the f-entries are only filled for server
    paths.

    Raises
    ------
    DomainError
        If the point is not strictly inside the domain (``p <= 0``,
        ``rho`` outside ``(0, 1]`` or a non-positive log argument).
    """
    if not (0 < rho <= 1) or not p > 0:
        raise DomainError("derivatives need 0 < rho <= 1 and p > 0")
    w0, w1, w2, w3, w3p, w4, w5, g, chi = _omegas(path, rho, p)
    if not (w0 > 0 and np.isfinite(w0)):
        raise DomainError("log argument must be positive")
    a, b, eta = path.alpha, path.beta, path.amplifier_eff
    E, T, c = path.energy_budget, path.delay_budget, path.cycles

    d_rho = -g / (LN2 * w0)
    d_p = -rho * chi / (LN2 * w0)
    d2_rho = -(b / T) * w3p / (LN2 * w0) - (g / w0) ** 2 / LN2
    d2_cross = -chi * (w0 + rho * g) / (LN2 * w0 ** 2)
    d2_p = (-rho * w4 * (w1 * w5 - 2.0 * a / (eta * E)) / (LN2 * w0)
            - (rho * chi / w0) ** 2 / LN2)

    nan = float("nan")
    d_f = d2_f = d2_f_p = d2_f_rho = nan
    if path.kind in ("server", "direct"):
        f = path.exec_cpu
        k = b * c / (LN2 * T * f ** 2)
        d_f = k * rho / w0
        d2_f = -b * rho * c / (LN2 * T * f ** 3 * w0 ** 2) * (2.0 * w0 + b * rho * c / (T * f))
        d2_f_p = k * rho ** 2 * chi / w0 ** 2
        d2_f_rho = k * (w0 + rho * g) / w0 ** 2
    return DerivativeBundle(d_rho, d_p, d_f, d2_rho, d2_p, d2_cross, d2_f, d2_f_p,
                            d2_f_rho, (w0, w1, w2, w3, w4, w5))


def power_curvature_margin(path: PathModel, rho: float, p: float) -> float:
    """``w1*w5 - 2*alpha/(eta*E_max)``; positive means ``U`` is concave in ``p``."""
    _, w1, _, _, _, _, w5, _, _ = _omegas(path, rho, p)
    return w1 * w5 - 2.0 * path.alpha / (path.amplifier_eff * path.energy_budget)
