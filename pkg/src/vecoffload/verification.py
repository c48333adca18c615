"""Finite-difference checks of the closed-form derivatives.

The reference values come from central differences of an independent
re-implementation of the worst-case utility in 40-digit ``mpmath``
arithmetic, so round-off in the reference is negligible against the 1e-5
relative step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .derivatives import analytic_derivatives
from .model import PathModel, SlotInstance, server_path, vehicle_path
from .scenario import ScenarioConfig, generate_scenario

STEP = 1e-5


def _mp_utility(path: PathModel, rho, p, f):
    """Worst-case utility in arbitrary precision (does not touch numpy)."""
    I, O, c = mp.mpf(path.input_bits), mp.mpf(path.output_bits), mp.mpf(path.cycles)
    F = mp.mpf(path.local_cpu)
    B = mp.mpf(path.bandwidth)
    r_up = B * mp.log(1 + p * mp.mpf(path.up_snr), 2)
    chain = rho * I / r_up + rho * (I * mp.mpf(path.relay_in) + c / f
                                   + O * mp.mpf(path.ret_per_bit))
    if path.v2v_snr > 0:
        d = mp.mpf(path.v2v_kappa) * rho
        d = d if d > 1 else mp.mpf(1)
        chain += rho * O / (B * mp.log(1 + mp.mpf(path.v2v_snr) / d ** 2, 2))
    delay = (1 - rho) * c / F + chain
    energy = ((p + mp.mpf(path.circuit_power)) * rho * I / (mp.mpf(path.amplifier_eff) * r_up)
              + rho * O * mp.mpf(path.rx_energy_per_bit)
              + mp.mpf(path.cap_coeff) * F ** 2 * (1 - rho) * c)
    w0 = (1 + mp.mpf(path.alpha) * (1 - energy / mp.mpf(path.energy_budget))
          + mp.mpf(path.beta) * (1 - delay / mp.mpf(path.delay_budget)))
    return mp.log(w0, 2)


def finite_differences(path: PathModel, rho: float, p: float) -> dict[str, float]:
    """Central differences of the worst-case utility, step 1e-5 relative."""
    with mp.workdps(40):
        x0 = {"rho": mp.mpf(rho), "p": mp.mpf(p), "f": mp.mpf(path.exec_cpu)}
        h = {k: v * STEP for k, v in x0.items()}

        def U(**shift):
            args = {k: x0[k] + shift.get(k, 0) * h[k] for k in x0}
            return _mp_utility(path, args["rho"], args["p"], args["f"])

        u0 = U()
        out = {}

        def first(v):
            return (U(**{v: 1}) - U(**{v: -1})) / (2 * h[v])

        def second(v):
            return (U(**{v: 1}) - 2 * u0 + U(**{v: -1})) / h[v] ** 2

        def mixed(v, w):
            return (U(**{v: 1, w: 1}) - U(**{v: 1, w: -1}) - U(**{v: -1, w: 1})
                    + U(**{v: -1, w: -1})) / (4 * h[v] * h[w])

        out["d_rho"] = first("rho")
        out["d_p"] = first("p")
        out["d2_rho"] = second("rho")
        out["d2_p"] = second("p")
        out["d2_cross"] = mixed("rho", "p")
        if path.kind in ("server", "direct"):
            out["d_f"] = first("f")
            out["d2_f"] = second("f")
            out["d2_f_p"] = mixed("f", "p")
            out["d2_f_rho"] = mixed("f", "rho")
        return {k: float(v) for k, v in out.items()}


@dataclass(frozen=True)
class SamplePoint:
    path: PathModel
    rho: float
    p: float


def sample_points(n: int, seed: int = 0, cfg: ScenarioConfig | None = None,
                  alpha: float = 1.0, beta: float = 1.0) -> list[SamplePoint]:
    """Random strictly feasible points, alternating vehicle and server paths.

    Points have ``rho`` in [0.05, 0.95], ``p`` in [0.01, 1] * p_max, a
    positive log argument and stay clear of the hand-over distance clamp.
    """
    cfg = cfg or ScenarioConfig(K=1, M=1, N=1)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    out: list[SamplePoint] = []
    draw = 0
    while len(out) < n:
        scen = generate_scenario(cfg.with_updates(K=1, M=1, N=1, seed=seed * 100003 + draw,
                                                  alpha=alpha, beta=beta))
        draw += 1
        slot: SlotInstance = scen.slot(0)
        rho = rng.uniform(0.05, 0.95)
        p = slot.radio.p_max_iotd * rng.uniform(0.01, 1.0)
        if len(out) % 2 == 0:
            path = vehicle_path(slot, 0)
        else:
            f = rng.uniform(1.05 * cfg.vehicle_cpu, cfg.server_cpu)
            path = server_path(slot, 0, 0, f)
        if path.v2v_snr > 0 and abs(path.v2v_kappa * rho - 1.0) < 1e-2:
            continue
        if not float(path.log_arg(rho, p, worst=True)) > 1e-3:
            continue
        out.append(SamplePoint(path, rho, p))
    return out


@dataclass
class DerivativeReport:
    """Outcome of the finite-difference suite."""

    n_points: int
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)
    failures: list[tuple[int, str, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def relative_error(analytic: float, reference: float) -> float:
    return abs(analytic - reference) / max(abs(reference), 1e-300)


def check_derivatives(points: list[SamplePoint], tolerance: float = 1e-4) -> DerivativeReport:
    """Compare every closed-form entry with finite differences at ``points``."""
    report = DerivativeReport(len(points), tolerance)
    for i, pt in enumerate(points):
        bundle = analytic_derivatives(pt.path, pt.rho, pt.p).entries()
        ref = finite_differences(pt.path, pt.rho, pt.p)
        for name, value in ref.items():
            err = relative_error(bundle[name], value)
            report.max_rel_error[name] = max(report.max_rel_error.get(name, 0.0), err)
            if not err <= tolerance:
                report.failures.append((i, name, value, bundle[name]))
    return report


# --------------------------------------------------------------------------
# continuous solvers against dense grids

RHO_ORACLE = np.linspace(0.0, 1.0, 1001)
P_ORACLE = np.linspace(0.005, 1.0, 200)
SPLIT_ORACLE = 401


@dataclass
class OracleReport:
    """Outcome of the grid-oracle suite, per solver."""

    n_instances: int
    tolerance: float
    checked: dict[str, int] = field(default_factory=dict)
    worst_gap: dict[str, float] = field(default_factory=dict)
    failures: list[tuple[str, int, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, name: str, index: int, oracle: float, got: float) -> None:
        self.checked[name] = self.checked.get(name, 0) + 1
        gap = oracle - got
        self.worst_gap[name] = max(self.worst_gap.get(name, -np.inf), gap)
        if not got >= oracle - self.tolerance:
            self.failures.append((name, index, oracle, got))


def _grid_best(path: PathModel, rho, p) -> float:
    u = np.where(path.feasible(rho, p), path.utility(rho, p, worst=True), -np.inf)
    return float(np.max(u))


def _split_oracle(paths: list[PathModel], rho, p, capacity: float, lower: np.ndarray) -> float:
    """Best total worst-case utility over a lattice of CPU splits that fill the server.

    The worst-case log argument of each task is affine in ``1/f`` and its
    delay is affine in ``1/f`` too, so the lattice is scored in one pass.
    """
    from .continuous import _allocation_terms

    n = len(paths)
    W, D, A, T, C = _allocation_terms(paths, np.asarray(rho, float), np.asarray(p, float))
    free = capacity - lower.sum()
    t = np.linspace(0.0, 1.0, SPLIT_ORACLE)
    if n == 1:
        shares = np.array([[1.0]])
    elif n == 2:
        shares = np.column_stack([t, 1 - t])
    else:
        a, b = np.meshgrid(t, t, indexing="ij")
        keep = a + b <= 1 + 1e-12
        a, b = a[keep], b[keep]
        shares = np.column_stack([a, b, np.maximum(1 - a - b, 0.0)])
    f = lower[None, :] + free * shares if n > 1 else np.array([[capacity]])
    arg = W[None, :] - D[None, :] / f
    ok = (arg > 0) & (A[None, :] + C[None, :] / f <= T[None, :] * (1 + 1e-12))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(ok, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)
    return float(np.max(u.sum(axis=1)))


def check_oracles(n_instances: int = 500, seed: int = 0, tolerance: float = 1e-6) -> OracleReport:
    """Compare the continuous solvers with dense-grid maxima of the same objective.

    Per instance: the ratio solve at fixed power on a vehicle path, the power
    solve at a fixed ratio, the joint ratio/power solve on a server path and
    the CPU allocation for one to three tasks sharing one server.  A solver
    passes when its utility is at least the grid maximum minus ``tolerance``
    and its point is feasible.
    """
    from .continuous import (allocation_lower_bounds, solve_power, solve_resource_allocation,
                             solve_rho, solve_rho_power)
    from .errors import DeadlineUnreachableError, InfeasibleAllocationError

    report = OracleReport(n_instances, tolerance)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(8,)))
    R, P = np.meshgrid(RHO_ORACLE, P_ORACLE)
    for i in range(n_instances):
        n_tasks = 1 + i % 3
        scen = generate_scenario(ScenarioConfig(K=n_tasks, M=1, N=1, seed=seed * 1000003 + i))
        slot = scen.slot(0)
        veh = vehicle_path(slot, 0)
        cap = float(slot.capacity[0])
        f = rng.uniform(1.05 * slot.compute.vehicle_cpu, cap)
        srv = server_path(slot, 0, 0, f)
        p_max = veh.p_max

        p = p_max * rng.uniform(0.01, 1.0)
        out = solve_rho(veh, p)
        got = float(veh.utility(out.rho_star, p, worst=True)) if out.feasible else -np.inf
        if out.feasible and not bool(veh.feasible(out.rho_star, p)):
            got = -np.inf
        report.record("solve_rho_vehicle", i, _grid_best(veh, RHO_ORACLE, p), got)

        path = veh if i % 2 == 0 else srv
        rho = rng.uniform(0.05, 1.0)
        try:
            pw = solve_power(path, rho)
        except DeadlineUnreachableError:
            pw = None
        oracle = _grid_best(path, rho, P_ORACLE * p_max)
        if np.isfinite(oracle):
            ok = pw is not None and bool(path.feasible(rho, pw.p))
            got = float(path.utility(rho, pw.p, worst=True)) if ok else -np.inf
            report.record("solve_power", i, oracle, got)

        joint = solve_rho_power(srv)
        ok = joint.rho_star == 0 or bool(srv.feasible(joint.rho_star, joint.p))
        got = float(srv.utility(joint.rho_star, joint.p, worst=True)) if ok else -np.inf
        report.record("solve_rho_power_server", i, _grid_best(srv, R, P * p_max), got)

        # ratios drawn among those feasible at an even split, so the lower bounds fit
        paths = [server_path(slot, k, 0, cap / n_tasks) for k in range(n_tasks)]
        pows = p_max * rng.uniform(0.3, 1.0, n_tasks)
        rhos = np.zeros(n_tasks)
        for k, pth in enumerate(paths):
            ok = RHO_ORACLE[1:][pth.feasible(RHO_ORACLE[1:], pows[k])]
            rhos[k] = rng.choice(ok) if ok.size else 0.0
        if np.any(rhos <= 0):
            continue
        try:
            alloc = solve_resource_allocation(paths, rhos, pows, cap, slot.compute.vehicle_cpu)
        except InfeasibleAllocationError:
            continue
        lower = allocation_lower_bounds(paths, rhos, pows, cap, slot.compute.vehicle_cpu)
        got = sum(float(pth.with_cpu(fi).utility(r, pp, worst=True))
                  for pth, fi, r, pp in zip(paths, alloc.f, rhos, pows))
        if alloc.f.sum() > cap * (1 + 1e-9):
            got = -np.inf
        report.record("solve_resource_allocation", i,
                      _split_oracle(paths, rhos, pows, cap, lower), got)
    return report
