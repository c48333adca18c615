"""Continuous subproblems for a fixed selection.

* :func:`solve_rho` - offloading ratio at fixed power (KKT case analysis),
* :func:`solve_power` - IoTD transmit power at fixed ratio (closed form),
* :func:`solve_rho_power` - joint ratio and power on one path,
* :func:`solve_resource_allocation` - CPU shares of the tasks on one server
  by projected dual ascent,
* :func:`best_power` and :func:`best_ratio` - the same single-path problems
  scored with the actual (max-form) delay.

The first four work on the sum-form (worst-case) delay bound, so a
solution that meets the bound also meets the actual deadline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .derivatives import delay_slope, rho_gradient
from .errors import DeadlineUnreachableError, InfeasibleAllocationError
from .model import LN2, MIN_POWER, PathModel

RHO_GRID = 129
RATIO_DENSE = 257
PROFILE_GRID = 201


@dataclass(frozen=True)
class KktOutcome:
    """Result of a ratio solve.

    ``case_id`` is one of ``interior``, ``rho_one``, ``rho_zero`` or
    ``boundary_fallback`` (best point sits on the delay bound or on a kink,
    with no stationary point).  ``multipliers`` are (zeta, varsigma, tau) for
    the delay bound, ``rho <= 1`` and ``rho >= 0``.
    """

    rho_star: float
    case_id: str
    multipliers: tuple[float, float, float]
    iterations: int
    feasible: bool = True
    p: float = float("nan")
    power_case: str = ""
    residual: float = 0.0


@dataclass(frozen=True)
class PowerOutcome:
    """Result of a power solve.

    ``case`` is ``tight`` (deadline-tight closed form), ``interior``
    (stationary point of the utility), ``p_max``, ``deadline_risk`` (even
    ``p_max`` misses the deadline) or ``no_transmission`` (``rho = 0``).
    """

    p: float
    case: str
    p_tight: float
    p_stationary: float
    omega: float

    @property
    def deadline_risk(self) -> bool:
        return self.case == "deadline_risk"

    @property
    def no_transmission(self) -> bool:
        return self.case == "no_transmission"


# --------------------------------------------------------------------------
# power

def stationary_power(path: PathModel) -> float:
    """Maximiser of the utility in ``p`` over (0, p_max], ignoring the deadline.

    The sign of ``dU/dp`` is minus the sign of
    ``phi(p) = alpha*R(p) - (alpha*(p + circuit) + beta*eta*E_max/T_max) * R'(p)``
    and ``phi`` is increasing, so the utility is unimodal in ``p`` and the
    maximiser is the root of ``phi`` (or ``p_max`` if ``phi`` stays negative).
    It does not depend on the ratio.
    """
    a, eta = path.alpha, path.amplifier_eff
    c0 = path.beta * eta * path.energy_budget / path.delay_budget
    B, s = path.bandwidth, path.up_snr

    def phi(p):
        r = B * math.log2(1.0 + p * s)
        rp = B * s / (LN2 * (1.0 + p * s))
        return a * r - (a * (p + path.circuit_power) + c0) * rp

    if phi(path.p_max) <= 0:
        return path.p_max
    lo = MIN_POWER
    if phi(lo) >= 0:
        return lo
    return brentq(phi, lo, path.p_max, xtol=1e-300, rtol=1e-15, maxiter=200)


def upload_allowance(path: PathModel, rho):
    """Time left for the IoTD uplink once all other worst-case terms are paid."""
    rho = np.asarray(rho, float)
    return (path.delay_budget - path.local_time(rho) - rho * path.fixed_per_rho()
            - path.v2v_time(rho))


def tight_power(path: PathModel, rho, allowance=None):
    """Power whose uplink exactly consumes the allowance (``inf`` if none suffices)."""
    rho = np.asarray(rho, float)
    omega = upload_allowance(path, rho) if allowance is None else allowance
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        expo = rho * path.input_bits / (omega * path.bandwidth)
        p = np.expm1(expo * LN2) / path.up_snr
    return np.where(omega > 0, p, np.inf)


def solve_power(path: PathModel, rho: float, p_stat: float | None = None) -> PowerOutcome:
    """Best IoTD power for a fixed offloading ratio.

    Raises
    ------
    DeadlineUnreachableError
        If the non-uplink terms alone already exhaust the delay budget.
    """
    if rho <= 0:
        return PowerOutcome(MIN_POWER, "no_transmission", 0.0, float("nan"), float("nan"))
    omega = float(upload_allowance(path, rho))
    if omega <= 0:
        raise DeadlineUnreachableError(f"no power meets the deadline at rho={rho:.6g}")
    p_tight = float(tight_power(path, rho, omega))
    p_stat = stationary_power(path) if p_stat is None else p_stat
    if p_tight > path.p_max:
        return PowerOutcome(path.p_max, "deadline_risk", p_tight, p_stat, omega)
    if p_stat <= p_tight:
        return PowerOutcome(max(p_tight, MIN_POWER), "tight", p_tight, p_stat, omega)
    if p_stat >= path.p_max:
        return PowerOutcome(path.p_max, "p_max", p_tight, p_stat, omega)
    return PowerOutcome(p_stat, "interior", p_tight, p_stat, omega)


# --------------------------------------------------------------------------
# ratio at fixed power

def _feasible_mask(path: PathModel, rho, p):
    return (path.worst_delay(rho, p) <= path.delay_budget) & (path.log_arg(rho, p, worst=True) > 0)


def _sign_damped_root(g, lo: float, hi: float, tol: float = 1e-10, cap: int = 100):
    """Drive ``g`` to zero on ``[lo, hi]`` where ``g(lo) > 0 > g(hi)``.

    Steps of 0.1 in the direction of the residual sign, halved whenever the
    sign flips (the step is also capped by the bracket width).
    """
    x = 0.5 * (lo + hi)
    step = min(0.1, 0.25 * (hi - lo))
    gx = g(x)
    sign = np.sign(gx)
    for it in range(1, cap + 1):
        if abs(gx) <= tol or step < 1e-15:
            return x, gx, it
        if gx > 0:
            lo = x
        else:
            hi = x
        x_new = min(max(x + sign * step, lo), hi)
        if x_new in (lo, hi):
            x_new = 0.5 * (lo + hi)
        x = x_new
        gx = g(x)
        new_sign = np.sign(gx)
        if new_sign != sign:
            step *= 0.5
            sign = new_sign
    return x, gx, cap


def _delay_root(path: PathModel, p, lo: float, hi: float) -> float:
    """Largest feasible ratio between a feasible ``lo`` and an infeasible ``hi``."""
    def h(r):
        pr = p(r) if callable(p) else p
        return float(path.worst_delay(r, pr)) - path.delay_budget
    if h(hi) <= 0:
        return hi
    r = brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return r if h(r) <= 0 else lo + (r - lo) * (1 - 1e-12)


def solve_rho(path: PathModel, p: float) -> KktOutcome:
    """Utility-maximising offloading ratio at fixed power ``p``.

    Candidates are the bounds 0 and 1, the delay-tight ratio and every
    stationary point found by scanning the sign of ``dU/drho``; the best
    feasible one wins.  An outcome with ``feasible=False`` means not even
    ``rho = 0`` meets the budgets.
    """
    grid = np.linspace(0.0, 1.0, RHO_GRID)
    feas = _feasible_mask(path, grid, p)
    cands: list[tuple[float, str, int]] = []
    if feas[0]:
        cands.append((0.0, "rho_zero", 0))
    if feas[-1]:
        cands.append((1.0, "rho_one", 0))
    # delay-tight ratios at feasibility transitions
    for i in range(len(grid) - 1):
        if feas[i] and not feas[i + 1]:
            cands.append((_delay_root(path, p, grid[i], grid[i + 1]), "boundary_fallback", 0))
    # stationary points
    grads = np.array([rho_gradient(path, r, p) if f else np.nan
                      for r, f in zip(grid, feas)])
    for i in range(len(grid) - 1):
        if feas[i] and feas[i + 1] and grads[i] > 0 >= grads[i + 1]:
            r, res, its = _sign_damped_root(lambda x: rho_gradient(path, x, p),
                                            grid[i], grid[i + 1])
            case = "interior" if abs(res) <= 1e-6 else "boundary_fallback"
            cands.append((r, case, its))
    if not cands:
        return KktOutcome(0.0, "rho_zero", (0.0, 0.0, 0.0), 0, feasible=False, p=p)
    values = [float(path.utility(r, p, worst=True)) for r, _, _ in cands]
    best = int(np.argmax(values))
    rho, case, its = cands[best]
    return KktOutcome(rho, case, _multipliers(path, rho, p, case), its, True, p,
                      residual=_residual(path, rho, p, case))


def _residual(path: PathModel, rho: float, p: float, case: str) -> float:
    return abs(rho_gradient(path, rho, p)) if case == "interior" else 0.0


def _multipliers(path: PathModel, rho: float, p: float, case: str) -> tuple[float, float, float]:
    """KKT multipliers recovered from stationarity at the chosen point."""
    g = rho_gradient(path, rho, p)
    if case == "rho_one":
        return 0.0, max(g, 0.0), 0.0
    if case == "rho_zero":
        return 0.0, 0.0, max(-g, 0.0)
    if case == "boundary_fallback":
        slope = delay_slope(path, rho, p)
        return (max(g / slope, 0.0) if slope > 0 else 0.0), 0.0, 0.0
    return 0.0, 0.0, 0.0


# --------------------------------------------------------------------------
# joint ratio and power

def _profile(path: PathModel, rho, p_stat: float):
    """Best power for each ratio and the resulting worst-case utility."""
    rho = np.asarray(rho, float)
    allowance = upload_allowance(path, rho)
    p_tight = tight_power(path, rho, allowance)
    p = np.clip(np.maximum(p_stat, p_tight), MIN_POWER, path.p_max)
    ok = (rho == 0) | ((allowance > 0) & (p_tight <= path.p_max))
    p = np.where(rho == 0, MIN_POWER, p)
    u = np.where(ok, path.utility(rho, p, worst=True), -np.inf)
    return u, p


def solve_rho_power(path: PathModel) -> KktOutcome:
    """Jointly optimal ratio and power on one path (vehicle, server or direct).

    For every ratio the best power is available in closed form (the
    stationary power clipped to ``[p_tight(rho), p_max]``), so the joint
    problem reduces to a one-dimensional search: a grid scan followed by a
    bounded Brent refinement around the best cell and at the edge of the
    ratios that ``p_max`` can still serve.
    """
    p_stat = stationary_power(path)

    def value(r: float) -> float:
        return float(_profile(path, r, p_stat)[0])

    grid = np.linspace(0.0, 1.0, PROFILE_GRID)
    u, _ = _profile(path, grid, p_stat)
    if not np.isfinite(u).any():
        return KktOutcome(0.0, "rho_zero", (0.0, 0.0, 0.0), 0, feasible=False, p=MIN_POWER,
                          power_case="no_transmission")
    cands = [grid[int(np.argmax(u))]]
    evals = len(grid)
    ok = np.isfinite(u)
    for i in range(len(grid) - 1):
        if ok[i] and not ok[i + 1]:
            edge = _delay_root(path, path.p_max, grid[i], grid[i + 1])
            cands.append(edge)
    i = int(np.argmax(u))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda r: -min(max(value(r), -1e300), 1e300), bounds=(lo, hi),
                              method="bounded",
                              options={"xatol": 1e-12, "maxiter": 200})
        cands.append(float(res.x))
        evals += int(res.nfev)
    vals = [value(r) for r in cands]
    rho = float(cands[int(np.argmax(vals))])
    if rho <= 1e-12 or value(0.0) >= max(vals):
        rho = 0.0
    power = solve_power(path, rho, p_stat)
    p = power.p
    if rho == 0.0:
        case = "rho_zero"
    elif rho == 1.0:
        case = "rho_one"
    elif power.case in ("tight", "deadline_risk") or rho != rho:
        case = "boundary_fallback"
    else:
        case = "interior"
    mult = _multipliers(path, rho, p, case)
    resid = abs(rho_gradient(path, rho, p)) if case == "interior" else 0.0
    return KktOutcome(rho, case, mult, evals, True, p, power.case, resid)


# --------------------------------------------------------------------------
# actual (max-form) delay

@dataclass(frozen=True)
class PowerRoots:
    """Power maximisers of the two delay regions of one path."""

    delay_bound: float  # maximiser while the offloaded branch sets the delay
    energy_only: float  # maximiser while the local branch sets the delay


def power_roots(path: PathModel) -> PowerRoots:
    return PowerRoots(stationary_power(path), stationary_power(replace(path, beta=0.0)))


def best_power(path: PathModel, rho, exec_cpu=None, roots: PowerRoots | None = None):
    """Utility-maximising power per ratio under the actual delay.

    The delay is ``max(local, offloaded)``.  Where the offloaded branch
    dominates, the utility has the same single-peaked power dependence as
    the worst-case form; where the local branch dominates only the energy
    depends on the power.  Each region's maximiser is the matching root
    clipped into the region, so comparing the two gives the exact optimum.

    Broadcasts over ``rho`` and ``exec_cpu``.  Returns ``(utility, power)``
    with ``-inf`` utility where no power meets the deadline.
    """
    roots = roots or power_roots(path)
    f = path.exec_cpu if exec_cpu is None else exec_cpu
    rho, f = np.broadcast_arrays(np.asarray(rho, float), np.asarray(f, float))
    fixed_bits = path.input_bits * path.relay_in + path.output_bits * path.ret_per_bit
    fixed = rho * (fixed_bits + path.cycles / f) + path.v2v_time(rho)
    t_loc = path.local_time(rho)
    p_deadline = np.maximum(tight_power(path, rho, path.delay_budget - fixed), MIN_POWER)
    p_kink = np.maximum(tight_power(path, rho, t_loc - fixed), MIN_POWER)
    pm = path.p_max

    def score(p):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            up_t = np.where(rho > 0, rho * path.input_bits / path.up_rate(p), 0.0)
            delay = np.maximum(t_loc, up_t + fixed)
            energy = path.energy(rho, p)
            arg = (1.0 + path.alpha * (1.0 - energy / path.energy_budget)
                   + path.beta * (1.0 - delay / path.delay_budget))
            ok = (arg > 0) & (delay <= path.delay_budget * (1 + 1e-12))
            return np.where(ok, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)

    hi_a = np.minimum(p_kink, pm)
    p_a = np.clip(roots.delay_bound, p_deadline, np.maximum(hi_a, p_deadline))
    u_a = np.where(p_deadline <= hi_a, score(p_a), -np.inf)
    lo_b = np.maximum(p_kink, p_deadline)
    p_b = np.clip(roots.energy_only, np.minimum(lo_b, pm), pm)
    u_b = np.where(lo_b <= pm, score(p_b), -np.inf)
    take_b = u_b > u_a
    u = np.where(take_b, u_b, u_a)
    p = np.where(take_b, p_b, p_a)
    local = rho <= 0
    if local.any():
        u = np.where(local, score(np.full_like(rho, pm)), u)
        p = np.where(local, MIN_POWER, p)
    return u, p


def best_ratio(path: PathModel, roots: PowerRoots | None = None) -> tuple[float, float, float]:
    """Continuous maximiser ``(utility, rho, p)`` of the actual utility on one path."""
    roots = roots or power_roots(path)
    grid = np.linspace(0.0, 1.0, RATIO_DENSE)
    u, _ = best_power(path, grid, roots=roots)
    best_i = int(np.argmax(u))
    cands = [(float(u[best_i]), float(grid[best_i]))]
    finite = np.isfinite(u)
    peaks = [i for i in range(len(grid))
             if finite[i] and (i == 0 or u[i] >= u[i - 1]) and (i == len(grid) - 1 or u[i] >= u[i + 1])]
    peaks = sorted(peaks, key=lambda i: -u[i])[:3]

    def neg(r):
        val = float(best_power(path, r, roots=roots)[0])
        return -val if np.isfinite(val) else 1e300

    for i in peaks:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 200})
        if res.fun < 1e300:
            cands.append((-float(res.fun), float(res.x)))
    u_best, r_best = max(cands)
    if not np.isfinite(u_best):
        return -np.inf, 0.0, MIN_POWER
    u_best, p_best = best_power(path, r_best, roots=roots)
    return float(u_best), r_best, float(p_best)


# --------------------------------------------------------------------------
# resource allocation

@dataclass
class DualState:
    """Multipliers of the allocation Lagrangian.

    ``lam`` prices each task's delay bound, ``mu`` its lower CPU bound
    ``f >= F_V`` and ``theta`` the server capacity.  ``steps`` holds the last
    step sizes (one per multiplier family).
    """

    lam: np.ndarray
    mu: np.ndarray
    theta: float
    steps: tuple[float, float, float] = (0.0, 0.0, 0.0)
    iteration: int = 0


@dataclass
class AllocationOutcome:
    f: np.ndarray
    dual: DualState
    iterations: int
    converged: bool
    capacity_residual: float
    deadline_residual: float
    history: list[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class DualConfig:
    tol: float = 1e-4
    max_iter: int = 500
    inner_iter: int = 20


def _allocation_terms(paths: Sequence[PathModel], rho: np.ndarray, p: np.ndarray):
    """Split each worst-case log argument into ``W - D/f`` and the delay into ``A + rho*c/f``."""
    n = len(paths)
    W, D, A, T, C = (np.empty(n) for _ in range(5))
    for i, path in enumerate(paths):
        f = path.exec_cpu
        share = rho[i] * path.cycles / f
        D[i] = path.beta * rho[i] * path.cycles / path.delay_budget
        W[i] = float(path.log_arg(rho[i], p[i], worst=True)) + D[i] / f
        A[i] = float(path.worst_delay(rho[i], p[i])) - share
        T[i] = path.delay_budget
        C[i] = rho[i] * path.cycles
    return W, D, A, T, C


def allocation_lower_bounds(paths: Sequence[PathModel], rho, p, capacity: float,
                            vehicle_cpu: float) -> np.ndarray:
    """Smallest CPU share (Hz) meeting ``f >= F_V``, the delay bound and ``w0 > 0``."""
    rho, p = np.asarray(rho, float), np.asarray(p, float)
    W, D, A, T, C = _allocation_terms(paths, rho, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        f_delay = np.where(C > 0, np.where(T > A, C / (T - A), np.inf), 0.0)
        f_log = np.where(D > 0, np.where(W > 0, D / W, np.inf), 0.0)
    return np.maximum.reduce([np.full(len(paths), vehicle_cpu), f_delay, f_log * (1 + 1e-9)])


def solve_resource_allocation(paths: Sequence[PathModel], rho, p, capacity: float,
                              vehicle_cpu: float, cfg: DualConfig = DualConfig(),
                              f_init=None, dual_init: DualState | None = None) -> AllocationOutcome:
    """CPU shares of the tasks served by one server.

    Maximises the sum of worst-case utilities subject to the server capacity,
    ``f >= F_V`` and each task's delay bound.  The capacity is priced by
    ``theta``; for a fixed price the stationarity condition gives, in units
    of the capacity,

        f = sqrt(D / (ln2 * w0) / theta),   clipped to [lower bound, 1],

    with ``w0`` frozen at the previous inner iterate.  ``theta`` moves by a
    projected gradient step on the capacity residual, scaled by the local
    sensitivity of the total demand and kept inside a bracket of prices known
    to under- and over-subscribe the server.  The lower-bound multipliers
    (``lam`` for the delay bound, ``mu`` for ``F_V``) are read off the
    stationarity condition of the clipped tasks.

    Raises
    ------
    InfeasibleAllocationError
        If the lower bounds alone exceed the capacity.
    """
    n = len(paths)
    rho, p = np.asarray(rho, float), np.asarray(p, float)
    if n == 0:
        return AllocationOutcome(np.zeros(0), DualState(np.zeros(0), np.zeros(0), 0.0), 0,
                                 True, 0.0, 0.0)
    lower = allocation_lower_bounds(paths, rho, p, capacity, vehicle_cpu)
    if not np.all(np.isfinite(lower)) or lower.sum() > capacity * (1 + 1e-12):
        raise InfeasibleAllocationError(
            f"lower bounds {lower.sum():.4g} Hz exceed capacity {capacity:.4g} Hz")
    W, D, A, T, C = _allocation_terms(paths, rho, p)
    F = float(capacity)
    Dh = D / F
    ch = C / (F * T)
    lo_b = np.minimum(lower / F, 1.0)

    fh = np.full(n, 1.0 / n) if f_init is None else np.asarray(f_init, float) / F
    fh = np.clip(fh, lo_b, 1.0)
    theta = 0.0 if dual_init is None else float(dual_init.theta)

    def shares(theta, fh):
        """Inner fixed point on f with w0 refreshed from the previous iterate."""
        for _ in range(cfg.inner_iter):
            w0 = np.maximum(W - Dh / fh, 1e-300)
            num = Dh / (LN2 * w0)
            new = np.sqrt(num / theta) if theta > 0 else np.ones(n)
            new = np.clip(new, lo_b, 1.0)
            done = np.max(np.abs(new - fh)) <= 1e-13
            fh = new
            if done:
                break
        return fh, num

    history = [fh * F]
    t_lo, t_hi = 0.0, np.inf  # demand > 1 at t_lo, < 1 at t_hi
    converged = False
    step = 0.0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        prev = fh
        fh, num = shares(theta, fh)
        history.append(fh * F)
        resid = fh.sum() - 1.0
        change = float(np.max(np.abs(fh - prev)))
        if change <= cfg.tol and (resid <= cfg.tol if theta == 0 else abs(resid) <= cfg.tol):
            converged = True
            break
        if resid > 0:
            t_lo = max(t_lo, theta)
        elif theta > 0:
            t_hi = min(t_hi, theta)
        free = (fh > lo_b) & (fh < 1.0)
        sens = float(np.sum(fh[free])) / (2.0 * theta) if theta > 0 else 0.0
        if sens > 0:
            step = 1.0 / sens
            new_theta = max(theta + step * resid, 0.0)
        else:
            # every share sits on a bound: restart from the unclipped price
            new_theta = float(np.sum(np.sqrt(num)) ** 2) if resid > 0 else 0.5 * theta
            step = float("inf")
        if not (t_lo < new_theta < t_hi):
            new_theta = math.sqrt(t_lo * t_hi) if t_lo > 0 and np.isfinite(t_hi) else (
                2.0 * max(t_lo, 1e-300) if not np.isfinite(t_hi) else 0.5 * t_hi)
        theta = new_theta
    w0 = np.maximum(W - Dh / fh, 1e-300)
    excess = np.maximum(theta * fh ** 2 - Dh / (LN2 * w0), 0.0)
    on_low = fh <= lo_b * (1 + 1e-12)
    deadline_binds = ch > 0
    lt = np.where(ch > 0, C / (F * np.maximum(T - A, 1e-300)), 0.0)
    deadline_binds &= lt >= vehicle_cpu / F
    lam = np.where(on_low & deadline_binds, excess / np.where(ch > 0, ch, 1.0), 0.0)
    mu = np.where(on_low & ~deadline_binds, excess / np.maximum(fh ** 2, 1e-300), 0.0)
    dual = DualState(lam, mu, theta, (0.0, 0.0, step), it)
    f = _finalise(fh * F, lower, F)
    cap_res = float(f.sum() - F)
    dl_res = float(np.max([float(pth.with_cpu(fi).worst_delay(r, pp)) - pth.delay_budget
                           for pth, fi, r, pp in zip(paths, f, rho, p)]))
    return AllocationOutcome(f, dual, it, converged, cap_res, dl_res, history)


def _finalise(f: np.ndarray, lower: np.ndarray, capacity: float) -> np.ndarray:
    """Project onto ``f >= lower`` and ``sum f = capacity`` (utility rises with f)."""
    f = np.maximum(f, lower)
    excess = f.sum() - capacity
    if excess > 0:
        room = f - lower
        f = f - room * (excess / room.sum()) if room.sum() > 0 else lower.copy()
    elif excess < 0:
        f = f * (capacity / f.sum())
    f = np.maximum(f, lower)
    if f.sum() > capacity:
        f *= capacity / f.sum()
    return f
