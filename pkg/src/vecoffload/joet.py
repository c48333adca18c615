"""Outer alternating loop: selection, then CPU shares, ratios and powers.

Per round the selection is re-derived by :func:`vecoffload.bsum.run_algorithm1`
on an option table built from the current working ratio/power/CPU values,
then the continuous variables are re-optimised for that selection.  The
best decision seen so far is kept and the loop stops as soon as a round
fails to improve it or the relative improvement drops below the tolerance.

Working values are kept per (task, option) so that options not selected in
a round still carry sensible ratio/power values into the next selection.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bsum import OptionTable, run_algorithm1
from .continuous import (
    DualConfig,
    allocation_lower_bounds,
    best_ratio,
    solve_resource_allocation,
    solve_rho,
    solve_rho_power,
)
from .errors import InfeasibleAllocationError, LedgerError
from .model import (
    MIN_POWER,
    DecisionVector,
    PathModel,
    SlotInstance,
    SlotResult,
    direct_path,
    evaluate_decision,
    server_path,
    utility,
    vehicle_path,
)

LOCAL = -1
VEHICLE = 0  # options are encoded as -1 (local), 0 (vehicle), m + 1 (server m)


@dataclass(frozen=True)
class OptionSpace:
    """Which offloading options a scheme may use.

    ``direct`` swaps the vehicle relay chain for the direct IoTD->RSU link.
    """

    allow_vehicle: bool = True
    allow_server: bool = True
    direct: bool = False


FULL_SPACE = OptionSpace()


@dataclass(frozen=True)
class JoetConfig:
    bsum_tol: float = 1e-3
    bsum_penalty: float = 1.0
    slack_weight: float | None = None  # defaults to 10 * alpha
    round_threshold: float = 0.5
    bsum_max_iter: int = 200
    outer_tol: float = 1e-3
    outer_max_iter: int = 50
    inner_rounds: int = 5
    inner_tol: float = 1e-6
    rho0: float = 0.5
    p0_fraction: float = 0.5
    dual: DualConfig = field(default_factory=DualConfig)
    actual_polish: bool = True


@dataclass
class ConvergenceReport:
    outer_iterations: int = 0
    dual_iterations: list[int] = field(default_factory=list)
    bsum_iterations: list[int] = field(default_factory=list)
    utility_trace: list[float] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    failures: list[str] = field(default_factory=list)


# --------------------------------------------------------------------------
# resource ledger

@dataclass
class ResourceLedger:
    """Free CPU per server across slots, with delayed releases of grants."""

    capacity: np.ndarray
    free: np.ndarray = None  # type: ignore[assignment]
    pending: list[tuple[int, int, float]] = field(default_factory=list)
    slot: int = 0
    granted_total: np.ndarray = None  # type: ignore[assignment]
    released_total: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.capacity = np.asarray(self.capacity, float).copy()
        self.free = self.capacity.copy() if self.free is None else np.asarray(self.free, float).copy()
        if self.granted_total is None:
            self.granted_total = np.zeros_like(self.capacity)
        if self.released_total is None:
            self.released_total = np.zeros_like(self.capacity)

    @property
    def pending_total(self) -> np.ndarray:
        out = np.zeros_like(self.capacity)
        for _, m, hz in self.pending:
            out[m] += hz
        return out

    def grant(self, m: int, hz: float, delay: float, delta_t: float) -> None:
        """Reserve ``hz`` on server ``m`` until ``ceil(delay / delta_t)`` slots later."""
        if hz <= 0:
            return
        if hz > self.free[m] * (1 + 1e-9) + 1e-6:
            raise LedgerError(f"grant {hz:.6g} Hz exceeds free {self.free[m]:.6g} Hz on server {m}")
        hz = min(hz, self.free[m])
        self.free[m] -= hz
        self.granted_total[m] += hz
        slots = max(1, math.ceil(delay / delta_t - 1e-12))
        self.pending.append((self.slot + slots, m, hz))

    def start_slot(self, n: int) -> None:
        """Move to slot ``n`` and return every grant due by then."""
        self.slot = n
        keep = []
        for due, m, hz in self.pending:
            if due <= n:
                self.free[m] = min(self.free[m] + hz, self.capacity[m])
                self.released_total[m] += hz
            else:
                keep.append((due, m, hz))
        self.pending = keep


def advance_ledger(ledger: ResourceLedger, decision: DecisionVector, result: SlotResult,
                   delta_t: float) -> ResourceLedger:
    """Book the slot's grants and step the ledger to the next slot."""
    for k in range(len(decision.x)):
        if decision.x[k] == 0 and decision.y[k].any() and decision.rho[k] > 0:
            m = int(decision.y[k].argmax())
            ledger.grant(m, float(decision.f[k, m]), float(result.delay[k]), delta_t)
    ledger.start_slot(ledger.slot + 1)
    return ledger


# --------------------------------------------------------------------------
# paths and assignments

def option_path(slot: SlotInstance, k: int, option: int, f: float, space: OptionSpace) -> PathModel:
    if option == VEHICLE:
        return vehicle_path(slot, k)
    maker = direct_path if space.direct else server_path
    return maker(slot, k, option - 1, f)


def decision_from_assignment(slot: SlotInstance, assign, rho, p, f, space: OptionSpace) -> DecisionVector:
    """Binary decision vector for per-task options (-1 local, 0 vehicle, m + 1 server)."""
    K, M = slot.K, slot.M
    x, y, F = np.zeros(K, int), np.zeros((K, M), int), np.zeros((K, M))
    rho_out, p_out = np.zeros(K), np.full(K, MIN_POWER)
    for k, a in enumerate(assign):
        if a == LOCAL or rho[k] <= 0:
            continue
        rho_out[k], p_out[k] = rho[k], p[k]
        if a == VEHICLE:
            x[k] = 1
        else:
            y[k, a - 1] = 1
            F[k, a - 1] = f[k]
    return DecisionVector(x, y, F, rho_out, p_out, np.full(K, space.direct) & y.any(axis=1))


def assignment_of(decision: DecisionVector) -> np.ndarray:
    out = np.full(len(decision.x), LOCAL)
    for k in range(len(out)):
        if decision.x[k] == 1:
            out[k] = VEHICLE
        elif decision.y[k].any():
            out[k] = int(decision.y[k].argmax()) + 1
    return out


@dataclass
class ContinuousResult:
    assign: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    f: np.ndarray
    dual_iterations: list[int]
    failures: list[str]


def optimize_assignment(slot: SlotInstance, assign, space: OptionSpace = FULL_SPACE,
                        cfg: JoetConfig = JoetConfig(), optimize_power: bool = True,
                        fixed_power: float | None = None) -> ContinuousResult:
    """Ratios, powers and CPU shares for a fixed assignment.

    Vehicle tasks get their jointly optimal ratio and power.  On each server
    the CPU allocation and the per-task ratio/power solves alternate until
    the group utility stalls.  Tasks for which offloading does not pay, or
    that cannot fit on their server, fall back to local execution (largest
    CPU demand evicted first).
    """
    K = slot.K
    assign = np.array(assign, int)
    rho, p, f = np.zeros(K), np.full(K, MIN_POWER), np.zeros(K)
    dual_its: list[int] = []
    failures: list[str] = []
    p_fixed = slot.radio.p_max_iotd if fixed_power is None else fixed_power

    def solve(path):
        if optimize_power:
            out = solve_rho_power(path)
            return out.rho_star if out.feasible else 0.0, out.p
        out = solve_rho(path, p_fixed)
        return (out.rho_star if out.feasible else 0.0), p_fixed

    for k in np.flatnonzero(assign == VEHICLE):
        rho[k], p[k] = solve(vehicle_path(slot, k))
        if rho[k] <= 0:
            assign[k] = LOCAL
    for m in range(slot.M):
        members = [int(k) for k in np.flatnonzero(assign == m + 1)]
        cap = float(slot.capacity[m])
        while members and cap / len(members) <= slot.compute.vehicle_cpu:
            # evict the task with the most cycles until every share can exceed F_V
            worst = max(members, key=lambda k: slot.tasks[k].cycles)
            members.remove(worst)
            assign[worst] = LOCAL
        if not members:
            continue
        shares = {k: cap / len(members) for k in members}
        prev_u = -np.inf
        for _ in range(cfg.inner_rounds):
            for k in list(members):
                rho[k], p[k] = solve(option_path(slot, k, m + 1, shares[k], space))
                if rho[k] <= 0:
                    members.remove(k)
                    assign[k] = LOCAL
                    rho[k], p[k] = 0.0, MIN_POWER
            if not members:
                break
            while True:
                paths = [option_path(slot, k, m + 1, shares[k], space) for k in members]
                try:
                    alloc = solve_resource_allocation(paths, rho[members], p[members], cap,
                                                      slot.compute.vehicle_cpu, cfg.dual,
                                                      f_init=[shares[k] for k in members])
                    break
                except InfeasibleAllocationError:
                    low = allocation_lower_bounds(paths, rho[members], p[members], cap,
                                                  slot.compute.vehicle_cpu)
                    worst = members[int(np.argmax(low))]
                    members.remove(worst)
                    assign[worst] = LOCAL
                    rho[worst], p[worst] = 0.0, MIN_POWER
                    if not members:
                        alloc = None
                        break
            if alloc is None:
                break
            dual_its.append(alloc.iterations)
            if not alloc.converged:
                failures.append(f"dual loop on server {m} stopped at {alloc.iterations} iterations")
            shares = {k: float(fk) for k, fk in zip(members, alloc.f)}
            u = sum(float(option_path(slot, k, m + 1, shares[k], space).utility(rho[k], p[k], worst=True))
                    for k in members)
            if abs(u - prev_u) <= cfg.inner_tol * max(1.0, abs(u)):
                break
            prev_u = u
        for k in members:
            f[k] = shares[k]
    return ContinuousResult(assign, rho, p, f, dual_its, failures)


def repair(slot: SlotInstance, decision: DecisionVector) -> tuple[DecisionVector, SlotResult]:
    """Send every task that misses its deadline or budget to local execution."""
    result = evaluate_decision(slot, decision)
    t_max = np.array([t.delay_budget for t in slot.tasks])
    bad = (result.delay > t_max * (1 + 1e-12)) | ~(result.log_arg > 0)
    offloaded = (decision.x == 1) | decision.y.any(axis=1)
    bad &= offloaded
    if not bad.any():
        return decision, result
    for k in np.flatnonzero(bad):
        decision.x[k] = 0
        decision.y[k] = 0
        decision.f[k] = 0.0
        decision.rho[k] = 0.0
        decision.p[k] = MIN_POWER
        decision.direct[k] = False
    return decision, evaluate_decision(slot, decision)


def polish_actual(slot: SlotInstance, decision: DecisionVector) -> tuple[DecisionVector, SlotResult]:
    """Re-solve each offloaded task's ratio and power under the actual delay.

    The selection loop scores the sum-form delay bound, which charges the
    local and offloaded parts as if they ran back to back.  With the
    selection and CPU shares fixed the tasks decouple, so each one is
    re-optimised on the max-form delay it is actually evaluated with.  A task
    keeps its values unless its utility improves; a task whose best ratio is
    zero goes local.
    """
    d = DecisionVector(decision.x.copy(), decision.y.copy(), decision.f.copy(), decision.rho.copy(),
                       decision.p.copy(), decision.direct.copy())
    current = evaluate_decision(slot, d).utility_term
    for k in range(slot.K):
        if d.x[k] == 1:
            path = vehicle_path(slot, k)
        elif d.y[k].any():
            m = int(d.y[k].argmax())
            path = (direct_path if d.direct[k] else server_path)(slot, k, m, float(d.f[k, m]))
        else:
            continue
        u, rho, p = best_ratio(path)
        if not u > current[k] + 1e-12:
            continue
        if rho > 0:
            d.rho[k], d.p[k] = rho, p
        else:
            d.x[k], d.y[k], d.f[k], d.direct[k] = 0, 0, 0.0, False
            d.rho[k], d.p[k] = 0.0, MIN_POWER
    return repair(slot, d)


# --------------------------------------------------------------------------
# the driver

@dataclass
class _Working:
    rho: np.ndarray  # (K, M + 1)
    p: np.ndarray
    f: np.ndarray  # (K, M) CPU share assumed for server options


def _prospective(slot: SlotInstance, assign) -> np.ndarray:
    """CPU share a task would get on each server if it joined it: equal split."""
    counts = np.array([np.sum(np.asarray(assign) == m + 1) for m in range(slot.M)])
    return np.tile(slot.capacity / (counts + 1.0), (slot.K, 1))


def _option_table(slot: SlotInstance, w: _Working, space: OptionSpace) -> OptionTable:
    K, M = slot.K, slot.M
    E = np.full((K, M + 2), np.inf)
    T = np.full((K, M + 2), np.inf)
    for k, task in enumerate(slot.tasks):
        E[k, -1] = slot.compute.cap_coeff * task.local_cpu ** 2 * task.cycles
        T[k, -1] = task.local_delay
        options = ([VEHICLE] if space.allow_vehicle else []) + (
            [m + 1 for m in range(M)] if space.allow_server else [])
        for o in options:
            f = w.f[k, o - 1] if o > 0 else 0.0
            if o > 0 and f <= slot.compute.vehicle_cpu:
                continue
            path = option_path(slot, k, o, f, space)
            r, pw = w.rho[k, o], w.p[k, o]
            E[k, o] = float(path.energy(r, pw))
            T[k, o] = float(path.delay(r, pw))
    e_max = np.array([t.energy_budget for t in slot.tasks])
    t_max = np.array([t.delay_budget for t in slot.tasks])
    return OptionTable(E, T, e_max, t_max, slot.alpha, slot.beta,
                       space.allow_vehicle, space.allow_server)


def _refresh_working(slot: SlotInstance, w: _Working, cont: ContinuousResult,
                     space: OptionSpace) -> None:
    """Store solved values for chosen options and re-solve the others at their prospective share."""
    w.f = _prospective(slot, cont.assign)
    for k in range(slot.K):
        a = cont.assign[k]
        if a > 0:
            w.f[k, a - 1] = cont.f[k]
        options = ([VEHICLE] if space.allow_vehicle else []) + (
            [m + 1 for m in range(slot.M)] if space.allow_server else [])
        for o in options:
            if o == a:
                w.rho[k, o], w.p[k, o] = cont.rho[k], cont.p[k]
                continue
            f = w.f[k, o - 1] if o > 0 else 0.0
            if o > 0 and f <= slot.compute.vehicle_cpu:
                continue
            out = solve_rho_power(option_path(slot, k, o, f, space))
            w.rho[k, o], w.p[k, o] = (out.rho_star, out.p) if out.feasible else (0.0, MIN_POWER)


def _server_preference(table: OptionTable, assign) -> np.ndarray:
    """Warm start for the server block.

    ``y`` reads as the server choice given that the task does not go to the
    vehicle, so tasks off the servers start from their best server option
    (when it beats local).  Starting them at zero would freeze the vehicle
    weight: at ``x = 1`` the server block has no effect on the mixture.
    """
    K, M = table.K, table.M
    y0 = np.zeros((K, M))
    u = table.option_utility()
    for k in range(K):
        if assign[k] > 0:
            y0[k, assign[k] - 1] = 1.0
        elif M and table.allow_server:
            m = int(np.argmax(u[k, 1:M + 1]))
            if np.isfinite(u[k, m + 1]) and u[k, m + 1] > u[k, -1]:
                y0[k, m] = 1.0
    return y0


def run_joet(slot: SlotInstance, cfg: JoetConfig = JoetConfig(), space: OptionSpace = FULL_SPACE
             ) -> tuple[DecisionVector, SlotResult, ConvergenceReport]:
    """Alternate selection and continuous optimisation until the utility settles.

    ``slot.capacity`` is the free CPU per server for this slot (see
    :class:`ResourceLedger`).  Returns the best decision found, its
    evaluation and a convergence report.
    """
    t0 = time.perf_counter()
    K, M = slot.K, slot.M
    report = ConvergenceReport()
    best = DecisionVector.all_local(K, M)
    best_res = evaluate_decision(slot, best)
    best_u = utility(best_res)
    report.utility_trace.append(best_u)
    assign = np.full(K, LOCAL)
    w = _Working(np.full((K, M + 1), cfg.rho0),
                 np.full((K, M + 1), cfg.p0_fraction * slot.radio.p_max_iotd),
                 _prospective(slot, assign))
    for it in range(1, cfg.outer_max_iter + 1):
        report.outer_iterations = it
        table = _option_table(slot, w, space)
        x0 = (assign == VEHICLE).astype(float)
        y0 = _server_preference(table, assign)
        sel = run_algorithm1(table, x0, y0, cfg.bsum_tol, penalty=cfg.bsum_penalty,
                             slack_weight=cfg.slack_weight, round_threshold=cfg.round_threshold,
                             max_iter=cfg.bsum_max_iter)
        report.bsum_iterations.append(sel.iterations)
        if not sel.converged:
            report.failures.append(f"selection stopped at the iteration cap in round {it}")
        new_assign = np.full(K, LOCAL)
        new_assign[sel.x == 1] = VEHICLE
        for k in np.flatnonzero((sel.x == 0) & sel.y.any(axis=1)):
            new_assign[k] = int(sel.y[k].argmax()) + 1
        cont = optimize_assignment(slot, new_assign, space, cfg)
        report.dual_iterations.extend(cont.dual_iterations)
        report.failures.extend(cont.failures)
        decision = decision_from_assignment(slot, cont.assign, cont.rho, cont.p, cont.f, space)
        decision, result = repair(slot, decision)
        u = utility(result)
        _refresh_working(slot, w, cont, space)
        if u < best_u - 1e-12:
            report.converged = True
            break
        gain = u - best_u
        best, best_res, best_u = decision, result, u
        assign = assignment_of(decision)
        report.utility_trace.append(u)
        if gain <= cfg.outer_tol * max(abs(u), 1e-12):
            report.converged = True
            break
    if cfg.actual_polish:
        best, best_res = polish_actual(slot, best)
        if utility(best_res) != best_u:
            report.utility_trace.append(utility(best_res))
    report.wall_time = time.perf_counter() - t0
    return best, best_res, report
