"""Binary selection by block successive upper-bound minimisation.

The binary choices (``x``: vehicle, ``y[:, m]``: server ``m``) are relaxed
to [0, 1] and read as a mixture over the options of each task:

    pi_vehicle = x,  pi_m = (1 - x) * y_m,  pi_local = (1 - x) * (1 - sum y).

The mixed energy and delay are the pi-weighted sums of the per-option
values, which are computed beforehand for fixed ratio, power and CPU share
(:class:`OptionTable`).  The negated utility plus a penalty on deadline
excess is then minimised coordinate by coordinate (the ``x`` block first,
then the ``y`` block, cyclically), each scalar step carrying a quadratic
proximal term.  After the relative change of the objective drops below the
tolerance the relaxed point is rounded with a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import LN2

GRID_POINTS = 101
GOLDEN_TOL = 1e-4
LOG_FLOOR = 1e-6
INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0
# Surrogate energy/delay multiple for options that cannot serve a task.
UNAVAILABLE = 1e6


@dataclass(frozen=True)
class OptionTable:
    """Energy and delay of every task on every option, at fixed continuous variables.

    Columns are ``[vehicle, server 0 .. server M-1, local]``.  Unavailable
    options carry ``inf``; they are replaced by a large finite surrogate so
    that relaxed mixtures stay well defined.
    """

    energy: np.ndarray
    delay: np.ndarray
    e_max: np.ndarray
    t_max: np.ndarray
    alpha: float
    beta: float
    allow_vehicle: bool = True
    allow_server: bool = True

    def __post_init__(self) -> None:
        E = np.array(self.energy, float)
        T = np.array(self.delay, float)
        bad = ~(np.isfinite(E) & np.isfinite(T))
        E[bad] = (UNAVAILABLE * np.asarray(self.e_max)[:, None] * np.ones_like(E))[bad]
        T[bad] = (UNAVAILABLE * np.asarray(self.t_max)[:, None] * np.ones_like(T))[bad]
        object.__setattr__(self, "energy", E)
        object.__setattr__(self, "delay", T)
        object.__setattr__(self, "available", ~bad)

    @property
    def K(self) -> int:
        return self.energy.shape[0]

    @property
    def M(self) -> int:
        return self.energy.shape[1] - 2

    @property
    def u_cap(self) -> float:
        """Largest attainable per-task utility (zero energy, zero delay)."""
        return math.log2(1.0 + self.alpha + self.beta)

    def option_utility(self) -> np.ndarray:
        """Per-task utility of each pure option (``-inf`` when unavailable or invalid)."""
        arg = (1.0 + self.alpha * (1.0 - self.energy / self.e_max[:, None])
               + self.beta * (1.0 - self.delay / self.t_max[:, None]))
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(arg > 0, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)
        return np.where(self.available, u, -np.inf)

    def mixture(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Relaxed energy and delay of each task (``x``: (K,), ``y``: (K, M))."""
        rest = 1.0 - y.sum(axis=1)
        w = np.column_stack([x, (1.0 - x)[:, None] * y, (1.0 - x) * rest])
        return (w * self.energy).sum(axis=1), (w * self.delay).sum(axis=1)


def relaxed_utility(table: OptionTable, E, T):
    """``log2`` of the log argument, continued linearly below ``LOG_FLOOR``."""
    e_max = table.e_max.reshape((-1,) + (1,) * (np.ndim(E) - 1))
    t_max = table.t_max.reshape((-1,) + (1,) * (np.ndim(T) - 1))
    arg = 1.0 + table.alpha * (1.0 - E / e_max) + table.beta * (1.0 - T / t_max)
    safe = np.maximum(arg, LOG_FLOOR)
    return np.where(arg >= LOG_FLOOR, np.log2(safe),
                    math.log2(LOG_FLOOR) + (arg - LOG_FLOOR) / (LOG_FLOOR * LN2))


def slacks(table: OptionTable, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deadline excess of the vehicle choice and of the server choice, per task (s)."""
    dx = np.maximum(0.0, x * table.delay[:, 0] - table.t_max)
    dy = np.maximum(0.0, (y * table.delay[:, 1:-1]).sum(axis=1) - table.t_max)
    return dx, dy


def penalized_objective(table: OptionTable, x, y, slack_weight: float) -> float:
    """Shifted negated utility plus weighted deadline excess (always >= 0)."""
    E, T = table.mixture(x, y)
    dx, dy = slacks(table, x, y)
    return float(np.sum(table.u_cap - relaxed_utility(table, E, T)) + slack_weight * np.sum(dx + dy))


def proximal_objective(candidate, previous_x, previous_y, table: OptionTable, penalty: float,
                       block: str = "x", slack_weight: float = 0.0) -> float:
    """Negated utility at ``candidate`` for one block plus the proximal term.

    ``candidate`` replaces ``previous_x`` (``block="x"``) or ``previous_y``
    (``block="y"``).  With ``slack_weight > 0`` the weighted deadline excess
    is added as well.
    """
    x, y = np.asarray(previous_x, float), np.asarray(previous_y, float)
    cand = np.asarray(candidate, float)
    if block == "x":
        xc, yc, prev = cand, y, x
    elif block == "y":
        xc, yc, prev = x, cand, y
    else:
        raise ValueError(f"unknown block {block!r}")
    E, T = table.mixture(xc, yc)
    val = -float(np.sum(relaxed_utility(table, E, T)))
    if slack_weight:
        dx, dy = slacks(table, xc, yc)
        val += slack_weight * float(np.sum(dx + dy))
    return val + 0.5 * penalty * float(np.sum((cand - prev) ** 2))


@dataclass
class BsumState:
    """Relaxed selection plus the algorithm's constants."""

    x_relaxed: np.ndarray
    y_relaxed: np.ndarray
    penalty: float = 1.0
    round_threshold: float = 0.5
    slack_weight: float = 10.0
    tol: float = 1e-3
    iteration: int = 0

    def __post_init__(self) -> None:
        self.x_relaxed = np.clip(np.asarray(self.x_relaxed, float), 0.0, 1.0)
        self.y_relaxed = np.clip(np.asarray(self.y_relaxed, float), 0.0, 1.0)
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")
        if not 0 < self.round_threshold < 1:
            raise ValueError("round_threshold must lie in (0, 1)")
        if self.slack_weight < 0:
            raise ValueError("slack_weight must be non-negative")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")


@dataclass
class SelectionOutcome:
    x: np.ndarray
    y: np.ndarray
    delta_x: np.ndarray
    delta_y: np.ndarray
    integrality_gap: float
    iterations: int = 0
    converged: bool = True
    trace: list[float] = field(default_factory=list)
    x_relaxed: np.ndarray | None = None
    y_relaxed: np.ndarray | None = None


def _scalar_minimise(fun, current: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Minimise ``fun(s)`` (vectorised over tasks) on ``[0, upper]`` per task.

    A 101-point grid locates the best cell; golden-section search refines
    it to 1e-4.  A task keeps ``current`` unless the new point is better.
    """
    K = len(current)
    t = np.linspace(0.0, 1.0, GRID_POINTS)
    grid = upper[:, None] * t[None, :]
    vals = fun(grid)
    i = np.argmin(vals, axis=1)
    h = upper / (GRID_POINTS - 1)
    a = np.maximum(grid[np.arange(K), i] - h, 0.0)
    b = np.minimum(grid[np.arange(K), i] + h, upper)
    while np.max(b - a) > GOLDEN_TOL:
        c = b - INVGOLD * (b - a)
        d = a + INVGOLD * (b - a)
        left = fun(c[:, None])[:, 0] < fun(d[:, None])[:, 0]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    cands = np.column_stack([grid[np.arange(K), i], 0.5 * (a + b)])
    cvals = fun(cands)
    j = np.argmin(cvals, axis=1)
    best, best_val = cands[np.arange(K), j], cvals[np.arange(K), j]
    cur_val = fun(current[:, None])[:, 0]
    return np.where(best_val < cur_val, best, current)


def minimize_block(block: str, state: BsumState, table: OptionTable) -> np.ndarray:
    """Proximal minimisation of one block; tasks are separable, so one scalar per task.

    For ``y`` the servers are swept cyclically, each coordinate bounded by
    ``1 - sum of the other servers``.  Returns the updated relaxed block.
    """
    x, y = state.x_relaxed.copy(), state.y_relaxed.copy()
    E, T = table.energy, table.delay
    Ev, Tv, El, Tl = E[:, 0], T[:, 0], E[:, -1], T[:, -1]
    Es, Ts = E[:, 1:-1], T[:, 1:-1]
    w, delta = state.slack_weight, state.penalty
    tmax = table.t_max[:, None]

    if block == "x":
        if not table.allow_vehicle:
            return np.zeros_like(x)
        rest = 1.0 - y.sum(axis=1)
        e_rest = (y * Es).sum(axis=1) + rest * El
        t_rest = (y * Ts).sum(axis=1) + rest * Tl
        dy = np.maximum(0.0, (y * Ts).sum(axis=1) - table.t_max)[:, None]
        prev = x.copy()

        def fun(s):
            e = e_rest[:, None] + s * (Ev - e_rest)[:, None]
            t = t_rest[:, None] + s * (Tv - t_rest)[:, None]
            pen = w * (np.maximum(0.0, s * Tv[:, None] - tmax) + dy)
            return -relaxed_utility(table, e, t) + pen + 0.5 * delta * (s - prev[:, None]) ** 2

        return _scalar_minimise(fun, x, np.ones_like(x))

    if block != "y":
        raise ValueError(f"unknown block {block!r}")
    if not table.allow_server or table.M == 0:
        return np.zeros_like(y)
    prev_y = y.copy()
    dx = np.maximum(0.0, x * Tv - table.t_max)[:, None]
    for m in range(table.M):
        others = y.sum(axis=1) - y[:, m]
        e_oth = (y * Es).sum(axis=1) - y[:, m] * Es[:, m]
        t_oth = (y * Ts).sum(axis=1) - y[:, m] * Ts[:, m]
        e0 = x * Ev + (1.0 - x) * (e_oth + (1.0 - others) * El)
        t0 = x * Tv + (1.0 - x) * (t_oth + (1.0 - others) * Tl)
        e1 = (1.0 - x) * (Es[:, m] - El)
        t1 = (1.0 - x) * (Ts[:, m] - Tl)
        sm, pm = Ts[:, m], prev_y[:, m]

        def fun(s, e0=e0, t0=t0, e1=e1, t1=t1, sm=sm, pm=pm, t_oth=t_oth):
            e = e0[:, None] + s * e1[:, None]
            t = t0[:, None] + s * t1[:, None]
            pen = w * (np.maximum(0.0, s * sm[:, None] + t_oth[:, None] - tmax) + dx)
            return -relaxed_utility(table, e, t) + pen + 0.5 * delta * (s - pm[:, None]) ** 2

        upper = np.clip(1.0 - others, 0.0, 1.0)
        y[:, m] = _scalar_minimise(fun, np.minimum(y[:, m], upper), upper)
    return y


def round_and_repair(state: BsumState, table: OptionTable | None = None) -> SelectionOutcome:
    """Threshold rounding with at most one server per task.

    ``x_k = 1`` iff its relaxed value reaches the threshold.  Otherwise the
    server with the largest relaxed ``y`` (lowest index on ties) is chosen
    if that value reaches the threshold.  When ``table`` is given the
    deadline excesses and the integrality gap are filled in.
    """
    K = len(state.x_relaxed)
    x = (state.x_relaxed >= state.round_threshold).astype(int)
    y = np.zeros_like(state.y_relaxed, dtype=int)
    if y.shape[1]:
        best = np.argmax(state.y_relaxed, axis=1)
        hit = state.y_relaxed[np.arange(K), best] >= state.round_threshold
        hit &= x == 0
        y[np.flatnonzero(hit), best[hit]] = 1
    if table is None:
        return SelectionOutcome(x, y, np.zeros(K), np.zeros(K), 1.0,
                                x_relaxed=state.x_relaxed.copy(), y_relaxed=state.y_relaxed.copy())
    dx, dy = slacks(table, x.astype(float), y.astype(float))
    E, T = table.mixture(x.astype(float), y.astype(float))
    b = float(np.sum(table.u_cap - relaxed_utility(table, E, T)))
    excess = state.slack_weight * float(np.sum(dx + dy))
    gap = 1.0 if excess == 0 or b + excess <= 0 else b / (b + excess)
    return SelectionOutcome(x, y, dx, dy, gap, x_relaxed=state.x_relaxed.copy(),
                            y_relaxed=state.y_relaxed.copy())


def run_algorithm1(table: OptionTable, x0, y0, tol: float = 1e-3, *, penalty: float = 1.0,
                   slack_weight: float | None = None, round_threshold: float = 0.5,
                   max_iter: int = 200) -> SelectionOutcome:
    """Relaxed cyclic block minimisation from ``(x0, y0)``, then rounding.

    One iteration updates the ``x`` block and then the ``y`` block.  The
    loop stops when the relative change of the penalised objective is at
    most ``tol`` and no relaxed coordinate moved by more than ``tol`` (the
    proximal step doubles as a stationarity measure, so a slow but steady
    drift is not mistaken for convergence); hitting ``max_iter`` returns
    the last iterate with ``converged=False``.
    """
    w = 10.0 * table.alpha if slack_weight is None else slack_weight
    state = BsumState(np.asarray(x0, float), np.asarray(y0, float), penalty, round_threshold, w, tol)
    if not table.allow_vehicle:
        state.x_relaxed[:] = 0.0
    if not table.allow_server:
        state.y_relaxed[:] = 0.0
    prev = penalized_objective(table, state.x_relaxed, state.y_relaxed, w)
    trace = [prev]
    converged = False
    for it in range(1, max_iter + 1):
        x_old, y_old = state.x_relaxed, state.y_relaxed
        state.x_relaxed = minimize_block("x", state, table)
        state.y_relaxed = minimize_block("y", state, table)
        state.iteration = it
        cur = penalized_objective(table, state.x_relaxed, state.y_relaxed, w)
        trace.append(cur)
        step = max(np.max(np.abs(state.x_relaxed - x_old), initial=0.0),
                   np.max(np.abs(state.y_relaxed - y_old), initial=0.0))
        if abs(prev - cur) <= tol * max(abs(prev), 1e-12) and step <= tol:
            converged = True
            break
        prev = cur
    out = round_and_repair(state, table)
    out.iterations = state.iteration
    out.converged = converged
    out.trace = trace
    return out
