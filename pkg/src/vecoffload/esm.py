"""Pruned exhaustive search over offloading decisions at desk scale.

Two stages:

* **grid** - every task option (local, vehicle, relay to server ``m``,
  direct to server ``m``) is scored on a ratio x power x CPU-share lattice.
  Points that miss the deadline are pruned before their utility is
  evaluated.  Given the CPU levels the utility is separable over tasks, so
  the best (ratio, power) per (task, option, level) plus an enumeration of
  option/level vectors under each server's capacity is the exact grid
  argmax.
* **refine** - the same enumeration over options, but each task's ratio
  and power are maximised in continuous form (the power is exact, the
  ratio uses a dense grid and a bounded Brent polish) and the CPU split
  inside every server group is polished by pairwise exchanges.

Both stages score the actual (max-form) delay, so the oracle is measured on
the same quantity as every scheme's reported utility.  The refine stage
keeps the grid winner when it cannot beat it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .continuous import RATIO_DENSE, PowerRoots, best_power, best_ratio, power_roots
from .errors import SizeRefusalError
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

MAX_K = 4
MAX_M = 2
F_DENSE = 48
REFINE_TOP = 3

# option encoding: ("local",), ("vehicle",), ("relay", m), ("direct", m)
Option = tuple


@dataclass(frozen=True)
class EsmStrides:
    """Lattice of the grid stage.

    ``rho_step`` spaces the ratios over [0, 1]; ``p_levels`` powers are
    log-spaced by decades up to ``p_max``; ``f_levels`` CPU shares are
    evenly spaced in (F_V, F_m].
    """

    rho_step: float = 0.25
    p_levels: int = 4
    f_levels: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.rho_step <= 1 or self.p_levels < 1 or self.f_levels < 1:
            raise ValueError("strides must be positive")

    def rhos(self) -> np.ndarray:
        n = int(round(1.0 / self.rho_step))
        grid = np.arange(n + 1) * self.rho_step
        return np.unique(np.append(grid[grid < 1.0], 1.0))

    def powers(self, p_max: float) -> np.ndarray:
        return p_max * 10.0 ** (np.arange(self.p_levels) - (self.p_levels - 1))

    def shares(self, f_vehicle: float, capacity: float) -> np.ndarray:
        if capacity <= f_vehicle:
            return np.empty(0)
        j = np.arange(1, self.f_levels + 1)
        return f_vehicle + (capacity - f_vehicle) * j / self.f_levels


@dataclass
class EsmReport:
    evaluations: int = 0
    pruned: int = 0
    combinations: int = 0
    grid_utility: float = float("-inf")
    refined_utility: float = float("-inf")
    used_refine: bool = False
    options: list[Option] = field(default_factory=list)


def _options(slot: SlotInstance) -> list[Option]:
    opts: list[Option] = [("local",), ("vehicle",)]
    for m in range(slot.M):
        if slot.capacity[m] > slot.compute.vehicle_cpu:
            opts += [("relay", m), ("direct", m)]
    return opts


def _path(slot: SlotInstance, k: int, opt: Option, f: float) -> PathModel:
    if opt[0] == "vehicle":
        return vehicle_path(slot, k)
    maker = server_path if opt[0] == "relay" else direct_path
    return maker(slot, k, opt[1], f)


def _local_value(slot: SlotInstance, k: int) -> float:
    task = slot.tasks[k]
    e = slot.compute.cap_coeff * task.local_cpu ** 2 * task.cycles
    arg = 1.0 + slot.alpha * (1.0 - e / task.energy_budget)
    return float(np.log2(arg)) if arg > 0 else -np.inf


# --------------------------------------------------------------------------
# server groups

@dataclass
class _Group:
    """Tasks sharing one server, each with its own link kind."""

    server: int
    members: tuple[tuple[int, str], ...]
    value: float = -np.inf
    f: np.ndarray | None = None


def _split_dp(values: list[np.ndarray], shares: np.ndarray, capacity: float):
    """Best level per member with total share <= capacity (exact on the lattice)."""
    best = {0.0: (0.0, ())}
    for vals in values:
        nxt: dict[float, tuple[float, tuple[int, ...]]] = {}
        for used, (acc, picks) in best.items():
            for j, (fj, vj) in enumerate(zip(shares, vals)):
                tot = used + fj
                if tot > capacity * (1 + 1e-12) or not np.isfinite(vj):
                    continue
                key = round(tot, 3)
                cand = (acc + vj, picks + (j,))
                if key not in nxt or cand[0] > nxt[key][0]:
                    nxt[key] = cand
        best = nxt
        if not best:
            return -np.inf, ()
    acc, picks = max(best.values())
    return acc, picks


class _Refiner:
    """Continuous value functions with caching, shared across combinations."""

    def __init__(self, slot: SlotInstance):
        self.slot = slot
        self.f_lo = slot.compute.vehicle_cpu
        self._roots: dict = {}
        self._single: dict = {}

    def path(self, k: int, link: str, m: int, f: float) -> PathModel:
        return _path(self.slot, k, (link, m), f)

    def roots(self, k: int, link: str, m: int) -> PowerRoots:
        key = (k, link, m)
        if key not in self._roots:
            self._roots[key] = power_roots(self.path(k, link, m, self.slot.capacity[m]))
        return self._roots[key]

    def value(self, k: int, link: str, m: int, f: float) -> tuple[float, float, float]:
        key = (k, link, m, float(f))
        if key not in self._single:
            self._single[key] = best_ratio(self.path(k, link, m, f), self.roots(k, link, m))
        return self._single[key]

    def coarse(self, k: int, link: str, m: int, shares: np.ndarray) -> np.ndarray:
        """Dense-ratio value per share (no polish), for ranking combinations."""
        path = self.path(k, link, m, self.slot.capacity[m])
        grid = np.linspace(0.0, 1.0, RATIO_DENSE)
        u, _ = best_power(path, grid[None, :], shares[:, None], self.roots(k, link, m))
        return u.max(axis=1)

    def polish(self, group: _Group, f0: np.ndarray) -> _Group:
        """Pairwise exchange of CPU between members with the share sum held fixed."""
        cap = float(self.slot.capacity[group.server])
        mem = group.members
        n = len(mem)
        lo = self.f_lo * (1 + 1e-9)

        def v(i, fi):
            k, link = mem[i]
            return self.value(k, link, group.server, fi)[0]

        if n == 1:
            group.f = np.array([cap])
            group.value = v(0, cap)
            return group
        f = np.asarray(f0, float) * cap / float(np.sum(f0))
        total = sum(v(i, f[i]) for i in range(n))
        for _ in range(30):
            before = total
            for i, j in itertools.combinations(range(n), 2):
                s = f[i] + f[j]
                if s <= 2 * lo:
                    continue

                def neg(t, i=i, j=j, s=s):
                    val = v(i, t) + v(j, s - t)
                    return -val if np.isfinite(val) else 1e300

                res = minimize_scalar(neg, bounds=(lo, s - lo), method="bounded",
                                      options={"xatol": 1e-3, "maxiter": 100})
                cur = v(i, f[i]) + v(j, f[j])
                if -res.fun > cur:
                    f[i], f[j] = res.x, s - res.x
            total = sum(v(i, f[i]) for i in range(n))
            if total - before <= 1e-13 * max(1.0, abs(total)):
                break
        group.f = f
        group.value = total
        return group


# --------------------------------------------------------------------------
# the search

def _check_size(slot: SlotInstance, max_k: int, max_m: int) -> None:
    if slot.K > max_k or slot.M > max_m:
        raise SizeRefusalError(
            f"exhaustive search refuses K={slot.K}, M={slot.M} (caps K<={max_k}, M<={max_m})")


def _decision(slot: SlotInstance, picks: list[tuple[Option, float, float, float]]) -> DecisionVector:
    K, M = slot.K, slot.M
    d = DecisionVector.all_local(K, M)
    for k, (opt, rho, p, f) in enumerate(picks):
        if opt[0] == "local" or rho <= 0:
            continue
        d.rho[k], d.p[k] = rho, p
        if opt[0] == "vehicle":
            d.x[k] = 1
        else:
            d.y[k, opt[1]] = 1
            d.f[k, opt[1]] = f
            d.direct[k] = opt[0] == "direct"
    return d


def _grid_stage(slot: SlotInstance, strides: EsmStrides, report: EsmReport):
    """Exact argmax over the lattice.  Returns per-task picks."""
    K, opts = slot.K, _options(slot)
    rhos = strides.rhos()
    rhos = rhos[rhos > 0]
    powers = strides.powers(slot.radio.p_max_iotd)
    shares = {m: strides.shares(slot.compute.vehicle_cpu, float(slot.capacity[m]))
              for m in range(slot.M)}
    # best[k][opt] -> list over share levels of (u, rho, p); vehicle/local use one level
    best: list[dict] = []
    R, P = np.meshgrid(rhos, powers, indexing="ij")
    R, P = R.ravel(), P.ravel()
    for k in range(K):
        table: dict = {("local",): [(_local_value(slot, k), 0.0, MIN_POWER, 0.0)]}
        report.evaluations += 1
        for opt in opts[1:]:
            levels = [0.0] if opt[0] == "vehicle" else list(shares[opt[1]])
            row = []
            for f in levels:
                path = _path(slot, k, opt, f)
                ok = path.delay(R, P) <= path.delay_budget * (1 + 1e-12)
                report.pruned += int(np.sum(~ok))
                report.evaluations += int(np.sum(ok))
                if not ok.any():
                    row.append((-np.inf, 0.0, MIN_POWER, f))
                    continue
                u = np.where(ok, path.utility(R, P), -np.inf)
                i = int(np.argmax(u))
                row.append((float(u[i]), float(R[i]), float(P[i]), f))
            table[opt] = row
        best.append(table)
    best_val, best_picks = -np.inf, None
    for combo in itertools.product(opts, repeat=K):
        report.combinations += 1
        total, picks = 0.0, [None] * K
        for k, opt in enumerate(combo):
            if opt[0] in ("local", "vehicle"):
                u, r, p, f = best[k][opt][0]
                total += u
                picks[k] = (opt, r, p, f)
        if not np.isfinite(total):
            continue
        for m in range(slot.M):
            mem = [k for k, opt in enumerate(combo) if opt[0] in ("relay", "direct") and opt[1] == m]
            if not mem:
                continue
            vals = [np.array([c[0] for c in best[k][combo[k]]]) for k in mem]
            acc, lv = _split_dp(vals, shares[m], float(slot.capacity[m]))
            total += acc
            if not np.isfinite(total):
                break
            for k, j in zip(mem, lv):
                u, r, p, f = best[k][combo[k]][j]
                picks[k] = (combo[k], r, p, f)
        if total > best_val:
            best_val, best_picks = total, picks
    return best_val, best_picks


def _refine_stage(slot: SlotInstance, report: EsmReport):
    K, opts = slot.K, _options(slot)
    ref = _Refiner(slot)
    solo = {}
    for k in range(K):
        solo[(k, ("local",))] = (_local_value(slot, k), 0.0, MIN_POWER)
        solo[(k, ("vehicle",))] = best_ratio(vehicle_path(slot, k))
    dense = {m: slot.compute.vehicle_cpu + (slot.capacity[m] - slot.compute.vehicle_cpu)
             * np.arange(1, F_DENSE + 1) / F_DENSE for m in range(slot.M)}
    coarse = {}
    for k in range(K):
        for opt in opts[2:]:
            coarse[(k, opt)] = ref.coarse(k, opt[0], opt[1], dense[opt[1]])
    ranked = []
    group_cache: dict = {}
    for combo in itertools.product(opts, repeat=K):
        total = 0.0
        for k, opt in enumerate(combo):
            if opt[0] in ("local", "vehicle"):
                total += solo[(k, opt)][0]
        groups = []
        for m in range(slot.M):
            mem = tuple((k, opt[0]) for k, opt in enumerate(combo)
                        if opt[0] in ("relay", "direct") and opt[1] == m)
            if not mem:
                continue
            key = (m, mem)
            if key not in group_cache:
                vals = [coarse[(k, (link, m))] for k, link in mem]
                group_cache[key] = _split_dp(vals, dense[m], float(slot.capacity[m]))
            acc, lv = group_cache[key]
            total += acc
            groups.append((key, lv))
        if np.isfinite(total):
            ranked.append((total, combo, groups))
    ranked.sort(key=lambda t: -t[0])
    polished: dict = {}
    best_val, best_picks = -np.inf, None
    for _, combo, groups in ranked[:REFINE_TOP]:
        total = sum(solo[(k, opt)][0] for k, opt in enumerate(combo) if opt[0] in ("local", "vehicle"))
        picks: list = [None] * K
        for k, opt in enumerate(combo):
            if opt[0] in ("local", "vehicle"):
                _, r, p = solo[(k, opt)]
                picks[k] = (opt, r, p, 0.0)
        for (m, mem), lv in groups:
            if (m, mem) not in polished:
                f0 = dense[m][list(lv)]
                polished[(m, mem)] = ref.polish(_Group(m, mem), f0)
            g = polished[(m, mem)]
            total += g.value
            for i, (k, link) in enumerate(mem):
                _, r, p = ref.value(k, link, m, g.f[i])
                picks[k] = ((link, m), r, p, float(g.f[i]))
        if total > best_val:
            best_val, best_picks = total, picks
    return best_val, best_picks


def run_esm(slot: SlotInstance, strides: EsmStrides = EsmStrides(), max_k: int = MAX_K,
            max_m: int = MAX_M, refine: bool = True
            ) -> tuple[DecisionVector, SlotResult, EsmReport]:
    """Best decision found by the pruned exhaustive search.

    Raises
    ------
    SizeRefusalError
        If ``slot`` has more tasks or servers than the caps allow.
    """
    _check_size(slot, max_k, max_m)
    report = EsmReport(options=_options(slot))
    _, picks = _grid_stage(slot, strides, report)
    decision = _decision(slot, picks)
    result = evaluate_decision(slot, decision)
    report.grid_utility = utility(result)
    if refine:
        _, rpicks = _refine_stage(slot, report)
        if rpicks is not None:
            rdec = _decision(slot, rpicks)
            rres = evaluate_decision(slot, rdec)
            report.refined_utility = utility(rres)
            if report.refined_utility > report.grid_utility:
                decision, result, report.used_refine = rdec, rres, True
    return decision, result, report
