"""Comparison schemes behind one interface.

Every scheme maps a :class:`SlotInstance` to a decision and its evaluation.
The restricted schemes reuse the JOET machinery on a smaller option space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .continuous import solve_rho
from .joet import (
    LOCAL,
    ConvergenceReport,
    JoetConfig,
    OptionSpace,
    decision_from_assignment,
    optimize_assignment,
    polish_actual,
    repair,
    run_joet,
)
from .model import DecisionVector, SlotInstance, SlotResult, server_path

SCHEMES = ("JOET", "NoVeh", "NoVEC", "OnlyR", "SO", "CRTP", "ESM")

NO_VEHICLE = OptionSpace(allow_vehicle=False, allow_server=True, direct=True)
NO_SERVER = OptionSpace(allow_vehicle=True, allow_server=False)
RELAY_ONLY = OptionSpace(allow_vehicle=False, allow_server=True, direct=False)

SO_RESERVATION = 1.2e9  # CPU share used to score servers (Hz)


@dataclass
class SchemeOutput:
    decision: DecisionVector
    result: SlotResult
    report: ConvergenceReport = field(default_factory=ConvergenceReport)

    @property
    def utility(self) -> float:
        return self.result.utility


def run_noveh(slot: SlotInstance, cfg: JoetConfig = JoetConfig()) -> SchemeOutput:
    """Local or direct IoTD->RSU offloading, no vehicle involved."""
    return SchemeOutput(*run_joet(slot, cfg, NO_VEHICLE))


def run_novec(slot: SlotInstance, cfg: JoetConfig = JoetConfig()) -> SchemeOutput:
    """Local or vehicle execution only."""
    return SchemeOutput(*run_joet(slot, cfg, NO_SERVER))


def run_onlyr(slot: SlotInstance, cfg: JoetConfig = JoetConfig()) -> SchemeOutput:
    """Servers reached through the vehicle relay; vehicles never compute."""
    return SchemeOutput(*run_joet(slot, cfg, RELAY_ONLY))


def run_so(slot: SlotInstance, cfg: JoetConfig = JoetConfig(),
           reservation: float = SO_RESERVATION) -> SchemeOutput:
    """Greedy server scoring at a fixed CPU share and full power.

    Tasks in index order score every server that still has ``reservation``
    Hz unreserved, with ``p = p_max`` and the ratio from :func:`solve_rho`,
    and take the best one (or stay local when offloading does not pay).
    Each server's capacity is then split evenly among its tasks and the
    ratios are re-solved at the final share, still at full power.
    """
    K, M = slot.K, slot.M
    p_max = slot.radio.p_max_iotd
    left = slot.capacity.astype(float).copy()
    assign = np.full(K, LOCAL)
    for k in range(K):
        best_m, best_u = -1, -np.inf
        for m in range(M):
            if left[m] < reservation or reservation <= slot.compute.vehicle_cpu:
                continue
            path = server_path(slot, k, m, reservation)
            out = solve_rho(path, p_max)
            if not out.feasible or out.rho_star <= 0:
                continue
            u = float(path.utility(out.rho_star, p_max))
            if u > best_u:
                best_m, best_u = m, u
        if best_m >= 0:
            assign[k] = best_m + 1
            left[best_m] -= reservation
    rho, p, f = np.zeros(K), np.full(K, p_max), np.zeros(K)
    while True:
        changed = False
        counts = np.array([np.sum(assign == m + 1) for m in range(M)])
        for k in np.flatnonzero(assign > 0):
            m = assign[k] - 1
            f[k] = slot.capacity[m] / counts[m]
            out = solve_rho(server_path(slot, k, m, f[k]), p_max)
            rho[k] = out.rho_star if out.feasible else 0.0
            if rho[k] <= 0:
                assign[k] = LOCAL
                changed = True
        if not changed:
            break
    decision = decision_from_assignment(slot, assign, rho, p, f, OptionSpace())
    decision, result = repair(slot, decision)
    return SchemeOutput(decision, result)


def nearest_servers(slot: SlotInstance) -> np.ndarray:
    """Index of the closest RSU per task (lowest index on ties)."""
    return np.argmin(slot.geometry.d_vm, axis=1)


def run_crtp(slot: SlotInstance, cfg: JoetConfig = JoetConfig()) -> SchemeOutput:
    """Nearest-server offloading through the vehicle relay, then f, rho and p optimised.

    Shares the final actual-delay ratio/power step with JOET.
    """
    assign = nearest_servers(slot) + 1
    assign = np.where(slot.capacity[assign - 1] > slot.compute.vehicle_cpu, assign, LOCAL)
    cont = optimize_assignment(slot, assign, OptionSpace(allow_vehicle=False), cfg)
    decision = decision_from_assignment(slot, cont.assign, cont.rho, cont.p, cont.f, OptionSpace())
    decision, result = repair(slot, decision)
    if cfg.actual_polish:
        decision, result = polish_actual(slot, decision)
    return SchemeOutput(decision, result, ConvergenceReport(dual_iterations=cont.dual_iterations,
                                                            failures=cont.failures))


def run_scheme(name: str, slot: SlotInstance, cfg: JoetConfig = JoetConfig(), **esm_kwargs) -> SchemeOutput:
    """Dispatch by scheme name (case-insensitive)."""
    key = name.strip().lower()
    table: dict[str, Callable[..., SchemeOutput]] = {
        "joet": lambda s, c: SchemeOutput(*run_joet(s, c)),
        "noveh": run_noveh,
        "novec": run_novec,
        "onlyr": run_onlyr,
        "so": run_so,
        "crtp": run_crtp,
    }
    if key == "esm":
        from .esm import run_esm
        d, r, rep = run_esm(slot, **esm_kwargs)
        return SchemeOutput(d, r)
    if key not in table:
        raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}")
    return table[key](slot, cfg)


def canonical_name(name: str) -> str:
    for s in SCHEMES:
        if s.lower() == name.strip().lower():
            return s
    raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}")
