"""Evaluation quantities: load balance, utility-ratio CDFs and run summaries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, MissingReferenceError
from .model import DecisionVector, TaskSpec

RATIO_SLACK = 1e-9


@dataclass(frozen=True)
class LoadBalanceStat:
    """Per-server mean utilisation and its population variance across servers."""

    rho_m: np.ndarray
    s2: float


def load_balance(decision: DecisionVector, tasks: Sequence[TaskSpec], M: int | None = None
                 ) -> LoadBalanceStat:
    """Variance across servers of the mean ``cycles / f`` of their tasks.

    ``rho_m`` is the mean of ``c_k / f_km`` over the tasks on server ``m``
    (0 for an idle server); ``s2`` is the population variance of ``rho_m``
    around its mean over all ``M`` servers.
    """
    M = decision.y.shape[1] if M is None else M
    rho_m = np.zeros(M)
    for m in range(M):
        members = np.flatnonzero(decision.y[:, m] == 1)
        if members.size:
            rho_m[m] = np.mean([tasks[k].cycles / decision.f[k, m] for k in members])
    s2 = float(np.mean((rho_m - rho_m.mean()) ** 2))
    return LoadBalanceStat(rho_m, s2)


@dataclass(frozen=True)
class CdfSeries:
    """Sorted ratios and their empirical cumulative fractions."""

    ratios: np.ndarray
    fractions: np.ndarray

    def __post_init__(self) -> None:
        if self.ratios.shape != self.fractions.shape:
            raise DomainError("ratios and fractions differ in length")


def cdf_ratios(utilities: Mapping[str, Sequence[float]], esm: Sequence[float | None],
               slack: float = RATIO_SLACK) -> dict[str, CdfSeries]:
    """Empirical CDF of ``scheme / ESM`` utility per scheme.

    Raises
    ------
    MissingReferenceError
        If an instance lacks its ESM value.
    AssertionError
        If any ratio exceeds ``1 + slack``.
    """
    ref = np.array([np.nan if v is None else v for v in esm], float)
    if ref.size == 0 or not np.all(np.isfinite(ref)):
        raise MissingReferenceError("every instance needs a finite ESM utility")
    if np.any(ref <= 0):
        raise DomainError("ESM utilities must be positive to form ratios")
    out = {}
    n = ref.size
    for name, vals in utilities.items():
        vals = np.asarray(vals, float)
        if vals.size != n:
            raise MissingReferenceError(f"{name}: {vals.size} utilities for {n} instances")
        ratios = vals / ref
        worst = float(np.max(ratios))
        assert worst <= 1.0 + slack, f"{name} exceeds the exhaustive search: ratio {worst!r}"
        ratios = np.sort(ratios)
        out[name] = CdfSeries(ratios, np.arange(1, n + 1) / n)
    return out


@dataclass
class SchemeSummary:
    mean_utility: float
    mean_energy: float
    mean_delay: float
    mean_s2: float
    slot_utility: list[float]
    failures: int = 0
    mean_outer_iterations: float = 0.0


@dataclass
class SlotRecord:
    """What the harness keeps from one scheme on one slot."""

    utility: float
    energy: np.ndarray
    delay: np.ndarray
    s2: float
    failures: int = 0
    outer_iterations: int = 0


@dataclass
class RunSummary:
    schemes: dict[str, SchemeSummary] = field(default_factory=dict)
    cdf: dict[str, CdfSeries] = field(default_factory=dict)


def aggregate(records: Mapping[str, Sequence[SlotRecord]]) -> RunSummary:
    """Means over slots (energy and delay also averaged over tasks).

    Raises
    ------
    DomainError
        If a scheme has no slots.
    """
    summary = RunSummary()
    for name, recs in records.items():
        if not recs:
            raise DomainError(f"scheme {name} has no slots to aggregate")
        u = [r.utility for r in recs]
        summary.schemes[name] = SchemeSummary(
            mean_utility=float(np.mean(u)),
            mean_energy=float(np.mean([np.mean(r.energy) for r in recs])),
            mean_delay=float(np.mean([np.mean(r.delay) for r in recs])),
            mean_s2=float(np.mean([r.s2 for r in recs])),
            slot_utility=u,
            failures=int(sum(r.failures for r in recs)),
            mean_outer_iterations=float(np.mean([r.outer_iterations for r in recs])),
        )
    return summary
