"""Experiment orchestration and CSV output.

Each scheme runs over the same scenario with its own resource ledger, so
CPU granted in one slot stays reserved until the task finishes.  CSV files
start with a ``# schema_version: N`` line followed by the header; numbers
are written with ``repr`` precision and no timestamps, so equal inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .errors import BudgetBlowoutError
from .esm import run_esm
from .joet import ConvergenceReport, ResourceLedger, advance_ledger
from .metrics import CdfSeries, RunSummary, SlotRecord, aggregate, cdf_ratios, load_balance
from .model import DecisionVector, SlotInstance, SlotResult
from .scenario import generate_scenario
from .schemes import SchemeOutput, canonical_name, run_scheme

SCHEMA_VERSION = 1

SLOT_COLUMNS = ("slot", "scheme", "task", "energy", "delay", "utility_term", "x", "y", "rho", "p", "f",
                "direct")
SUMMARY_COLUMNS = ("scheme", "mean_utility", "mean_energy", "mean_delay", "mean_s2", "slots",
                   "failures", "mean_outer_iterations")
CONVERGENCE_COLUMNS = ("slot", "scheme", "utility", "outer_iterations", "bsum_iterations",
                       "max_dual_iterations", "converged", "failures")
CDF_COLUMNS = ("scheme", "rank", "ratio", "fraction")


@dataclass
class SlotOutcome:
    slot: int
    scheme: str
    decision: DecisionVector
    result: SlotResult
    report: ConvergenceReport
    capacity: np.ndarray

    @property
    def utility(self) -> float:
        return self.result.utility


@dataclass
class ExperimentOutput:
    outcomes: dict[str, list[SlotOutcome]]
    summary: RunSummary
    files: dict[str, Path] = field(default_factory=dict)


def _run_one(name: str, slot: SlotInstance, cfg: ExperimentConfig) -> SchemeOutput:
    if name == "ESM":
        d, r, _ = run_esm(slot, cfg.esm.strides, cfg.esm.max_k, cfg.esm.max_m)
        return SchemeOutput(d, r)
    return run_scheme(name, slot, cfg.joet)


def simulate(cfg: ExperimentConfig, schemes: Sequence[str] | None = None) -> dict[str, list[SlotOutcome]]:
    """Run every scheme over all slots of the configured scenario."""
    scen = generate_scenario(cfg.scenario)
    names = [canonical_name(s) for s in (schemes or cfg.schemes)]
    out: dict[str, list[SlotOutcome]] = {}
    for name in names:
        ledger = ResourceLedger(np.array(scen.config.compute.server_cpu, float))
        rows = []
        for n in range(cfg.scenario.N):
            slot = scen.slot(n, ledger.free.copy())
            res = _run_one(name, slot, cfg)
            problems = res.decision.violations(slot.capacity, slot.radio.p_max_iotd)
            if problems:
                raise AssertionError(f"{name} slot {n}: {'; '.join(problems)}")
            rows.append(SlotOutcome(n, name, res.decision, res.result, res.report, slot.capacity.copy()))
            advance_ledger(ledger, res.decision, res.result, cfg.scenario.delta_t)
        out[name] = rows
    return out


def slot_records(outcomes: dict[str, list[SlotOutcome]], tasks_by_slot) -> dict[str, list[SlotRecord]]:
    recs: dict[str, list[SlotRecord]] = {}
    for name, rows in outcomes.items():
        recs[name] = [SlotRecord(o.utility, o.result.energy, o.result.delay,
                                 load_balance(o.decision, tasks_by_slot[o.slot]).s2,
                                 len(o.report.failures), o.report.outer_iterations) for o in rows]
    return recs


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    return path


def read_csv(path: str | Path) -> tuple[int, list[str], list[list[str]]]:
    """Schema version, header and rows of a file written by :func:`write_csv`."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema_version:"):
            raise ValueError(f"{path}: missing schema_version line")
        version = int(first.split(":", 1)[1])
        rows = list(csv.reader(fh))
    return version, rows[0], rows[1:]


def _slot_rows(outcomes: dict[str, list[SlotOutcome]]):
    for name, rows in outcomes.items():
        for o in rows:
            d, r = o.decision, o.result
            for k in range(len(d.x)):
                m = int(d.y[k].argmax()) if d.y[k].any() else -1
                f = float(d.f[k, m]) if m >= 0 else 0.0
                yield (o.slot, name, k, r.energy[k], r.delay[k], r.utility_term[k], int(d.x[k]), m,
                       d.rho[k], d.p[k], f, bool(d.direct[k]))


def _convergence_rows(outcomes: dict[str, list[SlotOutcome]]):
    for name, rows in outcomes.items():
        for o in rows:
            rep = o.report
            yield (o.slot, name, o.utility, rep.outer_iterations, sum(rep.bsum_iterations),
                   max(rep.dual_iterations, default=0), bool(rep.converged or name in ("SO", "CRTP", "ESM")),
                   len(rep.failures))


def _summary_rows(summary: RunSummary):
    for name, s in summary.schemes.items():
        yield (name, s.mean_utility, s.mean_energy, s.mean_delay, s.mean_s2, len(s.slot_utility),
               s.failures, s.mean_outer_iterations)


def _cdf_rows(cdf: dict[str, CdfSeries]):
    for name, series in cdf.items():
        for i, (r, q) in enumerate(zip(series.ratios, series.fractions)):
            yield (name, i + 1, r, q)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path,
                   schemes: Sequence[str] | None = None) -> ExperimentOutput:
    """Simulate, aggregate and write ``slots.csv``, ``summary.csv``,
    ``convergence.csv`` and ``cdf.csv`` (ratios to ESM per slot when ESM
    is among the schemes, header only otherwise)."""
    out_dir = Path(out_dir)
    scen = generate_scenario(cfg.scenario)
    outcomes = simulate(cfg, schemes)
    summary = aggregate(slot_records(outcomes, scen.tasks))
    if "ESM" in outcomes:
        esm = [o.utility for o in outcomes["ESM"]]
        summary.cdf = cdf_ratios({k: [o.utility for o in v] for k, v in outcomes.items()}, esm)
    files = {
        "slots": write_csv(out_dir / "slots.csv", SLOT_COLUMNS, _slot_rows(outcomes)),
        "summary": write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, _summary_rows(summary)),
        "convergence": write_csv(out_dir / "convergence.csv", CONVERGENCE_COLUMNS,
                                 _convergence_rows(outcomes)),
        "cdf": write_csv(out_dir / "cdf.csv", CDF_COLUMNS, _cdf_rows(summary.cdf)),
    }
    return ExperimentOutput(outcomes, summary, files)


def ratio_study(cfg: ExperimentConfig, runs: int, schemes: Sequence[str] | None = None
                ) -> tuple[dict[str, list[float]], list[float]]:
    """Single-slot utilities on ``runs`` independent instances (seeds ``seed .. seed+runs-1``).

    Returns per-scheme utilities (ESM included) and the ESM utilities.
    """
    names = [canonical_name(s) for s in (schemes or cfg.schemes)]
    if "ESM" not in names:
        names.append("ESM")
    utilities: dict[str, list[float]] = {n: [] for n in names}
    for r in range(runs):
        sc = cfg.scenario.with_updates(seed=cfg.scenario.seed + r, N=1)
        slot = generate_scenario(sc).slot(0)
        for n in names:
            try:
                utilities[n].append(_run_one(n, slot, cfg).utility)
            except BudgetBlowoutError:
                utilities[n].append(float("nan"))
    return utilities, utilities["ESM"]


def run_cdf(cfg: ExperimentConfig, runs: int, out_dir: str | Path,
            schemes: Sequence[str] | None = None) -> dict[str, CdfSeries]:
    """Utility ratios to ESM over independent desk-scale instances, written to ``cdf.csv``."""
    utilities, esm = ratio_study(cfg, runs, schemes)
    cdf = cdf_ratios(utilities, esm)
    write_csv(Path(out_dir) / "cdf.csv", CDF_COLUMNS, _cdf_rows(cdf))
    return cdf
