"""Scenario generation: layout, task draws and per-slot instances.

Random streams are split with :class:`numpy.random.SeedSequence` spawn keys:
``(0,)`` drives node placement and ``(1, slot, task)`` drives the draws of
one task, so changing the scheme list or the number of slots never perturbs
the draws of an existing (slot, task) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .model import ComputeParams, Geometry, RadioParams, SlotInstance, TaskSpec

KB = 8192.0  # bits per kilobyte (1024 bytes)


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation set-up; every physical value is stored in SI units.

    ``layout`` is ``"auto"`` (the 25-cell grid with the dense left side when
    K = 40 and M = 6, uniform otherwise), ``"uniform"`` or ``"clustered"``
    (all IoTDs in the left 40 % of the area).
    """

    K: int = 40
    M: int = 6
    N: int = 20
    delta_t: float = 1.0
    area: float = 3000.0
    grid_cells: int = 5
    layout: str = "auto"
    input_bits: tuple[float, float] = (10 * KB, 640 * KB)
    output_bits: tuple[float, float] = (5 * KB, 300 * KB)
    local_cpu: tuple[float, float] = (0.1e9, 1.0e9)
    cycles: tuple[float, float] = (0.2e9, 2.0e9)
    d_kv: tuple[float, float] = (10.0, 100.0)
    budget_factor: float = 1.15
    alpha: float = 1.0
    beta: float = 1.0
    mean_speed: float = 60.0 / 3.6
    radio: RadioParams = field(default_factory=RadioParams)
    vehicle_cpu: float = 1e9
    server_cpu: float = 5e9
    cap_coeff: float = 1e-26
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.K, self.M, self.N) < 1:
            raise DomainError("K, M and N must be at least 1")
        if not self.budget_factor > 1:
            raise DomainError("budget_factor must exceed 1")
        for name in ("input_bits", "output_bits", "local_cpu", "cycles", "d_kv"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise DomainError(f"range {name} must satisfy 0 < low <= high")
        if self.d_kv[0] < 1:
            raise DomainError("IoTD-vehicle distances must be at least 1 m")
        if self.layout not in ("auto", "uniform", "clustered"):
            raise DomainError(f"unknown layout {self.layout!r}")
        if self.delta_t <= 0 or self.area <= 0:
            raise DomainError("delta_t and area must be positive")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def compute(self) -> ComputeParams:
        return ComputeParams(self.vehicle_cpu, (self.server_cpu,) * self.M, self.cap_coeff)

    @property
    def radio_params(self) -> RadioParams:
        return replace(self.radio, n_channels=self.K)

    def with_updates(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Scenario:
    """Node positions plus the task batches of all slots."""

    config: ScenarioConfig
    iotd_positions: np.ndarray
    rsu_positions: np.ndarray
    tasks: tuple[tuple[TaskSpec, ...], ...]
    d_kv: np.ndarray  # (N, K)

    def slot(self, n: int, capacity=None) -> SlotInstance:
        cfg = self.config
        geometry = Geometry(self.iotd_positions, self.rsu_positions, self.d_kv[n], cfg.mean_speed)
        return SlotInstance(self.tasks[n], geometry, cfg.radio_params, cfg.compute,
                            cfg.alpha, cfg.beta, capacity)


def rsu_grid(M: int, area: float) -> np.ndarray:
    """Place ``M`` RSUs evenly on a near-square grid over the area."""
    rows = max(1, int(math.floor(math.sqrt(M))))
    cols = int(math.ceil(M / rows))
    pts = []
    for i in range(M):
        r, c = divmod(i, cols)
        in_row = min(cols, M - r * cols)
        pts.append(((c + 0.5) * area / in_row, (r + 0.5) * area / rows))
    return np.array(pts, float)


def _positions(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    K, area = cfg.K, cfg.area
    if cfg.layout == "clustered":
        return rng.uniform((0.0, 0.0), (0.4 * area, area), size=(K, 2))
    if cfg.layout == "auto" and K == 40 and cfg.M == 6 and cfg.grid_cells == 5:
        cell = area / cfg.grid_cells
        pts = []
        for col in range(cfg.grid_cells):
            per_cell = 2 if col < 3 else 1
            for row in range(cfg.grid_cells):
                for _ in range(per_cell):
                    u = rng.uniform(0.0, 1.0, size=2)
                    pts.append(((col + u[0]) * cell, (row + u[1]) * cell))
        return np.array(pts)
    return rng.uniform(0.0, area, size=(K, 2))


def draw_task(cfg: ScenarioConfig, n: int, k: int) -> tuple[TaskSpec, float]:
    """Draw task ``k`` of slot ``n`` and its IoTD-vehicle distance."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, n, k)))
    I = rng.uniform(*cfg.input_bits)
    O = rng.uniform(*cfg.output_bits)
    F = rng.uniform(*cfg.local_cpu)
    c = rng.uniform(*cfg.cycles)
    d = rng.uniform(*cfg.d_kv)
    task = TaskSpec(
        input_bits=I, output_bits=O, cycles=c,
        energy_budget=cfg.budget_factor * cfg.cap_coeff * F ** 2 * c,
        delay_budget=cfg.budget_factor * c / F, local_cpu=F,
    )
    return task, d


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Build a deterministic scenario from ``cfg`` (positions and N task batches)."""
    pos_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    iotd = _positions(cfg, pos_rng)
    rsu = rsu_grid(cfg.M, cfg.area)
    tasks, dist = [], np.empty((cfg.N, cfg.K))
    for n in range(cfg.N):
        batch = []
        for k in range(cfg.K):
            task, d = draw_task(cfg, n, k)
            batch.append(task)
            dist[n, k] = d
        tasks.append(tuple(batch))
    return Scenario(cfg, iotd, rsu, tuple(tasks), dist)
