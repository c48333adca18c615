"""Physical model: rates, delays, energies and the per-task utility.

All quantities are SI (bits, seconds, joules, watts, hertz).  The functions
here are pure; solvers and schemes only ever call into this module to score a
decision, so every reported number comes from one place.

A task can be served along one of several *paths*:

* local only (``rho = 0``),
* IoTD -> collecting vehicle, executed on the vehicle (V2V hand-over while the
  vehicle computes, result returned over the V2K link),
* IoTD -> vehicle -> RSU server ``m`` -> vehicle -> IoTD (relay chain),
* IoTD -> RSU server ``m`` directly (used by the no-vehicle scheme).

:class:`PathModel` captures the delay/energy structure shared by all of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    BudgetBlowoutError,
    DomainError,
    InfeasibleAllocationError,
    InfeasibleLinkError,
)

LN2 = math.log(2.0)
# Power reported for tasks that transmit nothing.
MIN_POWER = 1e-12
# Reference distance of the path-loss model (m).
REF_DISTANCE = 1.0


@dataclass(frozen=True)
class TaskSpec:
    """One computation task generated by an IoTD.

    Attributes
    ----------
    input_bits, output_bits : float
        Size of the input data and of the computed result (bits).
    cycles : float
        CPU cycles needed to process the whole input.
    energy_budget, delay_budget : float
        Per-task maxima of energy (J) and processing delay (s).
    local_cpu : float
        CPU frequency of the owning IoTD (Hz).
    """

    input_bits: float
    output_bits: float
    cycles: float
    energy_budget: float
    delay_budget: float
    local_cpu: float

    def __post_init__(self) -> None:
        for name in ("input_bits", "output_bits", "cycles", "energy_budget",
                     "delay_budget", "local_cpu"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"TaskSpec.{name} must be positive, got {value}")

    @property
    def local_delay(self) -> float:
        return self.cycles / self.local_cpu


@dataclass(frozen=True)
class RadioParams:
    """Radio constants, already converted to linear units.

    ``noise_density`` holds (N0, N1, N2) for the IoTD uplink, the vehicle
    links and the RSU links respectively.  Every task gets an orthogonal
    channel of ``bandwidth_total / n_channels`` Hz.
    """

    beta0: float = 1e-5
    noise_density: tuple[float, float, float] = (1e-16, 1e-16, 1e-16)
    bandwidth_total: float = 120e6
    amplifier_eff: float = 0.9
    circuit_power: float = 5e-3
    rx_energy_per_bit: float = 5e-9
    p_max_iotd: float = 1.0
    p_fixed_vehicle: float = 10 ** 0.6
    p_fixed_rsu: float = 10 ** 0.6
    n_channels: int = 40

    def __post_init__(self) -> None:
        if not 0 < self.amplifier_eff <= 1:
            raise DomainError("amplifier_eff must lie in (0, 1]")
        if len(self.noise_density) != 3:
            raise DomainError("noise_density needs three entries (N0, N1, N2)")
        positives = (self.beta0, self.bandwidth_total, self.p_max_iotd,
                     self.p_fixed_vehicle, self.p_fixed_rsu, *self.noise_density)
        if any(not v > 0 for v in positives):
            raise DomainError("powers, noise densities and bandwidth must be positive")
        if self.circuit_power < 0 or self.rx_energy_per_bit < 0:
            raise DomainError("circuit power and receive energy must be non-negative")
        if self.n_channels < 1:
            raise DomainError("n_channels must be at least 1")

    @property
    def channel_bandwidth(self) -> float:
        return self.bandwidth_total / self.n_channels

    def snr_reference(self, link: int) -> float:
        """Reference SNR per watt at 1 m for link class 0, 1 or 2."""
        return self.beta0 / (self.noise_density[link] * self.channel_bandwidth)

    @property
    def xi0(self) -> float:
        return self.snr_reference(0)

    @property
    def xi1(self) -> float:
        return self.snr_reference(1)

    @property
    def xi2(self) -> float:
        return self.snr_reference(2)


@dataclass(frozen=True)
class ComputeParams:
    """CPU capacities and the effective switched capacitance."""

    vehicle_cpu: float = 1e9
    server_cpu: tuple[float, ...] = (5e9,) * 6
    cap_coeff: float = 1e-26

    def __post_init__(self) -> None:
        if not self.server_cpu:
            raise DomainError("at least one server is required")
        if self.vehicle_cpu <= 0 or self.cap_coeff <= 0:
            raise DomainError("vehicle_cpu and cap_coeff must be positive")
        if not self.vehicle_cpu < min(self.server_cpu):
            raise DomainError("vehicle_cpu must be below every server capacity")

    @property
    def n_servers(self) -> int:
        return len(self.server_cpu)


@dataclass(frozen=True)
class Geometry:
    """Positions of IoTDs and RSUs plus the IoTD-vehicle distances."""

    iotd_positions: np.ndarray
    rsu_positions: np.ndarray
    d_kv: np.ndarray
    mean_speed: float = 60.0 / 3.6

    def __post_init__(self) -> None:
        object.__setattr__(self, "iotd_positions", np.asarray(self.iotd_positions, float).reshape(-1, 2))
        object.__setattr__(self, "rsu_positions", np.asarray(self.rsu_positions, float).reshape(-1, 2))
        object.__setattr__(self, "d_kv", np.asarray(self.d_kv, float).reshape(-1))
        if len(self.d_kv) != len(self.iotd_positions):
            raise DomainError("d_kv needs one entry per IoTD")
        if np.any(self.d_kv < REF_DISTANCE):
            raise DomainError("IoTD-vehicle distances must be at least 1 m")
        if self.mean_speed <= 0:
            raise DomainError("mean_speed must be positive")

    @property
    def d_vm(self) -> np.ndarray:
        """IoTD-to-RSU distances, shape (K, M), clamped to the reference distance."""
        diff = self.iotd_positions[:, None, :] - self.rsu_positions[None, :, :]
        return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), REF_DISTANCE)


@dataclass
class DecisionVector:
    """Full decision of one slot.

    ``direct[k]`` marks that a server-assigned task uses the IoTD->RSU link
    instead of the vehicle relay chain (only the no-vehicle scheme and the
    exhaustive oracle set it).
    """

    x: np.ndarray
    y: np.ndarray
    f: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    direct: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=int).reshape(-1)
        K = len(self.x)
        self.y = np.asarray(self.y, dtype=int).reshape(K, -1)
        self.f = np.asarray(self.f, dtype=float).reshape(self.y.shape)
        self.rho = np.asarray(self.rho, dtype=float).reshape(K)
        self.p = np.asarray(self.p, dtype=float).reshape(K)
        if self.direct is None:
            self.direct = np.zeros(K, dtype=bool)
        self.direct = np.asarray(self.direct, dtype=bool).reshape(K)

    @classmethod
    def all_local(cls, K: int, M: int) -> "DecisionVector":
        return cls(np.zeros(K), np.zeros((K, M)), np.zeros((K, M)),
                   np.zeros(K), np.full(K, MIN_POWER))

    @property
    def server(self) -> np.ndarray:
        """Assigned server per task, -1 for none (vehicle or local)."""
        idx = np.where(self.y.any(axis=1), self.y.argmax(axis=1), -1)
        return np.where(self.x == 1, -1, idx)

    def option(self, k: int) -> str:
        if self.x[k] == 1:
            return "vehicle"
        if self.y[k].any():
            return "direct" if self.direct[k] else "server"
        return "local"

    def violations(self, capacity: Sequence[float], p_max: float) -> list[str]:
        """List every broken hard invariant (empty when the decision is valid)."""
        out = []
        cap = np.asarray(capacity, float)
        if not (np.isin(self.x, (0, 1)).all() and np.isin(self.y, (0, 1)).all()):
            out.append("selections must be binary")
        ysum = self.y.sum(axis=1)
        if np.any(ysum > 1):
            out.append(f"tasks {np.flatnonzero(ysum > 1).tolist()} hold several servers")
        if np.any(self.x + ysum > 1):
            out.append(f"tasks {np.flatnonzero(self.x + ysum > 1).tolist()} pick vehicle and server")
        if np.any((self.rho < 0) | (self.rho > 1)) or not np.all(np.isfinite(self.rho)):
            out.append("rho outside [0, 1]")
        if np.any(~np.isfinite(self.p)) or np.any(self.p <= 0) or np.any(self.p > p_max * (1 + 1e-12)):
            out.append("p outside (0, p_max]")
        used = (self.y * self.f).sum(axis=0)
        over = used > cap * (1 + 1e-9) + 1e-6
        if np.any(over):
            out.append(f"servers {np.flatnonzero(over).tolist()} over capacity")
        if np.any((self.y == 1) & (self.f <= 0)):
            out.append("assigned task without CPU share")
        return out


@dataclass(frozen=True)
class SlotInstance:
    """Everything needed to score decisions for one time slot."""

    tasks: tuple[TaskSpec, ...]
    geometry: Geometry
    radio: RadioParams
    compute: ComputeParams
    alpha: float = 1.0
    beta: float = 1.0
    capacity: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if len(self.tasks) != len(self.geometry.d_kv):
            raise DomainError("geometry and task list disagree on K")
        if len(self.geometry.rsu_positions) != self.compute.n_servers:
            raise DomainError("geometry and compute params disagree on M")
        cap = self.compute.server_cpu if self.capacity is None else self.capacity
        cap = np.asarray(cap, float).reshape(self.compute.n_servers)
        if np.any(cap < 0):
            raise DomainError("free capacity must be non-negative")
        object.__setattr__(self, "capacity", cap)
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("weights must be non-negative")

    @property
    def K(self) -> int:
        return len(self.tasks)

    @property
    def M(self) -> int:
        return self.compute.n_servers

    def with_capacity(self, capacity) -> "SlotInstance":
        return replace(self, capacity=np.asarray(capacity, float))

    def with_weights(self, alpha: float, beta: float) -> "SlotInstance":
        return replace(self, alpha=alpha, beta=beta)


@dataclass
class SlotResult:
    """Per-task evaluation of a decision (actual, max-form delays)."""

    energy: np.ndarray
    delay: np.ndarray
    a_term: np.ndarray
    b_term: np.ndarray
    log_arg: np.ndarray
    utility_term: np.ndarray
    slack_x: np.ndarray
    slack_y: np.ndarray

    @property
    def utility(self) -> float:
        return utility(self)

    @property
    def deadline_violations(self) -> int:
        return int(np.sum((self.slack_x > 0) | (self.slack_y > 0)))


# --------------------------------------------------------------------------
# closed-form primitives

def shannon_rate(p, xi, d, b_k):
    """Achievable rate ``b_k * log2(1 + p * xi / d**2)`` in bits/s.

    Raises
    ------
    DomainError
        If ``p``, ``xi`` or ``b_k`` is not positive or ``d < 1``.
    """
    p, xi, d = np.asarray(p, float), np.asarray(xi, float), np.asarray(d, float)
    if np.any(p <= 0) or np.any(xi <= 0) or np.any(d < REF_DISTANCE) or b_k <= 0:
        raise DomainError("shannon_rate needs p > 0, xi > 0, d >= 1 and b_k > 0")
    out = b_k * np.log2(1.0 + p * xi / d ** 2)
    return float(out) if out.ndim == 0 else out


def comm_energy(task: TaskSpec, rho: float, p: float, rate_up: float,
                radio: RadioParams) -> float:
    """Upload plus result-reception energy of the IoTD (J)."""
    if not 0 <= rho <= 1:
        raise DomainError("rho must lie in [0, 1]")
    if rho == 0:
        return 0.0
    if rate_up <= 0:
        raise InfeasibleLinkError("positive offload over a zero-rate uplink")
    upload = (p + radio.circuit_power) * rho * task.input_bits / (radio.amplifier_eff * rate_up)
    return upload + rho * task.output_bits * radio.rx_energy_per_bit


def exec_energy(task: TaskSpec, rho: float, compute: ComputeParams) -> float:
    """Energy of the locally executed share ``(1 - rho)`` of the task (J)."""
    if not 0 <= rho <= 1:
        raise DomainError("rho must lie in [0, 1]")
    return compute.cap_coeff * task.local_cpu ** 2 * (1.0 - rho) * task.cycles


# --------------------------------------------------------------------------
# path abstraction

@dataclass(frozen=True)
class PathModel:
    """Delay/energy structure of one task along one offloading path.

    The offloaded share ``rho`` of the task travels over the IoTD uplink
    (rate depends on the IoTD power ``p``), then over fixed-power relay hops
    (``relay_in`` seconds per input bit), executes at ``exec_cpu`` and comes
    back over fixed-power hops (``ret_per_bit`` seconds per output bit).
    When ``v2v_snr > 0`` the vehicle additionally hands the result over to a
    follower vehicle at distance ``rho * cycles * speed / vehicle_cpu``.

    All methods broadcast over array-valued ``rho`` and ``p``.
    """

    input_bits: float
    output_bits: float
    cycles: float
    local_cpu: float
    energy_budget: float
    delay_budget: float
    bandwidth: float
    up_snr: float
    relay_in: float
    ret_per_bit: float
    exec_cpu: float
    v2v_snr: float
    v2v_kappa: float
    amplifier_eff: float
    circuit_power: float
    rx_energy_per_bit: float
    cap_coeff: float
    alpha: float
    beta: float
    p_max: float
    kind: str = "vehicle"

    def with_cpu(self, exec_cpu: float) -> "PathModel":
        return replace(self, exec_cpu=float(exec_cpu))

    # ---- rates
    def up_rate(self, p):
        return self.bandwidth * np.log2(1.0 + np.asarray(p, float) * self.up_snr)

    def v2v_rate(self, rho):
        d = np.maximum(self.v2v_kappa * np.asarray(rho, float), REF_DISTANCE)
        return self.bandwidth * np.log2(1.0 + self.v2v_snr / d ** 2)

    # ---- delays
    def v2v_time(self, rho):
        rho = np.asarray(rho, float)
        if self.v2v_snr <= 0:
            return np.zeros_like(rho)
        return rho * self.output_bits / self.v2v_rate(rho)

    def fixed_per_rho(self) -> float:
        """Seconds per unit ``rho`` spent on fixed hops and remote execution."""
        return (self.input_bits * self.relay_in + self.cycles / self.exec_cpu
                + self.output_bits * self.ret_per_bit)

    def upload_time(self, rho, p):
        rho, p = np.broadcast_arrays(np.asarray(rho, float), np.asarray(p, float))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = rho * self.input_bits / self.up_rate(p)
        return np.where(rho > 0, t, 0.0)

    def chain_time(self, rho, p):
        """Offloaded branch: upload, relay, execute, return, hand-over."""
        rho = np.asarray(rho, float)
        return self.upload_time(rho, p) + rho * self.fixed_per_rho() + self.v2v_time(rho)

    def local_time(self, rho):
        return (1.0 - np.asarray(rho, float)) * self.cycles / self.local_cpu

    def delay(self, rho, p):
        """Actual delay: local and offloaded branches run in parallel."""
        return np.maximum(self.local_time(rho), self.chain_time(rho, p))

    def worst_delay(self, rho, p):
        """Sum-form upper bound of :meth:`delay` used by the solvers."""
        return self.local_time(rho) + self.chain_time(rho, p)

    # ---- energy and utility
    def energy(self, rho, p):
        rho, p = np.broadcast_arrays(np.asarray(rho, float), np.asarray(p, float))
        with np.errstate(divide="ignore", invalid="ignore"):
            up = (p + self.circuit_power) * rho * self.input_bits / (
                self.amplifier_eff * self.up_rate(p))
        up = np.where(rho > 0, up, 0.0)
        local = self.cap_coeff * self.local_cpu ** 2 * (1.0 - rho) * self.cycles
        return up + rho * self.output_bits * self.rx_energy_per_bit + local

    def log_arg(self, rho, p, worst: bool = False):
        delay = self.worst_delay(rho, p) if worst else self.delay(rho, p)
        return (1.0 + self.alpha * (1.0 - self.energy(rho, p) / self.energy_budget)
                + self.beta * (1.0 - delay / self.delay_budget))

    def utility(self, rho, p, worst: bool = False):
        """``log2`` of :meth:`log_arg`; ``-inf`` where the argument is not positive."""
        arg = self.log_arg(rho, p, worst)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(arg > 0, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)

    def feasible(self, rho, p, worst: bool = True):
        delay = self.worst_delay(rho, p) if worst else self.delay(rho, p)
        return (delay <= self.delay_budget * (1 + 1e-12)) & (self.log_arg(rho, p, worst) > 0)


def _path(slot: SlotInstance, k: int, *, up_snr: float, relay_in: float,
          ret_per_bit: float, exec_cpu: float, v2v: bool, kind: str) -> PathModel:
    task, radio, compute = slot.tasks[k], slot.radio, slot.compute
    return PathModel(
        input_bits=task.input_bits, output_bits=task.output_bits, cycles=task.cycles,
        local_cpu=task.local_cpu, energy_budget=task.energy_budget,
        delay_budget=task.delay_budget, bandwidth=radio.channel_bandwidth,
        up_snr=up_snr, relay_in=relay_in, ret_per_bit=ret_per_bit, exec_cpu=exec_cpu,
        v2v_snr=radio.p_fixed_vehicle * radio.xi1 if v2v else 0.0,
        v2v_kappa=task.cycles * slot.geometry.mean_speed / compute.vehicle_cpu,
        amplifier_eff=radio.amplifier_eff, circuit_power=radio.circuit_power,
        rx_energy_per_bit=radio.rx_energy_per_bit, cap_coeff=compute.cap_coeff,
        alpha=slot.alpha, beta=slot.beta, p_max=radio.p_max_iotd, kind=kind,
    )


def _fixed_rate(slot: SlotInstance, power: float, link: int, d: float) -> float:
    return slot.radio.channel_bandwidth * math.log2(1.0 + power * slot.radio.snr_reference(link) / d ** 2)


def vehicle_path(slot: SlotInstance, k: int) -> PathModel:
    """IoTD -> vehicle, executed on the vehicle, returned via V2V then V2K."""
    radio, d_kv = slot.radio, float(slot.geometry.d_kv[k])
    r_vk = _fixed_rate(slot, radio.p_fixed_vehicle, 1, d_kv)
    return _path(slot, k, up_snr=radio.xi0 / d_kv ** 2, relay_in=0.0,
                 ret_per_bit=1.0 / r_vk, exec_cpu=slot.compute.vehicle_cpu,
                 v2v=True, kind="vehicle")


def server_path(slot: SlotInstance, k: int, m: int, f: float) -> PathModel:
    """IoTD -> vehicle -> RSU ``m`` (CPU share ``f``) -> vehicle -> IoTD."""
    radio = slot.radio
    d_kv, d_vm = float(slot.geometry.d_kv[k]), float(slot.geometry.d_vm[k, m])
    r_vk = _fixed_rate(slot, radio.p_fixed_vehicle, 1, d_kv)
    r_vm = _fixed_rate(slot, radio.p_fixed_vehicle, 2, d_vm)
    r_mv = _fixed_rate(slot, radio.p_fixed_rsu, 2, d_vm)
    return _path(slot, k, up_snr=radio.xi0 / d_kv ** 2, relay_in=1.0 / r_vm,
                 ret_per_bit=1.0 / r_mv + 1.0 / r_vk, exec_cpu=f, v2v=False,
                 kind="server")


def direct_path(slot: SlotInstance, k: int, m: int, f: float) -> PathModel:
    """IoTD -> RSU ``m`` without vehicle assistance, result returned directly."""
    radio, d_km = slot.radio, float(slot.geometry.d_vm[k, m])
    r_mk = _fixed_rate(slot, radio.p_fixed_rsu, 2, d_km)
    return _path(slot, k, up_snr=radio.xi2 / d_km ** 2, relay_in=0.0,
                 ret_per_bit=1.0 / r_mk, exec_cpu=f, v2v=False, kind="direct")


def decision_path(slot: SlotInstance, decision: DecisionVector, k: int) -> PathModel | None:
    """Path used by task ``k`` under ``decision``; ``None`` for local execution."""
    if decision.x[k] == 1:
        return vehicle_path(slot, k)
    if decision.y[k].any():
        m = int(decision.y[k].argmax())
        f = float(decision.f[k, m])
        if f <= 0:
            raise InfeasibleAllocationError(f"task {k} assigned to server {m} with f = {f}")
        maker = direct_path if decision.direct[k] else server_path
        return maker(slot, k, m, f)
    return None


# --------------------------------------------------------------------------
# decision-level evaluation

def task_delay(slot: SlotInstance, decision: DecisionVector, k: int) -> float:
    """Actual processing delay of task ``k`` under ``decision`` (s)."""
    path = decision_path(slot, decision, k)
    if path is None:
        return slot.tasks[k].local_delay
    return float(path.delay(decision.rho[k], decision.p[k]))


def worst_case_delay(slot: SlotInstance, k: int, option: str, rho: float, p: float,
                     m: int | None = None, f: float | None = None) -> float:
    """Sum-form delay bound for task ``k`` on ``option`` (vehicle/server/direct)."""
    if option == "vehicle":
        path = vehicle_path(slot, k)
    elif option in ("server", "direct"):
        if m is None or f is None or f <= 0:
            raise InfeasibleAllocationError("server options need a server index and f > 0")
        path = (server_path if option == "server" else direct_path)(slot, k, m, f)
    else:
        raise DomainError(f"unknown option {option!r}")
    return float(path.worst_delay(rho, p))


def evaluate_decision(slot: SlotInstance, decision: DecisionVector) -> SlotResult:
    """Score every task of ``decision`` with the actual (max-form) delays."""
    K = slot.K
    energy, delay = np.empty(K), np.empty(K)
    slack_x, slack_y = np.zeros(K), np.zeros(K)
    for k, task in enumerate(slot.tasks):
        path = decision_path(slot, decision, k)
        if path is None or decision.rho[k] == 0:
            energy[k] = exec_energy(task, 0.0, slot.compute)
            delay[k] = task.local_delay
        else:
            energy[k] = float(path.energy(decision.rho[k], decision.p[k]))
            delay[k] = float(path.delay(decision.rho[k], decision.p[k]))
        excess = max(0.0, delay[k] - task.delay_budget)
        if decision.x[k] == 1:
            slack_x[k] = excess
        elif decision.y[k].any():
            slack_y[k] = excess
    e_max = np.array([t.energy_budget for t in slot.tasks])
    t_max = np.array([t.delay_budget for t in slot.tasks])
    a = 1.0 - energy / e_max
    b = 1.0 - delay / t_max
    arg = 1.0 + slot.alpha * a + slot.beta * b
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(arg > 0, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)
    return SlotResult(energy, delay, a, b, arg, term, slack_x, slack_y)


def utility(result: SlotResult, alpha: float | None = None, beta: float | None = None) -> float:
    """System utility of one slot: the sum of per-task ``log2`` terms.

    With ``alpha`` and ``beta`` given, the terms are recomputed from the
    stored normalised savings ``a`` and ``b`` under those weights.

    Raises
    ------
    BudgetBlowoutError
        If any task's log argument is not positive.
    """
    arg = result.log_arg
    if alpha is not None or beta is not None:
        if alpha is None or beta is None:
            raise DomainError("give both alpha and beta or neither")
        arg = 1.0 + alpha * result.a_term + beta * result.b_term
    bad = np.flatnonzero(~(arg > 0))
    if bad.size:
        raise BudgetBlowoutError(f"non-positive log argument for tasks {bad.tolist()}")
    return float(np.sum(np.log2(arg)))


def local_utility_terms(slot: SlotInstance) -> np.ndarray:
    """Per-task utility when every task runs locally."""
    res = evaluate_decision(slot, DecisionVector.all_local(slot.K, slot.M))
    return res.utility_term
