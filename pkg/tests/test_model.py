import math

import numpy as np
import pytest

from conftest import make_slot
from vecoffload.errors import BudgetBlowoutError, DomainError, InfeasibleAllocationError, InfeasibleLinkError
from vecoffload.model import (
    ComputeParams,
    DecisionVector,
    RadioParams,
    TaskSpec,
    comm_energy,
    evaluate_decision,
    exec_energy,
    server_path,
    shannon_rate,
    task_delay,
    utility,
    vehicle_path,
    worst_case_delay,
)
from vecoffload.scenario import KB

TASK = TaskSpec(input_bits=640 * KB, output_bits=300 * KB, cycles=2e9, energy_budget=1.0,
                delay_budget=10.0, local_cpu=1e9)


def test_shannon_rate_reference_value():
    xi0 = 1e-5 / (1e-16 * 3e6)
    assert shannon_rate(1.0, xi0, 100.0, 3e6) == pytest.approx(6346431.652259808, rel=1e-12)


def test_shannon_rate_monotone_in_power_and_distance(rng):
    p = np.sort(rng.uniform(1e-3, 1, 50))
    d = np.sort(rng.uniform(1, 500, 50))
    assert np.all(np.diff(shannon_rate(p, 3e4, 50.0, 3e6)) > 0)
    assert np.all(np.diff(shannon_rate(0.5, 3e4, d, 3e6)) < 0)


def test_shannon_rate_small_power_and_inverse_square():
    assert 0 < shannon_rate(1e-15, 3e4, 100.0, 3e6) < 1e-3
    # doubling the distance quarters the SNR term
    snr = lambda d: 2 ** (shannon_rate(1.0, 3e4, d, 3e6) / 3e6) - 1
    assert snr(200.0) == pytest.approx(snr(100.0) / 4, rel=1e-12)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0, 1.0), (1.0, -1.0, 1.0, 1.0), (1.0, 1.0, 0.5, 1.0),
                                  (1.0, 1.0, 1.0, 0.0)])
def test_shannon_rate_rejects_bad_inputs(args):
    with pytest.raises(DomainError):
        shannon_rate(*args)


def test_comm_energy_values():
    radio = RadioParams()
    assert comm_energy(TASK, 0.0, 1.0, 6.35e6, radio) == 0.0
    # independent hand computation: 1.005 W * 5242880 b / (0.9 * 6.35e6 b/s) + 2457600 b * 5e-9 J/b
    assert comm_energy(TASK, 1.0, 1.0, 6.35e6, radio) == pytest.approx(0.9342642729658792, rel=1e-12)
    bare = RadioParams(amplifier_eff=1.0, circuit_power=0.0)
    no_out = TaskSpec(TASK.input_bits, 1e-300, TASK.cycles, 1.0, 10.0, 1e9)
    t_up = TASK.input_bits / 6.35e6
    assert comm_energy(no_out, 1.0, 0.7, 6.35e6, bare) == pytest.approx(0.7 * t_up, rel=1e-12)


def test_comm_energy_zero_rate_is_rejected():
    with pytest.raises(InfeasibleLinkError):
        comm_energy(TASK, 0.5, 1.0, 0.0, RadioParams())


def test_exec_energy_values():
    compute = ComputeParams()
    # 1e-26 * (1e9)^2 * 2e9 = 20 J
    assert exec_energy(TASK, 0.0, compute) == pytest.approx(20.0, rel=1e-12)
    assert exec_energy(TASK, 1.0, compute) == 0.0
    e = [exec_energy(TASK, r, compute) for r in (0.0, 0.25, 0.5)]
    assert e[0] - e[1] == pytest.approx(e[1] - e[2], rel=1e-12)


def test_task_spec_validation():
    with pytest.raises(DomainError):
        TaskSpec(1.0, 1.0, 1.0, 0.0, 1.0, 1.0)


def _single(slot, k, option, rho, p, m=0, f=3e9, direct=False):
    d = DecisionVector.all_local(slot.K, slot.M)
    d.rho[k], d.p[k] = rho, p
    if option == "vehicle":
        d.x[k] = 1
    elif option == "server":
        d.y[k, m], d.f[k, m], d.direct[k] = 1, f, direct
    return d


def test_zero_offload_gives_local_delay(slot):
    for option in ("local", "vehicle", "server"):
        d = _single(slot, 0, option, 0.0, 0.5)
        assert task_delay(slot, d, 0) == pytest.approx(slot.tasks[0].local_delay, rel=1e-15)
        assert worst_case_delay(slot, 0, "vehicle", 0.0, 0.5) == pytest.approx(
            slot.tasks[0].local_delay, rel=1e-15)


def test_vehicle_execution_component(slot):
    path = vehicle_path(slot, 0)
    assert path.cycles / path.exec_cpu == pytest.approx(slot.tasks[0].cycles / 1e9)


def test_worst_case_bounds_actual_delay(rng):
    slot = make_slot(K=4, M=2, seed=3)
    for _ in range(1000):
        k = int(rng.integers(4))
        rho, p = rng.uniform(0, 1), rng.uniform(1e-3, 1)
        if rng.uniform() < 0.5:
            path = vehicle_path(slot, k)
        else:
            path = server_path(slot, k, int(rng.integers(2)), rng.uniform(1.1e9, 5e9))
        assert path.worst_delay(rho, p) >= path.delay(rho, p) * (1 - 1e-15)


def test_server_without_cpu_share_is_rejected(slot):
    d = _single(slot, 0, "server", 0.5, 0.5, f=0.0)
    with pytest.raises(InfeasibleAllocationError):
        task_delay(slot, d, 0)


def test_energy_decomposition(slot):
    k, rho, p = 1, 0.6, 0.4
    path = vehicle_path(slot, k)
    rate = float(path.up_rate(p))
    total = comm_energy(slot.tasks[k], rho, p, rate, slot.radio) + exec_energy(slot.tasks[k], rho, slot.compute)
    assert float(path.energy(rho, p)) == pytest.approx(total, rel=1e-13)


def test_utility_reference_points(slot):
    res = evaluate_decision(slot, DecisionVector.all_local(slot.K, slot.M))
    res.a_term[:] = 0.0
    res.b_term[:] = 0.0
    assert utility(res, 1.0, 1.0) == 0.0
    res.a_term[:] = 1.0
    res.b_term[:] = 1.0
    assert utility(res, 1.0, 1.0) == pytest.approx(slot.K * math.log2(3.0))
    res.a_term[:] = -5.0
    with pytest.raises(BudgetBlowoutError):
        utility(res, 1.0, 1.0)


def test_utility_antitone_in_energy_and_delay(slot):
    path = vehicle_path(slot, 0)
    # at rho = 1 the remote chain sets the delay, so a slower helper CPU must hurt
    assert path.utility(1.0, 0.2) > path.with_cpu(0.5e9).utility(1.0, 0.2)
    u = [float(path.utility(0.5, p)) for p in (0.2, 0.3)]
    e = [float(path.energy(0.5, p)) for p in (0.2, 0.3)]
    t = [float(path.delay(0.5, p)) for p in (0.2, 0.3)]
    if e[1] >= e[0] and t[1] >= t[0]:
        assert u[1] <= u[0]


def test_decision_violations_are_reported(slot):
    d = DecisionVector.all_local(slot.K, slot.M)
    assert d.violations(slot.capacity, 1.0) == []
    d.x[0] = 1
    d.y[0, 0] = 1
    d.f[0, 0] = 9e9
    d.p[1] = 2.0
    msgs = " ".join(d.violations(slot.capacity, 1.0))
    assert "vehicle and server" in msgs and "over capacity" in msgs and "p outside" in msgs
