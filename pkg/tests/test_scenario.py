import numpy as np
import pytest

from vecoffload.errors import DomainError
from vecoffload.scenario import KB, ScenarioConfig, draw_task, generate_scenario, rsu_grid


def test_same_seed_same_scenario():
    a = generate_scenario(ScenarioConfig(K=5, M=2, N=3, seed=7))
    b = generate_scenario(ScenarioConfig(K=5, M=2, N=3, seed=7))
    np.testing.assert_array_equal(a.iotd_positions, b.iotd_positions)
    assert a.tasks == b.tasks


def test_task_draw_does_not_depend_on_other_tasks():
    cfg = ScenarioConfig(K=5, M=2, N=3, seed=7)
    assert generate_scenario(cfg).tasks[2][4] == draw_task(cfg, 2, 4)[0]


def test_draws_within_ranges_and_budgets():
    cfg = ScenarioConfig(K=40, M=6, N=2, seed=1)
    for batch in generate_scenario(cfg).tasks:
        for t in batch:
            assert 10 * KB <= t.input_bits <= 640 * KB
            assert 5 * KB <= t.output_bits <= 300 * KB
            assert 0.1e9 <= t.local_cpu <= 1e9 and 0.2e9 <= t.cycles <= 2e9
            assert t.delay_budget == pytest.approx(1.15 * t.cycles / t.local_cpu)
            assert t.energy_budget == pytest.approx(1.15 * 1e-26 * t.local_cpu ** 2 * t.cycles)


def test_positions_inside_area():
    scen = generate_scenario(ScenarioConfig(K=40, M=6, N=1, seed=3))
    assert np.all((scen.iotd_positions >= 0) & (scen.iotd_positions <= 3000))
    rsu = rsu_grid(6, 3000.0)
    assert rsu.shape == (6, 2)
    assert len({tuple(r) for r in rsu}) == 6


def test_dense_left_side_at_full_scale():
    pos = generate_scenario(ScenarioConfig(K=40, M=6, N=1, seed=0)).iotd_positions
    assert np.sum(pos[:, 0] < 1800) == 30


def test_slot_capacity_override():
    scen = generate_scenario(ScenarioConfig(K=2, M=2, N=1))
    assert np.all(scen.slot(0).capacity == 5e9)
    np.testing.assert_array_equal(scen.slot(0, np.array([1e9, 2e9])).capacity, [1e9, 2e9])


@pytest.mark.parametrize("kw", [dict(K=0), dict(budget_factor=1.0), dict(cycles=(2e9, 1e9)),
                                dict(d_kv=(0.5, 10.0))])
def test_invalid_config(kw):
    with pytest.raises(DomainError):
        ScenarioConfig(**kw)
