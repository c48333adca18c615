import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import make_slot, single_server
from vecoffload.continuous import (
    DualConfig,
    DualState,
    solve_power,
    solve_resource_allocation,
    solve_rho,
    solve_rho_power,
    stationary_power,
    tight_power,
    upload_allowance,
)
from vecoffload.errors import DeadlineUnreachableError, InfeasibleAllocationError
from vecoffload.model import server_path, vehicle_path
from vecoffload.verification import check_oracles


def tight_instances(n_seeds=200, seed=1):
    """Paths and ratios whose deadline-tight power lies strictly between the
    stationary power and ``p_max``."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(1e-3, 1.0, 400)
    out = []
    for s in range(n_seeds):
        slot = make_slot(K=1, M=1, seed=s)
        for path in (vehicle_path(slot, 0), server_path(slot, 0, 0, rng.uniform(1.05e9, 5e9))):
            ps = stationary_power(path)
            if ps >= path.p_max:
                continue
            target = ps + rng.uniform(0.1, 0.9) * (path.p_max - ps)
            v = tight_power(path, grid) - target
            idx = np.flatnonzero((v[:-1] < 0) & (v[1:] >= 0))
            if idx.size:
                g = lambda r: float(tight_power(path, r)) - target
                out.append((path, brentq(g, grid[idx[0]], grid[idx[0] + 1], xtol=1e-15)))
    return out


def test_oracle_dominance_small_batch():
    report = check_oracles(40, seed=3)
    assert report.passed, report.failures
    assert set(report.checked) == {"solve_rho_vehicle", "solve_power", "solve_rho_power_server",
                                   "solve_resource_allocation"}


def test_tight_power_meets_worst_case_deadline_exactly():
    cases = tight_instances()
    assert len(cases) >= 15
    for path, rho in cases:
        out = solve_power(path, rho)
        assert out.case == "tight"
        assert float(path.worst_delay(rho, out.p)) == pytest.approx(path.delay_budget, rel=1e-6)


def test_power_cases():
    slot = make_slot(K=1, M=1, seed=2)
    path = vehicle_path(slot, 0)
    none = solve_power(path, 0.0)
    assert none.no_transmission and none.p > 0
    # ratio just above the largest one whose uplink fits at p_max
    grid = np.linspace(1e-3, 1, 2000)
    over = grid[(tight_power(path, grid) > path.p_max) & (upload_allowance(path, grid) > 0)]
    if over.size:
        risk = solve_power(path, float(over[0]))
        assert risk.deadline_risk and risk.p == path.p_max


def test_unreachable_deadline_raises():
    slot = make_slot(K=1, M=1, seed=2)
    path = server_path(slot, 0, 0, 1.1e9)
    grid = np.linspace(1e-3, 1, 2000)
    bad = grid[upload_allowance(path, grid) <= 0]
    if not bad.size:
        pytest.skip("every ratio leaves uplink time on this instance")
    with pytest.raises(DeadlineUnreachableError):
        solve_power(path, float(bad[-1]))


def test_stationary_power_maximises_unconstrained_utility():
    for s in range(10):
        path = vehicle_path(make_slot(K=1, M=1, seed=s), 0)
        ps = stationary_power(path)
        grid = np.linspace(1e-3, path.p_max, 2001)
        u = path.utility(0.3, grid, worst=True)
        assert float(path.utility(0.3, ps, worst=True)) >= u.max() - 1e-9


def test_ratio_solution_is_feasible_and_classified():
    for s in range(20):
        slot = make_slot(K=1, M=1, seed=s)
        path = vehicle_path(slot, 0)
        out = solve_rho(path, slot.radio.p_max_iotd)
        assert 0.0 <= out.rho_star <= 1.0
        assert out.case_id in ("interior", "rho_one", "rho_zero", "boundary_fallback")
        if out.feasible and out.rho_star > 0:
            assert bool(path.feasible(out.rho_star, slot.radio.p_max_iotd))
        if out.case_id == "interior":
            assert out.residual < 1e-6


def test_joint_solution_beats_fixed_power():
    for s in range(10):
        slot = make_slot(K=1, M=1, seed=s)
        path = server_path(slot, 0, 0, 3e9)
        joint = solve_rho_power(path)
        fixed = solve_rho(path, slot.radio.p_max_iotd)
        uj = float(path.utility(joint.rho_star, joint.p, worst=True))
        uf = float(path.utility(fixed.rho_star, slot.radio.p_max_iotd, worst=True))
        assert uj >= uf - 1e-9


def test_symmetric_tasks_get_equal_shares():
    slot = make_slot(K=1, M=1, seed=7)
    path = server_path(slot, 0, 0, 2.5e9)
    grid = np.linspace(0.01, 1, 100)
    rho = grid[path.feasible(grid, 1.0)].max() / 2
    out = solve_resource_allocation([path, path], [rho, rho], [1.0, 1.0], 5e9, 1e9)
    assert out.converged
    assert out.f[0] == pytest.approx(out.f[1], rel=1e-6)
    assert out.f.sum() == pytest.approx(5e9, rel=1e-9)


def test_lower_bounds_over_capacity_raise():
    slot = make_slot(K=3, M=1, seed=0)
    paths = [server_path(slot, k, 0, 1e9) for k in range(3)]
    with pytest.raises(InfeasibleAllocationError):
        solve_resource_allocation(paths, [0.5] * 3, [1.0] * 3, 2e9, 1e9)


def test_allocation_respects_bounds():
    for s in range(30):
        inst = single_server(s)
        if inst is None:
            continue
        slot, paths, rho, p, cap, lower = inst
        out = solve_resource_allocation(paths, rho, p, cap, slot.compute.vehicle_cpu)
        assert np.all(out.f >= lower * (1 - 1e-12))
        assert out.f.sum() <= cap * (1 + 1e-12)
        assert out.deadline_residual <= 1e-9
        assert out.dual.theta >= 0 and np.all(out.dual.lam >= 0) and np.all(out.dual.mu >= 0)


def test_dual_loop_converges_from_three_starts():
    cfg = DualConfig(tol=1e-4)
    tested = 0
    for s in range(60):
        inst = single_server(s)
        if inst is None:
            continue
        slot, paths, rho, p, cap, lower = inst
        n = len(paths)
        starts = [
            dict(),
            dict(f_init=lower + (cap - lower.sum()) * np.array([0.8, 0.15, 0.05])),
            dict(dual_init=DualState(np.zeros(n), np.zeros(n), 1e3)),
        ]
        fs = []
        for kw in starts:
            out = solve_resource_allocation(paths, rho, p, cap, slot.compute.vehicle_cpu, cfg, **kw)
            assert out.converged and out.iterations <= 50
            fs.append(out.f)
        fs = np.array(fs)
        assert np.max(np.abs(fs - fs[0]) / fs[0]) <= 0.02
        tested += 1
    assert tested >= 20
