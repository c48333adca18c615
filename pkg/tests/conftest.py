import numpy as np
import pytest

from vecoffload.scenario import ScenarioConfig, generate_scenario


def make_slot(K=3, M=2, seed=0, n=0, **updates):
    cfg = ScenarioConfig(K=K, M=M, N=max(1, n + 1), seed=seed, **updates)
    return generate_scenario(cfg).slot(n)


@pytest.fixture
def slot():
    return make_slot()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


RATIO_GRID = np.linspace(0.01, 1.0, 100)


def single_server(seed, n=3):
    """``n`` tasks sharing server 0 at full IoTD power, each at half its largest
    feasible ratio under an even CPU split; ``None`` if some task has none or the
    lower bounds do not fit."""
    from vecoffload.continuous import allocation_lower_bounds
    from vecoffload.model import server_path

    slot = make_slot(K=n, M=1, seed=seed)
    cap = float(slot.capacity[0])
    paths = [server_path(slot, k, 0, cap / n) for k in range(n)]
    p = np.full(n, slot.radio.p_max_iotd)
    rho = np.zeros(n)
    for k, path in enumerate(paths):
        ok = RATIO_GRID[path.feasible(RATIO_GRID, p[k])]
        if not ok.size:
            return None
        rho[k] = ok.max() / 2
    lower = allocation_lower_bounds(paths, rho, p, cap, slot.compute.vehicle_cpu)
    if lower.sum() > cap:
        return None
    return slot, paths, rho, p, cap, lower


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(':'))):
            terminalreporter.write_line(line)
