import numpy as np
import pytest

from conftest import make_slot
from vecoffload.joet import run_joet
from vecoffload.schemes import (
    SCHEMES,
    canonical_name,
    nearest_servers,
    run_crtp,
    run_novec,
    run_noveh,
    run_onlyr,
    run_scheme,
    run_so,
)


def test_so_splits_capacity_evenly():
    out = run_so(make_slot(K=4, M=1, seed=3))
    on = out.decision.y[:, 0] == 1
    assert on.sum() == 2
    np.testing.assert_allclose(out.decision.f[on, 0], 2.5e9, rtol=1e-12)


def test_so_even_split_in_general():
    for s in range(10):
        slot = make_slot(K=6, M=2, seed=s)
        d = run_so(slot).decision
        for m in range(2):
            on = d.y[:, m] == 1
            if on.any():
                np.testing.assert_allclose(d.f[on, m], slot.capacity[m] / on.sum(), rtol=1e-12)


def test_so_transmits_at_full_power():
    for s in range(5):
        slot = make_slot(K=5, M=2, seed=s)
        d = run_so(slot).decision
        sent = d.rho > 0
        np.testing.assert_array_equal(d.p[sent], slot.radio.p_max_iotd)
        assert d.x.sum() == 0


def test_novec_uses_no_server_cpu():
    for s in range(4):
        d = run_novec(make_slot(K=5, M=2, seed=s)).decision
        assert d.f.sum() == 0 and d.y.sum() == 0


def test_noveh_goes_direct():
    d = run_noveh(make_slot(K=5, M=2, seed=1)).decision
    assert d.x.sum() == 0
    assert np.all(d.direct[d.y.any(axis=1)])


def test_onlyr_relays_through_vehicle():
    d = run_onlyr(make_slot(K=5, M=2, seed=1)).decision
    assert d.x.sum() == 0
    assert not d.direct.any()


def test_joet_at_least_restricted_variants():
    for s in range(6):
        slot = make_slot(K=4, M=2, seed=s)
        u = run_joet(slot)[1].utility
        assert u >= run_onlyr(slot).utility - 1e-9
        assert u >= run_novec(slot).utility - 1e-9


def test_crtp_uses_nearest_server():
    slot = make_slot(K=6, M=2, seed=4)
    near = nearest_servers(slot)
    np.testing.assert_array_equal(near, np.argmin(slot.geometry.d_vm, axis=1))
    d = run_crtp(slot).decision
    for k in np.flatnonzero(d.y.any(axis=1)):
        assert d.y[k].argmax() == near[k]
    assert d.x.sum() == 0


@pytest.mark.parametrize("name", [s for s in SCHEMES if s != "ESM"])
def test_every_scheme_is_feasible(name):
    slot = make_slot(K=5, M=2, seed=11)
    out = run_scheme(name, slot)
    assert out.decision.violations(slot.capacity, slot.radio.p_max_iotd) == []
    t_max = np.array([t.delay_budget for t in slot.tasks])
    assert np.all(out.result.delay <= t_max * (1 + 1e-9))


def test_scheme_names():
    assert canonical_name(" noveh ") == "NoVeh"
    assert canonical_name("esm") == "ESM"
    with pytest.raises(ValueError):
        canonical_name("greedy")
    with pytest.raises(ValueError):
        run_scheme("greedy", make_slot())
