import textwrap

import pytest

from vecoffload.config import (
    DEFAULT_SCHEMES,
    config_from_dict,
    db_to_linear,
    dbm_to_watt,
    load_config,
    parse_schemes,
)
from vecoffload.errors import DomainError
from vecoffload.scenario import KB


def test_decibel_conversions():
    assert db_to_linear(-50) == pytest.approx(1e-5)
    assert dbm_to_watt(30) == pytest.approx(1.0)
    assert dbm_to_watt(-130) == pytest.approx(1e-16)
    assert dbm_to_watt(36) == pytest.approx(10 ** 0.6)


def test_defaults():
    cfg = load_config(None)
    assert cfg.schemes == DEFAULT_SCHEMES
    assert cfg.scenario.K == 40 and cfg.scenario.M == 6


def test_units_are_converted(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(textwrap.dedent("""
        scenario: {K: 3, M: 1, N: 2, input_kb: [10, 20], cycles_g: [0.5, 1.0], mean_speed_kmh: 36}
        weights: {alpha: 2.0}
        radio: {beta0_db: -40, noise_dbm_hz: [-120, -120, -120], bandwidth_mhz: 60, p_rsu_dbm: 30}
        compute: {server_ghz: 4}
        esm: {rho_step: 0.5, max_k: 3}
        run: {schemes: [joet, so]}
    """))
    cfg = load_config(path)
    sc = cfg.scenario
    assert (sc.K, sc.M, sc.N, sc.alpha, sc.beta) == (3, 1, 2, 2.0, 1.0)
    assert sc.input_bits == (10 * KB, 20 * KB)
    assert sc.cycles == (0.5e9, 1.0e9)
    assert sc.mean_speed == pytest.approx(10.0)
    assert sc.server_cpu == 4e9
    assert sc.radio.beta0 == pytest.approx(1e-4)
    assert sc.radio.noise_density[0] == pytest.approx(1e-15)
    assert sc.radio.bandwidth_total == 60e6
    assert sc.radio.p_fixed_rsu == pytest.approx(1.0)
    assert cfg.esm.strides.rho_step == 0.5 and cfg.esm.max_k == 3
    assert cfg.schemes == ("JOET", "SO")


@pytest.mark.parametrize("data", [{"scenario": {"tasks": 3}}, {"extra": {}}, {"radio": {"beta0_dB": 1}},
                                  {"scenario": {"input_kb": 5}}])
def test_bad_keys_are_rejected(data):
    with pytest.raises(DomainError):
        config_from_dict(data)


def test_scheme_lists():
    assert parse_schemes("joet,so") == ("JOET", "SO")
    assert parse_schemes(" NoVEC , esm ") == ("NoVEC", "ESM")
    with pytest.raises(DomainError):
        parse_schemes(" , ")
    with pytest.raises(ValueError):
        parse_schemes("joet,unknown")


def test_shipped_example_config_loads():
    from pathlib import Path

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "desk.yaml")
    assert (cfg.scenario.K, cfg.scenario.M, cfg.scenario.N) == (8, 2, 5)
    assert cfg.scenario.radio.beta0 == pytest.approx(1e-5)
    assert cfg.joet.actual_polish is True
    assert cfg.schemes == DEFAULT_SCHEMES
