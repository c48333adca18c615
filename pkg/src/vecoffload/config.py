"""YAML configuration files.

Layout (every key optional; omitted keys keep their defaults)::

    scenario:
      K: 8                      # tasks (IoTDs) per slot
      M: 2                      # RSUs
      N: 5                      # slots
      delta_t: 1.0              # slot length (s)
      area: 3000                # side of the square area (m)
      layout: auto              # auto | uniform | clustered
      seed: 0
      budget_factor: 1.15
      mean_speed_kmh: 60
      input_kb: [10, 640]
      output_kb: [5, 300]
      local_cpu_ghz: [0.1, 1.0]
      cycles_g: [0.2, 2.0]      # CPU cycles per task, in 1e9
      d_kv_m: [10, 100]
    weights: {alpha: 1.0, beta: 1.0}
    radio:
      beta0_db: -50             # channel gain at 1 m
      noise_dbm_hz: [-130, -130, -130]
      bandwidth_mhz: 120
      amplifier_eff: 0.9
      circuit_power_w: 0.005
      rx_energy_per_bit_j: 5.0e-9
      p_max_w: 1.0
      p_vehicle_dbm: 36         # or p_vehicle_w
      p_rsu_dbm: 36             # or p_rsu_w
    compute: {vehicle_ghz: 1.0, server_ghz: 5.0, cap_coeff: 1.0e-26}
    joet: {outer_tol: 1.0e-3, bsum_tol: 1.0e-3, ...}   # JoetConfig fields
    esm: {rho_step: 0.25, p_levels: 4, f_levels: 4, max_k: 4, max_m: 2}
    run: {schemes: [JOET, NoVeh, NoVEC, OnlyR, SO, CRTP]}

Decibel keys (``*_db``, ``*_dbm``, ``*_dbm_hz``) are converted to linear SI
values once, here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import DomainError
from .esm import MAX_K, MAX_M, EsmStrides
from .joet import JoetConfig
from .model import RadioParams
from .scenario import KB, ScenarioConfig
from .schemes import SCHEMES, canonical_name

DEFAULT_SCHEMES = ("JOET", "NoVeh", "NoVEC", "OnlyR", "SO", "CRTP")


def db_to_linear(db: float) -> float:
    return 10.0 ** (float(db) / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


@dataclass(frozen=True)
class EsmOptions:
    strides: EsmStrides = field(default_factory=EsmStrides)
    max_k: int = MAX_K
    max_m: int = MAX_M


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    joet: JoetConfig = field(default_factory=JoetConfig)
    esm: EsmOptions = field(default_factory=EsmOptions)
    schemes: tuple[str, ...] = DEFAULT_SCHEMES


def _pair(value, scale: float, name: str) -> tuple[float, float]:
    try:
        lo, hi = value
    except (TypeError, ValueError):
        raise DomainError(f"{name} needs two values [low, high]") from None
    return float(lo) * scale, float(hi) * scale


def _take(section: Mapping[str, Any], allowed: set[str], where: str) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise DomainError(f"unknown keys in {where}: {', '.join(sorted(unknown))}")
    return dict(section)


_SCENARIO_PLAIN = {"K", "M", "N", "delta_t", "area", "layout", "seed", "budget_factor", "grid_cells"}
_SCENARIO_RANGES = {"input_kb": ("input_bits", KB), "output_kb": ("output_bits", KB),
                    "local_cpu_ghz": ("local_cpu", 1e9), "cycles_g": ("cycles", 1e9),
                    "d_kv_m": ("d_kv", 1.0)}


def _radio(sec: Mapping[str, Any], base: RadioParams) -> RadioParams:
    allowed = {"beta0_db", "beta0", "noise_dbm_hz", "noise_w_hz", "bandwidth_mhz",
               "amplifier_eff", "circuit_power_w", "rx_energy_per_bit_j", "p_max_w",
               "p_vehicle_dbm", "p_vehicle_w", "p_rsu_dbm", "p_rsu_w"}
    sec = _take(sec, allowed, "radio")
    upd: dict[str, Any] = {}
    if "beta0_db" in sec:
        upd["beta0"] = db_to_linear(sec["beta0_db"])
    if "beta0" in sec:
        upd["beta0"] = float(sec["beta0"])
    if "noise_dbm_hz" in sec:
        upd["noise_density"] = tuple(dbm_to_watt(v) for v in sec["noise_dbm_hz"])
    if "noise_w_hz" in sec:
        upd["noise_density"] = tuple(float(v) for v in sec["noise_w_hz"])
    if "bandwidth_mhz" in sec:
        upd["bandwidth_total"] = float(sec["bandwidth_mhz"]) * 1e6
    for key, target in (("amplifier_eff", "amplifier_eff"), ("circuit_power_w", "circuit_power"),
                        ("rx_energy_per_bit_j", "rx_energy_per_bit"), ("p_max_w", "p_max_iotd"),
                        ("p_vehicle_w", "p_fixed_vehicle"), ("p_rsu_w", "p_fixed_rsu")):
        if key in sec:
            upd[target] = float(sec[key])
    if "p_vehicle_dbm" in sec:
        upd["p_fixed_vehicle"] = dbm_to_watt(sec["p_vehicle_dbm"])
    if "p_rsu_dbm" in sec:
        upd["p_fixed_rsu"] = dbm_to_watt(sec["p_rsu_dbm"])
    return replace(base, **upd)


def config_from_dict(data: Mapping[str, Any] | None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from parsed YAML."""
    data = dict(data or {})
    _take(data, {"scenario", "weights", "radio", "compute", "joet", "esm", "run"}, "the top level")
    upd: dict[str, Any] = {}
    sc = _take(data.get("scenario") or {}, _SCENARIO_PLAIN | set(_SCENARIO_RANGES) | {"mean_speed_kmh"},
               "scenario")
    for key in _SCENARIO_PLAIN & set(sc):
        upd[key] = sc[key]
    for key, (target, scale) in _SCENARIO_RANGES.items():
        if key in sc:
            upd[target] = _pair(sc[key], scale, key)
    if "mean_speed_kmh" in sc:
        upd["mean_speed"] = float(sc["mean_speed_kmh"]) / 3.6
    w = _take(data.get("weights") or {}, {"alpha", "beta"}, "weights")
    upd.update({k: float(v) for k, v in w.items()})
    comp = _take(data.get("compute") or {}, {"vehicle_ghz", "server_ghz", "cap_coeff"}, "compute")
    if "vehicle_ghz" in comp:
        upd["vehicle_cpu"] = float(comp["vehicle_ghz"]) * 1e9
    if "server_ghz" in comp:
        upd["server_cpu"] = float(comp["server_ghz"]) * 1e9
    if "cap_coeff" in comp:
        upd["cap_coeff"] = float(comp["cap_coeff"])
    scenario = ScenarioConfig(**upd)
    if data.get("radio"):
        scenario = replace(scenario, radio=_radio(data["radio"], scenario.radio))

    jsec = data.get("joet") or {}
    names = {f.name for f in fields(JoetConfig)} - {"dual"}
    joet = JoetConfig(**_take(jsec, names, "joet"))

    esec = _take(data.get("esm") or {}, {"rho_step", "p_levels", "f_levels", "max_k", "max_m"}, "esm")
    strides = EsmStrides(**{k: esec[k] for k in ("rho_step", "p_levels", "f_levels") if k in esec})
    esm = EsmOptions(strides, int(esec.get("max_k", MAX_K)), int(esec.get("max_m", MAX_M)))

    run = _take(data.get("run") or {}, {"schemes"}, "run")
    schemes = tuple(canonical_name(s) for s in run.get("schemes", DEFAULT_SCHEMES))
    return ExperimentConfig(scenario, joet, esm, schemes)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a YAML file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))


def parse_schemes(text: str) -> tuple[str, ...]:
    """Comma-separated scheme names, case-insensitive, order kept."""
    names = tuple(canonical_name(s) for s in text.split(",") if s.strip())
    if not names:
        raise DomainError(f"no schemes given; choose from {', '.join(SCHEMES)}")
    return names
