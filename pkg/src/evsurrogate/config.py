"""Run configuration: strict schema, defaults, and named seeds."""

from __future__ import annotations

import copy
import zlib
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .circuits import CROSSBAR, LIF, CircuitSpec, crossbar_row_spec, lif_neuron_spec
from .models.selection import FAMILIES


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": "out",
    "circuit": {
        "kind": LIF,
        "clock_period": None,
        "output_change_epsilon": None,
        "input_range": None,
        "max_spikes_per_step": None,  # LIF only
        "knob_range": None,  # LIF only
        "k": None,  # crossbar only
        "substeps_per_clock": 100,
        "device": {},
    },
    "generation": {"n_runs": 200, "n_steps": 100, "alpha": 0.8, "parallelism": 1},
    "training": {
        "families": list(FAMILIES),
        "grids": {},
        "mlp_max_epochs": 500,
        "gbt_trees": 300,
    },
    "simulation": {
        "workload": "snn",
        "n_images": 200,
        "dims": [64, 32, 10],
        "timesteps": 100,
        "input_rate": 0.12,
        "mode": "predicted_state",
        "adc_bits": 8,
        "dac_bits": 8,
        "act_slope": 2.0,
        "act_offset": 0.0,
        "sizes": [10, 100, 1000],
        "bench_steps": 100,
        "bench_repeats": 1,
        "study_neurons": 500,
        "study_steps": 100,
        "alpha": 0.8,
    },
}

_LIF_ONLY = ("max_spikes_per_step", "knob_range")
_CROSSBAR_ONLY = ("k",)


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key not in ("device", "grids"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _positive_int(cfg: dict, section: str, key: str, minimum: int = 1) -> None:
    v = cfg[section][key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{section}.{key} must be an integer >= {minimum}, got {v!r}")


def _unit_interval(cfg: dict, section: str, key: str) -> None:
    v = cfg[section][key]
    if not isinstance(v, (int, float)) or not 0 < v <= 1:
        raise ConfigError(f"{section}.{key} must be in (0, 1], got {v!r}")


def validate(cfg: dict) -> dict:
    """Check every field; returns ``cfg`` unchanged."""
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    c = cfg["circuit"]
    if c["kind"] not in (CROSSBAR, LIF):
        raise ConfigError(f"circuit.kind must be {CROSSBAR!r} or {LIF!r}, got {c['kind']!r}")
    wrong = _CROSSBAR_ONLY if c["kind"] == LIF else _LIF_ONLY
    for key in wrong:
        if c[key] is not None:
            raise ConfigError(f"circuit.{key} does not apply to {c['kind']}")
    if not isinstance(c["device"], dict):
        raise ConfigError("circuit.device must be a mapping")
    for section, key in (("generation", "n_runs"), ("generation", "n_steps"), ("generation", "parallelism"),
                         ("training", "mlp_max_epochs"), ("training", "gbt_trees"),
                         ("simulation", "n_images"), ("simulation", "timesteps"),
                         ("simulation", "bench_steps"), ("simulation", "bench_repeats"),
                         ("simulation", "study_neurons"), ("simulation", "study_steps")):
        _positive_int(cfg, section, key)
    if cfg["generation"]["n_steps"] < 2:
        raise ConfigError("generation.n_steps must be >= 2")
    _unit_interval(cfg, "generation", "alpha")
    _unit_interval(cfg, "simulation", "alpha")
    _unit_interval(cfg, "simulation", "input_rate")
    t = cfg["training"]
    if not t["families"] or any(f not in FAMILIES for f in t["families"]):
        raise ConfigError(f"training.families must be a non-empty subset of {list(FAMILIES)}")
    if not isinstance(t["grids"], dict):
        raise ConfigError("training.grids must be a mapping")
    for fam, grid in t["grids"].items():
        if fam not in FAMILIES:
            raise ConfigError(f"training.grids: unknown family {fam!r}")
        if not isinstance(grid, dict) or any(not isinstance(v, list) or not v for v in grid.values()):
            raise ConfigError(f"training.grids.{fam} must map names to non-empty lists")
    s = cfg["simulation"]
    if s["workload"] not in ("ann", "snn"):
        raise ConfigError(f"simulation.workload must be 'ann' or 'snn', got {s['workload']!r}")
    if s["mode"] not in ("predicted_state", "oracle_state"):
        raise ConfigError(f"simulation.mode must be predicted_state or oracle_state, got {s['mode']!r}")
    dims = s["dims"]
    if not isinstance(dims, list) or len(dims) < 2 or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in dims):
        raise ConfigError(f"simulation.dims must list at least two positive layer widths, got {dims!r}")
    sizes = s["sizes"]
    if not isinstance(sizes, list) or not sizes or any(not isinstance(n, int) or n < 1 for n in sizes):
        raise ConfigError("simulation.sizes must be a non-empty list of positive integers")
    if sizes != sorted(sizes):
        raise ConfigError("simulation.sizes must be ascending")
    for key in ("adc_bits", "dac_bits"):
        b = s[key]
        if b is not None and (isinstance(b, bool) or not isinstance(b, int) or b < 1):
            raise ConfigError(f"simulation.{key} must be a positive integer or null")
    try:
        circuit_spec(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"circuit: {exc}") from None
    return cfg


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> dict:
    """Defaults, then the YAML/JSON file at ``path``, then ``overrides``; validated."""
    user: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            user = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    cfg = _merge(DEFAULTS, user, "")
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    return validate(cfg)


def dump_config(cfg: dict, sink: str | Path) -> None:
    Path(sink).write_text(yaml.safe_dump(cfg, sort_keys=True))


def circuit_spec(cfg: dict) -> CircuitSpec:
    c = cfg["circuit"]
    kw: dict[str, Any] = {k: c[k] for k in ("clock_period", "output_change_epsilon") if c[k] is not None}
    if c["input_range"] is not None:
        kw["input_range"] = tuple(c["input_range"])
    if c["kind"] == LIF:
        if c["max_spikes_per_step"] is not None:
            kw["max_spikes_per_step"] = c["max_spikes_per_step"]
        if c["knob_range"] is not None:
            kw["knob_range"] = tuple(c["knob_range"])
        spec = lif_neuron_spec(**kw, **c["device"])
    else:
        if c["k"] is not None:
            kw["k"] = c["k"]
        spec = crossbar_row_spec(**kw, **c["device"])
    return spec.with_(substeps_per_clock=c["substeps_per_clock"])


def seed_for(master: int, name: str) -> int:
    """Sub-seed for one named stage, independent of every other stage."""
    ss = np.random.SeedSequence(int(master), spawn_key=(zlib.crc32(name.encode()),))
    w = ss.generate_state(2, np.uint32)
    return int(w[0]) | (int(w[1]) << 32)
