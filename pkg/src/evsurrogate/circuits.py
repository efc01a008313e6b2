"""Circuit descriptions shared by the oracle, the dataset generator and the engine.

A :class:`CircuitSpec` names the circuit kind, its input and parameter domains,
the digital clock, and the device constants the analytical oracle uses.  The two
reference circuits are built with :func:`crossbar_row_spec` and
:func:`lif_neuron_spec`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

CROSSBAR = "crossbar_row"
LIF = "lif_neuron"
KINDS = (CROSSBAR, LIF)

CROSSBAR_DEVICE: dict[str, float] = {
    "gain": 0.25,
    "rail_low": -2.0,
    "rail_high": 2.0,
    "settle_tau": 0.2e-9,
    "unit_conductance": 50e-6,
    "load_capacitance": 500e-15,
    "bias_ref": 0.8,
    "leak_power": 10e-6,
    "read_on": 0.02,
    "read_off": 0.75,
}

LIF_DEVICE: dict[str, float] = {
    "synaptic_gain": 3e-4,
    "membrane_capacitance": 100e-15,
    "supply_voltage": 1.2,
    "spike_width": 1e-9,
    "load_capacitance": 500e-15,
    "pulse_width": 0.4e-9,
    "bias_power": 2e-6,
    "tau_leak_mid": 20e-9,
    "leak_slope": 0.1,
    "adaptation_strength": 20.0,
    "v_max": 1.5,
}

LIF_KNOBS = ("v_leak", "v_th", "v_adap", "v_refrac")


@dataclass(frozen=True)
class ParamDomain:
    """Sampling domain of one tunable parameter.

    ``kind == "set"`` draws uniformly from ``values``; ``kind == "interval"``
    draws uniformly from ``[values[0], values[1]]``.
    """

    name: str
    kind: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("set", "interval"):
            raise ValueError(f"parameter {self.name}: unknown domain kind {self.kind!r}")
        if self.kind == "interval":
            if len(self.values) != 2 or not self.values[0] <= self.values[1]:
                raise ValueError(f"parameter {self.name}: interval needs (low, high) with low <= high")
        elif not self.values:
            raise ValueError(f"parameter {self.name}: empty value set")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "set":
            return float(self.values[int(rng.integers(len(self.values)))])
        lo, hi = self.values
        return float(rng.uniform(lo, hi)) if hi > lo else float(lo)

    def contains(self, value: float) -> bool:
        if self.kind == "set":
            return float(value) in self.values
        lo, hi = self.values
        return lo <= value <= hi


@dataclass(frozen=True)
class CircuitSpec:
    kind: str
    input_dims: int
    input_range: tuple[float, float]
    param_schema: tuple[ParamDomain, ...]
    clock_period: float
    output_change_epsilon: float
    max_spikes_per_step: int = 0
    weight_range: tuple[float, float] = (-1.0, 1.0)
    substeps_per_clock: int = 100
    device: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown circuit kind {self.kind!r}; expected one of {KINDS}")
        lo, hi = self.input_range
        if not lo < hi:
            raise ValueError(f"input_range low {lo} must be below high {hi}")
        if self.output_change_epsilon <= 0:
            raise ValueError("output_change_epsilon must be positive")
        if self.clock_period <= 0:
            raise ValueError("clock_period must be positive")
        if self.input_dims < 1:
            raise ValueError("input_dims must be >= 1")
        if self.substeps_per_clock < 10:
            raise ValueError("substeps_per_clock must be >= 10")
        if self.kind == LIF and self.max_spikes_per_step < 1:
            raise ValueError("LIF spec needs max_spikes_per_step >= 1")

    @property
    def n_params(self) -> int:
        return len(self.param_schema)

    @property
    def param_names(self) -> list[str]:
        return [d.name for d in self.param_schema]

    @property
    def stateful(self) -> bool:
        return self.kind == LIF

    @property
    def output_mode(self) -> str:
        """``"level"`` outputs settle to a value; ``"spike"`` outputs emit pulses."""
        return "spike" if self.kind == LIF else "level"

    @property
    def latency_mode(self) -> str:
        return "spike_peak" if self.kind == LIF else "rise90"

    @property
    def output_range(self) -> tuple[float, float]:
        if self.kind == LIF:
            return (0.0, self.device["v_max"])
        return (self.device["rail_low"], self.device["rail_high"])

    @property
    def state_range(self) -> tuple[float, float]:
        if self.kind == LIF:
            return (0.0, self.device["v_max"])
        return (0.0, 0.0)

    @property
    def rest_output(self) -> float:
        return 0.0

    @property
    def decision_threshold(self) -> float:
        """Output-change threshold used by the inference engine.

        Level outputs use the characterization epsilon.  Spiking outputs are
        compared against mid-supply so that regression noise around the rest
        level is not mistaken for a spike.
        """
        if self.output_mode == "spike":
            return max(self.output_change_epsilon, 0.5 * self.device["supply_voltage"])
        return self.output_change_epsilon

    @property
    def spike_threshold(self) -> float:
        return 0.5 * self.device.get("supply_voltage", 0.0)

    @property
    def report_units(self) -> dict[str, tuple[str, float]]:
        """Display unit and SI multiplier for each target quantity."""
        if self.kind == LIF:
            return {"latency": ("ns", 1e9), "energy": ("pJ", 1e12), "volt": ("V", 1.0)}
        return {"latency": ("ps", 1e12), "energy": ("fJ", 1e15), "volt": ("V", 1.0)}

    def with_(self, **changes: Any) -> "CircuitSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["input_range"] = list(self.input_range)
        d["weight_range"] = list(self.weight_range)
        d["param_schema"] = [
            {"name": p.name, "kind": p.kind, "values": list(p.values)} for p in self.param_schema
        ]
        d["device"] = dict(sorted(self.device.items()))
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CircuitSpec":
        d = dict(d)
        d["input_range"] = tuple(d["input_range"])
        d["weight_range"] = tuple(d.get("weight_range", (-1.0, 1.0)))
        d["param_schema"] = tuple(
            ParamDomain(p["name"], p["kind"], tuple(float(v) for v in p["values"]))
            for p in d["param_schema"]
        )
        d["device"] = {k: float(v) for k, v in d.get("device", {}).items()}
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def sample_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([d.sample(rng) for d in self.param_schema], dtype=float)


def crossbar_row_spec(
    k: int = 32,
    clock_period: float = 4e-9,
    input_range: tuple[float, float] = (-0.8, 0.8),
    output_change_epsilon: float = 0.04,
    weight_values: tuple[float, ...] = (-1.0, 0.0, 1.0),
    **device: float,
) -> CircuitSpec:
    """K-input crossbar row at 250 MHz with ternary weights and bias."""
    schema = tuple(ParamDomain(f"w{i}", "set", weight_values) for i in range(k))
    schema += (ParamDomain("bias", "set", weight_values),)
    return CircuitSpec(
        kind=CROSSBAR,
        input_dims=k,
        input_range=input_range,
        param_schema=schema,
        clock_period=clock_period,
        output_change_epsilon=output_change_epsilon,
        device={**CROSSBAR_DEVICE, **device},
    )


def lif_neuron_spec(
    clock_period: float = 5e-9,
    knob_range: tuple[float, float] = (0.5, 0.8),
    input_range: tuple[float, float] = (0.0, 1.5),
    max_spikes_per_step: int = 5,
    output_change_epsilon: float = 0.015,
    **device: float,
) -> CircuitSpec:
    """LIF neuron at 200 MHz with four voltage knobs.

    Per-step input is the pair (summed weighted spike amplitude, spike count).
    """
    schema = tuple(ParamDomain(name, "interval", tuple(knob_range)) for name in LIF_KNOBS)
    return CircuitSpec(
        kind=LIF,
        input_dims=2,
        input_range=input_range,
        param_schema=schema,
        clock_period=clock_period,
        output_change_epsilon=output_change_epsilon,
        max_spikes_per_step=max_spikes_per_step,
        device={**LIF_DEVICE, "knob_low": knob_range[0], "knob_high": knob_range[1], **device},
    )
