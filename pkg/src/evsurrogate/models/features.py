"""Feature layout, normalization and targets of the five predictors.

Every predictor sees ``(x..., v_start, tau, p...)``; the dynamic-energy and
latency predictors also see the output at the start of the event.  Idle events
carry an all-zero ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..circuits import CircuitSpec
from ..dataset import KINDS, EventRecord, EventTable

M_O, M_V, M_E_D, M_E_S, M_L = "M_O", "M_V", "M_E_D", "M_E_S", "M_L"
PREDICTORS = (M_O, M_V, M_E_D, M_E_S, M_L)

# event kinds each predictor trains on
KIND_FILTER: dict[str, tuple[str, ...]] = {
    M_O: ("E1", "E3"),
    M_V: ("E1", "E2", "E3"),
    M_E_D: ("E1",),
    M_E_S: ("E2", "E3"),
    M_L: ("E1",),
}

QUANTITY = {M_O: "volt", M_V: "volt", M_E_D: "energy", M_E_S: "energy", M_L: "latency"}


def uses_o_prev(predictor: str) -> bool:
    return predictor in (M_E_D, M_L)


def feature_names(spec: CircuitSpec, predictor: str) -> list[str]:
    names = [f"x{i}" for i in range(spec.input_dims)] + ["v_start", "tau"]
    names += [f"p_{n}" for n in spec.param_names]
    if uses_o_prev(predictor):
        names.append("o_prev")
    return names


def raw_features(
    spec: CircuitSpec,
    predictor: str,
    x: np.ndarray,
    v_start: np.ndarray,
    tau: np.ndarray,
    params: np.ndarray,
    o_prev: np.ndarray | None = None,
) -> np.ndarray:
    """Unnormalized feature matrix from column arrays."""
    x = np.asarray(x, dtype=float).reshape(-1, spec.input_dims)
    n = x.shape[0]
    cols = [
        x,
        np.broadcast_to(np.asarray(v_start, dtype=float).reshape(-1, 1), (n, 1)),
        np.broadcast_to(np.asarray(tau, dtype=float).reshape(-1, 1), (n, 1)),
        np.broadcast_to(np.asarray(params, dtype=float).reshape(-1, spec.n_params), (n, spec.n_params)),
    ]
    if uses_o_prev(predictor):
        if o_prev is None:
            raise ValueError(f"{predictor} needs the previous output")
        cols.append(np.broadcast_to(np.asarray(o_prev, dtype=float).reshape(-1, 1), (n, 1)))
    return np.concatenate(cols, axis=1)


def table_features(spec: CircuitSpec, predictor: str, t: EventTable) -> np.ndarray:
    x = np.where((t.kind == KINDS.index("E2"))[:, None], 0.0, t.x)
    return raw_features(spec, predictor, x, t.v_start, t.tau, t.params, t.o_prev)


def table_targets(predictor: str, t: EventTable) -> np.ndarray:
    """Target column in SI units."""
    if predictor == M_O:
        return t.o.copy()
    if predictor == M_V:
        return t.v_end.copy()
    if predictor in (M_E_D, M_E_S):
        return t.energy.copy()
    return t.latency.copy()


def target_scale(spec: CircuitSpec, predictor: str) -> float:
    """Multiplier from SI to the reporting unit the model trains in."""
    return spec.report_units[QUANTITY[predictor]][1]


@dataclass
class FeatureSchema:
    predictor: str
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @property
    def width(self) -> int:
        return len(self.names)

    @classmethod
    def fit(cls, spec: CircuitSpec, predictor: str, raw: np.ndarray) -> "FeatureSchema":
        names = tuple(feature_names(spec, predictor))
        if raw.shape[1] != len(names):
            raise ValueError(f"{predictor}: expected {len(names)} features, got {raw.shape[1]}")
        if not raw.shape[0]:
            return cls(predictor, names, np.zeros(len(names)), np.ones(len(names)))
        # exact test: a constant column's computed std is round-off, not zero
        const = np.ptp(raw, axis=0) == 0
        mean = np.where(const, raw[0], raw.mean(axis=0))
        std = np.where(const, 1.0, raw.std(axis=0))
        return cls(predictor, names, mean, std)

    def transform(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[1] != self.width:
            raise ValueError(f"{self.predictor}: feature width {raw.shape[-1]} != schema width {self.width}")
        return (raw - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"predictor": self.predictor, "names": list(self.names), "mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(d["predictor"], tuple(d["names"]), np.asarray(d["mean"]), np.asarray(d["std"]))


def build_features(record: EventRecord, schema: FeatureSchema, spec: CircuitSpec) -> np.ndarray:
    """Normalized feature vector of one record."""
    x = np.zeros(spec.input_dims) if record.kind == "E2" else record.x
    raw = raw_features(spec, schema.predictor, x, record.v_start, record.tau, record.params, record.o_prev)
    return schema.transform(raw)[0]
