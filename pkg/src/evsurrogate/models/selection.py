"""Training, hyperparameter search and per-predictor model selection."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..circuits import CircuitSpec
from ..dataset import KINDS, EventTable
from .features import (KIND_FILTER, PREDICTORS, FeatureSchema, table_features, table_targets,
                       target_scale)
from .gbt import GbtModel
from .metrics import mape, mse
from .mlp import MlpModel
from .simple import LinearModel, MeanModel, TableModel

FAMILIES = {
    "mean": MeanModel,
    "table": TableModel,
    "linear": LinearModel,
    "gbt": GbtModel,
    "mlp": MlpModel,
}

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "mean": {},
    "table": {},
    "linear": {},
    "gbt": {"learning_rate": [0.1]},
    "mlp": {"learning_rate": [1e-3], "l2": [1e-4]},
}


class TrainingError(ValueError):
    pass


@dataclass
class TrainedModel:
    family: str
    predictor: str
    schema: FeatureSchema
    scale: float
    model: Any
    hyper: dict
    val_mse: float
    val_mape: float = float("nan")
    train_seconds: float = 0.0
    search: list[dict] = field(default_factory=list)

    def predict(self, raw: np.ndarray) -> np.ndarray:
        """Predictions in SI units for unnormalized feature rows."""
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[1] != self.schema.width:
            width = raw.shape[-1] if raw.ndim else 0
            raise ValueError(f"{self.predictor}: feature width {width} != schema width {self.schema.width}")
        if raw.shape[0] == 0:
            return np.zeros(0)
        return self.model.predict(self.schema.transform(raw)) / self.scale


def predict_batch(model: TrainedModel, features: np.ndarray) -> np.ndarray:
    return model.predict(features)


def predictor_view(predictor: str, t: EventTable) -> EventTable:
    codes = [KINDS.index(k) for k in KIND_FILTER[predictor]]
    return t.take(np.isin(t.kind, codes))


def _xy(spec: CircuitSpec, predictor: str, t: EventTable) -> tuple[np.ndarray, np.ndarray]:
    return table_features(spec, predictor, t), table_targets(predictor, t)


def train_predictor(
    family: str,
    predictor: str,
    train: EventTable,
    val: EventTable,
    spec: CircuitSpec,
    hyper: dict | None = None,
    seed: int = 0,
) -> TrainedModel:
    """Fit one family on one predictor's event kinds.

    ``train`` and ``val`` may hold any event kinds; rows outside the
    predictor's kinds are dropped here.
    """
    if family not in FAMILIES:
        raise TrainingError(f"unknown model family {family!r}")
    if predictor not in PREDICTORS:
        raise TrainingError(f"unknown predictor {predictor!r}")
    hyper = dict(hyper or {})
    tr = predictor_view(predictor, train)
    va = predictor_view(predictor, val)
    if len(tr) == 0:
        raise TrainingError(f"{predictor}: no training events of kinds {'/'.join(KIND_FILTER[predictor])}")
    X, y = _xy(spec, predictor, tr)
    Xv, yv = _xy(spec, predictor, va)
    scale = target_scale(spec, predictor)
    schema = FeatureSchema.fit(spec, predictor, X)
    t0 = time.perf_counter()
    model = FAMILIES[family](**hyper)
    model.fit(schema.transform(X), y * scale, schema.transform(Xv) if len(va) else None,
              yv * scale if len(va) else None, seed=seed)
    elapsed = time.perf_counter() - t0
    tm = TrainedModel(family, predictor, schema, scale, model, hyper, float("nan"), train_seconds=elapsed)
    if len(va):
        pv = tm.predict(Xv)
        tm.val_mse = mse(pv * scale, yv * scale)
        tm.val_mape = mape(pv, yv)
    return tm


def evaluate(model: TrainedModel, t: EventTable, spec: CircuitSpec) -> dict[str, float]:
    """MSE in reporting units and MAPE in percent on one predictor's events of ``t``."""
    v = predictor_view(model.predictor, t)
    X, y = _xy(spec, model.predictor, v)
    if len(v) == 0:
        return {"n": 0, "mse": float("nan"), "mape": float("nan")}
    p = model.predict(X)
    return {"n": len(v), "mse": mse(p * model.scale, y * model.scale), "mape": mape(p, y)}


def _rank(val_mse: float) -> float:
    return np.inf if np.isnan(val_mse) else val_mse


def grid_search(
    family: str,
    predictor: str,
    grids: dict[str, list],
    train: EventTable,
    val: EventTable,
    spec: CircuitSpec,
    base: dict | None = None,
    seed: int = 0,
) -> TrainedModel:
    """Train every grid point in ``itertools.product`` order; the earliest minimum wins."""
    names = list(grids)
    combos = list(itertools.product(*(grids[n] for n in names)))
    if not combos:
        raise TrainingError(f"empty hyperparameter grid for {family}/{predictor}")
    best: TrainedModel | None = None
    log = []
    for combo in combos:
        hyper = {**(base or {}), **dict(zip(names, combo))}
        tm = train_predictor(family, predictor, train, val, spec, hyper, seed)
        log.append({"hyper": hyper, "val_mse": tm.val_mse, "val_mape": tm.val_mape,
                    "train_seconds": tm.train_seconds})
        if best is None or _rank(tm.val_mse) < _rank(best.val_mse):
            best = tm
    assert best is not None
    best.search = log
    return best


@dataclass
class ModelBundle:
    fingerprint: str
    spec: CircuitSpec
    models: dict[str, TrainedModel]
    report: list[dict] = field(default_factory=list)

    def __getitem__(self, predictor: str) -> TrainedModel:
        return self.models[predictor]


def select_bundle(candidates: dict[str, list[TrainedModel]], spec: CircuitSpec) -> ModelBundle:
    """Keep the lowest-validation-MSE model per predictor; record every candidate."""
    models = {}
    report = []
    for predictor in PREDICTORS:
        cands = candidates.get(predictor) or []
        if not cands:
            raise TrainingError(f"no candidate models for {predictor}")
        best = cands[0]
        for c in cands:
            report.append({"predictor": predictor, "family": c.family, "hyper": c.hyper,
                           "val_mse": c.val_mse, "val_mape": c.val_mape, "train_seconds": c.train_seconds})
            if _rank(c.val_mse) < _rank(best.val_mse):
                best = c
        models[predictor] = best
    for row in report:
        row["selected"] = models[row["predictor"]].family == row["family"]
    return ModelBundle(spec.fingerprint(), spec, models, report)


def train_all(
    spec: CircuitSpec,
    train: EventTable,
    val: EventTable,
    families: list[str],
    grids: dict[str, dict[str, list]] | None = None,
    base: dict[str, dict] | None = None,
    predictors: tuple[str, ...] = PREDICTORS,
    seed: int = 0,
) -> dict[str, list[TrainedModel]]:
    """Grid-search every family for every predictor."""
    grids = grids or {}
    base = base or {}
    out: dict[str, list[TrainedModel]] = {}
    for predictor in predictors:
        out[predictor] = [
            grid_search(f, predictor, grids.get(f, DEFAULT_GRIDS[f]), train, val, spec, base.get(f), seed)
            for f in families
        ]
    return out
