"""Model bundle file: 8 magic bytes, a 4-byte little-endian version, then UTF-8 JSON.

Arrays are stored as base64 of their raw little-endian bytes and floats via
``repr``, so a loaded bundle predicts bit-identically to the saved one.
"""

from __future__ import annotations

import base64
import json
import os
import struct
from pathlib import Path
from typing import Any

import numpy as np

from ..circuits import CircuitSpec
from .features import FeatureSchema
from .selection import FAMILIES, ModelBundle, TrainedModel

MAGIC = b"EVSURRO\x00"
VERSION = 1


class BundleError(ValueError):
    pass


def _enc(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        a = np.ascontiguousarray(obj)
        dt = a.dtype.newbyteorder("<")
        return {"__nd__": dt.str, "shape": list(a.shape),
                "data": base64.b64encode(a.astype(dt).tobytes()).decode("ascii")}
    if isinstance(obj, dict):
        return {str(k): _enc(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_enc(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _dec(obj: Any) -> Any:
    if isinstance(obj, dict):
        if "__nd__" in obj:
            raw = base64.b64decode(obj["data"])
            return np.frombuffer(raw, dtype=np.dtype(obj["__nd__"])).reshape(obj["shape"]).copy()
        return {k: _dec(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_dec(v) for v in obj]
    return obj


def _model_doc(m: TrainedModel) -> dict:
    return {
        "family": m.family, "predictor": m.predictor, "schema": m.schema.to_dict(), "scale": m.scale,
        "hyper": m.hyper, "val_mse": m.val_mse, "val_mape": m.val_mape,
        "train_seconds": m.train_seconds, "state": m.model.state(),
    }


def _model_from_doc(d: dict) -> TrainedModel:
    cls = FAMILIES[d["family"]]
    return TrainedModel(
        family=d["family"], predictor=d["predictor"], schema=FeatureSchema.from_dict(d["schema"]),
        scale=float(d["scale"]), model=cls.from_state(d["state"]), hyper=d["hyper"],
        val_mse=float(d["val_mse"]), val_mape=float(d["val_mape"]), train_seconds=float(d["train_seconds"]),
    )


def save_bundle(bundle: ModelBundle, sink: str | os.PathLike, timings: bool = True) -> None:
    """Write ``bundle``; ``timings=False`` stores training times as 0 so the file is reproducible."""
    models = {p: _model_doc(m) for p, m in bundle.models.items()}
    report = bundle.report
    if not timings:
        for d in models.values():
            d["train_seconds"] = 0.0
        report = [{**r, "train_seconds": 0.0} for r in report]
    doc = {
        "fingerprint": bundle.fingerprint,
        "spec": bundle.spec.to_dict(),
        "models": models,
        "report": report,
    }
    body = json.dumps(_enc(doc), sort_keys=True).encode("utf-8")
    Path(sink).write_bytes(MAGIC + struct.pack("<I", VERSION) + body)


def load_bundle(source: str | os.PathLike, spec: CircuitSpec | None = None) -> ModelBundle:
    """Read a bundle; with ``spec`` given, its fingerprint must match the file's."""
    blob = Path(source).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise BundleError(f"{source}: not a model bundle (bad magic {blob[:len(MAGIC)]!r})")
    (version,) = struct.unpack("<I", blob[len(MAGIC) : len(MAGIC) + 4])
    if version != VERSION:
        raise BundleError(f"{source}: bundle version {version}, this library reads version {VERSION}")
    try:
        doc = _dec(json.loads(blob[len(MAGIC) + 4 :].decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"{source}: corrupt bundle body: {exc}") from None
    file_spec = CircuitSpec.from_dict(doc["spec"])
    if file_spec.fingerprint() != doc["fingerprint"]:
        raise BundleError(f"{source}: stored fingerprint {doc['fingerprint']} does not match its spec "
                          f"({file_spec.fingerprint()})")
    if spec is not None and spec.fingerprint() != doc["fingerprint"]:
        raise BundleError(f"{source}: bundle fingerprint {doc['fingerprint']} does not match circuit "
                          f"spec fingerprint {spec.fingerprint()}")
    try:
        models = {p: _model_from_doc(d) for p, d in doc["models"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"{source}: invalid model in bundle: {exc}") from None
    return ModelBundle(doc["fingerprint"], file_spec, models, doc.get("report", []))
