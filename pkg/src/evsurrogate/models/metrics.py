from __future__ import annotations

import numpy as np

MAPE_FLOOR = 1e-15


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float).reshape(-1)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise ValueError("metrics need at least one value")
    return p, t


def mse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean((p - t) ** 2))


def mape(pred, truth, floor: float = MAPE_FLOOR) -> float:
    """Mean absolute percentage error over targets with ``|truth| >= floor``.

    NaN when every target falls below the floor.
    """
    p, t = _pair(pred, truth)
    keep = np.abs(t) >= floor
    if not keep.any():
        return float("nan")
    return float(100.0 * np.mean(np.abs(p[keep] - t[keep]) / np.abs(t[keep])))
