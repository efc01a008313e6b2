"""The 8x8 handwritten digit set (1797 images) with a seeded train/test split."""

from __future__ import annotations

import numpy as np


def load_digits_split(n_test: int = 300, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Intensities in [0, 1] of shape (n, 64) and labels, as train/test arrays."""
    from sklearn.datasets import load_digits

    d = load_digits()
    X = d.data.astype(float) / 16.0
    y = d.target.astype(np.int64)
    order = np.random.default_rng(seed).permutation(len(y))
    te, tr = order[:n_test], order[n_test:]
    return X[tr], y[tr], X[te], y[te]
