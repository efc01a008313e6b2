"""Uniform mid-rise converters.

``bits`` splits ``[lo, hi]`` into ``2**bits`` equal cells; a value maps to the
code of its cell (clamped to the end codes) and a code maps back to the cell
centre.  ``bits=None`` disables quantization (values pass through, clamped).
"""

from __future__ import annotations

import numpy as np


def step_size(bits: int, lo: float, hi: float) -> float:
    return (hi - lo) / 2**bits


def adc_code(v, bits: int, lo: float, hi: float) -> np.ndarray:
    if bits < 1:
        raise ValueError("bits must be >= 1")
    q = step_size(bits, lo, hi)
    code = np.floor((np.asarray(v, dtype=float) - lo) / q)
    return np.clip(code, 0, 2**bits - 1).astype(np.int64)


def dac_value(code, bits: int, lo: float, hi: float) -> np.ndarray:
    return lo + (np.asarray(code, dtype=float) + 0.5) * step_size(bits, lo, hi)


def quantize(v, bits: int | None, lo: float, hi: float) -> np.ndarray:
    if bits is None:
        return np.clip(np.asarray(v, dtype=float), lo, hi)
    return dac_value(adc_code(v, bits, lo, hi), bits, lo, hi)
