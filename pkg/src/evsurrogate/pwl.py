"""Piecewise-linear stimulus files.

One file per input.  Each line holds ``<time_s> <volts>`` in decimal text with
17 significant digits, which round-trips every float64 exactly.  Blank lines and
lines starting with ``*`` or ``#`` are ignored on input.
"""

from __future__ import annotations

import io
import os
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, TextIO

import numpy as np

from .oracle import PwlSet

if TYPE_CHECKING:
    from .dataset import Testbench


class PwlFormatError(ValueError):
    pass


def format_pwl(times: np.ndarray, values: np.ndarray) -> str:
    lines = [f"{t:.17g} {v:.17g}" for t, v in zip(np.asarray(times, float), np.asarray(values, float))]
    return "\n".join(lines) + "\n"


def parse_pwl_text(text: str, name: str = "<pwl>") -> tuple[np.ndarray, np.ndarray]:
    """Parse one input's breakpoints; errors carry the 1-based line number."""
    times: list[float] = []
    values: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "*#":
            continue
        parts = line.split()
        if len(parts) != 2:
            raise PwlFormatError(f"{name}:{lineno}: expected '<time> <value>', got {raw!r}")
        try:
            t, v = float(parts[0]), float(parts[1])
        except ValueError:
            raise PwlFormatError(f"{name}:{lineno}: malformed number in {raw!r}") from None
        if not (np.isfinite(t) and np.isfinite(v)):
            raise PwlFormatError(f"{name}:{lineno}: non-finite value")
        if times and t <= times[-1]:
            raise PwlFormatError(f"{name}:{lineno}: time {t!r} not after previous {times[-1]!r}")
        times.append(t)
        values.append(v)
    if not times:
        raise PwlFormatError(f"{name}: no breakpoints")
    return np.array(times), np.array(values)


def pwl_filenames(run_id: int, dims: int) -> list[str]:
    return [f"run{run_id:06d}_in{i:02d}.pwl" for i in range(dims)]


def write_pwl(tb: "Testbench", sink: str | os.PathLike) -> list[Path]:
    """Write one file per input of ``tb`` into directory ``sink``."""
    out = Path(sink)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, fname in enumerate(pwl_filenames(tb.run_id, tb.pwl.dims)):
        p = out / fname
        p.write_text(format_pwl(tb.pwl.times, tb.pwl.values[:, i]))
        paths.append(p)
    return paths


def parse_pwl(source: Iterable[str | os.PathLike | TextIO] | str | os.PathLike | TextIO) -> PwlSet:
    """Read a :class:`PwlSet` from one or more per-input files.

    All inputs must share the same breakpoint times.
    """
    if isinstance(source, (str, os.PathLike, io.IOBase)):
        sources = [source]
    else:
        sources = list(source)
    cols = []
    times = None
    for src in sources:
        if isinstance(src, io.IOBase):
            text, name = src.read(), getattr(src, "name", "<stream>")
        else:
            text, name = Path(src).read_text(), str(src)
        t, v = parse_pwl_text(text, name)
        if times is None:
            times = t
        elif not np.array_equal(times, t):
            raise PwlFormatError(f"{name}: breakpoint times differ from the first input")
        cols.append(v)
    if times is None:
        raise PwlFormatError("no PWL sources given")
    return PwlSet(times, np.stack(cols, axis=1))
