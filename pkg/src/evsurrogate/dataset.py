"""Characterization runs, event decomposition and the labeled event dataset.

A run is a random testbench (parameters plus a clocked input waveform) pushed
through the oracle.  Its trace is cut at clock boundaries into events:

* ``E1``: a step whose input changed and whose output moved by more than the
  circuit's epsilon,
* ``E3``: a step whose input changed while the output stayed put,
* ``E2``: a maximal run of steps without input change, merged into one event.

For the crossbar an input change means new held values (the first step always
counts).  For the LIF neuron it means at least one incoming spike; a step
without spikes is idle even though the PWL value drops back to zero.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from . import oracle
from .circuits import CROSSBAR, LIF, CircuitSpec
from .oracle import PwlSet, SpikeSchedule, TransientTrace

KINDS = ("E1", "E2", "E3")
SPLITS = ("train", "val", "test")
LIF_CHUNK = 32  # runs simulated together; fixed so results never depend on parallelism


class DatasetError(ValueError):
    pass


@dataclass
class Testbench:
    run_id: int
    sampled_params: np.ndarray
    pwl: PwlSet
    seed: int
    duration: float

    @property
    def n_steps(self) -> int:
        return self.pwl.times.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Testbench):
            return NotImplemented
        return (
            self.run_id == other.run_id
            and self.seed == other.seed
            and self.duration == other.duration
            and np.array_equal(self.sampled_params, other.sampled_params)
            and self.pwl == other.pwl
        )


@dataclass
class RunResult:
    testbench: Testbench
    trace: TransientTrace


@dataclass
class EventRecord:
    kind: str
    run_id: int
    k_start: int
    k_end: int
    t_start: float
    t_end: float
    tau: float
    x: np.ndarray
    v_start: float
    v_end: float
    o_prev: float
    o: float
    params: np.ndarray
    energy: float
    energy_class: str
    latency: float | None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventRecord):
            return NotImplemented
        same = all(
            getattr(self, f) == getattr(other, f)
            for f in ("kind", "run_id", "k_start", "k_end", "t_start", "t_end", "tau", "v_start",
                      "v_end", "o_prev", "o", "energy", "energy_class", "latency")
        )
        return same and np.array_equal(self.x, other.x) and np.array_equal(self.params, other.params)


# ---------------------------------------------------------------------------
# seeds and testbenches
# ---------------------------------------------------------------------------


def run_seed(master_seed: int, run_id: int) -> int:
    """64-bit seed of one run, derived from the master seed and the run id only."""
    words = np.random.SeedSequence(int(master_seed), spawn_key=(int(run_id),)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def generate_testbench(
    spec: CircuitSpec, n_steps: int, alpha: float, seed: int, run_id: int = 0
) -> Testbench:
    if not 0 < alpha <= 1:
        raise DatasetError(f"alpha must be in (0, 1], got {alpha}")
    if n_steps < 2:
        raise DatasetError(f"n_steps must be >= 2, got {n_steps}")
    rng = np.random.default_rng(seed)
    params = spec.sample_params(rng)
    active = rng.random(n_steps) < alpha
    active[0] = True
    lo, hi = spec.input_range
    T = spec.clock_period
    if spec.kind == CROSSBAR:
        draws = rng.uniform(lo, hi, size=(n_steps, spec.input_dims))
        # static steps hold the last active draw
        src = np.maximum.accumulate(np.where(active, np.arange(n_steps), 0))
        values = draws[src]
    else:
        counts = rng.integers(0, spec.max_spikes_per_step + 1, size=n_steps)
        m = spec.max_spikes_per_step
        amps = rng.uniform(lo, hi, size=(n_steps, m))
        wts = rng.uniform(*spec.weight_range, size=(n_steps, m))
        used = np.arange(m)[None, :] < counts[:, None]
        wsum = np.sum(np.where(used, amps * wts, 0.0), axis=1)
        counts = np.where(active, counts, 0)
        wsum = np.where(active, wsum, 0.0)
        values = np.stack([wsum, counts.astype(float)], axis=1)
    times = np.arange(n_steps) * T
    return Testbench(run_id, params, PwlSet(times, values), int(seed), n_steps * T)


def input_change_flags(spec: CircuitSpec, step_inputs: np.ndarray) -> np.ndarray:
    """Per-step flag telling whether the circuit sees a new input."""
    if spec.kind == LIF:
        return step_inputs[:, 1] > 0
    flags = np.ones(step_inputs.shape[0], dtype=bool)
    flags[1:] = np.any(step_inputs[1:] != step_inputs[:-1], axis=1)
    return flags


# ---------------------------------------------------------------------------
# characterization
# ---------------------------------------------------------------------------


def _simulate_runs(
    spec: CircuitSpec, run_ids: list[int], n_steps: int, alpha: float, seed: int
) -> list[RunResult]:
    tbs = [generate_testbench(spec, n_steps, alpha, run_seed(seed, r), r) for r in run_ids]
    duration = n_steps * spec.clock_period
    if spec.kind == LIF:
        batch = oracle.LifBatch.from_spec(spec, np.stack([tb.sampled_params for tb in tbs]))
        schedules = [SpikeSchedule.from_pwl(tb.pwl, spec.clock_period, n_steps) for tb in tbs]
        traces = oracle.simulate_lif_batch(batch, schedules, duration, spec.substeps_per_clock)
    else:
        traces = [oracle.simulate(spec, tb.sampled_params, tb.pwl, duration) for tb in tbs]
    return [RunResult(tb, tr) for tb, tr in zip(tbs, traces)]


def _chunks(spec: CircuitSpec, n_runs: int) -> list[list[int]]:
    size = LIF_CHUNK if spec.kind == LIF else 1
    return [list(range(i, min(i + size, n_runs))) for i in range(0, n_runs, size)]


def _run_chunk(args: tuple) -> list[RunResult]:
    spec, ids, n_steps, alpha, seed = args
    try:
        return _simulate_runs(spec, ids, n_steps, alpha, seed)
    except Exception as exc:  # report which runs failed
        raise DatasetError(f"characterization failed in runs {ids[0]}..{ids[-1]}: {exc}") from exc


def _events_chunk(args: tuple) -> list[EventRecord]:
    spec = args[0]
    out: list[EventRecord] = []
    for res in _run_chunk(args):
        out.extend(decompose_events(res.trace, res.testbench, spec))
    return out


def _map(fn, jobs: list, parallelism: int) -> Iterator:
    if parallelism <= 1 or len(jobs) <= 1:
        return map(fn, jobs)
    ex = ProcessPoolExecutor(max_workers=parallelism)
    try:
        return iter(list(ex.map(fn, jobs)))
    finally:
        ex.shutdown()


def _check(n_runs: int, parallelism: int) -> None:
    if n_runs < 1:
        raise DatasetError("n_runs must be >= 1")
    if parallelism < 1:
        raise DatasetError("parallelism must be >= 1")


def run_characterization(
    spec: CircuitSpec, n_runs: int, n_steps: int, alpha: float, parallelism: int = 1, seed: int = 0
) -> list[RunResult]:
    """Simulate ``n_runs`` random testbenches and keep their full traces.

    Traces are large (every substep of every input); use
    :func:`characterize_events` when only the events are needed.
    """
    _check(n_runs, parallelism)
    jobs = [(spec, ids, n_steps, alpha, seed) for ids in _chunks(spec, n_runs)]
    return [r for chunk in _map(_run_chunk, jobs, parallelism) for r in chunk]


def characterize_events(
    spec: CircuitSpec, n_runs: int, n_steps: int, alpha: float, parallelism: int = 1, seed: int = 0
) -> list[EventRecord]:
    """Same runs as :func:`run_characterization`, decomposed inside the workers."""
    _check(n_runs, parallelism)
    jobs = [(spec, ids, n_steps, alpha, seed) for ids in _chunks(spec, n_runs)]
    return [e for chunk in _map(_events_chunk, jobs, parallelism) for e in chunk]


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------


def decompose_events(trace: TransientTrace, tb: Testbench, spec: CircuitSpec) -> list[EventRecord]:
    T = spec.clock_period
    if abs(trace.clock_period - T) > 1e-12 * T:
        raise DatasetError(f"trace clock {trace.clock_period} differs from spec clock {T}")
    n = tb.n_steps
    if trace.n_steps != n:
        raise DatasetError(f"trace covers {trace.n_steps} steps, testbench has {n}")
    S = trace.samples_per_clock
    xs = tb.pwl.step_values(T, n)
    changed = input_change_flags(spec, xs)
    eps = spec.output_change_epsilon
    spike = spec.output_mode == "spike"
    dt = trace.dt
    zero_x = np.zeros(spec.input_dims)
    p = np.asarray(tb.sampled_params, dtype=float)

    def energy(k0: int, k1: int) -> float:
        return float(oracle.trapezoid_energy(trace.power[k0 * S : k1 * S + 1], dt))

    events: list[EventRecord] = []
    k = 0
    while k < n:
        b0 = k * S
        if changed[k]:
            win = trace.output[b0 : b0 + S + 1]
            o_prev = float(win[0])
            o = float(win.max()) if spike else float(win[-1])
            is_e1 = abs(o - o_prev) > eps
            lat = None
            if is_e1:
                lat = float(oracle.latency_from_samples(win, dt, spec.latency_mode, eps)[0])
                if math.isnan(lat):
                    raise DatasetError(f"run {tb.run_id} step {k}: output changed but no latency found")
            events.append(EventRecord(
                kind="E1" if is_e1 else "E3", run_id=tb.run_id, k_start=k, k_end=k + 1,
                t_start=k * T, t_end=(k + 1) * T, tau=T, x=xs[k].copy(),
                v_start=float(trace.state[b0]), v_end=float(trace.state[b0 + S]),
                o_prev=o_prev, o=o, params=p, energy=energy(k, k + 1),
                energy_class="dynamic" if is_e1 else "static", latency=lat,
            ))
            k += 1
            continue
        k1 = k
        while k1 < n and not changed[k1]:
            k1 += 1
        e0, e1 = b0, k1 * S
        o_prev = float(trace.output[e0])
        o = float(trace.output[e0 : e1 + 1].max()) if spike else float(trace.output[e1])
        events.append(EventRecord(
            kind="E2", run_id=tb.run_id, k_start=k, k_end=k1, t_start=k * T, t_end=k1 * T,
            tau=(k1 - k) * T, x=zero_x, v_start=float(trace.state[e0]), v_end=float(trace.state[e1]),
            o_prev=o_prev, o=o, params=p, energy=energy(k, k1), energy_class="static", latency=None,
        ))
        k = k1
    return events


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------


@dataclass
class EventTable:
    """Columnar copy of a record list, the form the trainers consume."""

    kind: np.ndarray  # 0, 1, 2 for E1, E2, E3
    run_id: np.ndarray
    tau: np.ndarray
    x: np.ndarray
    v_start: np.ndarray
    v_end: np.ndarray
    o_prev: np.ndarray
    o: np.ndarray
    params: np.ndarray
    energy: np.ndarray
    latency: np.ndarray  # NaN where absent

    def __len__(self) -> int:
        return self.kind.shape[0]

    @classmethod
    def from_records(cls, records: list[EventRecord], spec: CircuitSpec) -> "EventTable":
        if not records:
            e = np.zeros(0)
            return cls(np.zeros(0, np.int8), np.zeros(0, np.int64), e, np.zeros((0, spec.input_dims)),
                       e, e, e, e, np.zeros((0, spec.n_params)), e, e)
        code = {k: i for i, k in enumerate(KINDS)}
        return cls(
            kind=np.array([code[r.kind] for r in records], dtype=np.int8),
            run_id=np.array([r.run_id for r in records], dtype=np.int64),
            tau=np.array([r.tau for r in records]),
            x=np.stack([r.x for r in records]),
            v_start=np.array([r.v_start for r in records]),
            v_end=np.array([r.v_end for r in records]),
            o_prev=np.array([r.o_prev for r in records]),
            o=np.array([r.o for r in records]),
            params=np.stack([r.params for r in records]),
            energy=np.array([r.energy for r in records]),
            latency=np.array([np.nan if r.latency is None else r.latency for r in records]),
        )

    def take(self, mask: np.ndarray) -> "EventTable":
        return EventTable(**{k: v[mask] for k, v in self.__dict__.items()})


@dataclass
class Dataset:
    spec: CircuitSpec
    records: list[EventRecord]
    split: dict[int, str]
    _table: EventTable | None = field(default=None, repr=False, compare=False)

    def table(self) -> EventTable:
        if self._table is None:
            self._table = EventTable.from_records(self.records, self.spec)
        return self._table

    def view(self, split: str | None = None, kinds: Iterable[str] | None = None) -> EventTable:
        t = self.table()
        mask = np.ones(len(t), dtype=bool)
        if split is not None:
            runs = np.array(sorted(r for r, s in self.split.items() if s == split), dtype=np.int64)
            mask &= np.isin(t.run_id, runs)
        if kinds is not None:
            codes = [KINDS.index(k) for k in kinds]
            mask &= np.isin(t.kind, codes)
        return t.take(mask)

    def kind_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(KINDS, 0)
        for r in self.records:
            counts[r.kind] += 1
        return counts

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.spec == other.spec and self.split == other.split and self.records == other.records


def split_runs(run_ids: Iterable[int], seed: int) -> dict[int, str]:
    """Run-wise 70/15/15 assignment.

    ``round(0.7 n)`` runs train; the remainder is halved and an odd run goes to
    validation or test by a seeded coin.
    """
    runs = sorted(set(int(r) for r in run_ids))
    n = len(runs)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x5B117,)))
    order = rng.permutation(n)
    n_train = int(math.floor(0.7 * n + 0.5))
    rest = n - n_train
    n_val = rest // 2
    if rest % 2 and rng.random() < 0.5:
        n_val += 1
    out = {}
    for rank, i in enumerate(order):
        out[runs[i]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return out


def build_dataset(events: list[EventRecord], seed: int, spec: CircuitSpec) -> Dataset:
    if not events:
        raise DatasetError("cannot build a dataset from zero events")
    records = sorted(events, key=lambda r: (r.run_id, r.k_start))
    return Dataset(spec, records, split_runs((r.run_id for r in records), seed))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def csv_header(spec: CircuitSpec) -> list[str]:
    return (
        ["kind", "run_id", "split", "k_start", "k_end", "t_start", "t_end", "tau"]
        + [f"x{i}" for i in range(spec.input_dims)]
        + ["v_start", "v_end", "o_prev", "o"]
        + [f"p{i}" for i in range(spec.n_params)]
        + ["energy", "energy_class", "latency"]
    )


def _f(v: float) -> str:
    return repr(float(v))


def export_csv(ds: Dataset, sink: str | os.PathLike | TextIO) -> None:
    own = not hasattr(sink, "write")
    fh = open(sink, "w", newline="") if own else sink
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(ds.spec))
        for r in ds.records:
            w.writerow(
                [r.kind, r.run_id, ds.split[r.run_id], r.k_start, r.k_end, _f(r.t_start), _f(r.t_end), _f(r.tau)]
                + [_f(v) for v in r.x]
                + [_f(r.v_start), _f(r.v_end), _f(r.o_prev), _f(r.o)]
                + [_f(v) for v in r.params]
                + [_f(r.energy), r.energy_class, "" if r.latency is None else _f(r.latency)]
            )
    finally:
        if own:
            fh.close()


def import_csv(source: str | os.PathLike | TextIO, spec: CircuitSpec) -> Dataset:
    own = not hasattr(source, "read")
    fh = open(source, newline="") if own else source
    try:
        rows = csv.reader(fh)
        header = next(rows, None)
        expected = csv_header(spec)
        if header != expected:
            raise DatasetError(f"CSV header does not match circuit spec: expected {expected}, got {header}")
        K, P = spec.input_dims, spec.n_params
        records = []
        split: dict[int, str] = {}
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(expected):
                raise DatasetError(f"line {lineno}: expected {len(expected)} fields, got {len(row)}")
            try:
                kind, run_id, sp = row[0], int(row[1]), row[2]
                k0, k1 = int(row[3]), int(row[4])
                t0, t1, tau = (float(v) for v in row[5:8])
                x = np.array([float(v) for v in row[8 : 8 + K]])
                j = 8 + K
                v0, v1, op, o = (float(v) for v in row[j : j + 4])
                params = np.array([float(v) for v in row[j + 4 : j + 4 + P]])
                j += 4 + P
                e, ec, lat = float(row[j]), row[j + 1], row[j + 2]
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from None
            if kind not in KINDS or sp not in SPLITS:
                raise DatasetError(f"line {lineno}: bad kind {kind!r} or split {sp!r}")
            if split.setdefault(run_id, sp) != sp:
                raise DatasetError(f"line {lineno}: run {run_id} appears in two splits")
            records.append(EventRecord(
                kind, run_id, k0, k1, t0, t1, tau, x, v0, v1, op, o, params, e, ec,
                None if lat == "" else float(lat),
            ))
    finally:
        if own:
            fh.close()
    return Dataset(spec, records, split)


def write_dataset(ds: Dataset, directory: str | os.PathLike) -> Path:
    path = Path(directory) / "events.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    export_csv(ds, path)
    return path
