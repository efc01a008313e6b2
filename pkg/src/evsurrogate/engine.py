"""Batched, clocked inference over many circuit instances.

Each call to :func:`step` handles the set ``S`` of circuits whose input changes
at clock boundary ``t``:

1. Circuits that sat idle since their last update get one merged idle event
   ``(x=0, v', tau=t - t' - T, p)``; the state and static-energy predictors run
   once on that batch, updating ``v'`` and seeding the energy.
2. The input batch ``(x, v', T, p)`` goes through all five predictors; the
   dynamic-energy and latency predictors also see the previous output.
3. A circuit whose predicted output moved by more than the circuit's decision
   threshold is charged dynamic energy and reports latency; the others are
   charged static energy and report latency 0.
4. ``t'`` becomes ``t`` and ``v'`` the predicted state.

Circuits outside ``S`` are not touched; :func:`flush` charges their trailing
idle time at the end of a simulation.  Time is kept as integer step indices.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from . import oracle
from .circuits import CROSSBAR, LIF, CircuitSpec
from .models.features import M_E_D, M_E_S, M_L, M_O, M_V, raw_features
from .models.selection import ModelBundle


class EngineError(ValueError):
    pass


class Predictors(Protocol):
    spec: CircuitSpec

    def idle(self, v: np.ndarray, tau: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """State at the end of an idle span and its energy."""

    def active(self, x: np.ndarray, v: np.ndarray, tau: np.ndarray, P: np.ndarray,
               o_prev: np.ndarray) -> dict[str, np.ndarray]:
        """Keys ``o``, ``v``, ``e_dyn``, ``lat``, ``e_stat`` for one input step."""


class BundlePredictors:
    """Adapter running a trained bundle's five models."""

    def __init__(self, bundle: ModelBundle) -> None:
        self.bundle = bundle
        self.spec = bundle.spec

    def _run(self, name, x, v, tau, P, o_prev=None) -> np.ndarray:
        feats = raw_features(self.spec, name, x, v, tau, P, o_prev)
        return self.bundle[name].predict(feats)

    def idle(self, v, tau, P):
        x = np.zeros((v.shape[0], self.spec.input_dims))
        return self._run(M_V, x, v, tau, P), self._run(M_E_S, x, v, tau, P)

    def active(self, x, v, tau, P, o_prev):
        return {
            "e_dyn": self._run(M_E_D, x, v, tau, P, o_prev),
            "lat": self._run(M_L, x, v, tau, P, o_prev),
            "o": self._run(M_O, x, v, tau, P),
            "v": self._run(M_V, x, v, tau, P),
            "e_stat": self._run(M_E_S, x, v, tau, P),
        }

    def respond(self, x, v, tau, P, o_prev, threshold: float) -> dict[str, np.ndarray]:
        """Like :meth:`active` but runs the energy and latency models only where needed.

        Dynamic energy and latency are predicted for rows whose output changes
        by more than ``threshold``, static energy for the others; skipped
        entries are NaN.  Predictions are row-independent, so the evaluated
        entries equal those of :meth:`active`.
        """
        o = self._run(M_O, x, v, tau, P)
        out = {"o": o, "v": self._run(M_V, x, v, tau, P)}
        ch = np.abs(o - o_prev) > threshold
        for key, name, rows in (("e_dyn", M_E_D, ch), ("lat", M_L, ch), ("e_stat", M_E_S, ~ch)):
            vals = np.full(o.shape[0], np.nan)
            idx = np.flatnonzero(rows)
            if idx.size:
                vals[idx] = self._run(name, x[idx], v[idx], tau[idx], P[idx], o_prev[idx])
            out[key] = vals
        return out


class OraclePredictors:
    """Answers every query by simulating the event's exact conditions."""

    def __init__(self, spec: CircuitSpec) -> None:
        if spec.kind not in (CROSSBAR, LIF):
            raise EngineError(f"no oracle for circuit kind {spec.kind}")
        self.spec = spec
        self.S = spec.substeps_per_clock

    def _steps(self, tau: np.ndarray) -> np.ndarray:
        return np.rint(np.asarray(tau) / self.spec.clock_period).astype(np.int64)

    def idle(self, v, tau, P):
        n = self._steps(tau)
        if self.spec.kind == CROSSBAR:
            leak = self.spec.device["leak_power"]
            return np.zeros_like(v, dtype=float), leak * n * self.spec.clock_period
        batch = oracle.LifBatch.from_spec(self.spec, P)
        v = np.asarray(v, dtype=float).copy()
        energy = np.zeros(v.shape[0])
        zeros = np.zeros(v.shape[0])
        for k in range(int(n.max()) if n.size else 0):
            rows = np.flatnonzero(n > k)
            st = oracle.lif_clock_step(batch.take(rows), v[rows], zeros[rows], zeros[rows].astype(np.int64), self.S)
            energy[rows] += oracle.trapezoid_energy(st.power, self.spec.clock_period / self.S)
            v[rows] = st.state[:, -1]
        return v, energy

    def active(self, x, v, tau, P, o_prev):
        spec = self.spec
        dt = spec.clock_period / self.S
        eps = spec.output_change_epsilon
        if spec.kind == CROSSBAR:
            proto = oracle.crossbar_params(spec, P[0]) if len(P) else None
            if proto is None:
                empty = np.zeros(0)
                return {"o": empty, "v": empty, "e_dyn": empty, "lat": empty, "e_stat": empty}
            out, power = oracle.crossbar_read_steps(
                proto, o_prev, x, weights=P[:, : spec.input_dims], bias=P[:, spec.input_dims], substeps=self.S
            )
            o = out[:, -1]
            v_end = np.zeros(x.shape[0])
        else:
            batch = oracle.LifBatch.from_spec(spec, P)
            st = oracle.lif_clock_step(batch, v, x[:, 0], np.rint(x[:, 1]).astype(np.int64), self.S)
            out, power = st.output, st.power
            o = out.max(axis=1)
            v_end = st.state[:, -1]
        energy = oracle.trapezoid_energy(power, dt)
        lat = oracle.latency_from_samples(out, dt, spec.latency_mode, eps)
        return {"o": o, "v": v_end, "e_dyn": energy, "lat": np.nan_to_num(lat, nan=0.0), "e_stat": energy}


def oracle_predictors(spec: CircuitSpec) -> OraclePredictors:
    return OraclePredictors(spec)


def as_predictors(obj: ModelBundle | Predictors) -> Predictors:
    return BundlePredictors(obj) if isinstance(obj, ModelBundle) else obj


@dataclass
class EngineState:
    spec: CircuitSpec
    params: np.ndarray
    last_step: np.ndarray
    state: np.ndarray
    output: np.ndarray
    negative_energy_clamps: int = 0
    negative_latency_clamps: int = 0
    log: "StepLog | None" = None

    @classmethod
    def create(cls, spec: CircuitSpec, params: np.ndarray, start_step: int = 0,
               initial_state: np.ndarray | float | None = None) -> "EngineState":
        P = np.atleast_2d(np.asarray(params, dtype=float))
        if P.shape[1] != spec.n_params:
            raise EngineError(f"expected {spec.n_params} parameters per circuit, got {P.shape[1]}")
        n = P.shape[0]
        v = np.zeros(n) if initial_state is None else np.broadcast_to(np.asarray(initial_state, float), (n,)).copy()
        return cls(spec, P, np.full(n, start_step - 1, dtype=np.int64), v, np.full(n, spec.rest_output))

    @property
    def n_circuits(self) -> int:
        return self.params.shape[0]

    @property
    def clock_period(self) -> float:
        return self.spec.clock_period

    @property
    def last_update_time(self) -> np.ndarray:
        return self.last_step * self.spec.clock_period


@dataclass
class StepResult:
    circuits: np.ndarray
    energy: np.ndarray
    latency: np.ndarray
    output: np.ndarray
    changed: np.ndarray
    idle_energy: np.ndarray
    state: np.ndarray
    raw: dict[str, np.ndarray] | None = None  # unclamped predictor outputs


@dataclass
class StepLog:
    rows: list[tuple] = field(default_factory=list)

    def write_csv(self, sink: str | os.PathLike) -> None:
        with open(sink, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "circuit", "path", "energy", "latency", "output", "state"])
            for r in self.rows:
                w.writerow([repr(r[0]), r[1], r[2]] + [repr(float(v)) for v in r[3:]])


def step_index(spec: CircuitSpec, t: float) -> int:
    k = int(round(t / spec.clock_period))
    if abs(t - k * spec.clock_period) > 1e-9 * spec.clock_period:
        raise EngineError(f"time {t!r} is not a clock boundary")
    return k


def _clamp_nonneg(a: np.ndarray) -> tuple[np.ndarray, int]:
    neg = a < 0
    return (np.where(neg, 0.0, a), int(neg.sum()))


def _idle_update(state: EngineState, idx: np.ndarray, k_end: int, pred: Predictors) -> np.ndarray:
    """Charge the idle time of circuits ``idx`` up to (excluding) step ``k_end``."""
    gap = k_end - 1 - state.last_step[idx]
    e = np.zeros(idx.shape[0])
    rows = np.flatnonzero(gap > 0)
    if rows.size:
        ids = idx[rows]
        tau = gap[rows] * state.spec.clock_period
        v_new, e_idle = pred.idle(state.state[ids], tau, state.params[ids])
        e_idle, n_neg = _clamp_nonneg(np.asarray(e_idle, dtype=float))
        state.negative_energy_clamps += n_neg
        lo, hi = state.spec.state_range
        state.state[ids] = np.clip(v_new, lo, hi)
        e[rows] = e_idle
        if state.spec.output_mode == "spike":
            state.output[ids] = state.spec.rest_output
    return e


def step_k(
    state: EngineState,
    k: int,
    S: np.ndarray | list[int],
    X: np.ndarray,
    predictors: ModelBundle | Predictors,
    prev_outputs: np.ndarray | None = None,
    state_at_k: np.ndarray | None = None,
    full: bool = False,
) -> StepResult:
    """One clock boundary given as an integer step index.

    ``state_at_k`` overrides the carried state of the circuits in ``S`` after
    the idle update, e.g. with a reference simulator's state.  ``full``
    evaluates every predictor on every circuit so ``StepResult.raw`` has no
    gaps; otherwise the unused energy or latency entries may be NaN.
    """
    pred = as_predictors(predictors)
    spec = state.spec
    S = np.asarray(S, dtype=np.int64).reshape(-1)
    X = np.asarray(X, dtype=float).reshape(S.shape[0], spec.input_dims)
    if S.size and (S.min() < 0 or S.max() >= state.n_circuits):
        raise EngineError(f"circuit id out of range 0..{state.n_circuits - 1}")
    if np.unique(S).size != S.size:
        raise EngineError("circuit ids in one step must be distinct")
    late = S[state.last_step[S] >= k]
    if late.size:
        n = int(late[0])
        raise EngineError(
            f"circuit {n}: step at t={k * spec.clock_period!r} is not after its last update "
            f"t'={state.last_step[n] * spec.clock_period!r}"
        )
    e = _idle_update(state, S, k, pred)
    e_idle = e.copy()
    if state_at_k is not None:
        state.state[S] = np.asarray(state_at_k, dtype=float).reshape(S.shape[0])

    o_prev = state.output[S] if prev_outputs is None else np.asarray(prev_outputs, dtype=float).reshape(-1)
    v = state.state[S]
    P = state.params[S]
    tau = np.full(S.shape[0], spec.clock_period)
    if S.size and not full and hasattr(pred, "respond"):
        r = pred.respond(X, v, tau, P, o_prev, spec.decision_threshold)
    elif S.size:
        r = pred.active(X, v, tau, P, o_prev)
    else:
        r = {k_: np.zeros(0) for k_ in ("o", "v", "e_dyn", "lat", "e_stat")}
    o_hat = np.asarray(r["o"], dtype=float)
    changed = np.abs(o_hat - o_prev) > spec.decision_threshold
    e_dyn, n1 = _clamp_nonneg(np.asarray(r["e_dyn"], dtype=float))
    e_stat, n2 = _clamp_nonneg(np.asarray(r["e_stat"], dtype=float))
    state.negative_energy_clamps += n1 + n2
    lat, n3 = _clamp_nonneg(np.asarray(r["lat"], dtype=float))
    state.negative_latency_clamps += n3
    e = e + np.where(changed, e_dyn, e_stat)
    latency = np.where(changed, lat, 0.0)
    lo, hi = spec.state_range
    state.state[S] = np.clip(np.asarray(r["v"], dtype=float), lo, hi)
    state.last_step[S] = k
    state.output[S] = o_hat if spec.output_mode == "level" else spec.rest_output
    if state.log is not None:
        t = k * spec.clock_period
        for j, n in enumerate(S):
            if e_idle[j] > 0:
                state.log.rows.append((t, int(n), "idle", e_idle[j], 0.0, o_prev[j], np.nan))
            state.log.rows.append((t, int(n), "dynamic" if changed[j] else "static",
                                   e[j] - e_idle[j], latency[j], o_hat[j], state.state[n]))
    return StepResult(S, e, latency, o_hat, changed, e_idle, state.state[S].copy(),
                      {k_: np.asarray(r[k_], dtype=float) for k_ in ("o", "v", "e_dyn", "lat", "e_stat")})


def step(
    state: EngineState,
    t: float,
    S: np.ndarray | list[int],
    X: np.ndarray,
    predictors: ModelBundle | Predictors,
    prev_outputs: np.ndarray | None = None,
) -> StepResult:
    """One clock boundary at time ``t`` in seconds."""
    return step_k(state, step_index(state.spec, t), S, X, predictors, prev_outputs)


def flush(state: EngineState, k_end: int, predictors: ModelBundle | Predictors) -> np.ndarray:
    """Charge every circuit's idle time up to boundary ``k_end``; energy per circuit."""
    pred = as_predictors(predictors)
    ids = np.arange(state.n_circuits)
    if np.any(state.last_step >= k_end):
        raise EngineError("flush time precedes a circuit's last update")
    e = _idle_update(state, ids, k_end, pred)
    state.last_step[:] = np.maximum(state.last_step, k_end - 1)
    if state.log is not None:
        for n in np.flatnonzero(e > 0):
            state.log.rows.append((k_end * state.spec.clock_period, int(n), "flush", e[n], 0.0,
                                   state.output[n], state.state[n]))
    return e


@dataclass
class SequenceResult:
    steps: list[StepResult]
    energy_per_circuit: np.ndarray
    flush_energy: np.ndarray

    @property
    def total_energy(self) -> float:
        return float(self.energy_per_circuit.sum())


def characterization_schedule(
    spec: CircuitSpec, testbenches: list
) -> tuple[np.ndarray, list[tuple[int, np.ndarray, np.ndarray]], int]:
    """Parameters, ``(k, S, X)`` schedule and end step replaying testbenches as one circuit each.

    A circuit joins step ``k`` when its testbench sees a new input there, the
    same rule the event decomposition uses.
    """
    from .dataset import input_change_flags

    if not testbenches:
        raise EngineError("no testbenches given")
    n_steps = testbenches[0].n_steps
    if any(tb.n_steps != n_steps for tb in testbenches):
        raise EngineError("testbenches differ in length")
    P = np.stack([tb.sampled_params for tb in testbenches])
    xs = np.stack([tb.pwl.step_values(spec.clock_period, n_steps) for tb in testbenches])
    active = np.stack([input_change_flags(spec, x) for x in xs])
    plan = []
    for k in range(n_steps):
        S = np.flatnonzero(active[:, k])
        if S.size:
            plan.append((k, S, xs[S, k]))
    return P, plan, n_steps


def run_sequence(
    state: EngineState,
    schedule: Iterable[tuple[int, np.ndarray, np.ndarray]],
    predictors: ModelBundle | Predictors,
    end_step: int | None = None,
) -> SequenceResult:
    """Fold :func:`step_k` over ``(k, S, X)`` entries; flush at ``end_step`` if given."""
    pred = as_predictors(predictors)
    energy = np.zeros(state.n_circuits)
    steps = []
    last = None
    for k, S, X in schedule:
        if last is not None and k <= last:
            raise EngineError(f"schedule steps must increase: {k} after {last}")
        last = k
        r = step_k(state, k, S, X, pred)
        np.add.at(energy, r.circuits, r.energy)
        steps.append(r)
    fl = np.zeros(state.n_circuits)
    if end_step is not None:
        fl = flush(state, end_step, pred)
        energy += fl
    return SequenceResult(steps, energy, fl)
