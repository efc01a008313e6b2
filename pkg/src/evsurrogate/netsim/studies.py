"""Error-propagation and runtime-scaling studies on single LIF layers."""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .. import engine as eng
from .. import oracle
from ..circuits import CircuitSpec
from ..dataset import generate_testbench, run_seed
from ..models.features import PREDICTORS

MODES = ("oracle_state", "predicted_state")


def random_layer(spec: CircuitSpec, n_neurons: int, n_steps: int, alpha: float, seed: int):
    """Knobs (N, P) and per-step inputs ws, count (N, n_steps) drawn like characterization runs."""
    P = np.empty((n_neurons, spec.n_params))
    ws = np.empty((n_neurons, n_steps))
    cnt = np.empty((n_neurons, n_steps), dtype=np.int64)
    for i in range(n_neurons):
        tb = generate_testbench(spec, n_steps, alpha, run_seed(seed, i), i)
        P[i] = tb.sampled_params
        xs = tb.pwl.step_values(spec.clock_period, n_steps)
        ws[i] = xs[:, 0]
        cnt[i] = np.rint(xs[:, 1]).astype(np.int64)
    return P, ws, cnt


@dataclass
class PropagationResult:
    series: dict[str, dict[str, np.ndarray]]  # mode -> predictor -> per-step normalized MSE
    total: dict[str, dict[str, float]]  # mode -> predictor -> normalized MSE over all events
    stats: dict[str, dict[str, float]] = field(default_factory=dict)  # predicted_state only

    def write_csv(self, sink: str | os.PathLike) -> None:
        with open(sink, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mode", "predictor", "step", "normalized_mse"])
            for mode in MODES:
                for p in PREDICTORS:
                    for k, v in enumerate(self.series[mode][p]):
                        w.writerow([mode, p, k, repr(float(v))])

    def write_stats_csv(self, sink: str | os.PathLike) -> None:
        cols = ["frac_increasing", "slope", "slope_p_positive", "quartile_ratio",
                "mse_oracle_state", "mse_predicted_state"]
        with open(sink, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["predictor"] + cols)
            for p in PREDICTORS:
                w.writerow([p] + [repr(float(self.stats[p][c])) for c in cols])


def trend_stats(series: np.ndarray) -> dict[str, float]:
    """Monotonicity summary of a per-step series (NaN steps ignored)."""
    y = np.asarray(series, dtype=float)
    k = np.flatnonzero(np.isfinite(y))
    out = {"frac_increasing": np.nan, "slope": np.nan, "slope_p_positive": np.nan, "quartile_ratio": np.nan}
    if k.size < 3:
        return out
    yk = y[k]
    out["frac_increasing"] = float(np.mean(np.diff(yk) > 0))
    if np.ptp(yk) == 0:
        out["slope"], out["slope_p_positive"] = 0.0, 1.0
    else:
        lr = stats.linregress(k.astype(float), yk, alternative="greater")
        out["slope"], out["slope_p_positive"] = float(lr.slope), float(lr.pvalue)
    q = max(1, yk.size // 4)
    first, last = float(yk[:q].mean()), float(yk[-q:].mean())
    out["quartile_ratio"] = last / first if first > 0 else (1.0 if last == 0 else np.inf)
    return out


def _truth_step(batch, v, ws, cnt, spec: CircuitSpec) -> dict[str, np.ndarray]:
    S = spec.substeps_per_clock
    st = oracle.lif_clock_step(batch, v, ws, cnt, S)
    dt = spec.clock_period / S
    o = st.output.max(axis=1)
    o_prev = st.output[:, 0]
    changed = np.abs(o - o_prev) > spec.output_change_epsilon
    lat = oracle.latency_from_samples(st.output, dt, spec.latency_mode, spec.output_change_epsilon)
    return {"o": o, "v": st.state[:, -1].copy(), "e": oracle.trapezoid_energy(st.power, dt),
            "lat": lat, "changed": changed}


def _run_mode(spec, P, ws, cnt, predictors, mode):
    """Per-event (step, predictor, truth, prediction) arrays for one mode."""
    N, n_steps = ws.shape
    batch = oracle.LifBatch.from_spec(spec, P)
    state = eng.EngineState.create(spec, P)
    v_true = np.zeros(N)
    rec = {p: ([], [], []) for p in PREDICTORS}

    def add(p, k, t, y):
        rec[p][0].append(np.full(t.shape[0], k))
        rec[p][1].append(t)
        rec[p][2].append(y)

    for k in range(n_steps):
        truth = _truth_step(batch, v_true, ws[:, k], cnt[:, k], spec)
        S = np.flatnonzero(cnt[:, k] > 0)
        override = v_true[S] if mode == "oracle_state" else None
        r = eng.step_k(state, k, S, np.stack([ws[S, k], cnt[S, k]], axis=1), predictors,
                       state_at_k=override, full=True)
        ch = truth["changed"][S]
        add("M_O", k, truth["o"][S], r.raw["o"])
        add("M_V", k, truth["v"][S], r.raw["v"])
        add("M_E_D", k, truth["e"][S][ch], r.raw["e_dyn"][ch])
        add("M_E_S", k, truth["e"][S][~ch], r.raw["e_stat"][~ch])
        add("M_L", k, truth["lat"][S][ch], r.raw["lat"][ch])
        v_true = truth["v"]
        if mode == "oracle_state":
            state.state[S] = v_true[S]
    return {p: tuple(np.concatenate(a) if a else np.zeros(0) for a in rec[p]) for p in PREDICTORS}


def error_propagation_study(
    spec: CircuitSpec,
    predictors,
    n_neurons: int = 500,
    n_steps: int = 100,
    alpha: float = 0.8,
    seed: int = 0,
) -> PropagationResult:
    """Per-step prediction error of one layer with the state taken from the oracle or carried forward.

    Errors are squared differences on the active events of each step, divided
    by the variance of that predictor's targets over all events of both modes.
    Idle intervals are charged inside the engine and are not scored here.
    """
    pred = eng.as_predictors(predictors)
    P, ws, cnt = random_layer(spec, n_neurons, n_steps, alpha, seed)
    recs = {m: _run_mode(spec, P, ws, cnt, pred, m) for m in MODES}
    series: dict[str, dict[str, np.ndarray]] = {m: {} for m in MODES}
    total: dict[str, dict[str, float]] = {m: {} for m in MODES}
    for p in PREDICTORS:
        var = float(np.var(np.concatenate([recs[m][p][1] for m in MODES])))
        norm = var if var > 0 else 1.0
        for m in MODES:
            k, t, y = recs[m][p]
            se = (y - t) ** 2 / norm
            s = np.bincount(k, weights=se, minlength=n_steps)
            c = np.bincount(k, minlength=n_steps)
            with np.errstate(invalid="ignore", divide="ignore"):
                series[m][p] = np.where(c > 0, s / np.maximum(c, 1), np.nan)
            total[m][p] = float(se.mean()) if se.size else np.nan
    res = PropagationResult(series, total)
    for p in PREDICTORS:
        st = trend_stats(series["predicted_state"][p])
        st["mse_oracle_state"] = total["oracle_state"][p]
        st["mse_predicted_state"] = total["predicted_state"][p]
        res.stats[p] = st
    return res


# ---------------------------------------------------------------------------
# runtime scaling
# ---------------------------------------------------------------------------


@dataclass
class BenchRow:
    n: int
    oracle_seconds: float  # vectorized transient simulation of the whole layer
    engine_seconds: float

    @property
    def speedup(self) -> float:
        return self.oracle_seconds / self.engine_seconds


BENCH_HEADER = ["n", "oracle_seconds", "engine_seconds", "speedup"]


def write_bench_csv(rows: list[BenchRow], sink: str | os.PathLike, timings: bool = True) -> None:
    """Write the scaling table; ``timings=False`` blanks the wall-clock columns."""
    with open(sink, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for r in rows:
            vals = [r.oracle_seconds, r.engine_seconds, r.speedup]
            w.writerow([r.n] + ([f"{v:.6g}" for v in vals] if timings else [""] * len(vals)))


def runtime_benchmark(
    spec: CircuitSpec,
    predictors,
    sizes: list[int],
    n_steps: int = 100,
    alpha: float = 0.8,
    seed: int = 0,
    repeats: int = 1,
) -> list[BenchRow]:
    """Wall-clock the engine against the transient oracle on identical random schedules.

    The oracle integrates every neuron of the layer together at
    ``spec.substeps_per_clock`` samples per clock.  Each timing is the minimum
    over ``repeats`` runs.
    """
    if not sizes or list(sizes) != sorted(sizes):
        raise ValueError("sizes must be a non-empty ascending list")
    pred = eng.as_predictors(predictors)
    T = spec.clock_period
    # untimed warm-up so compiled kernels are loaded before the first measurement
    P, ws, cnt = random_layer(spec, 2, 2, 1.0, seed)
    eng.run_sequence(eng.EngineState.create(spec, P), [(0, np.arange(2), np.stack([ws[:, 0], cnt[:, 0]], 1))],
                     pred, end_step=2)
    rows = []
    for n in sizes:
        P, ws, cnt = random_layer(spec, n, n_steps, alpha, seed)
        schedules = [oracle.SpikeSchedule(ws[i], cnt[i]) for i in range(n)]
        plan = []
        for k in range(n_steps):
            S = np.flatnonzero(cnt[:, k] > 0)
            plan.append((k, S, np.stack([ws[S, k], cnt[S, k]], axis=1)))

        def run_oracle():
            oracle.simulate_lif_batch(oracle.LifBatch.from_spec(spec, P), schedules, n_steps * T,
                                      spec.substeps_per_clock)

        def run_engine():
            eng.run_sequence(eng.EngineState.create(spec, P), plan, pred, end_step=n_steps)

        times = []
        for fn in (run_oracle, run_engine):
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn()
                best = min(best, time.perf_counter() - t0)
            times.append(best)
        rows.append(BenchRow(n, *times))
    return rows
