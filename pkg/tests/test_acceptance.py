"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and fails
when its criterion is not met.  Corpora and models are built once per session.
"""

import math
import time

import numpy as np
import pytest

from evsurrogate import circuits as C
from evsurrogate import dataset as D
from evsurrogate import engine as E
from evsurrogate import evalkit, oracle
from evsurrogate.models import (M_E_D, M_E_S, M_L, M_O, M_V, PREDICTORS, load_bundle, save_bundle,
                                select_bundle, train_all)
from evsurrogate.models.mlp import init_layers, loss_and_grad
from evsurrogate.models.selection import evaluate
from evsurrogate.netsim import ann, snn, studies
from evsurrogate.netsim.digits import load_digits_split

pytestmark = pytest.mark.slow

XBAR = C.crossbar_row_spec()
LIF = C.lif_neuron_spec()
N_IMAGES = 200


class Timed:
    def __init__(self):
        self.seconds = 0.0

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds += time.perf_counter() - self.t0
        return False


def corpus(spec, n_runs, n_steps, seed):
    return D.build_dataset(D.characterize_events(spec, n_runs, n_steps, 0.8, seed=seed), seed, spec)


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def traced_runs():
    """100 characterization runs per circuit with full traces, and the time they took."""
    out = {}
    for name, spec, n_steps in (("crossbar", XBAR, 125), ("lif", LIF, 100)):
        with Timed() as t:
            runs = D.run_characterization(spec, 100, n_steps, 0.8, seed=101)
            events = [D.decompose_events(r.trace, r.testbench, spec) for r in runs]
        out[name] = (spec, runs, events, t.seconds)
    return out


@pytest.fixture(scope="session")
def xbar_corpus():
    with Timed() as t:
        ds = corpus(XBAR, 200, 125, seed=202)
        cands = train_all(XBAR, ds.view("train"), ds.view("val"), ["mean", "gbt", "mlp"], seed=1)
    return ds, cands, t.seconds


@pytest.fixture(scope="session")
def lif_corpus():
    with Timed() as t:
        ds = corpus(LIF, 400, 100, seed=303)
        cands = train_all(LIF, ds.view("train"), ds.view("val"), ["gbt", "mlp"], seed=1)
    lin = train_all(LIF, ds.view("train"), ds.view("val"), ["linear"], seed=1)
    for p in PREDICTORS:
        cands[p] += lin[p]
    bundle = select_bundle({p: [c for c in cands[p] if c.family in ("gbt", "mlp")] for p in PREDICTORS}, LIF)
    return ds, cands, bundle, t.seconds


@pytest.fixture(scope="session")
def digits():
    return load_digits_split(n_test=300, seed=0)


# ---------------------------------------------------------------------------
# 1. energy conservation
# ---------------------------------------------------------------------------


def test_c1_energy_conservation(traced_runs, verdict):
    worst, secs = 0.0, 0.0
    for spec, runs, events, seconds in traced_runs.values():
        secs += seconds
        for r, ev in zip(runs, events):
            whole = oracle.integrate_energy(r.trace, 0.0, r.trace.duration)
            worst = max(worst, abs(math.fsum(e.energy for e in ev) - whole) / whole)
    ok = worst <= 1e-9 and secs < 60
    verdict(1, ok, f"max relative gap {worst:.2e} (<= 1e-9) over 2x100 runs in {secs:.1f}s (< 60s)")


# ---------------------------------------------------------------------------
# 2. event partition
# ---------------------------------------------------------------------------


def _partition_failures(records, n_steps, T):
    by_run: dict[int, list] = {}
    for e in records:
        by_run.setdefault(e.run_id, []).append(e)
    bad = 0
    for evs in by_run.values():
        evs.sort(key=lambda e: e.k_start)
        steps = sum(e.k_end - e.k_start for e in evs)
        contiguous = evs[0].k_start == 0 and all(a.k_end == b.k_start for a, b in zip(evs, evs[1:]))
        tau_ok = all(e.tau == (e.k_end - e.k_start) * T for e in evs)
        if steps != n_steps or not contiguous or not tau_ok:
            bad += 1
    return bad, len(by_run)


def test_c2_event_partition(traced_runs, xbar_corpus, lif_corpus, verdict):
    checked, bad = 0, 0
    sources = [(spec, [e for ev in events for e in ev], runs[0].testbench.n_steps)
               for spec, runs, events, _ in traced_runs.values()]
    sources += [(XBAR, xbar_corpus[0].records, 125), (LIF, lif_corpus[0].records, 100)]
    for spec, records, n_steps in sources:
        b, n = _partition_failures(records, n_steps, spec.clock_period)
        bad += b
        checked += n
    verdict(2, bad == 0, f"{checked - bad}/{checked} runs partitioned exactly into their events")


# ---------------------------------------------------------------------------
# 3. engine fidelity with oracle predictors
# ---------------------------------------------------------------------------


def _replay_errors(spec, runs, events):
    P, plan, end = E.characterization_schedule(spec, [r.testbench for r in runs])
    st = E.EngineState.create(spec, P)
    res = E.run_sequence(st, plan, E.oracle_predictors(spec), end_step=end)
    at = {(int(n), k): (r, j) for (k, _, _), r in zip(plan, res.steps) for j, n in enumerate(r.circuits)}
    e_err, v_err = 0.0, 0.0
    for n, evs in enumerate(events):
        idle = 0.0
        for e in evs:
            if e.kind == "E2":
                idle = e.energy
                continue
            r, j = at[(n, e.k_start)]
            got = r.energy[j]
            e_err = max(e_err, abs(got - (idle + e.energy)) / (idle + e.energy))
            if spec.stateful:
                v_err = max(v_err, abs(r.state[j] - e.v_end) / max(abs(e.v_end), 1e-12))
            idle = 0.0
        total = math.fsum(e.energy for e in evs)
        e_err = max(e_err, abs(res.energy_per_circuit[n] - total) / total)
    return e_err, v_err, P, plan


def _batch_vs_single(spec, P, plan):
    pred = E.oracle_predictors(spec)
    a, b = E.EngineState.create(spec, P), E.EngineState.create(spec, P)
    for k, S, X in plan:
        ra = E.step_k(a, k, S, X, pred)
        for j, n in enumerate(S):
            rb = E.step_k(b, k, [n], X[j:j + 1], pred)
            if not (rb.energy[0] == ra.energy[j] and rb.output[0] == ra.output[j]
                    and rb.latency[0] == ra.latency[j] and rb.state[0] == ra.state[j]):
                return False
    return np.array_equal(a.state, b.state)


def _permutations_hold(spec, P, plan, n_perm, rng):
    pred = E.oracle_predictors(spec)
    base = E.EngineState.create(spec, P)
    half = len(plan) // 2
    for k, S, X in plan[:half]:
        E.step_k(base, k, S, X, pred)
    k, S, X = max(plan[half:], key=lambda s: s[1].size)

    def fresh():
        return E.EngineState(spec, base.params, base.last_step.copy(), base.state.copy(), base.output.copy())

    ref = E.step_k(fresh(), k, S, X, pred)
    for _ in range(n_perm):
        perm = rng.permutation(S.size)
        r = E.step_k(fresh(), k, S[perm], X[perm], pred)
        if not (np.array_equal(r.energy, ref.energy[perm]) and np.array_equal(r.output, ref.output[perm])
                and np.array_equal(r.state, ref.state[perm])):
            return False
    return True


def test_c3_engine_fidelity(traced_runs, verdict):
    rng = np.random.default_rng(3)
    parts, ok = [], True
    for name, (spec, runs, events, _) in traced_runs.items():
        e_err, v_err, P, plan = _replay_errors(spec, runs, events)
        sub = _batch_vs_single(spec, P[:20], [(k, S[S < 20], X[S < 20]) for k, S, X in plan if (S < 20).any()])
        perm = _permutations_hold(spec, P, plan, 500, rng)
        ok &= e_err <= 1e-9 and v_err <= 1e-6 and sub and perm
        parts.append(f"{name}: energy {e_err:.1e}, state {v_err:.1e}, batch==single {sub}, perms {perm}")
    verdict(3, ok, "; ".join(parts) + " (1000 permutations total)")


# ---------------------------------------------------------------------------
# 4-6. model quality
# ---------------------------------------------------------------------------


def _best(cands, predictor, test, spec, key):
    return min(evaluate(m, test, spec)[key] for m in cands[predictor] if m.family in ("gbt", "mlp"))


def test_c4_crossbar_model_quality(xbar_corpus, verdict):
    ds, cands, secs = xbar_corpus
    te = ds.view("test")
    mape_ed = _best(cands, M_E_D, te, XBAR, "mape")
    mape_l = _best(cands, M_L, te, XBAR, "mape")
    mean_mse = evaluate(next(m for m in cands[M_O] if m.family == "mean"), te, XBAR)["mse"]
    ratio = _best(cands, M_O, te, XBAR, "mse") / mean_mse
    ok = mape_ed < 10 and mape_l < 5 and ratio < 0.05 and secs < 600
    verdict(4, ok, f"M_E_D MAPE {mape_ed:.2f}% (<10), M_L MAPE {mape_l:.2f}% (<5), "
                   f"M_O MSE/mean {ratio:.3f} (<0.05), {secs:.0f}s (<600)")


def test_c5_lif_model_quality(lif_corpus, verdict):
    ds, cands, bundle, secs = lif_corpus
    te = ds.view("test")
    mape_ed = _best(cands, M_E_D, te, LIF, "mape")
    mape_l = _best(cands, M_L, te, LIF, "mape")
    acc = max(evalkit.spike_accuracy(LIF, m, te) for m in cands[M_O] if m.family in ("gbt", "mlp"))
    ok = mape_ed < 15 and mape_l < 15 and acc >= 0.95 and secs < 900
    verdict(5, ok, f"M_E_D MAPE {mape_ed:.2f}% (<15), M_L MAPE {mape_l:.2f}% (<15), "
                   f"spike accuracy {acc:.4f} (>=0.95), {secs:.0f}s (<900)")


def test_c6_expressiveness(lif_corpus, verdict):
    _, cands, _, _ = lif_corpus
    rows = []
    ok = True
    for p in PREDICTORS:
        fam = {m.family: m.val_mse for m in cands[p]}
        flex = min(fam["gbt"], fam["mlp"])
        ok &= flex <= fam["linear"]
        rows.append(f"{p} {flex:.3g}<={fam['linear']:.3g}")
    verdict(6, ok, "min(gbt, mlp) vs linear validation MSE: " + ", ".join(rows))


# ---------------------------------------------------------------------------
# 7. error propagation
# ---------------------------------------------------------------------------


def test_c7_error_propagation(lif_corpus, verdict):
    bundle = lif_corpus[2]
    with Timed() as t:
        res = studies.error_propagation_study(LIF, bundle, n_neurons=500, n_steps=100, seed=7)
    order_ok = all(res.total["predicted_state"][p] >= res.total["oracle_state"][p] for p in (M_O, M_V))
    trend_ok = True
    parts = []
    for p in PREDICTORS:
        s = res.stats[p]
        flat = s["slope_p_positive"] >= 0.05 or s["quartile_ratio"] <= 2.0
        trend_ok &= flat
        parts.append(f"{p} p={s['slope_p_positive']:.2f} q={s['quartile_ratio']:.2f}")
    mse = ", ".join(f"{p} P {res.total['predicted_state'][p]:.3g} >= O {res.total['oracle_state'][p]:.3g}"
                    for p in (M_O, M_V))
    ok = order_ok and trend_ok and t.seconds < 600
    verdict(7, ok, f"{mse}; no growing trend: {'; '.join(parts)}; {t.seconds:.0f}s (<600)")


# ---------------------------------------------------------------------------
# 8. runtime scaling
# ---------------------------------------------------------------------------


def test_c8_runtime_scaling(lif_corpus, verdict):
    bundle = lif_corpus[2]
    with Timed() as t:
        rows = studies.runtime_benchmark(LIF, bundle, [10, 100, 1000], n_steps=100, seed=8, repeats=3)
    sp = [r.speedup for r in rows]
    monotone = all(b >= 0.8 * a for a, b in zip(sp, sp[1:]))
    ok = sp[-1] >= 10 and monotone and t.seconds < 600
    table = ", ".join(f"N={r.n}: {r.oracle_seconds:.3f}s/{r.engine_seconds:.3f}s={r.speedup:.1f}x" for r in rows)
    verdict(8, ok, f"{table}; need >=10x at N=1000 and non-decreasing within 20%; {t.seconds:.0f}s (<600)")


# ---------------------------------------------------------------------------
# 9. digit workload
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def xbar_workload_bundle():
    """Crossbar bundle for the ANN workload, trained on a larger corpus."""
    with Timed() as t:
        ds = corpus(XBAR, 1000, 125, seed=909)
        cands = train_all(XBAR, ds.view("train"), ds.view("val"), ["gbt", "mlp"],
                          grids={"mlp": {"learning_rate": [1e-3, 3e-3], "l2": [1e-4]}}, seed=1)
    return select_bundle(cands, XBAR), t.seconds


def test_c9_digit_workload(digits, lif_corpus, xbar_workload_bundle, verdict):
    Xtr, ytr, Xte, yte = digits
    X, y = Xte[:N_IMAGES], yte[:N_IMAGES]
    xb_bundle, xb_secs = xbar_workload_bundle
    with Timed() as t:
        net = ann.train_ann(XBAR, Xtr, ytr, seed=0)
        a_ref = ann.oracle_ann(net, X)
        a_sur = ann.run_ann_inference(net, X, xb_bundle)
        snet = snn.train_snn(LIF, Xtr, ytr, seed=0)
        spikes = snn.encode_images(snet, X, seed=1)
        s_ref = snn.oracle_snn(snet, spikes)
        s_sur = snn.run_snn(snet, spikes, lif_corpus[2])
    sums = {
        "ANN": evalkit.summarize_workload(y, a_ref.classes, a_sur.classes, a_ref.energy, a_sur.energy),
        "SNN": evalkit.summarize_workload(y, s_ref.classes, s_sur.classes, s_ref.energy, s_sur.energy),
    }
    ok = t.seconds < 1800
    parts = []
    for name, s in sums.items():
        ok &= s.accuracy_gap_pp <= 3.0 and s.energy_error <= 0.10
        parts.append(f"{name} acc {s.oracle_accuracy:.3f}/{s.surrogate_accuracy:.3f} "
                     f"(gap {s.accuracy_gap_pp:.1f}pp <=3), energy err {100 * s.energy_error:.2f}% (<=10)")
    verdict(9, ok, f"{'; '.join(parts)}; {N_IMAGES} images, {t.seconds:.0f}s (<1800) "
                   f"plus {xb_secs:.0f}s crossbar bundle training")


# ---------------------------------------------------------------------------
# 10. numerical hygiene
# ---------------------------------------------------------------------------


def _grad_check(rng):
    params = init_layers([6, 10, 5, 1], rng)
    X = rng.normal(size=(32, 6))
    y = rng.normal(size=32)
    _, grads = loss_and_grad(params, X, y, 1e-3)
    worst = 0.0
    h = 1e-6
    for p, g in zip(params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp, _ = loss_and_grad(params, X, y, 1e-3)
            p[idx] = old - h
            lm, _ = loss_and_grad(params, X, y, 1e-3)
            p[idx] = old
            num = (lp - lm) / (2 * h)
            worst = max(worst, abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-8))
    return worst


def test_c10_numerical_hygiene(lif_corpus, tmp_path, verdict):
    rng = np.random.default_rng(10)
    grad = _grad_check(rng)
    _, cands, bundle, _ = lif_corpus
    gbts = [m for p in PREDICTORS for m in cands[p] if m.family == "gbt"]
    mono = all(np.all(np.diff(m.model.train_loss) <= 0) for m in gbts)
    path = tmp_path / "bundle.bin"
    save_bundle(bundle, path)
    back = load_bundle(path, LIF)
    same = True
    for p in PREDICTORS:
        sch = bundle[p].schema
        rows = rng.normal(size=(1000, sch.width)) * sch.std + sch.mean
        same &= np.array_equal(bundle[p].predict(rows), back[p].predict(rows))
    ok = grad <= 1e-4 and mono and same
    verdict(10, ok, f"MLP gradient rel. error {grad:.1e} (<=1e-4), GBT loss non-increasing {mono} "
                    f"({len(gbts)} models), bundle round-trip bit-equal on 1000 rows {same}")
