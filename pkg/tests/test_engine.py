import numpy as np
import pytest

from evsurrogate import dataset as D
from evsurrogate import engine as E
from evsurrogate.models import select_bundle, train_all


@pytest.fixture(scope="module", params=["lif_spec", "xbar_spec"])
def replay(request):
    spec = request.getfixturevalue(request.param)
    runs = D.run_characterization(spec, 8, 40, 0.8, seed=3)
    events = {r.testbench.run_id: D.decompose_events(r.trace, r.testbench, spec) for r in runs}
    P, plan, end = E.characterization_schedule(spec, [r.testbench for r in runs])
    return spec, runs, events, P, plan, end


def test_oracle_predictors_reproduce_labels(replay):
    spec, runs, events, P, plan, end = replay
    st = E.EngineState.create(spec, P)
    res = E.run_sequence(st, plan, E.oracle_predictors(spec), end_step=end)
    by_step = {(int(n), k): (r, j) for (k, _, _), r in zip(plan, res.steps) for j, n in enumerate(r.circuits)}
    for n, evs in events.items():
        idle_before = 0.0
        for e in evs:
            if e.kind == "E2":
                idle_before = e.energy
                continue
            r, j = by_step[(n, e.k_start)]
            assert r.energy[j] - r.idle_energy[j] == pytest.approx(e.energy, rel=1e-9)
            assert r.idle_energy[j] == pytest.approx(idle_before, rel=1e-9)
            assert r.state[j] == pytest.approx(e.v_end, rel=1e-6, abs=1e-12)
            if spec.output_mode == "level":
                assert bool(r.changed[j]) == (e.kind == "E1")
            idle_before = 0.0
        assert res.energy_per_circuit[n] == pytest.approx(sum(e.energy for e in evs), rel=1e-9)


def test_batched_equals_singletons(replay):
    spec, runs, events, P, plan, end = replay
    pred = E.oracle_predictors(spec)
    a = E.EngineState.create(spec, P)
    b = E.EngineState.create(spec, P)
    for k, S, X in plan:
        ra = E.step_k(a, k, S, X, pred)
        for j, n in enumerate(S):
            rb = E.step_k(b, k, [n], X[j:j + 1], pred)
            assert rb.energy[0] == ra.energy[j] and rb.output[0] == ra.output[j]
            assert rb.latency[0] == ra.latency[j]
    assert np.array_equal(a.state, b.state) and np.array_equal(a.last_step, b.last_step)


def test_permutation_invariance(replay, rng):
    spec, runs, events, P, plan, end = replay
    pred = E.oracle_predictors(spec)
    a = E.EngineState.create(spec, P)
    b = E.EngineState.create(spec, P)
    for k, S, X in plan[:10]:
        perm = rng.permutation(S.size)
        ra = E.step_k(a, k, S, X, pred)
        rb = E.step_k(b, k, S[perm], X[perm], pred)
        assert np.array_equal(rb.energy, ra.energy[perm])
        assert np.array_equal(rb.output, ra.output[perm])
    assert np.array_equal(a.state, b.state)


def test_idle_tau_covers_gap_beyond_counted_step(lif_spec):
    seen = []

    class Spy(E.OraclePredictors):
        def idle(self, v, tau, P):
            seen.append(tau.copy())
            return super().idle(v, tau, P)

    pred = Spy(lif_spec)
    st = E.EngineState.create(lif_spec, np.array([[0.65, 0.6, 0.5, 0.5]]))
    E.step_k(st, 0, [0], [[0.2, 1]], pred)
    assert seen == []  # first step ever: no idle batch
    E.step_k(st, 3, [0], [[0.2, 1]], pred)
    assert seen[0][0] == pytest.approx(2 * lif_spec.clock_period)
    assert st.last_step[0] == 3


def test_step_by_time_and_errors(lif_spec):
    pred = E.oracle_predictors(lif_spec)
    st = E.EngineState.create(lif_spec, np.full((3, 4), 0.6))
    T = lif_spec.clock_period
    E.step(st, 2 * T, [0, 2], [[0.3, 1], [0.1, 2]], pred)
    assert st.last_step.tolist() == [2, -1, 2]
    with pytest.raises(E.EngineError, match="circuit 0"):
        E.step(st, 2 * T, [0], [[0.3, 1]], pred)
    with pytest.raises(E.EngineError, match="clock boundary"):
        E.step(st, 3.5 * T, [1], [[0.3, 1]], pred)
    with pytest.raises(E.EngineError, match="distinct"):
        E.step(st, 4 * T, [1, 1], [[0.3, 1], [0.3, 1]], pred)
    with pytest.raises(E.EngineError, match="out of range"):
        E.step(st, 4 * T, [7], [[0.3, 1]], pred)


def test_run_sequence_empty_and_ordering(lif_spec):
    pred = E.oracle_predictors(lif_spec)
    st = E.EngineState.create(lif_spec, np.full((2, 4), 0.6))
    assert E.run_sequence(st, [], pred).total_energy == 0.0
    sched = [(1, np.array([0]), np.array([[0.2, 1]])), (1, np.array([1]), np.array([[0.2, 1]]))]
    with pytest.raises(E.EngineError, match="increase"):
        E.run_sequence(st, sched, pred)


def test_crossbar_idle_merging_is_exact(xbar_spec):
    """Merged idle span equals stepping through it one step at a time."""
    pred = E.oracle_predictors(xbar_spec)
    P = np.array([[1, -1, 0, 1, 0.0]])
    a = E.EngineState.create(xbar_spec, P)
    E.step_k(a, 0, [0], [[0.1, 0.2, 0.3, 0.4]], pred)
    merged = E.flush(a, 6, pred)[0]
    v, e = pred.idle(np.zeros(5), np.full(5, xbar_spec.clock_period), np.repeat(P, 5, axis=0))
    assert merged == pytest.approx(e.sum(), rel=1e-9)


def test_lif_idle_merging_within_integration_tolerance(lif_spec):
    pred = E.oracle_predictors(lif_spec)
    P = np.array([[0.65, 0.6, 0.6, 0.5]])
    T = lif_spec.clock_period
    v1, e1 = pred.idle(np.array([0.5]), np.array([4 * T]), P)
    v, e = np.array([0.5]), 0.0
    for _ in range(4):
        v, ei = pred.idle(v, np.array([T]), P)
        e += ei[0]
    assert v1[0] == pytest.approx(v[0], rel=1e-6)
    assert e1[0] == pytest.approx(e, rel=1e-9)


class _Fixed:
    """Predictor double with constant answers."""

    def __init__(self, spec, o, e_dyn=-1.0, e_stat=2.0, lat=-3.0, v=0.1):
        self.spec, self.o, self.e_dyn, self.e_stat, self.lat, self.v = spec, o, e_dyn, e_stat, lat, v

    def idle(self, v, tau, P):
        return np.full(v.shape, self.v), np.full(v.shape, -5.0)

    def active(self, x, v, tau, P, o_prev):
        n = x.shape[0]
        return {"o": np.full(n, self.o), "v": np.full(n, self.v), "e_dyn": np.full(n, self.e_dyn),
                "lat": np.full(n, self.lat), "e_stat": np.full(n, self.e_stat)}


def test_negative_predictions_clamp_with_counters(xbar_spec):
    st = E.EngineState.create(xbar_spec, np.zeros((2, 5)))
    r = E.step_k(st, 0, [0, 1], np.zeros((2, 4)), _Fixed(xbar_spec, o=1.0))
    assert r.changed.all()
    assert r.energy.tolist() == [0.0, 0.0] and r.latency.tolist() == [0.0, 0.0]
    assert st.negative_energy_clamps == 2 and st.negative_latency_clamps == 2
    E.step_k(st, 5, [0], np.zeros((1, 4)), _Fixed(xbar_spec, o=1.0))
    assert st.negative_energy_clamps == 4  # the idle energy and the dynamic energy


def test_unchanged_output_charges_static_energy(xbar_spec):
    st = E.EngineState.create(xbar_spec, np.zeros((1, 5)))
    r = E.step_k(st, 0, [0], np.zeros((1, 4)), _Fixed(xbar_spec, o=0.01))
    assert not r.changed[0]
    assert r.energy[0] == 2.0 and r.latency[0] == 0.0


def test_state_override_applies_after_idle_update(lif_spec):
    pred = E.oracle_predictors(lif_spec)
    st = E.EngineState.create(lif_spec, np.full((1, 4), 0.6))
    E.step_k(st, 0, [0], [[0.2, 1]], pred)
    ref = E.EngineState.create(lif_spec, np.full((1, 4), 0.6), initial_state=0.3)
    a = E.step_k(st, 4, [0], [[0.2, 1]], pred, state_at_k=np.array([0.3]))
    b = E.step_k(ref, 0, [0], [[0.2, 1]], pred)
    assert a.state[0] == b.state[0]


def test_flush_logs_and_rejects_past(lif_spec):
    pred = E.oracle_predictors(lif_spec)
    st = E.EngineState.create(lif_spec, np.full((2, 4), 0.6))
    st.log = E.StepLog()
    E.step_k(st, 3, [0], [[0.4, 2]], pred)
    e = E.flush(st, 6, pred)
    assert e[1] > 0 and e[0] > 0
    paths = [r[2] for r in st.log.rows]
    assert paths[0] == "idle" and paths[1] in ("dynamic", "static")
    assert paths[2:] == ["flush", "flush"]
    with pytest.raises(E.EngineError):
        E.flush(st, 3, pred)


def test_lazy_respond_matches_full_evaluation(lif_ds):
    cands = train_all(lif_ds.spec, lif_ds.view("train"), lif_ds.view("val"), ["linear"])
    bundle = select_bundle(cands, lif_ds.spec)
    spec = lif_ds.spec
    rng = np.random.default_rng(4)
    P = rng.uniform(0.5, 0.8, size=(40, 4))
    a = E.EngineState.create(spec, P)
    b = E.EngineState.create(spec, P)
    for k in range(0, 30, 2):
        S = np.flatnonzero(rng.random(40) < 0.6)
        X = np.stack([rng.uniform(-1, 3, S.size), rng.integers(1, 6, S.size)], axis=1)
        ra = E.step_k(a, k, S, X, bundle)
        rb = E.step_k(b, k, S, X, bundle, full=True)
        assert np.array_equal(ra.energy, rb.energy) and np.array_equal(ra.latency, rb.latency)
    assert np.array_equal(a.state, b.state)
