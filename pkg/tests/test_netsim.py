import numpy as np
import pytest

from evsurrogate import circuits as C
from evsurrogate import engine as E
from evsurrogate.netsim import ann, quant, snn, studies
from evsurrogate.netsim.digits import load_digits_split


@pytest.fixture(scope="module")
def digits():
    return load_digits_split(50, seed=0)


# --- converters ----------------------------------------------------------------------

def test_quantizer_codes_and_centres():
    assert quant.adc_code([-1.0, -0.99, 0.0, 0.99, 5.0], 2, -1.0, 1.0).tolist() == [0, 0, 2, 3, 3]
    assert quant.dac_value([0, 3], 2, -1.0, 1.0).tolist() == [-0.75, 0.75]
    assert quant.quantize(0.1, 2, -1.0, 1.0) == 0.25


def test_quantizer_error_bounded_by_half_step(rng):
    v = rng.uniform(-2, 2, 1000)
    q = quant.quantize(v, 8, -2.0, 2.0)
    assert np.max(np.abs(q - v)) <= quant.step_size(8, -2.0, 2.0) / 2 + 1e-15


def test_quantizer_disabled_only_clamps():
    assert quant.quantize([-3.0, 0.3], None, -2.0, 2.0).tolist() == [-2.0, 0.3]


def test_digits_split_shapes(digits):
    Xtr, ytr, Xte, yte = digits
    assert Xtr.shape == (1747, 64) and Xte.shape == (50, 64)
    assert Xtr.min() >= 0 and Xtr.max() <= 1


# --- ANN -----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_ann(digits):
    Xtr, ytr, _, _ = digits
    return ann.train_ann(C.crossbar_row_spec(), Xtr[:300], ytr[:300], (64, 16, 10), epochs=5, seed=1)


def test_ann_weights_are_ternary(small_ann):
    for W, b in zip(small_ann.weights, small_ann.biases):
        assert set(np.unique(W)) <= {-1.0, 0.0, 1.0} and set(np.unique(b)) <= {-1.0, 0.0, 1.0}


def test_instance_params_segment_layout(small_ann):
    P = small_ann.instance_params(0)
    assert P.shape == (16 * 2, 33)
    # the bias cell is used on the first segment of each neuron only
    assert not P[1::2, 32].any()
    assert np.array_equal(P[0::2, 32], small_ann.biases[0])


def test_ann_oracle_predictors_match_transient_oracle(small_ann, digits):
    X = digits[2][:5]
    ref = ann.oracle_ann(small_ann, X)
    sur = ann.run_ann_inference(small_ann, X, E.oracle_predictors(small_ann.spec))
    assert np.array_equal(ref.scores, sur.scores)
    assert np.array_equal(ref.classes, sur.classes)
    # idle time is charged at a row's next event, so only the total is comparable per image
    assert sur.total_energy == pytest.approx(ref.total_energy, rel=1e-9)


def test_ideal_scores_close_to_circuit(small_ann, digits):
    X = digits[2][:5]
    ref = ann.oracle_ann(small_ann, X)
    assert np.abs(ann.ideal_scores(small_ann, X) - ref.scores).max() <= 0.05


# --- SNN -----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_snn(digits):
    Xtr, ytr, _, _ = digits
    return snn.train_snn(C.lif_neuron_spec(), Xtr[:300], ytr[:300], (64, 8, 10), timesteps=20, epochs=5, seed=2)


def test_poisson_rate_and_determinism():
    a = snn.poisson_encode(np.array([[0.0, 0.3, 1.0]]), 4000, seed=5)
    assert a.shape == (1, 4000, 3)
    assert not a[..., 0].any() and a[..., 2].all()
    assert a[..., 1].mean() == pytest.approx(0.3, abs=0.03)
    assert np.array_equal(a, snn.poisson_encode(np.array([[0.0, 0.3, 1.0]]), 4000, seed=5))
    with pytest.raises(ValueError):
        snn.poisson_encode(np.array([1.5]), 3, 0)


def test_snn_weights_in_range(small_snn):
    for W in small_snn.weights:
        assert np.abs(W).max() <= 1.0
    assert np.abs(small_snn.weights[0]).max() == pytest.approx(1.0)


def test_layer_input_counts_nonzero_synapses(small_snn):
    net = small_snn
    spikes = np.zeros((1, 64), dtype=bool)
    spikes[0, :3] = True
    x = net.layer_input(0, spikes)[0]
    W = net.weights[0]
    assert x[:, 1].tolist() == (W[:, :3] != 0).sum(axis=1).tolist()
    assert x[:, 0] == pytest.approx(1.2 * W[:, :3].sum(axis=1))


def test_silent_input_gives_no_spikes(small_snn):
    spikes = np.zeros((2, 20, 64), dtype=bool)
    res = snn.oracle_snn(small_snn, spikes)
    assert res.counts.sum() == 0
    # only bias power flows: n_neurons * steps * T * P_bias
    n = sum(small_snn.dims[1:])
    assert res.energy == pytest.approx(n * 21 * 5e-9 * 2e-6, rel=1e-12)


def test_snn_oracle_predictors_match_transient_oracle(small_snn, digits):
    spikes = snn.encode_images(small_snn, digits[2][:4], seed=1)
    ref = snn.oracle_snn(small_snn, spikes)
    assert ref.counts.sum() > 0
    for mode in ("predicted_state", "oracle_state"):
        sur = snn.run_snn(small_snn, spikes, E.oracle_predictors(small_snn.spec), mode=mode)
        assert np.array_equal(sur.counts, ref.counts)
        assert sur.energy == pytest.approx(ref.energy, rel=1e-9)


def test_snn_rejects_short_schedule(small_snn):
    with pytest.raises(ValueError):
        snn.run_snn(small_snn, np.zeros((1, 5, 64), dtype=bool), E.oracle_predictors(small_snn.spec))


def test_default_knobs_within_range():
    spec = C.lif_neuron_spec()
    k = snn.default_knobs(spec, 50, seed=0)
    assert k.min() >= 0.5 and k.max() <= 0.8
    assert k[:, 1].mean() == pytest.approx(0.755, abs=0.01)


# --- studies -------------------------------------------------------------------------

def test_trend_stats_on_known_series():
    up = studies.trend_stats(np.arange(20.0))
    assert up["frac_increasing"] == 1.0 and up["slope"] == pytest.approx(1.0)
    assert up["slope_p_positive"] < 1e-10
    flat = studies.trend_stats(np.array([1.0, np.nan, 1.0, 1.0, 1.0]))
    assert flat["slope"] == 0.0 and flat["quartile_ratio"] == 1.0
    assert np.isnan(studies.trend_stats(np.array([1.0, 2.0]))["slope"])


def test_propagation_study_is_exact_with_oracle_predictors(tmp_path):
    spec = C.lif_neuron_spec()
    res = studies.error_propagation_study(spec, E.oracle_predictors(spec), 20, 10, 0.8, seed=0)
    for mode in studies.MODES:
        for p, v in res.total[mode].items():
            assert v == pytest.approx(0.0, abs=1e-10), (mode, p)
    res.write_csv(tmp_path / "s.csv")
    res.write_stats_csv(tmp_path / "t.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "mode,predictor,step,normalized_mse" and len(lines) == 1 + 2 * 5 * 10


def test_runtime_benchmark_rows(tmp_path):
    spec = C.lif_neuron_spec()
    rows = studies.runtime_benchmark(spec, E.oracle_predictors(spec), [2, 4], n_steps=5)
    assert [r.n for r in rows] == [2, 4]
    assert all(r.oracle_seconds > 0 and r.engine_seconds > 0 for r in rows)
    studies.write_bench_csv(rows, tmp_path / "b.csv", timings=False)
    assert (tmp_path / "b.csv").read_text() == "n,oracle_seconds,engine_seconds,speedup\n2,,,\n4,,,\n"
    with pytest.raises(ValueError):
        studies.runtime_benchmark(spec, E.oracle_predictors(spec), [4, 2])
