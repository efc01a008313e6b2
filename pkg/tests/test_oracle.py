import math

import numpy as np
import pytest

from evsurrogate import oracle
from evsurrogate.oracle import OracleError, PwlSet, SpikeSchedule

KNOBS = np.array([0.65, 0.6, 0.5, 0.5])


def lif_step(spec, v0, ws, n):
    b = oracle.LifBatch.from_spec(spec, KNOBS[None, :])
    return oracle.lif_clock_step(b, np.array([v0]), np.array([ws]), np.array([n]), 100)


# --- waveforms ---------------------------------------------------------------

def test_pwl_step_values_hold_last_breakpoint():
    pwl = PwlSet([0.0, 2.0, 5.0], [[1.0], [2.0], [3.0]])
    assert pwl.step_values(1.0, 6)[:, 0].tolist() == [1, 1, 2, 2, 2, 3]


def test_pwl_rejects_non_increasing_times():
    with pytest.raises(OracleError):
        PwlSet([0.0, 1.0, 1.0], [0.0, 1.0, 2.0])


def test_pwl_must_start_at_zero():
    with pytest.raises(OracleError):
        PwlSet([1.0], [0.0]).step_values(1.0, 2)


def test_spike_schedule_rejects_negative_counts():
    with pytest.raises(OracleError):
        SpikeSchedule([0.0, 1.0], [0, -1])


# --- crossbar ------------------------------------------------------------------

def test_crossbar_settles_to_clamped_dot_product(xbar_spec):
    p = oracle.crossbar_params(xbar_spec, np.array([1, -1, 0, 1, 1.0]))
    x = np.array([[0.5, 0.2, -0.3, 0.1]])
    # 0.25 * (0.5 - 0.2 + 0.1 + 0.8)
    assert p.target(x)[0] == pytest.approx(0.3, abs=1e-15)
    out, power = oracle.crossbar_read_steps(p, np.array([0.0]), x, substeps=100)
    assert out[0, -1] == pytest.approx(0.299999863094209, rel=1e-12)
    assert oracle.trapezoid_energy(power, 4e-11)[0] == pytest.approx(2.1273067440180822e-13, rel=1e-12)


def test_crossbar_output_clamps_at_rails(xbar_spec):
    p = oracle.crossbar_params(xbar_spec.with_(device={**xbar_spec.device, "gain": 10.0}),
                               np.array([1, 1, 1, 1, 1.0]))
    assert p.target(np.full(4, 0.8)) == 2.0


def test_crossbar_rejects_non_ternary_weights():
    with pytest.raises(OracleError):
        oracle.CrossbarRowParams(weights=np.array([0.5, 1.0]), bias=0.0)


def test_crossbar_idle_step_draws_leakage_only(xbar_spec):
    p = oracle.crossbar_params(xbar_spec, np.array([1, 0, 0, 0, 0.0]))
    pwl = PwlSet([0.0], [[0.4, 0.0, 0.0, 0.0]])
    tr = oracle.simulate_crossbar_row(p, pwl, 3 * 4e-9, 100)
    e_idle = oracle.integrate_energy(tr, 4e-9, 8e-9)
    assert e_idle == pytest.approx(10e-6 * 4e-9, rel=1e-12)
    assert tr.output[100] == tr.output[200]


# --- LIF ------------------------------------------------------------------------

def test_lif_knob_derived_constants(lif_spec):
    lp = oracle.lif_params(lif_spec, KNOBS)
    # mid-range leak knob gives the nominal 20 ns time constant
    assert lp.g_leak == pytest.approx(100e-15 / 20e-9)
    assert lp.refractory_time == 0.0
    assert lp.adaptation_conductance == 0.0
    hi = oracle.lif_params(lif_spec, np.array([0.75, 0.6, 0.8, 0.8]))
    # a higher leak knob shortens the time constant
    assert hi.g_leak == pytest.approx(5e-6 * math.exp(1.0))
    assert hi.refractory_time == pytest.approx(2.5e-9)


def test_lif_knob_out_of_range(lif_spec):
    with pytest.raises(OracleError):
        oracle.lif_params(lif_spec, np.array([0.9, 0.6, 0.5, 0.5]))


def test_lif_idle_decay_matches_exponential(lif_spec):
    st = lif_step(lif_spec, 0.4, 0.0, 0)
    assert st.state[0, -1] == pytest.approx(0.31152039450591584, rel=1e-12)
    assert st.state[0, -1] == pytest.approx(0.4 * math.exp(-0.25), rel=1e-6)
    assert st.spike_counts[0] == 0
    assert st.output.max() == 0.0


def test_lif_no_input_from_rest_stays_at_rest(lif_spec):
    st = lif_step(lif_spec, 0.0, 0.0, 0)
    assert np.all(st.state == 0.0)
    assert oracle.trapezoid_energy(st.power, 5e-11)[0] == pytest.approx(2e-6 * 5e-9)


def test_lif_frozen_spiking_step(lif_spec):
    st = lif_step(lif_spec, 0.4, 0.5, 1)
    assert st.spike_counts[0] == 1
    assert st.output.max() == pytest.approx(1.2)
    assert st.state[0, -1] == pytest.approx(0.29683657555102844, rel=1e-12)
    assert oracle.trapezoid_energy(st.power, 5e-11)[0] == pytest.approx(1.5247880050239787e-12, rel=1e-12)


def test_lif_strong_drive_fires_repeatedly(lif_spec):
    st = lif_step(lif_spec, 0.0, 3.0, 3)
    assert st.spike_counts[0] == 4
    assert st.output.max() == pytest.approx(1.5)  # overlapping pulses clip at v_max
    assert st.state[0, -1] == pytest.approx(0.5255434744222127, rel=1e-12)
    assert oracle.trapezoid_energy(st.power, 5e-11)[0] == pytest.approx(6.279445533401597e-12, rel=1e-12)


def test_lif_batch_rows_are_independent(lif_spec, rng):
    P = rng.uniform(0.5, 0.8, size=(6, 4))
    v0 = rng.uniform(0, 0.6, 6)
    ws = rng.uniform(-1, 3, 6)
    n = rng.integers(0, 6, 6)
    b = oracle.LifBatch.from_spec(lif_spec, P)
    whole = oracle.lif_clock_step(b, v0, ws, n, 100)
    for i in range(6):
        one = oracle.lif_clock_step(b.take(np.array([i])), v0[i:i + 1], ws[i:i + 1], n[i:i + 1], 100)
        assert np.array_equal(one.state[0], whole.state[i])
        assert np.array_equal(one.power[0], whole.power[i])


def test_from_spec_equals_from_params(lif_spec, rng):
    P = rng.uniform(0.5, 0.8, size=(3, 4))
    a = oracle.LifBatch.from_spec(lif_spec, P)
    b = oracle.LifBatch.from_params([oracle.lif_params(lif_spec, p) for p in P])
    for key in ("g_leak", "g_adap", "t_ref", "v_th"):
        assert np.allclose(getattr(a, key), getattr(b, key), rtol=1e-14, atol=0)


def test_simulate_lif_neuron_trace_shape(lif_spec):
    lp = oracle.lif_params(lif_spec, KNOBS)
    tr = oracle.simulate_lif_neuron(lp, SpikeSchedule([1.0, 0.0, 0.5], [2, 0, 1]), 3 * 5e-9, 50)
    assert tr.samples_per_clock == 50
    assert tr.n_steps == 3
    assert tr.output.shape == (151,)


# --- measurements -----------------------------------------------------------------

def test_trapezoid_of_constant_power():
    assert oracle.trapezoid_energy(np.full(11, 2.0), 0.1) == pytest.approx(2.0)


def test_rise90_interpolates():
    lat = oracle.latency_from_samples(np.array([[0, 0.5, 1.0, 1.0]]), 1.0, "rise90")
    assert lat[0] == pytest.approx(1.8)


def test_latency_nan_without_change():
    lat = oracle.latency_from_samples(np.array([[0.2, 0.2, 0.2]]), 1.0, "rise90", threshold=0.01)
    assert np.isnan(lat[0])


def test_spike_peak_latency():
    lat = oracle.latency_from_samples(np.array([[0, 0.3, 1.2, 0.4]]), 0.5, "spike_peak", threshold=0.1)
    assert lat[0] == 1.0


def test_energy_window_must_be_inside_trace(lif_spec):
    lp = oracle.lif_params(lif_spec, KNOBS)
    tr = oracle.simulate_lif_neuron(lp, SpikeSchedule([0.0], [0]), 5e-9)
    with pytest.raises(OracleError):
        oracle.integrate_energy(tr, 0.0, 10e-9)


# --- properties ---------------------------------------------------------------------

def test_crossbar_linear_before_clamping(xbar_spec, rng):
    p = oracle.crossbar_params(xbar_spec, np.array([1, -1, 1, 0, 0.0]))
    x = rng.uniform(-0.2, 0.2, size=(1, 4))
    pwl1, pwl2 = PwlSet([0.0], x), PwlSet([0.0], 2 * x)
    o1 = oracle.simulate_crossbar_row(p, pwl1, 4e-9).output[-1]
    o2 = oracle.simulate_crossbar_row(p, pwl2, 4e-9).output[-1]
    assert o2 == pytest.approx(2 * o1, rel=1e-6)


def test_raising_threshold_never_adds_spikes(lif_spec, rng):
    ws = rng.uniform(-1, 3, 60)
    n = rng.integers(0, 6, 60)
    P = np.tile([0.65, 0.0, 0.6, 0.6], (7, 1))
    P[:, 1] = np.linspace(0.5, 0.8, 7)
    b = oracle.LifBatch.from_spec(lif_spec, P)
    v = np.zeros(7)
    counts = np.zeros(7, dtype=int)
    for k in range(60):
        st = oracle.lif_clock_step(b, v, np.full(7, ws[k]), np.full(7, n[k]))
        v = st.state[:, -1]
        counts += st.spike_counts
    assert np.all(np.diff(counts) <= 0)
    assert counts[0] > counts[-1]


def test_traces_are_deterministic(lif_spec):
    lp = oracle.lif_params(lif_spec, KNOBS)
    sched = SpikeSchedule([1.0, 0.0, 2.0], [2, 0, 3])
    a = oracle.simulate_lif_neuron(lp, sched, 15e-9)
    b = oracle.simulate_lif_neuron(lp, sched, 15e-9)
    assert np.array_equal(a.power, b.power) and np.array_equal(a.state, b.state)


def test_energy_additive_over_partition(lif_spec, rng):
    lp = oracle.lif_params(lif_spec, KNOBS)
    sched = SpikeSchedule(rng.uniform(0, 2, 20), rng.integers(0, 4, 20))
    tr = oracle.simulate_lif_neuron(lp, sched, 20 * 5e-9)
    whole = oracle.integrate_energy(tr, 0.0, tr.duration)
    parts = sum(oracle.integrate_energy(tr, k * 5e-9, (k + 1) * 5e-9) for k in range(20))
    assert parts == pytest.approx(whole, rel=1e-9)


def test_exponential_settling_latency(xbar_spec):
    """90% crossing of a pure exponential sits at tau * ln(10)."""
    dt = 1e-12
    t = np.arange(2001) * dt
    tau = 0.2e-9
    out = 1.0 - np.exp(-t / tau)
    lat = oracle.latency_from_samples(out[None, :], dt, "rise90")[0]
    assert abs(lat - tau * math.log(10)) <= dt
