"""Analytical transient simulator for the two reference circuits.

Each clock period is simulated on a uniform grid of ``substeps`` intervals.
Every period is self-contained: it starts from the state (and, for the crossbar,
the held output) at its left boundary and leaves no other memory behind, so an
isolated replay of one period from its boundary conditions reproduces the
corresponding slice of a full trace.

Crossbar row
    Inputs are read during a window ``[read_on, read_off) * T`` of every clock
    period in which they changed.  Inside the window the output settles
    exponentially toward ``clamp(gain * (w . x + bias * bias_ref))``; outside it
    the output amplifier holds its value.  Power is amplifier leakage, read
    current ``G * sum(x^2)`` and load switching ``C_L * |o * do/dt|``.

LIF neuron
    ``C dv/dt = -g(t) v + I_syn(t)`` integrated with Heun's method.  Incoming
    spikes become equal rectangular current pulses spread across the first half
    of the period.  Crossing ``v_th`` emits a triangular output pulse, resets
    ``v`` to 0 and freezes integration for a refractory time.  Adaptation adds
    a post-spike leak conductance that ramps down to zero at the end of the
    period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuits import CROSSBAR, LIF, CircuitSpec


class OracleError(ValueError):
    """Raised for invalid oracle inputs."""


# ---------------------------------------------------------------------------
# Waveform containers
# ---------------------------------------------------------------------------


@dataclass
class PwlSet:
    """Breakpoints shared by every input: ``times`` (n,) and ``values`` (n, dims).

    Between breakpoints an input holds its last value (DAC sample-and-hold).
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.times.ndim != 1 or self.values.shape[0] != self.times.shape[0]:
            raise OracleError("PwlSet times and values disagree in length")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise OracleError("PwlSet breakpoint times must be strictly increasing")

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PwlSet):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    def step_values(self, clock_period: float, n_steps: int) -> np.ndarray:
        """Value of every input during each clock step, shape (n_steps, dims)."""
        if self.times.size == 0:
            raise OracleError("PwlSet has no breakpoints")
        starts = np.arange(n_steps) * clock_period
        idx = np.searchsorted(self.times, starts + 1e-6 * clock_period, side="right") - 1
        if np.any(idx < 0):
            raise OracleError("PwlSet does not define inputs at t = 0")
        return self.values[idx]


@dataclass
class SpikeSchedule:
    """Per-step aggregated spike input of a LIF neuron.

    ``weighted_sum[k]`` is the sum of weight * amplitude of the spikes that
    arrive in step ``k`` and ``count[k]`` their number.
    """

    weighted_sum: np.ndarray
    count: np.ndarray

    def __post_init__(self) -> None:
        self.weighted_sum = np.asarray(self.weighted_sum, dtype=float)
        self.count = np.asarray(self.count).astype(np.int64)
        if self.weighted_sum.shape != self.count.shape:
            raise OracleError("spike schedule arrays differ in length")
        if np.any(self.count < 0):
            raise OracleError("spike counts must be non-negative")

    @classmethod
    def from_pwl(cls, pwl: PwlSet, clock_period: float, n_steps: int) -> "SpikeSchedule":
        vals = pwl.step_values(clock_period, n_steps)
        return cls(vals[:, 0], np.rint(vals[:, 1]))

    def __len__(self) -> int:
        return self.count.shape[0]


@dataclass
class TransientTrace:
    dt: float
    inputs: np.ndarray
    output: np.ndarray
    state: np.ndarray
    power: np.ndarray
    clock_period: float

    def __post_init__(self) -> None:
        n = self.output.shape[0]
        if not (self.state.shape[0] == n and self.power.shape[0] == n and self.inputs.shape[0] == n):
            raise OracleError("trace vectors must have equal length")
        spc = self.clock_period / self.dt
        if abs(spc - round(spc)) > 1e-6 * spc:
            raise OracleError("dt must divide the clock period")
        if (n - 1) % int(round(spc)) != 0:
            raise OracleError("trace must cover an integer number of clock periods")

    @property
    def samples_per_clock(self) -> int:
        return int(round(self.clock_period / self.dt))

    @property
    def n_steps(self) -> int:
        return (self.output.shape[0] - 1) // self.samples_per_clock

    @property
    def duration(self) -> float:
        return self.n_steps * self.clock_period

    def sample_index(self, t: float) -> int:
        i = int(round(t / self.dt))
        if abs(t - i * self.dt) > 1e-6 * self.dt:
            raise OracleError(f"time {t!r} is not aligned to the sample grid")
        return i


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass
class CrossbarRowParams:
    weights: np.ndarray
    bias: float
    gain: float = 0.25
    rail_low: float = -2.0
    rail_high: float = 2.0
    settle_tau: float = 0.2e-9
    unit_conductance: float = 50e-6
    load_capacitance: float = 500e-15
    bias_ref: float = 0.8
    leak_power: float = 10e-6
    read_on: float = 0.02
    read_off: float = 0.75
    clock_period: float = 4e-9

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1 or self.weights.size < 1:
            raise OracleError("crossbar row needs K >= 1 weights")
        if not np.all(np.isin(self.weights, (-1.0, 0.0, 1.0))) or self.bias not in (-1.0, 0.0, 1.0):
            raise OracleError("crossbar weights and bias must be ternary")
        if not self.rail_low < self.rail_high:
            raise OracleError("rail_low must be below rail_high")
        if self.settle_tau <= 0 or self.gain <= 0:
            raise OracleError("settle_tau and gain must be positive")
        if not 0 < self.read_on < self.read_off < 1:
            raise OracleError("read window must satisfy 0 < read_on < read_off < 1")

    def target(self, x: np.ndarray) -> np.ndarray:
        """Settled output for input vectors ``x`` (..., K)."""
        y = self.gain * (np.asarray(x) @ self.weights + self.bias * self.bias_ref)
        return np.clip(y, self.rail_low, self.rail_high)


@dataclass
class LifParams:
    v_leak: float
    v_th: float
    v_adap: float
    v_refrac: float
    synaptic_gain: float = 3e-4
    membrane_capacitance: float = 100e-15
    supply_voltage: float = 1.2
    spike_width: float = 1e-9
    load_capacitance: float = 500e-15
    clock_period: float = 5e-9
    pulse_width: float = 0.4e-9
    bias_power: float = 2e-6
    tau_leak_mid: float = 20e-9
    leak_slope: float = 0.1
    adaptation_strength: float = 20.0
    v_max: float = 1.5
    knob_low: float = 0.5
    knob_high: float = 0.8

    def __post_init__(self) -> None:
        for name in ("v_leak", "v_th", "v_adap", "v_refrac"):
            val = getattr(self, name)
            if not self.knob_low - 1e-12 <= val <= self.knob_high + 1e-12:
                raise OracleError(f"{name}={val} outside knob range [{self.knob_low}, {self.knob_high}]")
        if self.v_th <= 0:
            raise OracleError("v_th must be positive")
        if not self.spike_width < self.clock_period / 2:
            raise OracleError("spike_width must be shorter than half a clock period")
        if not self.pulse_width < self.clock_period / 2:
            raise OracleError("pulse_width must be shorter than half a clock period")

    @property
    def g_leak(self) -> float:
        mid = 0.5 * (self.knob_low + self.knob_high)
        tau = self.tau_leak_mid * math.exp(-(self.v_leak - mid) / self.leak_slope)
        return self.membrane_capacitance / tau

    @property
    def refractory_time(self) -> float:
        frac = (self.v_refrac - self.knob_low) / (self.knob_high - self.knob_low)
        return frac * 0.5 * self.clock_period

    @property
    def adaptation_conductance(self) -> float:
        frac = (self.v_adap - self.knob_low) / (self.knob_high - self.knob_low)
        return self.adaptation_strength * self.g_leak * frac


def crossbar_params(spec: CircuitSpec, p: np.ndarray) -> CrossbarRowParams:
    """Oracle parameters for one crossbar row from a spec and its parameter vector."""
    dev = spec.device
    return CrossbarRowParams(
        weights=np.asarray(p[: spec.input_dims], dtype=float),
        bias=float(p[spec.input_dims]),
        gain=dev["gain"],
        rail_low=dev["rail_low"],
        rail_high=dev["rail_high"],
        settle_tau=dev["settle_tau"],
        unit_conductance=dev["unit_conductance"],
        load_capacitance=dev["load_capacitance"],
        bias_ref=dev["bias_ref"],
        leak_power=dev["leak_power"],
        read_on=dev["read_on"],
        read_off=dev["read_off"],
        clock_period=spec.clock_period,
    )


def lif_params(spec: CircuitSpec, p: np.ndarray) -> LifParams:
    dev = spec.device
    keys = (
        "synaptic_gain", "membrane_capacitance", "supply_voltage", "spike_width", "load_capacitance",
        "pulse_width", "bias_power", "tau_leak_mid", "leak_slope", "adaptation_strength", "v_max",
        "knob_low", "knob_high",
    )
    return LifParams(
        v_leak=float(p[0]), v_th=float(p[1]), v_adap=float(p[2]), v_refrac=float(p[3]),
        clock_period=spec.clock_period, **{k: dev[k] for k in keys},
    )


def params_from_vector(spec: CircuitSpec, p: np.ndarray) -> CrossbarRowParams | LifParams:
    return crossbar_params(spec, p) if spec.kind == CROSSBAR else lif_params(spec, p)


# ---------------------------------------------------------------------------
# Crossbar row
# ---------------------------------------------------------------------------


def _crossbar_profile(params: CrossbarRowParams, substeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Settling decay factor and read-window mask on the sample grid of one period."""
    frac = np.arange(substeps + 1) / substeps
    phase = np.clip(frac, params.read_on, params.read_off) - params.read_on
    decay = np.exp(-phase * params.clock_period / params.settle_tau)
    window = (frac >= params.read_on) & (frac < params.read_off)
    return decay, window


def crossbar_read_steps(
    params: CrossbarRowParams,
    o_prev: np.ndarray,
    x: np.ndarray,
    weights: np.ndarray | None = None,
    bias: np.ndarray | None = None,
    substeps: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Output and power samples (B, substeps+1) for B independent read periods.

    ``weights``/``bias`` override the row's own values per batch entry; the
    remaining device constants come from ``params``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    o_prev = np.asarray(o_prev, dtype=float).reshape(-1)
    w = np.broadcast_to(params.weights if weights is None else weights, x.shape)
    b = np.broadcast_to(params.bias if bias is None else np.asarray(bias, dtype=float), o_prev.shape)
    y = params.gain * (np.sum(w * x, axis=1) + b * params.bias_ref)
    y = np.clip(y, params.rail_low, params.rail_high)
    sumsq = np.sum(x * x, axis=1) + params.bias_ref**2
    decay, window = _crossbar_profile(params, substeps)
    out = y[:, None] + (o_prev - y)[:, None] * decay[None, :]
    slope = (y[:, None] - out) / params.settle_tau
    switching = params.load_capacitance * np.abs(out * slope)
    read = params.unit_conductance * sumsq[:, None]
    power = params.leak_power + np.where(window[None, :], read + switching, 0.0)
    return out, power


def simulate_crossbar_row(
    params: CrossbarRowParams,
    piecewise_inputs: PwlSet,
    duration: float,
    substeps_per_clock: int = 100,
    initial_output: float = 0.0,
) -> TransientTrace:
    """Transient response of one crossbar row to a held-input waveform."""
    if substeps_per_clock < 10:
        raise OracleError("substeps_per_clock must be >= 10")
    T = params.clock_period
    n_steps = _n_steps(duration, T)
    K = params.weights.size
    if piecewise_inputs.dims != K:
        raise OracleError(f"expected {K} inputs, PWL defines {piecewise_inputs.dims}")
    bad = ~np.isfinite(piecewise_inputs.values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise OracleError(f"non-finite sample on input {c} at t={piecewise_inputs.times[r]!r}")
    xs = piecewise_inputs.step_values(T, n_steps)
    changed = np.ones(n_steps, dtype=bool)
    changed[1:] = np.any(xs[1:] != xs[:-1], axis=1)

    S = substeps_per_clock
    out = np.empty((n_steps, S + 1))
    power = np.empty((n_steps, S + 1))
    o = float(initial_output)
    act = np.flatnonzero(changed)
    # active periods depend on the held output of the previous period only
    decay_end = _crossbar_profile(params, S)[0][-1]
    y_all = params.target(xs)
    o_starts = np.empty(n_steps)
    for k in range(n_steps):
        o_starts[k] = o
        if changed[k]:
            o = y_all[k] + (o - y_all[k]) * decay_end
    if act.size:
        a_out, a_pow = crossbar_read_steps(params, o_starts[act], xs[act], substeps=S)
        out[act] = a_out
        power[act] = a_pow
    idle = np.flatnonzero(~changed)
    out[idle] = o_starts[idle, None]
    power[idle] = params.leak_power

    return TransientTrace(
        dt=T / S,
        inputs=_stitch(np.repeat(xs[:, None, :], S + 1, axis=1)),
        output=_stitch(out),
        state=np.zeros(n_steps * S + 1),
        power=_stitch(power),
        clock_period=T,
    )


# ---------------------------------------------------------------------------
# LIF neuron
# ---------------------------------------------------------------------------


@dataclass
class LifBatch:
    """Column view of B neurons' parameters for the vectorized kernel."""

    clock_period: float
    g_leak: np.ndarray
    g_adap: np.ndarray
    t_ref: np.ndarray
    v_th: np.ndarray
    capacitance: np.ndarray
    synaptic_gain: np.ndarray
    supply_voltage: np.ndarray
    spike_width: np.ndarray
    load_capacitance: np.ndarray
    pulse_width: np.ndarray
    bias_power: np.ndarray
    v_max: np.ndarray

    @classmethod
    def from_params(cls, params: list[LifParams]) -> "LifBatch":
        if not params:
            raise OracleError("empty neuron batch")
        T = params[0].clock_period
        if any(p.clock_period != T for p in params):
            raise OracleError("all neurons in a batch must share the clock")

        def col(fn):
            return np.array([fn(p) for p in params], dtype=float)

        return cls(
            clock_period=T,
            g_leak=col(lambda p: p.g_leak),
            g_adap=col(lambda p: p.adaptation_conductance),
            t_ref=col(lambda p: p.refractory_time),
            v_th=col(lambda p: p.v_th),
            capacitance=col(lambda p: p.membrane_capacitance),
            synaptic_gain=col(lambda p: p.synaptic_gain),
            supply_voltage=col(lambda p: p.supply_voltage),
            spike_width=col(lambda p: p.spike_width),
            load_capacitance=col(lambda p: p.load_capacitance),
            pulse_width=col(lambda p: p.pulse_width),
            bias_power=col(lambda p: p.bias_power),
            v_max=col(lambda p: p.v_max),
        )

    @classmethod
    def from_spec(cls, spec: CircuitSpec, P: np.ndarray) -> "LifBatch":
        """Vectorized equivalent of ``from_params`` for a parameter matrix."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        dev = spec.device
        lo, hi = dev["knob_low"], dev["knob_high"]
        bad = (P < lo - 1e-12) | (P > hi + 1e-12)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise OracleError(f"neuron {r}: knob {c}={P[r, c]} outside [{lo}, {hi}]")
        T = spec.clock_period
        n = P.shape[0]
        C = dev["membrane_capacitance"]
        mid = 0.5 * (lo + hi)
        g_leak = C / (dev["tau_leak_mid"] * np.exp(-(P[:, 0] - mid) / dev["leak_slope"]))

        def full(key: str) -> np.ndarray:
            return np.full(n, dev[key])

        return cls(
            clock_period=T,
            g_leak=g_leak,
            g_adap=dev["adaptation_strength"] * g_leak * ((P[:, 2] - lo) / (hi - lo)),
            t_ref=(P[:, 3] - lo) / (hi - lo) * 0.5 * T,
            v_th=P[:, 1].copy(),
            capacitance=full("membrane_capacitance"),
            synaptic_gain=full("synaptic_gain"),
            supply_voltage=full("supply_voltage"),
            spike_width=full("spike_width"),
            load_capacitance=full("load_capacitance"),
            pulse_width=full("pulse_width"),
            bias_power=full("bias_power"),
            v_max=full("v_max"),
        )

    def __len__(self) -> int:
        return self.g_leak.shape[0]

    def take(self, idx: np.ndarray) -> "LifBatch":
        kw = {k: v[idx] if isinstance(v, np.ndarray) else v for k, v in self.__dict__.items()}
        return LifBatch(**kw)


@dataclass
class LifStep:
    """Samples of one clock period for a batch of neurons, each (B, substeps+1)."""

    state: np.ndarray
    output: np.ndarray
    power: np.ndarray
    spike_counts: np.ndarray = field(default=None)  # type: ignore[assignment]


def _pulse_starts(T: float, count: np.ndarray, pulse_width: np.ndarray) -> np.ndarray:
    """Start times (B, max_count) of the evenly spread input pulses; NaN where unused."""
    nmax = int(count.max()) if count.size else 0
    if nmax == 0:
        return np.empty((count.shape[0], 0))
    j = np.arange(nmax)[None, :]
    n = count[:, None].astype(float)
    margin = T / 100
    span = (0.5 * T - pulse_width - 2 * margin)[:, None]
    frac = np.where(n > 1, j / np.maximum(n - 1, 1), 0.0)
    starts = margin + span * frac
    return np.where(j < n, starts, np.nan)


def lif_clock_step(
    batch: LifBatch,
    v0: np.ndarray,
    weighted_sum: np.ndarray,
    count: np.ndarray,
    substeps: int = 100,
) -> LifStep:
    """Simulate one clock period for every neuron in ``batch``."""
    T = batch.clock_period
    S = substeps
    B = len(batch)
    v0 = np.asarray(v0, dtype=float).reshape(B)
    count = np.asarray(count).astype(np.int64).reshape(B)
    weighted_sum = np.asarray(weighted_sum, dtype=float).reshape(B)
    dt = T / S
    t = np.arange(S + 1) * T / S

    amp = np.where(count > 0, weighted_sum / np.maximum(count, 1), 0.0)
    current = batch.synaptic_gain * amp
    starts = _pulse_starts(T, count, batch.pulse_width)
    if starts.shape[1]:
        ends = starts + batch.pulse_width[:, None]
        lo = np.maximum(t[None, None, :-1], starts[:, :, None])
        hi = np.minimum(t[None, None, 1:], ends[:, :, None])
        overlap = np.nansum(np.clip(hi - lo, 0.0, None), axis=1)
        on = (t[None, None, :] >= starts[:, :, None]) & (t[None, None, :] < ends[:, :, None])
        n_on = on.sum(axis=1)
    else:
        overlap = np.zeros((B, S))
        n_on = np.zeros((B, S + 1))
    drive = (current / batch.capacitance)[:, None] * overlap / dt
    inst_current = current[:, None] * n_on

    gl = batch.g_leak / batch.capacitance
    ga = np.zeros(B)
    inv_span = np.zeros(B)
    ref_end = np.full(B, -np.inf)
    v = v0.copy()
    vs = np.empty((B, S + 1))
    gs = np.empty((B, S + 1))
    vs[:, 0] = v
    spike_rows: list[np.ndarray] = []
    spike_steps: list[int] = []
    half = 0.5 * dt
    for s in range(S):
        t0 = t[s]
        t1 = t[s + 1]
        g0 = gl + ga * ((T - t0) * inv_span)
        g1 = gl + ga * ((T - t1) * inv_span)
        gs[:, s] = g0
        r = drive[:, s]
        k1 = r - g0 * v
        vp = v + dt * k1
        k2 = r - g1 * vp
        vn = v + half * (k1 + k2)
        vn = np.minimum(np.maximum(vn, 0.0), batch.v_max)
        frozen = t0 < ref_end
        v = np.where(frozen, v, vn)
        fire = ~frozen & (v >= batch.v_th)
        if fire.any():
            rows = np.flatnonzero(fire)
            v[rows] = 0.0
            ref_end[rows] = t1 + batch.t_ref[rows]
            ga[rows] = batch.g_adap[rows] / batch.capacitance[rows]
            inv_span[rows] = 1.0 / (T - t1)
            spike_rows.append(rows)
            spike_steps.append(s + 1)
        vs[:, s + 1] = v
    gs[:, S] = gl + ga * ((T - t[S]) * inv_span)

    out = np.zeros((B, S + 1))
    slope = np.zeros((B, S + 1))
    spikes = np.zeros(B, dtype=np.int64)
    for rows, s_sp in zip(spike_rows, spike_steps):
        t_sp = t[s_sp]
        width = batch.spike_width[rows][:, None]
        height = batch.supply_voltage[rows][:, None]
        rel = (t[None, :] - t_sp) / (0.5 * width)
        out[rows] += height * np.clip(1.0 - np.abs(rel - 1.0), 0.0, None)
        inside = (rel >= 0.0) & (rel < 2.0)
        slope[rows] += np.where(inside, 2.0 * height / width, 0.0)
        spikes[rows] += 1
    out = np.minimum(out, batch.v_max[:, None])

    cap = batch.capacitance[:, None]
    power = (
        batch.bias_power[:, None]
        + gs * cap * vs * vs
        + batch.supply_voltage[:, None] * np.abs(inst_current)
        + batch.load_capacitance[:, None] * batch.supply_voltage[:, None] * slope
    )
    return LifStep(state=vs, output=out, power=power, spike_counts=spikes)


def simulate_lif_batch(
    params: list[LifParams] | LifBatch,
    schedules: list[SpikeSchedule],
    duration: float,
    substeps_per_clock: int = 100,
    initial_state: np.ndarray | None = None,
) -> list[TransientTrace]:
    """Simulate many neurons side by side; one trace per neuron."""
    batch = params if isinstance(params, LifBatch) else LifBatch.from_params(params)
    if substeps_per_clock < 10:
        raise OracleError("substeps_per_clock must be >= 10")
    T = batch.clock_period
    n_steps = _n_steps(duration, T)
    B = len(batch)
    if len(schedules) != B:
        raise OracleError("one spike schedule per neuron is required")
    for sch in schedules:
        if len(sch) < n_steps:
            raise OracleError("spike schedule shorter than the simulated duration")
    ws = np.stack([s.weighted_sum[:n_steps] for s in schedules])
    cnt = np.stack([s.count[:n_steps] for s in schedules])
    S = substeps_per_clock
    v = np.zeros(B) if initial_state is None else np.asarray(initial_state, dtype=float).copy()
    state = np.empty((B, n_steps, S + 1))
    out = np.empty_like(state)
    power = np.empty_like(state)
    for k in range(n_steps):
        st = lif_clock_step(batch, v, ws[:, k], cnt[:, k], S)
        state[:, k] = st.state
        out[:, k] = st.output
        power[:, k] = st.power
        v = st.state[:, -1]
    traces = []
    for b in range(B):
        inputs = np.stack([ws[b], cnt[b].astype(float)], axis=1)
        traces.append(
            TransientTrace(
                dt=T / S,
                inputs=_stitch(np.repeat(inputs[:, None, :], S + 1, axis=1)),
                output=_stitch(out[b]),
                state=_stitch(state[b]),
                power=_stitch(power[b]),
                clock_period=T,
            )
        )
    return traces


def simulate_lif_neuron(
    params: LifParams,
    spike_schedule: SpikeSchedule,
    duration: float,
    substeps_per_clock: int = 100,
    initial_state: float = 0.0,
) -> TransientTrace:
    """Transient response of a single LIF neuron."""
    return simulate_lif_batch(
        [params], [spike_schedule], duration, substeps_per_clock, np.array([initial_state])
    )[0]


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------


def trapezoid_energy(power: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal integral along the last axis."""
    power = np.asarray(power, dtype=float)
    inner = power[..., 1:-1].sum(axis=-1)
    return dt * (0.5 * power[..., 0] + inner + 0.5 * power[..., -1])


def integrate_energy(trace: TransientTrace, t0: float, t1: float) -> float:
    """Energy in joules drawn between two sample-aligned times."""
    i0 = trace.sample_index(t0)
    i1 = trace.sample_index(t1)
    if not 0 <= i0 < i1 <= trace.power.shape[0] - 1:
        raise OracleError(f"energy window [{t0!r}, {t1!r}] outside trace")
    return float(trapezoid_energy(trace.power[i0 : i1 + 1], trace.dt))


def latency_from_samples(
    output: np.ndarray, dt: float, mode: str, threshold: float = 0.0
) -> np.ndarray:
    """Latency of each row of ``output`` (B, L) measured from its first sample.

    NaN marks rows whose output change does not exceed ``threshold``.
    """
    o = np.atleast_2d(np.asarray(output, dtype=float))
    B, L = o.shape
    res = np.full(B, np.nan)
    if mode == "rise90":
        start = o[:, 0]
        delta = o[:, -1] - start
        ok = np.abs(delta) > threshold
        target = start + 0.9 * delta
        sgn = np.sign(delta)[:, None]
        reached = sgn * (o[:, 1:] - target[:, None]) >= 0
        j = np.argmax(reached, axis=1) + 1
        rows = np.arange(B)
        prev = o[rows, j - 1]
        cur = o[rows, j]
        denom = np.where(cur != prev, cur - prev, 1.0)
        frac = np.clip((target - prev) / denom, 0.0, 1.0)
        lat = (j - 1 + frac) * dt
        res[ok] = lat[ok]
    elif mode == "spike_peak":
        peak = np.argmax(o, axis=1)
        ok = o[np.arange(B), peak] - o[:, 0] > threshold
        res[ok] = peak[ok] * dt
    else:
        raise OracleError(f"unknown latency mode {mode!r}")
    return res


def measure_latency(
    trace: TransientTrace,
    window_start: float,
    window_end: float,
    mode: str,
    threshold: float = 0.0,
) -> float | None:
    """Latency of the output transition inside a window, or ``None``."""
    i0 = trace.sample_index(window_start)
    i1 = trace.sample_index(window_end)
    if not 0 <= i0 < i1 < trace.output.shape[0]:
        raise OracleError("latency window outside trace")
    lat = latency_from_samples(trace.output[i0 : i1 + 1], trace.dt, mode, threshold)[0]
    return None if np.isnan(lat) else float(lat)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _n_steps(duration: float, clock_period: float) -> int:
    n = int(round(duration / clock_period))
    if n < 1 or abs(duration - n * clock_period) > 1e-6 * clock_period:
        raise OracleError(f"duration {duration!r} is not an integer number of clock periods")
    return n


def _stitch(per_step: np.ndarray) -> np.ndarray:
    """Join (n_steps, S+1, ...) period samples sharing boundary samples."""
    n_steps = per_step.shape[0]
    body = per_step[:, :-1].reshape((n_steps * (per_step.shape[1] - 1),) + per_step.shape[2:])
    return np.concatenate([body, per_step[-1:, -1]], axis=0)


def simulate(spec: CircuitSpec, p: np.ndarray, pwl: PwlSet, duration: float) -> TransientTrace:
    """Dispatch to the circuit's simulator at ``spec.substeps_per_clock`` samples per clock."""
    params = params_from_vector(spec, p)
    if spec.kind == LIF:
        sched = SpikeSchedule.from_pwl(pwl, spec.clock_period, _n_steps(duration, spec.clock_period))
        return simulate_lif_neuron(params, sched, duration, spec.substeps_per_clock)
    return simulate_crossbar_row(params, pwl, duration, spec.substeps_per_clock)
