"""Spiking network of LIF neurons driven by Poisson-encoded images.

Every image gets its own copy of the network, so a batch of images is one
large set of independent circuit instances stepped together.  A spike emitted
by layer ``l`` at step ``k`` reaches layer ``l + 1`` at step ``k + 1``.
A neuron's per-step input is the pair (sum of weight * spike amplitude over
arriving spikes, number of arriving spikes on nonzero synapses); a neuron with
no arriving spike is idle that step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import engine as eng
from .. import oracle
from ..circuits import CircuitSpec


@dataclass
class SpikingNet:
    spec: CircuitSpec
    dims: tuple[int, ...]
    weights: list[np.ndarray]  # (n_out, n_in) in [-1, 1]
    knobs: list[np.ndarray]  # (n_out, n_params)
    timesteps: int = 100
    input_rate: float = 0.12

    def __post_init__(self) -> None:
        lo, hi = self.spec.weight_range
        for w in self.weights:
            if w.min() < lo or w.max() > hi:
                raise ValueError(f"weights must lie in [{lo}, {hi}]")

    @property
    def amplitude(self) -> float:
        return self.spec.device["supply_voltage"]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def layer_input(self, layer: int, spikes: np.ndarray) -> np.ndarray:
        """(B, n_out, 2) neuron inputs from upstream spikes (B, n_in) of one step."""
        W = self.weights[layer]
        s = spikes.astype(float)
        wsum = (s * self.amplitude) @ W.T
        count = s @ (W != 0).T.astype(float)
        return np.stack([wsum, count], axis=-1)


def poisson_encode(intensities: np.ndarray, n_steps: int, seed: int) -> np.ndarray:
    """Boolean spikes (..., n_steps, n_pixels); each pixel fires with probability = intensity."""
    p = np.asarray(intensities, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("intensities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    u = rng.random(p.shape[:-1] + (n_steps, p.shape[-1]))
    return u < p[..., None, :]


def encode_images(net: SpikingNet, images: np.ndarray, seed: int) -> np.ndarray:
    return poisson_encode(np.clip(images * net.input_rate, 0.0, 1.0), net.timesteps, seed)


@dataclass
class SnnResult:
    counts: np.ndarray  # (n_img, n_classes)
    classes: np.ndarray
    energy: np.ndarray  # per image
    state_log: list[np.ndarray] = field(default_factory=list)  # per layer (steps, n_img, n_out)
    output_log: list[np.ndarray] = field(default_factory=list)
    oracle_state_log: list[np.ndarray] = field(default_factory=list)
    spike_log: list[np.ndarray] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _classify(counts: np.ndarray) -> np.ndarray:
    return np.argmax(counts, axis=1)


class _OracleLayer:
    """Lock-step transient simulation of one layer for a batch of images."""

    def __init__(self, net: SpikingNet, layer: int, n_img: int) -> None:
        P = np.tile(net.knobs[layer], (n_img, 1))
        self.batch = oracle.LifBatch.from_spec(net.spec, P)
        self.v = np.zeros(P.shape[0])
        self.S = net.spec.substeps_per_clock
        self.dt = net.spec.clock_period / self.S

    def step(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Advance one clock; returns (v_start, peak output, energy, v_end) per neuron."""
        v0 = self.v.copy()
        st = oracle.lif_clock_step(self.batch, self.v, x[:, 0], np.rint(x[:, 1]).astype(np.int64), self.S)
        self.v = st.state[:, -1].copy()
        return v0, st.output.max(axis=1), oracle.trapezoid_energy(st.power, self.dt), self.v


def oracle_snn(net: SpikingNet, spikes: np.ndarray) -> SnnResult:
    """Full transient simulation of the network, spikes propagated from oracle outputs."""
    n_img = spikes.shape[0]
    layers = [_OracleLayer(net, l, n_img) for l in range(net.n_layers)]
    thr = net.spec.spike_threshold
    n_total = net.timesteps + net.n_layers - 1
    energy = np.zeros(n_img)
    counts = np.zeros((n_img, net.dims[-1]))
    upstream = [np.zeros((n_img, d), dtype=bool) for d in net.dims[:-1]]
    for k in range(n_total):
        inp = spikes[:, k] if k < net.timesteps else np.zeros((n_img, net.dims[0]), dtype=bool)
        new_up = []
        src = inp
        for l, lay in enumerate(layers):
            x = net.layer_input(l, src if l == 0 else upstream[l]).reshape(-1, 2)
            _, peak, e, _ = lay.step(x)
            energy += e.reshape(n_img, -1).sum(axis=1)
            out = (peak > thr).reshape(n_img, -1)
            if l + 1 < net.n_layers:
                new_up.append(out)
            else:
                counts += out
        for l in range(1, net.n_layers):
            upstream[l] = new_up[l - 1]
    return SnnResult(counts, _classify(counts), energy)


def run_snn(
    net: SpikingNet,
    spikes: np.ndarray,
    predictors,
    mode: str = "predicted_state",
    track_oracle: bool = False,
) -> SnnResult:
    """Surrogate simulation of the network.

    ``mode="oracle_state"`` replaces each neuron's carried state with the
    transient oracle's state for the same inputs before every event; the
    oracle is then run in lock step (``track_oracle`` forces it otherwise).
    """
    if mode not in ("predicted_state", "oracle_state"):
        raise ValueError(f"unknown mode {mode!r}")
    pred = eng.as_predictors(predictors)
    n_img = spikes.shape[0]
    if spikes.shape[1] < net.timesteps:
        raise ValueError("spike schedule shorter than the network's timesteps")
    thr = net.spec.spike_threshold
    L = net.n_layers
    states = [eng.EngineState.create(net.spec, np.tile(net.knobs[l], (n_img, 1))) for l in range(L)]
    use_oracle = track_oracle or mode == "oracle_state"
    orc = [_OracleLayer(net, l, n_img) for l in range(L)] if use_oracle else None
    n_total = net.timesteps + L - 1
    energy_c = [np.zeros(s.n_circuits) for s in states]
    counts = np.zeros((n_img, net.dims[-1]))
    upstream = [np.zeros((n_img, d), dtype=bool) for d in net.dims[:-1]]
    s_log = [np.zeros((n_total, n_img, d)) for d in net.dims[1:]]
    o_log = [np.zeros((n_total, n_img, d)) for d in net.dims[1:]]
    t_log = [np.zeros((n_total, n_img, d)) for d in net.dims[1:]] if use_oracle else []
    spike_log = [np.zeros((n_total, n_img, d), dtype=bool) for d in net.dims[1:]]
    for k in range(n_total):
        inp = spikes[:, k] if k < net.timesteps else np.zeros((n_img, net.dims[0]), dtype=bool)
        new_up = []
        for l in range(L):
            x = net.layer_input(l, inp if l == 0 else upstream[l]).reshape(-1, 2)
            S = np.flatnonzero(x[:, 1] > 0)
            true_v0 = None
            if orc is not None:
                v0, _, _, v1 = orc[l].step(x)
                true_v0 = v0[S]
            r = eng.step_k(states[l], k, S, x[S], pred, state_at_k=true_v0 if mode == "oracle_state" else None)
            energy_c[l][S] += r.energy
            fired = np.zeros(states[l].n_circuits, dtype=bool)
            fired[S] = r.output > thr
            out = np.zeros(states[l].n_circuits)
            out[S] = r.output
            if mode == "oracle_state":
                # idle neurons are corrected through state_at_k at their next event
                states[l].state[S] = v1[S]
            s_log[l][k] = states[l].state.reshape(n_img, -1) if mode != "oracle_state" else _pred_state(states[l], r, S, n_img)
            o_log[l][k] = out.reshape(n_img, -1)
            if orc is not None:
                t_log[l][k] = v1.reshape(n_img, -1)
            fired = fired.reshape(n_img, -1)
            spike_log[l][k] = fired
            if l + 1 < L:
                new_up.append(fired)
            else:
                counts += fired
        for l in range(1, L):
            upstream[l] = new_up[l - 1]
    for l in range(L):
        energy_c[l] += eng.flush(states[l], n_total, pred)
    energy = sum(e.reshape(n_img, -1).sum(axis=1) for e in energy_c)
    return SnnResult(
        counts, _classify(counts), energy, s_log, o_log, t_log, spike_log,
        {"negative_energy_clamps": sum(s.negative_energy_clamps for s in states)},
    )


def _pred_state(state: eng.EngineState, r: eng.StepResult, S: np.ndarray, n_img: int) -> np.ndarray:
    v = state.state.copy()
    v[S] = r.state
    return v.reshape(n_img, -1)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def default_knobs(spec: CircuitSpec, n: int, seed: int, jitter: float = 0.02) -> np.ndarray:
    """Mid-range knobs with a small seeded spread, clipped to the knob range."""
    lo, hi = spec.device["knob_low"], spec.device["knob_high"]
    base = np.array([0.5 * (lo + hi), lo + 0.85 * (hi - lo), lo, lo])
    rng = np.random.default_rng(seed)
    return np.clip(base + rng.uniform(-jitter, jitter, size=(n, 4)), lo, hi)


def train_snn(
    spec: CircuitSpec,
    X: np.ndarray,
    y: np.ndarray,
    dims: tuple[int, ...] = (64, 32, 10),
    timesteps: int = 100,
    input_rate: float = 0.12,
    epochs: int = 80,
    learning_rate: float = 0.01,
    weight_scale: float | None = None,
    keep: tuple[float, ...] | None = None,
    seed: int = 0,
) -> SpikingNet:
    """Rate-model training followed by conversion to bounded synaptic weights.

    A ReLU network on input rates is trained with softmax cross-entropy; its
    weights are rescaled into the weight range so the largest magnitude sets
    the bound, times ``weight_scale`` (default: largest scale that keeps every
    weight in range).

    ``keep`` gives, per layer, the fraction of largest-magnitude synapses kept.
    Pruning happens halfway through training and the rest of the epochs train
    the surviving weights.  Fewer synapses means fewer spikes per neuron per
    step, which keeps the network inside the characterized spike-count range.
    """
    rng = np.random.default_rng(seed)
    n_layers = len(dims) - 1
    Ws = [rng.normal(0, np.sqrt(2.0 / dims[i]), size=(dims[i + 1], dims[i])) for i in range(n_layers)]
    m = [np.zeros_like(w) for w in Ws]
    v = [np.zeros_like(w) for w in Ws]
    masks = [np.ones_like(w) for w in Ws]
    R = X * input_rate
    t = 0
    for epoch in range(epochs):
        if keep is not None and epoch == epochs // 2:
            for i, frac in enumerate(keep):
                cut = np.quantile(np.abs(Ws[i]), 1.0 - frac)
                masks[i] = (np.abs(Ws[i]) >= cut).astype(float)
                Ws[i] *= masks[i]
        order = rng.permutation(len(y))
        for s in range(0, len(y), 64):
            idx = order[s : s + 64]
            acts = [R[idx]]
            for i, W in enumerate(Ws):
                h = acts[-1] @ W.T
                acts.append(np.maximum(h, 0) if i < n_layers - 1 else h)
            z = acts[-1] * 10.0
            z -= z.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(len(idx)), y[idx]] -= 1
            g = 10.0 * p / len(idx)
            grads = [None] * n_layers
            for i in reversed(range(n_layers)):
                grads[i] = g.T @ acts[i]
                if i:
                    g = (g @ Ws[i]) * (acts[i] > 0)
            t += 1
            for i in range(n_layers):
                m[i] = 0.9 * m[i] + 0.1 * grads[i]
                v[i] = 0.999 * v[i] + 0.001 * grads[i] ** 2
                Ws[i] -= learning_rate * (m[i] / (1 - 0.9**t)) / (np.sqrt(v[i] / (1 - 0.999**t)) + 1e-8)
                Ws[i] *= masks[i]
    lo, hi = spec.weight_range
    bound = min(-lo, hi)
    out = []
    for W in Ws:
        scale = bound / np.abs(W).max() if weight_scale is None else weight_scale
        out.append(np.clip(W * scale, lo, hi))
    knobs = [default_knobs(spec, d, seed + 1 + i) for i, d in enumerate(dims[1:])]
    return SpikingNet(spec, tuple(dims), out, knobs, timesteps, input_rate)
