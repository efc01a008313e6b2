"""Layered ANN built from crossbar rows with ADC/DAC between layers.

Each output neuron of a layer owns one crossbar row per 32-input segment of its
fan-in.  The row's bias cell is used on the first segment only.  Segment
outputs are digitized, summed digitally, passed through a sigmoid lookup table
and converted back to a voltage for the next layer.  The last layer's summed
digital values are the class scores.

Images stream through the network one layer per clock step: image ``i``
occupies layer ``l`` at step ``i * n_layers + l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import engine as eng
from .. import oracle
from ..circuits import CircuitSpec
from .quant import quantize


@dataclass
class LayeredAnn:
    spec: CircuitSpec
    dims: tuple[int, ...]
    weights: list[np.ndarray]  # (n_out, n_in) ternary
    biases: list[np.ndarray]  # (n_out,) ternary
    adc_bits: int | None = 8
    dac_bits: int | None = 8
    act_slope: float = 2.0
    act_offset: float = 0.0

    @property
    def K(self) -> int:
        return self.spec.input_dims

    @property
    def adc_range(self) -> tuple[float, float]:
        return self.spec.output_range

    @property
    def dac_range(self) -> tuple[float, float]:
        return self.spec.input_range

    def n_segments(self, layer: int) -> int:
        return math.ceil(self.dims[layer] / self.K)

    def instance_params(self, layer: int) -> np.ndarray:
        """Parameter rows (n_out * n_seg, K + 1), neuron-major."""
        W, b = self.weights[layer], self.biases[layer]
        nseg = self.n_segments(layer)
        Wp = np.zeros((W.shape[0], nseg * self.K))
        Wp[:, : W.shape[1]] = W
        P = np.zeros((W.shape[0], nseg, self.K + 1))
        P[:, :, : self.K] = Wp.reshape(W.shape[0], nseg, self.K)
        P[:, 0, self.K] = b
        return P.reshape(-1, self.K + 1)

    def segment_inputs(self, layer: int, x: np.ndarray) -> np.ndarray:
        """Per-instance input rows (B, n_out * n_seg, K) for layer inputs ``x`` (B, n_in)."""
        nseg = self.n_segments(layer)
        xp = np.zeros((x.shape[0], nseg * self.K))
        xp[:, : x.shape[1]] = x
        xs = xp.reshape(x.shape[0], 1, nseg, self.K)
        n_out = self.weights[layer].shape[0]
        return np.broadcast_to(xs, (x.shape[0], n_out, nseg, self.K)).reshape(x.shape[0], -1, self.K)

    def encode_input(self, intensities: np.ndarray) -> np.ndarray:
        lo, hi = self.dac_range
        return quantize(lo + (hi - lo) * np.asarray(intensities, dtype=float), self.dac_bits, lo, hi)

    def digitize(self, layer: int, seg_out: np.ndarray) -> np.ndarray:
        """Summed digital value per neuron from segment outputs (B, n_out * n_seg)."""
        lo, hi = self.adc_range
        q = quantize(seg_out, self.adc_bits, lo, hi)
        return q.reshape(q.shape[0], -1, self.n_segments(layer)).sum(axis=2)

    def activation(self, z: np.ndarray) -> np.ndarray:
        """Sigmoid lookup from the summed digital value to the next layer's DAC voltage."""
        lo, hi = self.dac_range
        a = lo + (hi - lo) / (1.0 + np.exp(-self.act_slope * (z - self.act_offset)))
        return quantize(a, self.dac_bits, lo, hi)


def ideal_segment_outputs(net: LayeredAnn, layer: int, x: np.ndarray) -> np.ndarray:
    """Settled row outputs without circuit dynamics, (B, n_out * n_seg)."""
    dev = net.spec.device
    P = net.instance_params(layer)
    xs = net.segment_inputs(layer, x)
    u = np.einsum("bik,ik->bi", xs, P[:, : net.K]) + P[:, net.K] * dev["bias_ref"]
    return np.clip(dev["gain"] * u, dev["rail_low"], dev["rail_high"])


def ideal_scores(net: LayeredAnn, intensities: np.ndarray) -> np.ndarray:
    x = net.encode_input(intensities)
    for layer in range(len(net.weights)):
        z = net.digitize(layer, ideal_segment_outputs(net, layer, x))
        x = net.activation(z) if layer < len(net.weights) - 1 else z
    return x


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _ternary(w: np.ndarray, delta: float) -> np.ndarray:
    return np.where(np.abs(w) > delta, np.sign(w), 0.0)


def train_ann(
    spec: CircuitSpec,
    X: np.ndarray,
    y: np.ndarray,
    dims: tuple[int, ...] = (64, 32, 10),
    epochs: int = 60,
    batch_size: int = 64,
    learning_rate: float = 0.01,
    delta: float = 0.33,
    temperature: float = 4.0,
    act_slope: float = 2.0,
    act_offset: float = 0.0,
    seed: int = 0,
) -> LayeredAnn:
    """Ternary-weight training with a straight-through estimator.

    The forward pass mirrors the hardware chain (segment clamp, digital sum,
    sigmoid) without quantization; latent weights live in [-1, 1].
    """
    rng = np.random.default_rng(seed)
    dev = spec.device
    g, bref = dev["gain"], dev["bias_ref"]
    r_lo, r_hi = dev["rail_low"], dev["rail_high"]
    lo, hi = spec.input_range
    K = spec.input_dims
    n_layers = len(dims) - 1
    Ws = [rng.normal(0, 0.5, size=(dims[i + 1], dims[i])) for i in range(n_layers)]
    bs = [np.zeros(dims[i + 1]) for i in range(n_layers)]
    params = Ws + bs
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0
    x0 = lo + (hi - lo) * X
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for s in range(0, len(y), batch_size):
            idx = order[s : s + batch_size]
            h = x0[idx]
            cache = []
            for layer in range(n_layers):
                Wt = _ternary(params[layer], delta)
                bt = _ternary(params[n_layers + layer], delta)
                nseg = math.ceil(dims[layer] / K)
                hp = np.zeros((h.shape[0], nseg * K))
                hp[:, : h.shape[1]] = h
                Wp = np.zeros((Wt.shape[0], nseg * K))
                Wp[:, : Wt.shape[1]] = Wt
                u = np.einsum("bsk,osk->bos", hp.reshape(-1, nseg, K), Wp.reshape(-1, nseg, K))
                u[:, :, 0] += bt * bref
                z = np.clip(g * u, r_lo, r_hi)
                zs = z.sum(axis=2)
                inside = (g * u > r_lo) & (g * u < r_hi)
                if layer < n_layers - 1:
                    sig = 1.0 / (1.0 + np.exp(-act_slope * (zs - act_offset)))
                    out = lo + (hi - lo) * sig
                else:
                    sig = None
                    out = zs
                cache.append((h, hp, Wp, nseg, inside, sig))
                h = out
            logits = temperature * h
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(len(idx)), y[idx]] -= 1.0
            grad_out = temperature * p / len(idx)
            grads = [None] * len(params)
            for layer in reversed(range(n_layers)):
                h_in, hp, Wp, nseg, inside, sig = cache[layer]
                if sig is not None:
                    grad_out = grad_out * (hi - lo) * act_slope * sig * (1 - sig)
                gu = grad_out[:, :, None] * inside * g  # (B, n_out, nseg)
                gW = np.einsum("bos,bsk->osk", gu, hp.reshape(-1, nseg, K)).reshape(Wp.shape[0], -1)
                grads[layer] = gW[:, : dims[layer]]
                grads[n_layers + layer] = gu[:, :, 0].sum(axis=0) * bref
                if layer:
                    gh = np.einsum("bos,osk->bsk", gu, Wp.reshape(-1, nseg, K)).reshape(len(idx), -1)
                    grad_out = gh[:, : dims[layer]]
            t += 1
            for i, (pr, gr) in enumerate(zip(params, grads)):
                m[i] = 0.9 * m[i] + 0.1 * gr
                v[i] = 0.999 * v[i] + 0.001 * gr * gr
                mh = m[i] / (1 - 0.9**t)
                vh = v[i] / (1 - 0.999**t)
                params[i] = np.clip(pr - learning_rate * mh / (np.sqrt(vh) + 1e-8), -1.0, 1.0)
    W_final = [_ternary(params[i], delta) for i in range(n_layers)]
    b_final = [_ternary(params[n_layers + i], delta) for i in range(n_layers)]
    return LayeredAnn(spec, tuple(dims), W_final, b_final, act_slope=act_slope, act_offset=act_offset)


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


@dataclass
class AnnResult:
    scores: np.ndarray
    classes: np.ndarray
    energy: np.ndarray  # per image, joules
    latency: np.ndarray  # per image, seconds
    total_energy: float
    extra: dict = field(default_factory=dict)


def _argmax_lowest(scores: np.ndarray) -> np.ndarray:
    return np.argmax(scores, axis=1)  # numpy returns the first maximum


def run_ann_inference(
    net: LayeredAnn, intensities: np.ndarray, predictors, flush_at_end: bool = True
) -> AnnResult:
    """Stream images through the surrogate network one layer per clock step."""
    pred = eng.as_predictors(predictors)
    imgs = np.atleast_2d(np.asarray(intensities, dtype=float))
    n_img = imgs.shape[0]
    L = len(net.weights)
    states = [eng.EngineState.create(net.spec, net.instance_params(l)) for l in range(L)]
    prev_x: list[np.ndarray | None] = [None] * L
    energy = np.zeros(n_img)
    latency = np.zeros(n_img)
    scores = np.zeros((n_img, net.dims[-1]))
    for i in range(n_img):
        x = net.encode_input(imgs[i : i + 1])
        for l in range(L):
            k = i * L + l
            xs = net.segment_inputs(l, x)[0]
            if prev_x[l] is None:
                S = np.arange(xs.shape[0])
            else:
                S = np.flatnonzero(np.any(xs != prev_x[l], axis=1))
            prev_x[l] = xs
            r = eng.step_k(states[l], k, S, xs[S], pred)
            energy[i] += r.energy.sum()
            if r.latency.size:
                latency[i] += r.latency.max()
            seg_out = states[l].output[None, :]
            z = net.digitize(l, seg_out)
            x = net.activation(z) if l < L - 1 else z
        scores[i] = x[0]
    if flush_at_end and n_img:
        for l in range(L):
            energy[-1] += eng.flush(states[l], n_img * L, pred).sum()
    return AnnResult(scores, _argmax_lowest(scores), energy, latency, float(energy.sum()),
                     {"negative_energy_clamps": sum(s.negative_energy_clamps for s in states)})


def oracle_ann(net: LayeredAnn, intensities: np.ndarray) -> AnnResult:
    """Same streaming schedule, every row simulated by the transient oracle."""
    imgs = np.atleast_2d(np.asarray(intensities, dtype=float))
    n_img = imgs.shape[0]
    L = len(net.weights)
    spec = net.spec
    T = spec.clock_period
    S = spec.substeps_per_clock
    n_total = n_img * L
    x_all = net.encode_input(imgs)  # inputs of layer 0 per image
    energy = np.zeros(n_img)
    latency = np.zeros(n_img)
    for l in range(L):
        P = net.instance_params(l)
        xs = net.segment_inputs(l, x_all)  # (n_img, n_inst, K)
        n_inst = P.shape[0]
        # layer l is driven at steps i*L + l and holds the value until its next turn
        n_steps = n_total - l
        seg_out = np.zeros((n_img, n_inst))
        lat = np.zeros((n_img, n_inst))
        # idle before the layer's first turn
        energy[0] += spec.device["leak_power"] * l * T * P.shape[0]
        times = (np.arange(n_img) * L) * T
        for j in range(n_inst):
            pwl = oracle.PwlSet(times, xs[:, j, :])
            tr = oracle.simulate_crossbar_row(oracle.crossbar_params(spec, P[j]), pwl, n_steps * T, S)
            ends = (np.arange(n_img) * L + 1) * S
            seg_out[:, j] = tr.output[ends]
            for i in range(n_img):
                lo_i = max(i * L - l, 0) * S
                hi_i = min((i + 1) * L - l, n_steps) * S
                energy[i] += float(oracle.trapezoid_energy(tr.power[lo_i : hi_i + 1], tr.dt))
            wins = np.stack([tr.output[(i * L) * S : (i * L + 1) * S + 1] for i in range(n_img)])
            lt = oracle.latency_from_samples(wins, tr.dt, "rise90", spec.output_change_epsilon)
            lat[:, j] = np.nan_to_num(lt, nan=0.0)
        latency += lat.max(axis=1)
        z = net.digitize(l, seg_out)
        x_all = net.activation(z) if l < L - 1 else z
    scores = x_all
    return AnnResult(scores, _argmax_lowest(scores), energy, latency, float(energy.sum()))
