"""Learnable template matching network for displacement-bias and
vibration-frequency estimation from wrapped phase.

Pipeline: a three-layer 1x3 CNN (LeakyReLU after every layer) maps the
wrapped phase to a displacement-domain signal, a learnable length-N_s
template slides over it, max pooling picks the matched peaks, their mean
is the bias estimate, and the matched series' power spectrum gives the
vibration frequency (soft spectral argmax while training, hard argmax
with parabolic sub-bin refinement at inference).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue, Parameter
from .errors import DataError, InvariantError
from .phase import PhaseSeries, DisplacementSeries


@dataclass(frozen=True)
class LtmHyper:
    """Architecture constants; validated against the pooling/stride rules."""

    template_len: int = 200          # N_s
    pool_kernel: int = 400           # N_p >= 2 N_s
    pool_stride: int = 100           # Delta_p <= N_s / 2
    conv_stride: int = 1             # Delta_x <= N_s / 10
    alpha: float = 0.1               # amplitude/bias coupling
    channels: tuple = (8, 8)         # hidden widths of the unwrap CNN
    negative_slope: float = 0.01

    def __post_init__(self):
        if self.pool_kernel < 2 * self.template_len:
            raise InvariantError("pool kernel must be at least twice the template length")
        if self.pool_stride > self.template_len // 2:
            raise InvariantError("pool stride must not exceed half the template length")
        if self.conv_stride > self.template_len // 10:
            raise InvariantError("conv stride must stay well below the template length")
        if self.conv_stride < 1 or self.pool_stride < 1:
            raise InvariantError("strides must be positive")
        if not 0 < self.alpha:
            raise InvariantError("alpha must be positive")

    def matched_len(self, n: int) -> int:
        return (n - self.template_len) // self.conv_stride + 1

    def pooled_len(self, n: int) -> int:
        return (self.matched_len(n) - self.pool_kernel) // self.pool_stride + 1


def template_shape(
    length: int, frame_rate_hz: float, bias: float = 1.0,
    frequency_hz: float = 10.0, alpha: float = 0.1,
) -> np.ndarray:
    """Harmonic-motion template sampled on the frame grid, l2-normalized."""
    t = np.arange(length) / frame_rate_hz
    shape = bias + alpha * bias * np.sin(2.0 * np.pi * frequency_hz * t)
    return shape / np.linalg.norm(shape)


class LtmParams:
    """All trainable weights: unwrap-CNN kernels/biases plus the template."""

    def __init__(self, hyper: LtmHyper, kernels, biases, template):
        self.hyper = hyper
        self.kernels = kernels   # list of layers; layer[out][in] -> Parameter(3,)
        self.biases = biases     # list of layers; layer[out] -> Parameter(1,)
        self.template = template

    @classmethod
    def initialize(
        cls,
        hyper: LtmHyper,
        frame_rate_hz: float,
        seed: int = 0,
        phase_gain: float | None = None,
        template_frequency_hz: float = 10.0,
        random_init: bool = False,
        noise_scale: float = 0.02,
    ) -> "LtmParams":
        """Warm start at the physical prior.

        The template is the harmonic-motion shape at the mid-range
        frequency. The CNN starts as an exact linear map of gain
        `phase_gain` threaded through a +/- channel pair (LeakyReLU(x) -
        LeakyReLU(-x) = (1 + slope) x), with small random weights on the
        spare channels; `random_init` drops the linear path for ablations.
        """
        rng = np.random.default_rng(seed)
        widths = [1, *hyper.channels, 1]
        tmpl = template_shape(
            hyper.template_len, frame_rate_hz, frequency_hz=template_frequency_hz,
            alpha=hyper.alpha,
        )
        if phase_gain is None:
            # target: unit phase -> roughly unit pooled output after the
            # template's DC gain, with the sign flip of the echo phase
            phase_gain = -1.0 / (2.0 * np.pi / 0.06) / float(np.sum(tmpl))
        correction = 1.0 + hyper.negative_slope
        magnitude = abs(phase_gain) ** (1.0 / 3.0)

        kernels: list[list[list[Parameter]]] = []
        biases: list[list[Parameter]] = []
        n_layers = len(widths) - 1
        for layer in range(n_layers):
            c_in, c_out = widths[layer], widths[layer + 1]
            layer_k = []
            for out in range(c_out):
                row = []
                for inp in range(c_in):
                    w = rng.normal(0.0, noise_scale, size=3)
                    row.append(Parameter(w, name=f"unwrap.l{layer}.k{out}_{inp}"))
                layer_k.append(row)
            layer_b = [
                Parameter(np.zeros(1), name=f"unwrap.l{layer}.b{out}")
                for out in range(c_out)
            ]
            kernels.append(layer_k)
            biases.append(layer_b)

        if not random_init and min(hyper.channels, default=0) >= 2:
            sign = -1.0 if phase_gain < 0 else 1.0
            # layer 0: channel 0 carries +a x, channel 1 carries -a x
            kernels[0][0][0].data = np.array([0.0, magnitude, 0.0])
            kernels[0][1][0].data = np.array([0.0, -magnitude, 0.0])
            # middle layers: rebuild the +/- pair from the previous pair
            for layer in range(1, n_layers - 1):
                for row in kernels[layer]:
                    for p in row:
                        p.data = rng.normal(0.0, noise_scale * 0.1, size=3)
                kernels[layer][0][0].data = np.array([0.0, magnitude / correction, 0.0])
                kernels[layer][0][1].data = np.array([0.0, -magnitude / correction, 0.0])
                kernels[layer][1][0].data = np.array([0.0, -magnitude / correction, 0.0])
                kernels[layer][1][1].data = np.array([0.0, magnitude / correction, 0.0])
            # last layer: collapse the pair with the requested sign
            kernels[-1][0][0].data = np.array([0.0, sign * magnitude / correction, 0.0])
            kernels[-1][0][1].data = np.array([0.0, -sign * magnitude / correction, 0.0])

        template = Parameter(tmpl, name="template")
        return cls(hyper, kernels, biases, template)

    @classmethod
    def zeros(cls, hyper: LtmHyper) -> "LtmParams":
        params = cls.initialize(hyper, frame_rate_hz=1000.0, random_init=True, noise_scale=0.0)
        params.template.data = np.zeros(hyper.template_len)
        return params

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for layer_k, layer_b in zip(self.kernels, self.biases):
            for row in layer_k:
                out.extend(row)
            out.extend(layer_b)
        out.append(self.template)
        return out

    def zero_grad(self) -> None:
        ad.zero_grad(self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in state:
                raise DataError(f"checkpoint is missing parameter {p.name}")
            p.data = np.asarray(state[p.name], dtype=np.float64).reshape(p.data.shape)


@dataclass
class MddEstimate:
    """Inference output: estimates, intermediates, and the rebuilt signal."""

    bias_m: float
    frequency_hz: float
    pooled_peaks: np.ndarray
    matched_series: np.ndarray
    reconstructed: DisplacementSeries


def unwrap_phase_cnn(params: LtmParams, phase: DiffValue | np.ndarray) -> DiffValue:
    """Length-preserving conv(1x3, pad 1) + LeakyReLU stack, applied three times."""
    x = phase if isinstance(phase, DiffValue) else ad.constant(phase)
    if x.data.shape[-1] < 3:
        raise DataError("phase series shorter than the convolution kernel")
    slope = params.hyper.negative_slope
    channels = [x]
    for layer_k, layer_b in zip(params.kernels, params.biases):
        next_channels = []
        for out_idx, row in enumerate(layer_k):
            acc = None
            for inp_idx, kern in enumerate(row):
                term = ad.conv1d(channels[inp_idx], kern, stride=1, padding=1)
                acc = term if acc is None else acc + term
            acc = acc + layer_b[out_idx]
            next_channels.append(ad.leaky_relu(acc, slope))
        channels = next_channels
    return channels[0]


def template_match(params: LtmParams, d: DiffValue) -> DiffValue:
    if d.data.shape[-1] < params.hyper.template_len:
        raise DataError("input shorter than the template")
    return ad.conv1d(d, params.template, stride=params.hyper.conv_stride, padding=0)


def pool_peaks(params: LtmParams, o: DiffValue) -> DiffValue:
    return ad.max_pool1d(o, params.hyper.pool_kernel, params.hyper.pool_stride)


def estimate_bias(o_pooled: DiffValue) -> DiffValue:
    return o_pooled.mean(axis=-1)


def hard_argmax_freq(
    power: np.ndarray, frame_rate_hz: float, series_length: int,
    exclude_dc: bool = True, refine: bool = True,
) -> np.ndarray:
    """Dominant bin frequency, optionally parabolic-refined to sub-bin accuracy."""
    power = np.asarray(power, dtype=np.float64)
    start = 1 if exclude_dc else 0
    body = power[..., start:]
    if not np.all(body.max(axis=-1) > 0):
        raise DataError("all-zero spectrum: frequency undefined")
    k = np.argmax(body, axis=-1) + start
    shift = np.zeros_like(k, dtype=np.float64)
    if refine:
        kc = np.clip(k, 1, power.shape[-1] - 2)
        a = np.take_along_axis(power, (kc - 1)[..., None], axis=-1)[..., 0]
        b = np.take_along_axis(power, kc[..., None], axis=-1)[..., 0]
        c = np.take_along_axis(power, (kc + 1)[..., None], axis=-1)[..., 0]
        denom = a - 2.0 * b + c
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(np.abs(denom) > 0, 0.5 * (a - c) / denom, 0.0)
        p = np.clip(p, -0.5, 0.5)
        shift = np.where(kc == k, p, 0.0)
    return (k + shift) * frame_rate_hz / series_length


def estimate_freq(
    d_v_hat: DiffValue | np.ndarray,
    frame_rate_hz: float,
    mode: str = "infer",
    temperature: float | None = None,
):
    """Vibration frequency of the matched series, DC excluded.

    Training mode returns a differentiable soft spectral argmax; inference
    mode a refined hard argmax as a plain array/float.
    """
    node = d_v_hat if isinstance(d_v_hat, DiffValue) else ad.constant(d_v_hat)
    if node.data.shape[-1] < 2:
        raise DataError("series too short for a spectrum")
    series_length = node.data.shape[-1]
    if mode == "train":
        power = ad.power_spectrum(node)
        return ad.soft_argmax_freq(
            power, frame_rate_hz, temperature=temperature,
            exclude_dc=True, series_length=series_length,
        )
    if mode == "infer":
        power = np.abs(np.fft.rfft(node.data, axis=-1)) ** 2
        return hard_argmax_freq(power, frame_rate_hz, series_length, exclude_dc=True)
    raise InvariantError(f"unknown estimate_freq mode {mode!r}")


def reconstruct(
    bias_m: float, frequency_hz: float, alpha: float, n_frames: int, frame_rate_hz: float
) -> DisplacementSeries:
    """Harmonic-motion signal implied by the estimated parameters."""
    t = np.arange(n_frames) / frame_rate_hz
    values = bias_m + alpha * bias_m * np.sin(2.0 * np.pi * frequency_hz * t)
    return DisplacementSeries(values_m=values, frame_rate_hz=frame_rate_hz)


def forward_graph(
    params: LtmParams,
    phase_values: np.ndarray,
    frame_rate_hz: float,
    mode: str = "train",
    temperature: float | None = None,
) -> dict:
    """Run the full pipeline, returning the named intermediate nodes.

    `phase_values` may carry a leading batch axis; bias/frequency then come
    out per sample.
    """
    x = ad.constant(phase_values)
    d = unwrap_phase_cnn(params, x)
    o = template_match(params, d)
    pooled = pool_peaks(params, o)
    bias = estimate_bias(pooled)
    freq = estimate_freq(o, frame_rate_hz, mode=mode, temperature=temperature)
    return {"unwrapped": d, "matched": o, "pooled": pooled, "bias": bias, "freq": freq}


def forward(params: LtmParams, phase: PhaseSeries) -> MddEstimate:
    """Inference on one wrapped phase series."""
    nodes = forward_graph(params, phase.values_rad, phase.frame_rate_hz, mode="infer")
    bias = float(nodes["bias"].data)
    freq = float(nodes["freq"]) if np.ndim(nodes["freq"]) == 0 else float(nodes["freq"][()])
    recon = reconstruct(
        bias, freq, params.hyper.alpha, len(phase.values_rad), phase.frame_rate_hz
    )
    return MddEstimate(
        bias_m=bias,
        frequency_hz=freq,
        pooled_peaks=nodes["pooled"].data.copy(),
        matched_series=nodes["matched"].data.copy(),
        reconstructed=recon,
    )


def infer_batch(
    params: LtmParams, phases: np.ndarray, frame_rate_hz: float, chunk: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inference: returns (bias_m, frequency_hz) arrays."""
    phases = np.asarray(phases, dtype=np.float64)
    biases, freqs = [], []
    for lo in range(0, phases.shape[0], chunk):
        nodes = forward_graph(params, phases[lo : lo + chunk], frame_rate_hz, mode="infer")
        biases.append(nodes["bias"].data)
        freqs.append(np.atleast_1d(nodes["freq"]))
    return np.concatenate(biases), np.concatenate(freqs)


# ---------------------------------------------------------------------------
# Model persistence: checkpoint + plain-text architecture manifest
# ---------------------------------------------------------------------------

def save_model(out_dir: str | Path, params: LtmParams, extra: dict | None = None) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ad.save_checkpoint(out_dir / "params.ckpt", params.state_dict())
    manifest = {"format": "ltm-model-v1", "hyper": asdict(params.hyper)}
    if extra:
        manifest.update(extra)
    (out_dir / "architecture.json").write_text(json.dumps(manifest, indent=2))


def load_model(in_dir: str | Path) -> LtmParams:
    in_dir = Path(in_dir)
    arch_path = in_dir / "architecture.json"
    if not arch_path.exists():
        raise DataError(f"no architecture manifest in {in_dir}")
    manifest = json.loads(arch_path.read_text())
    hyper_kwargs = dict(manifest["hyper"])
    hyper_kwargs["channels"] = tuple(hyper_kwargs["channels"])
    hyper = LtmHyper(**hyper_kwargs)
    params = LtmParams.initialize(hyper, frame_rate_hz=1000.0, random_init=True)
    params.load_state_dict(ad.load_checkpoint(in_dir / "params.ckpt"))
    return params
