"""FMCW echo synthesis for a deforming point target plus platform clutter.

Signal model (per frame l, fast-time sample n = 1..N_f):

    S(l, n) = exp(-j 2 pi (f0 + B n / N_f) r(l) / c0)

with r(l) the round-trip distance of the target, a sum of Q analogous
clutter phasors at their own distances, and complex AWGN on top. The
round-trip distance of the observation point is

    r(l) = r(1) + d_r + d_a sin(2 pi f_v t_l) + d_b sin(2 pi f_b t_l)

with t_l = (l-1) / prf, so vibration frequencies are plain Hz.

Fast-time sample index follows the 1-based convention above; arrays are
0-based, so stored sample m corresponds to n = m + 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

C0 = 299_792_458.0  # vacuum speed of light, m/s


@dataclass(frozen=True)
class IsacConfig:
    """Radar/platform constants of the sensing side of the base station."""

    carrier_frequency_hz: float = 4.9e9
    bandwidth_hz: float = 100e6
    samples_per_pulse: int = 200
    prf_hz: float = 1000.0
    frames_per_slot: int = 1000
    tx_position_m: tuple = (0.0, 0.0, 40.896)
    rx_position_m: tuple = (0.003, 0.311, 46.396)
    target_azimuth_deg: float = 8.0
    target_lookdown_deg: float = 27.0
    carrier_wavelength_m: float = field(default=0.0)

    def __post_init__(self):
        if self.carrier_frequency_hz <= 0:
            raise ConfigError("carrier frequency must be positive")
        if self.bandwidth_hz < 0:
            raise ConfigError("bandwidth must be non-negative")
        if self.samples_per_pulse < 2:
            raise ConfigError("need at least 2 fast-time samples per pulse")
        if self.prf_hz <= 0 or self.frames_per_slot < 1:
            raise ConfigError("prf and frames per slot must be positive")
        lam = C0 / self.carrier_frequency_hz
        if self.carrier_wavelength_m == 0.0:
            object.__setattr__(self, "carrier_wavelength_m", lam)
        elif abs(self.carrier_wavelength_m - lam) > 1e-12 * lam:
            raise ConfigError("carrier_wavelength_m inconsistent with carrier frequency")

    @property
    def slot_duration_s(self) -> float:
        return self.frames_per_slot / self.prf_hz

    @property
    def effective_center_frequency_hz(self) -> float:
        """Frequency governing the peak-bin phase slope versus distance.

        At a fixed range bin the extracted phase is exactly linear in the
        round-trip distance r with slope -2 pi f_eff / c0, where the
        bandwidth term collects the 1-based fast-time phase ramp plus the
        DFT leakage phase of the dechirped tone:

            f_eff = f0 + B (N_f + 1) / (2 N_f)
        """
        nf = self.samples_per_pulse
        return self.carrier_frequency_hz + self.bandwidth_hz * (nf + 1) / (2.0 * nf)

    @property
    def effective_wavelength_m(self) -> float:
        return C0 / self.effective_center_frequency_hz

    def frame_times_s(self) -> np.ndarray:
        return np.arange(self.frames_per_slot) / self.prf_hz

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class SceneParams:
    """Generative ground truth for one observation slot."""

    initial_roundtrip_m: float = 30.0
    mdd_bias_m: float = 0.0
    mdd_amplitude_m: float = 0.0
    mdd_frequency_hz: float = 0.0
    clutter_amplitude_m: float = 0.0
    clutter_frequency_hz: float = 0.0
    clutter_element_count: int = 0
    snr_db: float | None = None
    clutter_element_amplitudes: tuple | None = None

    def __post_init__(self):
        if min(self.mdd_amplitude_m, self.clutter_amplitude_m) < 0:
            raise ConfigError("amplitudes must be non-negative")
        if min(self.mdd_frequency_hz, self.clutter_frequency_hz) < 0:
            raise ConfigError("frequencies must be non-negative")
        if self.clutter_element_count < 0:
            raise ConfigError("clutter element count must be non-negative")
        if self.initial_roundtrip_m < 0:
            raise ConfigError("initial round-trip distance must be non-negative")
        amps = self.clutter_element_amplitudes
        if amps is not None and len(amps) != self.clutter_element_count:
            raise ConfigError("clutter amplitude list must match element count")


@dataclass
class EchoCube:
    """Complex slow-time x fast-time sample matrix S(l, n)."""

    samples: np.ndarray  # (frames, samples_per_pulse) complex128
    frame_times_s: np.ndarray  # (frames,)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        self.frame_times_s = np.asarray(self.frame_times_s, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.frame_times_s.shape[0]:
            raise ConfigError("cube shape inconsistent with frame time vector")


def _check_slow_time_nyquist(cfg: IsacConfig, scene: SceneParams) -> None:
    limit = cfg.prf_hz / 2.0
    if scene.mdd_amplitude_m > 0 and scene.mdd_frequency_hz >= limit:
        raise ConfigError(
            f"mDD frequency {scene.mdd_frequency_hz} Hz aliases above prf/2 = {limit} Hz"
        )
    if scene.clutter_amplitude_m > 0 and scene.clutter_frequency_hz >= limit:
        raise ConfigError(
            f"clutter frequency {scene.clutter_frequency_hz} Hz aliases above prf/2 = {limit} Hz"
        )


def compose_distance_series(cfg: IsacConfig, scene: SceneParams) -> np.ndarray:
    """Round-trip target distance per frame, in meters (noise-free)."""
    _check_slow_time_nyquist(cfg, scene)
    t = cfg.frame_times_s()
    d = scene.initial_roundtrip_m + scene.mdd_bias_m
    d = d + scene.mdd_amplitude_m * np.sin(2.0 * np.pi * scene.mdd_frequency_hz * t)
    d = d + scene.clutter_amplitude_m * np.sin(2.0 * np.pi * scene.clutter_frequency_hz * t)
    return np.asarray(d, dtype=np.float64)


def synth_echo_frame(cfg: IsacConfig, roundtrip_m: float) -> np.ndarray:
    """One fast-time echo vector for a point scatterer at the given distance."""
    if roundtrip_m < 0:
        raise ConfigError("round-trip distance must be non-negative")
    n = np.arange(1, cfg.samples_per_pulse + 1, dtype=np.float64)
    freqs = cfg.carrier_frequency_hz + cfg.bandwidth_hz * n / cfg.samples_per_pulse
    return np.exp(-2j * np.pi * freqs * (roundtrip_m / C0))


def _phasor_cube(cfg: IsacConfig, distances: np.ndarray) -> np.ndarray:
    n = np.arange(1, cfg.samples_per_pulse + 1, dtype=np.float64)
    freqs = cfg.carrier_frequency_hz + cfg.bandwidth_hz * n / cfg.samples_per_pulse
    return np.exp(-2j * np.pi * np.outer(distances, freqs) / C0)


def unambiguous_range_m(cfg: IsacConfig) -> float:
    """Largest round-trip distance whose beat tone stays within the fast-time grid."""
    if cfg.bandwidth_hz == 0:
        return C0  # degenerate: every distance lands in bin 0
    return C0 * cfg.samples_per_pulse / cfg.bandwidth_hz


def add_awgn(
    signal: np.ndarray,
    snr_db: float | None,
    rng: np.random.Generator,
    signal_power: float | None = None,
) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise at the requested SNR.

    Per-sample noise variance is signal_power / 10^(snr_db/10); when
    signal_power is not given it is measured from the input. snr_db of
    None or +inf disables noise.
    """
    signal = np.asarray(signal, dtype=np.complex128)
    if signal.size == 0:
        raise DataError("cannot add noise to an empty signal")
    if snr_db is None or np.isinf(snr_db):
        return signal.copy()
    if signal_power is None:
        signal_power = float(np.mean(np.abs(signal) ** 2))
    if signal_power <= 0:
        raise DataError("SNR undefined for a zero-power signal")
    var = signal_power / 10.0 ** (snr_db / 10.0)
    scale = np.sqrt(var / 2.0)
    noise = rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape)
    return signal + scale * noise


def synth_echo_cube(cfg: IsacConfig, scene: SceneParams, rng_seed: int) -> EchoCube:
    """Full slot: target phasors + Q clutter phasors + AWGN.

    Deterministic for fixed (cfg, scene, rng_seed). Clutter elements sit at
    constant random offsets within the unambiguous range and share the
    platform vibration d_b sin(2 pi f_b t). SNR is defined against the
    target component, whose per-sample power is exactly 1.
    """
    rng = np.random.default_rng(rng_seed)
    distances = compose_distance_series(cfg, scene)
    target_only = scene.initial_roundtrip_m + scene.mdd_bias_m + scene.mdd_amplitude_m * np.sin(
        2.0 * np.pi * scene.mdd_frequency_hz * cfg.frame_times_s()
    )
    cube = _phasor_cube(cfg, target_only)

    q = scene.clutter_element_count
    if q > 0:
        offsets = rng.uniform(0.0, unambiguous_range_m(cfg), size=q)
        amps = scene.clutter_element_amplitudes
        amps = np.ones(q) if amps is None else np.asarray(amps, dtype=np.float64)
        platform = scene.clutter_amplitude_m * np.sin(
            2.0 * np.pi * scene.clutter_frequency_hz * cfg.frame_times_s()
        )
        for i in range(q):
            cube = cube + amps[i] * _phasor_cube(cfg, offsets[i] + platform)

    if scene.snr_db is not None and not np.isinf(scene.snr_db):
        cube = add_awgn(cube, scene.snr_db, rng, signal_power=1.0)
    return EchoCube(samples=cube, frame_times_s=cfg.frame_times_s())


# ---------------------------------------------------------------------------
# On-disk format: interleaved little-endian float64 (re, im), frame-major,
# with a JSON sidecar manifest recording shape, seed, and config hash.
# ---------------------------------------------------------------------------

def save_echo_cube(out_dir: str | Path, cube: EchoCube, cfg: IsacConfig, seed: int) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = np.empty(cube.samples.shape + (2,), dtype="<f8")
    data[..., 0] = cube.samples.real
    data[..., 1] = cube.samples.imag
    (out_dir / "echo.bin").write_bytes(data.tobytes(order="C"))
    manifest = {
        "format": "echo-cube-v1",
        "shape": list(cube.samples.shape),
        "layout": "frame-major interleaved (re, im) little-endian float64",
        "seed": seed,
        "config_hash": cfg.config_hash(),
        "config": asdict(cfg),
        "prf_hz": cfg.prf_hz,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out_dir / "echo.bin"


def load_echo_cube(in_dir: str | Path) -> tuple[EchoCube, dict]:
    in_dir = Path(in_dir)
    manifest_path = in_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no manifest in {in_dir}")
    manifest = json.loads(manifest_path.read_text())
    shape = tuple(manifest["shape"])
    raw = np.frombuffer((in_dir / "echo.bin").read_bytes(), dtype="<f8")
    if raw.size != int(np.prod(shape)) * 2:
        raise DataError("echo payload size disagrees with manifest shape")
    raw = raw.reshape(shape + (2,))
    samples = raw[..., 0] + 1j * raw[..., 1]
    frames = shape[0]
    times = np.arange(frames) / manifest["prf_hz"]
    return EchoCube(samples=samples, frame_times_s=times), manifest
