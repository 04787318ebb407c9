"""Phase extraction and the classical phase -> displacement pipeline.

The observation point's phase is read off the dominant fast-time bin of
each frame. Increasing distance decreases phase (negative exponent in the
echo model), so conversion to displacement carries a minus sign.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .signal_sim import IsacConfig, EchoCube, synth_echo_frame, C0


@dataclass
class PhaseSeries:
    values_rad: np.ndarray
    wrapped: bool
    frame_rate_hz: float

    def __post_init__(self):
        self.values_rad = np.asarray(self.values_rad, dtype=np.float64)
        if not np.all(np.isfinite(self.values_rad)):
            raise DataError("phase series contains non-finite values")
        if self.wrapped:
            v = self.values_rad
            if np.any(v <= -np.pi - 1e-12) or np.any(v > np.pi + 1e-12):
                raise DataError("wrapped phase must lie in (-pi, pi]")


@dataclass
class DisplacementSeries:
    values_m: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        self.values_m = np.asarray(self.values_m, dtype=np.float64)
        if not np.all(np.isfinite(self.values_m)):
            raise DataError("displacement series contains non-finite values")


def wrap_phase(values: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    return np.angle(np.exp(1j * np.asarray(values, dtype=np.float64)))


def range_profile(frame: np.ndarray) -> np.ndarray:
    """Fast-time DFT of one frame (or a stack of frames on the last axis).

    Uses the positive-exponent kernel sum_m x[m] exp(+2j pi k m / N) so the
    dechirped echo of a target at round-trip distance r peaks at the
    physical beat bin B r / c0.
    """
    frame = np.asarray(frame)
    if frame.shape[-1] < 2:
        raise DataError("range profile needs at least 2 fast-time samples")
    n = frame.shape[-1]
    return n * np.fft.ifft(frame, axis=-1)


def dominant_bin(cube: EchoCube) -> int:
    """Beat bin with the largest time-averaged profile magnitude."""
    profiles = range_profile(cube.samples)
    mean_mag = np.mean(np.abs(profiles), axis=0)
    if not np.any(mean_mag > 0):
        raise DataError("all-zero cube: no detectable target")
    return int(np.argmax(mean_mag))


def extract_phase(cube: EchoCube, bin: int | None = None) -> PhaseSeries:
    """Wrapped per-frame phase of the range-profile value at `bin`.

    When `bin` is omitted it is chosen from the time-averaged magnitude
    profile, which keeps the selection stable under noise.
    """
    if bin is None:
        bin = dominant_bin(cube)
    else:
        dominant_bin(cube)  # still reject all-zero cubes
    profiles = range_profile(cube.samples)
    values = np.angle(profiles[:, bin])
    frame_rate = 1.0 / float(cube.frame_times_s[1] - cube.frame_times_s[0]) if len(
        cube.frame_times_s
    ) > 1 else 1.0
    return PhaseSeries(values_rad=values, wrapped=True, frame_rate_hz=frame_rate)


def compensate_direct_path(
    phase: PhaseSeries, cfg: IsacConfig, roundtrip_m: float, bin: int
) -> PhaseSeries:
    """Remove the known static-path phase so only deformation remains.

    Subtracts the peak-bin phase of a reference target at the calibrated
    round-trip distance (same bin as the extraction) and re-wraps.
    """
    if not phase.wrapped:
        raise DataError("direct-path compensation expects wrapped phase")
    ref = range_profile(synth_echo_frame(cfg, roundtrip_m))[bin]
    values = wrap_phase(phase.values_rad - np.angle(ref))
    return PhaseSeries(values_rad=values, wrapped=True, frame_rate_hz=phase.frame_rate_hz)


def itoh_unwrap(phase: PhaseSeries) -> PhaseSeries:
    """Sequential 1-D unwrap: fold successive differences into (-pi, pi].

    Classical oracle for the learned unwrapper; valid whenever the true
    per-frame phase step stays below pi in magnitude.
    """
    if not phase.wrapped:
        raise DataError("itoh_unwrap expects wrapped input")
    values = np.unwrap(phase.values_rad)
    return PhaseSeries(values_rad=values, wrapped=False, frame_rate_hz=phase.frame_rate_hz)


def phase_to_displacement(
    phase: PhaseSeries,
    wavelength_m: float,
    radial: bool = False,
    absolute: bool = False,
    effective_frequency_hz: float | None = None,
) -> DisplacementSeries:
    """Convert unwrapped phase to round-trip displacement.

    Default output is -(phi - phi[0]) * lambda / (2 pi): round-trip change
    relative to the first frame at the carrier wavelength. `radial` halves
    it. `absolute` skips the first-frame referencing (for phases already
    referenced to a calibrated path). `effective_frequency_hz` replaces the
    carrier with the exact peak-bin phase slope (see
    IsacConfig.effective_center_frequency_hz), which inverts the synthesis
    to machine precision.
    """
    if phase.wrapped:
        raise DataError("unwrap the phase before converting to displacement")
    if effective_frequency_hz is not None:
        wavelength_m = C0 / effective_frequency_hz
    if wavelength_m <= 0:
        raise ConfigError("wavelength must be positive")
    delta = phase.values_rad if absolute else phase.values_rad - phase.values_rad[0]
    disp = -delta * wavelength_m / (2.0 * np.pi)
    if radial:
        disp = disp / 2.0
    return DisplacementSeries(values_m=disp, frame_rate_hz=phase.frame_rate_hz)


def write_series_csv(path: str | Path, series: PhaseSeries | DisplacementSeries) -> None:
    """Two-column (time_s, value) export for plotting."""
    values = series.values_rad if isinstance(series, PhaseSeries) else series.values_m
    label = "phase_rad" if isinstance(series, PhaseSeries) else "displacement_m"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", label])
        for i, v in enumerate(values):
            writer.writerow([repr(i / series.frame_rate_hz), repr(float(v))])


def read_series_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, str]:
    """Returns (time_s, values, value_label)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 2:
            raise DataError("series CSV must have exactly two columns")
        rows = [(float(t), float(v)) for t, v in reader]
    if not rows:
        raise DataError("series CSV has no data rows")
    t = np.array([r[0] for r in rows])
    v = np.array([r[1] for r in rows])
    return t, v, header[1]
