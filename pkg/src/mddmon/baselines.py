"""Classical references and evaluation machinery.

grid_oracle exhaustively minimizes the data-fidelity term of the harmonic
deformation model over (bias, frequency) grids; sp_baseline chains the
analytic unwrap/convert pipeline into that oracle; count_events implements
the threshold-band event metric used for the long-scenario comparisons.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .network import LtmParams, MddEstimate, infer_batch, reconstruct
from .phase import (
    PhaseSeries,
    DisplacementSeries,
    itoh_unwrap,
    phase_to_displacement,
)
from .signal_sim import IsacConfig, C0
from .datasets import Scenario


def default_bias_grid() -> np.ndarray:
    return np.round(np.arange(0.0, 25.0001e-3, 0.1e-3), 10)


def default_freq_grid() -> np.ndarray:
    return np.round(np.arange(0.0, 15.0001, 0.1), 10)


def grid_oracle(
    d: DisplacementSeries,
    bias_grid: np.ndarray | None = None,
    freq_grid: np.ndarray | None = None,
    alpha: float = 0.1,
) -> tuple[float, float]:
    """Exhaustive least-squares fit of bias + alpha*bias*sin(2 pi f t).

    Minimizes 0.5 * ||d - model||^2 over the grid; ties resolve to the
    smallest bias, then the smallest frequency.
    """
    bias_grid = default_bias_grid() if bias_grid is None else np.asarray(bias_grid, float)
    freq_grid = default_freq_grid() if freq_grid is None else np.asarray(freq_grid, float)
    if bias_grid.size == 0 or freq_grid.size == 0:
        raise ConfigError("oracle grids must be non-empty")
    values = d.values_m
    t = np.arange(len(values)) / d.frame_rate_hz
    # model = b * m_f with m_f = 1 + alpha sin(2 pi f t); the objective is
    # quadratic in b per frequency, evaluated on the whole bias grid at once
    basis = 1.0 + alpha * np.sin(2.0 * np.pi * np.outer(freq_grid, t))  # (F, T)
    dot_dm = basis @ values                    # (F,)
    norm_m = np.sum(basis * basis, axis=1)     # (F,)
    const = 0.5 * float(values @ values)
    objective = (
        const
        - np.outer(bias_grid, dot_dm)
        + 0.5 * np.outer(bias_grid**2, norm_m)
    )  # (B, F)
    flat = int(np.argmin(objective))  # first minimum: smallest bias, then frequency
    bi, fi = divmod(flat, freq_grid.size)
    return float(bias_grid[bi]), float(freq_grid[fi])


def p1_objective(d: np.ndarray, template: np.ndarray, lam1: float) -> float:
    """Correlation energy minus a penalty on the window-wise template mismatch.

    The expectation in the mismatch term is realized as the empirical mean
    over all sliding windows.
    """
    d = np.asarray(d, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    if template.size > d.size:
        raise DataError("template longer than the signal")
    corr = np.correlate(d, template, mode="valid")
    target_term = float(np.sum(corr**2))
    windows = np.lib.stride_tricks.sliding_window_view(d, template.size)
    mismatch = float(np.mean(np.sum((windows - template) ** 2, axis=1)))
    return target_term - lam1 * mismatch


def sp_baseline(
    phase: PhaseSeries,
    cfg: IsacConfig | None = None,
    bias_grid: np.ndarray | None = None,
    freq_grid: np.ndarray | None = None,
    alpha: float = 0.1,
) -> MddEstimate:
    """Fixed-template matching: analytic unwrap/convert, then the grid oracle.

    Expects direct-path-compensated phase, so the conversion is absolute
    (no first-frame re-referencing) at the exact peak-bin phase slope.
    """
    cfg = cfg or IsacConfig()
    unwrapped = itoh_unwrap(phase)
    disp = phase_to_displacement(
        unwrapped,
        cfg.carrier_wavelength_m,
        absolute=True,
        effective_frequency_hz=cfg.effective_center_frequency_hz,
    )
    bias, freq = grid_oracle(disp, bias_grid, freq_grid, alpha=alpha)
    recon = reconstruct(bias, freq, alpha, len(disp.values_m), disp.frame_rate_hz)
    return MddEstimate(
        bias_m=bias,
        frequency_hz=freq,
        pooled_peaks=np.array([]),
        matched_series=disp.values_m,
        reconstructed=recon,
    )


def count_events(
    series: DisplacementSeries,
    threshold_mm: float,
    tolerance_mm: float = 0.0,
    min_gap_s: float = 1.0,
) -> int:
    """Count excursions whose peak reaches threshold - tolerance (mm).

    An event is a contiguous run above half-threshold; runs separated by
    less than `min_gap_s` below half-threshold merge into one event.
    """
    if threshold_mm <= 0:
        raise ConfigError("threshold must be positive")
    values_mm = series.values_m * 1e3
    above = values_mm >= threshold_mm / 2.0
    if not np.any(above):
        return 0
    flags = above.astype(np.int8)
    starts = list(np.flatnonzero(np.diff(np.concatenate(([0], flags))) == 1))
    ends = list(np.flatnonzero(np.diff(np.concatenate((flags, [0]))) == -1))
    gap_frames = int(round(min_gap_s * series.frame_rate_hz))
    merged: list[tuple[int, int]] = []
    for s, e in zip(starts, ends):
        if merged and s - merged[-1][1] - 1 < gap_frames:
            merged[-1] = (merged[-1][0], e)
        else:
            merged.append((s, e))
    count = 0
    for s, e in merged:
        peak = float(np.max(values_mm[s : e + 1]))
        if peak >= threshold_mm - tolerance_mm:
            count += 1
    return count


# ---------------------------------------------------------------------------
# Long-scenario evaluation helpers
# ---------------------------------------------------------------------------

def displacement_to_phase(values_m: np.ndarray, cfg: IsacConfig) -> np.ndarray:
    """Wrapped phase a compensated extraction would produce for a displacement."""
    kappa = 2.0 * np.pi * cfg.effective_center_frequency_hz / C0
    return np.angle(np.exp(-1j * kappa * np.asarray(values_m, dtype=np.float64)))


def slot_phase_matrix(scenario: Scenario, cfg: IsacConfig) -> np.ndarray:
    """(n_slots, slot_frames) wrapped phase slots of the full scenario series."""
    values = scenario.full_series.values_m.reshape(scenario.n_slots, scenario.slot_frames)
    return displacement_to_phase(values, cfg)


def evaluate_on_scenario(params: LtmParams, scenario: Scenario, cfg: IsacConfig) -> dict:
    """Per-slot network estimates plus the concatenated reconstruction/residual."""
    rate = scenario.full_series.frame_rate_hz
    phases = slot_phase_matrix(scenario, cfg)
    bias_est, freq_est = infer_batch(params, phases, rate)
    t_slot = np.arange(scenario.slot_frames) / rate
    recon = (
        bias_est[:, None]
        + params.hyper.alpha
        * bias_est[:, None]
        * np.sin(2.0 * np.pi * freq_est[:, None] * t_slot)
    ).ravel()
    analytic_input = scenario.full_series.values_m
    residual = analytic_input - recon
    return {
        "bias_est_m": bias_est,
        "freq_est_hz": freq_est,
        "reconstruction_m": recon,
        "residual_m": residual,
    }


def smooth_slot_estimates(
    values: np.ndarray, median_window: int = 5, average_window: int = 5
) -> np.ndarray:
    """Event-robust trend smoothing of a per-slot estimate sequence.

    A running median (rejects isolated event slots) followed by a uniform
    sliding average whose width is matched to suppress the residual
    platform-vibration wobble of the slot means. Edges are padded by
    reflection.
    """
    out = np.asarray(values, dtype=np.float64)
    for window, op in ((median_window, np.median), (average_window, np.mean)):
        if window <= 1:
            continue
        half = window // 2
        padded = np.pad(out, half, mode="edge")
        out = np.array([op(padded[i : i + window]) for i in range(len(out))])
    return out


def dominant_line_hz(values: np.ndarray, frame_rate_hz: float, exclude_dc: bool = True) -> float:
    """Frequency of the largest non-DC spectral magnitude."""
    spectrum = np.abs(np.fft.rfft(np.asarray(values, dtype=np.float64)))
    start = 1 if exclude_dc else 0
    k = int(np.argmax(spectrum[start:])) + start
    return k * frame_rate_hz / len(values)


def event_recall(
    scenario: Scenario,
    slot_bias_est_m: np.ndarray,
    threshold_mm: float,
    tolerance_mm: float,
) -> float:
    """Fraction of ground-truth events at/above a threshold that are detected.

    A ground-truth event slot counts as recalled when its estimated bias
    reaches threshold - tolerance (mm).
    """
    gt_mm = scenario.slot_bias_m * 1e3
    est_mm = np.asarray(slot_bias_est_m) * 1e3
    event_mask = (scenario.slot_class > 0) & (gt_mm >= threshold_mm)
    if not np.any(event_mask):
        return float("nan")
    detected = est_mm[event_mask] >= threshold_mm - tolerance_mm
    return float(np.mean(detected))


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def report(
    results: list[dict],
    out_dir: str | Path,
    series: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> Path:
    """Write a per-method metrics table plus optional (x, y) plot-data files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = ["method"]
    for row in results:
        for key in row:
            if key not in columns:
                columns.append(key)
    table = out_dir / "metrics.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in results:
            writer.writerow([row.get(c, "") for c in columns])
    for name, (x, y) in (series or {}).items():
        with open(out_dir / f"{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for xv, yv in zip(x, y):
                writer.writerow([repr(float(xv)), repr(float(yv))])
    return table
