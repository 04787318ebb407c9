"""Training/evaluation dataset generation, splitting, and persistence.

Every sample is one wrapped, direct-path-compensated phase slot with its
generative label (bias, amplitude, frequency, SNR). Label triples
(bias, frequency, snr) are unique across a generated set after snapping to
a 0.01 mm / 0.01 Hz / 1 dB grid, which guarantees train/test disjointness
for any split.

Dataset file layout (little-endian float64 throughout):
    manifest.json  - spec, seed, counts, content hash, generator version
    data.bin       - per record: 6-double label block
                     (bias_m, amplitude_m, frequency_hz, snr_db, seed, 0)
                     followed by frames_per_slot phase doubles
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .phase import (
    PhaseSeries,
    DisplacementSeries,
    extract_phase,
    dominant_bin,
    compensate_direct_path,
)
from .signal_sim import IsacConfig, SceneParams, synth_echo_cube

GENERATOR_VERSION = "mddmon-datagen-1"

_LABEL_DOUBLES = 6


@dataclass(frozen=True)
class SampleLabel:
    bias_m: float
    amplitude_m: float
    frequency_hz: float
    snr_db: float


@dataclass(frozen=True)
class LabeledSample:
    phase: PhaseSeries
    label: SampleLabel
    seed: int
    generator_version: str = GENERATOR_VERSION


@dataclass(frozen=True)
class DatasetSpec:
    """Sampling ranges and bookkeeping for one generated dataset."""

    n_samples: int = 2500
    bias_range_m: tuple = (0.0, 0.025)
    freq_range_hz: tuple = (5.0, 15.0)
    snr_range_db: tuple = (0.0, 10.0)
    snr_step_db: float = 1.0
    split_ratios: tuple = (0.6, 0.15, 0.25)
    seed: int = 0
    amplitude_coupling: float = 0.1
    independent_amplitude: bool = False
    amplitude_range_m: tuple = (0.0, 0.0025)
    initial_roundtrip_m: float = 30.0
    include_clutter: bool = False
    clutter_amplitude_m: float = 0.0003
    clutter_freq_range_hz: tuple = (0.2, 1.0)
    clutter_element_count: int = 1
    bias_grid_m: float = 1e-5     # 0.01 mm
    freq_grid_hz: float = 0.01

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("need at least one sample")
        if self.bias_range_m[1] < self.bias_range_m[0] or self.freq_range_hz[1] < self.freq_range_hz[0]:
            raise ConfigError("ranges must be non-empty")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError("split ratios must sum to 1")

    def triple_capacity(self) -> int:
        nb = int(round((self.bias_range_m[1] - self.bias_range_m[0]) / self.bias_grid_m)) + 1
        nf = int(round((self.freq_range_hz[1] - self.freq_range_hz[0]) / self.freq_grid_hz)) + 1
        ns = int(round((self.snr_range_db[1] - self.snr_range_db[0]) / self.snr_step_db)) + 1
        return nb * nf * ns


def table2_spec(seed: int = 0) -> DatasetSpec:
    """Paper-scale preset: 30976 samples, 75/25 train/test."""
    return DatasetSpec(n_samples=30976, split_ratios=(0.75, 0.0, 0.25), seed=seed)


def paper_text_spec(seed: int = 0) -> DatasetSpec:
    """Paper-scale preset with the more detailed 60/15/25 split."""
    return DatasetSpec(n_samples=30976, split_ratios=(0.6, 0.15, 0.25), seed=seed)


def desk_spec(seed: int = 0, n_samples: int = 2700) -> DatasetSpec:
    """Desk-scale preset sized for a 2000/200/500 split."""
    return DatasetSpec(
        n_samples=n_samples,
        split_ratios=(2000 / 2700, 200 / 2700, 500 / 2700),
        seed=seed,
    )


@dataclass
class Dataset:
    phases: np.ndarray        # (n, frames) float64, wrapped radians
    bias_m: np.ndarray        # (n,)
    amplitude_m: np.ndarray   # (n,)
    frequency_hz: np.ndarray  # (n,)
    snr_db: np.ndarray        # (n,)
    seeds: np.ndarray         # (n,) per-sample generator seeds
    frame_rate_hz: float
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.phases.shape[0]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(
            phase=PhaseSeries(self.phases[i], wrapped=True, frame_rate_hz=self.frame_rate_hz),
            label=SampleLabel(
                float(self.bias_m[i]),
                float(self.amplitude_m[i]),
                float(self.frequency_hz[i]),
                float(self.snr_db[i]),
            ),
            seed=int(self.seeds[i]),
        )

    def label_triples(self) -> set:
        return {
            (round(b, 12), round(f, 12), round(s, 12))
            for b, f, s in zip(self.bias_m, self.frequency_hz, self.snr_db)
        }

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            phases=self.phases[indices].copy(),
            bias_m=self.bias_m[indices].copy(),
            amplitude_m=self.amplitude_m[indices].copy(),
            frequency_hz=self.frequency_hz[indices].copy(),
            snr_db=self.snr_db[indices].copy(),
            seeds=self.seeds[indices].copy(),
            frame_rate_hz=self.frame_rate_hz,
            meta=dict(self.meta),
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.phases, self.bias_m, self.amplitude_m, self.frequency_hz,
                    self.snr_db, self.seeds):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.update(GENERATOR_VERSION.encode())
        return h.hexdigest()


def _draw_unique_labels(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """(n, 3) array of unique (bias, freq, snr) label triples on the grids."""
    if spec.n_samples > spec.triple_capacity():
        raise ConfigError(
            f"requested {spec.n_samples} samples exceeds the "
            f"{spec.triple_capacity()} distinct label triples available"
        )
    nb = int(round((spec.bias_range_m[1] - spec.bias_range_m[0]) / spec.bias_grid_m)) + 1
    nf = int(round((spec.freq_range_hz[1] - spec.freq_range_hz[0]) / spec.freq_grid_hz)) + 1
    ns = int(round((spec.snr_range_db[1] - spec.snr_range_db[0]) / spec.snr_step_db)) + 1
    seen: set[tuple[int, int, int]] = set()
    out = np.empty((spec.n_samples, 3))
    count = 0
    while count < spec.n_samples:
        need = spec.n_samples - count
        cand = np.stack(
            [
                rng.integers(0, nb, size=2 * need),
                rng.integers(0, nf, size=2 * need),
                rng.integers(0, ns, size=2 * need),
            ],
            axis=1,
        )
        for ib, jf, ks in cand:
            key = (int(ib), int(jf), int(ks))
            if key in seen:
                continue
            seen.add(key)
            out[count, 0] = spec.bias_range_m[0] + ib * spec.bias_grid_m
            out[count, 1] = spec.freq_range_hz[0] + jf * spec.freq_grid_hz
            out[count, 2] = spec.snr_range_db[0] + ks * spec.snr_step_db
            count += 1
            if count == spec.n_samples:
                break
    return out


def gen_training_set(spec: DatasetSpec, cfg: IsacConfig | None = None) -> Dataset:
    """Synthesize echoes per label, extract compensated wrapped phase."""
    cfg = cfg or IsacConfig()
    rng = np.random.default_rng(spec.seed)
    labels = _draw_unique_labels(spec, rng)
    sample_seeds = np.random.SeedSequence(spec.seed).generate_state(spec.n_samples)

    n_frames = cfg.frames_per_slot
    phases = np.empty((spec.n_samples, n_frames))
    amps = np.empty(spec.n_samples)
    for i in range(spec.n_samples):
        bias, freq, snr = labels[i]
        if spec.independent_amplitude:
            amp = rng.uniform(*spec.amplitude_range_m)
        else:
            amp = spec.amplitude_coupling * bias
        amps[i] = amp
        scene = SceneParams(
            initial_roundtrip_m=spec.initial_roundtrip_m,
            mdd_bias_m=bias,
            mdd_amplitude_m=amp,
            mdd_frequency_hz=freq,
            clutter_amplitude_m=spec.clutter_amplitude_m if spec.include_clutter else 0.0,
            clutter_frequency_hz=(
                rng.uniform(*spec.clutter_freq_range_hz) if spec.include_clutter else 0.0
            ),
            clutter_element_count=spec.clutter_element_count if spec.include_clutter else 0,
            snr_db=snr,
        )
        cube = synth_echo_cube(cfg, scene, int(sample_seeds[i]))
        b = dominant_bin(cube)
        wrapped = extract_phase(cube, b)
        compensated = compensate_direct_path(wrapped, cfg, spec.initial_roundtrip_m, b)
        phases[i] = compensated.values_rad

    return Dataset(
        phases=phases,
        bias_m=labels[:, 0].copy(),
        amplitude_m=amps,
        frequency_hz=labels[:, 1].copy(),
        snr_db=labels[:, 2].copy(),
        seeds=sample_seeds.astype(np.float64),
        frame_rate_hz=cfg.prf_hz,
        meta={"spec": asdict(spec), "generator_version": GENERATOR_VERSION,
              "config_hash": cfg.config_hash()},
    )


def split(dataset: Dataset, ratios: tuple, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint, exhaustive (train, val, test) split, deterministic under seed.

    Counts use largest-remainder rounding so the documented paper splits
    come out exactly.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("ratios must be three non-negative numbers summing to 1")
    n = len(dataset)
    raw = [r * n for r in ratios]
    counts = [int(np.floor(x)) for x in raw]
    remainder = n - sum(counts)
    order = sorted(range(3), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in range(remainder):
        counts[order[i]] += 1
    perm = np.random.default_rng(seed).permutation(n)
    a, b = counts[0], counts[0] + counts[1]
    return (
        dataset.subset(np.sort(perm[:a])),
        dataset.subset(np.sort(perm[a:b])),
        dataset.subset(np.sort(perm[b:])),
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_dataset(out_dir: str | Path, dataset: Dataset) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n, frames = dataset.phases.shape
    records = np.empty((n, _LABEL_DOUBLES + frames), dtype="<f8")
    records[:, 0] = dataset.bias_m
    records[:, 1] = dataset.amplitude_m
    records[:, 2] = dataset.frequency_hz
    records[:, 3] = dataset.snr_db
    records[:, 4] = dataset.seeds
    records[:, 5] = 0.0
    records[:, _LABEL_DOUBLES:] = dataset.phases
    (out_dir / "data.bin").write_bytes(records.tobytes(order="C"))
    manifest = {
        "format": "mdd-dataset-v1",
        "generator_version": GENERATOR_VERSION,
        "n_samples": n,
        "frames_per_sample": frames,
        "label_doubles": _LABEL_DOUBLES,
        "frame_rate_hz": dataset.frame_rate_hz,
        "content_hash": dataset.content_hash(),
        "meta": dataset.meta,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_dataset(in_dir: str | Path) -> Dataset:
    in_dir = Path(in_dir)
    manifest_path = in_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no dataset manifest in {in_dir}")
    manifest = json.loads(manifest_path.read_text())
    n = manifest["n_samples"]
    frames = manifest["frames_per_sample"]
    raw = np.frombuffer((in_dir / "data.bin").read_bytes(), dtype="<f8")
    if raw.size != n * (_LABEL_DOUBLES + frames):
        raise DataError("dataset payload size disagrees with manifest")
    records = raw.reshape(n, _LABEL_DOUBLES + frames)
    dataset = Dataset(
        phases=records[:, _LABEL_DOUBLES:].astype(np.float64),
        bias_m=records[:, 0].astype(np.float64),
        amplitude_m=records[:, 1].astype(np.float64),
        frequency_hz=records[:, 2].astype(np.float64),
        snr_db=records[:, 3].astype(np.float64),
        seeds=records[:, 4].astype(np.float64),
        frame_rate_hz=manifest["frame_rate_hz"],
        meta=manifest.get("meta", {}),
    )
    if dataset.content_hash() != manifest["content_hash"]:
        raise DataError("dataset content hash mismatch")
    return dataset


# ---------------------------------------------------------------------------
# Long base-station scenario: sparse deformation events over persistent
# low-frequency platform clutter and displacement-domain noise.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BsScenarioSpec:
    segment_counts: tuple = (2000, 30, 5, 2)
    segment_ranges_m: tuple = (
        (-0.15e-3, 0.15e-3),
        (0.5e-3, 1.0e-3),
        (1.0e-3, 2.0e-3),
        (2.0e-3, 3.0e-3),
    )
    slot_frames: int = 1000
    frame_rate_hz: float = 1000.0
    clutter_amplitude_m: float = 0.3e-3
    clutter_frequency_hz: float = 0.41
    clutter_enabled: bool = True
    noise_amplitude_m: float = 0.15e-3
    vibration_coupling: float = 0.1
    vibration_range_hz: tuple = (5.0, 15.0)
    seed: int = 0


@dataclass
class Scenario:
    bias_series: DisplacementSeries         # per-frame ground-truth bias staircase
    deformation_series: DisplacementSeries  # bias + per-slot vibration (clean)
    full_series: DisplacementSeries         # + clutter + noise
    slot_frames: int
    slot_bias_m: np.ndarray                 # (n_slots,)
    slot_freq_hz: np.ndarray                # (n_slots,)
    slot_class: np.ndarray                  # (n_slots,) 0 = static, 1..3 = event classes
    events: list                            # (start_s, duration_s, displacement_m)

    @property
    def n_slots(self) -> int:
        return len(self.slot_bias_m)


def gen_bs_scenario(spec: BsScenarioSpec) -> Scenario:
    """Concatenated slots with sparse events, persistent clutter, and noise.

    Event slots are placed so that no two are adjacent, which keeps the
    ground-truth event count well-defined for the event-counting metric.
    """
    rng = np.random.default_rng(spec.seed)
    n_slots = sum(spec.segment_counts)
    n_events = sum(spec.segment_counts[1:])
    if n_events * 2 + 1 > n_slots:
        raise ConfigError("not enough static slots to separate events")

    # choose non-adjacent event positions, never in the first/last slot
    positions: list[int] = []
    taken: set[int] = set()
    while len(positions) < n_events:
        p = int(rng.integers(1, n_slots - 1))
        if p in taken or (p - 1) in taken or (p + 1) in taken:
            continue
        taken.add(p)
        positions.append(p)
    positions.sort()

    slot_class = np.zeros(n_slots, dtype=np.int64)
    event_classes = np.concatenate(
        [np.full(c, k + 1, dtype=np.int64) for k, c in enumerate(spec.segment_counts[1:])]
    )
    rng.shuffle(event_classes)
    for pos, cls in zip(positions, event_classes):
        slot_class[pos] = cls

    slot_bias = np.empty(n_slots)
    for s in range(n_slots):
        lo, hi = spec.segment_ranges_m[slot_class[s]]
        slot_bias[s] = rng.uniform(lo, hi)
    slot_freq = rng.uniform(*spec.vibration_range_hz, size=n_slots)

    frames = n_slots * spec.slot_frames
    t_slot = np.arange(spec.slot_frames) / spec.frame_rate_hz
    bias_series = np.repeat(slot_bias, spec.slot_frames)
    vibration = (
        spec.vibration_coupling
        * slot_bias[:, None]
        * np.sin(2.0 * np.pi * slot_freq[:, None] * t_slot)
    ).ravel()
    deformation = bias_series + vibration

    t_abs = np.arange(frames) / spec.frame_rate_hz
    clutter = (
        spec.clutter_amplitude_m * np.sin(2.0 * np.pi * spec.clutter_frequency_hz * t_abs)
        if spec.clutter_enabled
        else np.zeros(frames)
    )
    noise = rng.uniform(-spec.noise_amplitude_m, spec.noise_amplitude_m, size=frames)
    full = deformation + clutter + noise

    events = [
        (
            float(p * spec.slot_frames / spec.frame_rate_hz),
            float(spec.slot_frames / spec.frame_rate_hz),
            float(slot_bias[p]),
        )
        for p in positions
    ]
    rate = spec.frame_rate_hz
    return Scenario(
        bias_series=DisplacementSeries(bias_series, rate),
        deformation_series=DisplacementSeries(deformation, rate),
        full_series=DisplacementSeries(full, rate),
        slot_frames=spec.slot_frames,
        slot_bias_m=slot_bias,
        slot_freq_hz=slot_freq,
        slot_class=slot_class,
        events=events,
    )
