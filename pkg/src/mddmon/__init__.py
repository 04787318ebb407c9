"""mddmon: micro-deformation displacement estimation from FMCW base-station echoes."""

from .signal_sim import (
    C0,
    IsacConfig,
    SceneParams,
    EchoCube,
    compose_distance_series,
    synth_echo_frame,
    synth_echo_cube,
    add_awgn,
)
from .phase import (
    PhaseSeries,
    DisplacementSeries,
    range_profile,
    extract_phase,
    itoh_unwrap,
    phase_to_displacement,
)
from .network import LtmHyper, LtmParams, MddEstimate, forward
from .losses import LossFlags, LossBreakdown, ablation_variant, loss_total
from .datasets import DatasetSpec, Dataset, gen_training_set, gen_bs_scenario, split
from .training import TrainConfig, train, evaluate
from .baselines import grid_oracle, p1_objective, sp_baseline, count_events

__version__ = "0.1.0"

__all__ = [
    "C0",
    "IsacConfig",
    "SceneParams",
    "EchoCube",
    "compose_distance_series",
    "synth_echo_frame",
    "synth_echo_cube",
    "add_awgn",
    "PhaseSeries",
    "DisplacementSeries",
    "range_profile",
    "extract_phase",
    "itoh_unwrap",
    "phase_to_displacement",
    "LtmHyper",
    "LtmParams",
    "MddEstimate",
    "forward",
    "LossFlags",
    "LossBreakdown",
    "ablation_variant",
    "loss_total",
    "DatasetSpec",
    "Dataset",
    "gen_training_set",
    "gen_bs_scenario",
    "split",
    "TrainConfig",
    "train",
    "evaluate",
    "grid_oracle",
    "p1_objective",
    "sp_baseline",
    "count_events",
    "__version__",
]
