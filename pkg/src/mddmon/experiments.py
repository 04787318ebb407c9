"""End-to-end experiment pipelines shared by the scripts, CLI, and tests.

Everything here is deterministic in its seeds so reruns hash identically.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import (
    count_events,
    dominant_line_hz,
    evaluate_on_scenario,
    event_recall,
    report,
    smooth_slot_estimates,
)
from .datasets import (
    BsScenarioSpec,
    Dataset,
    DatasetSpec,
    Scenario,
    desk_spec,
    gen_bs_scenario,
    gen_training_set,
    save_dataset,
    split,
)
from .losses import LossFlags, ablation_variant
from .network import LtmHyper, LtmParams, save_model, template_shape
from .signal_sim import IsacConfig
from .training import TrainConfig, TrainResult, evaluate, train, write_training_log


def physics_phase_gain(cfg: IsacConfig, hyper: LtmHyper, frame_rate_hz: float) -> float:
    """Warm-start CNN gain: phase -> meters through the template's DC gain."""
    tmpl = template_shape(hyper.template_len, frame_rate_hz, alpha=hyper.alpha)
    slope_m_per_rad = cfg.effective_wavelength_m / (2.0 * np.pi)
    return -slope_m_per_rad / float(np.sum(tmpl))


def make_params(
    cfg: IsacConfig, hyper: LtmHyper, frame_rate_hz: float, seed: int,
    random_init: bool = False,
) -> LtmParams:
    return LtmParams.initialize(
        hyper,
        frame_rate_hz,
        seed=seed,
        phase_gain=physics_phase_gain(cfg, hyper, frame_rate_hz),
        random_init=random_init,
    )


def desk_scale_run(
    out_dir: str | Path,
    seed: int = 0,
    spec: DatasetSpec | None = None,
    train_config: TrainConfig | None = None,
    cfg: IsacConfig | None = None,
    hyper: LtmHyper | None = None,
    dataset: Dataset | None = None,
    save_artifacts: bool = True,
) -> dict:
    """Generate data, train, evaluate; returns all in-memory artifacts.

    Writes dataset/, model/, training_log.csv, metrics.csv, and a manifest
    under out_dir when `save_artifacts` is set.
    """
    out_dir = Path(out_dir)
    cfg = cfg or IsacConfig()
    hyper = hyper or LtmHyper()
    spec = spec or desk_spec(seed=seed)
    train_config = train_config or TrainConfig(seed=seed)

    if dataset is None:
        dataset = gen_training_set(spec, cfg)
    train_set, val_set, test_set = split(dataset, spec.split_ratios, seed=spec.seed)

    params = make_params(cfg, hyper, dataset.frame_rate_hz, seed=seed)
    result = train(params, train_set, val_set, train_config)
    metrics = evaluate(result.params, test_set)

    artifacts = {
        "dataset": dataset,
        "train_set": train_set,
        "val_set": val_set,
        "test_set": test_set,
        "params": result.params,
        "result": result,
        "metrics": metrics,
        "cfg": cfg,
        "hyper": hyper,
    }
    if save_artifacts:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_dataset(out_dir / "dataset", dataset)
        save_model(out_dir / "model", result.params, extra={"seed": seed})
        write_training_log(out_dir / "training_log.csv", result.log, result.val_history)
        report([{"method": "ltm", **metrics}], out_dir)
        manifest = {
            "pipeline": "desk-scale-generalization",
            "seed": seed,
            "spec": asdict(spec),
            "train_config": {
                **{k: v for k, v in asdict(train_config).items() if k != "loss_flags"},
                "loss_flags": asdict(train_config.loss_flags),
            },
            "config_hash": cfg.config_hash(),
            "dataset_hash": dataset.content_hash(),
            "test_metrics": metrics,
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return artifacts


def scenario_analysis(
    params: LtmParams,
    cfg: IsacConfig,
    scenario: Scenario | None = None,
    scenario_spec: BsScenarioSpec | None = None,
    median_window: int = 5,
    average_window: int = 5,
) -> dict:
    """Run the network over the long scenario and compute the headline checks."""
    scenario = scenario or gen_bs_scenario(scenario_spec or BsScenarioSpec())
    eval_out = evaluate_on_scenario(params, scenario, cfg)
    bias_est = eval_out["bias_est_m"]
    freq_est = eval_out["freq_est_hz"]
    rate = scenario.full_series.frame_rate_hz

    smoothed = smooth_slot_estimates(bias_est, median_window, average_window)
    static_mask = scenario.slot_class == 0
    static_ok = np.abs(smoothed[static_mask]) <= 0.15e-3
    static_ok_frac = float(np.mean(static_ok))

    residual = eval_out["residual_m"]
    residual_line_hz = dominant_line_hz(residual, rate)

    event_mask = scenario.slot_class > 0
    o_len = params.hyper.matched_len(scenario.slot_frames)
    bin_hz = rate / o_len
    clutter_hz = 0.41
    freq_near_clutter = np.abs(freq_est[event_mask] - clutter_hz) <= bin_hz

    recalls = {
        f"recall_{thr}mm_tol{tol}": event_recall(scenario, bias_est, thr, tol)
        for thr, tol in ((0.5, 0.1), (1.0, 0.1), (2.0, 0.2))
    }
    return {
        "scenario": scenario,
        "bias_est_m": bias_est,
        "freq_est_hz": freq_est,
        "smoothed_bias_m": smoothed,
        "static_ok_frac": static_ok_frac,
        "residual_m": residual,
        "residual_line_hz": residual_line_hz,
        "freq_near_clutter_count": int(np.sum(freq_near_clutter)),
        "event_count": int(np.sum(event_mask)),
        **recalls,
    }


def ablation_run(
    out_dir: str | Path,
    variants: tuple = ("full", "no_lr", "no_lf", "no_ld"),
    seed: int = 0,
    dataset: Dataset | None = None,
    scenario: Scenario | None = None,
    cfg: IsacConfig | None = None,
    hyper: LtmHyper | None = None,
    epochs: int = 40,
    trained_full: dict | None = None,
    save_artifacts: bool = True,
) -> dict:
    """Train each loss variant on the same data, evaluate on the scenario."""
    out_dir = Path(out_dir)
    cfg = cfg or IsacConfig()
    hyper = hyper or LtmHyper()
    if dataset is None:
        dataset = gen_training_set(desk_spec(seed=seed), cfg)
    scenario = scenario or gen_bs_scenario(BsScenarioSpec(seed=seed))

    rows = []
    analyses = {}
    for name in variants:
        if name == "full" and trained_full is not None:
            params = trained_full["params"]
        else:
            flags = ablation_variant(name)
            config = TrainConfig(seed=seed, epochs=epochs, loss_flags=flags)
            run = desk_scale_run(
                out_dir / name, seed=seed, dataset=dataset, train_config=config,
                cfg=cfg, hyper=hyper, save_artifacts=False,
            )
            params = run["params"]
        analysis = scenario_analysis(params, cfg, scenario=scenario)
        analyses[name] = analysis
        rows.append(
            {
                "method": f"ltm_{name}" if name != "full" else "ltm",
                "recall_0.5mm": analysis["recall_0.5mm_tol0.1"],
                "recall_1.0mm": analysis["recall_1.0mm_tol0.1"],
                "recall_2.0mm": analysis["recall_2.0mm_tol0.2"],
                "static_ok_frac": analysis["static_ok_frac"],
            }
        )
    if save_artifacts:
        report(rows, out_dir)
    return {"rows": rows, "analyses": analyses, "scenario": scenario}
