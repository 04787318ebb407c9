"""Command-line front door.

Subcommands: simulate | gen-dataset | train | eval | infer | report.
Config files are JSON; explicit flags override file values. Exit codes:
0 ok, 2 config error, 3 data error, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import grid_oracle, report, sp_baseline
from .datasets import DatasetSpec, gen_training_set, load_dataset, save_dataset, split
from .errors import ConfigError, DataError, InvariantError
from .losses import ablation_variant
from .network import LtmHyper, forward, load_model, save_model
from .phase import (
    PhaseSeries,
    itoh_unwrap,
    phase_to_displacement,
    read_series_csv,
)
from .signal_sim import IsacConfig, SceneParams, save_echo_cube, synth_echo_cube
from .training import TrainConfig, evaluate, train, write_training_log
from .experiments import make_params


def _load_json_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}")


def _dataclass_from(cls, file_values: dict, overrides: dict):
    values = dict(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for key, val in values.items():
        if isinstance(val, list):
            values[key] = tuple(val)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))


def cmd_simulate(args) -> int:
    file_cfg = _load_json_config(args.config)
    cfg = _dataclass_from(IsacConfig, file_cfg.get("isac", {}), {})
    scene = _dataclass_from(SceneParams, file_cfg.get("scene", {}), {})
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    cube = synth_echo_cube(cfg, scene, seed)
    save_echo_cube(args.out, cube, cfg, seed)
    print(f"wrote echo cube {cube.samples.shape} to {args.out}")
    return 0


def cmd_gen_dataset(args) -> int:
    file_cfg = _load_json_config(args.spec)
    overrides = {"seed": args.seed, "n_samples": args.n_samples}
    spec = _dataclass_from(DatasetSpec, file_cfg, overrides)
    cfg = IsacConfig()
    dataset = gen_training_set(spec, cfg)
    save_dataset(args.out, dataset)
    print(f"wrote {len(dataset)} samples to {args.out} (hash {dataset.content_hash()[:12]})")
    return 0


def cmd_train(args) -> int:
    file_cfg = _load_json_config(args.config)
    flags = ablation_variant(file_cfg.pop("variant", "full"))
    overrides = {"seed": args.seed, "epochs": args.epochs}
    config = _dataclass_from(TrainConfig, file_cfg, overrides)
    object.__setattr__(config, "loss_flags", flags)

    dataset = load_dataset(args.dataset)
    spec_meta = dataset.meta.get("spec", {})
    ratios = tuple(spec_meta.get("split_ratios", (0.6, 0.15, 0.25)))
    train_set, val_set, test_set = split(dataset, ratios, seed=int(spec_meta.get("seed", 0)))

    cfg = IsacConfig()
    hyper = LtmHyper()
    params = make_params(cfg, hyper, dataset.frame_rate_hz, seed=config.seed)
    result = train(params, train_set, val_set, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out, result.params, extra={"seed": config.seed})
    write_training_log(out / "training_log.csv", result.log, result.val_history)
    manifest = {
        "pipeline": "train",
        "dataset_hash": dataset.content_hash(),
        "seed": config.seed,
        "epochs": config.epochs,
        "split_ratios": list(ratios),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"trained {config.epochs} epochs; model in {out}")
    return 0


def cmd_eval(args) -> int:
    params = load_model(args.ckpt)
    dataset = load_dataset(args.dataset)
    spec_meta = dataset.meta.get("spec", {})
    ratios = tuple(spec_meta.get("split_ratios", (0.6, 0.15, 0.25)))
    _, _, test_set = split(dataset, ratios, seed=int(spec_meta.get("seed", 0)))
    if len(test_set) == 0:
        test_set = dataset

    rows = [{"method": "ltm", **evaluate(params, test_set)}]
    baselines = [b for b in (args.baselines or "").split(",") if b]
    cfg = IsacConfig()
    if baselines:
        sp_bias, sp_freq = [], []
        for i in range(len(test_set)):
            sample = test_set.sample(i)
            if "sp" in baselines:
                est = sp_baseline(sample.phase, cfg)
                sp_bias.append(est.bias_m)
                sp_freq.append(est.frequency_hz)
        if "sp" in baselines:
            bias_err = np.array(sp_bias) - test_set.bias_m
            freq_err = np.array(sp_freq) - test_set.frequency_hz
            rows.append(
                {
                    "method": "sp",
                    "bias_mae_mm": float(np.mean(np.abs(bias_err)) * 1e3),
                    "bias_rmse_mm": float(np.sqrt(np.mean(bias_err**2)) * 1e3),
                    "freq_mae_hz": float(np.mean(np.abs(freq_err))),
                    "freq_within_2hz": float(np.mean(np.abs(freq_err) <= 2.0)),
                }
            )
        if "oracle" in baselines:
            ob, of = [], []
            for i in range(len(test_set)):
                sample = test_set.sample(i)
                unwrapped = itoh_unwrap(sample.phase)
                disp = phase_to_displacement(
                    unwrapped, cfg.carrier_wavelength_m, absolute=True,
                    effective_frequency_hz=cfg.effective_center_frequency_hz,
                )
                bias, freq = grid_oracle(disp)
                ob.append(bias)
                of.append(freq)
            bias_err = np.array(ob) - test_set.bias_m
            freq_err = np.array(of) - test_set.frequency_hz
            rows.append(
                {
                    "method": "oracle",
                    "bias_mae_mm": float(np.mean(np.abs(bias_err)) * 1e3),
                    "bias_rmse_mm": float(np.sqrt(np.mean(bias_err**2)) * 1e3),
                    "freq_mae_hz": float(np.mean(np.abs(freq_err))),
                    "freq_within_2hz": float(np.mean(np.abs(freq_err) <= 2.0)),
                }
            )
    out = Path(args.out)
    report(rows, out)
    manifest = {
        "pipeline": "eval",
        "dataset_hash": dataset.content_hash(),
        "baselines": baselines,
        "seed": args.seed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote metrics for {[r['method'] for r in rows]} to {out}")
    return 0


def cmd_infer(args) -> int:
    params = load_model(args.ckpt)
    _, values, label = read_series_csv(args.input)
    if "phase" not in label:
        raise DataError(f"expected a phase CSV, got column {label!r}")
    if np.any(np.abs(values) > np.pi + 1e-9):
        raise InvariantError("input phase is not wrapped to (-pi, pi]")
    rate = args.frame_rate
    phase = PhaseSeries(values_rad=values, wrapped=True, frame_rate_hz=rate)
    est = forward(params, phase)
    result = {"bias_m": est.bias_m, "frequency_hz": est.frequency_hz}
    print(json.dumps(result))
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2))
    return 0


def cmd_report(args) -> int:
    in_dir = Path(args.in_dir)
    metrics = in_dir / "metrics.csv"
    if not metrics.exists():
        raise DataError(f"no metrics.csv under {in_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics.read_text())
    for extra in sorted(in_dir.glob("*.csv")):
        if extra.name != "metrics.csv":
            (out / extra.name).write_text(extra.read_text())
    print(f"collected report tables into {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mddmon",
        description="Micro-deformation estimation experiments on simulated base-station echoes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize one echo cube")
    p.add_argument("--config", help="JSON with optional 'isac' and 'scene' sections")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-dataset", help="generate a labeled phase dataset")
    p.add_argument("--spec", help="JSON DatasetSpec")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-samples", type=int, dest="n_samples")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train the template-matching network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="JSON TrainConfig (plus optional 'variant')")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint, optionally with baselines")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--baselines", help="comma list from {sp,oracle}")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="estimate bias/frequency from a phase CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--frame-rate", type=float, default=1000.0)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("report", help="collect metric tables into one directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "code": 2, "message": str(exc)}), file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(json.dumps({"error": "data", "code": 3, "message": str(exc)}), file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(json.dumps({"error": "invariant", "code": 4, "message": str(exc)}), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
