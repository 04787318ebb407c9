"""Mini-batch gradient training of the template-matching network."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .datasets import Dataset
from .errors import DataError
from .losses import LossFlags, LossBreakdown, loss_graph
from .network import LtmParams, forward_graph, infer_batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int | None = None       # default: ceil(n_train / 25)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 10.0
    seed: int = 0
    loss_flags: LossFlags = field(default_factory=LossFlags)
    temperature: float | None = None    # soft-argmax temperature; None = 1% of peak power
    recon_grid_points: int = 200


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p in self.params:
            g = grads[p.name]
            m = self.m[p.name] = self.beta1 * self.m[p.name] + (1 - self.beta1) * g
            v = self.v[p.name] = self.beta2 * self.v[p.name] + (1 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {name: g * scale for name, g in grads.items()}


@dataclass
class TrainResult:
    params: LtmParams
    log: list            # per-iteration dicts: iteration/epoch/l_r/l_f/l_d/total
    val_history: list    # per-epoch metric dicts
    best_state: dict     # parameter arrays of the best-validation step


def _batch_loss(params, phases, bias, amp, freq, cfg: TrainConfig, frame_rate):
    nodes = forward_graph(
        params, phases, frame_rate, mode="train", temperature=cfg.temperature
    )
    return loss_graph(
        nodes["bias"], nodes["freq"], bias, amp, freq,
        flags=cfg.loss_flags, grid_points=cfg.recon_grid_points,
    )


def evaluate(params: LtmParams, dataset: Dataset) -> dict:
    """Hard-mode inference metrics over a dataset."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    bias_est, freq_est = infer_batch(params, dataset.phases, dataset.frame_rate_hz)
    bias_err = bias_est - dataset.bias_m
    freq_err = freq_est - dataset.frequency_hz
    return {
        "bias_mae_mm": float(np.mean(np.abs(bias_err)) * 1e3),
        "bias_rmse_mm": float(np.sqrt(np.mean(bias_err**2)) * 1e3),
        "freq_mae_hz": float(np.mean(np.abs(freq_err))),
        "freq_within_2hz": float(np.mean(np.abs(freq_err) <= 2.0)),
    }


def train(
    params: LtmParams,
    train_set: Dataset,
    val_set: Dataset | None,
    config: TrainConfig,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Run the optimization; deterministic under (params init, config.seed).

    Emits one log row per mini-batch, validates per epoch, and keeps the
    parameter state with the best validation loss. Aborts if the total loss
    stops being finite.
    """
    n = len(train_set)
    if n == 0:
        raise DataError("empty training set")
    batch_size = config.batch_size or math.ceil(n / 25)
    optimizer = Adam(
        params.parameters(), lr=config.learning_rate,
        beta1=config.beta1, beta2=config.beta2, eps=config.eps,
    )
    rng = np.random.default_rng(config.seed)
    frame_rate = train_set.frame_rate_hz

    log: list[dict] = []
    val_history: list[dict] = []
    best_state = params.state_dict()
    best_val = math.inf
    iteration = 0

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            params.zero_grad()
            total, breakdown = _batch_loss(
                params,
                train_set.phases[idx],
                train_set.bias_m[idx],
                train_set.amplitude_m[idx],
                train_set.frequency_hz[idx],
                config,
                frame_rate,
            )
            if not math.isfinite(breakdown.total):
                raise DataError(
                    f"training diverged at iteration {iteration}: loss is not finite"
                )
            grads = ad.backward(total, params.parameters())
            grads = clip_gradients(grads, config.clip_norm)
            optimizer.step(grads)
            iteration += 1
            log.append(
                {
                    "iteration": iteration,
                    "epoch": epoch + 1,
                    "l_r": breakdown.l_r,
                    "l_f": breakdown.l_f,
                    "l_d": breakdown.l_d,
                    "total": breakdown.total,
                }
            )

        if val_set is not None and len(val_set) > 0:
            _, val_break = _batch_loss(
                params,
                val_set.phases,
                val_set.bias_m,
                val_set.amplitude_m,
                val_set.frequency_hz,
                config,
                frame_rate,
            )
            metrics = evaluate(params, val_set)
            metrics["epoch"] = epoch + 1
            metrics["val_loss"] = val_break.total
            val_history.append(metrics)
            if val_break.total < best_val:
                best_val = val_break.total
                best_state = params.state_dict()
        else:
            best_state = params.state_dict()

    if log_path is not None:
        write_training_log(log_path, log, val_history)
    result_params = params
    result_params.load_state_dict(best_state)
    return TrainResult(params=result_params, log=log, val_history=val_history,
                       best_state=best_state)


def write_training_log(path: str | Path, log: list, val_history: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "epoch", "l_r", "l_f", "l_d", "total"])
        for row in log:
            writer.writerow(
                [row["iteration"], row["epoch"], repr(row["l_r"]), repr(row["l_f"]),
                 repr(row["l_d"]), repr(row["total"])]
            )
    val_path = Path(path).with_suffix(".val.csv")
    with open(val_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "bias_mae_mm", "bias_rmse_mm", "freq_mae_hz",
                         "freq_within_2hz", "val_loss"])
        for row in val_history:
            writer.writerow(
                [row["epoch"], repr(row["bias_mae_mm"]), repr(row["bias_rmse_mm"]),
                 repr(row["freq_mae_hz"]), repr(row["freq_within_2hz"]),
                 repr(row["val_loss"])]
            )
