"""SGD training with a one-cycle learning-rate schedule and early stopping."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..automata import InputError
from .model import RnnModel, TrainingError, evaluate_model, loss_and_grads, make_batch, predict_proba, take

STOP_MAX_ITERATIONS = "max_iterations"
STOP_EARLY = "early_stop"
STOP_PERFECT = "perfect_val"
STOP_PARTIAL = "partial_threshold"
STOP_DIVERGED = "training_diverged"


@dataclass
class TrainConfig:
    batch_size: int = 2048
    max_iterations: int = 15000
    initial_lr: float = 0.01
    patience: int = 1000
    eval_every: int = 10
    per_step_loss: bool = False
    partial_threshold: float | None = None
    momentum: float = 0.0
    clip_norm: float | None = None
    warmup_fraction: float = 0.3
    stop_on_perfect: bool = True
    perfect_val_loss: float = 0.02
    dense_eval_margin: float = 0.1
    grid: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.batch_size < 1 or self.max_iterations < 1 or self.patience < 1 or self.eval_every < 1:
            raise InputError("batch_size, max_iterations, patience and eval_every must be positive")
        if not self.initial_lr > 0:
            raise InputError("initial_lr must be positive")
        if self.partial_threshold is not None and not 0.5 < self.partial_threshold <= 1.0:
            raise InputError("partial_threshold must lie in (0.5, 1]")
        for lr in self.grid:
            if not 1e-5 <= lr <= 1.0:
                raise InputError(f"grid learning rate {lr} outside [1e-5, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def one_cycle_lr(step: int, total: int, peak: float, warmup_fraction: float = 0.3) -> float:
    """Linear warm-up from peak/25 to peak, then cosine annealing back to peak/25."""
    floor = peak / 25.0
    warm = max(1, int(round(warmup_fraction * total)))
    if step < warm:
        return floor + (peak - floor) * step / warm
    frac = min(1.0, (step - warm) / max(1, total - warm))
    return floor + (peak - floor) * 0.5 * (1.0 + math.cos(math.pi * frac))


def _momentum_at(lr: float, peak: float, base: float) -> float:
    # cycled inversely to the learning rate, between base and base - 0.1
    if base <= 0:
        return 0.0
    floor = peak / 25.0
    frac = (lr - floor) / (peak - floor) if peak > floor else 0.0
    return base - 0.1 * frac


def train(model: RnnModel, dataset, config: TrainConfig, log_path=None,
          prefix_fn: Callable[[str], list] | None = None) -> RnnModel:
    """Train a copy of ``model``; returns the selected checkpoint with metadata.

    Full mode returns the best-validation checkpoint. Partial mode returns the
    checkpoint at the first evaluation whose validation accuracy exceeds the
    threshold. A non-finite loss raises :class:`TrainingError`.
    """
    train_split = dataset.splits["train"]
    val_split = dataset.splits["val"]
    if not train_split or not val_split:
        raise InputError("dataset needs non-empty train and val splits")
    if config.per_step_loss and prefix_fn is None:
        prefix_fn = dataset.grammar.prefix_labels

    model = model.copy()
    full = make_batch(model, train_split, prefix_fn if config.per_step_loss else None)
    n = len(train_split)
    rng = np.random.default_rng([model.seed, 7919])
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}

    best_acc, best_loss, best_iter, best_params = -1.0, math.inf, 0, None
    stop_reason = STOP_MAX_ITERATIONS
    log_rows = []
    last_loss = float("nan")
    eval_every = config.eval_every
    it = 0
    for it in range(1, config.max_iterations + 1):
        lr = one_cycle_lr(it - 1, config.max_iterations, config.initial_lr, config.warmup_fraction)
        if config.batch_size >= n:
            rows = np.arange(n)
        else:
            rows = np.sort(rng.choice(n, size=config.batch_size, replace=False))
        loss, grads = loss_and_grads(model, take(full, rows), config.per_step_loss, batch_index=it)
        if config.clip_norm is not None:
            with np.errstate(all="ignore"):
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > config.clip_norm:
                for g in grads.values():
                    g *= config.clip_norm / norm
        mu = _momentum_at(lr, config.initial_lr, config.momentum)
        for k, g in grads.items():
            velocity[k] = mu * velocity[k] - lr * g
            model.params[k] = model.params[k] + velocity[k]
            if not np.all(np.isfinite(model.params[k])):
                raise TrainingError(f"non-finite parameter {k} after batch {it}", it)
        last_loss = loss

        val_acc = val_loss = None
        if it % eval_every == 0 or it == config.max_iterations:
            val_acc, val_loss = _val_scores(model, val_split)
            # near the partial threshold accuracy can jump past the cap between sparse checks
            if (config.partial_threshold is not None
                    and val_acc >= config.partial_threshold - config.dense_eval_margin):
                eval_every = 1
            if config.partial_threshold is not None and val_acc > config.partial_threshold:
                best_acc, best_iter = val_acc, it
                best_params = {k: v.copy() for k, v in model.params.items()}
                stop_reason = STOP_PARTIAL
            elif val_acc > best_acc or (val_acc == best_acc and val_loss < best_loss):
                # validation sets can hold only a handful of positives, so equal
                # accuracy is settled by validation loss
                best_acc, best_loss, best_iter = val_acc, val_loss, it
                best_params = {k: v.copy() for k, v in model.params.items()}
                if (config.stop_on_perfect and config.partial_threshold is None and val_acc >= 1.0
                        and val_loss <= config.perfect_val_loss):
                    stop_reason = STOP_PERFECT
        log_rows.append((it, lr, loss, val_acc, val_loss))
        if stop_reason in (STOP_PARTIAL, STOP_PERFECT):
            break
        if val_acc is not None and it - best_iter >= config.patience:
            stop_reason = STOP_EARLY
            break

    if best_params is not None:
        model.params = best_params
    model.meta.update({
        "seed": model.seed,
        "stop_reason": stop_reason,
        "iterations": it,
        "best_iteration": best_iter,
        "val_acc": best_acc if best_params is not None else evaluate_model(model, val_split),
        "final_train_loss": last_loss,
        "initial_lr": config.initial_lr,
    })
    if log_path is not None:
        write_log(log_rows, log_path)
    return model


def write_log(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "lr", "train_loss", "val_acc", "val_loss"])
        for it, lr, loss, acc, vloss in rows:
            w.writerow([it, repr(lr), repr(loss), "" if acc is None else repr(acc),
                        "" if vloss is None else repr(vloss)])


def _val_scores(model: RnnModel, split) -> tuple[float, float]:
    """Accuracy and mean binary cross-entropy on final labels."""
    probs = np.clip(predict_proba(model, [s for s, _ in split]), 1e-12, 1 - 1e-12)
    labels = np.array([bool(y) for _, y in split])
    acc = float(np.mean((probs >= 0.5) == labels))
    loss = float(-np.mean(np.where(labels, np.log(probs), np.log1p(-probs))))
    return acc, loss


def grid_search(make_model: Callable[[], RnnModel], dataset, config: TrainConfig, **kwargs) -> RnnModel:
    """Train once per learning rate in ``config.grid``; keep the best on validation.

    Divergent learning rates are skipped.
    """
    grid = config.grid or [config.initial_lr]
    best = None
    tried = []
    for lr in grid:
        cfg = TrainConfig.from_dict({**config.to_dict(), "initial_lr": lr, "grid": []})
        try:
            model = train(make_model(), dataset, cfg, **kwargs)
        except TrainingError as exc:
            tried.append({"lr": lr, "diverged": str(exc)})
            continue
        tried.append({"lr": lr, "val_acc": model.meta["val_acc"]})
        if best is None or model.meta["val_acc"] > best.meta["val_acc"]:
            best = model
    if best is None:
        raise TrainingError(f"every learning rate in the grid diverged: {grid}")
    best.meta["grid"] = tried
    return best
