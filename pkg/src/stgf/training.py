"""Optimization loop, optimizer, metrics, and the historical-average baseline.

Training iterates seeded-shuffled mini-batches of window samples. Each
sample runs on its own tape; per-parameter gradients are accumulated with
weight 1/batch-size, so the step direction is the gradient of the mean
per-sample loss and batch size 1 recovers plain per-slot updates. Losses
are computed on normalized targets; reported evaluation metrics are always
on the raw flow scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Node, Parameter, Tape
from .checkpoint import save_checkpoint
from .data import (
    MINUTES_PER_DAY,
    NormStats,
    PreparedData,
    SignalDataset,
    WindowSample,
    minmax_invert,
    prepare_samples,
)
from .errors import NumericalError, ValidationError
from .graphs import build_local_adjacency, normalize_adjacency
from .model import ModelConfig, ModelParams, init_params, model_forward


@dataclass
class TrainConfig:
    """Loop hyperparameters with conventional defaults."""

    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    train_frac: float = 0.7
    val_frac: float = 0.1
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        # learning_rate 0 is allowed: it freezes the model, which is useful
        # as a determinism probe
        if self.learning_rate < 0.0:
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("momentum decay rates must lie in [0, 1)")
        if self.epsilon <= 0.0 or self.clip_norm <= 0.0:
            raise ValidationError("epsilon and clip_norm must be positive")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "clip_norm": self.clip_norm,
            "seed": self.seed,
            "train_frac": self.train_frac,
            "val_frac": self.val_frac,
            "checkpoint_dir": self.checkpoint_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class Metrics:
    """Raw-scale error summary over every (sample, node) entry."""

    rmse: float
    mae: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("metrics need at least one prediction")
        if not (self.rmse >= self.mae >= 0.0):
            raise ValidationError(f"rmse {self.rmse} must be >= mae {self.mae} >= 0")

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "count": self.count}


def compute_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"metric shapes differ: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValidationError("metrics need at least one prediction")
    err = (y_pred - y_true).reshape(-1)
    return Metrics(
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=float(np.mean(np.abs(err))),
        count=int(err.size),
    )


# -------------------------------------------------------------- optimization


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            step=0,
            m={p.name: np.zeros_like(p.value) for p in params},
            v={p.name: np.zeros_like(p.value) for p in params},
        )


def adam_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One bias-corrected adaptive-moment update, in place."""
    state.step += 1
    t = state.step
    for p in params:
        g = np.asarray(grads[p.name], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {p.name!r} at step {t}")
        m = state.m[p.name]
        v = state.v[p.name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        m_hat = m / (1.0 - config.beta1**t)
        v_hat = v / (1.0 - config.beta2**t)
        p.value -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient for parameter {p.name!r}")
        total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


# ------------------------------------------------------------- training loop


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float


@dataclass
class TrainResult:
    params: ModelParams
    curve: list[EpochRecord]
    best_epoch: int
    best_val_mse: float
    stats: NormStats
    prepared: PreparedData
    local_norm: np.ndarray


def _check_geometry(model_config: ModelConfig, dataset: SignalDataset) -> None:
    if model_config.n_nodes != dataset.n_nodes:
        raise ValidationError(
            f"model expects {model_config.n_nodes} nodes, dataset has {dataset.n_nodes}"
        )
    if model_config.n_channels != dataset.n_channels:
        raise ValidationError(
            f"model expects {model_config.n_channels} channels, dataset has {dataset.n_channels}"
        )
    if model_config.external_dim != dataset.external_dim:
        raise ValidationError(
            f"model expects external dim {model_config.external_dim}, "
            f"dataset has {dataset.external_dim}"
        )


def _sample_loss(
    params: ModelParams,
    model_config: ModelConfig,
    sample: WindowSample,
    local_norm: np.ndarray,
) -> tuple[Tape, Node]:
    tape = Tape()
    pred = model_forward(tape, params, sample.x, sample.external, local_norm, model_config)
    loss = tape.mse_loss(pred, tape.constant(sample.y_norm))
    return tape, loss


def mean_sample_mse(
    params: ModelParams,
    model_config: ModelConfig,
    samples: Sequence[WindowSample],
    local_norm: np.ndarray,
) -> float:
    if not samples:
        raise ValidationError("cannot evaluate loss on an empty sample list")
    total = 0.0
    for sample in samples:
        _, loss = _sample_loss(params, model_config, sample, local_norm)
        total += loss.value.item()
    return total / len(samples)


def _snapshot(params: ModelParams) -> ModelParams:
    return ModelParams([Parameter(p.name, p.value.copy()) for p in params])


def train(
    dataset: SignalDataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    log=None,
) -> TrainResult:
    """Run the full loop and return the best-validation parameter snapshot.

    Deterministic given (seed, configs, dataset): initialization and every
    epoch's batch order come from one seeded generator, and accumulation
    order within a batch is fixed.
    """
    _check_geometry(model_config, dataset)
    prepared = prepare_samples(
        dataset, model_config.window, train_config.train_frac, train_config.val_frac
    )
    local_norm = normalize_adjacency(build_local_adjacency(dataset.graph))

    rng = np.random.default_rng(train_config.seed)
    params = init_params(model_config, rng)
    state = AdamState.for_params(params)

    curve: list[EpochRecord] = []
    best_val = math.inf
    best_epoch = 0
    best_params = _snapshot(params)

    n_train = len(prepared.train)
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n_train)
        # indexed by sample so the epoch mean does not depend on shuffle order
        epoch_losses = np.zeros(n_train)
        for batch_index, start in enumerate(range(0, n_train, train_config.batch_size)):
            batch = order[start : start + train_config.batch_size]
            params.zero_grads()
            for i in batch:
                sample = prepared.train[int(i)]
                tape, loss = _sample_loss(params, model_config, sample, local_norm)
                value = loss.value.item()
                if not math.isfinite(value):
                    raise NumericalError(
                        f"non-finite training loss at epoch {epoch}, batch {batch_index}"
                    )
                epoch_losses[int(i)] = value
                tape.backward(loss)
                tape.accumulate_param_grads(params, scale=1.0 / len(batch))
            clip_gradients(params, train_config.clip_norm)
            adam_step(params, {p.name: p.grad for p in params}, state, train_config)

        train_mse = float(epoch_losses.mean())
        val_mse = mean_sample_mse(params, model_config, prepared.val, local_norm)
        curve.append(EpochRecord(epoch=epoch, train_mse=train_mse, val_mse=val_mse))
        if log is not None:
            log(f"epoch {epoch:3d}  train_mse {train_mse:.6f}  val_mse {val_mse:.6f}")
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_params = _snapshot(params)
            if train_config.checkpoint_dir is not None:
                save_checkpoint(
                    best_params,
                    model_config,
                    train_config.to_dict(),
                    prepared.stats,
                    train_config.checkpoint_dir,
                )

    return TrainResult(
        params=best_params,
        curve=curve,
        best_epoch=best_epoch,
        best_val_mse=best_val,
        stats=prepared.stats,
        prepared=prepared,
        local_norm=local_norm,
    )


# --------------------------------------------------------------- evaluation


@dataclass
class PredictionRow:
    timestamp_minutes: int
    node_id: str
    y_true: float
    y_pred: float


def evaluate(
    params: ModelParams,
    model_config: ModelConfig,
    stats: NormStats,
    dataset: SignalDataset,
    samples: Sequence[WindowSample],
) -> tuple[Metrics, list[PredictionRow]]:
    """Raw-scale metrics plus one table row per (sample, node).

    Predictions come out of the model normalized and are mapped back to
    flow units with the training stats before the error summary.
    """
    _check_geometry(model_config, dataset)
    if not samples:
        raise ValidationError("cannot evaluate on an empty sample list")
    local_norm = normalize_adjacency(build_local_adjacency(dataset.graph))

    rows: list[PredictionRow] = []
    truths = []
    preds = []
    for sample in samples:
        tape = Tape()
        out = model_forward(tape, params, sample.x, sample.external, local_norm, model_config)
        y_pred = minmax_invert(out.value, stats, channel=0)
        truths.append(sample.y)
        preds.append(y_pred)
        ts = sample.target_slot * dataset.interval_minutes
        for v in range(dataset.n_nodes):
            rows.append(
                PredictionRow(
                    timestamp_minutes=ts,
                    node_id=dataset.node_ids[v],
                    y_true=float(sample.y[v, 0]),
                    y_pred=float(y_pred[v, 0]),
                )
            )
    metrics = compute_metrics(np.stack(truths), np.stack(preds))
    return metrics, rows


def ha_baseline(
    train_samples: Sequence[WindowSample],
    eval_samples: Sequence[WindowSample],
    interval_minutes: int,
) -> Metrics:
    """Historical average: per-node mean flow at the same clock time.

    The prediction for node v at time-of-day s is the mean of the training
    targets observed at (v, s); clock times never seen in training fall
    back to the node's overall training mean.
    """
    if not train_samples:
        raise ValidationError("historical average needs a nonempty training split")
    if not eval_samples:
        raise ValidationError("cannot evaluate on an empty sample list")

    def clock(sample: WindowSample) -> int:
        return (sample.target_slot * interval_minutes) % MINUTES_PER_DAY

    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for sample in train_samples:
        key = clock(sample)
        if key not in sums:
            sums[key] = np.zeros_like(sample.y)
            counts[key] = 0
        sums[key] += sample.y
        counts[key] += 1
    node_mean = np.mean([s.y for s in train_samples], axis=0)

    truths = []
    preds = []
    for sample in eval_samples:
        key = clock(sample)
        if key in sums:
            preds.append(sums[key] / counts[key])
        else:
            preds.append(node_mean)
        truths.append(sample.y)
    return compute_metrics(np.stack(truths), np.stack(preds))
