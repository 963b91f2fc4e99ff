"""Losses, Adam, and the training loop.

Training is mini-batch gradient descent on MSE between denormalised
forecasts and raw-scale targets, with deterministic shuffling, gradient
clipping, validation after every epoch, best-parameter retention, and
patience-based early stopping.  Every random draw derives from the run
seed, so a rerun reproduces the loss trajectory bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import numeric_engine as engine
from .numeric_engine import Tape, Tensor, backward
from .data_io import WindowedDataset
from .errors import ConfigError, ContractError, DataError, TrainingError
from .model import DCTNetParams, ModelConfig, forward
from .rng import make_rng


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error over every element; differentiable scalar."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise ContractError(
            f"prediction shape {pred.shape} != target shape {target.shape}"
        )
    diff = engine.sub(pred, target)
    return engine.reduce_mean(engine.mul(diff, diff))


def mae_metric(pred, target) -> float:
    """Mean absolute error over every element; plain number."""
    p = pred.data if isinstance(pred, Tensor) else np.asarray(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if p.shape != t.shape:
        raise ContractError(f"prediction shape {p.shape} != target shape {t.shape}")
    return float(np.abs(p - t).mean())


@dataclass
class OptimizerState:
    """Adam moments and hyperparameters; one slot per parameter name."""

    lr: float
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, Tensor], lr: float) -> "OptimizerState":
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        return cls(lr=lr,
                   m={k: np.zeros_like(t.data) for k, t in params.items()},
                   v={k: np.zeros_like(t.data) for k, t in params.items()})


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: OptimizerState) -> None:
    """One Adam update, in place, over all parameters in registry order."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise ContractError(f"no gradient supplied for {missing[0]!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, tensor in params.items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        tensor.data = tensor.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_global_norm(grads: dict[str, np.ndarray],
                     max_norm: Optional[float]) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm.  max_norm None disables clipping.
    """
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm is not None and total > max_norm and total > 0.0:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


@dataclass
class TrainSettings:
    """Loop hyperparameters; the run seed defaults to the model config's."""

    lr: float = 1e-4
    epochs: int = 10
    batch_size: int = 32
    patience: int = 3
    clip_norm: Optional[float] = 5.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")


@dataclass
class TrainReport:
    """Loss trajectory and outcome of one fit call."""

    train_loss: list[float]
    val_mse: list[float]
    val_mae: list[float]
    best_epoch: int
    epochs_run: int
    wall_clock_seconds: float
    seed: int
    config: dict

    def to_json_dict(self) -> dict:
        """Serializable view; wall-clock time is deliberately left out so
        identical runs serialize to identical bytes."""
        return {
            "train_loss": self.train_loss,
            "val_mse": self.val_mse,
            "val_mae": self.val_mae,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "seed": self.seed,
            "config": self.config,
        }


@dataclass
class EvalResult:
    """Aggregate metrics of eval-mode forwards over one dataset."""

    mse: float
    mae: float
    alpha_mean: float
    num_windows: int


def evaluate(params: DCTNetParams, cfg: ModelConfig, dataset: WindowedDataset,
             batch_size: int = 64) -> EvalResult:
    """MSE/MAE over every window of the dataset, plus the mean correction factor."""
    if len(dataset) == 0:
        raise DataError(f"{dataset.split} dataset has no windows")
    sq_sum = 0.0
    abs_sum = 0.0
    count = 0
    alpha_sum = 0.0
    alpha_count = 0
    for start in range(0, len(dataset), batch_size):
        xb = dataset.inputs[start:start + batch_size]
        yb = dataset.targets[start:start + batch_size]
        fc = forward(Tensor(xb), params, cfg, training=False)
        err = fc.values.data - yb
        sq_sum += float((err * err).sum())
        abs_sum += float(np.abs(err).sum())
        count += err.size
        a = fc.diagnostics.alpha.data
        alpha_sum += float(np.sum(a)) * (xb.shape[0] if a.ndim == 0 else 1)
        alpha_count += xb.shape[0] if a.ndim == 0 else a.size
    return EvalResult(mse=sq_sum / count, mae=abs_sum / count,
                      alpha_mean=alpha_sum / alpha_count, num_windows=len(dataset))


def _snapshot(params: DCTNetParams) -> dict[str, np.ndarray]:
    return {k: t.data.copy() for k, t in params.named_parameters().items()}


def _restore(params: DCTNetParams, snap: dict[str, np.ndarray]) -> None:
    for k, t in params.named_parameters().items():
        t.data = snap[k].copy()


def fit(params: DCTNetParams, cfg: ModelConfig, train: WindowedDataset,
        val: WindowedDataset, settings: Optional[TrainSettings] = None,
        log: Optional[Callable[[str], None]] = print
        ) -> tuple[DCTNetParams, TrainReport]:
    """Train in place; parameters end at the best-validation snapshot.

    Epoch flow: shuffle train windows from the run seed, step Adam per
    mini-batch on clipped gradients, then score the validation split in
    eval mode.  The best validation MSE's parameters are kept; training
    stops early after ``patience`` consecutive epochs without improvement.
    """
    settings = settings or TrainSettings()
    if len(train) == 0:
        raise DataError("train dataset has no windows")
    if len(val) == 0:
        raise DataError("val dataset has no windows")
    seed = settings.seed if settings.seed is not None else cfg.seed
    registry = params.named_parameters()
    opt = OptimizerState.for_params(registry, settings.lr)
    emit = log if log is not None else (lambda _msg: None)

    started = time.monotonic()
    train_losses: list[float] = []
    val_mses: list[float] = []
    val_maes: list[float] = []
    best_mse = np.inf
    best_epoch = -1
    best_snap = _snapshot(params)
    stale = 0

    for epoch in range(settings.epochs):
        order = make_rng(seed, "shuffle", epoch).permutation(len(train))
        loss_sum = 0.0
        seen = 0
        for step, start in enumerate(range(0, len(order), settings.batch_size)):
            idx = order[start:start + settings.batch_size]
            xb = train.inputs[idx]
            yb = train.targets[idx]
            for t in registry.values():
                t.zero_grad()
            with Tape() as tape:
                fc = forward(Tensor(xb), params, cfg, training=True,
                             rng=make_rng(seed, "dropout", epoch, step))
                loss = mse_loss(fc.values, yb)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}"
                )
            backward(loss, tape)
            grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                     for k, t in registry.items()}
            clip_global_norm(grads, settings.clip_norm)
            adam_step(registry, grads, opt)
            loss_sum += loss_val * len(idx)
            seen += len(idx)
        epoch_loss = loss_sum / seen
        train_losses.append(epoch_loss)

        score = evaluate(params, cfg, val, batch_size=settings.batch_size)
        val_mses.append(score.mse)
        val_maes.append(score.mae)
        emit(f"epoch {epoch}: train_loss={epoch_loss:.6f} "
             f"val_mse={score.mse:.6f} val_mae={score.mae:.6f}")

        if score.mse < best_mse:
            best_mse = score.mse
            best_epoch = epoch
            best_snap = _snapshot(params)
            stale = 0
        else:
            stale += 1
        if stale >= settings.patience:
            emit(f"stopping after epoch {epoch}: no improvement for "
                 f"{stale} epoch(s)")
            break

    _restore(params, best_snap)
    report = TrainReport(
        train_loss=train_losses, val_mse=val_mses, val_mae=val_maes,
        best_epoch=best_epoch, epochs_run=len(train_losses),
        wall_clock_seconds=time.monotonic() - started,
        seed=seed, config=cfg.to_dict())
    return params, report
