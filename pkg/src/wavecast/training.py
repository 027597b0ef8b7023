"""Optimization stack: AdamW, exponential learning-rate decay, early stopping.

The loss is MSE on the standardized scale, matching the headline evaluation
metric. A fit runs seeded shuffled mini-batches, validates each epoch, keeps
the best-validation parameters, stops when validation has not improved for
``patience`` epochs, restores the best checkpoint, and reports test MSE/MAE.
Every source of randomness flows from the config seed.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from .model import Checkpoint, ModelConfig, init_model_params, model_backward, model_forward

__all__ = [
    "TrainConfig",
    "TrainReport",
    "AdamWState",
    "adamw_step",
    "lr_schedule",
    "early_stopper",
    "mse",
    "mae",
    "evaluate",
    "fit",
    "write_report",
]


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    decay_gamma: float = 0.9
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.decay_gamma <= 1):
            raise ValueError(f"decay_gamma must be in (0, 1], got {self.decay_gamma}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.lr0 <= 0 or self.eps <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("lr0 and eps must be positive; batch_size and max_epochs >= 1")
        for b in (self.beta1, self.beta2):
            if not (0 < b < 1):
                raise ValueError(f"betas must lie in (0, 1), got {b}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class TrainReport:
    epoch_losses: list[tuple[float, float]] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)
    epoch_wall_ms: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based epoch number with the minimum validation MSE
    stopped_early: bool = False
    wall_time_s: float = 0.0
    final_test: tuple[float, float] = (float("nan"), float("nan"))


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One decoupled-weight-decay Adam update, in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p -= lr * (update + cfg.weight_decay * p)
    return params, state


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """lr0 * gamma^epoch, epoch counted from 0."""
    return cfg.lr0 * cfg.decay_gamma ** epoch


def early_stopper(val_history: list[float], patience: int) -> bool:
    """True once the best validation value lies ``patience`` or more entries back."""
    if not val_history:
        raise ValueError("early_stopper: empty history")
    best = int(np.argmin(val_history))  # first occurrence on ties
    return (len(val_history) - 1 - best) >= patience


def _check_shapes(pred: np.ndarray, target: np.ndarray) -> None:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    _check_shapes(pred, target)
    d = pred - target
    return float(np.mean(d * d))


def mae(pred: np.ndarray, target: np.ndarray) -> float:
    _check_shapes(pred, target)
    return float(np.mean(np.abs(pred - target)))


def _predict_dataset(params, config, dataset, batch_size) -> np.ndarray:
    n = dataset.inputs.shape[0]
    outs = []
    for start in range(0, n, batch_size):
        outs.append(model_forward(dataset.inputs[start : start + batch_size], params, config))
    return np.concatenate(outs, axis=0)


def evaluate(params, config: ModelConfig, dataset, batch_size: int = 64,
             horizon: int | None = None) -> tuple[float, float]:
    """(MSE, MAE) over a windowed dataset, optionally truncated to a shorter horizon."""
    preds = _predict_dataset(params, config, dataset, batch_size)
    targets = dataset.targets
    if horizon is not None:
        preds = preds[:, :horizon]
        targets = targets[:, :horizon]
    return mse(preds, targets), mae(preds, targets)


def fit(
    config: ModelConfig,
    train_ds,
    val_ds,
    test_ds,
    cfg: TrainConfig,
    params: dict[str, np.ndarray] | None = None,
) -> tuple[Checkpoint, TrainReport]:
    """Train to best-validation parameters and report test metrics.

    Datasets are WindowedDataset-shaped (``inputs`` [N, T, C] and ``targets``
    [N, horizon, C]); they must already be standardized. Returns the best
    checkpoint and the per-epoch report.
    """
    for name, ds in (("train", train_ds), ("val", val_ds), ("test", test_ds)):
        if ds.inputs.shape[0] < 1:
            raise ValueError(f"{name} dataset is empty")
    if params is None:
        params = init_model_params(config, seed=cfg.seed)
    state = AdamWState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    n_train = train_ds.inputs.shape[0]

    report = TrainReport()
    best_val = float("inf")
    best_params = {k: p.copy() for k, p in params.items()}
    val_history: list[float] = []
    t_start = time.perf_counter()

    for epoch in range(1, cfg.max_epochs + 1):
        t_epoch = time.perf_counter()
        lr = lr_schedule(epoch - 1, cfg)
        perm = rng.permutation(n_train)
        sq_sum = 0.0
        count = 0
        for start in range(0, n_train, cfg.batch_size):
            batch_no = start // cfg.batch_size
            idx = perm[start : start + cfg.batch_size]
            xb = train_ds.inputs[idx]
            yb = train_ds.targets[idx]
            try:
                pred, cache = model_forward(xb, params, config, return_cache=True)
                diff = pred - yb
                batch_loss = float(np.mean(diff * diff))
                if not np.isfinite(batch_loss):
                    raise FloatingPointError("loss is not finite")
                loss_grad = (2.0 / diff.size) * diff
                grads, _ = model_backward(xb, params, config, loss_grad, cache=cache)
                params, state = adamw_step(params, grads, state, lr, cfg)
            except (FloatingPointError, RuntimeError) as exc:
                raise FloatingPointError(
                    f"training diverged at epoch {epoch}, batch {batch_no}: {exc}"
                ) from exc
            sq_sum += float(np.sum(diff * diff))
            count += diff.size

        train_mse = sq_sum / count
        val_mse, _ = evaluate(params, config, val_ds, batch_size=cfg.batch_size)
        val_history.append(val_mse)
        report.epoch_losses.append((train_mse, val_mse))
        report.lr_history.append(lr)
        report.epoch_wall_ms.append((time.perf_counter() - t_epoch) * 1e3)

        if val_mse < best_val:
            best_val = val_mse
            report.best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}
        if early_stopper(val_history, cfg.patience):
            report.stopped_early = True
            break

    report.final_test = evaluate(best_params, config, test_ds, batch_size=cfg.batch_size)
    report.wall_time_s = time.perf_counter() - t_start
    ckpt = Checkpoint(config=copy.deepcopy(config), parameters=best_params, rng_seed=cfg.seed)
    return ckpt, report


def write_report(report: TrainReport, path) -> None:
    """One record per epoch: epoch, lr, train_mse, val_mse, wall_ms."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,lr,train_mse,val_mse,wall_ms\n")
        for i, (train_mse, val_mse) in enumerate(report.epoch_losses):
            fh.write(
                f"{i + 1},{report.lr_history[i]:.10g},{train_mse:.10g},"
                f"{val_mse:.10g},{report.epoch_wall_ms[i]:.3f}\n"
            )
        fh.write(f"# best_epoch={report.best_epoch} stopped_early={report.stopped_early} "
                 f"test_mse={report.final_test[0]:.10g} test_mae={report.final_test[1]:.10g}\n")
