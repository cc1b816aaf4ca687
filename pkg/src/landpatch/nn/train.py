"""Training loop: config surface, run control, optimizers, early stopping."""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, asdict

import numpy as np

from ..dataset import LabeledDataset, split_train_val
from ..errors import DataError, TrainingError
from .model import ModelSpec, LayerSpec
from .ops import backward, cross_entropy, forward, init_weights

OPTIMIZERS = ("sgd", "adam")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 50
    batch_size: int = 32
    early_stopping_patience: int = 5  # 0 disables
    dropout_p: float | None = None  # overrides every dropout layer when set
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    activation: str | None = None  # overrides every activation layer when set
    pretrained: str = "none"
    val_split: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise DataError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.early_stopping_patience < 0:
            raise DataError(f"early_stopping_patience must be >= 0, got {self.early_stopping_patience}")
        if self.dropout_p is not None and not 0.0 <= self.dropout_p < 1.0:
            raise DataError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.optimizer not in OPTIMIZERS:
            raise DataError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        # 0 is allowed so a run can be deliberately frozen (plateau testing)
        if self.learning_rate < 0:
            raise DataError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.pretrained != "none":
            raise DataError(
                f"pretrained weights are not supported (got {self.pretrained!r}); use \"none\""
            )
        if not 0.0 < self.val_split < 1.0:
            raise DataError(f"val_split must be in (0, 1), got {self.val_split}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    wall_ms: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EpochStats":
        return cls(**d)


class RunControl:
    """Thread-safe pause/resume/stop/reset mailbox polled between batches.

    Legal transitions: running <-> paused, any -> stopped,
    stopped -> reset-pending.
    """

    RUNNING = "running"
    PAUSED = "paused"
    STOPPED = "stopped"
    RESET_PENDING = "reset-pending"

    def __init__(self):
        self._cond = threading.Condition()
        self._state = self.RUNNING

    @property
    def state(self) -> str:
        with self._cond:
            return self._state

    def pause(self) -> None:
        with self._cond:
            if self._state != self.RUNNING:
                raise DataError(f"cannot pause from {self._state}")
            self._state = self.PAUSED
            self._cond.notify_all()

    def resume(self) -> None:
        with self._cond:
            if self._state != self.PAUSED:
                raise DataError(f"cannot resume from {self._state}")
            self._state = self.RUNNING
            self._cond.notify_all()

    def stop(self) -> None:
        with self._cond:
            if self._state == self.RESET_PENDING:
                raise DataError("cannot stop a reset-pending run")
            self._state = self.STOPPED
            self._cond.notify_all()

    def reset(self) -> None:
        with self._cond:
            if self._state != self.STOPPED:
                raise DataError(f"cannot reset from {self._state}; stop first")
            self._state = self.RESET_PENDING
            self._cond.notify_all()

    def wait_if_paused(self) -> str:
        """Block while paused; return the state seen afterwards."""
        with self._cond:
            while self._state == self.PAUSED:
                self._cond.wait()
            return self._state


def resolve_spec(spec: ModelSpec, cfg: TrainConfig) -> ModelSpec:
    """Apply the config's dropout/activation overrides to a model spec."""
    if cfg.dropout_p is None and cfg.activation is None:
        return spec
    layers = []
    for ly in spec.layers:
        if ly.kind == "dropout" and cfg.dropout_p is not None:
            ly = LayerSpec("dropout", p=cfg.dropout_p)
        elif ly.kind == "activation" and cfg.activation is not None:
            ly = LayerSpec("activation", fn=cfg.activation)
        layers.append(ly)
    return ModelSpec(input_px=spec.input_px, input_channels=spec.input_channels, layers=tuple(layers))


def dataset_arrays(ds: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack a dataset into (X in [0,1] float64 NHWC, y class indices)."""
    xs, ys = [], []
    for label, entry in ds.entries():
        xs.append(entry.image.astype(np.float64) / 255.0)
        ys.append(ds.label_order.index(label))
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


def _step_seed(seed: int, epoch: int, step: int) -> int:
    return int(np.random.SeedSequence((seed, 2, epoch, step)).generate_state(1)[0])


class _Optimizer:
    def __init__(self, cfg: TrainConfig, weights: dict[str, np.ndarray]):
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "adam":
            self.m = {k: np.zeros_like(v) for k, v in weights.items()}
            self.v = {k: np.zeros_like(v) for k, v in weights.items()}

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        lr = self.cfg.learning_rate
        if self.cfg.optimizer == "sgd":
            for k in weights:
                weights[k] -= lr * grads[k]
            return
        self.t += 1
        b1c = 1.0 - ADAM_BETA1**self.t
        b2c = 1.0 - ADAM_BETA2**self.t
        for k in weights:
            g = grads[k]
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * g * g
            weights[k] -= lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + ADAM_EPS)


def _eval_pass(spec, weights, x, y, batch_size) -> tuple[float, float]:
    losses = []
    correct = 0
    for i in range(0, len(x), batch_size):
        xb, yb = x[i : i + batch_size], y[i : i + batch_size]
        probs, _ = forward(spec, weights, xb, mode="eval")
        losses.append(cross_entropy(probs, yb) * len(xb))
        correct += int((probs.argmax(axis=1) == yb).sum())
    return sum(losses) / len(x), correct / len(x)


def train(
    ds: LabeledDataset,
    spec: ModelSpec,
    cfg: TrainConfig,
    control: RunControl | None = None,
    progress=None,
):
    """Fit the model; returns a Checkpoint.

    Stratified train/val split, cross-entropy loss, SGD or Adam. Early
    stopping halts after ``early_stopping_patience`` epochs without
    validation-loss improvement and restores the best-epoch weights.
    RunControl commands are honored between batches; a stop yields a
    checkpoint from the work done so far.
    """
    from .checkpoint import Checkpoint

    h, w = ds.image_size()
    if h != spec.input_px or w != spec.input_px:
        raise DataError(f"dataset images are {w}x{h}, model expects {spec.input_px}x{spec.input_px}")
    spec = resolve_spec(spec, cfg)
    train_ds, val_ds = split_train_val(ds, 1.0 - cfg.val_split, cfg.seed)
    x_train, y_train = dataset_arrays(train_ds)
    x_val, y_val = dataset_arrays(val_ds)

    weights = init_weights(spec, cfg.seed)
    optimizer = _Optimizer(cfg, weights)
    history: list[EpochStats] = []
    best_epoch = 0
    best_loss = float("inf")
    best_weights = {k: v.copy() for k, v in weights.items()}
    since_improved = 0
    stopped = False

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1, epoch)))
        order = rng.permutation(len(x_train))
        loss_sum = 0.0
        correct = 0
        for step, start in enumerate(range(0, len(order), cfg.batch_size)):
            if control is not None:
                if control.wait_if_paused() in (RunControl.STOPPED, RunControl.RESET_PENDING):
                    stopped = True
                    break
            sel = order[start : start + cfg.batch_size]
            xb, yb = x_train[sel], y_train[sel]
            probs, cache = forward(spec, weights, xb, mode="train", seed=_step_seed(cfg.seed, epoch, step))
            loss = cross_entropy(probs, yb)
            if not np.isfinite(loss):
                raise TrainingError(f"loss is not finite at epoch {epoch}, batch {step}")
            loss_sum += loss * len(xb)
            correct += int((probs.argmax(axis=1) == yb).sum())
            grad = probs.copy()
            grad[np.arange(len(yb)), yb] -= 1.0
            grad /= len(yb)
            optimizer.step(weights, backward(cache, grad))
        if stopped:
            break

        val_loss, val_acc = _eval_pass(spec, weights, x_val, y_val, cfg.batch_size)
        stats = EpochStats(
            epoch=epoch,
            train_loss=loss_sum / len(x_train),
            train_accuracy=correct / len(x_train),
            val_loss=val_loss,
            val_accuracy=val_acc,
            wall_ms=(time.perf_counter() - t0) * 1e3,
        )
        history.append(stats)
        if progress is not None:
            progress(stats)

        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_weights = {k: v.copy() for k, v in weights.items()}
            since_improved = 0
        else:
            since_improved += 1
            if cfg.early_stopping_patience and since_improved >= cfg.early_stopping_patience:
                break

    if cfg.early_stopping_patience and best_epoch:
        weights = best_weights

    return Checkpoint(
        model_spec=spec,
        weights=weights,
        label_order=ds.label_order,
        train_config=cfg,
        history=history,
        best_epoch=best_epoch,
    )
