"""Adam training, batched prediction and accuracy evaluation."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import layers as L
from .data import InputArrays, NormStats, augment, record_arrays, to_float
from .model import FusionModel, build_model, forward, loss_and_grad


class DegenerateLabels(ValueError):
    pass


class EmptySplit(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-4
    lr_drop_epoch: int = 10  # epochs after this one use lr * lr_drop
    lr_drop: float = 0.1
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augment: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.lr > 0 or not 0 < self.lr_drop <= 1:
            raise ValueError("learning rate must be positive and lr_drop in (0, 1]")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        return self.lr if epoch <= self.lr_drop_epoch else self.lr * self.lr_drop

    def to_json(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p in self.params.values():
            p.adam_m *= b1
            p.adam_m += (1 - b1) * p.grad
            p.adam_v *= b2
            p.adam_v += (1 - b2) * p.grad * p.grad
            p.value -= (lr * (p.adam_m / c1) / (np.sqrt(p.adam_v / c2) + self.eps)).astype(p.value.dtype)


def _model_batch(model: FusionModel, arrays: InputArrays, rng, train: bool, flip_p: float = 0.5):
    streams = set(model.spec.streams) | {"theta"}
    f = {k: v for k, v in to_float(arrays, model.dtype.type).items() if k in streams}
    out = augment(f, rng, train=train, flip_p=flip_p)
    out = {k: v for k, v in out.items() if k in model.spec.streams}
    return model.norm.apply(out) if model.norm is not None else out


def train_arrays(
    arrays: InputArrays,
    modality: str,
    config: TrainConfig | None = None,
    model_seed: int | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> FusionModel:
    """Train a fresh ``modality`` model on pre-extracted inputs."""
    config = config or TrainConfig()
    n = len(arrays)
    pos = int(arrays.labels.sum())
    if pos == 0 or pos == n:
        raise DegenerateLabels(f"training set has {pos} positives out of {n}")
    model = build_model(modality, config.seed if model_seed is None else model_seed)
    model.norm = NormStats.fit(arrays)
    opt = Adam(model.params, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng([int(config.seed) & 0xFFFFFFFF, 0x7EA1])

    history = []
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            part = arrays.take(idx)
            batch = _model_batch(model, part, rng, train=config.augment)
            model.zero_grad()
            losses.append(loss_and_grad(model, batch, part.labels) * len(idx))
            opt.step(lr)
        history.append(float(sum(losses) / n))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    model.config = {"train": config.to_json(), "history": history, "n_train": n, "n_pos": pos}
    return model


def train(manifest, split, modality: str, config: TrainConfig | None = None) -> FusionModel:
    records = split.select(manifest.records, "train")
    if not records:
        raise EmptySplit("split has no training records")
    model = train_arrays(record_arrays(records), modality, config)
    model.config["train_objects"] = sorted(split.train_object_ids)
    return model


# --- prediction -----------------------------------------------------------------------


def predict_arrays(model: FusionModel, arrays: InputArrays, chunk: int = 128) -> np.ndarray:
    """Success probabilities on the deterministic centre-crop path."""
    out = []
    for start in range(0, len(arrays), chunk):
        batch = _model_batch(model, arrays.take(slice(start, start + chunk)), None, train=False)
        logits, _ = forward(model, batch)
        out.append(L.sigmoid(logits.astype(np.float64)))
    return np.concatenate(out) if out else np.zeros(0)


def predict(model: FusionModel, record) -> float:
    """Probability that ``record``'s grasp succeeds, from its ``Ta``/``Tb`` frames."""
    return float(predict_arrays(model, record_arrays([record]))[0])


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    pos_rate: float
    per_class: dict
    n: int

    def to_json(self) -> dict:
        return asdict(self)


def accuracy_metrics(probs: np.ndarray, labels: np.ndarray) -> Metrics:
    """Accuracy at probability threshold 0.5; a tie counts as a negative prediction."""
    labels = np.asarray(labels, dtype=bool)
    if len(labels) == 0:
        raise EmptySplit("no test records")
    pred = np.asarray(probs) > 0.5
    correct = pred == labels
    per_class = {
        "positive": float(correct[labels].mean()) if labels.any() else float("nan"),
        "negative": float(correct[~labels].mean()) if (~labels).any() else float("nan"),
    }
    return Metrics(float(correct.mean()), float(labels.mean()), per_class, int(len(labels)))


def evaluate(model, manifest, split) -> Metrics:
    """Test-side accuracy of a model, or of any callable mapping records to probabilities."""
    records = split.select(manifest.records, "test")
    if not records:
        raise EmptySplit("split has no test records")
    labels = np.array([r.label for r in records])
    if isinstance(model, FusionModel):
        probs = predict_arrays(model, record_arrays(records))
    else:
        probs = np.asarray(model(records), dtype=float)
    return accuracy_metrics(probs, labels)


def chance_accuracy(train_labels: Sequence[bool], test_labels: Sequence[bool]) -> float:
    """Accuracy of always predicting the training set's majority class."""
    train_labels = np.asarray(train_labels, dtype=bool)
    test_labels = np.asarray(test_labels, dtype=bool)
    if len(test_labels) == 0:
        raise EmptySplit("no test records")
    majority = train_labels.mean() > 0.5
    return float((test_labels == majority).mean())
