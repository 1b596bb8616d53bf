"""Non-deep baselines: indentation features with a linear SVM, and chance."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .train import DegenerateLabels, EmptySplit, Metrics, accuracy_metrics, chance_accuracy


def indentation_features(record) -> tuple[float, float]:
    """Mean absolute ``Tb - Ta`` difference of each gel, over pixels and colour channels."""
    out = []
    for side in ("L", "R"):
        b = record.frames[f"tactile_{side}_Tb"].data
        a = record.frames[f"tactile_{side}_Ta"].data
        out.append(float(np.abs(b - a).mean()))
    return out[0], out[1]


def feature_matrix(records: Sequence) -> np.ndarray:
    return np.array([indentation_features(r) for r in records], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-3
    epochs: int = 200
    lr: float = 1e-2
    seed: int = 0


@dataclass(frozen=True)
class LinearSvm:
    w: np.ndarray
    b: float
    mean: np.ndarray
    std: np.ndarray

    def decision(self, features) -> np.ndarray:
        x = (np.asarray(features, dtype=float) - self.mean) / self.std
        return x @ self.w + self.b


def train_linear_svm(features, labels, config: SvmConfig | None = None) -> LinearSvm:
    """L2-regularized hinge loss, per-sample subgradient steps, step size ``lr / epoch``."""
    config = config or SvmConfig()
    x = np.asarray(features, dtype=float)
    y = np.where(np.asarray(labels, dtype=bool), 1.0, -1.0)
    if len(y) == 0 or np.all(y == y[0]):
        raise DegenerateLabels("SVM training needs both classes")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    xs = (x - mean) / std

    rng = np.random.default_rng([int(config.seed) & 0xFFFFFFFF, 0x5F3])
    w = np.zeros(x.shape[1])
    b = 0.0
    for epoch in range(1, config.epochs + 1):
        eta = config.lr / epoch
        for i in rng.permutation(len(y)):
            xi, yi = xs[i], y[i]
            if yi * (xi @ w + b) < 1:
                w = w - eta * (config.lam * w - yi * xi)
                b += eta * yi
            else:
                w = w - eta * config.lam * w
    return LinearSvm(w, float(b), mean, std)


def predict_svm(model: LinearSvm, features) -> np.ndarray:
    return model.decision(features) > 0


def evaluate_svm(train_records: Sequence, test_records: Sequence, config: SvmConfig | None = None) -> Metrics:
    svm = train_linear_svm(feature_matrix(train_records), [r.label for r in train_records], config)
    if not test_records:
        raise EmptySplit("no test records")
    pred = predict_svm(svm, feature_matrix(test_records))
    return accuracy_metrics(pred.astype(float), np.array([r.label for r in test_records]))


def evaluate_chance(train_records: Sequence, test_records: Sequence) -> float:
    return chance_accuracy([r.label for r in train_records], [r.label for r in test_records])
