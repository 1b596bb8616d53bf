"""Turning trial records into network inputs: arrays, augmentation, normalization."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

CAMERA_CROP = (64, 64)
TACTILE_CROP = (48, 64)

STREAMS = ("rgb_a", "rgb_b", "tactile_l", "tactile_r", "depth", "theta")


@dataclass
class InputArrays:
    """Compact per-record model inputs.

    Images are kept as integer codes and converted to float per batch:
    rgb as uint8 codes, tactile temporal differences as int16 code differences
    (``Tb - Ta``), depth as uint16 hundredths of a mm.
    """

    rgb_a: np.ndarray
    rgb_b: np.ndarray
    tactile_l: np.ndarray
    tactile_r: np.ndarray
    depth: np.ndarray
    theta: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "InputArrays":
        return InputArrays(*(getattr(self, f)[idx] for f in (*STREAMS, "labels")))


def record_arrays(records: Sequence) -> InputArrays:
    """Stack the ``Ta``/``Tb`` inputs of ``records``; ``Tc`` frames are never read."""
    n = len(records)
    if n == 0:
        raise ValueError("no records")

    def stack(key, dtype):
        return np.stack([r.frames[key].codes for r in records]).astype(dtype, copy=False)

    def tdiff(side):
        return (
            np.stack([r.frames[f"tactile_{side}_Tb"].codes for r in records]).astype(np.int16)
            - np.stack([r.frames[f"tactile_{side}_Ta"].codes for r in records]).astype(np.int16)
        )

    return InputArrays(
        rgb_a=stack("rgb_Ta", np.uint8),
        rgb_b=stack("rgb_Tb", np.uint8),
        tactile_l=tdiff("L"),
        tactile_r=tdiff("R"),
        depth=stack("depth_Tb", np.uint16),
        theta=np.stack([r.params.as_array() for r in records]).astype(np.float64),
        labels=np.array([bool(getattr(r, "label", False)) for r in records]),
    )


def to_float(arrays: InputArrays, dtype=np.float32) -> dict[str, np.ndarray]:
    """Decode integer codes into the value ranges the sensors define."""
    return {
        "rgb_a": arrays.rgb_a.astype(dtype) / dtype(255),
        "rgb_b": arrays.rgb_b.astype(dtype) / dtype(255),
        # temporal difference, mapped from [-1, 1] to [0, 1]
        "tactile_l": (arrays.tactile_l.astype(dtype) / dtype(255) + 1) / 2,
        "tactile_r": (arrays.tactile_r.astype(dtype) / dtype(255) + 1) / 2,
        "depth": np.repeat((arrays.depth.astype(dtype) / dtype(100))[..., None], 3, axis=-1),
        "theta": arrays.theta.astype(dtype),
    }


# --- augmentation ---------------------------------------------------------------------


def _crop(x, top, left, size):
    h, w = size
    return x[top:top + h, left:left + w]


def augment(
    batch: dict[str, np.ndarray],
    rng: np.random.Generator | None = None,
    train: bool = True,
    flip_p: float = 0.5,
) -> dict[str, np.ndarray]:
    """Random crop + horizontal flip in training, centre crop otherwise.

    The ``Ta``/``Tb`` camera pair of one sample shares its crop window and flip
    so the two snapshots stay aligned.  Streams missing from ``batch`` are skipped.
    """
    out = {"theta": batch["theta"]}
    n = len(batch["theta"])
    groups = (("rgb_a", "rgb_b"), ("tactile_l",), ("tactile_r",), ("depth",))
    for group in groups:
        if group[0] not in batch:
            continue
        imgs = [batch[k] for k in group]
        h, w = imgs[0].shape[1:3]
        size = TACTILE_CROP if group[0].startswith("tactile") else CAMERA_CROP
        if train and rng is None:
            raise ValueError("training-mode augmentation needs an rng")
        if train:
            tops = rng.integers(0, h - size[0] + 1, size=n)
            lefts = rng.integers(0, w - size[1] + 1, size=n)
            flips = rng.random(n) < flip_p
        else:
            tops = np.full(n, (h - size[0]) // 2)
            lefts = np.full(n, (w - size[1]) // 2)
            flips = np.full(n, flip_p >= 1.0)
        for key, x in zip(group, imgs):
            res = np.empty((n, *size, x.shape[3]), dtype=x.dtype)
            for i in range(n):
                c = _crop(x[i], tops[i], lefts[i], size)
                res[i] = c[:, ::-1] if flips[i] else c
            out[key] = res
    return out


def flip_horizontal(batch: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: (v if k == "theta" else v[:, :, ::-1]) for k, v in batch.items()}


# --- normalization --------------------------------------------------------------------


@dataclass
class NormStats:
    """Per-channel mean/std for each input stream."""

    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]

    @classmethod
    def fit(cls, arrays: InputArrays, chunk: int = 256) -> "NormStats":
        # rgb pairs share one tower and one set of stats, likewise both gels
        pools = {"rgb": ("rgb_a", "rgb_b"), "tactile": ("tactile_l", "tactile_r"), "depth": ("depth",)}
        mean, std = {}, {}
        for name, keys in pools.items():
            s = s2 = None
            count = 0
            for start in range(0, len(arrays), chunk):
                f = to_float(arrays.take(slice(start, start + chunk)), np.float64)
                for k in keys:
                    x = f[k].reshape(-1, 3)
                    s = x.sum(0) if s is None else s + x.sum(0)
                    s2 = (x**2).sum(0) if s2 is None else s2 + (x**2).sum(0)
                    count += len(x)
            m = s / count
            mean[name] = m
            std[name] = np.sqrt(np.maximum(s2 / count - m**2, 0)) + 1e-6
        t = arrays.theta
        mean["theta"] = t.mean(0)
        std["theta"] = t.std(0) + 1e-6
        return cls(mean, std)

    def apply(self, batch: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        pool = {"rgb_a": "rgb", "rgb_b": "rgb", "tactile_l": "tactile", "tactile_r": "tactile", "depth": "depth", "theta": "theta"}
        out = {}
        for k, v in batch.items():
            p = pool[k]
            out[k] = ((v - self.mean[p]) / self.std[p]).astype(v.dtype, copy=False)
        return out

    def names(self) -> list[str]:
        return sorted(self.mean)
