"""Late-fusion grasp outcome classifier.

Each input image goes through a small convolutional tower (three conv-relu-pool
blocks and a global average pool).  Images of the same modality share one
tower: the two camera snapshots use the vision tower, the two gel differences
use the tactile tower.  Tower features are concatenated and fed to a two-layer
fully-connected head ending in a sigmoid.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .data import NormStats
from .layers import Parameter, ShapeMismatch

TOWER_CHANNELS = (8, 16, 32)
HEAD_HIDDEN = 64
POSE_WIDTHS = (32, 32, 16)

# modality -> (branch, input stream) applications, in concatenation order
MODALITY_INPUTS = {
    "fusion": (("vision", "rgb_a"), ("vision", "rgb_b"), ("tactile", "tactile_l"), ("tactile", "tactile_r")),
    "vision": (("vision", "rgb_a"), ("vision", "rgb_b")),
    "vision_pose": (("vision", "rgb_a"), ("vision", "rgb_b"), ("pose", "theta")),
    "depth": (("depth", "depth"),),
    "tactile_both": (("tactile", "tactile_l"), ("tactile", "tactile_r")),
    "tactile_L": (("tactile", "tactile_l"),),
    "tactile_R": (("tactile", "tactile_r"),),
}
MODALITIES = tuple(MODALITY_INPUTS)


@dataclass(frozen=True)
class NetworkSpec:
    modality: str
    tower_channels: tuple[int, ...] = TOWER_CHANNELS
    head_hidden: int = HEAD_HIDDEN
    pose_widths: tuple[int, ...] = POSE_WIDTHS

    def __post_init__(self):
        if self.modality not in MODALITY_INPUTS:
            raise ValueError(f"unknown modality {self.modality!r}; expected one of {MODALITIES}")

    @property
    def inputs(self) -> tuple[tuple[str, str], ...]:
        return MODALITY_INPUTS[self.modality]

    @property
    def streams(self) -> tuple[str, ...]:
        return tuple(s for _, s in self.inputs)

    def weight_sharing(self) -> dict[str, list[str]]:
        """Branch name -> the input streams that read its single parameter set."""
        out: dict[str, list[str]] = {}
        for branch, stream in self.inputs:
            out.setdefault(branch, []).append(stream)
        return out

    def branch_width(self, branch: str) -> int:
        return self.pose_widths[-1] if branch == "pose" else self.tower_channels[-1]

    @property
    def feature_width(self) -> int:
        return sum(self.branch_width(b) for b, _ in self.inputs)

    def layers(self) -> list[str]:
        tower = []
        for c in self.tower_channels:
            tower += [f"conv2d(3x3,{c})", "relu", "maxpool(2x2)"]
        tower.append("global_avg_pool")
        return tower

    def to_json(self) -> dict:
        return {
            "modality": self.modality,
            "tower_channels": list(self.tower_channels),
            "head_hidden": self.head_hidden,
            "pose_widths": list(self.pose_widths),
            "tower": self.layers(),
            "head": [f"linear({self.head_hidden})", "relu", "linear(1)", "sigmoid"],
            "weight_sharing": self.weight_sharing(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "NetworkSpec":
        return cls(d["modality"], tuple(d["tower_channels"]), d["head_hidden"], tuple(d["pose_widths"]))


@dataclass
class FusionModel:
    spec: NetworkSpec
    params: dict[str, Parameter]
    norm: NormStats | None = None
    config: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def modality(self) -> str:
        return self.spec.modality

    @property
    def dtype(self):
        return next(iter(self.params.values())).value.dtype

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def astype(self, dtype) -> "FusionModel":
        return FusionModel(
            self.spec, {k: p.astype(dtype) for k, p in self.params.items()}, self.norm, dict(self.config), self.seed
        )

    def parameter_bytes(self) -> bytes:
        return b"".join(self.params[k].value.astype("<f4").tobytes() for k in self.params)


# --- construction ---------------------------------------------------------------------


def _uniform(rng, shape, fan_in, gain, dtype):
    bound = gain * np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def build_model(modality: str, seed: int = 0, dtype=np.float32, spec: NetworkSpec | None = None) -> FusionModel:
    """Fresh model with fan-in-scaled uniform weights and zero biases."""
    spec = spec or NetworkSpec(modality)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x1A7E])
    relu_gain = np.sqrt(6.0)  # He-uniform bound sqrt(6 / fan_in)
    params: dict[str, Parameter] = {}
    for branch in spec.weight_sharing():
        if branch == "pose":
            fan = 5
            for i, wdt in enumerate(spec.pose_widths, 1):
                params[f"pose.fc{i}.w"] = Parameter(_uniform(rng, (fan, wdt), fan, relu_gain, dtype))
                params[f"pose.fc{i}.b"] = Parameter(np.zeros(wdt, dtype))
                fan = wdt
            continue
        cin = 3
        for i, cout in enumerate(spec.tower_channels, 1):
            params[f"{branch}.conv{i}.w"] = Parameter(_uniform(rng, (cout, cin, 3, 3), cin * 9, relu_gain, dtype))
            params[f"{branch}.conv{i}.b"] = Parameter(np.zeros(cout, dtype))
            cin = cout
    f = spec.feature_width
    params["head.fc1.w"] = Parameter(_uniform(rng, (f, spec.head_hidden), f, relu_gain, dtype))
    params["head.fc1.b"] = Parameter(np.zeros(spec.head_hidden, dtype))
    # small output layer keeps initial logits near zero
    params["head.fc2.w"] = Parameter(_uniform(rng, (spec.head_hidden, 1), spec.head_hidden, 0.1, dtype))
    params["head.fc2.b"] = Parameter(np.zeros(1, dtype))
    return FusionModel(spec, params, None, {}, int(seed))


# --- forward / backward ---------------------------------------------------------------


def _tower_forward(model: FusionModel, branch: str, x):
    caches = []
    for i in range(1, len(model.spec.tower_channels) + 1):
        w, b = model.params[f"{branch}.conv{i}.w"].value, model.params[f"{branch}.conv{i}.b"].value
        x, c_conv = L.conv2d_forward(w, b, x)
        x, c_relu = L.relu_forward(x)
        x, c_pool = L.maxpool_forward(x)
        caches.append((c_conv, c_relu, c_pool))
    x, c_gap = L.global_avg_pool_forward(x)
    return x, (caches, c_gap)


def _tower_backward(model: FusionModel, branch: str, cache, d):
    caches, c_gap = cache
    d = L.global_avg_pool_backward(c_gap, d)
    for i in range(len(caches), 0, -1):
        c_conv, c_relu, c_pool = caches[i - 1]
        d = L.maxpool_backward(c_pool, d)
        d = L.relu_backward(c_relu, d)
        wp, bp = model.params[f"{branch}.conv{i}.w"], model.params[f"{branch}.conv{i}.b"]
        d, dw, db = L.conv2d_backward(wp.value, c_conv, d, need_dx=i > 1)
        wp.grad += dw
        bp.grad += db


def _pose_forward(model: FusionModel, x):
    caches = []
    n = len(model.spec.pose_widths)
    for i in range(1, n + 1):
        x, c_lin = L.linear_forward(model.params[f"pose.fc{i}.w"].value, model.params[f"pose.fc{i}.b"].value, x)
        c_relu = None
        if i < n:
            x, c_relu = L.relu_forward(x)
        caches.append((c_lin, c_relu))
    return x, caches


def _pose_backward(model: FusionModel, caches, d):
    for i in range(len(caches), 0, -1):
        c_lin, c_relu = caches[i - 1]
        if c_relu is not None:
            d = L.relu_backward(c_relu, d)
        wp, bp = model.params[f"pose.fc{i}.w"], model.params[f"pose.fc{i}.b"]
        d, dw, db = L.linear_backward(wp.value, c_lin, d)
        wp.grad += dw
        bp.grad += db


def features(model: FusionModel, batch: dict[str, np.ndarray]):
    feats, caches = [], []
    for branch, stream in model.spec.inputs:
        if stream not in batch:
            raise ShapeMismatch(f"{model.modality} model needs input stream {stream!r}")
        x = batch[stream]
        if branch == "pose":
            f, c = _pose_forward(model, x)
        else:
            if x.ndim != 4 or x.shape[-1] != 3:
                raise ShapeMismatch(f"stream {stream} must be (N,H,W,3), got {x.shape}")
            f, c = _tower_forward(model, branch, x)
        feats.append(f)
        caches.append(c)
    return np.concatenate(feats, axis=1), caches


def forward(model: FusionModel, batch: dict[str, np.ndarray]):
    """Logits of shape (N,) and the cache needed by :func:`backward`."""
    feat, tower_caches = features(model, batch)
    p = model.params
    h, c1 = L.linear_forward(p["head.fc1.w"].value, p["head.fc1.b"].value, feat)
    h, c2 = L.relu_forward(h)
    z, c3 = L.linear_forward(p["head.fc2.w"].value, p["head.fc2.b"].value, h)
    return z[:, 0], (tower_caches, c1, c2, c3)


def backward(model: FusionModel, cache, dlogits: np.ndarray) -> None:
    """Accumulate parameter gradients of ``sum(dlogits * logits)``."""
    tower_caches, c1, c2, c3 = cache
    p = model.params
    d = dlogits[:, None].astype(model.dtype, copy=False)
    d, dw, db = L.linear_backward(p["head.fc2.w"].value, c3, d)
    p["head.fc2.w"].grad += dw
    p["head.fc2.b"].grad += db
    d = L.relu_backward(c2, d)
    d, dw, db = L.linear_backward(p["head.fc1.w"].value, c1, d)
    p["head.fc1.w"].grad += dw
    p["head.fc1.b"].grad += db
    offset = 0
    for (branch, _), c in zip(model.spec.inputs, tower_caches):
        w = model.spec.branch_width(branch)
        dseg = np.ascontiguousarray(d[:, offset:offset + w])
        offset += w
        if branch == "pose":
            _pose_backward(model, c, dseg)
        else:
            _tower_backward(model, branch, c, dseg)


def loss_and_grad(model: FusionModel, batch: dict[str, np.ndarray], labels: np.ndarray) -> float:
    """Mean BCE on ``batch``; gradients are accumulated into the parameters."""
    logits, cache = forward(model, batch)
    loss, dz = L.bce_with_logits(logits, labels)
    backward(model, cache, dz)
    return loss


def spec_summary(model: FusionModel) -> str:
    return json.dumps(model.spec.to_json(), sort_keys=True)
