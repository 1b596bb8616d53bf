"""Run configuration: one JSON file governs every pipeline stage."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .learn.model import MODALITIES
from .learn.train import TrainConfig
from .select import SelectionConfig
from .world import FORCE_RANGE

CAMERA_SIZE = (72, 72)
TACTILE_SIZE = (54, 72)


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field, e.g. ``train.lr``."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class TrainSection:
    epochs: int = 20
    lr: float = 1e-3
    lr_drop_epoch: int = 10
    lr_drop: float = 0.1
    batch_size: int = 32

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            lr_drop_epoch=self.lr_drop_epoch,
            lr_drop=self.lr_drop,
            batch_size=self.batch_size,
            seed=seed,
        )


@dataclass
class SelectionSection:
    threshold: float = 0.9
    max_attempts: int = 50

    def to_selection_config(self, force_range) -> SelectionConfig:
        return SelectionConfig(self.threshold, self.max_attempts, tuple(force_range))


@dataclass
class GraspSection:
    objects: int = 12
    trials_per_object: int = 10
    seed: int = 7_000_001
    split_index: int = 0
    models: list = field(default_factory=lambda: ["vision", "fusion"])


@dataclass
class RunConfig:
    seed: int = 0
    object_count: int = 40
    trial_count: int = 2000
    force_range: list = field(default_factory=lambda: list(FORCE_RANGE))
    camera_size: list = field(default_factory=lambda: list(CAMERA_SIZE))
    tactile_size: list = field(default_factory=lambda: list(TACTILE_SIZE))
    train: TrainSection = field(default_factory=TrainSection)
    split_seeds: list = field(default_factory=lambda: [0, 1, 2])
    test_fraction: float = 0.25
    selection: SelectionSection = field(default_factory=SelectionSection)
    grasp: GraspSection = field(default_factory=GraspSection)
    modalities: list = field(default_factory=lambda: list(MODALITIES))
    output_dir: str = "runs/default"

    # --- io ---

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, data) -> "RunConfig":
        cfg = _build(cls, data, "")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError("<root>", f"{path} is not valid JSON ({e.msg}, line {e.lineno})") from None
        return cls.from_json(data)

    # --- validation ---

    def validate(self) -> None:
        _int_at_least("object_count", self.object_count, 2)
        _int_at_least("trial_count", self.trial_count, 1)
        _int_at_least("seed", self.seed, 0)
        fr = self.force_range
        if not (isinstance(fr, list) and len(fr) == 2 and all(_is_num(v) for v in fr)):
            raise ConfigError("force_range", "must be [min, max] in newtons")
        if not 0 <= fr[0] <= fr[1]:
            raise ConfigError("force_range", f"need 0 <= min <= max, got {fr}")
        if list(self.camera_size) != list(CAMERA_SIZE):
            raise ConfigError("camera_size", f"the renderers produce {list(CAMERA_SIZE)} frames")
        if list(self.tactile_size) != list(TACTILE_SIZE):
            raise ConfigError("tactile_size", f"the renderers produce {list(TACTILE_SIZE)} frames")

        t = self.train
        _int_at_least("train.epochs", t.epochs, 1)
        _int_at_least("train.batch_size", t.batch_size, 1)
        _int_at_least("train.lr_drop_epoch", t.lr_drop_epoch, 0)
        if not (_is_num(t.lr) and t.lr > 0):
            raise ConfigError("train.lr", f"must be positive, got {t.lr!r}")
        if not (_is_num(t.lr_drop) and 0 < t.lr_drop <= 1):
            raise ConfigError("train.lr_drop", f"must lie in (0, 1], got {t.lr_drop!r}")

        s = self.split_seeds
        if not (isinstance(s, list) and len(s) == 3 and all(isinstance(v, int) and not isinstance(v, bool) for v in s)):
            raise ConfigError("split_seeds", "must be a list of 3 integers")
        if len(set(s)) != 3:
            raise ConfigError("split_seeds", f"seeds must be distinct, got {s}")
        if not (_is_num(self.test_fraction) and 0 < self.test_fraction < 1):
            raise ConfigError("test_fraction", f"must lie in (0, 1), got {self.test_fraction!r}")

        sel = self.selection
        if not (_is_num(sel.threshold) and 0 < sel.threshold < 1):
            raise ConfigError("selection.threshold", f"must lie in (0, 1), got {sel.threshold!r}")
        _int_at_least("selection.max_attempts", sel.max_attempts, 1)

        g = self.grasp
        _int_at_least("grasp.objects", g.objects, 1)
        _int_at_least("grasp.trials_per_object", g.trials_per_object, 0)
        _int_at_least("grasp.seed", g.seed, 0)
        if not (isinstance(g.split_index, int) and 0 <= g.split_index < 3):
            raise ConfigError("grasp.split_index", "must be 0, 1 or 2")
        for i, m in enumerate(g.models):
            if m not in MODALITIES:
                raise ConfigError(f"grasp.models[{i}]", f"unknown modality {m!r}")
        for i, m in enumerate(self.modalities):
            if m not in MODALITIES:
                raise ConfigError(f"modalities[{i}]", f"unknown modality {m!r}")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir", "must be a non-empty path")


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int_at_least(path: str, v, lo: int) -> None:
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(path, f"must be an integer, got {v!r}")
    if v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")


def _build(cls, data, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", "expected a JSON object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}{key}", "unknown field")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        sub = f.default_factory() if callable(f.default_factory) else None
        if is_dataclass(sub):
            value = _build(type(sub), value, f"{prefix}{name}.")
        kwargs[name] = value
    return cls(**kwargs)
