"""Data-collection trials, automatic labeling, dataset persistence and object splits.

A trial follows the collection chronology: snapshot ``Ta`` with the arm out of
view, fit a cylinder to the depth image and propose a grasp, close the gripper
and snapshot ``Tb``, lift, and snapshot the gels again at ``Tc``.  Only the
``Tc`` gels decide the label.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .frames import FormatError, SensorFrame, read_frame, write_frame
from .oracle import GraspOutcome, collection_policy, compute_contacts, fit_cylinder, lift_outcome
from .sensors import GelConfig, base_frame, render_camera, render_depth, render_tactile
from .world import FORCE_RANGE, GraspParams, ObjectModel, Scene, Table, place_object

FORMAT_VERSION = 1

# (manifest key, frame kind, file sensor name, tag)
FRAME_SLOTS = (
    ("rgb_Ta", "rgb", "rgb", "Ta"),
    ("rgb_Tb", "rgb", "rgb", "Tb"),
    ("depth_Tb", "depth", "depth", "Tb"),
    ("tactile_L_Ta", "tactile", "tactileL", "Ta"),
    ("tactile_L_Tb", "tactile", "tactileL", "Tb"),
    ("tactile_L_Tc", "tactile", "tactileL", "Tc"),
    ("tactile_R_Ta", "tactile", "tactileR", "Ta"),
    ("tactile_R_Tb", "tactile", "tactileR", "Tb"),
    ("tactile_R_Tc", "tactile", "tactileR", "Tc"),
)


class TooFewObjects(ValueError):
    pass


class DatasetValidationError(ValueError):
    def __init__(self, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__("dataset references missing files: " + ", ".join(self.missing))


@dataclass(frozen=True)
class SensorRig:
    """The two gels plus the contact detector used for automatic labels."""

    gel_left: GelConfig = field(default_factory=lambda: GelConfig.for_sensor("left"))
    gel_right: GelConfig = field(default_factory=lambda: GelConfig.for_sensor("right"))
    contact_threshold: float | None = None

    def gel(self, jaw: str) -> GelConfig:
        return self.gel_left if jaw == "left" else self.gel_right

    def to_json(self) -> dict:
        def gel(g: GelConfig):
            return {
                "resolution": list(g.resolution),
                "gel_sigma": g.gel_sigma,
                "light_dirs": [list(d) for d in g.light_dirs],
                "base_level": list(g.base_level),
                "k_shade": g.k_shade,
                "vignette": g.vignette,
            }

        return {"left": gel(self.gel_left), "right": gel(self.gel_right), "contact_threshold": self.contact_threshold}

    @classmethod
    def from_json(cls, d: dict) -> "SensorRig":
        def gel(g):
            return GelConfig(
                resolution=tuple(g["resolution"]),
                gel_sigma=g["gel_sigma"],
                light_dirs=tuple(tuple(v) for v in g["light_dirs"]),
                base_level=tuple(g["base_level"]),
                k_shade=g["k_shade"],
                vignette=g["vignette"],
            )

        return cls(gel(d["left"]), gel(d["right"]), d.get("contact_threshold"))


@dataclass
class TrialRecord:
    trial_id: int
    object_id: str
    params: GraspParams
    frames: dict[str, SensorFrame]
    label: bool
    oracle_outcome: GraspOutcome
    auto_label_source: str = "contact_at_Tc"
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def check(self) -> None:
        for key, kind, _, tag in FRAME_SLOTS:
            f = self.frames.get(key)
            if f is None:
                raise ValueError(f"trial {self.trial_id}: frame {key} missing")
            if f.kind != kind or f.timestamp_tag != tag:
                raise ValueError(f"trial {self.trial_id}: frame {key} is {f.kind}@{f.timestamp_tag}")

    def __eq__(self, other):
        if not isinstance(other, TrialRecord):
            return NotImplemented
        return (
            self.trial_id == other.trial_id
            and self.object_id == other.object_id
            and self.params == other.params
            and self.label == other.label
            and self.oracle_outcome == other.oracle_outcome
            and self.auto_label_source == other.auto_label_source
            and self.pose == other.pose
            and self.frames.keys() == other.frames.keys()
            and all(self.frames[k] == other.frames[k] for k in self.frames)
        )


@dataclass
class DatasetManifest:
    records: list[TrialRecord]
    objects: list[ObjectModel]
    rig: SensorRig = field(default_factory=SensorRig)
    format_version: int = FORMAT_VERSION
    root: Path | None = None

    def object_ids(self) -> list[str]:
        return [o.object_id for o in self.objects]

    def object(self, object_id: str) -> ObjectModel:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)


@dataclass(frozen=True)
class SplitSpec:
    train_object_ids: frozenset
    test_object_ids: frozenset
    seed: int

    def __post_init__(self):
        if self.train_object_ids & self.test_object_ids:
            raise ValueError("train and test objects overlap")

    def select(self, records: Iterable[TrialRecord], side: str) -> list[TrialRecord]:
        ids = self.train_object_ids if side == "train" else self.test_object_ids
        return [r for r in records if r.object_id in ids]


# --- labeling -------------------------------------------------------------------------


def contact_signal(frame: SensorFrame, base: np.ndarray) -> float:
    """Mean absolute deviation of a tactile frame from its unloaded gel image."""
    return float(np.abs(frame.data - base).mean())


_LOG_FLOOR = 1e-7


def calibrate_contact_threshold(loaded: Sequence[float], unloaded: Sequence[float]) -> float:
    """Midpoint between the loaded and unloaded cluster means, in log space.

    Unloaded gels read exactly zero while loaded signals span several decades,
    so the midpoint is taken on log10 of the signal.
    """
    if not len(loaded) or not len(unloaded):
        raise ValueError("calibration needs both loaded and unloaded examples")
    lo = np.mean(np.log10(np.maximum(unloaded, _LOG_FLOOR)))
    hi = np.mean(np.log10(np.maximum(loaded, _LOG_FLOOR)))
    return float(10 ** ((lo + hi) / 2))


def auto_label(tactile_L_Tc: SensorFrame, tactile_R_Tc: SensorFrame, rig: SensorRig) -> bool:
    """True iff at least one gel still feels the object after lifting."""
    if rig.contact_threshold is None:
        raise ValueError("sensor rig has no calibrated contact threshold")
    sig_l = contact_signal(tactile_L_Tc, base_frame(rig.gel_left).data)
    sig_r = contact_signal(tactile_R_Tc, base_frame(rig.gel_right).data)
    return sig_l > rig.contact_threshold or sig_r > rig.contact_threshold


# --- trials ---------------------------------------------------------------------------


def _capture(scene: Scene, seed: int, force_range, rig: SensorRig, noise: bool):
    obj = scene.object
    base_l = base_frame(rig.gel_left, "Ta")
    base_r = base_frame(rig.gel_right, "Ta")
    rgb_a = render_camera(scene, None, "Ta")
    cyl = fit_cylinder(render_depth(scene, None, "Ta"))
    params = collection_policy(cyl, seed, force_range)
    contacts = compute_contacts(scene, params)
    frames = {
        "rgb_Ta": rgb_a,
        "rgb_Tb": render_camera(scene, params, "Tb"),
        "depth_Tb": render_depth(scene, params, "Tb"),
        "tactile_L_Ta": base_l,
        "tactile_L_Tb": render_tactile(contacts, "left", obj, params, rig.gel_left, "Tb"),
        "tactile_R_Ta": base_r,
        "tactile_R_Tb": render_tactile(contacts, "right", obj, params, rig.gel_right, "Tb"),
    }
    outcome = lift_outcome(scene, params, contacts, noise_seed=seed, noise=noise)
    if outcome.success:
        frames["tactile_L_Tc"] = frames["tactile_L_Tb"].retag("Tc")
        frames["tactile_R_Tc"] = frames["tactile_R_Tb"].retag("Tc")
    else:
        frames["tactile_L_Tc"] = base_l.retag("Tc")
        frames["tactile_R_Tc"] = base_r.retag("Tc")
    return params, frames, outcome


def run_trial(
    scene: Scene,
    seed: int,
    force_range=FORCE_RANGE,
    rig: SensorRig | None = None,
    trial_id: int = 0,
    noise: bool = True,
) -> TrialRecord:
    """Run one collection trial on ``scene`` and label it from the ``Tc`` gels."""
    rig = rig or SensorRig()
    params, frames, outcome = _capture(scene, seed, force_range, rig, noise)
    label = auto_label(frames["tactile_L_Tc"], frames["tactile_R_Tc"], rig)
    return TrialRecord(
        trial_id=trial_id,
        object_id=scene.object.object_id,
        params=params,
        frames=frames,
        label=label,
        oracle_outcome=outcome,
        pose=scene.pose,
    )


def calibrate_rig(objects: Sequence[ObjectModel], seed: int, force_range, rig: SensorRig, n: int = 64) -> SensorRig:
    """Calibrate the contact detector on a batch of trials outside the dataset's seed stream."""
    loaded, unloaded = [], []
    for i in range(n):
        s = trial_seed(seed ^ 0xCA11B, i)
        obj = objects[i % len(objects)]
        scene = place_object(obj, s)
        _, frames, _ = _capture(scene, s, force_range, rig, noise=False)
        for key, jaw in (("tactile_L_Tb", "left"), ("tactile_R_Tb", "right")):
            loaded.append(contact_signal(frames[key], base_frame(rig.gel(jaw)).data))
            unloaded.append(contact_signal(frames[key.replace("Tb", "Ta")], base_frame(rig.gel(jaw)).data))
    loaded = [s for s in loaded if s > 0]
    return SensorRig(rig.gel_left, rig.gel_right, calibrate_contact_threshold(loaded, unloaded))


def trial_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(index)]).generate_state(1)[0])


def _trial_job(args):
    obj, table, seed, index, force_range, rig, noise = args
    s = trial_seed(seed, index)
    scene = place_object(obj, s, table)
    return run_trial(scene, s, force_range, rig, trial_id=index, noise=noise)


def worker_count() -> int:
    env = os.environ.get("GRASPLAB_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_trials(
    objects: Sequence[ObjectModel],
    count: int,
    seed: int,
    force_range=FORCE_RANGE,
    rig: SensorRig | None = None,
    table: Table | None = None,
    noise: bool = True,
    workers: int | None = None,
) -> list[TrialRecord]:
    """Run ``count`` trials cycling over ``objects``; output order is by trial id."""
    rig = rig or SensorRig()
    table = table or Table()
    jobs = [(objects[i % len(objects)], table, seed, i, tuple(force_range), rig, noise) for i in range(count)]
    workers = workers or worker_count()
    if workers <= 1 or count < 2:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_trial_job, jobs, chunksize=max(1, count // (4 * workers))))


# --- persistence ----------------------------------------------------------------------


def _frame_name(trial_id: int, sensor: str, tag: str, kind: str) -> str:
    ext = "pgm" if kind == "depth" else "ppm"
    return f"images/trial_{trial_id:06d}_{sensor}_{tag}.{ext}"


def record_to_json(r: TrialRecord) -> dict:
    return {
        "trial_id": r.trial_id,
        "object_id": r.object_id,
        "theta": [float(v) for v in r.params.as_array()],
        "pose": list(r.pose),
        "label": bool(r.label),
        "success": bool(r.oracle_outcome.success),
        "failure_mode": r.oracle_outcome.failure_mode,
        "margin": r.oracle_outcome.margin,
        "auto_label_source": r.auto_label_source,
        "frames": {key: _frame_name(r.trial_id, sensor, tag, kind) for key, kind, sensor, tag in FRAME_SLOTS},
    }


def write_dataset(
    records: Sequence[TrialRecord], directory, objects: Sequence[ObjectModel], rig: SensorRig
) -> DatasetManifest:
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=lambda r: r.trial_id)
    lines = []
    for r in records:
        entry = record_to_json(r)
        for key, rel in entry["frames"].items():
            write_frame(r.frames[key], root / rel)
        lines.append(json.dumps(entry, sort_keys=True))
    (root / "manifest.jsonl").write_text("".join(line + "\n" for line in lines))
    meta = {
        "format_version": FORMAT_VERSION,
        "objects": [o.to_json() for o in objects],
        "sensors": rig.to_json(),
    }
    (root / "objects.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return DatasetManifest(list(records), list(objects), rig, FORMAT_VERSION, root)


_REQUIRED = ("trial_id", "object_id", "theta", "label", "failure_mode", "margin", "frames")


def _parse_line(line: str, lineno: int, path: Path) -> dict:
    try:
        entry = json.loads(line)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
    if not isinstance(entry, dict):
        raise FormatError(f"{path}:{lineno}: expected a JSON object")
    missing = [k for k in _REQUIRED if k not in entry]
    if missing:
        raise FormatError(f"{path}:{lineno}: missing fields {missing}")
    if len(entry["theta"]) != 5:
        raise FormatError(f"{path}:{lineno}: theta must have 5 numbers")
    return entry


def read_dataset(directory, load_frames: bool = True) -> DatasetManifest:
    root = Path(directory)
    meta = json.loads((root / "objects.json").read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{root / 'objects.json'}: unsupported format version {meta.get('format_version')}")
    objects = [ObjectModel.from_json(o) for o in meta["objects"]]
    ids = [o.object_id for o in objects]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{root / 'objects.json'}: duplicate object ids")
    rig = SensorRig.from_json(meta["sensors"])

    mpath = root / "manifest.jsonl"
    entries = []
    for lineno, line in enumerate(mpath.read_text().splitlines(), start=1):
        if line.strip():
            entries.append(_parse_line(line, lineno, mpath))

    missing = [str(root / rel) for e in entries for rel in e["frames"].values() if not (root / rel).is_file()]
    if missing:
        raise DatasetValidationError(missing)

    slots = {key: (kind, tag) for key, kind, _, tag in FRAME_SLOTS}
    records = []
    for e in entries:
        frames = {}
        if load_frames:
            for key, rel in e["frames"].items():
                kind, tag = slots[key]
                frames[key] = read_frame(root / rel, kind, tag)
        margin = float(e["margin"])
        success = bool(e.get("success", margin > 1))
        records.append(
            TrialRecord(
                trial_id=int(e["trial_id"]),
                object_id=e["object_id"],
                params=GraspParams(*(float(v) for v in e["theta"])),
                frames=frames,
                label=bool(e["label"]),
                oracle_outcome=GraspOutcome(success, e["failure_mode"], margin),
                auto_label_source=e.get("auto_label_source", "contact_at_Tc"),
                pose=tuple(float(v) for v in e.get("pose", (0.0, 0.0, 0.0))),
            )
        )
    return DatasetManifest(records, objects, rig, FORMAT_VERSION, root)


# --- splits ---------------------------------------------------------------------------


def split_by_object(manifest: DatasetManifest | Sequence[str], seed: int, test_fraction: float = 0.25) -> SplitSpec:
    """Random object-level train/test partition."""
    ids = sorted(manifest.object_ids() if isinstance(manifest, DatasetManifest) else manifest)
    if len(ids) < 2:
        raise TooFewObjects(f"need at least 2 objects to split, got {len(ids)}")
    n_test = min(len(ids) - 1, max(1, int(round(test_fraction * len(ids)))))
    order = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x5B117]).permutation(len(ids))
    test = frozenset(ids[i] for i in order[:n_test])
    return SplitSpec(frozenset(ids) - test, test, int(seed))
