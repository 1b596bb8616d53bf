"""Grasp selection by rejection sampling, and the grasping benchmark.

A proposal sampler draws grasp parameters; each proposal is closed in
simulation, the at-grasp snapshots are rendered, and the model scores them.
The first proposal scoring at least ``threshold`` is executed.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .learn.data import record_arrays
from .learn.model import FusionModel
from .learn.train import predict_arrays
from .oracle import ContactSet, collection_policy, compute_contacts, fit_cylinder, lift_outcome
from .sensors import base_frame, render_camera, render_depth, render_tactile
from .trials import SensorRig, trial_seed, worker_count
from .world import FORCE_RANGE, GraspParams, ObjectModel, Scene, Table, place_object

BASELINE = "data collection"


@dataclass(frozen=True)
class SelectionConfig:
    threshold: float = 0.9
    max_attempts: int = 50
    force_range: tuple[float, float] = FORCE_RANGE
    xy_sigma: float = 10.0
    z_min: float = 5.0
    blind: bool = False  # sample the whole workspace instead of around the fitted cylinder
    chunk: int = 8  # proposals rendered and scored per batch

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        lo, hi = self.force_range
        if not 0 <= lo <= hi:
            raise ValueError(f"invalid force_range {self.force_range}")


@dataclass
class SelectionResult:
    accepted: bool
    attempts: int
    chosen_params: GraspParams | None = None
    lift_success: bool | None = None
    attempt_log: list[tuple[GraspParams, float]] = field(default_factory=list)


@dataclass
class Candidate:
    """One closed-gripper proposal: parameters, contacts and the frames a model may see."""

    params: GraspParams
    contacts: ContactSet
    frames: dict


# --- scorers --------------------------------------------------------------------------


class ConstantScorer:
    def __init__(self, p: float):
        self.p = float(p)

    def __call__(self, scene: Scene, candidates: Sequence[Candidate]) -> np.ndarray:
        return np.full(len(candidates), self.p)


class OracleScorer:
    """Scores 1 for grasps the noise-free physics says will hold, else 0."""

    def __call__(self, scene: Scene, candidates: Sequence[Candidate]) -> np.ndarray:
        return np.array(
            [float(lift_outcome(scene, c.params, c.contacts, noise=False).success) for c in candidates]
        )


class ModelScorer:
    def __init__(self, model: FusionModel):
        self.model = model

    def __call__(self, scene: Scene, candidates: Sequence[Candidate]) -> np.ndarray:
        if not candidates:
            return np.zeros(0)
        return predict_arrays(self.model, record_arrays(candidates))


def as_scorer(model):
    if isinstance(model, FusionModel):
        return ModelScorer(model)
    if callable(model):
        return model
    raise TypeError(f"cannot score grasps with {type(model).__name__}")


# --- proposals ------------------------------------------------------------------------


def _blind_proposal(table: Table, seed: int, config: SelectionConfig) -> GraspParams:
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0xB11D])
    return GraspParams(
        ee_x=float(rng.uniform(table.xmin, table.xmax)),
        ee_y=float(rng.uniform(table.ymin, table.ymax)),
        ee_z=float(rng.uniform(config.z_min, 120.0)),
        phi=float(rng.uniform(0.0, math.pi)),
        force=float(rng.uniform(*config.force_range)),
    )


def _snapshots_at_rest(scene: Scene, rig: SensorRig) -> dict:
    return {
        "rgb_Ta": render_camera(scene, None, "Ta"),
        "tactile_L_Ta": base_frame(rig.gel_left, "Ta"),
        "tactile_R_Ta": base_frame(rig.gel_right, "Ta"),
    }


def close_gripper(scene: Scene, params: GraspParams, rest: dict, rig: SensorRig) -> Candidate:
    """Close the jaws at ``params`` and render the at-grasp snapshots."""
    contacts = compute_contacts(scene, params)
    frames = dict(rest)
    frames["rgb_Tb"] = render_camera(scene, params, "Tb")
    frames["depth_Tb"] = render_depth(scene, params, "Tb")
    frames["tactile_L_Tb"] = render_tactile(contacts, "left", scene.object, params, rig.gel_left, "Tb")
    frames["tactile_R_Tb"] = render_tactile(contacts, "right", scene.object, params, rig.gel_right, "Tb")
    return Candidate(params, contacts, frames)


def select_grasp(
    scene: Scene,
    model,
    config: SelectionConfig | None = None,
    seed: int = 0,
    rig: SensorRig | None = None,
) -> SelectionResult:
    """Propose, close, score; execute the first proposal at or above the threshold.

    Proposals depend only on ``seed`` and the attempt index, so scoring them in
    small batches gives the same result as scoring them one at a time.
    """
    config = config or SelectionConfig()
    rig = rig or SensorRig()
    scorer = as_scorer(model)
    rest = _snapshots_at_rest(scene, rig)
    cyl = None if config.blind else fit_cylinder(render_depth(scene, None, "Ta"))

    log: list[tuple[GraspParams, float]] = []
    for start in range(0, config.max_attempts, config.chunk):
        idx = range(start, min(start + config.chunk, config.max_attempts))
        batch = []
        for k in idx:
            s = trial_seed(seed, k)
            if config.blind:
                params = _blind_proposal(scene.table, s, config)
            else:
                params = collection_policy(cyl, s, config.force_range, config.xy_sigma, config.z_min)
            batch.append(close_gripper(scene, params, rest, rig))
        probs = scorer(scene, batch)
        for k, cand, p in zip(idx, batch, probs):
            log.append((cand.params, float(p)))
            if p >= config.threshold:
                out = lift_outcome(scene, cand.params, cand.contacts, noise_seed=trial_seed(seed, k))
                return SelectionResult(True, k + 1, cand.params, out.success, log)
    return SelectionResult(False, config.max_attempts, None, None, log)


# --- forced empty closures -----------------------------------------------------------


def empty_closure(scene: Scene, seed: int, rig: SensorRig | None = None, config: SelectionConfig | None = None):
    """A closure that touches nothing: a usual proposal raised just above the object's top."""
    rig = rig or SensorRig()
    config = config or SelectionConfig()
    cyl = fit_cylinder(render_depth(scene, None, "Ta"))
    p = collection_policy(cyl, seed, config.force_range, config.xy_sigma, config.z_min)
    lift = float(np.random.default_rng([int(seed) & 0xFFFFFFFF, 0xE3]).uniform(1.0, 15.0))
    p = GraspParams(p.ee_x, p.ee_y, scene.object.height + lift, p.phi, p.force)
    cand = close_gripper(scene, p, _snapshots_at_rest(scene, rig), rig)
    if not cand.contacts.empty:
        raise AssertionError("raised closure unexpectedly touches the object")
    return cand


def empty_closure_acceptances(
    model,
    objects: Sequence[ObjectModel],
    count: int,
    seed: int,
    threshold: float = 0.9,
    rig: SensorRig | None = None,
) -> tuple[int, np.ndarray]:
    """How many of ``count`` forced empty closures ``model`` would accept."""
    scorer = as_scorer(model)
    probs = []
    for i in range(count):
        s = trial_seed(seed, i)
        scene = place_object(objects[i % len(objects)], s)
        probs.append(float(scorer(scene, [empty_closure(scene, s, rig)])[0]))
    probs = np.array(probs)
    return int((probs >= threshold).sum()), probs


# --- benchmark ------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkRow:
    model: str
    object_id: str
    trials: int
    successes: int
    mean_attempts: float

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")


@dataclass
class BenchmarkTable:
    rows: list[BenchmarkRow]

    def models(self) -> list[str]:
        return list(dict.fromkeys(r.model for r in self.rows))

    def objects(self) -> list[str]:
        return list(dict.fromkeys(r.object_id for r in self.rows))

    def total(self, model: str) -> float:
        """Mean of the per-object success rates."""
        rates = [r.rate for r in self.rows if r.model == model]
        return float(np.mean(rates)) if rates else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "object_id", "trials", "successes", "mean_attempts"])
        for r in self.rows:
            w.writerow([r.model, r.object_id, r.trials, r.successes, f"{r.mean_attempts:.3f}"])
        for m in self.models():
            rows = [r for r in self.rows if r.model == m]
            trials = sum(r.trials for r in rows)
            attempts = sum(r.mean_attempts * r.trials for r in rows) / trials if trials else 0.0
            w.writerow([m, "TOT", trials, sum(r.successes for r in rows), f"{attempts:.3f}"])
        return buf.getvalue()

    def to_markdown(self) -> str:
        objs = self.objects()
        head = "| model | " + " | ".join(f"O{i + 1}" for i in range(len(objs))) + " | TOT |"
        sep = "|---|" + "---:|" * (len(objs) + 1)
        lines = [head, sep]
        for m in self.models():
            rates = {r.object_id: r.rate for r in self.rows if r.model == m}
            cells = [f"{100 * rates[o]:.0f}%" for o in objs]
            lines.append(f"| {m} | " + " | ".join(cells) + f" | {100 * self.total(m):.1f}% |")
        lines.append("")
        lines += [f"O{i + 1}: {o}" for i, o in enumerate(objs)]
        return "\n".join(lines) + "\n"

    def write(self, directory, stem: str = "grasp_benchmark") -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        c, m = d / f"{stem}.csv", d / f"{stem}.md"
        c.write_text(self.to_csv())
        m.write_text(self.to_markdown())
        return c, m


def _baseline_trial(scene: Scene, seed: int, config: SelectionConfig) -> tuple[bool, int]:
    """The collection policy grasps once, without any model filtering."""
    cyl = fit_cylinder(render_depth(scene, None, "Ta"))
    params = collection_policy(cyl, trial_seed(seed, 0), config.force_range, config.xy_sigma, config.z_min)
    out = lift_outcome(scene, params, compute_contacts(scene, params), noise_seed=trial_seed(seed, 0))
    return out.success, 1


def _bench_job(args):
    name, model, obj, oi, t, seed, config, rig = args
    s = trial_seed(seed, oi * 100_000 + t)
    scene = place_object(obj, s)
    if model is None:
        return _baseline_trial(scene, s, config)
    res = select_grasp(scene, model, config, s, rig)
    return bool(res.accepted and res.lift_success), res.attempts


def grasp_benchmark(
    objects: Sequence[ObjectModel],
    models: Mapping[str, object],
    trials_per_object: int = 10,
    seed: int = 0,
    config: SelectionConfig | None = None,
    rig: SensorRig | None = None,
    include_baseline: bool = True,
    workers: int | None = None,
) -> BenchmarkTable:
    """Per-object success of grasp selection with each model, plus the unfiltered baseline.

    Every model sees the same scenes and the same proposal sequence for a given
    (object, trial), so differences come from the models alone.
    """
    config = config or SelectionConfig()
    rig = rig or SensorRig()
    entries: list[tuple[str, object]] = []
    if include_baseline:
        entries.append((BASELINE, None))
    entries += list(models.items())
    if trials_per_object <= 0:
        return BenchmarkTable([])

    jobs = [
        (name, model, obj, oi, t, seed, config, rig)
        for name, model in entries
        for oi, obj in enumerate(objects)
        for t in range(trials_per_object)
    ]
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_bench_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_bench_job(j) for j in jobs]

    rows = []
    it = iter(results)
    for name, _ in entries:
        for obj in objects:
            outs = [next(it) for _ in range(trials_per_object)]
            rows.append(
                BenchmarkRow(
                    name,
                    obj.object_id,
                    trials_per_object,
                    int(sum(ok for ok, _ in outs)),
                    float(np.mean([a for _, a in outs])),
                )
            )
    return BenchmarkTable(rows)
