"""Command-line pipeline: collect, train, eval, grasp, report.

Every stage reads the same JSON run configuration.  Exit codes: 0 success,
2 configuration or usage error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import collections
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .learn import checkpoint
from .learn.baselines import evaluate_chance, evaluate_svm
from .learn.data import record_arrays
from .learn.model import MODALITIES
from .learn.train import accuracy_metrics, predict_arrays, train_arrays
from .select import grasp_benchmark
from .trials import (
    DatasetManifest,
    SensorRig,
    calibrate_rig,
    read_dataset,
    run_trials,
    split_by_object,
    worker_count,
    write_dataset,
)
from .world import FAMILIES, generate_object, object_set

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

TABLE1_ROWS = (
    ("fusion", "Vision + tactile"),
    ("vision", "Vision only"),
    ("vision_pose", "Vision + pose"),
    ("depth", "Depth only"),
    ("tactile_both", "Tactile only (both)"),
    ("tactile_L", "Tactile only (left)"),
    ("tactile_R", "Tactile only (right)"),
    ("indentation", "Indentation SVM"),
    ("chance", "Chance"),
)


class MissingCheckpoint(RuntimeError):
    def __init__(self, modality: str, path: Path):
        self.modality = modality
        super().__init__(f"no checkpoint for modality {modality!r} (expected {path})")


# --- paths ----------------------------------------------------------------------------


def out_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir)


def dataset_dir(cfg: RunConfig) -> Path:
    return out_dir(cfg) / "dataset"


def checkpoint_path(cfg: RunConfig, modality: str, split_index: int) -> Path:
    return out_dir(cfg) / "models" / f"{modality}_split{split_index}.ckpt"


# --- stages (importable) --------------------------------------------------------------


def collect(cfg: RunConfig, directory: Path | None = None, workers: int | None = None) -> DatasetManifest:
    """Generate objects, calibrate the contact detector, run and persist the trials."""
    objects = object_set(cfg.seed, cfg.object_count)
    rig = calibrate_rig(objects, cfg.seed, tuple(cfg.force_range), SensorRig())
    records = run_trials(objects, cfg.trial_count, cfg.seed, tuple(cfg.force_range), rig, workers=workers)
    return write_dataset(records, directory or dataset_dir(cfg), objects, rig)


def collect_summary(manifest: DatasetManifest) -> dict:
    labels = [r.label for r in manifest.records]
    modes = collections.Counter(r.oracle_outcome.failure_mode for r in manifest.records)
    return {
        "trials": len(labels),
        "objects": len(manifest.objects),
        "positive_rate": float(np.mean(labels)) if labels else float("nan"),
        "failure_modes": dict(sorted(modes.items())),
    }


def splits(cfg: RunConfig, manifest: DatasetManifest):
    return [split_by_object(manifest, s, cfg.test_fraction) for s in cfg.split_seeds]


def train_one(cfg: RunConfig, manifest: DatasetManifest, modality: str, split_index: int, arrays=None):
    """Train ``modality`` on split ``split_index``; returns (model, metrics)."""
    split = splits(cfg, manifest)[split_index]
    train_recs = split.select(manifest.records, "train")
    test_recs = split.select(manifest.records, "test")
    tr = arrays[0] if arrays else record_arrays(train_recs)
    te = arrays[1] if arrays else record_arrays(test_recs)
    seed = cfg.seed * 1000 + cfg.split_seeds[split_index]
    model = train_arrays(tr, modality, cfg.train.to_train_config(seed))
    model.config["train_objects"] = sorted(split.train_object_ids)
    model.config["split_seed"] = cfg.split_seeds[split_index]
    acc = accuracy_metrics(predict_arrays(model, te), te.labels)
    metrics = {
        "modality": modality,
        "split_index": split_index,
        "final_train_loss": model.config["history"][-1],
        "initial_train_loss": model.config["history"][0],
        "test_accuracy": acc.accuracy,
        "test_pos_rate": acc.pos_rate,
        "per_class": acc.per_class,
    }
    return model, metrics


def mean_se(values) -> tuple[float, float]:
    """Mean and standard error (sample std / sqrt(n)) of per-split accuracies."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def table1(cfg: RunConfig, manifest: DatasetManifest, models: dict) -> list[dict]:
    """Per-row accuracies over the three splits.

    ``models`` maps (modality, split_index) to a trained model.
    """
    sp = splits(cfg, manifest)
    accs: dict[str, list[float]] = {key: [] for key, _ in TABLE1_ROWS}
    for i, split in enumerate(sp):
        train_recs = split.select(manifest.records, "train")
        test_recs = split.select(manifest.records, "test")
        te = record_arrays(test_recs)
        for modality in MODALITIES:
            model = models.get((modality, i))
            if model is None:
                raise MissingCheckpoint(modality, checkpoint_path(cfg, modality, i))
            trained_on = model.config.get("train_objects")
            if trained_on is not None and set(trained_on) != set(split.train_object_ids):
                raise RuntimeError(f"{modality} split {i}: checkpoint was trained on a different split")
            accs[modality].append(accuracy_metrics(predict_arrays(model, te), te.labels).accuracy)
        accs["indentation"].append(evaluate_svm(train_recs, test_recs).accuracy)
        accs["chance"].append(evaluate_chance(train_recs, test_recs))
    rows = []
    for key, label in TABLE1_ROWS:
        m, se = mean_se(accs[key])
        rows.append({"row": key, "label": label, "accuracies": accs[key], "mean": m, "se": se})
    return rows


def table1_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "method", "split0", "split1", "split2", "mean", "se"])
    for r in rows:
        w.writerow([r["row"], r["label"], *(f"{a:.4f}" for a in r["accuracies"]), f"{r['mean']:.4f}", f"{r['se']:.4f}"])
    return buf.getvalue()


def table1_markdown(rows) -> str:
    lines = ["| Method | Accuracy (%) |", "|---|---:|"]
    for r in rows:
        lines.append(f"| {r['label']} | {100 * r['mean']:.1f} ± {100 * r['se']:.1f} |")
    return "\n".join(lines) + "\n"


def held_out_objects(cfg: RunConfig, exclude) -> list:
    """Fresh objects for the grasping benchmark, disjoint from ``exclude`` by id."""
    exclude = set(exclude)
    objs = []
    i = 0
    while len(objs) < cfg.grasp.objects:
        obj = generate_object(cfg.grasp.seed * 100_003 + i, FAMILIES[i % len(FAMILIES)])
        i += 1
        if obj.object_id not in exclude:
            objs.append(obj)
    return objs


def load_models(cfg: RunConfig, modalities, split_index: int) -> dict:
    out = {}
    for m in modalities:
        path = checkpoint_path(cfg, m, split_index)
        if not path.is_file():
            raise MissingCheckpoint(m, path)
        out[m] = checkpoint.load(path)
    return out


# --- commands -------------------------------------------------------------------------


def _emit(msg: str = "") -> None:
    print(msg, flush=True)


def cmd_collect(cfg: RunConfig, args) -> int:
    target = Path(args.dataset) if args.dataset else dataset_dir(cfg)
    manifest = collect(cfg, target)
    summary = collect_summary(manifest)
    (target / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _emit(f"dataset: {target}")
    _emit(f"trials: {summary['trials']}  objects: {summary['objects']}  positive rate: {summary['positive_rate']:.3f}")
    for mode, n in summary["failure_modes"].items():
        _emit(f"  {mode:16s} {n}")
    return EXIT_OK


def _modalities_arg(value: str) -> list[str]:
    return list(MODALITIES) if value == "all" else [value]


def _splits_arg(value: str) -> list[int]:
    return [0, 1, 2] if value == "all" else [int(value)]


_WORKER_MANIFEST: dict = {}


def _train_job(job) -> dict:
    cfg_json, dataset, modality, split_index = job
    cfg = RunConfig.from_json(json.loads(cfg_json))
    if dataset not in _WORKER_MANIFEST:
        _WORKER_MANIFEST.clear()
        _WORKER_MANIFEST[dataset] = read_dataset(dataset)
    model, metrics = train_one(cfg, _WORKER_MANIFEST[dataset], modality, split_index)
    path = checkpoint.save(model, checkpoint_path(cfg, modality, split_index))
    path.with_suffix(".json").write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n")
    return metrics | {"path": str(path)}


def _report_train(metrics: dict) -> None:
    _emit(
        f"{metrics['modality']} split {metrics['split_index']}: train loss {metrics['initial_train_loss']:.4f} -> "
        f"{metrics['final_train_loss']:.4f}, test accuracy {metrics['test_accuracy']:.3f}  [{metrics['path']}]"
    )


def cmd_train(cfg: RunConfig, args) -> int:
    """Train every requested (modality, split); jobs are independent, so they may run in parallel."""
    dataset = str(args.dataset or dataset_dir(cfg))
    jobs = [
        (cfg.dumps(), dataset, modality, split_index)
        for split_index in _splits_arg(args.split)
        for modality in _modalities_arg(args.modality)
    ]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for metrics in ex.map(_train_job, jobs):
                _report_train(metrics)
    else:
        for job in jobs:
            _report_train(_train_job(job))
        _WORKER_MANIFEST.clear()
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    manifest = read_dataset(args.dataset or dataset_dir(cfg))
    models = {}
    for i in range(3):
        for m, model in load_models(cfg, MODALITIES, i).items():
            models[(m, i)] = model
    rows = table1(cfg, manifest, models)
    out = out_dir(cfg) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    (out / "table1.csv").write_text(table1_csv(rows))
    (out / "table1.md").write_text(table1_markdown(rows))
    _emit(table1_markdown(rows))
    return EXIT_OK


def cmd_grasp(cfg: RunConfig, args) -> int:
    manifest = read_dataset(args.dataset or dataset_dir(cfg), load_frames=False)
    rig = manifest.rig
    models = load_models(cfg, cfg.grasp.models, cfg.grasp.split_index)
    objects = held_out_objects(cfg, manifest.object_ids())
    table = grasp_benchmark(
        objects,
        models,
        cfg.grasp.trials_per_object,
        cfg.grasp.seed,
        cfg.selection.to_selection_config(cfg.force_range),
        rig,
    )
    table.write(out_dir(cfg) / "reports", "table2")
    _emit(table.to_markdown())
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    reports = out_dir(cfg) / "reports"
    parts = ["# Run report", "", "## Configuration", "", "```json", cfg.dumps().rstrip(), "```", ""]
    summary = dataset_dir(cfg) / "summary.json"
    if summary.is_file():
        parts += ["## Dataset", "", "```json", summary.read_text().rstrip(), "```", ""]
    for name, title in (("table1.md", "Classification accuracy"), ("table2.md", "Grasping success")):
        f = reports / name
        parts += [f"## {title}", "", f.read_text().rstrip() if f.is_file() else "_not run yet_", ""]
    text = "\n".join(parts) + "\n"
    reports.mkdir(parents=True, exist_ok=True)
    (reports / "report.md").write_text(text)
    _emit(text)
    return EXIT_OK


COMMANDS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "eval": cmd_eval,
    "grasp": cmd_grasp,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError("<usage>", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grasplab", description="Visuo-tactile grasp outcome pipeline")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="run configuration JSON (defaults if omitted)")
        s.add_argument("--out", help="override output_dir")
        s.add_argument("--seed", type=int, help="override the run seed")
        s.add_argument("--dataset", help="dataset directory (default: <out>/dataset)")
        if name == "train":
            s.add_argument("--modality", required=True, choices=[*MODALITIES, "all"])
            s.add_argument("--split", default="0", choices=["0", "1", "2", "all"])
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.out:
        cfg.output_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
    except ConfigError as e:
        print(f"grasplab: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"grasplab: cannot read config: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, args)
    except Exception as e:  # noqa: BLE001 - every runtime failure maps to exit 3
        print(f"grasplab {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
