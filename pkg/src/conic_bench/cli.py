"""Command-line entry points.

Exit codes: 0 success, 1 input/format error, 2 pairing/join error,
3 degenerate-task error.  Every report embeds the resolved RunConfig.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from ._parallel import parallel_map
from .config import RunConfig
from .core import DEFAULT_REGISTRY, N_FEATURES, canonical_feature_names
from .countmetrics import CropSpec, composition_metrics
from .downstream.harness import run_downstream
from .downstream.importance import select_features
from .errors import (
    ConicBenchError,
    DegenerateTargets,
    IdMismatch,
    ImageIdMismatch,
    OrphanImage,
    PairingError,
)
from .features import patient_feature_vector
from .segmetrics import aggregate_mpq, bootstrap_metric, match_instances, pq_report

FEATURE_SETS = ("Dm", "Dc", "Dd", "D", "Dbar")


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    return config.override(seed=args.seed, threads=args.threads)


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# ---------------------------------------------------------------------------
# eval-seg

def _grid_payload_names(directory: str) -> list[str]:
    names = [f for f in os.listdir(directory)
             if not f.endswith(".json") and os.path.isfile(os.path.join(directory, f))]
    return sorted(names)


def _match_pair(paths: tuple[str, str]):
    gt = cio.read_label_grid(paths[0])
    pred = cio.read_label_grid(paths[1])
    return match_instances(gt, pred)


def _paired_grid_stats(gt_dir: str, pred_dir: str, threads: int):
    gt_names = _grid_payload_names(gt_dir)
    pred_names = _grid_payload_names(pred_dir)
    missing_pred = sorted(set(gt_names) - set(pred_names))
    missing_gt = sorted(set(pred_names) - set(gt_names))
    if missing_pred or missing_gt:
        parts = []
        if missing_pred:
            parts.append(f"no prediction for {', '.join(missing_pred)}")
        if missing_gt:
            parts.append(f"no ground truth for {', '.join(missing_gt)}")
        raise PairingError("; ".join(parts))
    pairs = [(os.path.join(gt_dir, n), os.path.join(pred_dir, n)) for n in gt_names]
    return gt_names, parallel_map(_match_pair, pairs, threads)


def cmd_eval_seg(args: argparse.Namespace) -> int:
    config = _load_config(args)
    names, stats = _paired_grid_stats(args.gt_dir, args.pred_dir, config.threads)
    report = {
        "config": config.to_json(),
        "n_images": len(names),
        "metrics": pq_report(stats, registry=config.registry),
    }
    if args.bootstrap:
        boot = bootstrap_metric(stats, lambda s: aggregate_mpq(s).mpq_plus,
                                n=config.bootstrap_n, seed=config.seed)
        report["bootstrap"] = {
            "n": config.bootstrap_n,
            "metric": "mpq_plus",
            "mean": boot.mean,
            "lo": boot.lo,
            "hi": boot.hi,
        }
    _emit(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# eval-counts

def _joined_count_matrices(pred_csv: str, truth_csv: str, registry):
    pred_rows = {c.image_id: c for c in cio.read_counts_table(pred_csv)}
    truth_rows = {c.image_id: c for c in cio.read_counts_table(truth_csv)}
    only_pred = sorted(set(pred_rows) - set(truth_rows))
    only_truth = sorted(set(truth_rows) - set(pred_rows))
    if only_pred or only_truth:
        raise ImageIdMismatch(
            f"image ids differ; only in pred: {only_pred}; only in truth: {only_truth}")
    ids = sorted(pred_rows)
    pred = np.stack([pred_rows[i].as_vector(registry) for i in ids])
    truth = np.stack([truth_rows[i].as_vector(registry) for i in ids])
    return ids, pred, truth


def cmd_eval_counts(args: argparse.Namespace) -> int:
    config = _load_config(args)
    ids, pred, truth = _joined_count_matrices(args.pred_csv, args.truth_csv, config.registry)
    report = {
        "config": config.to_json(),
        "n_images": len(ids),
        "metrics": composition_metrics(pred, truth).to_json(registry=config.registry),
    }
    _emit(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# extract-features

def _extract_one(args_tuple):
    patient_id, records, radii, = args_tuple
    return patient_feature_vector(patient_id, records, radii_um=radii)


def cmd_extract_features(args: argparse.Namespace) -> int:
    config = _load_config(args)
    manifest = cio.read_manifest(args.manifest_csv)
    by_patient: dict[str, list] = {pid: [] for pid in manifest.values()}
    for name in sorted(os.listdir(args.nuclei_dir)):
        path = os.path.join(args.nuclei_dir, name)
        if not os.path.isfile(path):
            continue
        for rec in cio.read_nuclei_table(path):
            if rec.image_id not in manifest:
                raise OrphanImage(f"image {rec.image_id!r} has no manifest entry")
            pid = manifest[rec.image_id]
            if rec.patient_id != pid:
                raise IdMismatch(
                    f"nucleus {rec.nucleus_id} in {rec.image_id!r} claims patient "
                    f"{rec.patient_id!r} but the manifest says {pid!r}")
            by_patient[pid].append(rec)
    patients = sorted(by_patient)
    units = [(pid, by_patient[pid], tuple(config.radii_um)) for pid in patients]
    vectors = parallel_map(_extract_one, units, config.threads)
    cio.write_feature_matrix(args.out_csv, vectors)
    return 0


# ---------------------------------------------------------------------------
# fit-downstream

def _feature_set_columns(tag: str) -> list[int]:
    from .core import FEATURE_SET_IDS
    if tag in FEATURE_SET_IDS:
        return list(FEATURE_SET_IDS[tag])
    return list(range(N_FEATURES))  # Dbar: selection runs within the pipeline


def cmd_fit_downstream(args: argparse.Namespace) -> int:
    config = _load_config(args)
    vectors = cio.read_feature_matrix(args.features_csv)
    feat_ids = {v.patient_id for v in vectors}
    if args.task == "grading":
        labels_map = cio.read_grading_labels(args.labels_csv)
        target_ids = set(labels_map)
    else:
        survival = {r.patient_id: r for r in cio.read_survival_table(args.survival_csv)}
        target_ids = set(survival)
    if feat_ids != target_ids:
        raise IdMismatch(
            f"patient ids differ; only in features: {sorted(feat_ids - target_ids)}; "
            f"only in targets: {sorted(target_ids - feat_ids)}")

    patients = sorted(feat_ids)
    by_id = {v.patient_id: v for v in vectors}
    cols = _feature_set_columns(args.feature_set)
    X = np.stack([by_id[p].values[cols] for p in patients])
    if args.task == "grading":
        targets = np.array([labels_map[p] for p in patients])
    else:
        targets = [survival[p] for p in patients]

    report = run_downstream(
        X, patients, targets, task=args.task,
        search_n=config.search_n, folds=config.folds, repeats=config.repeats,
        seed=config.seed, threads=config.threads, n_perm=config.n_perm,
        stratify=config.stratify,
        run_selection=args.feature_set in ("D", "Dbar"),
    )
    report["feature_set"] = args.feature_set
    report["feature_columns"] = cols
    report = {"config": config.to_json(), **report}
    _emit(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# select-features

def cmd_select_features(args: argparse.Namespace) -> int:
    config = _load_config(args)
    vectors = []
    with open(args.importances_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "split_id":
            raise ConicBenchError(f"{args.importances_csv}: header must start with split_id")
        for row in reader:
            if row:
                vectors.append(np.array([float(c) for c in row[1:]]))
    selection = select_features(vectors)
    report = {"config": config.to_json(), "importance": selection.to_json()}
    _emit(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# bootstrap

def cmd_bootstrap(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.task == "seg":
        _, stats = _paired_grid_stats(args.gt, args.pred, config.threads)
        boot = bootstrap_metric(stats, lambda s: aggregate_mpq(s).mpq_plus,
                                n=config.bootstrap_n, seed=config.seed)
        metric_name = "mpq_plus"
    else:
        _, pred, truth = _joined_count_matrices(args.pred, args.gt, config.registry)
        rows = list(range(pred.shape[0]))

        def mr2_of(subset):
            idx = np.array(subset)
            return composition_metrics(pred[idx], truth[idx]).mr2

        boot = bootstrap_metric(rows, mr2_of, n=config.bootstrap_n, seed=config.seed)
        metric_name = "mr2"
    report = {
        "config": config.to_json(),
        "bootstrap": {
            "n": config.bootstrap_n,
            "metric": metric_name,
            "samples": [float(s) for s in boot.samples],
            "mean": boot.mean,
            "lo": boot.lo,
            "hi": boot.hi,
        },
    }
    _emit(report, args.out)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conic-bench",
        description="Nuclear segmentation/composition evaluation and cell-analytics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker count (falls back to ${'{'}CONIC_BENCH_THREADS{'}'})")
        p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("eval-seg", help="panoptic-quality report for paired label grids")
    p.add_argument("gt_dir")
    p.add_argument("pred_dir")
    p.add_argument("--bootstrap", action="store_true", help="add bootstrap confidence bounds")
    common(p)
    p.set_defaults(fn=cmd_eval_seg)

    p = sub.add_parser("eval-counts", help="composition regression metrics for counts CSVs")
    p.add_argument("pred_csv")
    p.add_argument("truth_csv")
    common(p)
    p.set_defaults(fn=cmd_eval_counts)

    p = sub.add_parser("extract-features", help="per-patient 222-feature matrix from nuclei tables")
    p.add_argument("nuclei_dir")
    p.add_argument("manifest_csv")
    p.add_argument("out_csv")
    common(p)
    p.set_defaults(fn=cmd_extract_features)

    p = sub.add_parser("fit-downstream", help="random search + feature selection pipeline")
    p.add_argument("features_csv")
    p.add_argument("--labels", dest="labels_csv", help="grading labels CSV")
    p.add_argument("--survival", dest="survival_csv", help="survival CSV")
    p.add_argument("--task", choices=("grading", "survival"), required=True)
    p.add_argument("--feature-set", dest="feature_set", choices=FEATURE_SETS, default="D")
    common(p)
    p.set_defaults(fn=cmd_fit_downstream)

    p = sub.add_parser("select-features", help="median rule over per-split importance vectors")
    p.add_argument("importances_csv")
    common(p)
    p.set_defaults(fn=cmd_select_features)

    p = sub.add_parser("bootstrap", help="bootstrap confidence bounds for a dataset metric")
    p.add_argument("--task", choices=("seg", "counts"), required=True)
    p.add_argument("gt", help="gt directory (seg) or truth CSV (counts)")
    p.add_argument("pred", help="prediction directory (seg) or CSV (counts)")
    common(p)
    p.set_defaults(fn=cmd_bootstrap)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "fn", None) is cmd_fit_downstream:
        if args.task == "grading" and not args.labels_csv:
            print("error: --labels is required for the grading task", file=sys.stderr)
            return 1
        if args.task == "survival" and not args.survival_csv:
            print("error: --survival is required for the survival task", file=sys.stderr)
            return 1
    try:
        return args.fn(args)
    except PairingError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except DegenerateTargets as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 3
    except ConicBenchError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[IO]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
