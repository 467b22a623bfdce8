"""The grading/survival pipeline: splits -> random search -> winner refit ->
permutation importance -> median selection -> refit on the selected set.

Hyperparameter evaluations and splits are independent work units with seeds
derived from (global seed, param index, split index), so serial and parallel
runs produce identical reports.
"""
from __future__ import annotations

import numpy as np

from .._parallel import get_context, parallel_map
from ..core import SurvivalRecord
from ..errors import DegenerateTargets, IdMismatch, InvariantViolation
from .gbt import fit_gbt, predict
from .hyperparams import GbtHyperparams, sample_hyperparameters
from .importance import permutation_importance, select_features
from .metrics import c_index, classification_metrics, qwk
from .splits import make_cv_splits

GRADING = "grading"
SURVIVAL = "survival"


def _unit_seed(seed: int, *idx: int) -> int:
    return int(np.random.SeedSequence([seed, *idx]).generate_state(1)[0])


def _pad_probs(probs: np.ndarray, n_classes: int) -> np.ndarray:
    if probs.shape[1] >= n_classes:
        return probs
    padded = np.zeros((probs.shape[0], n_classes))
    padded[:, : probs.shape[1]] = probs
    return padded


def _grading_metric(n_classes: int):
    def metric(y_true, probs):
        return qwk(y_true, _pad_probs(np.asarray(probs), n_classes).argmax(axis=1),
                   n_classes=n_classes)
    return metric


def _survival_metric(targets, risks):
    return c_index(risks, targets)


def _rankable(value: float) -> float:
    return -np.inf if np.isnan(value) else value


def _fit_on(ctx, params: GbtHyperparams, rows: np.ndarray, seed: int, cols=None):
    X = ctx["X"][rows]
    if cols is not None:
        X = X[:, cols]
    if ctx["task"] == GRADING:
        targets = ctx["labels"][rows]
    else:
        targets = (ctx["times"][rows], ctx["events"][rows])
    return fit_gbt(X, targets, params, seed=seed)


def _eval_metric(ctx, model, rows: np.ndarray, cols=None) -> float:
    X = ctx["X"][rows]
    if cols is not None:
        X = X[:, cols]
    preds = predict(model, X)
    if ctx["task"] == GRADING:
        return _grading_metric(ctx["n_classes"])(ctx["labels"][rows], preds)
    records = [SurvivalRecord("r%d" % i, t, bool(e))
               for i, (t, e) in enumerate(zip(ctx["times"][rows], ctx["events"][rows]))]
    return c_index(preds, records)


def _search_unit(args) -> float:
    pi, si, seed = args
    ctx = get_context()
    split = ctx["splits"][si]
    try:
        model = _fit_on(ctx, ctx["params_list"][pi], split["train"], seed)
        return _eval_metric(ctx, model, split["valid"])
    except DegenerateTargets:
        return float("nan")


def _test_unit(args) -> dict:
    pi, si, seed, cols = args
    ctx = get_context()
    split = ctx["splits"][si]
    cols = None if cols is None else np.asarray(cols)
    model = _fit_on(ctx, ctx["params_list"][pi], split["train"], seed, cols=cols)
    valid_metric = _eval_metric(ctx, model, split["valid"], cols=cols)
    out = {"valid_metric": valid_metric}
    X_test = ctx["X"][split["test"]]
    if cols is not None:
        X_test = X_test[:, cols]
    preds = predict(model, X_test)
    if ctx["task"] == GRADING:
        y_test = ctx["labels"][split["test"]]
        probs = _pad_probs(preds, ctx["n_classes"])
        cls = classification_metrics(y_test, probs)
        out["test"] = {
            "qwk": qwk(y_test, probs.argmax(axis=1), n_classes=ctx["n_classes"]),
            "mf1": cls["mf1"],
            "map": cls["map"],
        }
    else:
        records = [SurvivalRecord("r%d" % i, t, bool(e))
                   for i, (t, e) in enumerate(zip(ctx["times"][split["test"]],
                                                  ctx["events"][split["test"]]))]
        out["test"] = {"c_index": c_index(preds, records)}
    return out


def _importance_unit(args) -> np.ndarray:
    pi, si, seed, n_perm = args
    ctx = get_context()
    split = ctx["splits"][si]
    model = _fit_on(ctx, ctx["params_list"][pi], split["train"], seed)
    X_valid = ctx["X"][split["valid"]]
    if ctx["task"] == GRADING:
        targets = ctx["labels"][split["valid"]]
        metric = _grading_metric(ctx["n_classes"])
    else:
        targets = [SurvivalRecord("r%d" % i, t, bool(e))
                   for i, (t, e) in enumerate(zip(ctx["times"][split["valid"]],
                                                  ctx["events"][split["valid"]]))]
        metric = _survival_metric
    return permutation_importance(model, X_valid, targets, metric,
                                  n_perm=n_perm, seed=_unit_seed(seed, 1))


def _summarize(values) -> dict:
    arr = np.asarray(values, dtype=float)
    finite = arr[~np.isnan(arr)]
    if finite.size == 0:
        return {"mean": None, "std": None}
    return {"mean": float(finite.mean()), "std": float(finite.std())}


def run_downstream(features: np.ndarray,
                   patient_ids: list[str],
                   targets,
                   task: str,
                   search_n: int = 2048,
                   folds: int = 5,
                   repeats: int = 5,
                   seed: int = 0,
                   threads: int = 1,
                   n_perm: int = 5,
                   stratify: bool = False,
                   run_selection: bool = True) -> dict:
    """Run the full pipeline and return the JSON-ready report.

    ``targets`` is a label vector (grading) or a list of SurvivalRecord
    aligned with ``patient_ids`` (survival).
    """
    X = np.asarray(features, dtype=float)
    if task not in (GRADING, SURVIVAL):
        raise InvariantViolation(f"unknown task {task!r}")
    if X.shape[0] != len(patient_ids):
        raise IdMismatch("feature rows do not match patient ids")

    ctx: dict = {"X": X, "task": task}
    if task == GRADING:
        labels = np.asarray(targets, dtype=np.int64)
        if np.unique(labels).size < 2:
            raise DegenerateTargets("grading needs at least two label values")
        ctx["labels"] = labels
        ctx["n_classes"] = int(labels.max()) + 1
        stratify_labels = labels.tolist() if stratify else None
    else:
        if len(targets) != len(patient_ids):
            raise IdMismatch("survival records do not match patient ids")
        ctx["times"] = np.array([r.time for r in targets])
        ctx["events"] = np.array([r.event for r in targets], dtype=bool)
        if not ctx["events"].any():
            raise DegenerateTargets("survival task needs at least one event")
        stratify_labels = None

    splits = make_cv_splits(patient_ids, stratify_labels=stratify_labels,
                            seed=seed, folds=folds, repeats=repeats)
    pos = {p: i for i, p in enumerate(patient_ids)}
    ctx["splits"] = [{"train": np.array([pos[p] for p in s.train]),
                      "valid": np.array([pos[p] for p in s.valid]),
                      "test": np.array([pos[p] for p in s.test])} for s in splits]
    params_list = sample_hyperparameters(search_n, seed=seed)
    ctx["params_list"] = params_list
    n_splits = len(splits)

    # -- random search -------------------------------------------------------
    units = [(pi, si, _unit_seed(seed, pi, si))
             for pi in range(search_n) for si in range(n_splits)]
    scores = np.array(parallel_map(_search_unit, units, threads, ctx))
    valid_matrix = scores.reshape(search_n, n_splits)
    mean_valid = np.array([_rankable(np.nanmean(row)) if not np.all(np.isnan(row))
                           else -np.inf for row in valid_matrix])
    winner = int(np.argmax(mean_valid))

    # -- winner refit on every split -----------------------------------------
    test_units = [(winner, si, _unit_seed(seed, winner, si), None) for si in range(n_splits)]
    winner_results = parallel_map(_test_unit, test_units, threads, ctx)

    # -- per-split best model -> permutation importance -----------------------
    best_per_split = [int(np.argmax([_rankable(v) for v in valid_matrix[:, si]]))
                      for si in range(n_splits)]
    imp_units = [(best_per_split[si], si, _unit_seed(seed, best_per_split[si], si), n_perm)
                 for si in range(n_splits)]
    importance_vectors = parallel_map(_importance_unit, imp_units, threads, ctx) \
        if run_selection else []

    report = {
        "task": task,
        "n_patients": len(patient_ids),
        "n_features": X.shape[1],
        "search_n": search_n,
        "splits": [{"repeat": s.repeat, "fold": s.fold,
                    "train": list(s.train), "valid": list(s.valid), "test": list(s.test)}
                   for s in splits],
        "winner": {
            "param_index": winner,
            "params": params_list[winner].to_json(),
            "mean_valid_metric": None if not np.isfinite(mean_valid[winner])
            else float(mean_valid[winner]),
        },
        "per_split": [
            {"repeat": splits[si].repeat, "fold": splits[si].fold,
             "best_param_index": best_per_split[si],
             "valid_metric": _opt_float(winner_results[si]["valid_metric"]),
             "test": {k: _opt_float(v) for k, v in winner_results[si]["test"].items()}}
            for si in range(n_splits)
        ],
        "summary": {
            "valid_metric": _summarize([r["valid_metric"] for r in winner_results]),
            "test": {
                key: _summarize([r["test"][key] for r in winner_results])
                for key in winner_results[0]["test"]
            },
        },
    }

    if run_selection:
        selection = select_features(importance_vectors)
        report["importance"] = selection.to_json()
        if not selection.degenerate:
            cols = tuple(selection.selected_ids)
            sel_units = [(winner, si, _unit_seed(seed, winner, si, 1), cols)
                         for si in range(n_splits)]
            sel_results = parallel_map(_test_unit, sel_units, threads, ctx)
            report["selected_refit"] = {
                "n_selected": len(cols),
                "per_split": [
                    {"repeat": splits[si].repeat, "fold": splits[si].fold,
                     "valid_metric": _opt_float(sel_results[si]["valid_metric"]),
                     "test": {k: _opt_float(v) for k, v in sel_results[si]["test"].items()}}
                    for si in range(n_splits)
                ],
                "summary": {
                    "valid_metric": _summarize([r["valid_metric"] for r in sel_results]),
                    "test": {
                        key: _summarize([r["test"][key] for r in sel_results])
                        for key in sel_results[0]["test"]
                    },
                },
            }
    return report


def _opt_float(value) -> float | None:
    value = float(value)
    return None if np.isnan(value) else value
