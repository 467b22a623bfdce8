"""Second-order (Newton) gradient-boosted trees.

Each round fits one depth-limited regression tree per class (softmax) or a
single tree (Cox partial likelihood, Breslow ties) to the per-sample gradient
g and hessian h of the objective at the current scores.  Splits maximize

    1/2 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - (G_L+G_R)^2/(H_L+H_R+lambda)]

with missing values routed to a learned default direction, and leaf weights
are -soft_threshold(G, alpha)/(H+lambda) scaled by the learning rate.  The
dart booster drops each earlier round independently with probability
rate_drop when computing the round's residuals, then rescales the new round
by 1/(k+1) and the dropped rounds by k/(k+1) (k = number dropped).

Trees are grown and evaluated by numba kernels over flat node arrays; the
only python-level work per round is the objective evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..core import SurvivalRecord
from ..errors import DegenerateTargets, InvariantViolation, NonFiniteFeature, WidthMismatch
from .hyperparams import GbtHyperparams


# ---------------------------------------------------------------------------
# objectives

def softmax_probabilities(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Summed cross-entropy of the softmax over per-class scores."""
    p = softmax_probabilities(scores)
    return float(-np.log(p[np.arange(labels.size), labels]).sum())


def softmax_grad_hess(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample, per-class gradient p - y and diagonal hessian p(1 - p)."""
    p = softmax_probabilities(scores)
    g = p.copy()
    g[np.arange(labels.size), labels] -= 1.0
    h = p * (1.0 - p)
    return g, h


def _cox_risk_terms(scores: np.ndarray, times: np.ndarray, events: np.ndarray):
    """Per-sample cumulative Breslow terms A = sum d/R and B = sum d/R^2 over
    event times <= the sample's time, with R the risk-set exp-score total."""
    shift = scores.max()
    e = np.exp(scores - shift)
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = e[order]
    ev_sorted = events[order].astype(float)
    suffix = np.cumsum(e_sorted[::-1])[::-1]
    first = np.searchsorted(t_sorted, t_sorted, side="left")
    risk_total = suffix[first]  # risk-set total at each sample's own time
    inv = ev_sorted / risk_total
    inv2 = ev_sorted / risk_total ** 2
    last = np.searchsorted(t_sorted, t_sorted, side="right") - 1
    a = np.cumsum(inv)[last]
    b = np.cumsum(inv2)[last]
    out_a = np.empty_like(a)
    out_b = np.empty_like(b)
    out_e = np.empty_like(e_sorted)
    out_a[order] = a
    out_b[order] = b
    out_e[order] = e_sorted
    return out_e, out_a, out_b


def cox_loss(scores: np.ndarray, times: np.ndarray, events: np.ndarray) -> float:
    """Negative Cox partial log-likelihood with Breslow tie handling."""
    shift = scores.max()
    e = np.exp(scores - shift)
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    suffix = np.cumsum(e[order][::-1])[::-1]
    first = np.searchsorted(t_sorted, t_sorted, side="left")
    log_risk = np.log(suffix[first]) + shift
    ev = events[order]
    s_sorted = scores[order]
    return float(-(s_sorted[ev] - log_risk[ev]).sum())


def cox_grad_hess(scores: np.ndarray, times: np.ndarray,
                  events: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and diagonal hessian of the negative partial log-likelihood."""
    e, a, b = _cox_risk_terms(scores, times, events)
    g = -events.astype(float) + e * a
    h = e * a - e * e * b
    return g, np.maximum(h, 0.0)


class _SoftmaxObjective:
    name = "softmax"

    def __init__(self, labels: np.ndarray, n_classes: int):
        self.labels = labels
        self.n_columns = n_classes

    def grad_hess(self, scores):
        return softmax_grad_hess(scores, self.labels)

    def loss(self, scores):
        return softmax_loss(scores, self.labels)


class _CoxObjective:
    name = "cox"

    def __init__(self, times: np.ndarray, events: np.ndarray):
        self.times = times
        self.events = events
        self.n_columns = 1

    def grad_hess(self, scores):
        g, h = cox_grad_hess(scores[:, 0], self.times, self.events)
        return g[:, None], h[:, None]

    def loss(self, scores):
        return cox_loss(scores[:, 0], self.times, self.events)


# ---------------------------------------------------------------------------
# tree kernels

@njit(cache=True)
def _subset(pool, k):  # pragma: no cover - jitted
    """Uniform k-subset of pool via random sort keys (numba RNG)."""
    if k >= pool.shape[0]:
        return pool.copy()
    keys = np.random.random(pool.shape[0])
    order = np.argsort(keys)
    out = np.empty(k, pool.dtype)
    for i in range(k):
        out[i] = pool[order[i]]
    return out


@njit(cache=True)
def _grow_tree(X, g, h, rows, max_depth, lam, alpha, mcw, lr,
               bytree, bylevel, bynode, tree_seed):  # pragma: no cover - jitted
    n_features = X.shape[1]
    np.random.seed(tree_seed)
    k_tree = max(1, int(round(bytree * n_features)))
    cols_tree = _subset(np.arange(n_features), k_tree)
    k_level = max(1, int(round(bylevel * k_tree)))
    level_cols = np.empty((max_depth, k_level), np.int64)
    for d in range(max_depth):
        level_cols[d] = _subset(cols_tree, k_level)
    k_node = max(1, int(round(bynode * k_level)))

    m = rows.shape[0]
    max_nodes = 2 * m + 2
    feat = np.full(max_nodes, -1, np.int64)
    thr = np.zeros(max_nodes)
    mleft = np.zeros(max_nodes, np.uint8)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    weight = np.zeros(max_nodes)

    ws = rows.copy()
    stack_node = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    top = 0
    stack_node[0] = 0
    stack_depth[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m
    n_nodes = 1

    scratch_v = np.empty(m)
    scratch_g = np.empty(m)
    scratch_h = np.empty(m)

    while top >= 0:
        node = stack_node[top]
        depth = stack_depth[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        top -= 1
        size = hi - lo
        g_sum = 0.0
        h_sum = 0.0
        for i in range(lo, hi):
            g_sum += g[ws[i]]
            h_sum += h[ws[i]]

        best_gain = 0.0
        best_col = -1
        best_thr = 0.0
        best_ml = True
        if depth < max_depth and size >= 2:
            cols = np.sort(_subset(level_cols[depth], k_node))
            parent = g_sum * g_sum / (h_sum + lam)
            for ci in range(cols.shape[0]):
                f = cols[ci]
                cnt = 0
                g_present = 0.0
                h_present = 0.0
                for i in range(lo, hi):
                    r = ws[i]
                    v = X[r, f]
                    if not np.isnan(v):
                        scratch_v[cnt] = v
                        scratch_g[cnt] = g[r]
                        scratch_h[cnt] = h[r]
                        cnt += 1
                        g_present += g[r]
                        h_present += h[r]
                if cnt < 2:
                    continue
                order = np.argsort(scratch_v[:cnt])
                g_miss = g_sum - g_present
                h_miss = h_sum - h_present
                gl = 0.0
                hl = 0.0
                for kk in range(cnt - 1):
                    j = order[kk]
                    gl += scratch_g[j]
                    hl += scratch_h[j]
                    vj = scratch_v[j]
                    if vj == scratch_v[order[kk + 1]]:
                        continue
                    # missing routed left
                    gl1 = gl + g_miss
                    hl1 = hl + h_miss
                    gr1 = g_sum - gl1
                    hr1 = h_sum - hl1
                    if hl1 >= mcw and hr1 >= mcw:
                        gain = 0.5 * (gl1 * gl1 / (hl1 + lam)
                                      + gr1 * gr1 / (hr1 + lam) - parent)
                        if gain > best_gain:
                            best_gain = gain
                            best_col = f
                            best_thr = vj
                            best_ml = True
                    # missing routed right
                    gr2 = g_sum - gl
                    hr2 = h_sum - hl
                    if hl >= mcw and hr2 >= mcw:
                        gain = 0.5 * (gl * gl / (hl + lam)
                                      + gr2 * gr2 / (hr2 + lam) - parent)
                        if gain > best_gain:
                            best_gain = gain
                            best_col = f
                            best_thr = vj
                            best_ml = False

        if best_col < 0 or best_gain <= 0.0:
            if g_sum > alpha:
                g_shrunk = g_sum - alpha
            elif g_sum < -alpha:
                g_shrunk = g_sum + alpha
            else:
                g_shrunk = 0.0
            denom = h_sum + lam
            weight[node] = 0.0 if denom <= 0 else -g_shrunk / denom * lr
            continue

        # stable two-pass partition of ws[lo:hi] into left | right
        buf = ws[lo:hi].copy()
        pos = lo
        for i in range(buf.shape[0]):
            r = buf[i]
            v = X[r, best_col]
            if (not np.isnan(v) and v <= best_thr) or (np.isnan(v) and best_ml):
                ws[pos] = r
                pos += 1
        mid = pos
        for i in range(buf.shape[0]):
            r = buf[i]
            v = X[r, best_col]
            if not ((not np.isnan(v) and v <= best_thr) or (np.isnan(v) and best_ml)):
                ws[pos] = r
                pos += 1

        feat[node] = best_col
        thr[node] = best_thr
        mleft[node] = 1 if best_ml else 0
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        top += 1
        stack_node[top] = rid
        stack_depth[top] = depth + 1
        stack_lo[top] = mid
        stack_hi[top] = hi
        top += 1
        stack_node[top] = lid
        stack_depth[top] = depth + 1
        stack_lo[top] = lo
        stack_hi[top] = mid

    return (feat[:n_nodes].copy(), thr[:n_nodes].copy(), mleft[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), weight[:n_nodes].copy())


@njit(cache=True)
def _predict_tree(X, feat, thr, mleft, left, right, weight, scale, out):  # pragma: no cover
    for i in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            v = X[i, feat[node]]
            if np.isnan(v):
                node = left[node] if mleft[node] == 1 else right[node]
            elif v <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += scale * weight[node]


@dataclass(frozen=True)
class Tree:
    """One regression tree as flat node arrays (node 0 = root, feature -1 = leaf)."""

    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    def predict_into(self, X: np.ndarray, out: np.ndarray, scale: float = 1.0) -> None:
        _predict_tree(X, self.feature, self.threshold, self.missing_left,
                      self.left, self.right, self.weight, scale, out)


# ---------------------------------------------------------------------------
# the boosting loop

@dataclass
class GbtModel:
    """A fitted ensemble; immutable after fit and safe to share."""

    objective: str          # "softmax" or "cox"
    n_classes: int          # 1 for cox
    n_features: int
    params: GbtHyperparams
    rounds: list[list[Tree]] = field(default_factory=list)
    round_scales: list[float] = field(default_factory=list)
    base_score: float = 0.0
    features_used: frozenset[int] = frozenset()
    train_loss: tuple[float, ...] = ()


def _as_survival_arrays(targets) -> tuple[np.ndarray, np.ndarray] | None:
    if isinstance(targets, (list, tuple)) and len(targets) \
            and isinstance(targets[0], SurvivalRecord):
        times = np.array([r.time for r in targets], dtype=float)
        events = np.array([r.event for r in targets], dtype=bool)
        return times, events
    if isinstance(targets, tuple) and len(targets) == 2:
        return np.asarray(targets[0], dtype=float), np.asarray(targets[1], dtype=bool)
    return None


def fit_gbt(features: np.ndarray, targets, params: GbtHyperparams, seed: int = 0) -> GbtModel:
    """Fit the booster on a feature matrix with NaN = missing.

    ``targets`` is either an integer label vector (softmax over K classes) or
    survival data (a list of SurvivalRecord, or a (times, events) pair) for
    the Cox objective.  Deterministic under ``seed``.
    """
    X = np.ascontiguousarray(features, dtype=float)
    if X.ndim != 2:
        raise InvariantViolation("features must be a 2-D matrix")
    if np.isinf(X).any():
        raise NonFiniteFeature("features contain infinities")
    n = X.shape[0]
    if n < 2:
        raise InvariantViolation("need at least 2 samples")

    survival = _as_survival_arrays(targets)
    if survival is not None:
        times, events = survival
        if times.shape != (n,) or events.shape != (n,):
            raise InvariantViolation("survival targets must match the sample count")
        if not events.any():
            raise DegenerateTargets("cox objective needs at least one observed event")
        objective = _CoxObjective(times, events)
    else:
        labels = np.asarray(targets)
        if labels.shape != (n,):
            raise InvariantViolation("labels must match the sample count")
        labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise InvariantViolation("labels must be 0..K-1")
        if np.unique(labels).size < 2:
            raise DegenerateTargets("softmax objective needs at least two classes present")
        objective = _SoftmaxObjective(labels, int(labels.max()) + 1)

    k = objective.n_columns
    rng = np.random.default_rng(seed)
    rounds: list[list[Tree]] = []
    scales: list[float] = []
    raw_contribs: list[np.ndarray] = []  # per round, (n, k) train predictions
    features_used: set[int] = set()
    scores = np.zeros((n, k))
    losses: list[float] = []
    use_dart = params.booster == "dart"
    n_rows = max(1, int(round(params.subsample * n)))

    for _ in range(params.num_boost_round):
        if use_dart and rounds:
            dropped = np.flatnonzero(rng.random(len(rounds)) < params.rate_drop)
        else:
            dropped = np.zeros(0, dtype=np.int64)
        if dropped.size:
            eff_scores = scores.copy()
            for j in dropped:
                eff_scores -= scales[j] * raw_contribs[j]
        else:
            eff_scores = scores
        g, h = objective.grad_hess(eff_scores)

        round_trees: list[Tree] = []
        raw = np.zeros((n, k))
        for c in range(k):
            rows = np.sort(np.argsort(rng.random(n))[:n_rows]) if n_rows < n \
                else np.arange(n)
            tree_seed = int(rng.integers(0, 2 ** 31 - 1))
            tree = Tree(*_grow_tree(
                X, np.ascontiguousarray(g[:, c]), np.ascontiguousarray(h[:, c]),
                rows.astype(np.int64), params.max_depth,
                params.reg_lambda, params.reg_alpha, params.min_child_weight,
                params.learning_rate, params.colsample_bytree,
                params.colsample_bylevel, params.colsample_bynode, tree_seed))
            round_trees.append(tree)
            features_used.update(int(f) for f in tree.feature if f >= 0)
            tree.predict_into(X, raw[:, c])

        if dropped.size:
            n_drop = dropped.size
            new_scale = 1.0 / (n_drop + 1)
            for j in dropped:
                scales[j] *= n_drop / (n_drop + 1)
        else:
            new_scale = 1.0
        rounds.append(round_trees)
        scales.append(new_scale)
        raw_contribs.append(raw)
        if dropped.size:
            scores = sum(s * r for s, r in zip(scales, raw_contribs))
        else:
            scores = scores + new_scale * raw
        losses.append(objective.loss(scores))

    return GbtModel(
        objective=objective.name,
        n_classes=k,
        n_features=X.shape[1],
        params=params,
        rounds=rounds,
        round_scales=scales,
        features_used=frozenset(features_used),
        train_loss=tuple(losses),
    )


def raw_scores(model: GbtModel, features: np.ndarray) -> np.ndarray:
    """(n, K) summed leaf outputs plus the base score."""
    X = np.ascontiguousarray(features, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise WidthMismatch(
            f"feature width {X.shape[1] if X.ndim == 2 else 'n/a'} != "
            f"trained width {model.n_features}")
    out = np.full((X.shape[0], model.n_classes), model.base_score)
    for trees, scale in zip(model.rounds, model.round_scales):
        for c, tree in enumerate(trees):
            tree.predict_into(X, out[:, c], scale)
    return out


def predict(model: GbtModel, features: np.ndarray) -> np.ndarray:
    """Class probabilities (softmax) or risk scores (cox)."""
    margins = raw_scores(model, features)
    if model.objective == "softmax":
        return softmax_probabilities(margins)
    return margins[:, 0]
