"""Gradient-boosted decision trees for binary classification, built on
second-order split gain with native missing-value routing.

Each split stores a learned default direction; rows whose feature is masked
follow it at training and prediction time, so no imputation ever happens.
Split finding is exact greedy over all (feature, midpoint threshold,
default direction) candidates, which keeps the learner verifiable against
brute-force enumeration at small node sizes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .features import FeatureDescriptor, FeatureMatrix


@dataclass(frozen=True)
class TrainParams:
    num_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    l2_reg: float = 1.0
    gamma: float = 0.0
    min_child_hessian: float = 1.0
    row_subsample: float = 1.0   # stochastic boosting, off by default
    col_subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_rounds < 1:
            raise ValueError("num_rounds must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.l2_reg < 0 or self.gamma < 0:
            raise ValueError("l2_reg and gamma must be >= 0")
        if not 0.0 < self.row_subsample <= 1.0 or not 0.0 < self.col_subsample <= 1.0:
            raise ValueError("subsample fractions must be in (0, 1]")


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    default_left: bool
    gain: float              # parent-vs-children improvement, gamma excluded

    @property
    def default_direction(self) -> str:
        return "left" if self.default_left else "right"


@dataclass
class TreeNode:
    """Internal node (feature is set) or leaf (weight is set)."""

    weight: Optional[float] = None
    feature: Optional[int] = None
    threshold: Optional[float] = None
    default_left: bool = True
    gain: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logistic_loss(raw, y) -> float:
    """Total (unnormalized) log loss of raw scores against 0/1 labels."""
    raw = np.asarray(raw, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum(np.logaddexp(0.0, raw) - y * raw))


def logistic_grad_hess(raw, y):
    """First and second derivatives of the logistic loss per row."""
    p = sigmoid(raw)
    return p - np.asarray(y, dtype=float), p * (1.0 - p)


def _gain(gl, hl, gr, hr, l2):
    parent_g = gl + gr
    parent_h = hl + hr
    return 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2)
                  - parent_g * parent_g / (parent_h + l2))


def find_best_split(values, mask, g, h, params: TrainParams,
                    features=None) -> Optional[SplitCandidate]:
    """Best (feature, threshold, default direction) for one node, or None.

    Thresholds are midpoints between consecutive distinct observed values;
    masked rows accrue to the default side. A candidate is valid only if
    both children carry at least min_child_hessian of hessian mass. Ties
    break toward the lower feature id, then lower threshold, then default
    left. None when no valid candidate improves on the parent by more
    than gamma.
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    g_total = g.sum()
    h_total = h.sum()
    if features is None:
        features = range(values.shape[1])

    best: Optional[SplitCandidate] = None
    for j in features:
        miss = mask[:, j]
        obs = ~miss
        vo = values[obs, j]
        if vo.size < 2:
            continue
        order = np.argsort(vo, kind="stable")
        vs = vo[order]
        cut = np.flatnonzero(vs[:-1] != vs[1:])
        if cut.size == 0:
            continue
        gp = np.cumsum(g[obs][order])
        hp = np.cumsum(h[obs][order])
        # summed directly so an empty missing set is exactly 0.0 and the
        # left/right candidates tie bitwise (tie-break must pick left)
        g_miss = g[miss].sum()
        h_miss = h[miss].sum()
        thresholds = (vs[cut] + vs[cut + 1]) / 2.0

        # Candidate order: thresholds ascending, default-left before
        # default-right; row-major flattening preserves it.
        gains = np.full((cut.size, 2), -np.inf)
        for col, (gl_extra, hl_extra) in enumerate([(g_miss, h_miss), (0.0, 0.0)]):
            gl = gp[cut] + gl_extra
            hl = hp[cut] + hl_extra
            gr = g_total - gl
            hr = h_total - hl
            with np.errstate(invalid="ignore", divide="ignore"):
                cand = _gain(gl, hl, gr, hr, params.l2_reg)
            valid = ((hl >= params.min_child_hessian)
                     & (hr >= params.min_child_hessian)
                     & ~np.isnan(cand))
            gains[valid, col] = cand[valid]

        flat = gains.ravel()
        pos = int(np.argmax(flat))
        gain = flat[pos]
        if not np.isfinite(gain):
            continue
        if best is None or gain > best.gain:
            best = SplitCandidate(feature=int(j),
                                  threshold=float(thresholds[pos // 2]),
                                  default_left=(pos % 2 == 0),
                                  gain=float(gain))
    if best is None or best.gain <= params.gamma:
        return None
    return best


def _leaf_weight(g_sum, h_sum, l2):
    denom = h_sum + l2
    return 0.0 if denom <= 0 else -g_sum / denom


def _grow(values, mask, g, h, rows, depth, params, features) -> TreeNode:
    g_sum = g[rows].sum()
    h_sum = h[rows].sum()
    if (depth >= params.max_depth or rows.size < 2
            or h_sum < 2.0 * params.min_child_hessian):
        return TreeNode(weight=_leaf_weight(g_sum, h_sum, params.l2_reg))
    cand = find_best_split(values[rows], mask[rows], g[rows], h[rows], params,
                           features=features)
    if cand is None:
        return TreeNode(weight=_leaf_weight(g_sum, h_sum, params.l2_reg))
    col = values[rows, cand.feature]
    miss = mask[rows, cand.feature]
    goes_left = np.where(miss, cand.default_left, col < cand.threshold)
    left = _grow(values, mask, g, h, rows[goes_left], depth + 1, params, features)
    right = _grow(values, mask, g, h, rows[~goes_left], depth + 1, params, features)
    return TreeNode(feature=cand.feature, threshold=cand.threshold,
                    default_left=cand.default_left, gain=cand.gain,
                    left=left, right=right)


def _tree_output(node: TreeNode, values, mask, rows, out) -> None:
    if node.is_leaf:
        out[rows] = node.weight
        return
    col = values[rows, node.feature]
    miss = mask[rows, node.feature]
    goes_left = np.where(miss, node.default_left, col < node.threshold)
    _tree_output(node.left, values, mask, rows[goes_left], out)
    _tree_output(node.right, values, mask, rows[~goes_left], out)


def tree_predict(node: TreeNode, values, mask) -> np.ndarray:
    out = np.empty(values.shape[0])
    _tree_output(node, values, mask, np.arange(values.shape[0]), out)
    return out


@dataclass
class BoostedEnsemble:
    """Additive tree model: sigmoid(base_score + lr * sum of tree outputs)."""

    trees: list
    base_score: float
    params: TrainParams
    columns: list = field(default_factory=list)   # FeatureDescriptor per feature

    def n_splits(self) -> int:
        def count(node):
            return 0 if node.is_leaf else 1 + count(node.left) + count(node.right)
        return sum(count(t) for t in self.trees)


def fit(matrix: FeatureMatrix, params: TrainParams = TrainParams()) -> BoostedEnsemble:
    """Train on a feature matrix; both classes must be present.

    The prior log-odds of the training labels seed the raw score; each
    round grows one depth-capped tree on the logistic gradients and adds
    its output scaled by the learning rate.
    """
    y = matrix.labels.astype(float)
    n = y.size
    pos = int(y.sum())
    if pos == 0 or pos == n:
        raise ValueError("training labels are single-class; prior log-odds undefined")
    base = math.log(pos / (n - pos))
    values, mask = matrix.values, matrix.mask
    raw = np.full(n, base)
    rng = np.random.default_rng(params.seed)
    n_features = values.shape[1]
    trees = []
    for _ in range(params.num_rounds):
        g, h = logistic_grad_hess(raw, y)
        rows = np.arange(n)
        if params.row_subsample < 1.0:
            take = max(1, int(round(n * params.row_subsample)))
            rows = np.sort(rng.choice(n, size=take, replace=False))
        features = None
        if params.col_subsample < 1.0:
            take = max(1, int(round(n_features * params.col_subsample)))
            features = np.sort(rng.choice(n_features, size=take, replace=False))
        root = _grow(values, mask, g, h, rows, 0, params, features)
        trees.append(root)
        raw += params.learning_rate * tree_predict(root, values, mask)
    return BoostedEnsemble(trees=trees, base_score=base, params=params,
                           columns=list(matrix.descriptors))


def _check_layout(ensemble: BoostedEnsemble, matrix: FeatureMatrix) -> None:
    if ensemble.columns:
        got = [d.label() for d in matrix.descriptors]
        want = [d.label() for d in ensemble.columns]
        if got != want:
            raise ValueError("matrix column layout does not match the trained model")


def predict_raw(ensemble: BoostedEnsemble, values, mask) -> np.ndarray:
    raw = np.full(values.shape[0], ensemble.base_score)
    for tree in ensemble.trees:
        raw += ensemble.params.learning_rate * tree_predict(tree, values, mask)
    return raw


def predict_proba(ensemble: BoostedEnsemble, matrix: FeatureMatrix) -> np.ndarray:
    _check_layout(ensemble, matrix)
    return sigmoid(predict_raw(ensemble, matrix.values, matrix.mask))


def predict_label(ensemble: BoostedEnsemble, matrix: FeatureMatrix,
                  threshold: float = 0.5) -> np.ndarray:
    return (predict_proba(ensemble, matrix) >= threshold).astype(np.int8)


def gain_importance(ensemble: BoostedEnsemble) -> np.ndarray:
    """Per-feature share of total split gain, summing to 1.

    All-zero (the documented degenerate) when the ensemble never split.
    """
    n_features = len(ensemble.columns)
    if n_features == 0:
        n_features = 1 + max((node.feature for t in ensemble.trees
                              for node in _walk(t) if not node.is_leaf), default=-1)
    scores = np.zeros(n_features)
    for tree in ensemble.trees:
        for node in _walk(tree):
            if not node.is_leaf:
                scores[node.feature] += node.gain
    total = scores.sum()
    return scores / total if total > 0 else scores


def _walk(node: TreeNode):
    yield node
    if not node.is_leaf:
        yield from _walk(node.left)
        yield from _walk(node.right)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"w": node.weight}
    return {"f": node.feature, "t": node.threshold,
            "d": "left" if node.default_left else "right",
            "gain": node.gain,
            "l": _node_to_dict(node.left), "r": _node_to_dict(node.right)}


def _node_from_dict(d: dict) -> TreeNode:
    if "w" in d:
        return TreeNode(weight=d["w"])
    return TreeNode(feature=d["f"], threshold=d["t"],
                    default_left=(d["d"] == "left"), gain=d["gain"],
                    left=_node_from_dict(d["l"]), right=_node_from_dict(d["r"]))


def ensemble_to_dict(ensemble: BoostedEnsemble) -> dict:
    return {
        "params": asdict(ensemble.params),
        "base_score": ensemble.base_score,
        "columns": [c.as_dict() for c in ensemble.columns],
        "trees": [_node_to_dict(t) for t in ensemble.trees],
    }


def ensemble_from_dict(d: dict) -> BoostedEnsemble:
    return BoostedEnsemble(
        trees=[_node_from_dict(t) for t in d["trees"]],
        base_score=d["base_score"],
        params=TrainParams(**d["params"]),
        columns=[FeatureDescriptor(**c) for c in d["columns"]],
    )


def serialize(ensemble: BoostedEnsemble) -> str:
    return json.dumps(ensemble_to_dict(ensemble), sort_keys=True)


def deserialize(text: str) -> BoostedEnsemble:
    return ensemble_from_dict(json.loads(text))
