"""Gradient boosted regression trees as the reference binary classifier.

Stagewise logistic-loss boosting: the initial score is the training log-odds,
each stage fits an exact-greedy squared-error regression tree to the residual
y - sigmoid(margin), leaf values take a Newton step (sum residual over sum
hessian) clamped to +-4, and the margin accumulates learning_rate * tree(x).
Class 1 iff margin > 0; a zero margin predicts 0.

Fitting is fully deterministic: exact greedy search needs no randomness, the
seed is recorded for provenance only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import RawDataset

SCORE_CLAMP = 4.0
_MIN_GAIN = 1e-12
_MIN_HESS = 1e-12


class DegenerateModelError(ValueError):
    """Operation needs a reference model that predicts both classes."""


@dataclass
class RegressionNode:
    """One node of a weak tree; leaves have value set and no children.

    samples/positives are training-routing label stats kept for threshold
    importance (Gini over the 0/1 labels reaching the node).
    """

    samples: int
    positives: int
    feature: int = -1
    threshold: float = 0.0
    left: Optional["RegressionNode"] = None
    right: Optional["RegressionNode"] = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class BoostedEnsemble:
    initial_score: float
    learning_rate: float
    n_estimators: int
    max_depth: int
    seed: int
    degenerate: bool
    feature_names: tuple[str, ...]
    trees: list[RegressionNode]


@dataclass(frozen=True)
class ThresholdSet:
    """(feature index, threshold, importance) sorted by importance desc, ties (feature, threshold) asc."""

    entries: tuple[tuple[int, float, float], ...]

    def pairs(self) -> list[tuple[int, float]]:
        return [(f, t) for f, t, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------- weak trees

def _grow(x, g, sorted_orders, member, depth, max_depth, y):
    idx = np.flatnonzero(member)
    node = RegressionNode(samples=len(idx), positives=int(y[idx].sum()))
    if depth >= max_depth or len(idx) < 2:
        return node
    g_tot = float(g[idx].sum())
    n_tot = len(idx)
    base = g_tot * g_tot / n_tot
    best_gain, best_feat, best_thr = _MIN_GAIN, -1, 0.0
    for j in range(x.shape[1]):
        order = sorted_orders[j][member[sorted_orders[j]]]
        vals = x[order, j]
        gs = np.cumsum(g[order])
        ns = np.arange(1, n_tot + 1, dtype=np.float64)
        cut = np.flatnonzero(vals[:-1] < vals[1:])  # split between distinct neighbors
        if len(cut) == 0:
            continue
        gl = gs[cut]
        nl = ns[cut]
        gr = g_tot - gl
        nr = n_tot - nl
        gains = gl * gl / nl + gr * gr / nr - base
        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            best_gain = float(gains[k])
            best_feat = j
            best_thr = float((vals[cut[k]] + vals[cut[k] + 1]) / 2.0)
    if best_feat < 0:
        return node
    node.feature = best_feat
    node.threshold = best_thr
    go_left = member & (x[:, best_feat] <= best_thr)
    node.left = _grow(x, g, sorted_orders, go_left, depth + 1, max_depth, y)
    node.right = _grow(x, g, sorted_orders, member & ~go_left, depth + 1, max_depth, y)
    return node


def _set_leaf_values(node, x, g, h, member):
    if node.is_leaf:
        num = float(g[member].sum())
        den = float(h[member].sum())
        v = num / den if den > _MIN_HESS else 0.0
        node.value = float(np.clip(v, -SCORE_CLAMP, SCORE_CLAMP))
        return
    go_left = member & (x[:, node.feature] <= node.threshold)
    _set_leaf_values(node.left, x, g, h, go_left)
    _set_leaf_values(node.right, x, g, h, member & ~go_left)


def _tree_predict(node, x):
    out = np.empty(x.shape[0], dtype=np.float64)
    stack = [(node, np.ones(x.shape[0], dtype=bool))]
    while stack:
        nd, member = stack.pop()
        if nd.is_leaf:
            out[member] = nd.value
            continue
        go_left = member & (x[:, nd.feature] <= nd.threshold)
        stack.append((nd.left, go_left))
        stack.append((nd.right, member & ~go_left))
    return out


# ---------------------------------------------------------------- ensemble

def fit(raw: RawDataset, n_estimators: int, max_depth: int, learning_rate: float, seed: int) -> BoostedEnsemble:
    if n_estimators < 1 or max_depth < 1:
        raise ValueError("n_estimators and max_depth must be >= 1")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must be in (0, 1]")
    x = raw.features
    y = raw.labels.astype(np.float64)
    n = len(y)
    p_bar = float(y.mean())
    if p_bar in (0.0, 1.0):
        return BoostedEnsemble(
            initial_score=SCORE_CLAMP if p_bar == 1.0 else -SCORE_CLAMP,
            learning_rate=learning_rate,
            n_estimators=n_estimators,
            max_depth=max_depth,
            seed=seed,
            degenerate=True,
            feature_names=raw.feature_names,
            trees=[],
        )
    sorted_orders = [np.argsort(x[:, j], kind="stable") for j in range(x.shape[1])]
    margin = np.full(n, math.log(p_bar / (1.0 - p_bar)))
    everyone = np.ones(n, dtype=bool)
    trees = []
    for _ in range(n_estimators):
        prob = 1.0 / (1.0 + np.exp(-margin))
        g = y - prob
        h = prob * (1.0 - prob)
        root = _grow(x, g, sorted_orders, everyone, 0, max_depth, raw.labels)
        _set_leaf_values(root, x, g, h, everyone)
        margin = margin + learning_rate * _tree_predict(root, x)
        trees.append(root)
    return BoostedEnsemble(
        initial_score=float(math.log(p_bar / (1.0 - p_bar))),
        learning_rate=learning_rate,
        n_estimators=n_estimators,
        max_depth=max_depth,
        seed=seed,
        degenerate=False,
        feature_names=raw.feature_names,
        trees=trees,
    )


def predict_margin(ens: BoostedEnsemble, x: np.ndarray, n_stages: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != len(ens.feature_names):
        raise ValueError(
            f"feature width {x.shape[1] if x.ndim == 2 else 'n/a'} does not match "
            f"model width {len(ens.feature_names)}"
        )
    margin = np.full(x.shape[0], ens.initial_score)
    use = ens.trees if n_stages is None else ens.trees[:n_stages]
    for t in use:
        margin = margin + ens.learning_rate * _tree_predict(t, x)
    return margin


def predict_class(ens: BoostedEnsemble, x: np.ndarray) -> np.ndarray:
    return (predict_margin(ens, x) > 0.0).astype(np.int8)


def correct_count(ens: BoostedEnsemble, x: np.ndarray, y: np.ndarray) -> int:
    return int((predict_class(ens, x) == np.asarray(y)).sum())


def training_accuracy(ens: BoostedEnsemble, raw: RawDataset) -> tuple[float, int]:
    c = correct_count(ens, raw.features, raw.labels)
    return c / raw.n_samples, c


# ---------------------------------------------------------------- importances

def _gini(pos: int, n: int) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def split_importance(ens: BoostedEnsemble) -> dict[tuple[int, float], float]:
    """Summed Gini importance per (feature, threshold) over all internal nodes.

    Weighted impurity decrease of the training labels routed through each
    node: (n_node/N) * [G(node) - (n_L/n_node) G(left) - (n_R/n_node) G(right)].
    """
    out: dict[tuple[int, float], float] = {}
    if not ens.trees:
        return out
    n_total = ens.trees[0].samples
    stack = list(ens.trees)
    while stack:
        nd = stack.pop()
        if nd.is_leaf:
            continue
        drop = _gini(nd.positives, nd.samples) - (
            nd.left.samples / nd.samples * _gini(nd.left.positives, nd.left.samples)
            + nd.right.samples / nd.samples * _gini(nd.right.positives, nd.right.samples)
        )
        key = (nd.feature, nd.threshold)
        out[key] = out.get(key, 0.0) + nd.samples / n_total * drop
        stack.append(nd.left)
        stack.append(nd.right)
    return out


def extract_thresholds(ens: BoostedEnsemble) -> ThresholdSet:
    """Deduplicated thresholds ranked by importance desc, ties (feature, threshold) asc."""
    imp = split_importance(ens)
    entries = sorted(((f, t, v) for (f, t), v in imp.items()), key=lambda e: (-e[2], e[0], e[1]))
    return ThresholdSet(tuple(entries))


# ---------------------------------------------------------------- serialization

def _node_obj(nd: RegressionNode):
    if nd.is_leaf:
        return {"score": nd.value, "samples": nd.samples, "positives": nd.positives}
    return {
        "feature": nd.feature,
        "threshold": nd.threshold,
        "samples": nd.samples,
        "positives": nd.positives,
        "left": _node_obj(nd.left),
        "right": _node_obj(nd.right),
    }


def to_json(ens: BoostedEnsemble) -> str:
    obj = {
        "initial_score": ens.initial_score,
        "learning_rate": ens.learning_rate,
        "n_estimators": ens.n_estimators,
        "max_depth": ens.max_depth,
        "seed": ens.seed,
        "degenerate": ens.degenerate,
        "feature_names": list(ens.feature_names),
        "trees": [_node_obj(t) for t in ens.trees],
    }
    return json.dumps(obj, indent=2)


def _node_from_obj(obj) -> RegressionNode:
    if "score" in obj:
        return RegressionNode(samples=int(obj["samples"]), positives=int(obj["positives"]), value=float(obj["score"]))
    return RegressionNode(
        samples=int(obj["samples"]),
        positives=int(obj["positives"]),
        feature=int(obj["feature"]),
        threshold=float(obj["threshold"]),
        left=_node_from_obj(obj["left"]),
        right=_node_from_obj(obj["right"]),
    )


def from_json(text: str) -> BoostedEnsemble:
    obj = json.loads(text)
    return BoostedEnsemble(
        initial_score=float(obj["initial_score"]),
        learning_rate=float(obj["learning_rate"]),
        n_estimators=int(obj["n_estimators"]),
        max_depth=int(obj["max_depth"]),
        seed=int(obj["seed"]),
        degenerate=bool(obj["degenerate"]),
        feature_names=tuple(obj["feature_names"]),
        trees=[_node_from_obj(t) for t in obj["trees"]],
    )
