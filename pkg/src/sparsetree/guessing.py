"""Guessing strategies driven by a boosted reference model.

Three accelerations for the optimal-tree search: shrink the threshold set by
iterative least-importance elimination with a training-accuracy stopping bar,
bound the depth limit via the ensemble's VC dimension, and derive
per-subproblem lower-bound guesses from the reference model's mistakes (the
solver consumes those through ReferenceLabels).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import boosting
from .boosting import BoostedEnsemble, DegenerateModelError, RegressionNode, ThresholdSet
from .dataset import BinaryDataset, RawDataset, binarize_with_thresholds, bools_to_bits


@dataclass(frozen=True)
class ReferenceLabels:
    """Reference predictions aligned with a dataset's sample order."""

    predictions: np.ndarray
    incorrect_bits: int
    single_class: bool

    @property
    def incorrect_count(self) -> int:
        return self.incorrect_bits.bit_count()


def reference_from_predictions(predictions, labels) -> ReferenceLabels:
    preds = np.asarray(predictions, dtype=np.int8)
    y = np.asarray(labels)
    if preds.shape != y.shape:
        raise ValueError("prediction/label length mismatch")
    return ReferenceLabels(
        predictions=preds,
        incorrect_bits=bools_to_bits(preds != y),
        single_class=bool(preds.min() == preds.max()) if len(preds) else True,
    )


def reference_labels(ens: BoostedEnsemble, data) -> ReferenceLabels:
    """Evaluate an ensemble on a dataset it was trained for.

    Pass the BinaryDataset of indicator columns for a reduced-space ensemble,
    or the RawDataset for one trained on raw features.
    """
    if isinstance(data, BinaryDataset):
        x = data.rows_matrix().astype(np.float64)
    else:
        x = data.features
    return reference_from_predictions(boosting.predict_class(ens, x), data.labels)


# ---------------------------------------------------------------- depth guessing

def vc_of_depth_trees(depth: int) -> int:
    """Capacity proxy for binary trees of the given depth: 2**depth."""
    if not 0 <= depth <= 62:
        raise ValueError("weak-tree depth must be in [0, 62]")
    return 1 << depth


def min_depth_for_ensemble(n_estimators: int, vc_weak: int) -> tuple[int, float]:
    """Depth limit sufficient for a tree to match an ensemble of n_estimators
    weak learners of VC dimension vc_weak; also returns the inner product
    whose log2 is ceiled, for audit."""
    if n_estimators < 3 or vc_weak < 3:
        raise ValueError("shattering bound needs n_estimators >= 3 and vc_weak >= 3")
    m = n_estimators * vc_weak + n_estimators
    product = m * (3.0 * math.log(m) + 2.0)
    return math.ceil(math.log2(product)), product


# ---------------------------------------------------------------- column elimination

@dataclass(frozen=True)
class EliminationTrace:
    initial_correct: int
    stopping_bar: int
    refit_space: str
    steps: tuple[tuple[tuple[int, float], int], ...]
    thresholds: ThresholdSet
    ensemble: BoostedEnsemble
    fallback_translated: bool


def indicator_raw(bin_data: BinaryDataset) -> RawDataset:
    """View a binarized dataset as raw 0/1 features for refitting."""
    names = tuple(bin_data.column_header(c) for c in range(bin_data.n_columns))
    return RawDataset(bin_data.rows_matrix().astype(np.float64), bin_data.labels.copy(), names)


def _translate_node(nd: RegressionNode, col_of) -> RegressionNode:
    if nd.is_leaf:
        return RegressionNode(samples=nd.samples, positives=nd.positives, value=nd.value)
    c = col_of[(nd.feature, nd.threshold)]
    # indicator value 0 means feature > threshold, so raw children swap sides
    return RegressionNode(
        samples=nd.samples,
        positives=nd.positives,
        feature=c,
        threshold=0.5,
        left=_translate_node(nd.right, col_of),
        right=_translate_node(nd.left, col_of),
    )


def translate_to_indicators(ens: BoostedEnsemble, pairs) -> BoostedEnsemble:
    """Rewrite raw-feature splits as indicator-column splits at 0.5.

    Predicts identically to the source ensemble as long as `pairs` covers
    every split the source uses.
    """
    ordered = sorted(set((int(f), float(t)) for f, t in pairs))
    col_of = {p: c for c, p in enumerate(ordered)}
    return BoostedEnsemble(
        initial_score=ens.initial_score,
        learning_rate=ens.learning_rate,
        n_estimators=ens.n_estimators,
        max_depth=ens.max_depth,
        seed=ens.seed,
        degenerate=ens.degenerate,
        feature_names=tuple(f"col{c}" for c in range(len(ordered))),
        trees=[_translate_node(t, col_of) for t in ens.trees],
    )


def _importance_by_pair(refit: BoostedEnsemble, ordered_pairs) -> dict[tuple[int, float], float]:
    out = {p: 0.0 for p in ordered_pairs}
    for (c, _thr), v in boosting.split_importance(refit).items():
        out[ordered_pairs[c]] += v
    return out


def column_eliminate(
    raw: RawDataset,
    n_estimators: int,
    max_depth: int,
    learning_rate: float,
    seed: int,
    drop_tolerance: float = 0.0,
    batch_fraction: float = 0.0,
) -> EliminationTrace:
    """Iteratively drop the globally least-important (feature, threshold).

    Each round refits the ensemble on the surviving indicator columns and
    re-ranks importances from that refit; elimination stops when a refit's
    training correct-count falls below ceil((1 - drop_tolerance) * initial),
    undoing the offending removal.  batch_fraction > 0 removes that share of
    the survivors per round instead of one.
    """
    if not 0.0 <= drop_tolerance <= 1.0:
        raise ValueError("drop_tolerance must be in [0, 1]")
    if not 0.0 <= batch_fraction < 1.0:
        raise ValueError("batch_fraction must be in [0, 1)")
    ens0 = boosting.fit(raw, n_estimators, max_depth, learning_rate, seed)
    if ens0.degenerate:
        raise DegenerateModelError("reference model predicts a single class")
    preds0 = boosting.predict_class(ens0, raw.features)
    if preds0.min() == preds0.max():
        raise DegenerateModelError("reference model predicts a single class")
    initial_correct = int((preds0 == raw.labels).sum())
    tau = Fraction(str(drop_tolerance))
    bar = initial_correct - math.floor(tau * initial_correct)
    ts0 = boosting.extract_thresholds(ens0)
    if len(ts0) == 0:
        raise DegenerateModelError("reference model produced no thresholds")

    survivors = ts0.pairs()
    ranking = {(f, t): v for f, t, v in ts0.entries}
    steps: list[tuple[tuple[int, float], int]] = []
    accepted: BoostedEnsemble | None = None

    def refit_on(pairs):
        bin_c = binarize_with_thresholds(raw, pairs)
        ordered = list(bin_c.column_meta)
        refit = boosting.fit(indicator_raw(bin_c), n_estimators, max_depth, learning_rate, seed)
        c = boosting.correct_count(refit, bin_c.rows_matrix().astype(np.float64), bin_c.labels)
        return refit, c, ordered

    while survivors:
        k = 1 if batch_fraction <= 0.0 else max(1, math.floor(len(survivors) * batch_fraction))
        # least important leaves first; within ties the larger (feature, threshold) goes first
        order = sorted(survivors, key=lambda p: (ranking[p], -p[0], -p[1]))
        victims = order[:k]
        candidate = [p for p in survivors if p not in victims]
        refit, c, ordered = refit_on(candidate)
        if c < bar:
            break
        for v in victims:
            steps.append((v, c))
        survivors = candidate
        accepted = refit
        ranking = _importance_by_pair(refit, ordered)

    fallback = False
    if accepted is None:
        refit, c, ordered = refit_on(survivors)
        if c >= bar:
            accepted = refit
        else:
            accepted = translate_to_indicators(ens0, survivors)
            ordered = sorted(set((int(f), float(t)) for f, t in survivors))
            fallback = True
        ranking = _importance_by_pair(accepted, ordered)

    entries = sorted(((f, t, ranking[(f, t)]) for f, t in survivors), key=lambda e: (-e[2], e[0], e[1]))
    return EliminationTrace(
        initial_correct=initial_correct,
        stopping_bar=bar,
        refit_space="indicator-columns",
        steps=tuple(steps),
        thresholds=ThresholdSet(tuple(entries)),
        ensemble=accepted,
        fallback_translated=fallback,
    )


def trace_to_json(trace: EliminationTrace) -> str:
    obj = {
        "initial_correct": trace.initial_correct,
        "stopping_bar": trace.stopping_bar,
        "refit_space": trace.refit_space,
        "fallback_translated": trace.fallback_translated,
        "steps": [
            {"feature": f, "threshold": t, "refit_correct": c} for (f, t), c in trace.steps
        ],
        "thresholds": [
            {"feature": f, "threshold": t, "importance": v} for f, t, v in trace.thresholds.entries
        ],
        "ensemble": json.loads(boosting.to_json(trace.ensemble)),
    }
    return json.dumps(obj, indent=2)
