"""One-shot conformal selection: split calibration p-values plus the BH step.

The p-value for a test score counts how many *null* calibration scores are at
least as large: a high predicted score beats most null calibration scores and
earns a small p-value.  The equivalent sequential form (`cs_screen`) walks the
pooled calibration/test ranking from the bottom and stops once the running
false-discovery estimate drops to the target level; on tie-free data the two
return identical selections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DataError, is_null
from .learners import LearnerSpec, fit_xy
from .results import AuditEvent, SelectionResult

__all__ = [
    "CalibrationRecord",
    "conformal_pvalues",
    "bh",
    "select_with_scores",
    "cs_select",
    "cs_screen",
]


@dataclass(frozen=True)
class CalibrationRecord:
    score: float
    is_null: bool


def conformal_pvalues(cal: list[CalibrationRecord], test_scores) -> np.ndarray:
    """p_j = (1 + #{null calibration scores >= test score j}) / (|cal| + 1)."""
    if not cal:
        raise DataError("empty calibration set")
    null_scores = np.sort(np.array([r.score for r in cal if r.is_null], dtype=float))
    t = np.asarray(test_scores, dtype=float)
    # count of null scores >= t via position in the ascending sort
    geq = null_scores.size - np.searchsorted(null_scores, t, side="left")
    return (1.0 + geq) / (len(cal) + 1.0)


def bh(pvalues, alpha: float) -> set[int]:
    """Benjamini-Hochberg step-up rule; returns rejected indices."""
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return set()
    if np.any((p < 0) | (p > 1)):
        raise DataError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    thresholds = alpha * np.arange(1, m + 1) / m
    ok = np.nonzero(sorted_p <= thresholds)[0]
    if ok.size == 0:
        return set()
    cutoff = sorted_p[ok[-1]]
    return set(np.nonzero(p <= cutoff)[0].tolist())


def select_with_scores(cal: list[CalibrationRecord], test_scores, alpha: float) -> set[int]:
    """BH over conformal p-values computed from fitted scores."""
    return bh(conformal_pvalues(cal, test_scores), alpha)


def _split_and_fit(dataset: Dataset, train_fraction: float, spec: LearnerSpec, seed: int,
                   train_indices=None):
    """Shuffle labeled data, split train/calibration, fit, score cal + test.

    Returns (cal_records, test_scores, cal_order, test_order, predictor) where
    the orders give post-shuffle positions used for deterministic tie-breaks.
    """
    n = dataset.n
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5C]))
    if train_indices is not None:
        train_idx = np.asarray(sorted(train_indices), dtype=int)
        mask = np.ones(n, dtype=bool)
        mask[train_idx] = False
        cal_idx = rng.permutation(np.nonzero(mask)[0])
    else:
        perm = rng.permutation(n)
        n_train = int(train_fraction * n)
        train_idx, cal_idx = perm[:n_train], perm[n_train:]
    if train_idx.size < 1 or cal_idx.size < 1:
        raise DataError("degenerate split: need at least one training and one calibration sample")

    X_train = np.stack([dataset.labeled[i].x for i in train_idx])
    if spec.mode == "classification":
        targets = np.array(
            [0.0 if is_null(dataset.labeled[i].y, dataset.labeled[i].property) else 1.0 for i in train_idx]
        )
    else:
        targets = np.array([dataset.labeled[i].y for i in train_idx])
    predictor = fit_xy(spec, X_train, targets)

    X_cal = np.stack([dataset.labeled[i].x for i in cal_idx])
    cal_scores = predictor.score_batch(X_cal)
    cal_records = [
        CalibrationRecord(float(s), is_null(dataset.labeled[i].y, dataset.labeled[i].property))
        for s, i in zip(cal_scores, cal_idx)
    ]
    X_test = np.stack([s.x for s in dataset.test])
    test_scores = predictor.score_batch(X_test)
    return cal_records, test_scores, cal_idx, predictor


def cs_select(dataset: Dataset, train_fraction: float, spec: LearnerSpec, alpha: float,
              seed: int, train_indices=None) -> SelectionResult:
    """Fit on a split, compute calibration p-values, select test units by BH."""
    cal, test_scores, _, _ = _split_and_fit(dataset, train_fraction, spec, seed, train_indices)
    pvalues = conformal_pvalues(cal, test_scores)
    selected = bh(pvalues, alpha)
    k = dataset.n - len(cal)
    audit = (
        AuditEvent(k, "cs_select", {
            "learner": str(spec),
            "pvalues": [float(p) for p in pvalues],
            "train_size": k,
        }),
    )
    return SelectionResult(frozenset(selected), k, alpha, seed, (), audit)


def cs_screen(dataset: Dataset, train_fraction: float, spec: LearnerSpec, alpha: float,
              seed: int, train_indices=None) -> SelectionResult:
    """Sequential form: screen pooled calibration/test samples in ascending
    score order until the running FDP estimate reaches alpha."""
    cal, test_scores, cal_idx, _ = _split_and_fit(dataset, train_fraction, spec, seed, train_indices)
    n_cal = len(cal)
    m = dataset.m
    k = dataset.n - n_cal

    # pooled ranking, ties broken by post-shuffle position (cal first)
    scores = np.concatenate([np.array([r.score for r in cal]), test_scores])
    is_test = np.concatenate([np.zeros(n_cal, bool), np.ones(m, bool)])
    null_flags = np.concatenate([np.array([r.is_null for r in cal]), np.zeros(m, bool)])
    walk = np.argsort(scores, kind="stable")

    null_remaining = int(null_flags.sum())
    test_remaining = m
    trajectory = []
    screened = 0
    stopped = False
    for step in range(walk.size + 1):
        fdp = (m / (n_cal + 1)) * (1 + null_remaining) / max(test_remaining, 1)
        trajectory.append((k + screened, fdp))
        if fdp <= alpha:
            stopped = True
            break
        if step == walk.size:
            break
        idx = walk[step]
        if is_test[idx]:
            test_remaining -= 1
        elif null_flags[idx]:
            null_remaining -= 1
        screened += 1

    if stopped:
        removed_test = set(int(i - n_cal) for i in walk[:screened] if is_test[i])
        selected = frozenset(j for j in range(m) if j not in removed_test)
    else:
        selected = frozenset()
    T = k + screened
    audit = (AuditEvent(k, "cs_screen", {"learner": str(spec), "train_size": k}),)
    return SelectionResult(selected, T, alpha, seed, tuple(trajectory), audit)
