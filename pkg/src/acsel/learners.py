"""Built-in predictive models behind a single fit/score contract.

Classification predictors estimate the probability that a sample is
interesting (outcome outside its null region) and always score in [0, 1];
regression predictors return raw outcome estimates.  Everything is
deterministic given the spec seed.  The registry is open: any object with a
``score_batch`` method and a ``mode`` attribute plugs in.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import _split

__all__ = [
    "TrainingExample",
    "LearnerSpec",
    "Predictor",
    "SpecError",
    "parse_learner",
    "fit",
    "fit_xy",
    "score",
    "roc_auc",
]


class SpecError(ValueError):
    """Bad learner grammar or hyperparameters."""


@dataclass(frozen=True)
class TrainingExample:
    """One training row: covariates plus a target (0/1 in classification mode)."""

    x: np.ndarray
    target: float


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    params: dict = field(default_factory=dict)
    mode: str = "classification"
    seed: int = 0

    def with_seed(self, seed: int) -> "LearnerSpec":
        return replace(self, seed=seed)

    def __str__(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        suffix = f"[{inner}]" if inner else ""
        tag = "" if self.mode == "classification" else "-reg"
        return f"{self.kind}{tag}{suffix}"


_LEARNER_PARAMS = {
    "logistic": {"lr": float, "iters": int},
    "knn": {"k": int},
    "forest": {"trees": int, "depth": int, "feats": int, "bootstrap": float, "min_leaf": int},
    "stumps": {"rounds": int, "lr": float},
}

_SPEC_RE = re.compile(r"^(?P<name>[a-z_]+)(?:\[(?P<params>[^\]]*)\])?$")


def parse_learner(text: str) -> LearnerSpec:
    """Parse grammar like ``forest[trees=25,depth=6]`` or ``knn[k=5,task=reg]``."""
    m = _SPEC_RE.match(text.strip())
    if not m:
        raise SpecError(f"cannot parse learner spec {text!r}")
    name = m.group("name")
    mode = "classification"
    if name.endswith("_reg"):
        name, mode = name[:-4], "regression"
    if name not in _LEARNER_PARAMS:
        raise SpecError(f"unknown learner {name!r}")
    params: dict = {}
    raw = m.group("params") or ""
    for part in filter(None, (p.strip() for p in raw.split(","))):
        if "=" not in part:
            raise SpecError(f"bad learner parameter {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        if key == "task":
            if value not in ("reg", "cls"):
                raise SpecError(f"task must be reg or cls, got {value!r}")
            mode = "regression" if value == "reg" else "classification"
            continue
        if key == "seed":
            params[key] = int(value)
            continue
        if key not in _LEARNER_PARAMS[name]:
            raise SpecError(f"unknown parameter {key!r} for learner {name!r}")
        try:
            params[key] = _LEARNER_PARAMS[name][key](value)
        except ValueError:
            raise SpecError(f"bad value for {key!r}: {value!r}") from None
    if name == "logistic" and mode == "regression":
        raise SpecError("logistic is classification-only")
    seed = params.pop("seed", 0)
    return LearnerSpec(name, params, mode, seed)


# ---------------------------------------------------------------------------
# predictors
# ---------------------------------------------------------------------------


class Predictor:
    """Fitted model; ``score_batch`` is pure and reentrant."""

    mode: str
    dim: int

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise SpecError(f"expected covariate dimension {self.dim}, got {x.shape}")
        return float(self.score_batch(x[None, :])[0])


class _Constant(Predictor):
    def __init__(self, value: float, dim: int, mode: str):
        self.value, self.dim, self.mode = value, dim, mode

    def score_batch(self, X):
        self._check(X)
        return np.full(X.shape[0], self.value)

    def _check(self, X):
        if X.shape[1] != self.dim:
            raise SpecError(f"expected covariate dimension {self.dim}, got {X.shape[1]}")


class _Logistic(Predictor):
    mode = "classification"

    def __init__(self, X, t, lr, iters, tol=1e-8):
        n, d = X.shape
        self.dim = d
        Xb = np.hstack([X, np.ones((n, 1))])
        w = np.zeros(d + 1)
        losses = []
        prev = np.inf
        for _ in range(iters):
            z = Xb @ w
            p = 1.0 / (1.0 + np.exp(-z))
            eps = 1e-12
            loss = -np.mean(t * np.log(p + eps) + (1 - t) * np.log(1 - p + eps))
            losses.append(loss)
            if prev - loss < tol:
                break
            prev = loss
            w -= lr * (Xb.T @ (p - t)) / n
        self.weights = w
        self.loss_history = np.array(losses)

    def score_batch(self, X):
        z = X @ self.weights[:-1] + self.weights[-1]
        return np.clip(1.0 / (1.0 + np.exp(-z)), 0.0, 1.0)


class _Knn(Predictor):
    def __init__(self, X, t, k, mode):
        self.X = X
        self.t = t
        self.k = min(k, X.shape[0])
        self.mode = mode
        self.dim = X.shape[1]
        self._sq = np.sum(X**2, axis=1)

    def score_batch(self, Q):
        if Q.shape[1] != self.dim:
            raise SpecError(f"expected covariate dimension {self.dim}, got {Q.shape[1]}")
        d2 = np.sum(Q**2, axis=1)[:, None] + self._sq[None, :] - 2.0 * (Q @ self.X.T)
        if self.k < self.X.shape[0]:
            nn = np.argpartition(d2, self.k - 1, axis=1)[:, : self.k]
            # argpartition breaks distance ties arbitrarily within the cut;
            # re-rank the partition block for a deterministic neighbour set
            block = np.take_along_axis(d2, nn, axis=1)
            sub = np.take_along_axis(nn, np.argsort(block, axis=1, kind="stable"), axis=1)[:, : self.k]
        else:
            sub = np.broadcast_to(np.arange(self.X.shape[0]), (Q.shape[0], self.X.shape[0]))
        out = self.t[sub].mean(axis=1)
        return np.clip(out, 0.0, 1.0) if self.mode == "classification" else out


class _Forest(Predictor):
    def __init__(self, X, t, seed, trees, depth, feats, bootstrap, min_leaf, mode):
        self.mode = mode
        self.dim = X.shape[1]
        n, d = X.shape
        X = np.ascontiguousarray(X, dtype=np.float64)
        t = np.ascontiguousarray(t, dtype=np.float64)
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        # a tree on n rows cannot split into more than ~n/min_leaf leaves
        max_nodes = min(2 ** (depth + 1) - 1, 4 * max(n // max(min_leaf, 1), 1) + 1)
        n_draw = max(1, int(round(bootstrap * n)))
        self.trees = []
        for child in np.random.SeedSequence(seed).spawn(trees):
            rng = np.random.default_rng(child)
            counts = np.bincount(rng.integers(0, n, n_draw), minlength=n).astype(np.int64)
            fs = np.argsort(rng.random((max_nodes, d)), axis=1, kind="stable")[:, :feats]
            self.trees.append(_split.grow_tree(X, t, counts, order, np.ascontiguousarray(fs), depth, min_leaf))

    def score_batch(self, Q):
        if Q.shape[1] != self.dim:
            raise SpecError(f"expected covariate dimension {self.dim}, got {Q.shape[1]}")
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        out = np.zeros(Q.shape[0])
        for tree in self.trees:
            _split.predict_tree(*tree, Q, out)
        out /= len(self.trees)
        return np.clip(out, 0.0, 1.0) if self.mode == "classification" else out


class _StumpBoost(Predictor):
    def __init__(self, X, t, rounds, lr, mode):
        self.mode = mode
        self.dim = X.shape[1]
        n, d = X.shape
        X = np.ascontiguousarray(X, dtype=np.float64)
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        counts = np.ones(n, np.int64)
        fs = np.ascontiguousarray(np.tile(np.arange(d, dtype=np.int64), (3, 1)))
        self.base = float(t.mean())
        self.lr = lr
        self.stumps = []
        resid = t - self.base
        pred = np.zeros(n)
        for _ in range(rounds):
            tree = _split.grow_tree(X, resid.astype(np.float64), counts, order, fs, 1, 1)
            step = np.zeros(n)
            _split.predict_tree(*tree, X, step)
            self.stumps.append(tree)
            pred += lr * step
            resid = t - self.base - pred

    def score_batch(self, Q):
        if Q.shape[1] != self.dim:
            raise SpecError(f"expected covariate dimension {self.dim}, got {Q.shape[1]}")
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        acc = np.zeros(Q.shape[0])
        for tree in self.stumps:
            _split.predict_tree(*tree, Q, acc)
        out = self.base + self.lr * acc
        return np.clip(out, 0.0, 1.0) if self.mode == "classification" else out


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "logistic": {"lr": 0.1, "iters": 500},
    "knn": {"k": 5},
    "forest": {"trees": 25, "depth": 6, "feats": None, "bootstrap": 1.0, "min_leaf": 2},
    "stumps": {"rounds": 50, "lr": 0.3},
}


def fit_xy(spec: LearnerSpec, X: np.ndarray, targets: np.ndarray) -> Predictor:
    """Fit from arrays; the workhorse behind :func:`fit`."""
    X = np.asarray(X, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise SpecError("need at least one training example")
    if X.shape[0] != targets.shape[0]:
        raise SpecError("X and targets length mismatch")
    classification = spec.mode == "classification"
    if classification and not np.all((targets == 0) | (targets == 1)):
        raise SpecError("classification targets must be 0/1")
    p = {**_DEFAULTS[spec.kind], **spec.params}
    _validate(spec.kind, p)

    if classification:
        ones = int(targets.sum())
        if ones == 0 or ones == targets.size:
            # single-class data: Laplace-smoothed constant rate
            return _Constant((ones + 1) / (targets.size + 2), X.shape[1], spec.mode)

    if spec.kind == "logistic":
        return _Logistic(X, targets, p["lr"], p["iters"])
    if spec.kind == "knn":
        return _Knn(X, targets, p["k"], spec.mode)
    if spec.kind == "forest":
        feats = p["feats"] or max(1, int(round(math.sqrt(X.shape[1]))))
        return _Forest(X, targets, spec.seed, p["trees"], p["depth"], feats, p["bootstrap"], p["min_leaf"], spec.mode)
    if spec.kind == "stumps":
        return _StumpBoost(X, targets, p["rounds"], p["lr"], spec.mode)
    raise SpecError(f"unknown learner {spec.kind!r}")


def _validate(kind: str, p: dict) -> None:
    positive = {
        "logistic": ("lr", "iters"),
        "knn": ("k",),
        "forest": ("trees", "depth", "bootstrap", "min_leaf"),
        "stumps": ("rounds", "lr"),
    }[kind]
    for key in positive:
        if p[key] is not None and p[key] <= 0:
            raise SpecError(f"{kind} parameter {key} must be positive, got {p[key]}")


def fit(spec: LearnerSpec, examples: list[TrainingExample]) -> Predictor:
    """Fit a predictor on training examples; deterministic given spec.seed."""
    if not examples:
        raise SpecError("need at least one training example")
    X = np.stack([np.asarray(e.x, dtype=float) for e in examples])
    t = np.array([e.target for e in examples], dtype=float)
    return fit_xy(spec, X, t)


def score(predictor: Predictor, x: np.ndarray) -> float:
    return predictor.score(x)


def roc_auc(predictor: Predictor, holdout: list[TrainingExample]) -> float:
    """Area under the ROC curve by the rank statistic, ties counted half."""
    t = np.array([e.target for e in holdout], dtype=float)
    npos = int(t.sum())
    nneg = t.size - npos
    if npos == 0 or nneg == 0:
        raise SpecError("roc_auc needs both classes in the holdout")
    X = np.stack([np.asarray(e.x, dtype=float) for e in holdout])
    s = predictor.score_batch(X)
    order = np.argsort(s, kind="stable")
    ranks = np.empty(t.size)
    ranks[order] = np.arange(1, t.size + 1, dtype=float)
    # midranks for tied scores
    sorted_s = s[order]
    i = 0
    while i < t.size:
        j = i
        while j + 1 < t.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    return float((ranks[t == 1].sum() - npos * (npos + 1) / 2) / (npos * nneg))
