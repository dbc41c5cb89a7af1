"""Ordering policies: each consumes a FiltrationView and names the next handle
to screen.

All bundled policies score the anonymous pool and screen the argmin (least
promising first); ties break by stable pool order.  Model state updates fire
at the first choice after L screenings since the previous update, so a policy
is a pure function of (config, accumulated views, seed) and a recorded view
sequence replays to the identical choice sequence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .conformal import CalibrationRecord, select_with_scores
from .data import DataError, SimilarityKernel
from .diversity import DivoptError, build_theta, closed_form_xi, qp_xi, softmax
from .learners import LearnerSpec, SpecError, fit_xy, parse_learner

__all__ = [
    "PolicyConfig",
    "PolicyError",
    "parse_policy",
    "make_policy",
    "naive_select",
    "RandomSwitchPolicy",
]

_KINDS = ("static", "refit", "model_select", "diversity", "augmented_refit", "adversarial")

_DEFAULT_L = {"static": 10, "refit": 10, "model_select": 20, "diversity": 10,
              "augmented_refit": 10, "adversarial": 10}


class PolicyError(ValueError):
    """Bad policy configuration or an illegal choose() call."""


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    learners: tuple[LearnerSpec, ...]
    L: int | None = None
    K: int = 5
    lam: float = 0.3
    kernel: SimilarityKernel = field(default_factory=lambda: SimilarityKernel("rbf", 5.0))
    mode: str = "cf"
    seed: int = 0
    use_revealed_nonnulls: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise PolicyError(f"unknown policy kind {self.kind!r}")
        if not self.learners:
            raise PolicyError("policy needs at least one learner spec")
        if self.kind == "model_select" and len(self.learners) < 2:
            raise PolicyError("model_select needs at least two candidate learners")
        if self.L is not None and self.L < 1:
            raise PolicyError("update period L must be >= 1")
        if self.K < 2:
            raise PolicyError("fold count K must be >= 2")
        if not 0.0 <= self.lam <= 1.0:
            raise PolicyError("lambda must lie in [0, 1]")
        if self.mode not in ("cf", "qp"):
            raise PolicyError("diversity mode must be cf or qp")

    @property
    def period(self) -> int:
        return self.L if self.L is not None else _DEFAULT_L[self.kind]

    def with_seed(self, seed: int) -> "PolicyConfig":
        return replace(self, seed=seed)

    def describe(self) -> str:
        return f"{self.kind}({', '.join(str(s) for s in self.learners)})"


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

_POLICY_NAMES = {
    "static": "static", "refit": "refit", "select": "model_select",
    "div": "diversity", "aug": "augmented_refit", "adversarial": "adversarial",
}
_POLICY_KEYS = {"L", "K", "lambda", "kernel", "mode", "use_revealed_nonnulls", "seed"}


def _split_top_level(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return parts


def parse_policy(text: str) -> PolicyConfig:
    """Parse grammar like ``refit:forest[trees=25,L=10]`` or
    ``select:(logistic,knn[k=9])[L=20,K=5]`` or
    ``div:forest[lambda=0.3,kernel=rbf(5),mode=cf]``."""
    text = text.strip()
    if ":" not in text:
        raise PolicyError(f"cannot parse policy spec {text!r} (expected kind:learner)")
    head, rest = text.split(":", 1)
    kind = _POLICY_NAMES.get(head.strip())
    if kind is None:
        raise PolicyError(f"unknown policy kind {head.strip()!r}")

    rest = rest.strip()
    if rest.startswith("("):
        close = rest.index(")")
        inner = rest[1:close]
        learner_texts = [s.strip() for s in _split_top_level(inner)]
        tail = rest[close + 1:].strip()
    else:
        m = re.match(r"^[a-z_]+(\[[^\]]*\])?", rest)
        if not m:
            raise PolicyError(f"cannot parse learner in policy spec {text!r}")
        learner_texts = [m.group(0)]
        tail = rest[m.end():].strip()

    policy_params: dict[str, str] = {}
    learner_extra: list[str] = []
    groups = re.findall(r"\[([^\]]*)\]", tail)
    if tail and "".join(groups) == "" and tail.strip("[]"):
        raise PolicyError(f"trailing junk in policy spec {text!r}")
    # a single learner may carry policy keys inside its own bracket
    if len(learner_texts) == 1 and "[" in learner_texts[0]:
        body = learner_texts[0]
        inner = body[body.index("[") + 1:body.rindex("]")]
        keep = []
        for part in filter(None, (p.strip() for p in _split_top_level(inner))):
            key = part.split("=", 1)[0].strip()
            if key in _POLICY_KEYS:
                policy_params[key] = part.split("=", 1)[1].strip()
            else:
                keep.append(part)
        base = body[:body.index("[")]
        learner_texts[0] = base + (f"[{','.join(keep)}]" if keep else "")
    for group in groups:
        for part in filter(None, (p.strip() for p in _split_top_level(group))):
            if "=" not in part:
                raise PolicyError(f"bad policy parameter {part!r}")
            key, value = (s.strip() for s in part.split("=", 1))
            if key not in _POLICY_KEYS:
                raise PolicyError(f"unknown policy parameter {key!r}")
            policy_params[key] = value

    learners = tuple(parse_learner(t) for t in learner_texts)
    kwargs: dict = {}
    if "L" in policy_params:
        kwargs["L"] = int(policy_params["L"])
    if "K" in policy_params:
        kwargs["K"] = int(policy_params["K"])
    if "lambda" in policy_params:
        kwargs["lam"] = float(policy_params["lambda"])
    if "kernel" in policy_params:
        kwargs["kernel"] = SimilarityKernel.parse(policy_params["kernel"])
    if "mode" in policy_params:
        kwargs["mode"] = policy_params["mode"]
    if "seed" in policy_params:
        kwargs["seed"] = int(policy_params["seed"])
    if "use_revealed_nonnulls" in policy_params:
        kwargs["use_revealed_nonnulls"] = policy_params["use_revealed_nonnulls"] in ("1", "true", "yes")
    try:
        return PolicyConfig(kind, learners, **kwargs)
    except (ValueError, TypeError) as exc:
        raise PolicyError(f"bad policy spec {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


class _BasePolicy:
    requires_reserve = False

    def __init__(self, config: PolicyConfig):
        self.config = config
        self._scores: dict[str, float] = {}
        self._last_update: int | None = None
        self._audit: list[tuple[str, dict]] = []
        self._rng = np.random.default_rng(np.random.SeedSequence([config.seed & 0xFFFFFFFF, 0xA11]))
        self.predictor = None

    def drain_audit(self) -> list[tuple[str, dict]]:
        out, self._audit = self._audit, []
        return out

    def _note(self, event: str, payload: dict) -> None:
        self._audit.append((event, payload))

    def _due(self, view) -> bool:
        if self._last_update is None:
            return True
        return view.step - self._last_update >= self.config.period

    def choose(self, view) -> str:
        if not view.pool_handles:
            raise PolicyError("empty pool: nothing to screen")
        if self._due(view):
            self.update(view)
            self._last_update = view.step
        scores = self._scores
        best, best_score = None, None
        for h in view.pool_handles:
            s = scores[h]
            if best_score is None or s < best_score:
                best, best_score = h, s
        return best

    # subclasses fill in
    def update(self, view) -> None:
        raise NotImplementedError

    # --- shared helpers -----------------------------------------------------

    def _fit_on_view(self, view, spec: LearnerSpec, include_revealed: bool = False):
        X, null_flags = view.training_arrays(
            include_revealed_test=include_revealed,
            include_unscreened_nonnull=self.config.use_revealed_nonnulls,
        )
        if X.shape[0] == 0:
            self._note("no_training_data", {"step": view.step})
            return None
        if spec.mode == "classification":
            targets = (~null_flags).astype(float)
        else:
            raise PolicyError("view-driven refits need a classification learner")
        return fit_xy(spec, X, targets)

    def _rescore(self, view) -> np.ndarray:
        if self.predictor is None:
            delta = np.full(len(view.pool_handles), 0.5)
        else:
            delta = self.predictor.score_batch(view.pool_x)
        self._scores = dict(zip(view.pool_handles, delta.tolist()))
        return delta


class StaticPolicy(_BasePolicy):
    """Fit once on the training reserve; never update again."""

    requires_reserve = True

    def _due(self, view) -> bool:
        return self._last_update is None

    def update(self, view) -> None:
        if view.k == 0:
            raise PolicyError("static policy is undefined with an empty training reserve")
        self.predictor = self._fit_on_view(view, self.config.learners[0])
        self._rescore(view)
        self._note("fit", {"learner": str(self.config.learners[0]), "rows": view.k})


class RefitPolicy(_BasePolicy):
    """Re-fit on all screened labeled samples every L screenings."""

    include_revealed = False

    def update(self, view) -> None:
        spec = self.config.learners[0]
        self.predictor = self._fit_on_view(view, spec, include_revealed=self.include_revealed)
        self._rescore(view)
        X, _ = view.training_arrays(include_revealed_test=self.include_revealed,
                                    include_unscreened_nonnull=self.config.use_revealed_nonnulls)
        self._note("refit", {"learner": str(spec), "rows": int(X.shape[0])})


class AugmentedRefitPolicy(RefitPolicy):
    """Refit additionally on screened test samples whose labels were injected."""

    include_revealed = True


class AdversarialPolicy(RefitPolicy):
    """Stress policy: screens the most promising pool entries first."""

    def update(self, view) -> None:
        super().update(view)
        self._scores = {h: -s for h, s in self._scores.items()}


class ModelSelectPolicy(_BasePolicy):
    """Cross-validated learner selection by mean conformal selection size."""

    def update(self, view) -> None:
        cfg = self.config
        X, null_flags = view.training_arrays(
            include_unscreened_nonnull=cfg.use_revealed_nonnulls)
        n_lab = X.shape[0]
        if n_lab == 0:
            self.predictor = None
            self._rescore(view)
            self._note("no_training_data", {"step": view.step})
            return
        if n_lab < cfg.K:
            raise PolicyError(f"model selection needs at least K={cfg.K} labeled samples, have {n_lab}")
        targets = (~null_flags).astype(float)
        perm = self._rng.permutation(n_lab)
        folds = np.array_split(perm, cfg.K)
        pool_x = view.pool_x
        mean_sizes = []
        for h, spec in enumerate(cfg.learners):
            sizes = []
            for f, fold in enumerate(folds):
                mask = np.ones(n_lab, dtype=bool)
                mask[fold] = False
                if not mask.any() or fold.size == 0:
                    sizes.append(0.0)
                    continue
                sub = fit_xy(spec.with_seed(_derive(cfg.seed, h, f)), X[mask], targets[mask])
                cal = [CalibrationRecord(float(s), bool(null_flags[i]))
                       for s, i in zip(sub.score_batch(X[fold]), fold)]
                picked = select_with_scores(cal, sub.score_batch(pool_x), view.alpha)
                sizes.append(float(len(picked)))
            mean_sizes.append(float(np.mean(sizes)))
        winner = int(np.argmax(mean_sizes))
        spec = cfg.learners[winner].with_seed(_derive(cfg.seed, winner, cfg.K))
        self.predictor = fit_xy(spec, X, targets)
        self._rescore(view)
        self._note("model_select", {
            "chosen": str(cfg.learners[winner]),
            "mean_sizes": mean_sizes,
            "rows": n_lab,
        })


class DiversityPolicy(_BasePolicy):
    """Blend promise with a diversity keep-score: argmin of
    lam * xi_work + (1 - lam) * delta."""

    def update(self, view) -> None:
        cfg = self.config
        spec = cfg.learners[0]
        if spec.mode == "classification":
            self.predictor = self._fit_on_view(view, spec)
            delta = self._rescore(view)
        else:
            # regression scores become pool promise weights by softmax
            X, null_flags = view.training_arrays()
            if X.shape[0] == 0:
                self.predictor = None
                delta = self._rescore(view)
            else:
                ys = np.array([r.outcome for r in view.screened
                               if r.membership == 0 or r.outcome is not None], dtype=float)
                Xl = np.stack([r.x for r in view.screened
                               if r.membership == 0 or r.outcome is not None])
                self.predictor = fit_xy(spec, Xl, ys)
                raw = self.predictor.score_batch(view.pool_x)
                delta = softmax(raw)
                self._scores = dict(zip(view.pool_handles, delta.tolist()))
        if cfg.lam == 0.0 or self.predictor is None or len(view.pool_handles) < 2:
            self._note("diversity", {"xi": "skipped", "lambda": cfg.lam})
            return
        try:
            problem = build_theta(np.clip(delta, 0.0, 1.0), view.pool_x, cfg.kernel,
                                  alpha=view.alpha, fingerprints=view.pool_fingerprints)
            scores = closed_form_xi(problem) if cfg.mode == "cf" else qp_xi(problem)
        except DivoptError as exc:
            self._note("diversity_fallback", {"reason": str(exc)})
            return
        if scores.degenerate:
            # keep the pure promise ordering; screening must always proceed
            self._note("diversity_fallback", {"reason": "degenerate xi"})
            return
        mix = cfg.lam * scores.xi_work + (1.0 - cfg.lam) * delta
        self._scores = dict(zip(view.pool_handles, mix.tolist()))
        self._note("diversity", {"lambda": cfg.lam, "mode": cfg.mode})


class RandomSwitchPolicy:
    """Meta-policy delegating each step to a random sub-policy (stress test)."""

    requires_reserve = False

    def __init__(self, configs: list[PolicyConfig], seed: int = 0):
        self.subs = [make_policy(c) for c in configs]
        self._rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x5317]))
        self._audit: list[tuple[str, dict]] = []

    def choose(self, view) -> str:
        i = int(self._rng.integers(len(self.subs)))
        choice = self.subs[i].choose(view)
        self._audit.extend(self.subs[i].drain_audit())
        return choice

    def drain_audit(self):
        out, self._audit = self._audit, []
        return out


def _derive(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, *parts]).generate_state(1)[0])


_CLASSES = {
    "static": StaticPolicy,
    "refit": RefitPolicy,
    "model_select": ModelSelectPolicy,
    "diversity": DiversityPolicy,
    "augmented_refit": AugmentedRefitPolicy,
    "adversarial": AdversarialPolicy,
}


def make_policy(config: PolicyConfig):
    """Instantiate a fresh policy object for one run."""
    return _CLASSES[config.kind](config)


def naive_select(X: np.ndarray, targets: np.ndarray, candidates: list[LearnerSpec],
                 seed: int = 0) -> LearnerSpec:
    """In-sample baseline: fit each candidate on the split and return the one
    with the smallest training error (MSE, or Brier score in classification)."""
    if X.shape[0] == 0:
        raise PolicyError("naive_select needs a nonempty training split")
    best_spec, best_err = None, np.inf
    for h, spec in enumerate(candidates):
        predictor = fit_xy(spec.with_seed(_derive(seed, h)), X, targets)
        err = float(np.mean((predictor.score_batch(X) - targets) ** 2))
        if err < best_err - 1e-15:
            best_spec, best_err = spec, err
    return best_spec
