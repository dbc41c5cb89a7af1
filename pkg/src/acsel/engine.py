"""Sequential screening engine with strict information disclosure.

A run hides the full sample table behind a :class:`ScreeningState` and exposes
exactly one lens on it, the :class:`FiltrationView`:

* screened samples reveal membership, and outcome when labeled (or when a test
  label was injected later);
* unscreened non-null labeled samples are fully visible;
* everything else is an anonymous pool of covariates plus two counts (null
  labeled, test).

Ordering decisions consume views and return opaque handles, so no caller can
act on information outside the view.  Screening stops the first time the
running false-discovery estimate

    (m / (n - k + 1)) * (1 + #unscreened null labeled) / max(#unscreened test, 1)

drops to the target level; the unscreened test samples are the selection.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .data import Dataset, is_null
from .results import AuditEvent, SelectionResult

__all__ = [
    "EngineError",
    "PoolEntry",
    "ScreenedRecord",
    "NonNullRecord",
    "FiltrationView",
    "ScreeningState",
    "init",
    "fdp_estimate",
    "visible",
    "screen_next",
    "check_stop",
    "reveal_label",
    "run",
    "oracle_martingale",
]


class EngineError(ValueError):
    """Illegal operation against a screening state."""


@dataclass(frozen=True)
class PoolEntry:
    """Anonymous unscreened sample: an opaque handle and covariates, nothing else."""

    handle: str
    x: np.ndarray


@dataclass(frozen=True)
class ScreenedRecord:
    handle: str
    x: np.ndarray
    membership: int  # 0 labeled, 1 test
    outcome: float | None
    is_null: bool | None


@dataclass(frozen=True)
class NonNullRecord:
    handle: str
    x: np.ndarray
    y: float


class FiltrationView:
    """Immutable snapshot of the information legally visible at one step."""

    def __init__(self, state: "ScreeningState"):
        self.step = len(state.order)
        self.alpha = state.alpha
        self.k = state.k
        self.n = state.n
        self.m = state.m
        self.count_null_labeled = state.count_null_labeled
        self.count_test = state.count_test
        self._X = state._X
        self._y = state._y
        self._A = state._A
        self._null = state._null
        self._fp = state._fp
        self._handles = state._handles
        self._screened_idx = tuple(state.order)
        unscreened = np.nonzero(~state._screened_mask)[0]
        nonnull_lab = (state._A[unscreened] == 0) & (state._null[unscreened] == 0)
        self._nonnull_idx = unscreened[nonnull_lab]
        self._pool_idx = unscreened[~nonnull_lab]
        self._revealed = dict(state._revealed)

    # --- hot-path array access -------------------------------------------

    @cached_property
    def pool_handles(self) -> tuple[str, ...]:
        return tuple(self._handles[i] for i in self._pool_idx)

    @cached_property
    def pool_x(self) -> np.ndarray:
        x = self._X[self._pool_idx]
        x.setflags(write=False)
        return x

    @cached_property
    def pool_fingerprints(self) -> np.ndarray | None:
        if self._fp is None:
            return None
        fp = self._fp[self._pool_idx]
        fp.setflags(write=False)
        return fp

    @cached_property
    def nonnull_handles(self) -> tuple[str, ...]:
        return tuple(self._handles[i] for i in self._nonnull_idx)

    def training_arrays(self, include_revealed_test: bool = False,
                        include_unscreened_nonnull: bool = False):
        """(X, is_null) rows a policy may legally train on.

        Always includes screened labeled samples; optionally screened test
        samples whose labels were injected, and the visible unscreened
        non-null labeled samples.
        """
        rows: list[int] = []
        nulls: list[bool] = []
        for i in self._screened_idx:
            if self._A[i] == 0:
                rows.append(i)
                nulls.append(bool(self._null[i]))
            elif include_revealed_test and i in self._revealed:
                rows.append(i)
                nulls.append(self._revealed_is_null(i))
        if include_unscreened_nonnull:
            for i in self._nonnull_idx:
                rows.append(int(i))
                nulls.append(False)
        if not rows:
            return np.empty((0, self._X.shape[1])), np.empty(0, dtype=bool)
        return self._X[np.array(rows)], np.array(nulls, dtype=bool)

    def _revealed_is_null(self, i: int) -> bool:
        return bool(self._revealed[i][1])

    # --- record views ------------------------------------------------------

    @cached_property
    def screened(self) -> tuple[ScreenedRecord, ...]:
        out = []
        for i in self._screened_idx:
            if self._A[i] == 0:
                outcome, null = float(self._y[i]), bool(self._null[i])
            elif i in self._revealed:
                outcome, null = self._revealed[i][0], self._revealed[i][1]
            else:
                outcome, null = None, None
            out.append(ScreenedRecord(self._handles[i], self._X[i], int(self._A[i]), outcome, null))
        return tuple(out)

    @cached_property
    def revealed_nonnull_labeled(self) -> tuple[NonNullRecord, ...]:
        return tuple(
            NonNullRecord(self._handles[i], self._X[i], float(self._y[i])) for i in self._nonnull_idx
        )

    @cached_property
    def anonymous_pool(self) -> tuple[PoolEntry, ...]:
        return tuple(PoolEntry(h, x) for h, x in zip(self.pool_handles, self.pool_x))

    def to_payload(self) -> dict:
        """JSON-safe projection; pool entries carry handle and covariates only."""
        return {
            "step": self.step,
            "alpha": self.alpha,
            "k": self.k,
            "n": self.n,
            "m": self.m,
            "count_null_labeled": self.count_null_labeled,
            "count_test": self.count_test,
            "screened": [
                {
                    "handle": r.handle,
                    "x": [float(v) for v in r.x],
                    "membership": r.membership,
                    "outcome": r.outcome,
                    "is_null": r.is_null,
                }
                for r in self.screened
            ],
            "revealed_nonnull_labeled": [
                {"handle": r.handle, "x": [float(v) for v in r.x], "y": r.y}
                for r in self.revealed_nonnull_labeled
            ],
            "anonymous_pool": [
                {"handle": e.handle, "x": [float(v) for v in e.x]} for e in self.anonymous_pool
            ],
        }


class ScreeningState:
    """Hidden full data plus the evolving screening order; single writer."""

    def __init__(self, dataset: Dataset, k: int, alpha: float, seed: int):
        n, m = dataset.n, dataset.m
        if not 0 <= k <= n:
            raise EngineError(f"training reserve k={k} must lie in [0, n={n}]")
        if not 0 < alpha < 1:
            raise EngineError("alpha must lie in (0, 1)")
        self.n, self.m, self.k, self.alpha, self.seed = n, m, k, alpha, seed

        ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFF, 0xACE])
        shuffle_rng, handle_rng, reserve_rng = (np.random.default_rng(c) for c in ss.spawn(3))

        total = n + m
        samples = list(dataset.labeled) + list(dataset.test)
        perm = shuffle_rng.permutation(total)
        X = np.stack([s.x for s in samples])[perm]
        y = np.array([np.nan if s.y is None else s.y for s in samples])[perm]
        A = np.array([0] * n + [1] * m, dtype=np.int8)[perm]
        lo = np.array([s.property.lo for s in samples])[perm]
        hi = np.array([s.property.hi for s in samples])[perm]
        orig = np.array(list(range(n)) + list(range(m)))[perm]
        null = np.where(np.isnan(y), -1, ((lo <= y) & (y <= hi)).astype(np.int8)).astype(np.int8)
        if all(s.fingerprint is not None for s in samples):
            fp = np.stack([s.fingerprint for s in samples])[perm]
            fp.setflags(write=False)
        else:
            fp = None
        for arr in (X, y, lo, hi):
            arr.setflags(write=False)

        self._fp = fp
        self._X, self._y, self._A = X, y, A
        self._lo, self._hi = lo, hi
        self._orig = orig
        self._null = null
        self._handles = self._draw_handles(handle_rng, total)
        self._handle_to_idx = {h: i for i, h in enumerate(self._handles)}

        self._screened_mask = np.zeros(total, dtype=bool)
        self.order: list[int] = []
        self._revealed: dict[int, tuple[float, bool]] = {}
        self.count_null_labeled = int(np.sum((A == 0) & (null == 1)))
        self.count_test = m
        self.count_nonnull_labeled = int(np.sum((A == 0) & (null == 0)))
        self.count_null_test = int(np.sum((A == 1) & (null == 1)))
        self.benchmark_mode = not np.any(np.isnan(y[A == 1]))
        self.stopped = False
        self.exhausted = False
        self.selection: frozenset[int] | None = None
        self.fdp_trajectory: list[tuple[int, float]] = []
        self.audit: list[AuditEvent] = []

        labeled_pos = np.nonzero(A == 0)[0]
        reserve = reserve_rng.choice(labeled_pos, size=k, replace=False) if k else np.empty(0, int)
        self._log("init", {
            "n": n, "m": m, "k": k, "alpha": alpha, "seed": seed,
            "reserve": sorted(int(self._orig[i]) for i in reserve),
        })
        for i in reserve:
            self._screen_index(int(i), reason="reserve")

    @staticmethod
    def _draw_handles(rng: np.random.Generator, total: int) -> list[str]:
        handles: list[str] = []
        seen: set[int] = set()
        while len(handles) < total:
            for v in rng.integers(0, 2**63, size=total - len(handles)):
                v = int(v)
                if v not in seen:
                    seen.add(v)
                    handles.append(f"{v:016x}")
        return handles

    # --- internals ----------------------------------------------------------

    def _log(self, event: str, payload: dict) -> None:
        self.audit.append(AuditEvent(len(self.order), event, payload))

    def _resolve(self, handle: str) -> int:
        idx = self._handle_to_idx.get(handle)
        if idx is None:
            raise EngineError(f"unknown handle {handle!r}")
        return idx

    def _screen_index(self, idx: int, reason: str) -> int:
        self._screened_mask[idx] = True
        self.order.append(idx)
        a, nul = int(self._A[idx]), int(self._null[idx])
        if a == 0 and nul == 1:
            self.count_null_labeled -= 1
        elif a == 0:
            self.count_nonnull_labeled -= 1
        else:
            self.count_test -= 1
            if nul == 1:
                self.count_null_test -= 1
        self._log("screen", {"handle": self._handles[idx], "membership": a, "reason": reason})
        return idx

    @property
    def pool_size(self) -> int:
        return self.count_null_labeled + self.count_test

    def check_invariants(self) -> None:
        assert self.count_null_labeled >= 0 and self.count_test >= 0 and self.count_nonnull_labeled >= 0
        total = self.count_null_labeled + self.count_test + self.count_nonnull_labeled + len(self.order)
        assert total == self.n + self.m, "count bookkeeping out of sync"
        assert len(set(self.order)) == len(self.order), "duplicate screening"


def init(dataset: Dataset, k: int, alpha: float, seed: int) -> ScreeningState:
    """Shuffle all samples, reserve k random labeled ones for initial training."""
    return ScreeningState(dataset, k, alpha, seed)


def fdp_estimate(state: ScreeningState) -> float:
    """Running false-discovery estimate over the unscreened samples."""
    return (
        (state.m / (state.n - state.k + 1))
        * (1 + state.count_null_labeled)
        / max(state.count_test, 1)
    )


def visible(state: ScreeningState) -> FiltrationView:
    if state.stopped:
        raise EngineError("state is stopped; no further views")
    return FiltrationView(state)


def screen_next(state: ScreeningState, choice: str) -> str:
    """Screen the sample a handle points at; returns the handle back."""
    if state.stopped:
        raise EngineError("state is stopped")
    idx = state._resolve(choice)
    if state._screened_mask[idx]:
        raise EngineError(f"handle {choice!r} already screened")
    state._screen_index(idx, reason="policy")
    return choice


def check_stop(state: ScreeningState) -> bool:
    """Record the FDP estimate; freeze the selection once it reaches alpha."""
    if state.stopped:
        return True
    step = len(state.order)
    value = fdp_estimate(state)
    if not state.fdp_trajectory or state.fdp_trajectory[-1][0] != step:
        state.fdp_trajectory.append((step, value))
    if value <= state.alpha:
        state.stopped = True
        unscreened_test = np.nonzero((state._A == 1) & ~state._screened_mask)[0]
        state.selection = frozenset(int(state._orig[i]) for i in unscreened_test)
        state._log("stop", {"fdp_estimate": value})
        return True
    return False


def reveal_label(state: ScreeningState, record_id: str, y: float) -> None:
    """Attach an outcome to a screened test sample (new label injection)."""
    idx = state._resolve(record_id)
    if not state._screened_mask[idx]:
        raise EngineError("label injection target is not screened")
    if state._A[idx] != 1:
        raise EngineError("label injection target is not a test sample")
    if idx in state._revealed:
        raise EngineError("label already revealed for this record")
    null = is_null_bounds(y, state._lo[idx], state._hi[idx])
    state._revealed[idx] = (float(y), null)
    state._log("reveal", {"handle": record_id, "y": float(y)})


def is_null_bounds(y: float, lo: float, hi: float) -> bool:
    return bool(lo <= y <= hi)


def oracle_martingale(state: ScreeningState) -> float:
    """Null-test to null-labeled count ratio; benchmark (oracle) mode only."""
    if not state.benchmark_mode:
        raise EngineError("oracle martingale requires oracle outcomes (benchmark mode)")
    return state.count_null_test / (1 + state.count_null_labeled)


def step(state: ScreeningState, policy, reveal_hook=None) -> str:
    """One driver step: check the stop rule, else screen the policy's choice.

    Returns ``"stopped"``, ``"exhausted"`` or ``"screened"``.  When only
    non-null labeled samples remain the estimate can no longer move, so they
    are drained without consulting the policy.
    """
    if check_stop(state):
        return "stopped"
    if state.pool_size == 0:
        remaining = np.nonzero(~state._screened_mask)[0]
        for i in remaining:
            state._screen_index(int(i), reason="drain")
            check_stop(state)
        if state.stopped:
            return "stopped"
        state.exhausted = True
        state.selection = frozenset()
        state._log("exhausted", {})
        return "exhausted"
    view = visible(state)
    choice = policy.choose(view)
    for event, payload in _drain(policy):
        state._log(event, payload)
    screen_next(state, choice)
    if reveal_hook is not None:
        idx = state._resolve(choice)
        if state._A[idx] == 1 and idx not in state._revealed:
            oracle_y = None if np.isnan(state._y[idx]) else float(state._y[idx])
            injected = reveal_hook(choice, state._X[idx], int(state._A[idx]), oracle_y)
            if injected is not None:
                reveal_label(state, choice, float(injected))
    return "screened"


def result_of(state: ScreeningState) -> SelectionResult:
    """Freeze the run's outcome (empty selection if it never stopped)."""
    selected = state.selection if state.selection is not None else frozenset()
    return SelectionResult(
        selected, len(state.order), state.alpha, state.seed,
        tuple(state.fdp_trajectory), tuple(state.audit),
    )


def run(dataset: Dataset, k: int, alpha: float, seed: int, policy,
        reveal_hook=None) -> SelectionResult:
    """Drive a full screening run with the given ordering policy.

    ``policy`` must expose ``choose(view) -> handle``; an optional
    ``drain_audit() -> list[(event, payload)]`` surfaces its decisions in the
    result's audit log.  ``reveal_hook(handle, x, membership, oracle_y)`` is
    called right after each screening step; returning a float injects that
    label before the next policy call.
    """
    if getattr(policy, "requires_reserve", False) and k == 0:
        raise EngineError(f"policy {policy!r} needs a nonempty training reserve (k > 0)")
    state = init(dataset, k, alpha, seed)
    while step(state, policy, reveal_hook) == "screened":
        pass
    return result_of(state)


def _drain(policy) -> list:
    drain = getattr(policy, "drain_audit", None)
    return drain() if drain is not None else []


def oracle_reveal_hook(handle, x, membership, oracle_y):
    """Benchmark hook: reveal the true label of every screened test sample."""
    return oracle_y
