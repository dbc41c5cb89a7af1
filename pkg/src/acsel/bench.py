"""Monte Carlo benchmark harness: replication grids, metric estimators, the
exact hypergeometric bound check, and result emission.

Within a grid cell every arm sees the same sequence of datasets (data seeds
depend only on the cell and replication index), so power comparisons between
arms are paired.  Replication work items are independent and seed-derived,
which makes parallel and serial execution byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import conformal, engine, policies
from .data import Dataset, SimConfig, SimilarityKernel, generate, is_null, kernel_matrix
from .learners import parse_learner
from .results import SelectionResult

__all__ = [
    "Arm",
    "ExperimentGrid",
    "MetricRow",
    "BenchError",
    "metrics",
    "run_grid",
    "hypergeom_bound_check",
    "emit",
]


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class Arm:
    """One method under test: ``cs:<learner>``, ``cs_screen:<learner>``,
    ``cs:naive(<l1>,<l2>,...)`` or ``acs:<policy spec>``."""

    name: str
    method: str

    def parsed(self):
        head, _, rest = self.method.partition(":")
        if head in ("cs", "cs_screen"):
            rest = rest.strip()
            if rest.startswith("naive(") and rest.endswith(")"):
                specs = [parse_learner(t.strip())
                         for t in policies._split_top_level(rest[len("naive("):-1])]
                return head, ("naive", specs)
            return head, ("fixed", [parse_learner(rest)])
        if head == "acs":
            return head, policies.parse_policy(rest)
        raise BenchError(f"unknown arm method {self.method!r}")


@dataclass(frozen=True)
class ExperimentGrid:
    setting: int
    m: int
    sigmas: tuple[float, ...]
    ns: tuple[int, ...]
    alpha: float
    reps: int
    arms: tuple[Arm, ...]
    reveal_labels: bool = False
    train_fraction: float = 0.5
    es_kernel: SimilarityKernel = field(default_factory=lambda: SimilarityKernel("rbf", 5.0))

    def __post_init__(self):
        if self.reps < 1:
            raise BenchError("reps must be >= 1")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise BenchError("arm names must be unique")

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentGrid":
        kernel = cfg.get("es_kernel")
        return cls(
            setting=int(cfg.get("setting", 1)),
            m=int(cfg.get("m", 100)),
            sigmas=tuple(float(s) for s in cfg["sigmas"]),
            ns=tuple(int(n) for n in cfg["ns"]),
            alpha=float(cfg.get("alpha", 0.1)),
            reps=int(cfg.get("reps", 200)),
            arms=tuple(Arm(a["name"], a["method"]) for a in cfg["arms"]),
            reveal_labels=bool(cfg.get("reveal_labels", False)),
            train_fraction=float(cfg.get("train_fraction", 0.5)),
            es_kernel=SimilarityKernel.parse(kernel) if kernel else SimilarityKernel("rbf", 5.0),
        )


@dataclass(frozen=True)
class MetricRow:
    arm: str
    sigma: float
    n: int
    power_hat: float
    fdr_hat: float
    es_hat: float | None
    n2_count: int
    mean_T: float
    mean_selected: float
    runtime: float

    COLUMNS = ("arm", "sigma", "n", "power_hat", "fdr_hat", "es_hat",
               "n2_count", "mean_T", "mean_selected")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _rep_stats(result: SelectionResult, dataset: Dataset, kernel: SimilarityKernel | None):
    """Per-replication power/FDP contributions plus the pairwise-similarity
    numerator and pair count over correctly selected units."""
    selected = sorted(result.selected)
    null_flags = np.array([is_null(s.y, s.property) for s in dataset.test])
    nonnull_total = int((~null_flags).sum())
    hits = sum(1 for j in selected if not null_flags[j])
    power = hits / nonnull_total if nonnull_total else 0.0
    fdp = (len(selected) - hits) / len(selected) if selected else 0.0
    es_value = None
    correct = [j for j in selected if not null_flags[j]]
    if kernel is not None and len(correct) >= 2:
        X = np.stack([dataset.test[j].x for j in correct])
        fps = None
        if kernel.kind == "tanimoto":
            fps = np.stack([dataset.test[j].fingerprint for j in correct])
        K = kernel_matrix(kernel, X, fps)
        iu = np.triu_indices(len(correct), k=1)
        es_value = float(K[iu].mean())
    return power, fdp, es_value, result.T, len(selected)


def metrics(results: list[tuple[SelectionResult, Dataset]],
            kernel: SimilarityKernel | None = None,
            arm: str = "", sigma: float = 0.0, n: int = 0,
            runtime: float = 0.0) -> MetricRow:
    """Average power and FDP over all replications (0/0 counts as 0); average
    pairwise similarity only over replications with >= 2 correct selections."""
    if not results:
        raise BenchError("no replications to aggregate")
    powers, fdps, es_vals, ts, sizes = [], [], [], [], []
    for result, dataset in results:
        p, f, e, t, s = _rep_stats(result, dataset, kernel)
        powers.append(p)
        fdps.append(f)
        if e is not None:
            es_vals.append(e)
        ts.append(t)
        sizes.append(s)
    return MetricRow(
        arm=arm, sigma=sigma, n=n,
        power_hat=float(np.mean(powers)),
        fdr_hat=float(np.mean(fdps)),
        es_hat=float(np.mean(es_vals)) if es_vals else None,
        n2_count=len(es_vals),
        mean_T=float(np.mean(ts)),
        mean_selected=float(np.mean(sizes)),
        runtime=runtime,
    )


# ---------------------------------------------------------------------------
# grid runner
# ---------------------------------------------------------------------------


def _data_seed(seed: int, cell: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, 0xDA7A, cell, rep]).generate_state(1)[0])


def _method_seed(seed: int, cell: int, arm: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x4E7, cell, arm, rep]).generate_state(1)[0])


def run_replication(grid: ExperimentGrid, cell: int, arm_index: int, rep: int, seed: int,
                    trace_dir=None):
    """One (cell, arm, replication) work item; returns per-rep statistics."""
    sigma = grid.sigmas[cell // len(grid.ns)]
    n = grid.ns[cell % len(grid.ns)]
    arm = grid.arms[arm_index]
    cfg = SimConfig(grid.setting, 2 * n, grid.m, sigma, _data_seed(seed, cell, rep))
    dataset = generate(cfg)
    mseed = _method_seed(seed, cell, arm_index, rep)
    kind, payload = arm.parsed()
    t0 = time.perf_counter()
    if kind in ("cs", "cs_screen"):
        flavour, specs = payload
        if flavour == "naive":
            spec = _naive_choice(dataset, grid.train_fraction, specs, mseed)
        else:
            spec = specs[0]
        fn = conformal.cs_select if kind == "cs" else conformal.cs_screen
        result = fn(dataset, grid.train_fraction, spec.with_seed(mseed), grid.alpha, mseed)
    else:
        config = payload.with_seed(mseed)
        policy = policies.make_policy(config)
        hook = engine.oracle_reveal_hook if (grid.reveal_labels and config.kind == "augmented_refit") else None
        result = engine.run(dataset, n, grid.alpha, mseed, policy, reveal_hook=hook)
    runtime = time.perf_counter() - t0
    if trace_dir is not None:
        result.write(f"{trace_dir}/cell{cell}_{arm.name}_rep{rep}.json")
    power, fdp, es_value, T, size = _rep_stats(result, dataset, grid.es_kernel)
    return cell, arm_index, rep, power, fdp, es_value, T, size, runtime


def _naive_choice(dataset, train_fraction, specs, seed):
    """Pick the candidate with the best in-sample error on the training split."""
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x5C]))
    perm = rng.permutation(dataset.n)
    train_idx = perm[: int(train_fraction * dataset.n)]
    X = np.stack([dataset.labeled[i].x for i in train_idx])
    mode = specs[0].mode
    if mode == "classification":
        targets = np.array([0.0 if is_null(dataset.labeled[i].y, dataset.labeled[i].property) else 1.0
                            for i in train_idx])
    else:
        targets = np.array([dataset.labeled[i].y for i in train_idx])
    return policies.naive_select(X, targets, specs, seed=seed)


def run_grid(grid: ExperimentGrid, seed: int, n_jobs: int = 1, trace_dir=None) -> list[MetricRow]:
    """All cells x arms x replications; rows ordered by (sigma, n, arm)."""
    if trace_dir is not None:
        import os

        os.makedirs(trace_dir, exist_ok=True)
    n_cells = len(grid.sigmas) * len(grid.ns)
    tasks = [
        (cell, arm, rep)
        for cell in range(n_cells)
        for arm in range(len(grid.arms))
        for rep in range(grid.reps)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunk = max(1, len(tasks) // (8 * n_jobs))
            outputs = list(pool.map(_run_star, [(grid, c, a, r, seed, trace_dir) for c, a, r in tasks],
                                    chunksize=chunk))
    else:
        outputs = [run_replication(grid, c, a, r, seed, trace_dir) for c, a, r in tasks]

    buckets: dict[tuple[int, int], list] = {}
    for out in outputs:
        cell, arm_index = out[0], out[1]
        buckets.setdefault((cell, arm_index), []).append(out)
    rows = []
    for cell in range(n_cells):
        sigma = grid.sigmas[cell // len(grid.ns)]
        n = grid.ns[cell % len(grid.ns)]
        for arm_index, arm in enumerate(grid.arms):
            reps = sorted(buckets[(cell, arm_index)], key=lambda o: o[2])
            powers = [o[3] for o in reps]
            fdps = [o[4] for o in reps]
            es_vals = [o[5] for o in reps if o[5] is not None]
            rows.append(MetricRow(
                arm=arm.name, sigma=sigma, n=n,
                power_hat=float(np.mean(powers)),
                fdr_hat=float(np.mean(fdps)),
                es_hat=float(np.mean(es_vals)) if es_vals else None,
                n2_count=len(es_vals),
                mean_T=float(np.mean([o[6] for o in reps])),
                mean_selected=float(np.mean([o[7] for o in reps])),
                runtime=float(np.sum([o[8] for o in reps])),
            ))
    return rows


def _run_star(args):
    return run_replication(*args)


# ---------------------------------------------------------------------------
# exact hypergeometric bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypergeomReport:
    checked: int
    violations: int
    max_slack: Fraction
    equality_cases: int


def hypergeom_bound_check(m_max: int, n_max: int) -> HypergeomReport:
    """Exact-rational check of E[X / (1 + kappa - X)] <= m / (1 + n') for
    X ~ Hypergeom(m + n', kappa, m), over all m <= m_max, n' <= n_max, kappa.

    The expectation is enumerated over the full PMF with Fractions, so the
    comparison (including the equality case kappa = m + n') is exact.
    """
    checked = violations = equality_cases = 0
    max_slack = Fraction(-1)
    for m in range(1, m_max + 1):
        for n_prime in range(1, n_max + 1):
            total = m + n_prime
            denom = math.comb(total, m)
            bound = Fraction(m, 1 + n_prime)
            for kappa in range(0, total + 1):
                expectation = Fraction(0)
                lo = max(0, kappa - n_prime)
                hi = min(m, kappa)
                for x in range(lo, hi + 1):
                    pmf = Fraction(math.comb(kappa, x) * math.comb(total - kappa, m - x), denom)
                    expectation += pmf * Fraction(x, 1 + kappa - x)
                checked += 1
                slack = expectation - bound
                if slack > 0:
                    violations += 1
                if slack > max_slack:
                    max_slack = slack
                if expectation == bound:
                    equality_cases += 1
    return HypergeomReport(checked, violations, max_slack, equality_cases)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _sig6(value: float) -> float:
    return float(f"{value:.6g}")


def _row_dict(row: MetricRow) -> dict:
    out = {}
    for col in MetricRow.COLUMNS:
        v = getattr(row, col)
        if isinstance(v, float):
            v = _sig6(v)
        out[col] = v
    return out


def emit(rows: list[MetricRow], path, format: str = "csv") -> None:
    """Write rows with a stable column order and floats at 6 significant
    digits.  Wall-clock runtimes stay in memory only, so repeated runs with
    the same seed produce byte-identical files."""
    dicts = [_row_dict(r) for r in rows]
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(MetricRow.COLUMNS))
            writer.writeheader()
            for d in dicts:
                writer.writerow({k: ("" if v is None else v) for k, v in d.items()})
    elif format == "json":
        with open(path, "w") as fh:
            json.dump(dicts, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        raise BenchError(f"unknown emit format {format!r}")


def read_rows(path, format: str = "csv") -> list[MetricRow]:
    """Load emitted rows back (used by round-trip checks)."""
    if format == "json":
        with open(path) as fh:
            dicts = json.load(fh)
    else:
        with open(path, newline="") as fh:
            dicts = list(csv.DictReader(fh))
    rows = []
    for d in dicts:
        rows.append(MetricRow(
            arm=d["arm"], sigma=float(d["sigma"]), n=int(d["n"]),
            power_hat=float(d["power_hat"]), fdr_hat=float(d["fdr_hat"]),
            es_hat=None if d["es_hat"] in ("", None) else float(d["es_hat"]),
            n2_count=int(d["n2_count"]), mean_T=float(d["mean_T"]),
            mean_selected=float(d["mean_selected"]), runtime=0.0,
        ))
    return rows
