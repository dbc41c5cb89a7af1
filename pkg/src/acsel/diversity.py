"""Diversity scoring: similarity-weighted Gram matrix, the closed-form
keep-probability solution, its working normalisation, and the
nonnegativity-constrained quadratic program variant.

Given keep-probabilities ``xi`` over a candidate pool, the expected pairwise
similarity among kept promising units is ``xi' Theta xi`` up to normalisation,
with ``Theta[i,j] = delta_i * delta_j * theta(x_i, x_j)``.  Minimising it under
a budget-saturating false-discovery constraint has a closed form; dropping the
constraint and pinning the scale instead gives a QP solved here by projected
gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, SimilarityKernel, kernel_matrix

__all__ = [
    "DiversityProblem",
    "DiversityScores",
    "DivoptError",
    "build_theta",
    "closed_form_xi",
    "working_rule",
    "qp_xi",
    "softmax",
]

DEGENERATE_TOL = 1e-10


class DivoptError(ValueError):
    """Numerical failure in the diversity machinery (often: ridge too small)."""


@dataclass(frozen=True)
class DiversityProblem:
    """Promise vector, ridged similarity Gram matrix, and target level."""

    delta: np.ndarray
    theta: np.ndarray
    alpha: float
    ridge: float

    def __post_init__(self):
        if not np.allclose(self.theta, self.theta.T):
            raise DivoptError("theta must be symmetric")


@dataclass(frozen=True)
class DiversityScores:
    xi_star: np.ndarray
    xi_work: np.ndarray
    degenerate: bool


def build_theta(delta, pool_x: np.ndarray, kernel: SimilarityKernel, ridge: float | None = None,
                alpha: float = 0.1, fingerprints: np.ndarray | None = None) -> DiversityProblem:
    """Assemble Theta[i,j] = delta_i delta_j theta(x_i, x_j) + ridge on the diagonal.

    Cosine similarity is shifted into [0, 1] via (theta + 1) / 2 so Theta stays
    a plausible similarity Gram matrix.  Default ridge: 1e-6 * trace / n.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 1 or delta.size < 2:
        raise DivoptError("need at least two pool entries")
    if np.any((delta < 0) | (delta > 1)):
        raise DivoptError("delta entries must lie in [0, 1]")
    th = kernel_matrix(kernel, pool_x, fingerprints)
    if kernel.kind == "cosine":
        th = (th + 1.0) / 2.0
    theta = np.outer(delta, delta) * th
    if ridge is None:
        ridge = 1e-6 * float(np.trace(theta)) / delta.size
    theta = theta + ridge * np.eye(delta.size)
    return DiversityProblem(delta, theta, alpha, float(ridge))


def working_rule(xi_star) -> tuple[np.ndarray, bool]:
    """Clip negatives to zero and scale the max to one; flag a nonpositive max."""
    xi = np.asarray(xi_star, dtype=float)
    top = xi.max() if xi.size else 0.0
    if top <= 0:
        return np.zeros_like(xi), True
    return np.maximum(xi, 0.0) / top, False


def closed_form_xi(p: DiversityProblem) -> DiversityScores:
    """Stationary solution of the similarity-minimising program.

    With z1 = Theta^-1 1 and z2 = Theta^-1 delta and the scalars
    a = delta'z1, b = delta'z2, c = 1'z1, the raw direction is

        xi0 = (b/(1-alpha) - a) z1 - (a/(1-alpha) - c) z2,

    reported unnormalised (it is defined up to positive scale); the working
    vector applies the clip-and-scale rule.
    """
    try:
        np.linalg.cholesky(p.theta)
    except np.linalg.LinAlgError:
        raise DivoptError("theta + ridge is not positive definite; increase the ridge") from None
    ones = np.ones(p.delta.size)
    z1 = np.linalg.solve(p.theta, ones)
    z2 = np.linalg.solve(p.theta, p.delta)
    a = float(p.delta @ z1)
    b = float(p.delta @ z2)
    c = float(ones @ z1)
    s = 1.0 / (1.0 - p.alpha)
    xi0 = (b * s - a) * z1 - (a * s - c) * z2
    if np.max(np.abs(xi0)) <= DEGENERATE_TOL or xi0.max() <= 0:
        return DiversityScores(xi0, np.zeros_like(xi0), True)
    xi_work, degenerate = working_rule(xi0)
    return DiversityScores(xi0, xi_work, degenerate)


class QpConvergenceError(DivoptError):
    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


def _project(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {y >= 0, y' delta = 1}.

    The KKT form is y = max(0, x - t * delta) with t the root of the
    piecewise-linear decreasing map t -> delta' y; the root sits between
    breakpoints x_i / delta_i, found by one descending sweep.
    """
    pos = delta > 0
    dp = delta[pos]
    xp = x[pos]
    ratios = xp / dp
    order = np.argsort(ratios)[::-1]
    a = 0.0  # sum of delta_i * x_i over the active set
    b = 0.0  # sum of delta_i^2 over the active set
    t = None
    for rank, i in enumerate(order):
        a += dp[i] * xp[i]
        b += dp[i] * dp[i]
        cand = (a - 1.0) / b
        nxt = ratios[order[rank + 1]] if rank + 1 < order.size else -np.inf
        if cand >= nxt:
            t = cand
            break
    if t is None:
        t = (a - 1.0) / b
    y = np.maximum(x - t * delta, 0.0)
    y[~pos] = np.maximum(x[~pos], 0.0)
    s = float(y @ delta)
    if s > 0 and abs(s - 1.0) > 1e-12:
        y = y / s
    return y


def qp_xi(p: DiversityProblem, tol: float = 1e-8, max_iter: int = 100_000) -> DiversityScores:
    """Projected gradient descent on xi' Theta xi over {xi >= 0, xi' delta = 1}."""
    delta, theta = p.delta, p.theta
    if not np.any(delta > 0):
        raise DivoptError("infeasible: delta has no positive entry")
    xi = _project(delta / float(delta @ delta), delta)
    # Gershgorin bound on the largest eigenvalue sets a safe base step
    lam_max = float(np.max(np.abs(theta).sum(axis=1)))
    step = 1.0 / (2.0 * lam_max)
    obj = float(xi @ theta @ xi)
    for _ in range(max_iter):
        grad = 2.0 * (theta @ xi)
        trial_step = step
        for _ in range(40):
            cand = _project(xi - trial_step * grad, delta)
            cand_obj = float(cand @ theta @ cand)
            if cand_obj <= obj:
                break
            trial_step *= 0.5
        else:
            cand, cand_obj = xi, obj
        decrease = obj - cand_obj
        xi, obj = cand, cand_obj
        if decrease <= tol:
            xi_work, degenerate = working_rule(xi)
            return DiversityScores(xi, xi_work, degenerate)
    raise QpConvergenceError(f"projected gradient did not converge in {max_iter} iterations", xi)


def softmax(scores) -> np.ndarray:
    """Max-shifted softmax; finite scores map into (0, 1) summing to one."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise DataError("softmax of empty score vector")
    z = np.exp(s - s.max())
    return z / z.sum()
