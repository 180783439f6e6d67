"""Explicit-regularization comparators: closed-form ridge, ISTA lasso,
norm-constrained empirical risk minimizers, and population ball minimizers.

The lasso objective convention is R_n(a) + 2 * penalty * ||a||_1, so the
zero-solution threshold aligns with the (2/n) Z^T residual gradient scaling.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .problems import KernelProblem, empirical_risk, population_risk, risk_gradient


class RankDeficiencyError(RuntimeError):
    """Unpenalized normal equations are singular."""


class NonConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


@dataclass
class RegularizationPath:
    """Solutions along a strictly monotone grid of penalties or radii."""

    grid: np.ndarray
    solutions: list = field(repr=False)
    risks: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.risks = np.asarray(self.risks, dtype=float)
        if not (len(self.grid) == len(self.solutions) == len(self.risks)):
            raise ValueError("grid, solutions, and risks must have equal length")
        steps = np.diff(self.grid)
        if len(steps) and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("grid must be strictly monotone")

    def param_norms(self, ord=2):
        return np.array([np.linalg.norm(s, ord) for s in self.solutions])

    def to_csv(self, path, include_params=False):
        norms = self.param_norms()
        with open(path, "w", newline="\n") as fh:
            header = "lambda_or_R,risk,param_norm"
            if include_params:
                dim = len(self.solutions[0])
                header += "," + ",".join(f"coef_{i}" for i in range(dim))
            fh.write(header + "\n")
            for i in range(len(self.grid)):
                row = f"{self.grid[i]:.17g},{self.risks[i]:.17g},{norms[i]:.17g}"
                if include_params:
                    row += "," + ",".join(f"{v:.17g}" for v in self.solutions[i])
                fh.write(row + "\n")


def ridge_solve(problem, penalty):
    """Solve (Z^T Z / n + penalty I) a = Z^T y / n."""
    if penalty < 0:
        raise ValueError("penalty must be nonnegative")
    gram = problem.design.T @ problem.design / problem.n
    rhs = problem.design.T @ problem.labels / problem.n
    if penalty == 0:
        try:
            return cho_solve(cho_factor(gram), rhs)
        except np.linalg.LinAlgError as exc:
            raise RankDeficiencyError(
                "unpenalized normal equations are singular; pass penalty > 0"
            ) from exc
    return np.linalg.solve(gram + penalty * np.eye(problem.m), rhs)


def _soft_threshold(x, amount):
    return np.sign(x) * np.maximum(np.abs(x) - amount, 0.0)


def lasso_solve(problem, penalty, tol=1e-8, max_iters=10**6, init=None):
    """ISTA for R_n(a) + 2 * penalty * ||a||_1 with step 1/(2 lmax(Z^T Z/n)).

    Stops when the prox fixed-point residual (l2 norm of one proximal
    gradient step) drops to tol; exceeding max_iters raises
    NonConvergenceError.
    """
    if penalty < 0:
        raise ValueError("penalty must be nonnegative")
    smooth = 2.0 * float(
        np.linalg.eigvalsh(problem.design.T @ problem.design / problem.n).max()
    )
    if smooth == 0:
        return np.zeros(problem.m)
    step = 1.0 / smooth
    coef = np.zeros(problem.m) if init is None else np.asarray(init, dtype=float).copy()
    for _ in range(max_iters):
        candidate = _soft_threshold(
            coef - step * risk_gradient(problem, coef), 2.0 * penalty * step
        )
        shift = float(np.linalg.norm(candidate - coef))
        coef = candidate
        if shift <= tol:
            return coef
    raise NonConvergenceError(
        f"ISTA did not reach tol {tol:g} within {max_iters} iterations"
    )


def _l2_ball_argmin(design, labels, radius, n_scale):
    """Minimize ||design a - labels||^2 / n_scale over ||a|| <= radius."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return np.zeros(design.shape[1])
    unconstrained = np.linalg.lstsq(design, labels, rcond=None)[0]
    if np.linalg.norm(unconstrained) <= radius:
        return unconstrained
    gram = design.T @ design / n_scale
    rhs = design.T @ labels / n_scale
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals = np.clip(eigvals, 0.0, None)
    rhs_coords = eigvecs.T @ rhs

    def solution_at(mult):
        return eigvecs @ (rhs_coords / (eigvals + mult))

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if np.linalg.norm(solution_at(hi)) < radius:
            break
        hi *= 2.0
    else:
        raise RuntimeError(
            f"multiplier bracket failed at {hi:g}: constrained norm still above "
            f"{radius:g}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        nrm = np.linalg.norm(solution_at(mid))
        if nrm > radius:
            lo = mid
        else:
            hi = mid
        if abs(nrm - radius) <= 1e-8 * radius:
            break
    return solution_at(0.5 * (lo + hi))


def constrained_erm_ball(problem, radius, geometry="l2"):
    """Empirical risk minimizer over an l2 coefficient ball or an RKHS ball.

    For geometry "rkhs" the problem must be a KernelProblem; the ball
    ||h||_H^2 = b^T K b <= radius^2 is rewritten in the Gram eigenbasis,
    where it becomes an l2 ball, and the minimizer is mapped back.  Zero
    Gram directions are dropped (they do not affect predictions).
    """
    if geometry == "l2":
        return _l2_ball_argmin(problem.design, problem.labels, radius, problem.n)
    if geometry != "rkhs":
        raise ValueError(f"unknown geometry {geometry!r}")
    if not isinstance(problem, KernelProblem):
        raise ValueError("rkhs geometry needs a KernelProblem")
    eigvals, eigvecs = np.linalg.eigh(problem.gram)
    keep = eigvals > 1e-12 * max(eigvals.max(), 1.0)
    effective = eigvecs[:, keep] * np.sqrt(eigvals[keep])
    coords = _l2_ball_argmin(effective, problem.labels, radius, problem.n)
    return eigvecs[:, keep] @ (coords / np.sqrt(eigvals[keep]))


def _inv_sqrt(matrix):
    eigvals, eigvecs = np.linalg.eigh(matrix)
    if eigvals.min() <= 0:
        raise ValueError("quadratic-form matrix must be positive definite")
    return eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T, eigvecs @ np.diag(
        np.sqrt(eigvals)
    ) @ eigvecs.T


def constrained_erm_quadratic(problem, form, bound):
    """Minimize R_n over the ellipsoid {a : a^T form a <= bound} (form SPD).

    Substituting w = form^(1/2) a turns the constraint into an l2 ball of
    radius sqrt(bound), reusing the ball solver.
    """
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    inv_root, _ = _inv_sqrt(np.asarray(form, dtype=float))
    coords = _l2_ball_argmin(
        problem.design @ inv_root, problem.labels, np.sqrt(bound), problem.n
    )
    return inv_root @ coords


def _population_ball_argmin(law, radius, form=None):
    quad = law.covariance
    target = law.true_param
    if form is not None:
        inv_root, root = _inv_sqrt(np.asarray(form, dtype=float))
        quad = inv_root @ quad @ inv_root
        target = root @ target
    if np.linalg.norm(target) <= radius:
        best = target
    else:
        eigvals, eigvecs = np.linalg.eigh(quad)
        eigvals = np.clip(eigvals, 0.0, None)
        rhs_coords = eigvecs.T @ (quad @ target)

        def solution_at(mult):
            return eigvecs @ (rhs_coords / (eigvals + mult))

        lo, hi = 0.0, 1.0
        for _ in range(200):
            if np.linalg.norm(solution_at(hi)) < radius:
                break
            hi *= 2.0
        else:
            raise RuntimeError("multiplier bracket failed for the population ball")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            nrm = np.linalg.norm(solution_at(mid))
            if nrm > radius:
                lo = mid
            else:
                hi = mid
            if abs(nrm - radius) <= 1e-8 * radius:
                break
        best = solution_at(0.5 * (lo + hi))
    if form is not None:
        return inv_root @ best
    return best


def population_ball_minimizer(law, radius):
    """Minimize the population risk over the l2 ball of the given radius."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return np.zeros(law.m)
    return _population_ball_argmin(law, radius)


def population_ellipsoid_minimizer(law, form, bound):
    """Minimize the population risk over {a : a^T form a <= bound}."""
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    if bound == 0:
        return np.zeros(law.m)
    return _population_ball_argmin(law, np.sqrt(bound), form=form)


def ridge_path(problem, penalties, law=None):
    """Ridge solutions along a penalty grid via one eigendecomposition.

    Risks are population risks when a law is supplied, empirical otherwise.
    """
    penalties = np.asarray(penalties, dtype=float)
    gram = problem.design.T @ problem.design / problem.n
    rhs = problem.design.T @ problem.labels / problem.n
    eigvals, eigvecs = np.linalg.eigh(gram)
    rhs_coords = eigvecs.T @ rhs
    solutions = [eigvecs @ (rhs_coords / (eigvals + lam)) for lam in penalties]
    risks = [
        population_risk(law, s) if law is not None else empirical_risk(problem, s)
        for s in solutions
    ]
    return RegularizationPath(penalties, solutions, risks)


def lasso_path(problem, penalties, law=None, tol=1e-8):
    """Lasso solutions along a penalty grid, warm-started from large to small."""
    penalties = np.asarray(penalties, dtype=float)
    order = np.argsort(penalties)[::-1]
    solutions = [None] * len(penalties)
    warm = None
    for idx in order:
        warm = lasso_solve(problem, penalties[idx], tol=tol, init=warm)
        solutions[idx] = warm
    risks = [
        population_risk(law, s) if law is not None else empirical_risk(problem, s)
        for s in solutions
    ]
    return RegularizationPath(penalties, solutions, risks)
