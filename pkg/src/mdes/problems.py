"""Regression problems, risks, and seeded synthetic-data generators.

Everything here is a pure function of its inputs; problem and law objects
freeze their arrays at construction so they can be shared across threads.
"""
import json
import os

import numpy as np

PSD_TOL = 1e-8


def _freeze(a, dtype=float):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


def _check_vector(v, m, name="coefficient"):
    v = np.asarray(v, dtype=float)
    if v.shape != (m,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({m},)")
    return v


class RegressionProblem:
    """A fixed design matrix (one row per observation) and its labels."""

    def __init__(self, design, labels):
        design = np.atleast_2d(np.asarray(design, dtype=float))
        labels = np.asarray(labels, dtype=float).ravel()
        if design.shape[0] != labels.shape[0]:
            raise ValueError(
                f"{design.shape[0]} design rows but {labels.shape[0]} labels"
            )
        if not (np.isfinite(design).all() and np.isfinite(labels).all()):
            raise ValueError("design and labels must be finite")
        self.design = _freeze(design)
        self.labels = _freeze(labels)

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def m(self):
        return self.design.shape[1]

    def __repr__(self):
        return f"RegressionProblem(n={self.n}, m={self.m})"


class GaussianLinearLaw:
    """Population model X ~ N(0, covariance), Y | X = <true_param, X> + noise.

    The covariance must be symmetric; tiny negative eigenvalues (down to
    -1e-10) are clamped to zero so that Gram-like matrices round-trip.
    """

    def __init__(self, covariance, true_param, noise_sd):
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        true_param = np.asarray(true_param, dtype=float).ravel()
        m = true_param.shape[0]
        if cov.shape != (m, m):
            raise ValueError(f"covariance shape {cov.shape} does not match dim {m}")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0.0):
            raise ValueError("covariance must be symmetric")
        if noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        eigvals, eigvecs = np.linalg.eigh(cov)
        if eigvals.min() < -1e-10:
            raise ValueError(f"covariance not PSD: min eigenvalue {eigvals.min():g}")
        eigvals = np.clip(eigvals, 0.0, None)
        self.covariance = _freeze(cov)
        self.true_param = _freeze(true_param)
        self.noise_sd = float(noise_sd)
        # factor F with F F^T = covariance, used for exact sampling
        self._factor = _freeze(eigvecs * np.sqrt(eigvals))

    @property
    def m(self):
        return self.true_param.shape[0]

    def __repr__(self):
        return f"GaussianLinearLaw(m={self.m}, noise_sd={self.noise_sd})"


class KernelProblem:
    """A PSD Gram matrix with labels; kernel_bound is sup_x k(x, x)."""

    def __init__(self, gram, labels, kernel_bound=1.0):
        gram = np.atleast_2d(np.asarray(gram, dtype=float))
        labels = np.asarray(labels, dtype=float).ravel()
        n = labels.shape[0]
        if gram.shape != (n, n):
            raise ValueError(f"gram shape {gram.shape} does not match {n} labels")
        if not np.allclose(gram, gram.T, atol=1e-10, rtol=0.0):
            raise ValueError("gram matrix must be symmetric")
        eigvals = np.linalg.eigvalsh(gram)
        if eigvals.min() < -PSD_TOL:
            raise ValueError(f"gram not PSD: min eigenvalue {eigvals.min():g}")
        self.gram = _freeze(gram)
        self.labels = _freeze(labels)
        self.kernel_bound = float(kernel_bound)
        self._max_scaled_eigval = float(eigvals.max()) / n

    @property
    def n(self):
        return self.labels.shape[0]

    def max_scaled_eigval(self):
        """Largest eigenvalue of gram/n, which caps the admissible step size."""
        return self._max_scaled_eigval


def empirical_risk(problem, coef):
    """Mean squared residual ||Z a - y||^2 / n."""
    coef = _check_vector(coef, problem.m)
    resid = problem.design @ coef - problem.labels
    return float(resid @ resid) / problem.n


def risk_gradient(problem, coef):
    """Gradient (2/n) Z^T (Z a - y) of the empirical risk."""
    coef = _check_vector(coef, problem.m)
    resid = problem.design @ coef - problem.labels
    return (2.0 / problem.n) * (problem.design.T @ resid)


def empirical_distance_sq(problem, coef_a, coef_b):
    """Squared empirical distance ||Z (a - b)||^2 / n between two predictors."""
    coef_a = _check_vector(coef_a, problem.m, "coef_a")
    coef_b = _check_vector(coef_b, problem.m, "coef_b")
    diff = problem.design @ (coef_a - coef_b)
    return float(diff @ diff) / problem.n


def gradient_alignment_sides(problem, coef, reference):
    """Both sides of the identity pairing the descent direction with a reference.

    Returns (lhs, rhs) where lhs = <-grad R_n(a), ref - a> and
    rhs = R_n(a) - R_n(ref) + ||Z (a - ref)||^2 / n.  The two agree exactly
    up to floating-point rounding, which the test suite enforces; callers can
    use either side interchangeably.
    """
    coef = _check_vector(coef, problem.m)
    reference = _check_vector(reference, problem.m, "reference")
    lhs = float(-risk_gradient(problem, coef) @ (reference - coef))
    rhs = (
        empirical_risk(problem, coef)
        - empirical_risk(problem, reference)
        + empirical_distance_sq(problem, coef, reference)
    )
    return lhs, rhs


def population_risk(law, coef):
    """Closed-form risk (a - a*)^T Sigma (a - a*) + noise_sd^2 under the law."""
    coef = _check_vector(coef, law.m)
    diff = coef - law.true_param
    return float(diff @ law.covariance @ diff) + law.noise_sd**2


def population_distance_sq(law, coef_a, coef_b):
    """Population squared distance (a - b)^T Sigma (a - b)."""
    coef_a = _check_vector(coef_a, law.m, "coef_a")
    coef_b = _check_vector(coef_b, law.m, "coef_b")
    diff = coef_a - coef_b
    return float(diff @ law.covariance @ diff)


def sample_problem(law, n, seed):
    """Draw n i.i.d. rows from the law; bit-reproducible for a fixed seed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    design = rng.standard_normal((n, law.m)) @ law._factor.T
    labels = design @ law.true_param
    if law.noise_sd > 0:
        labels = labels + law.noise_sd * rng.standard_normal(n)
    return RegressionProblem(design, labels)


def sparse_sign_law(dim, sparsity, noise_sd, covariance=None):
    """Isotropic law whose target has `sparsity` leading entries of +/-1.

    Signs alternate starting at +1; support position is immaterial under an
    i.i.d. isotropic design, so pinning it keeps the generator seed-free.
    """
    if not 0 <= sparsity <= dim:
        raise ValueError("sparsity must lie in [0, dim]")
    target = np.zeros(dim)
    target[:sparsity] = [1.0 if i % 2 == 0 else -1.0 for i in range(sparsity)]
    cov = np.eye(dim) if covariance is None else covariance
    return GaussianLinearLaw(cov, target, noise_sd)


def rbf_gram(points, bandwidth):
    """Gaussian-kernel Gram matrix exp(-||x_i - x_j||^2 / (2 bw^2)).

    The diagonal is identically 1, so the kernel sup bound is exactly 1.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    sq = np.sum(pts**2, axis=1)
    dist_sq = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.clip(dist_sq, 0.0, None, out=dist_sq)
    gram = np.exp(-dist_sq / (2.0 * bandwidth**2))
    return 0.5 * (gram + gram.T)


def _format(x):
    return f"{x:.17g}"


def save_problem(problem, directory, law=None):
    """Write design.csv / labels.csv (17 significant digits) plus law.json."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "design.csv"), "w", newline="\n") as fh:
        for row in problem.design:
            fh.write(",".join(_format(v) for v in row) + "\n")
    with open(os.path.join(directory, "labels.csv"), "w", newline="\n") as fh:
        for v in problem.labels:
            fh.write(_format(v) + "\n")
    if law is not None:
        sidecar = {
            "covariance": [[float(v) for v in row] for row in law.covariance],
            "true_param": [float(v) for v in law.true_param],
            "noise_sd": law.noise_sd,
        }
        with open(os.path.join(directory, "law.json"), "w", newline="\n") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_problem(directory):
    """Inverse of save_problem; returns (problem, law-or-None)."""
    design = np.loadtxt(os.path.join(directory, "design.csv"), delimiter=",", ndmin=2)
    labels = np.loadtxt(os.path.join(directory, "labels.csv"), ndmin=1)
    problem = RegressionProblem(design, labels)
    law = None
    law_path = os.path.join(directory, "law.json")
    if os.path.exists(law_path):
        with open(law_path) as fh:
            sidecar = json.load(fh)
        law = GaussianLinearLaw(
            sidecar["covariance"], sidecar["true_param"], sidecar["noise_sd"]
        )
    return problem, law
