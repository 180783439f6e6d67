"""Mirror maps: potential value, dual map, inverse dual map, Bregman divergence.

Three concrete geometries are provided: Euclidean (plain gradient descent),
quadratic forms a^T Q a (including Gram-matrix kernels), and the hyperbolic
entropy map that drives multiplicative, sparsity-friendly updates.
"""
import json
import os
from abc import ABC, abstractmethod

import numpy as np
from scipy.linalg import cho_factor, cho_solve

SINH_ARG_CAP = 700.0


class SpecializedUpdateRequired(RuntimeError):
    """The dual map is not invertible; use the premultiplied kernel update."""


class MirrorMap(ABC):
    """Strictly convex potential with full domain R^m.

    `dual` maps a primal point to gradient space, `dual_inverse` maps back;
    the Bregman divergence is always assembled from `value` and `dual` so
    subclasses only specify the potential itself.
    """

    @abstractmethod
    def value(self, point):
        """Potential evaluated at a point."""

    @abstractmethod
    def dual(self, point):
        """Gradient of the potential (primal -> dual space)."""

    @abstractmethod
    def dual_inverse(self, grad):
        """Inverse of `dual` (dual -> primal space)."""

    def bregman(self, target, point):
        """Divergence value(target) - value(point) - <dual(point), target - point>."""
        target = np.asarray(target, dtype=float)
        point = np.asarray(point, dtype=float)
        if target.shape != point.shape:
            raise ValueError(f"shape mismatch {target.shape} vs {point.shape}")
        return (
            self.value(target)
            - self.value(point)
            - float(self.dual(point) @ (target - point))
        )


class EuclideanMap(MirrorMap):
    """Half squared norm; mirror descent reduces to gradient descent."""

    def value(self, point):
        point = np.asarray(point, dtype=float)
        return 0.5 * float(point @ point)

    def dual(self, point):
        return np.asarray(point, dtype=float).copy()

    def dual_inverse(self, grad):
        return np.asarray(grad, dtype=float).copy()

    def bregman(self, target, point):
        # closed form, cross-checked against the generic assembly in tests
        target = np.asarray(target, dtype=float)
        point = np.asarray(point, dtype=float)
        if target.shape != point.shape:
            raise ValueError(f"shape mismatch {target.shape} vs {point.shape}")
        diff = target - point
        return 0.5 * float(diff @ diff)


class QuadraticMap(MirrorMap):
    """Potential scale * a^T Q a for symmetric PSD Q and scale in {1/2, 1}.

    The inverse dual solve is backed by a Cholesky factorization computed
    eagerly; a singular Q (Gram matrices can be) leaves the map usable for
    values and divergences but makes `dual_inverse` raise
    SpecializedUpdateRequired.
    """

    def __init__(self, matrix, scale=0.5):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        if not np.allclose(matrix, matrix.T, atol=1e-10, rtol=0.0):
            raise ValueError("matrix must be symmetric")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.matrix = matrix.copy()
        self.matrix.flags.writeable = False
        self.scale = float(scale)
        try:
            self._chol = cho_factor(matrix)
        except np.linalg.LinAlgError:
            self._chol = None

    @property
    def m(self):
        return self.matrix.shape[0]

    def value(self, point):
        point = np.asarray(point, dtype=float)
        return self.scale * float(point @ self.matrix @ point)

    def dual(self, point):
        point = np.asarray(point, dtype=float)
        return 2.0 * self.scale * (self.matrix @ point)

    def dual_inverse(self, grad):
        if self._chol is None:
            raise SpecializedUpdateRequired(
                "quadratic potential matrix is singular; premultiplied updates "
                "(kernel_md_step) realize the same dual-space recursion"
            )
        grad = np.asarray(grad, dtype=float)
        return cho_solve(self._chol, grad) / (2.0 * self.scale)

    def invertible(self):
        return self._chol is not None


class HypentropyMap(MirrorMap):
    """Hyperbolic entropy sum_i [a_i asinh(a_i/gamma) - sqrt(a_i^2 + gamma^2)].

    Coordinatewise dual map asinh(a/gamma) with inverse gamma*sinh; the
    stable log form of asinh keeps values finite for |a| >> gamma.  sinh
    arguments beyond 700 overflow double precision, which only happens once
    an iterate has already diverged, so that raises OverflowError for the
    descent engine to translate.
    """

    def __init__(self, gamma):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)

    def value(self, point):
        point = np.asarray(point, dtype=float)
        return float(
            np.sum(
                point * np.arcsinh(point / self.gamma)
                - np.sqrt(point**2 + self.gamma**2)
            )
        )

    def dual(self, point):
        point = np.asarray(point, dtype=float)
        return np.arcsinh(point / self.gamma)

    def dual_inverse(self, grad):
        grad = np.asarray(grad, dtype=float)
        if np.max(np.abs(grad), initial=0.0) > SINH_ARG_CAP:
            raise OverflowError(
                f"dual coordinate exceeds sinh cap {SINH_ARG_CAP:g}; "
                "the iterate has diverged"
            )
        return self.gamma * np.sinh(grad)


def three_point_gap(mirror_map, pivot, x, y):
    """Residual of the Bregman three-point (law of cosines) identity.

    Evaluates [D(pivot, x) - D(pivot, y)] minus
    [<dual(x) - dual(y), x - pivot> - D(x, y)]; both brackets are computed
    independently and their difference is zero up to rounding.
    """
    pivot = np.asarray(pivot, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (pivot.shape == x.shape == y.shape):
        raise ValueError("all three points must share a shape")
    lhs = mirror_map.bregman(pivot, x) - mirror_map.bregman(pivot, y)
    rhs = float(
        (mirror_map.dual(x) - mirror_map.dual(y)) @ (x - pivot)
    ) - mirror_map.bregman(x, y)
    return lhs - rhs


def hypentropy_ball_radius(gamma, l1_norm_ref):
    """l1 radius 6 * l1_norm_ref * log(3/gamma) confining pre-stopping iterates.

    Any point whose hypentropy divergence from the reference is at most twice
    the divergence at zero has l1 norm below this radius, provided gamma
    satisfies the admissibility cap gamma <= (l1_norm_ref ^ 1) / (3 e^2 d).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 6.0 * l1_norm_ref * np.log(3.0 / gamma)


def strong_convexity_modulus(mirror_map, ball_radius=None):
    """Strong-convexity constant of the map in its natural norm.

    Euclidean: 1 (l2 norm).  Quadratic(Q, scale): 2*scale (Q-norm).
    Hypentropy: 1/(2 * ball_radius) in l1 norm, valid on the l1 ball of the
    given radius, which must therefore be supplied.
    """
    if isinstance(mirror_map, EuclideanMap):
        return 1.0
    if isinstance(mirror_map, QuadraticMap):
        return 2.0 * mirror_map.scale
    if isinstance(mirror_map, HypentropyMap):
        if ball_radius is None or ball_radius <= 0:
            raise ValueError(
                "hypentropy strong convexity requires a positive l1 ball radius"
            )
        return 1.0 / (2.0 * ball_radius)
    raise ValueError(f"unknown mirror map {type(mirror_map).__name__}")


def map_to_json(mirror_map, path, matrix_path=None):
    """Serialize a map to JSON; quadratic matrices go to a CSV side file."""
    if isinstance(mirror_map, EuclideanMap):
        payload = {"kind": "euclidean"}
    elif isinstance(mirror_map, HypentropyMap):
        payload = {"kind": "hypentropy", "gamma": mirror_map.gamma}
    elif isinstance(mirror_map, QuadraticMap):
        if matrix_path is None:
            matrix_path = os.path.splitext(path)[0] + "_matrix.csv"
        with open(matrix_path, "w", newline="\n") as fh:
            for row in mirror_map.matrix:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        payload = {
            "kind": "quadratic",
            "scale": mirror_map.scale,
            "matrix_path": os.path.abspath(matrix_path),
        }
    else:
        raise ValueError(f"cannot serialize {type(mirror_map).__name__}")
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def map_from_json(path):
    """Inverse of map_to_json."""
    with open(path) as fh:
        payload = json.load(fh)
    kind = payload["kind"]
    if kind == "euclidean":
        return EuclideanMap()
    if kind == "hypentropy":
        return HypentropyMap(payload["gamma"])
    if kind == "quadratic":
        matrix = np.loadtxt(payload["matrix_path"], delimiter=",", ndmin=2)
        return QuadraticMap(matrix, payload["scale"])
    raise ValueError(f"unknown map kind {kind!r}")
