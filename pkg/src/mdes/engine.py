"""Descent runners: discrete mirror descent, the dual-variable flow, the
specialized Gram update, multiplicative EG+/- updates, stopping rules, and
the l1 hyperparameter schedule.

A run records, per iteration t: the empirical risk, the gap
delta_t = R_n(a_t) - R_n(ref), the squared empirical distance
r_t = ||Z (a_t - ref)||^2 / n, and the Bregman potential D(ref, a_t).
The reference point is an explicit oracle input; practical surrogates are a
concern of the experiment layer.
"""
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .maps import EuclideanMap, HypentropyMap, MirrorMap, QuadraticMap
from .problems import empirical_risk, risk_gradient

STOP_THRESHOLD = "threshold"
STOP_BUDGET = "budget_exhausted"

_CODE_NAMES = {
    backend.CODE_THRESHOLD: STOP_THRESHOLD,
    backend.CODE_BUDGET: STOP_BUDGET,
}


class DivergenceError(RuntimeError):
    """An iterate left the representable range; carries the finite prefix."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class IterateRecord:
    t: float
    alpha: Optional[np.ndarray]
    risk: float
    delta: float
    r: float
    potential: float


class Trajectory:
    """Columnar per-iteration records of one run."""

    def __init__(
        self, t, risk, delta, r, potential, alphas, step_size, reference, init,
        last_alpha=None,
    ):
        self.t = np.asarray(t, dtype=float)
        self.risk = np.asarray(risk, dtype=float)
        self.delta = np.asarray(delta, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.potential = np.asarray(potential, dtype=float)
        self.alphas = None if alphas is None else np.asarray(alphas, dtype=float)
        self.step_size = float(step_size)
        self.reference = np.asarray(reference, dtype=float)
        self.init = np.asarray(init, dtype=float)
        self.last_alpha = None if last_alpha is None else np.asarray(last_alpha, float)

    def __len__(self):
        return self.t.shape[0]

    @property
    def records(self):
        return [
            IterateRecord(
                t=self.t[i],
                alpha=None if self.alphas is None else self.alphas[i],
                risk=self.risk[i],
                delta=self.delta[i],
                r=self.r[i],
                potential=self.potential[i],
            )
            for i in range(len(self))
        ]

    def gap(self):
        """Per-record stopping quantity delta_t + r_t."""
        return self.delta + self.r

    def final_alpha(self):
        """Iterate at the last recorded step."""
        if self.alphas is not None:
            return self.alphas[-1]
        if self.last_alpha is not None:
            return self.last_alpha
        raise ValueError("run did not retain iterates")

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("t,risk,delta,r,potential\n")
            for i in range(len(self)):
                fh.write(
                    f"{self.t[i]:.17g},{self.risk[i]:.17g},{self.delta[i]:.17g},"
                    f"{self.r[i]:.17g},{self.potential[i]:.17g}\n"
                )


@dataclass
class StoppingReport:
    t_star: float
    epsilon: float
    budget: Optional[float]
    residual: float
    stopped_by: str

    def to_json(self, path=None):
        payload = json.dumps(
            {
                "t_star": self.t_star,
                "epsilon": self.epsilon,
                "budget": self.budget,
                "residual": self.residual,
                "stopped_by": self.stopped_by,
            },
            indent=2,
            sort_keys=True,
        )
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(payload + "\n")
        return payload


def md_step(mirror_map, problem, coef, step_size):
    """One mirror-descent update dual(a+) = dual(a) - eta * grad R_n(a)."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    coef = np.asarray(coef, dtype=float)
    dual = mirror_map.dual(coef) - step_size * risk_gradient(problem, coef)
    try:
        nxt = mirror_map.dual_inverse(dual)
    except OverflowError as exc:
        raise DivergenceError(str(exc)) from exc
    if not np.all(np.isfinite(nxt)):
        raise DivergenceError("mirror-descent step produced a non-finite iterate")
    return nxt


def eg_pm_step(state, grad, step_size, gamma):
    """Multiplicative update of the positive/negative split (a+, a-).

    a+ is scaled by exp(-eta g) and a- by exp(+eta g) entrywise, which keeps
    the entrywise product a+ a- at its initial value (gamma/2)^2 exactly in
    exact arithmetic.
    """
    pos, neg = state
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if np.any(pos <= 0) or np.any(neg <= 0):
        raise ValueError("EG+/- state must be entrywise positive")
    target = (gamma / 2.0) ** 2
    if np.max(np.abs(pos * neg - target)) > 1e-8 * target:
        raise ValueError("EG+/- state violates the product invariant (gamma/2)^2")
    factor = np.exp(-step_size * grad)
    return pos * factor, neg / factor


def run_eg_pm(problem, gamma, step_size, n_steps):
    """Run EG+/- from the zero iterate; returns the (n_steps+1, m) iterates."""
    pos = np.full(problem.m, gamma / 2.0)
    neg = pos.copy()
    out = np.empty((n_steps + 1, problem.m))
    out[0] = pos - neg
    for t in range(n_steps):
        grad = risk_gradient(problem, pos - neg)
        pos, neg = eg_pm_step((pos, neg), grad, step_size, gamma)
        out[t + 1] = pos - neg
    return out


def kernel_md_step(kernel_problem, coef, step_size, allow_unsafe=False):
    """Specialized Gram update a - (eta/n) (K a - y); never inverts K."""
    coef = np.asarray(coef, dtype=float)
    if coef.shape != (kernel_problem.n,):
        raise ValueError(f"coefficient shape {coef.shape} != ({kernel_problem.n},)")
    cap = min(1.0, 1.0 / kernel_problem.max_scaled_eigval())
    if not allow_unsafe and not 0 < step_size <= cap:
        raise ValueError(
            f"step_size {step_size:g} outside (0, {cap:g}]; "
            "pass allow_unsafe=True to override"
        )
    resid = kernel_problem.gram @ coef - kernel_problem.labels
    return coef - (step_size / kernel_problem.n) * resid


def _map_dispatch(mirror_map):
    if isinstance(mirror_map, EuclideanMap):
        return {"kind": backend.MAP_EUCLIDEAN}
    if isinstance(mirror_map, QuadraticMap):
        if not mirror_map.invertible():
            return None
        dual_matrix = 2.0 * mirror_map.scale * mirror_map.matrix
        return {
            "kind": backend.MAP_QUADRATIC,
            "dual_matrix": np.ascontiguousarray(dual_matrix),
            "inverse_dual_matrix": np.ascontiguousarray(np.linalg.inv(dual_matrix)),
        }
    if isinstance(mirror_map, HypentropyMap):
        return {"kind": backend.MAP_HYPENTROPY, "gamma": mirror_map.gamma}
    return None


def _resolve_rule(stop_rule, epsilon, risk_threshold):
    if stop_rule == "gap":
        if epsilon is None or epsilon <= 0:
            raise ValueError("the gap rule needs epsilon > 0")
        return backend.RULE_GAP, float(epsilon)
    if stop_rule == "risk":
        if risk_threshold is None:
            raise ValueError("the risk rule needs risk_threshold")
        return backend.RULE_RISK, float(risk_threshold)
    if stop_rule == "none":
        return backend.RULE_NONE, 0.0
    raise ValueError(f"unknown stop_rule {stop_rule!r}")


def _gap_budget(mirror_map, problem, init, step_size, epsilon, reference):
    start = mirror_map.bregman(reference, init)
    return math.ceil(
        (start + step_size * empirical_risk(problem, reference))
        / (step_size * epsilon)
    )


def run_discrete(
    mirror_map,
    problem,
    init,
    step_size,
    epsilon=None,
    reference=None,
    max_iters=None,
    store_alphas=False,
    stop_rule="gap",
    risk_threshold=None,
):
    """Iterate discrete mirror descent until a stopping rule fires.

    stop_rule "gap" stops at the first t with delta_t + r_t <= epsilon (the
    data-dependent rule whose iteration budget is
    ceil((D(ref, a_0) + eta R_n(ref)) / (eta epsilon))); "risk" stops at the
    first t with R_n(a_t) <= risk_threshold; "none" runs to max_iters.
    Returns (Trajectory, StoppingReport); divergence raises DivergenceError
    carrying the finite prefix of the trajectory.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    init = np.ascontiguousarray(init, dtype=float)
    reference = np.ascontiguousarray(reference, dtype=float)
    if init.shape != (problem.m,) or reference.shape != (problem.m,):
        raise ValueError("init and reference must have the problem dimension")

    rule, threshold = _resolve_rule(stop_rule, epsilon, risk_threshold)
    budget = None
    if rule == backend.RULE_GAP:
        budget = _gap_budget(mirror_map, problem, init, step_size, epsilon, reference)
        if max_iters is None:
            max_iters = 2 * budget
    if max_iters is None:
        raise ValueError("max_iters is required for this stop rule")
    max_iters = int(max_iters)

    dispatch = _map_dispatch(mirror_map)
    if dispatch is not None:
        kind = dispatch.pop("kind")
        out = backend.run_dual_descent(
            kind,
            problem.design,
            problem.labels,
            init,
            float(step_size),
            max_iters,
            rule,
            threshold,
            reference,
            bool(store_alphas),
            **dispatch,
        )
    else:
        out = _run_generic(
            mirror_map,
            problem,
            init,
            float(step_size),
            max_iters,
            rule,
            threshold,
            reference,
            bool(store_alphas),
        )

    risk, delta, r, potential, alphas, last_alpha, code = out
    t_grid = np.arange(risk.shape[0], dtype=float)
    traj = Trajectory(
        t_grid, risk, delta, r, potential, alphas, step_size, reference, init,
        last_alpha=last_alpha,
    )
    if code == backend.CODE_DIVERGED:
        raise DivergenceError(
            f"run diverged after {len(traj)} recorded iterations", trajectory=traj
        )
    residual = (
        float(delta[-1] + r[-1]) if rule != backend.RULE_RISK else float(risk[-1])
    )
    report = StoppingReport(
        t_star=float(t_grid[-1]),
        epsilon=threshold,
        budget=budget,
        residual=residual,
        stopped_by=_CODE_NAMES[code],
    )
    return traj, report


def _run_generic(
    mirror_map, problem, init, step_size, max_iters, rule, threshold, reference,
    store_alphas,
):
    """Map-object loop for mirror maps without a specialized kernel."""
    design, labels = problem.design, problem.labels
    n = problem.n
    resid_ref = design @ reference - labels
    risk_ref = float(resid_ref @ resid_ref) / n

    size = max_iters + 1
    risk_arr = np.empty(size)
    delta_arr = np.empty(size)
    r_arr = np.empty(size)
    pot_arr = np.empty(size)
    alphas = np.empty((size, problem.m)) if store_alphas else None

    alpha = init.copy()
    theta = mirror_map.dual(alpha)
    code = backend.CODE_BUDGET
    count = 0
    for t in range(max_iters + 1):
        resid = design @ alpha - labels
        risk = float(resid @ resid) / n
        if not np.isfinite(risk):
            code = backend.CODE_DIVERGED
            break
        diff = resid - resid_ref
        r_val = float(diff @ diff) / n
        delta = risk - risk_ref
        potential = mirror_map.bregman(reference, alpha)

        risk_arr[t] = risk
        delta_arr[t] = delta
        r_arr[t] = r_val
        pot_arr[t] = potential
        if store_alphas:
            alphas[t] = alpha
        count = t + 1

        if rule == backend.RULE_GAP and delta + r_val <= threshold:
            code = backend.CODE_THRESHOLD
            break
        if rule == backend.RULE_RISK and risk <= threshold:
            code = backend.CODE_THRESHOLD
            break
        if t == max_iters:
            code = backend.CODE_BUDGET
            break

        theta = theta - (2.0 * step_size / n) * (design.T @ resid)
        try:
            alpha = mirror_map.dual_inverse(theta)
        except OverflowError:
            code = backend.CODE_DIVERGED
            break
        if not np.all(np.isfinite(alpha)):
            code = backend.CODE_DIVERGED
            break

    return (
        risk_arr[:count].copy(),
        delta_arr[:count].copy(),
        r_arr[:count].copy(),
        pot_arr[:count].copy(),
        alphas[:count].copy() if store_alphas else None,
        np.asarray(alpha, dtype=float).copy(),
        code,
    )


def run_kernel_discrete(
    kernel_problem,
    init,
    step_size,
    epsilon=None,
    reference=None,
    max_iters=None,
    store_alphas=False,
    stop_rule="gap",
    risk_threshold=None,
    allow_unsafe=False,
):
    """run_discrete twin for the specialized Gram update.

    Scalar records use the Gram-induced potential (ref - a)^T K (ref - a),
    the divergence of the quadratic potential a^T K a.
    """
    cap = min(1.0, 1.0 / kernel_problem.max_scaled_eigval())
    if not allow_unsafe and not 0 < step_size <= cap:
        raise ValueError(
            f"step_size {step_size:g} outside (0, {cap:g}]; "
            "pass allow_unsafe=True to override"
        )
    init = np.ascontiguousarray(init, dtype=float)
    reference = np.ascontiguousarray(reference, dtype=float)
    n = kernel_problem.n
    if init.shape != (n,) or reference.shape != (n,):
        raise ValueError("init and reference must have length n")

    rule, threshold = _resolve_rule(stop_rule, epsilon, risk_threshold)
    budget = None
    if rule == backend.RULE_GAP:
        diff = reference - init
        start = float(diff @ kernel_problem.gram @ diff)
        resid = kernel_problem.gram @ reference - kernel_problem.labels
        risk_ref = float(resid @ resid) / n
        budget = math.ceil((start + step_size * risk_ref) / (step_size * epsilon))
        if max_iters is None:
            max_iters = 2 * budget
    if max_iters is None:
        raise ValueError("max_iters is required for this stop rule")

    out = backend.run_kernel_descent(
        kernel_problem.gram,
        kernel_problem.labels,
        init,
        float(step_size),
        int(max_iters),
        rule,
        threshold,
        reference,
        bool(store_alphas),
    )
    risk, delta, r, potential, alphas, last_alpha, code = out
    t_grid = np.arange(risk.shape[0], dtype=float)
    traj = Trajectory(
        t_grid, risk, delta, r, potential, alphas, step_size, reference, init,
        last_alpha=last_alpha,
    )
    if code == backend.CODE_DIVERGED:
        raise DivergenceError(
            f"kernel run diverged after {len(traj)} recorded iterations",
            trajectory=traj,
        )
    residual = (
        float(delta[-1] + r[-1]) if rule != backend.RULE_RISK else float(risk[-1])
    )
    report = StoppingReport(
        t_star=float(t_grid[-1]),
        epsilon=threshold,
        budget=budget,
        residual=residual,
        stopped_by=_CODE_NAMES[code],
    )
    return traj, report


def run_continuous(
    mirror_map,
    problem,
    init,
    epsilon,
    reference,
    horizon=None,
    grid_step=None,
    store_alphas=False,
    stop_rule="gap",
):
    """Integrate the dual-variable flow d(dual)/dt = -grad R_n with RK4.

    The flow is linear in dual space, so integrating there avoids the
    per-step Hessian-inverse solves of the primal form.  With stop_rule
    "gap" the run stops at the first grid time with delta + r <= epsilon
    (budget 2 D(ref, a_0) / epsilon); "none" traces to the horizon.  The
    reported time can only bracket the true crossing from above by at most
    one grid step.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if stop_rule not in ("gap", "none"):
        raise ValueError(f"unknown stop_rule {stop_rule!r}")
    init = np.asarray(init, dtype=float)
    reference = np.asarray(reference, dtype=float)

    budget = 2.0 * mirror_map.bregman(reference, init) / epsilon
    if horizon is None:
        horizon = budget
    if grid_step is None:
        g0 = np.linalg.norm(risk_gradient(problem, init))
        grid_step = min(1e-3, epsilon / (10.0 * g0)) if g0 > 0 else 1e-3
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    n_steps = max(1, math.ceil(horizon / grid_step))

    design, labels = problem.design, problem.labels
    n = problem.n
    resid_ref = design @ reference - labels
    risk_ref = float(resid_ref @ resid_ref) / n

    def velocity(theta):
        a = mirror_map.dual_inverse(theta)
        resid = design @ a - labels
        return -(2.0 / n) * (design.T @ resid)

    size = n_steps + 1
    t_arr = np.empty(size)
    risk_arr = np.empty(size)
    delta_arr = np.empty(size)
    r_arr = np.empty(size)
    pot_arr = np.empty(size)
    alphas = np.empty((size, problem.m)) if store_alphas else None

    alpha = init.copy()
    theta = mirror_map.dual(alpha)
    h = float(grid_step)
    code = backend.CODE_BUDGET
    count = 0
    try:
        for k in range(n_steps + 1):
            resid = design @ alpha - labels
            risk = float(resid @ resid) / n
            if not np.isfinite(risk):
                code = backend.CODE_DIVERGED
                break
            diff = resid - resid_ref
            r_val = float(diff @ diff) / n
            delta = risk - risk_ref

            t_arr[k] = k * h
            risk_arr[k] = risk
            delta_arr[k] = delta
            r_arr[k] = r_val
            pot_arr[k] = mirror_map.bregman(reference, alpha)
            if store_alphas:
                alphas[k] = alpha
            count = k + 1

            if stop_rule == "gap" and delta + r_val <= epsilon:
                code = backend.CODE_THRESHOLD
                break
            if k == n_steps:
                code = backend.CODE_BUDGET
                break

            k1 = velocity(theta)
            k2 = velocity(theta + 0.5 * h * k1)
            k3 = velocity(theta + 0.5 * h * k2)
            k4 = velocity(theta + h * k3)
            theta = theta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            alpha = mirror_map.dual_inverse(theta)
    except OverflowError:
        code = backend.CODE_DIVERGED

    traj = Trajectory(
        t_arr[:count],
        risk_arr[:count],
        delta_arr[:count],
        r_arr[:count],
        pot_arr[:count],
        alphas[:count].copy() if store_alphas else None,
        h,
        reference,
        init,
        last_alpha=np.asarray(alpha, dtype=float).copy(),
    )
    if code == backend.CODE_DIVERGED:
        raise DivergenceError(
            f"flow diverged after {len(traj)} grid points", trajectory=traj
        )
    report = StoppingReport(
        t_star=float(t_arr[count - 1]),
        epsilon=float(epsilon),
        budget=budget,
        residual=float(delta_arr[count - 1] + r_arr[count - 1]),
        stopped_by=_CODE_NAMES[code],
    )
    return traj, report


def first_crossing(trajectory, epsilon):
    """Index of the first record with delta + r <= epsilon, or None."""
    hits = np.nonzero(trajectory.gap() <= epsilon)[0]
    return int(hits[0]) if hits.size else None


@dataclass
class L1Schedule:
    """Hyperparameters for sparsity-friendly hypentropy descent at scale n.

    error_bound is the in-sample prediction guarantee
    36 kappa l1_norm noise_sd sqrt(log d) / sqrt(n) * log(3/gamma) that the
    rate experiment tests against; epsilon is the matching gap threshold
    ball_radius * kappa * noise_sd * sqrt(log d) / sqrt(n).
    """

    gamma: float
    step_size: float
    budget: float
    epsilon: float
    ball_radius: float
    error_bound: float


def l1_hyperparameters(col_bound, l1_norm, noise_sd, dim, n):
    """Schedule gamma, step size, and iteration budget from problem scales.

    gamma = (l1_norm ^ 1) / (3 e^2 dim);
    step = min(1 / (24 kappa^2 l1_norm log(3/gamma)), l1_norm / (2 sigma^2));
    budget = sqrt(n) / (step * 3 kappa sigma sqrt(log dim)).
    """
    if min(col_bound, l1_norm, dim, n) <= 0 or noise_sd < 0:
        raise ValueError("all schedule inputs must be positive (noise_sd >= 0)")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    gamma = min(l1_norm, 1.0) / (3.0 * math.e**2 * dim)
    log_term = math.log(3.0 / gamma)
    smooth_cap = 1.0 / (24.0 * col_bound**2 * l1_norm * log_term)
    noise_cap = l1_norm / (2.0 * noise_sd**2) if noise_sd > 0 else math.inf
    step = min(smooth_cap, noise_cap)
    root_log_dim = math.sqrt(math.log(dim))
    if noise_sd > 0:
        budget = math.sqrt(n) / (step * 3.0 * col_bound * noise_sd * root_log_dim)
        epsilon = (
            6.0 * l1_norm * log_term * col_bound * noise_sd * root_log_dim
            / math.sqrt(n)
        )
        error_bound = (
            36.0 * col_bound * l1_norm * noise_sd * root_log_dim / math.sqrt(n)
            * log_term
        )
    else:
        budget = math.inf
        epsilon = 0.0
        error_bound = 0.0
    return L1Schedule(
        gamma=gamma,
        step_size=step,
        budget=budget,
        epsilon=epsilon,
        ball_radius=6.0 * l1_norm * log_term,
        error_bound=error_bound,
    )
