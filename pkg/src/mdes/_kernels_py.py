"""Pure-NumPy iteration kernels; fallback when the compiled module is absent.

Mirrors mdes._speedups operation for operation so both backends trace the
same floating-point path wherever the underlying BLAS allows.
"""
import numpy as np

MAP_EUCLIDEAN = 0
MAP_QUADRATIC = 1
MAP_HYPENTROPY = 2

RULE_GAP = 0
RULE_RISK = 1
RULE_NONE = 2

CODE_THRESHOLD = 0
CODE_BUDGET = 1
CODE_DIVERGED = 2

SINH_ARG_CAP = 700.0


def _dual(kind, point, dual_matrix, gamma):
    if kind == MAP_EUCLIDEAN:
        return point.copy()
    if kind == MAP_QUADRATIC:
        return dual_matrix @ point
    return np.arcsinh(point / gamma)


def run_dual_descent(
    kind,
    design,
    labels,
    init,
    step_size,
    max_iters,
    rule,
    threshold,
    reference,
    store_alphas,
    dual_matrix=None,
    inverse_dual_matrix=None,
    gamma=0.0,
):
    """Dual-space descent loop with per-step scalar records and stop rules.

    Returns (risk, delta, r, potential, alphas-or-None, last_alpha, code)
    where the arrays cover iterations 0..t_stop and code signals threshold
    stop, exhausted budget, or divergence (arrays then hold the finite
    prefix; last_alpha is the state at abort and may be non-finite).
    """
    n, m = design.shape
    inv_n = 1.0 / n

    resid_ref = design @ reference - labels
    risk_ref = float(resid_ref @ resid_ref) * inv_n
    theta_ref = _dual(kind, reference, dual_matrix, gamma)
    ref_root_sum = (
        float(np.sum(np.sqrt(reference**2 + gamma**2)))
        if kind == MAP_HYPENTROPY
        else 0.0
    )

    size = max_iters + 1
    risk_arr = np.empty(size)
    delta_arr = np.empty(size)
    r_arr = np.empty(size)
    pot_arr = np.empty(size)
    alphas = np.empty((size, m)) if store_alphas else None

    alpha = init.astype(float).copy()
    theta = _dual(kind, alpha, dual_matrix, gamma)
    code = CODE_BUDGET
    count = 0

    for t in range(max_iters + 1):
        resid = design @ alpha - labels
        risk = float(resid @ resid) * inv_n
        if not np.isfinite(risk):
            code = CODE_DIVERGED
            break
        diff = resid - resid_ref
        r_val = float(diff @ diff) * inv_n
        delta = risk - risk_ref
        if kind == MAP_HYPENTROPY:
            potential = (
                float(reference @ (theta_ref - theta))
                - ref_root_sum
                + float(np.sum(np.sqrt(alpha**2 + gamma**2)))
            )
        else:
            potential = 0.5 * float((reference - alpha) @ (theta_ref - theta))

        risk_arr[t] = risk
        delta_arr[t] = delta
        r_arr[t] = r_val
        pot_arr[t] = potential
        if store_alphas:
            alphas[t] = alpha
        count = t + 1

        if rule == RULE_GAP and delta + r_val <= threshold:
            code = CODE_THRESHOLD
            break
        if rule == RULE_RISK and risk <= threshold:
            code = CODE_THRESHOLD
            break
        if t == max_iters:
            code = CODE_BUDGET
            break

        grad = design.T @ resid
        theta -= (2.0 * step_size * inv_n) * grad
        if kind == MAP_EUCLIDEAN:
            alpha = theta.copy()
        elif kind == MAP_QUADRATIC:
            alpha = inverse_dual_matrix @ theta
        else:
            if np.max(np.abs(theta)) > SINH_ARG_CAP:
                code = CODE_DIVERGED
                break
            alpha = gamma * np.sinh(theta)

    return (
        risk_arr[:count].copy(),
        delta_arr[:count].copy(),
        r_arr[:count].copy(),
        pot_arr[:count].copy(),
        alphas[:count].copy() if store_alphas else None,
        alpha.copy(),
        code,
    )


def run_kernel_descent(
    gram, labels, init, step_size, max_iters, rule, threshold, reference, store_alphas
):
    """Specialized affine Gram update a <- a - (eta/n) (K a - y); never solves K.

    Scalar records use the Gram-induced potential (ref - a)^T K (ref - a).
    """
    n = gram.shape[0]
    inv_n = 1.0 / n

    gram_ref = gram @ reference
    resid_ref = gram_ref - labels
    risk_ref = float(resid_ref @ resid_ref) * inv_n

    size = max_iters + 1
    risk_arr = np.empty(size)
    delta_arr = np.empty(size)
    r_arr = np.empty(size)
    pot_arr = np.empty(size)
    alphas = np.empty((size, n)) if store_alphas else None

    alpha = init.astype(float).copy()
    code = CODE_BUDGET
    count = 0

    for t in range(max_iters + 1):
        gram_alpha = gram @ alpha
        resid = gram_alpha - labels
        risk = float(resid @ resid) * inv_n
        if not np.isfinite(risk):
            code = CODE_DIVERGED
            break
        diff = resid - resid_ref
        r_val = float(diff @ diff) * inv_n
        delta = risk - risk_ref
        potential = float((reference - alpha) @ (gram_ref - gram_alpha))

        risk_arr[t] = risk
        delta_arr[t] = delta
        r_arr[t] = r_val
        pot_arr[t] = potential
        if store_alphas:
            alphas[t] = alpha
        count = t + 1

        if rule == RULE_GAP and delta + r_val <= threshold:
            code = CODE_THRESHOLD
            break
        if rule == RULE_RISK and risk <= threshold:
            code = CODE_THRESHOLD
            break
        if t == max_iters:
            code = CODE_BUDGET
            break

        alpha = alpha - (step_size * inv_n) * resid

    return (
        risk_arr[:count].copy(),
        delta_arr[:count].copy(),
        r_arr[:count].copy(),
        pot_arr[:count].copy(),
        alphas[:count].copy() if store_alphas else None,
        alpha.copy(),
        code,
    )
