# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled iteration kernels for the descent loops.

Same contract as mdes._kernels_py; selected automatically at import when the
extension has been built (see mdes.backend).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport asinh, fabs, isfinite, sinh, sqrt
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

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

cdef double _CAP = 700.0


cdef void _mat_vec(const double[:, ::1] mat, const double[::1] x, double[::1] out) noexcept nogil:
    # out = mat @ x for C-contiguous mat; in Fortran view mat is its transpose
    cdef int m = <int>mat.shape[1]
    cdef int n = <int>mat.shape[0]
    cdef int inc = 1
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char trans = b'T'
    dgemv(&trans, &m, &n, &one, <double*>&mat[0, 0], &m, <double*>&x[0], &inc,
          &zero, &out[0], &inc)


cdef void _mat_t_vec(const double[:, ::1] mat, const double[::1] x, double[::1] out) noexcept nogil:
    # out = mat.T @ x
    cdef int m = <int>mat.shape[1]
    cdef int n = <int>mat.shape[0]
    cdef int inc = 1
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char trans = b'N'
    dgemv(&trans, &m, &n, &one, <double*>&mat[0, 0], &m, <double*>&x[0], &inc,
          &zero, &out[0], &inc)


def run_dual_descent(
    int kind,
    const double[:, ::1] design,
    const double[::1] labels,
    const double[::1] init,
    double step_size,
    long max_iters,
    int rule,
    double threshold,
    const double[::1] reference,
    bint store_alphas,
    const double[:, ::1] dual_matrix=None,
    const double[:, ::1] inverse_dual_matrix=None,
    double gamma=0.0,
):
    cdef Py_ssize_t n = design.shape[0]
    cdef Py_ssize_t m = design.shape[1]
    cdef double inv_n = 1.0 / n
    cdef Py_ssize_t i, t
    cdef double risk, r_val, delta, potential, acc, d, risk_ref, ref_root_sum
    cdef int code = CODE_BUDGET
    cdef Py_ssize_t count = 0
    cdef bint diverged

    resid_np = np.empty(n)
    resid_ref_np = np.empty(n)
    grad_np = np.empty(m)
    alpha_np = np.asarray(init, dtype=float).copy()
    theta_np = np.empty(m)
    theta_ref_np = np.empty(m)
    cdef double[::1] resid = resid_np
    cdef double[::1] resid_ref = resid_ref_np
    cdef double[::1] grad = grad_np
    cdef double[::1] alpha = alpha_np
    cdef double[::1] theta = theta_np
    cdef double[::1] theta_ref = theta_ref_np

    # reference quantities
    _mat_vec(design, reference, resid_ref)
    acc = 0.0
    for i in range(n):
        resid_ref[i] -= labels[i]
        acc += resid_ref[i] * resid_ref[i]
    risk_ref = acc * inv_n

    if kind == MAP_QUADRATIC:
        _mat_vec(dual_matrix, reference, theta_ref)
        _mat_vec(dual_matrix, alpha, theta)
    elif kind == MAP_HYPENTROPY:
        for i in range(m):
            theta_ref[i] = asinh(reference[i] / gamma)
            theta[i] = asinh(alpha[i] / gamma)
    else:
        for i in range(m):
            theta_ref[i] = reference[i]
            theta[i] = alpha[i]

    ref_root_sum = 0.0
    if kind == MAP_HYPENTROPY:
        for i in range(m):
            ref_root_sum += sqrt(reference[i] * reference[i] + gamma * gamma)

    cdef Py_ssize_t size = max_iters + 1
    risk_arr_np = np.empty(size)
    delta_arr_np = np.empty(size)
    r_arr_np = np.empty(size)
    pot_arr_np = np.empty(size)
    cdef double[::1] risk_arr = risk_arr_np
    cdef double[::1] delta_arr = delta_arr_np
    cdef double[::1] r_arr = r_arr_np
    cdef double[::1] pot_arr = pot_arr_np
    alphas_np = np.empty((size, m)) if store_alphas else None
    cdef double[:, ::1] alphas = alphas_np if store_alphas else None

    for t in range(max_iters + 1):
        _mat_vec(design, alpha, resid)
        acc = 0.0
        for i in range(n):
            resid[i] -= labels[i]
            acc += resid[i] * resid[i]
        risk = acc * inv_n
        if not isfinite(risk):
            code = CODE_DIVERGED
            break
        acc = 0.0
        for i in range(n):
            d = resid[i] - resid_ref[i]
            acc += d * d
        r_val = acc * inv_n
        delta = risk - risk_ref

        if kind == MAP_HYPENTROPY:
            acc = 0.0
            for i in range(m):
                acc += reference[i] * (theta_ref[i] - theta[i])
                acc += sqrt(alpha[i] * alpha[i] + gamma * gamma)
            potential = acc - ref_root_sum
        else:
            acc = 0.0
            for i in range(m):
                acc += (reference[i] - alpha[i]) * (theta_ref[i] - theta[i])
            potential = 0.5 * acc

        risk_arr[t] = risk
        delta_arr[t] = delta
        r_arr[t] = r_val
        pot_arr[t] = potential
        if store_alphas:
            for i in range(m):
                alphas[t, i] = alpha[i]
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

        _mat_t_vec(design, resid, grad)
        for i in range(m):
            theta[i] -= 2.0 * step_size * inv_n * grad[i]
        if kind == MAP_EUCLIDEAN:
            for i in range(m):
                alpha[i] = theta[i]
        elif kind == MAP_QUADRATIC:
            _mat_vec(inverse_dual_matrix, theta, alpha)
        else:
            diverged = False
            for i in range(m):
                if fabs(theta[i]) > _CAP:
                    diverged = True
                    break
            if diverged:
                code = CODE_DIVERGED
                break
            for i in range(m):
                alpha[i] = gamma * sinh(theta[i])

    return (
        risk_arr_np[:count].copy(),
        delta_arr_np[:count].copy(),
        r_arr_np[:count].copy(),
        pot_arr_np[:count].copy(),
        alphas_np[:count].copy() if store_alphas else None,
        alpha_np.copy(),
        code,
    )


def run_kernel_descent(
    const double[:, ::1] gram,
    const double[::1] labels,
    const double[::1] init,
    double step_size,
    long max_iters,
    int rule,
    double threshold,
    const double[::1] reference,
    bint store_alphas,
):
    cdef Py_ssize_t n = gram.shape[0]
    cdef double inv_n = 1.0 / n
    cdef Py_ssize_t i, t
    cdef double risk, r_val, delta, potential, acc, d, risk_ref
    cdef int code = CODE_BUDGET
    cdef Py_ssize_t count = 0

    gram_alpha_np = np.empty(n)
    gram_ref_np = np.empty(n)
    resid_np = np.empty(n)
    resid_ref_np = np.empty(n)
    alpha_np = np.asarray(init, dtype=float).copy()
    cdef double[::1] gram_alpha = gram_alpha_np
    cdef double[::1] gram_ref = gram_ref_np
    cdef double[::1] resid = resid_np
    cdef double[::1] resid_ref = resid_ref_np
    cdef double[::1] alpha = alpha_np

    _mat_vec(gram, reference, gram_ref)
    acc = 0.0
    for i in range(n):
        resid_ref[i] = gram_ref[i] - labels[i]
        acc += resid_ref[i] * resid_ref[i]
    risk_ref = acc * inv_n

    cdef Py_ssize_t size = max_iters + 1
    risk_arr_np = np.empty(size)
    delta_arr_np = np.empty(size)
    r_arr_np = np.empty(size)
    pot_arr_np = np.empty(size)
    cdef double[::1] risk_arr = risk_arr_np
    cdef double[::1] delta_arr = delta_arr_np
    cdef double[::1] r_arr = r_arr_np
    cdef double[::1] pot_arr = pot_arr_np
    alphas_np = np.empty((size, n)) if store_alphas else None
    cdef double[:, ::1] alphas = alphas_np if store_alphas else None

    for t in range(max_iters + 1):
        _mat_vec(gram, alpha, gram_alpha)
        acc = 0.0
        for i in range(n):
            resid[i] = gram_alpha[i] - labels[i]
            acc += resid[i] * resid[i]
        risk = acc * inv_n
        if not isfinite(risk):
            code = CODE_DIVERGED
            break
        acc = 0.0
        for i in range(n):
            d = resid[i] - resid_ref[i]
            acc += d * d
        r_val = acc * inv_n
        delta = risk - risk_ref
        acc = 0.0
        for i in range(n):
            acc += (reference[i] - alpha[i]) * (gram_ref[i] - gram_alpha[i])
        potential = acc

        risk_arr[t] = risk
        delta_arr[t] = delta
        r_arr[t] = r_val
        pot_arr[t] = potential
        if store_alphas:
            for i in range(n):
                alphas[t, i] = alpha[i]
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

        for i in range(n):
            alpha[i] -= step_size * inv_n * resid[i]

    return (
        risk_arr_np[:count].copy(),
        delta_arr_np[:count].copy(),
        r_arr_np[:count].copy(),
        pot_arr_np[:count].copy(),
        alphas_np[:count].copy() if store_alphas else None,
        alpha_np.copy(),
        code,
    )
