import json
import math

import numpy as np
import pytest

from mdes import (
    DivergenceError,
    EuclideanMap,
    HypentropyMap,
    KernelProblem,
    QuadraticMap,
    RegressionProblem,
    eg_pm_step,
    empirical_risk,
    first_crossing,
    kernel_md_step,
    l1_hyperparameters,
    md_step,
    rbf_gram,
    risk_gradient,
    run_continuous,
    run_discrete,
    run_eg_pm,
    run_kernel_discrete,
    sample_problem,
    sparse_sign_law,
)
from mdes.engine import STOP_BUDGET, STOP_THRESHOLD


def _random_problem(rng, n, m):
    return RegressionProblem(rng.standard_normal((n, m)), rng.standard_normal(n))


def test_md_step_euclidean_is_gradient_descent():
    rng = np.random.default_rng(20)
    p = _random_problem(rng, 12, 5)
    coef = rng.standard_normal(5)
    stepped = md_step(EuclideanMap(), p, coef, 0.1)
    expected = coef - 0.1 * risk_gradient(p, coef)
    assert np.max(np.abs(stepped - expected)) <= 1e-12


def test_md_step_fixed_point_at_zero_gradient():
    rng = np.random.default_rng(21)
    p = _random_problem(rng, 12, 4)
    lsq = np.linalg.lstsq(p.design, p.labels, rcond=None)[0]
    stepped = md_step(QuadraticMap(np.eye(4), 0.5), p, lsq, 0.3)
    assert np.max(np.abs(stepped - lsq)) <= 1e-10


def test_md_step_hypentropy_matches_eg_pm():
    rng = np.random.default_rng(22)
    p = _random_problem(rng, 10, 4)
    gamma = 1e-3
    coef = np.zeros(4)
    pos = np.full(4, gamma / 2.0)
    neg = pos.copy()
    for _ in range(3):
        grad = risk_gradient(p, coef)
        coef = md_step(HypentropyMap(gamma), p, coef, 1e-2)
        pos, neg = eg_pm_step((pos, neg), grad, 1e-2, gamma)
    assert np.max(np.abs(coef - (pos - neg))) <= 1e-10


def test_eg_pm_step_zero_gradient_and_init():
    gamma = 0.05
    pos = np.full(3, gamma / 2.0)
    neg = pos.copy()
    assert np.allclose(pos - neg, 0.0)
    new_pos, new_neg = eg_pm_step((pos, neg), np.zeros(3), 0.1, gamma)
    assert np.array_equal(new_pos, pos)
    assert np.array_equal(new_neg, neg)


def test_eg_pm_step_validates_state():
    gamma = 0.1
    with pytest.raises(ValueError):
        eg_pm_step((np.array([-1.0]), np.array([1.0])), np.zeros(1), 0.1, gamma)
    with pytest.raises(ValueError):
        eg_pm_step((np.array([1.0]), np.array([1.0])), np.zeros(1), 0.1, gamma)


def test_eg_pm_full_run_equivalence_and_product_invariant():
    rng = np.random.default_rng(23)
    p = _random_problem(rng, 20, 8)
    gamma, step, steps = 1e-3, 1e-2, 200
    eg_iterates = run_eg_pm(p, gamma, step, steps)
    traj, _ = run_discrete(
        HypentropyMap(gamma),
        p,
        np.zeros(8),
        step,
        reference=np.zeros(8),
        stop_rule="none",
        max_iters=steps,
        store_alphas=True,
    )
    assert np.max(np.abs(eg_iterates - traj.alphas)) <= 1e-8

    pos = np.full(8, gamma / 2.0)
    neg = pos.copy()
    target = (gamma / 2.0) ** 2
    for t in range(steps):
        grad = risk_gradient(p, pos - neg)
        pos, neg = eg_pm_step((pos, neg), grad, step, gamma)
        assert np.max(np.abs(pos * neg - target)) <= 1e-6 * target


def test_kernel_md_step_identity_gram():
    labels = np.array([1.0, -2.0, 0.5])
    kp = KernelProblem(np.eye(3), labels)
    coef = np.array([0.2, 0.1, -0.4])
    stepped = kernel_md_step(kp, coef, 0.9)
    assert np.allclose(stepped, coef - (0.9 / 3) * (coef - labels))


def test_kernel_md_step_fixed_point_and_first_step():
    rng = np.random.default_rng(24)
    gram = rbf_gram(rng.uniform(size=(10, 1)), 0.4)
    gram = gram + 1e-8 * np.eye(10)
    labels = rng.standard_normal(10)
    kp = KernelProblem(gram, labels)
    eta = min(1.0, 1.0 / kp.max_scaled_eigval())
    solution = np.linalg.solve(gram, labels)
    assert np.max(np.abs(kernel_md_step(kp, solution, eta) - solution)) <= 1e-6
    assert np.allclose(kernel_md_step(kp, np.zeros(10), eta), (eta / 10) * labels)


def test_kernel_md_step_rejects_bad_step_size():
    kp = KernelProblem(np.eye(2) * 4.0, np.ones(2))
    cap = min(1.0, 1.0 / kp.max_scaled_eigval())
    with pytest.raises(ValueError):
        kernel_md_step(kp, np.zeros(2), cap * 1.5)
    kernel_md_step(kp, np.zeros(2), cap * 1.5, allow_unsafe=True)


def test_run_discrete_immediate_stop():
    rng = np.random.default_rng(25)
    p = _random_problem(rng, 8, 3)
    ref = rng.standard_normal(3)
    traj, report = run_discrete(
        EuclideanMap(), p, ref.copy(), 0.05, epsilon=0.5, reference=ref
    )
    assert report.t_star == 0
    assert report.stopped_by == STOP_THRESHOLD
    assert len(traj) == 1


def test_run_discrete_budget_arithmetic():
    # potential 1, step 0.1, reference risk 2, epsilon 1 -> ceil(1.2/0.1) = 12
    p = RegressionProblem([[1.0]], [0.0])
    ref = np.array([math.sqrt(2.0)])
    assert empirical_risk(p, ref) == pytest.approx(2.0)
    traj, report = run_discrete(
        EuclideanMap(), p, np.zeros(1), 0.1, epsilon=1.0, reference=ref
    )
    assert report.budget == 12


def test_run_discrete_threshold_within_budget_and_confinement():
    law = sparse_sign_law(20, 4, 1.0)
    for seed in range(10):
        p = sample_problem(law, 60, seed)
        top = float(np.linalg.eigvalsh(p.design.T @ p.design / p.n).max())
        step = 1.0 / (2.0 * top)
        eps = 0.25
        traj, report = run_discrete(
            EuclideanMap(), p, np.zeros(20), step, epsilon=eps,
            reference=law.true_param,
        )
        assert report.stopped_by == STOP_THRESHOLD
        assert report.t_star <= report.budget
        assert report.residual <= eps
        cap = traj.potential[0] + step * empirical_risk(p, law.true_param) + 1e-8
        assert np.all(traj.potential <= cap)


def test_run_discrete_potential_drop_inequality():
    law = sparse_sign_law(12, 3, 0.5)
    p = sample_problem(law, 40, 3)
    top = float(np.linalg.eigvalsh(p.design.T @ p.design / p.n).max())
    step = 1.0 / (2.0 * top)
    traj, _ = run_discrete(
        EuclideanMap(), p, np.zeros(12), step, epsilon=0.05,
        reference=law.true_param,
    )
    drop = traj.potential[:-1] - traj.potential[1:]
    required = step * (traj.delta[1:] + traj.r[:-1])
    slack = 1e-8 * (1.0 + traj.potential[:-1])
    assert np.all(drop >= required - slack)


def test_run_discrete_risk_rule():
    rng = np.random.default_rng(26)
    p = _random_problem(rng, 30, 2)
    lsq = np.linalg.lstsq(p.design, p.labels, rcond=None)[0]
    threshold = empirical_risk(p, lsq) * 1.5
    traj, report = run_discrete(
        QuadraticMap(np.eye(2), 0.5),
        p,
        np.zeros(2),
        0.05,
        reference=lsq,
        stop_rule="risk",
        risk_threshold=threshold,
        max_iters=10**5,
    )
    assert report.stopped_by == STOP_THRESHOLD
    assert traj.risk[-1] <= threshold
    assert np.all(traj.risk[:-1] > threshold)


def test_run_discrete_divergence_carries_prefix():
    rng = np.random.default_rng(27)
    p = _random_problem(rng, 10, 3)
    with pytest.raises(DivergenceError) as err:
        run_discrete(
            EuclideanMap(), p, np.zeros(3), 1e6, epsilon=1e-9,
            reference=np.zeros(3), max_iters=500,
        )
    assert err.value.trajectory is not None
    assert len(err.value.trajectory) >= 1
    assert np.all(np.isfinite(err.value.trajectory.risk))


def test_run_discrete_hypentropy_divergence_via_sinh_cap():
    rng = np.random.default_rng(28)
    p = _random_problem(rng, 10, 3)
    with pytest.raises(DivergenceError):
        run_discrete(
            HypentropyMap(1e-4), p, np.zeros(3), 1e5, epsilon=1e-12,
            reference=np.zeros(3), max_iters=10**4,
        )


def test_run_kernel_discrete_gap_rule():
    rng = np.random.default_rng(29)
    gram = rbf_gram(rng.uniform(size=(25, 1)), 0.3)
    labels = np.sin(2 * np.pi * rng.uniform(size=25))
    kp = KernelProblem(gram, labels)
    eta = min(1.0, 1.0 / kp.max_scaled_eigval())
    ref = np.linalg.lstsq(gram, labels, rcond=None)[0] * 0.5
    traj, report = run_kernel_discrete(
        kp, np.zeros(25), eta, epsilon=0.1, reference=ref
    )
    assert report.stopped_by == STOP_THRESHOLD
    assert report.t_star <= report.budget
    assert report.residual <= 0.1
    # potential is the Gram quadratic divergence
    diff = ref - traj.alphas[0] if traj.alphas is not None else ref
    assert traj.potential[0] == pytest.approx(float(diff @ gram @ diff))


def test_run_continuous_matches_closed_form_flow():
    z, y0, a0 = 1.3, 0.7, 2.0
    p = RegressionProblem([[z]], [y0])
    traj, _ = run_continuous(
        EuclideanMap(),
        p,
        np.array([a0]),
        epsilon=1e-6,
        reference=np.array([y0 / z]),
        horizon=1.0,
        grid_step=1e-3,
        store_alphas=True,
        stop_rule="none",
    )
    rate = 2.0 * z * z
    target = y0 / z
    closed = target + (a0 - target) * np.exp(-rate * traj.t)
    assert np.max(np.abs(traj.alphas[:, 0] - closed)) <= 1e-6


def test_run_continuous_constant_at_zero_gradient():
    rng = np.random.default_rng(30)
    p = _random_problem(rng, 10, 3)
    lsq = np.linalg.lstsq(p.design, p.labels, rcond=None)[0]
    traj, _ = run_continuous(
        EuclideanMap(), p, lsq, epsilon=1e-3, reference=np.zeros(3),
        horizon=0.5, grid_step=1e-2, store_alphas=True, stop_rule="none",
    )
    assert np.max(np.abs(traj.alphas - lsq)) <= 1e-9


def test_run_continuous_budget_arithmetic():
    p = RegressionProblem([[1.0]], [0.0])
    ref = np.array([math.sqrt(2.0)])  # euclidean potential from zero is 1
    traj, report = run_continuous(
        EuclideanMap(), p, np.zeros(1), epsilon=0.5, reference=ref,
        grid_step=1e-2,
    )
    assert report.budget == pytest.approx(4.0)


def test_run_continuous_stopping_and_confinement():
    law = sparse_sign_law(8, 2, 0.5)
    p = sample_problem(law, 30, 11)
    traj, report = run_continuous(
        EuclideanMap(), p, np.zeros(8), epsilon=0.3, reference=law.true_param,
        grid_step=1e-3,
    )
    assert report.stopped_by == STOP_THRESHOLD
    assert report.t_star <= report.budget
    assert report.residual <= 0.3
    assert np.all(traj.potential <= traj.potential[0] + 1e-4)


def test_first_crossing():
    law = sparse_sign_law(8, 2, 0.5)
    p = sample_problem(law, 30, 12)
    traj, _ = run_discrete(
        EuclideanMap(), p, np.zeros(8), 0.05, reference=law.true_param,
        stop_rule="none", max_iters=200,
    )
    idx = first_crossing(traj, 0.5)
    assert idx is not None
    assert traj.gap()[idx] <= 0.5
    assert np.all(traj.gap()[:idx] > 0.5)
    assert first_crossing(traj, -1.0) is None


def test_l1_hyperparameters_hand_values():
    sched = l1_hyperparameters(1.0, 10.0, 1.0, 100, 400)
    assert sched.gamma == pytest.approx(1.0 / (300.0 * math.e**2))
    assert sched.gamma == pytest.approx(4.5111761078870895e-4)
    log_term = math.log(3.0 / sched.gamma)
    assert sched.step_size == pytest.approx(
        min(1.0 / (24.0 * 10.0 * log_term), 10.0 / 2.0)
    )
    assert sched.budget == pytest.approx(
        20.0 / (sched.step_size * 3.0 * math.sqrt(math.log(100)))
    )
    assert sched.ball_radius == pytest.approx(60.0 * log_term)
    assert sched.error_bound == pytest.approx(
        36.0 * 10.0 * math.sqrt(math.log(100)) / 20.0 * log_term
    )


def test_l1_hyperparameters_noise_monotonicity():
    steps = [
        l1_hyperparameters(1.0, 10.0, sd, 100, 400).step_size
        for sd in (0.5, 1.0, 2.0, 8.0, 32.0)
    ]
    assert all(a >= b for a, b in zip(steps, steps[1:]))
    with pytest.raises(ValueError):
        l1_hyperparameters(1.0, 10.0, 1.0, 1, 400)


def test_trajectory_csv_and_report_json(tmp_path):
    law = sparse_sign_law(6, 2, 0.5)
    p = sample_problem(law, 20, 13)
    traj, report = run_discrete(
        EuclideanMap(), p, np.zeros(6), 0.05, epsilon=0.5,
        reference=law.true_param,
    )
    csv_path = tmp_path / "trace.csv"
    traj.to_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,risk,delta,r,potential"
    assert len(lines) == len(traj) + 1
    first = lines[1].split(",")
    assert float(first[1]) == traj.risk[0]

    payload = json.loads(report.to_json(tmp_path / "report.json"))
    assert payload["stopped_by"] == STOP_THRESHOLD
    assert payload["t_star"] == report.t_star


def test_run_discrete_budget_exhaustion_reported():
    rng = np.random.default_rng(31)
    p = _random_problem(rng, 15, 4)
    traj, report = run_discrete(
        EuclideanMap(), p, np.zeros(4), 1e-5, epsilon=1e-8,
        reference=rng.standard_normal(4), max_iters=25,
    )
    assert report.stopped_by == STOP_BUDGET
    assert report.t_star == 25
    assert len(traj) == 26
