import numpy as np
import pytest

from mdes import (
    GaussianLinearLaw,
    RegressionProblem,
    empirical_distance_sq,
    empirical_risk,
    gradient_alignment_sides,
    load_problem,
    population_risk,
    rbf_gram,
    risk_gradient,
    sample_problem,
    save_problem,
    sparse_sign_law,
)

FIG2_LAW = GaussianLinearLaw([[1.0, 1.0], [1.0, 2.0]], [1.5, 0.5], 0.5)


def _random_problem(rng, n, m):
    return RegressionProblem(rng.standard_normal((n, m)), rng.standard_normal(n))


def test_empirical_risk_interpolating_parameter():
    p = RegressionProblem([[1.0]], [2.0])
    assert empirical_risk(p, [2.0]) == 0.0


def test_empirical_risk_hand_value():
    p = RegressionProblem([[1.0], [1.0]], [0.0, 2.0])
    assert empirical_risk(p, [1.0]) == pytest.approx(1.0)


def test_empirical_risk_zero_parameter():
    rng = np.random.default_rng(0)
    p = _random_problem(rng, 9, 4)
    assert empirical_risk(p, np.zeros(4)) == pytest.approx(
        float(p.labels @ p.labels) / p.n
    )


def test_empirical_risk_dimension_mismatch():
    p = RegressionProblem([[1.0, 0.0]], [1.0])
    with pytest.raises(ValueError):
        empirical_risk(p, [1.0])


def test_risk_gradient_zero_at_least_squares():
    rng = np.random.default_rng(1)
    p = _random_problem(rng, 12, 5)
    lsq = np.linalg.lstsq(p.design, p.labels, rcond=None)[0]
    assert np.linalg.norm(risk_gradient(p, lsq)) <= 1e-8


def test_risk_gradient_hand_value():
    p = RegressionProblem([[1.0]], [0.0])
    assert risk_gradient(p, [1.0]) == pytest.approx([2.0])


def test_risk_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    p = _random_problem(rng, 7, 4)
    coef = rng.standard_normal(4)
    grad = risk_gradient(p, coef)
    h = 1e-6
    for i in range(4):
        bump = np.zeros(4)
        bump[i] = h
        fd = (empirical_risk(p, coef + bump) - empirical_risk(p, coef - bump)) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-5 * (1 + abs(grad[i]))


def test_alignment_identity_coincident_points():
    rng = np.random.default_rng(3)
    p = _random_problem(rng, 6, 3)
    coef = rng.standard_normal(3)
    lhs, rhs = gradient_alignment_sides(p, coef, coef)
    assert lhs == pytest.approx(0.0, abs=1e-14)
    assert rhs == pytest.approx(0.0, abs=1e-14)


def test_alignment_identity_hand_value():
    p = RegressionProblem([[1.0]], [0.0])
    lhs, rhs = gradient_alignment_sides(p, [1.0], [0.0])
    assert lhs == pytest.approx(2.0)
    assert rhs == pytest.approx(2.0)


def test_alignment_identity_on_many_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        p = _random_problem(rng, 10, 6)
        coef = rng.standard_normal(6)
        ref = rng.standard_normal(6)
        lhs, rhs = gradient_alignment_sides(p, coef, ref)
        assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


def test_empirical_distance_trivials():
    rng = np.random.default_rng(5)
    p = _random_problem(rng, 8, 3)
    a = rng.standard_normal(3)
    b = rng.standard_normal(3)
    assert empirical_distance_sq(p, a, a) == 0.0
    assert empirical_distance_sq(p, a, b) == pytest.approx(
        empirical_distance_sq(p, b, a)
    )
    assert empirical_distance_sq(p, a, b) >= 0.0


def test_empirical_distance_hand_value():
    p = RegressionProblem([[1.0], [1.0]], [0.0, 0.0])
    assert empirical_distance_sq(p, [1.0], [0.0]) == pytest.approx(1.0)


def test_population_risk_at_truth_is_noise_variance():
    assert population_risk(FIG2_LAW, [1.5, 0.5]) == pytest.approx(0.25)


def test_population_risk_isotropic_form():
    law = GaussianLinearLaw(np.eye(3), [1.0, -1.0, 0.5], 2.0)
    coef = np.array([0.0, 1.0, 0.5])
    expected = 4.0 + np.sum((coef - law.true_param) ** 2)
    assert population_risk(law, coef) == pytest.approx(expected)


def test_population_risk_matches_monte_carlo():
    rng = np.random.default_rng(6)
    coef = np.array([0.3, -0.8])
    draws = 10**6
    x = rng.standard_normal((draws, 2)) @ np.linalg.cholesky(FIG2_LAW.covariance).T
    y = x @ FIG2_LAW.true_param + 0.5 * rng.standard_normal(draws)
    sq_errors = (x @ coef - y) ** 2
    mc = sq_errors.mean()
    se = sq_errors.std(ddof=1) / np.sqrt(draws)
    assert abs(population_risk(FIG2_LAW, coef) - mc) <= 3 * se


def test_sample_problem_deterministic():
    a = sample_problem(FIG2_LAW, 50, 123)
    b = sample_problem(FIG2_LAW, 50, 123)
    assert np.array_equal(a.design, b.design)
    assert np.array_equal(a.labels, b.labels)
    c = sample_problem(FIG2_LAW, 50, 124)
    assert not np.array_equal(a.labels, c.labels)


def test_sample_problem_noiseless_labels():
    law = GaussianLinearLaw(np.eye(4), [1.0, 2.0, -1.0, 0.0], 0.0)
    p = sample_problem(law, 30, 9)
    assert np.allclose(p.labels, p.design @ law.true_param)


def test_sample_problem_sparse_design_column_norms():
    law = sparse_sign_law(100, 10, 5.0)
    assert np.abs(law.true_param).sum() == 10
    assert law.true_param[0] == 1.0 and law.true_param[1] == -1.0
    p = sample_problem(law, 200, 77)
    norms = np.linalg.norm(p.design / np.sqrt(p.n), axis=0)
    assert np.max(np.abs(norms - 1.0)) <= 0.2


def test_sample_problem_covariance_consistency():
    p = sample_problem(FIG2_LAW, 10**4, 2024)
    emp_cov = p.design.T @ p.design / p.n
    assert np.linalg.norm(emp_cov - FIG2_LAW.covariance, "fro") <= 0.05


def test_law_rejects_non_psd_covariance():
    with pytest.raises(ValueError):
        GaussianLinearLaw([[1.0, 0.0], [0.0, -0.5]], [0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        GaussianLinearLaw([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0], 1.0)


def test_problem_rejects_bad_shapes_and_values():
    with pytest.raises(ValueError):
        RegressionProblem([[1.0], [2.0]], [1.0])
    with pytest.raises(ValueError):
        RegressionProblem([[np.inf]], [1.0])


def test_rbf_gram_identical_points():
    gram = rbf_gram(np.zeros((4, 2)), 1.0)
    assert np.allclose(gram, np.ones((4, 4)))


def test_rbf_gram_hand_off_diagonal():
    bw = 0.7
    pts = np.array([[0.0], [bw * np.sqrt(2.0)]])
    gram = rbf_gram(pts, bw)
    assert gram[0, 1] == pytest.approx(np.exp(-1.0))
    assert gram[0, 0] == 1.0


def test_rbf_gram_is_psd():
    rng = np.random.default_rng(8)
    gram = rbf_gram(rng.uniform(size=(40, 3)), 0.5)
    assert np.linalg.eigvalsh(gram).min() >= -1e-8


def test_rbf_gram_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        rbf_gram(np.zeros((2, 1)), 0.0)


def test_problem_serialization_roundtrip(tmp_path):
    p = sample_problem(FIG2_LAW, 17, 5)
    save_problem(p, tmp_path, law=FIG2_LAW)
    loaded, law = load_problem(tmp_path)
    assert np.array_equal(loaded.design, p.design)
    assert np.array_equal(loaded.labels, p.labels)
    assert np.array_equal(law.covariance, FIG2_LAW.covariance)
    assert law.noise_sd == FIG2_LAW.noise_sd
