import math

import numpy as np
import pytest
from scipy.integrate import quad, simpson
from scipy.linalg import lu
from scipy.stats import norm

from tvest.core import TvEstimate, required_samples
from tvest.errors import ParameterError
from tvest.gaussian import (
    GaussianParams,
    estimate_tv_gaussians,
    gaussian_logpdf,
    gaussian_sample,
    gaussian_sample_budget,
    learn_gaussian,
    tv_1d_equal_variance,
    tv_1d_quadrature,
    tv_between_gaussians_params,
)
from tvest.rng import stream


def std(n):
    return GaussianParams(np.zeros(n), np.eye(n))


def quadric_cdf(lams, c, grid=2001):
    """``P(sum lam_i Z_i^2 < c)`` for at most three iid standard normals.

    The last coordinate is done in closed form; the others are integrated
    against their densities on a fine grid (Simpson's rule).
    """
    lams = np.asarray(lams, dtype=float)
    *outer, lam = lams
    z = np.linspace(-9, 9, grid)
    mesh = np.meshgrid(*([z] * len(outer)), indexing="ij") if outer else []
    r = c - sum(l * m * m for l, m in zip(outer, mesh)) if outer else np.asarray(c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if lam > 0:
            inner = np.where(r > 0, 2 * norm.cdf(np.sqrt(np.maximum(r, 0) / lam)) - 1, 0.0)
        elif lam < 0:
            inner = np.where(r > 0, 1.0, 2 * norm.sf(np.sqrt(np.maximum(r / lam, 0))))
        else:
            inner = (r > 0).astype(float)
    for _ in outer:
        inner = simpson(inner * norm.pdf(z), x=z, axis=-1)
    return float(inner)


def tv_zero_mean_oracle(sigma):
    """TV between N(0, I) and N(0, sigma); the set where the first density wins
    is the quadric ``sum x_i^2 (1 - 1/d_i) < sum ln d_i`` in sigma's eigenbasis."""
    d = np.linalg.eigvalsh(sigma)
    c = float(np.sum(np.log(d)))
    return quadric_cdf(1 - 1 / d, c) - quadric_cdf(d - 1, c)


# -- density ---------------------------------------------------------------------

def test_logpdf_examples():
    assert gaussian_logpdf(std(1), [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    assert gaussian_logpdf(std(1), [0.0]) == pytest.approx(-0.918939, abs=1e-6)
    assert gaussian_logpdf(std(4), np.zeros(4)) == pytest.approx(-2 * math.log(2 * math.pi))
    g = GaussianParams([1, 0], np.diag([4.0, 1.0]))
    val = gaussian_logpdf(g, [1, 2])
    assert val == pytest.approx(-math.log(2 * math.pi) - 0.5 * math.log(4) - 2, abs=1e-14)
    assert val == pytest.approx(-4.531024, abs=1e-6)


def test_logpdf_dimension_mismatch():
    with pytest.raises(ParameterError):
        gaussian_logpdf(std(2), [0.0, 1.0, 2.0])


def test_params_validation():
    with pytest.raises(ParameterError):
        GaussianParams([0, 0], [[1, 0.5], [0.4, 1]])
    with pytest.raises(ParameterError):
        GaussianParams([0, 0], [[1, 2], [2, 1]])
    with pytest.raises(ParameterError):
        GaussianParams([0, 0, 0], np.eye(2))


def test_logpdf_matches_scipy():
    from scipy.stats import multivariate_normal

    rng = stream(1)
    for n in (1, 3, 5):
        B = rng.normal(size=(n, n))
        g = GaussianParams(rng.normal(size=n), B @ B.T + 0.5 * np.eye(n))
        X = rng.normal(size=(20, n))
        np.testing.assert_allclose(g.logpdf(X), multivariate_normal(g.mu, g.sigma).logpdf(X), rtol=1e-10)


def test_density_integrates_to_one():
    g = GaussianParams([0.3], [[2.5]])
    total = quad(lambda x: math.exp(gaussian_logpdf(g, [x])), -np.inf, np.inf, epsabs=1e-12)[0]
    assert total == pytest.approx(1.0, abs=1e-6)
    # n-D: E_{x ~ wide}[g(x) / wide(x)] = 1
    rng = stream(2)
    g = GaussianParams([0.5, -0.2, 0.1], [[1, 0.3, 0], [0.3, 1, 0.2], [0, 0.2, 0.8]])
    wide = GaussianParams(np.zeros(3), 4 * np.eye(3))
    X = wide.sample(rng, 200_000)
    w = np.exp(g.logpdf(X) - wide.logpdf(X))
    assert abs(w.mean() - 1) <= 3 * w.std() / math.sqrt(len(w))


def test_logdet_against_lu():
    rng = stream(3)
    for n in range(1, 7):
        B = rng.normal(size=(n, n))
        S = B @ B.T + 0.1 * np.eye(n)
        _, _, U = lu(S)
        assert GaussianParams(np.zeros(n), S).logdet == pytest.approx(float(np.sum(np.log(np.abs(np.diag(U))))),
                                                                     abs=1e-8)


# -- learning --------------------------------------------------------------------

def test_learn_degenerate_samples():
    v = np.array([1.0, -2.0, 0.5])
    g = learn_gaussian(np.tile(v, (10, 1)))
    np.testing.assert_array_equal(g.mu, v)
    assert g.ridge > 0
    np.testing.assert_allclose(g.sigma, g.ridge * np.eye(3))


def test_learn_rank_deficient_uses_scaled_ridge():
    rng = stream(4)
    z = rng.normal(size=(500, 1))
    g = learn_gaussian(np.hstack([z, 2 * z]))
    assert g.ridge >= 1e-9 * np.trace(g.sigma - g.ridge * np.eye(2)) / 2


def test_learn_needs_two_samples():
    with pytest.raises(ParameterError):
        learn_gaussian(np.zeros((1, 2)))


def test_learn_standard_normal():
    hits = 0
    for trial in range(20):
        g = learn_gaussian(std(2).sample(stream(trial, "learn"), 100_000))
        hits += np.max(np.abs(g.mu)) <= 0.02 and np.max(np.abs(g.sigma - np.eye(2))) <= 0.03
        assert g.ridge == 0
    assert hits >= 19


def test_learning_budget_reaches_target():
    n, eps = 3, 0.1
    m = gaussian_sample_budget(n, eps)
    B = stream(5).normal(size=(3, 3))
    truth = GaussianParams([1.0, -1.0, 0.5], B @ B.T + np.eye(3))
    hits = 0
    for trial in range(40):
        rng = stream(trial, "budget")
        learned = learn_gaussian(truth.sample(rng, m))
        hits += tv_between_gaussians_params(truth, learned, eps / 10, 0.05, rng).value <= eps
    assert hits >= 36


# -- sampling --------------------------------------------------------------------

def test_sample_standard():
    X = std(3).sample(stream(6), 50_000)
    v = X.var(axis=0)
    # Var of the sample variance of N(0,1) is 2/N
    assert np.all(np.abs(v - 1) <= 3 * math.sqrt(2 / 50_000))


def test_sample_covariance():
    S = np.array([[2.0, 0.6, 0.0], [0.6, 1.0, -0.3], [0.0, -0.3, 0.5]])
    g = GaussianParams([1, 2, 3], S)
    N = 100_000
    X = g.sample(stream(7), N)
    C = np.cov(X.T, bias=True)
    se = np.sqrt((S * S + np.outer(np.diag(S), np.diag(S))) / N)
    assert np.all(np.abs(C - S) <= 3 * se)


def test_sample_seeded():
    g = GaussianParams([0, 1], [[1, 0.2], [0.2, 1]])
    np.testing.assert_array_equal(gaussian_sample(g, stream(8)), gaussian_sample(g, stream(8)))
    np.testing.assert_array_equal(gaussian_sample(g, stream(8)), g.sample(stream(8), 1)[0])


# -- parameter-mode TV -----------------------------------------------------------

def test_1d_oracle_crosscheck():
    assert tv_1d_equal_variance(0, 1, 1) == pytest.approx(0.38292, abs=5e-6)
    q = tv_1d_quadrature(GaussianParams([0], [[1]]), GaussianParams([1], [[1]]))
    assert q == pytest.approx(tv_1d_equal_variance(0, 1, 1), abs=1e-9)
    # unequal variances: quadric reduction against direct quadrature
    q = tv_1d_quadrature(GaussianParams([0], [[1]]), GaussianParams([0], [[2.5]]))
    assert q == pytest.approx(tv_zero_mean_oracle(np.array([[2.5]])), abs=1e-7)


def test_params_tv_identical():
    g = GaussianParams([0, 1], [[1, 0.5], [0.5, 2]])
    est = tv_between_gaussians_params(g, g, 0.05, 0.05, stream(9))
    assert est.value == 0.0


def test_params_tv_1d():
    p, q = GaussianParams([0], [[1]]), GaussianParams([1], [[1]])
    oracle = tv_1d_quadrature(p, q)
    hits = sum(abs(tv_between_gaussians_params(p, q, 0.02, 0.1, stream(t, "1d")).value - oracle) <= 0.02
               for t in range(20))
    assert hits >= 18


def test_params_tv_3d_against_quadrature():
    S = np.array([[1.0, 0.5, 0.2], [0.5, 1.5, 0.3], [0.2, 0.3, 0.7]])
    oracle = tv_zero_mean_oracle(S)
    assert 0.1 < oracle < 0.5
    est = tv_between_gaussians_params(std(3), GaussianParams(np.zeros(3), S), 0.03, 0.05, stream(10))
    assert abs(est.value - oracle) <= 0.03


def test_params_tv_symmetric_under_swap():
    p = GaussianParams([0, 0], np.eye(2))
    q = GaussianParams([0.5, -0.3], [[1.5, 0.4], [0.4, 0.8]])
    a = tv_between_gaussians_params(p, q, 0.03, 0.05, stream(11)).value
    b = tv_between_gaussians_params(q, p, 0.03, 0.05, stream(11)).value
    assert abs(a - b) <= 0.06


def test_estimator_affine_invariance():
    p = GaussianParams([0, 0], np.eye(2))
    q = GaussianParams([0.5, -0.3], [[1.5, 0.4], [0.4, 0.8]])
    M, b = np.array([[2.0, 1.0], [0.0, 0.5]]), np.array([3.0, -1.0])

    def push(g):
        return GaussianParams(M @ g.mu + b, M @ g.sigma @ M.T)

    a = tv_between_gaussians_params(p, q, 0.05, 0.05, stream(12)).value
    c = tv_between_gaussians_params(push(p), push(q), 0.05, 0.05, stream(12)).value
    assert a == pytest.approx(c, abs=1e-3)


def test_params_tv_dimension_mismatch():
    with pytest.raises(ParameterError):
        tv_between_gaussians_params(std(2), std(3), 0.1, 0.1)


# -- sample-mode pipeline --------------------------------------------------------

def pipeline_sizes(n, eps, delta):
    m = gaussian_sample_budget(n, eps / 4)
    return m + required_samples(eps / 4, delta), m


def test_pipeline_identical_sources():
    g = GaussianParams([1, -1], [[1, 0.3], [0.3, 2]])
    mp, mq = pipeline_sizes(2, 0.1, 0.1)
    for trial in range(5):
        rng = stream(trial, "g-same")
        est = estimate_tv_gaussians(g.sample(rng, mp), g.sample(rng, mq), 0.1, 0.1, rng)
        assert isinstance(est, TvEstimate) and est.value <= 0.1


def test_pipeline_pair():
    p, q = GaussianParams([0, 0], np.eye(2)), GaussianParams([1, 0], np.eye(2))
    oracle = tv_1d_quadrature(GaussianParams([0], [[1]]), GaussianParams([1], [[1]]))
    mp, mq = pipeline_sizes(2, 0.1, 0.1)
    hits = 0
    for trial in range(10):
        rng = stream(trial, "g-pair")
        hits += abs(estimate_tv_gaussians(p.sample(rng, mp), q.sample(rng, mq), 0.1, 0.1, rng).value
                    - oracle) <= 0.1
    assert hits >= 8


def test_pipeline_rejects_small_samples():
    mp, mq = pipeline_sizes(2, 0.1, 0.1)
    X = std(2).sample(stream(13), 100)
    with pytest.raises(ParameterError, match=str(mp)):
        estimate_tv_gaussians(X, X, 0.1, 0.1, stream(14))
    with pytest.raises(ParameterError, match=str(mq)):
        estimate_tv_gaussians(std(2).sample(stream(15), mp), X, 0.1, 0.1, stream(16))
