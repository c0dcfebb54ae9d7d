"""Multivariate Gaussians: densities, learning, sampling and TV estimation.

Everything goes through the cached Cholesky factor; no explicit inverse is
ever formed.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import norm

from .calibration import load_constants
from .core import EvalApproximator, Sampler, TvEstimate, estimate_tv, required_samples
from .errors import ParameterError
from .rng import as_generator

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams:
    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)
    logdet: float = field(init=False, compare=False)
    ridge: float = 0.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64)).copy()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64)).copy()
        n = len(mu)
        if mu.ndim != 1 or sigma.shape != (n, n):
            raise ParameterError(f"mean of length {n} needs an {n}x{n} covariance")
        if np.max(np.abs(sigma - sigma.T)) > 1e-10:
            raise ParameterError("covariance must be symmetric")
        sigma = (sigma + sigma.T) / 2
        try:
            L = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ParameterError("covariance is not positive definite") from None
        for arr in (mu, sigma, L):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", L)
        object.__setattr__(self, "logdet", 2.0 * float(np.sum(np.log(np.diag(L)))))

    @property
    def n(self):
        return len(self.mu)

    def logpdf(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n:
            raise ParameterError(f"points must have dimension {self.n}")
        z = solve_triangular(self.chol, (X - self.mu).T, lower=True)
        out = -0.5 * self.n * LOG_2PI - 0.5 * self.logdet - 0.5 * np.sum(z * z, axis=0)
        return out[0] if single else out

    def sample(self, rng, size):
        v = as_generator(rng).standard_normal((size, self.n))
        return v @ self.chol.T + self.mu

    def evaluator(self, beta=0.0):
        return EvalApproximator(lambda x: math.exp(self.logpdf(x)), beta=beta, log_batch=self.logpdf)

    def sampler(self):
        return Sampler(lambda rng: self.sample(rng, 1)[0], f"Cholesky sampling from N(mu, Sigma), n={self.n}",
                       batch=self.sample)


def gaussian_logpdf(g, x):
    """Log density at a single point via a triangular solve against the factor."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise ParameterError(f"point must have dimension {g.n}")
    return float(g.logpdf(x))


def gaussian_sample(g, rng):
    return g.sample(rng, 1)[0]


def learn_gaussian(samples):
    """Empirical mean and (1/m) covariance, ridge-regularized only if singular.

    The ridge starts at ``1e-9 * trace / n`` (or ``1e-9`` for a zero trace)
    and grows tenfold until the factorization succeeds; the amount used is
    stored on the result.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ParameterError("need at least two samples of common dimension")
    mu = X.mean(axis=0)
    centered = X - mu
    sigma = centered.T @ centered / len(X)
    sigma = (sigma + sigma.T) / 2
    n = X.shape[1]
    ridge = 0.0
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        ridge = 1e-9 * np.trace(sigma) / n or 1e-9
        while True:
            try:
                np.linalg.cholesky(sigma + ridge * np.eye(n))
                break
            except np.linalg.LinAlgError:
                ridge *= 10
    return GaussianParams(mu, sigma + ridge * np.eye(n), ridge=ridge)


def gaussian_sample_budget(n, epsilon, constant=None):
    """Calibrated learning budget ``ceil(C n^2 / epsilon^2)``."""
    if constant is None:
        constant = load_constants()["gaussian_learning_constant"]
    return math.ceil(constant * n * n / (epsilon * epsilon))


def tv_between_gaussians_params(p, q, epsilon, delta, rng=None):
    """Estimate ``d_TV(N(p), N(q))`` from parameters with exact density evaluators."""
    if p.n != q.n:
        raise ParameterError("Gaussians must share a dimension")
    return estimate_tv(p.sampler(), p.evaluator(), q.evaluator(), epsilon, delta, rng)


def estimate_tv_gaussians(samples_P, samples_Q, epsilon, delta, rng=None, *, check_budget=True):
    """Estimate ``d_TV(P, Q)`` for two Gaussians known only through samples.

    Both are learned to TV ``epsilon/4``; their densities serve as
    ``(epsilon/4, 0)`` evaluators and a held-out slice of ``samples_P``
    drives the Monte Carlo step at accuracy ``epsilon/4``.
    """
    rng = as_generator(rng)
    XP = np.asarray(samples_P, dtype=np.float64)
    XQ = np.asarray(samples_Q, dtype=np.float64)
    if XP.ndim != 2 or XQ.ndim != 2 or XP.shape[1] != XQ.shape[1]:
        raise ParameterError("sample sets must be 2-D arrays of common dimension")
    n = XP.shape[1]
    t_mc = required_samples(epsilon / 4, delta)
    m_learn = gaussian_sample_budget(n, epsilon / 4) if check_budget else 2
    if len(XP) < m_learn + t_mc:
        raise ParameterError(f"need at least {m_learn + t_mc} samples from P "
                             f"({m_learn} learning + {t_mc} hold-out), got {len(XP)}")
    if len(XQ) < m_learn:
        raise ParameterError(f"need at least {m_learn} samples from Q, got {len(XQ)}")
    XP = XP[rng.permutation(len(XP))]
    p_hat, q_hat = learn_gaussian(XP[:-t_mc]), learn_gaussian(XQ)
    est = estimate_tv(Sampler.from_pool(XP[-t_mc:]), p_hat.evaluator(beta=epsilon / 4),
                      q_hat.evaluator(beta=epsilon / 4), epsilon / 4, delta, rng)
    return TvEstimate(est.value, est.epsilon, delta, est.samples_used, est.extra_error,
                      {"target": epsilon, "learned_P": p_hat, "learned_Q": q_hat})


def tv_1d_equal_variance(mu1, mu2, sd):
    """Closed form ``2 Phi(|mu1 - mu2| / (2 sd)) - 1``."""
    return 2.0 * norm.cdf(abs(mu1 - mu2) / (2.0 * sd)) - 1.0


def tv_1d_quadrature(p, q):
    """``(1/2) int |f - g|`` for 1-D Gaussians by adaptive quadrature."""
    from scipy.integrate import quad

    if p.n != 1 or q.n != 1:
        raise ParameterError("quadrature oracle is one-dimensional")
    f, g = norm(p.mu[0], math.sqrt(p.sigma[0, 0])), norm(q.mu[0], math.sqrt(q.sigma[0, 0]))
    lo = min(f.ppf(1e-15), g.ppf(1e-15))
    hi = max(f.isf(1e-15), g.isf(1e-15))
    # split at the density crossings so the integrand is smooth on each piece
    grid = np.linspace(lo, hi, 20001)
    diff = f.pdf(grid) - g.pdf(grid)
    cuts = [lo] + [float(grid[i]) for i in np.flatnonzero(np.diff(np.sign(diff)) != 0)] + [hi]
    total = sum(quad(lambda x: abs(f.pdf(x) - g.pdf(x)), a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                for a, b in zip(cuts[:-1], cuts[1:]))
    return 0.5 * total


def kl_gaussians(p, q):
    """Closed-form ``KL(N(p) || N(q))`` through the two Cholesky factors."""
    if p.n != q.n:
        raise ParameterError("Gaussians must share a dimension")
    M = solve_triangular(q.chol, p.chol, lower=True)
    z = solve_triangular(q.chol, q.mu - p.mu, lower=True)
    return max(0.0, 0.5 * (float(np.sum(M * M)) + float(z @ z) - p.n + q.logdet - p.logdet))


def random_gaussian(n, rng):
    """``mu`` standard normal, ``sigma = M^T M + 0.1 I`` with ``M`` standard normal."""
    rng = as_generator(rng)
    mu = rng.standard_normal(n)
    M = rng.standard_normal((n, n))
    return GaussianParams(mu, M.T @ M + 0.1 * np.eye(n))
