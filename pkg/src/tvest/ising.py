"""Ising models on ``{-1, +1}^n``.

The unnormalized log-probability is ``sum_{i != j} A_ij x_i x_j + sum_i
theta_i x_i`` with ``A`` symmetric and zero on the diagonal, so each
unordered pair contributes ``2 A_ij x_i x_j``.  ``theta`` is a scalar field
or a per-site vector.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit, logsumexp
from scipy.stats import norm

from . import _guard
from .calibration import load_constants
from .core import (
    DiscreteDistribution,
    EvalApproximator,
    Sampler,
    TvEstimate,
    analytic_extra_error,
    estimate_tv,
    required_samples,
)
from .errors import EstimationError, ParameterError, SizeError
from .rng import as_generator

EXACT_LIMIT_N = 20
HIGH = "HIGH"
LOW = "LOW"


class IsingModel:
    def __init__(self, A, theta=0.0):
        A = np.array(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ParameterError("interaction matrix must be square")
        if not np.all(np.isfinite(A)):
            raise ParameterError("interaction matrix must be finite")
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-12:
            raise ParameterError("interaction matrix must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ParameterError("interaction matrix must have a zero diagonal")
        A = (A + A.T) / 2
        A.setflags(write=False)
        self.A = A
        if np.ndim(theta) == 0:
            self.theta = float(theta)
        else:
            theta = np.array(theta, dtype=np.float64)
            if theta.shape != (A.shape[0],):
                raise ParameterError("per-site field must have one entry per spin")
            theta.setflags(write=False)
            self.theta = theta

    def __repr__(self):
        return f"IsingModel(n={self.n}, width={self.width:.3g})"

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def field(self):
        return np.broadcast_to(np.asarray(self.theta, dtype=np.float64), (self.n,))

    @property
    def width(self):
        return float(np.max(np.abs(self.A).sum(axis=1) + np.abs(self.field), initial=0.0))

    @property
    def is_ferromagnetic(self):
        return bool(np.all(self.A >= 0))

    def log_numerator(self, X):
        X = check_spins(X, self.n).astype(np.float64)
        return np.einsum("si,ij,sj->s", X, self.A, X) + X @ self.field

    def log_pmf(self, X):
        return self.log_numerator(X) - exact_partition(self).log_value

    def pmf_table(self):
        X = all_spins(self.n)
        logp = self.log_numerator(X)
        p = np.exp(logp - logsumexp(logp))
        return X, p

    def joint(self):
        X, p = self.pmf_table()
        return DiscreteDistribution([tuple(x) for x in X.tolist()], p, normalize=True)

    def evaluator(self, log_partition=None, beta=0.0, gamma=0.0):
        """Evaluator ``N(x) / Z`` using ``log_partition`` (exact when omitted)."""
        if log_partition is None:
            log_partition = exact_partition(self).log_value

        def log_batch(xs):
            return self.log_numerator(np.asarray(xs)) - log_partition

        return EvalApproximator(lambda x: float(np.exp(log_batch(np.asarray(x)[None])[0])),
                                beta=beta, gamma=gamma, log_batch=log_batch)

    def sampler(self, mode="exact", **kwargs):
        return Sampler(lambda rng: ising_sample(self, rng, size=1, mode=mode, **kwargs)[0],
                       f"{mode} sampling from {self!r}",
                       batch=lambda rng, size: ising_sample(self, rng, size=size, mode=mode, **kwargs))


@dataclass(frozen=True)
class PartitionEstimate:
    value: float
    epsilon: float
    method: str
    log_value: float
    details: dict = None


def check_spins(X, n):
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n:
        raise ParameterError(f"spin vectors must have length {n}")
    if not np.all((X == 1) | (X == -1)):
        raise ParameterError("spins must be -1 or +1")
    return X


def all_spins(n):
    """Every configuration in ``{-1,1}^n``; row ``c`` spells ``c`` in binary with -1 for 0."""
    if n > EXACT_LIMIT_N and _guard.enumeration_limit(EXACT_LIMIT_N) < n:
        raise SizeError(f"enumerating 2^{n} spin configurations exceeds the guard", bits=n,
                        limit=EXACT_LIMIT_N)
    codes = np.arange(2 ** n)[:, None]
    bits = (codes >> np.arange(n - 1, -1, -1)) & 1
    return (2 * bits - 1).astype(np.int8)


def spin_codes(X):
    X = np.asarray(X)
    n = X.shape[1]
    return ((X > 0).astype(np.int64) << np.arange(n - 1, -1, -1)).sum(axis=1)


def ising_log_numerator(m, x):
    """``sum_{i != j} A_ij x_i x_j + theta . x`` for a single spin vector."""
    return float(m.log_numerator(np.asarray(x))[0])


def exact_partition(m):
    limit = _guard.enumeration_limit(EXACT_LIMIT_N)
    if m.n > limit:
        raise SizeError(f"exact partition needs 2^{m.n} terms (guard {limit}); use estimate_partition",
                        bits=m.n, limit=limit)
    log_z = float(logsumexp(m.log_numerator(all_spins(m.n))))
    return PartitionEstimate(math.exp(log_z) if log_z < 700 else math.inf, 0.0, "exact", log_z)


def _heat_bath_sweep(X, A, field, scale, rng):
    """One in-place single-site heat-bath sweep over every chain in ``X`` (float ±1)."""
    n = X.shape[1]
    H = X @ A
    for i in range(n):
        h = 2.0 * scale * H[:, i] + field[i]
        up = rng.random(len(X)) < expit(2.0 * h)
        new = np.where(up, 1.0, -1.0)
        delta = new - X[:, i]
        if np.any(delta):
            H += np.outer(delta, A[i])
            X[:, i] = new
    return X


def _product_sample(field, size, rng):
    up = rng.random((size, len(field))) < expit(2.0 * field)
    return np.where(up, 1.0, -1.0)


def _ais_batch(m, chains, ladder, rng):
    A, field = m.A, m.field
    X = _product_sample(field, chains, rng)
    logw = np.zeros(chains)
    for prev, cur in zip(ladder[:-1], ladder[1:]):
        logw += (cur - prev) * np.einsum("si,ij,sj->s", X, A, X)
        _heat_bath_sweep(X, A, field, cur, rng)
    return logw


def estimate_partition(m, epsilon, delta, rng=None, *, ladder_length=None, chains=256,
                       max_batches=64, ess_floor=0.2):
    """Annealed importance sampling estimate of the partition function.

    Chains start from the product distribution with the model's field and
    follow ``pi_b(x) ~ exp(b * sum A x x + theta . x)`` for ``b`` on a uniform
    ladder from 0 to 1 (the geometric path between base and target).
    Batches of chains are added until the estimated relative standard error
    drops below ``epsilon / (2 z)`` with ``z`` the two-sided normal quantile
    for ``delta``.

    :raises EstimationError: if the weights' effective sample size falls
        below ``ess_floor`` of the chain count, or the variance target is not
        met within ``max_batches``.
    """
    if not 0 < epsilon < 1 or not 0 < delta < 1:
        raise ParameterError("epsilon and delta must lie in (0, 1)")
    rng = as_generator(rng)
    log_z0 = float(np.sum(np.logaddexp(m.field, -m.field)))
    if not np.any(m.A):
        return PartitionEstimate(math.exp(log_z0), epsilon, "annealed-importance-sampling", log_z0,
                                 {"chains": 0, "ladder": 0})
    steps = ladder_length or 100 * m.n
    ladder = np.linspace(0.0, 1.0, steps + 1)
    z = norm.ppf(1 - delta / 2)
    logw = np.empty(0)
    rel_se = math.inf
    for _ in range(max_batches):
        logw = np.concatenate([logw, _ais_batch(m, chains, ladder, rng)])
        w = np.exp(logw - logw.max())
        ess = w.sum() ** 2 / np.sum(w ** 2)
        if ess < ess_floor * len(w):
            raise EstimationError(
                f"AIS weights degenerate: effective sample size {ess:.1f} of {len(w)} chains "
                f"(floor {ess_floor}); lengthen the ladder")
        rel_se = np.std(w, ddof=1) / (np.mean(w) * math.sqrt(len(w)))
        if z * rel_se <= epsilon / 2:
            break
    else:
        raise EstimationError(f"relative standard error {rel_se:.3g} above target "
                              f"{epsilon / (2 * z):.3g} after {len(logw)} chains")
    log_z = log_z0 + float(logsumexp(logw) - math.log(len(logw)))
    return PartitionEstimate(math.exp(log_z) if log_z < 700 else math.inf, epsilon,
                             "annealed-importance-sampling", log_z,
                             {"chains": len(logw), "ladder": steps, "relative_se": rel_se, "ess": ess})


def ising_sample(m, rng=None, size=1, mode="exact", burn_in=1000, thinning=1, chains=None):
    """Draw ``size`` spin vectors as an ``(size, n)`` int8 array.

    ``mode="exact"`` inverts the CDF of the enumerated pmf.  ``mode="glauber"``
    runs heat-bath chains (``chains`` of them in parallel, default one per
    draw) for ``burn_in`` sweeps, then emits every ``thinning``-th sweep.
    """
    rng = as_generator(rng)
    if mode == "exact":
        X, p = m.pmf_table()
        cdf = np.cumsum(p)
        idx = np.minimum(np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right"), len(p) - 1)
        return X[idx]
    if mode != "glauber":
        raise ParameterError(f"unknown sampling mode {mode!r}")
    if burn_in < 1 or thinning < 1:
        raise ParameterError("burn_in and thinning must be positive")
    chains = size if chains is None else max(1, min(int(chains), size))
    X = _product_sample(m.field, chains, rng)
    for _ in range(burn_in):
        _heat_bath_sweep(X, m.A, m.field, 1.0, rng)
    out = [X.copy()]
    while sum(len(o) for o in out) < size:
        for _ in range(thinning):
            _heat_bath_sweep(X, m.A, m.field, 1.0, rng)
        out.append(X.copy())
    return np.concatenate(out)[:size].astype(np.int8)


def heat_bath_sweep(m, X, rng):
    """Apply one heat-bath sweep at full strength to the given configurations."""
    Xf = check_spins(X, m.n).astype(np.float64).copy()
    return _heat_bath_sweep(Xf, m.A, m.field, 1.0, as_generator(rng)).astype(np.int8)


def ferromagnetic_clamp(m):
    """Zero every negative interaction; the field is untouched."""
    return IsingModel(np.maximum(m.A, 0.0), m.theta)


def compare_ratio(m, x, z, K):
    """``N(x) / N(z)`` if it lies in ``[1/K, K]``, else ``HIGH`` or ``LOW``."""
    if K < 1:
        raise ParameterError("K must be at least 1")
    diff = ising_log_numerator(m, x) - ising_log_numerator(m, z)
    log_k = math.log(K)
    if diff > log_k:
        return HIGH
    if diff < -log_k:
        return LOW
    return math.exp(diff)


def random_ising(n, width, rng, theta=0.0, density=1.0):
    """Ferromagnetic model with uniform interactions rescaled to the given width."""
    rng = as_generator(rng)
    A = np.triu(rng.uniform(0.0, 1.0, (n, n)) * (rng.random((n, n)) < density), 1)
    A = A + A.T
    budget = width - abs(theta)
    if budget < 0:
        raise ParameterError("|theta| exceeds the width")
    rows = A.sum(axis=1).max()
    if rows > 0:
        A *= budget / rows
    return IsingModel(A, theta)


def max_log_ratio(a, b):
    """``max_x |log P_a(x) - log P_b(x)|`` by enumeration."""
    X = all_spins(a.n)
    la = a.log_numerator(X)
    lb = b.log_numerator(X)
    return float(np.max(np.abs((la - logsumexp(la)) - (lb - logsumexp(lb)))))


# -- learning -----------------------------------------------------------------

@dataclass(frozen=True)
class SpinCounts:
    """Samples compressed to distinct configurations and their multiplicities."""

    configs: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_samples(cls, X):
        if isinstance(X, SpinCounts):
            return X
        X = np.asarray(X)
        if X.ndim != 2:
            raise ParameterError("samples must be a 2-D array of spins")
        check_spins(X, X.shape[1])
        if X.shape[1] <= 62:
            codes, first, counts = np.unique(spin_codes(X), return_index=True, return_counts=True)
            return cls(X[first].astype(np.int8), counts.astype(np.int64))
        configs, counts = np.unique(X.astype(np.int8), axis=0, return_counts=True)
        return cls(configs, counts.astype(np.int64))

    @classmethod
    def from_model(cls, m, size, rng):
        """Exact sampling straight into histogram form."""
        X, p = m.pmf_table()
        counts = as_generator(rng).multinomial(size, p / p.sum())
        keep = counts > 0
        return cls(X[keep], counts[keep].astype(np.int64))

    @property
    def n(self):
        return self.configs.shape[1]

    @property
    def total(self):
        return int(self.counts.sum())

    def split(self, t, rng):
        """Remove ``t`` random draws; return (rest, held-out ``(t, n)`` array in random order)."""
        rng = as_generator(rng)
        if t > self.total:
            raise ParameterError(f"cannot hold out {t} of {self.total} samples")
        taken = rng.multivariate_hypergeometric(self.counts, t)
        held = np.repeat(self.configs, taken, axis=0)
        held = held[rng.permutation(len(held))]
        rest = self.counts - taken
        keep = rest > 0
        return SpinCounts(self.configs[keep], rest[keep]), held


def ising_sample_budget(n, width_bound, epsilon, delta, constant=None):
    """Calibrated learning budget ``C e^(6d) n^3 ln(n/delta) / epsilon^2``.

    ``C`` comes from ``calibration.json``; see :mod:`tvest.calibration`.
    """
    if not 0 < epsilon < 1 or not 0 < delta < 1 or width_bound < 0:
        raise ParameterError("invalid learning-budget parameters")
    if constant is None:
        constant = load_constants()["ising_learning_constant"]
    return math.ceil(constant * math.exp(6 * width_bound) * n ** 3
                     * math.log(max(n, 2) / delta) / epsilon ** 2)


def _pseudo_likelihood(params, configs, weights, n, iu, per_site):
    A = np.zeros((n, n))
    A[iu] = params[:len(iu[0])]
    A = A + A.T
    theta = params[len(iu[0]):] if per_site else np.full(n, params[-1])
    H = 2.0 * configs @ A + theta
    margin = 2.0 * configs * H
    loss = -np.dot(weights, log_expit(margin).sum(axis=1))
    G = -2.0 * configs * expit(-margin) * weights[:, None]
    M = 2.0 * configs.T @ G
    grad_A = (M + M.T)[iu]
    grad_theta = G.sum(axis=0) if per_site else np.array([G.sum()])
    return loss, np.concatenate([grad_A, grad_theta])


def learn_ising(samples, width_bound, epsilon, delta, *, per_site_field=False, check_budget=True):
    """Fit an Ising model by maximum pseudo-likelihood.

    Each conditional ``P(x_i | x_-i)`` is logistic in ``2 sum_j A_ij x_j +
    theta_i``; the symmetric parameters are fit jointly over all sites.  If
    the fitted width exceeds ``width_bound + 1`` the parameters are scaled
    back onto that bound.

    :param samples: ``(m, n)`` spin array or :class:`SpinCounts`.
    :raises ParameterError: when fewer samples than
        :func:`ising_sample_budget` are supplied and ``check_budget`` is set.
    """
    data = SpinCounts.from_samples(samples)
    n = data.n
    if check_budget:
        need = ising_sample_budget(n, width_bound, epsilon, delta)
        if data.total < need:
            raise ParameterError(f"learn_ising needs at least {need} samples, got {data.total}",)
    configs = data.configs.astype(np.float64)
    weights = data.counts / data.counts.sum()
    iu = np.triu_indices(n, 1)
    n_field = n if per_site_field else 1
    x0 = np.zeros(len(iu[0]) + n_field)
    res = minimize(_pseudo_likelihood, x0, args=(configs, weights, n, iu, per_site_field),
                   jac=True, method="L-BFGS-B", options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
    A = np.zeros((n, n))
    A[iu] = res.x[:len(iu[0])]
    A = A + A.T
    theta = res.x[len(iu[0]):] if per_site_field else float(res.x[-1])
    model = IsingModel(A, theta)
    cap = width_bound + 1.0
    if model.width > cap:
        s = cap / model.width
        model = IsingModel(A * s, np.asarray(theta) * s if per_site_field else theta * s)
    return model


# -- distance estimation ------------------------------------------------------

def ising_error_split(epsilon):
    """Monte Carlo accuracy left after the evaluator slack of the learned models."""
    eps_mc = epsilon - analytic_extra_error(epsilon / 8, epsilon / 4)
    if eps_mc <= 0:
        raise ParameterError(f"epsilon={epsilon} leaves no room for Monte Carlo error")
    return eps_mc


def estimate_tv_ising(samples_P, samples_Q, width_bound, epsilon, delta, rng=None, *,
                      check_budget=True, partition="ais"):
    """Estimate ``d_TV(P, Q)`` for two ferromagnetic models known only through samples.

    Each model is learned (pointwise target ``epsilon/8``), clamped to be
    ferromagnetic, and its partition function estimated to ``1 +- epsilon/8``,
    which makes ``N(x)/Z_hat`` an ``(epsilon/8, epsilon/4)`` evaluator.  The
    Monte Carlo step uses a held-out slice of ``samples_P`` at whatever
    accuracy keeps the total error at ``epsilon``.  Failure probability is
    split evenly over the five randomized steps.

    :param partition: ``"ais"`` or ``"exact"`` (enumeration, desk scale only).
    """
    rng = as_generator(rng)
    eps_mc = ising_error_split(epsilon)
    d5 = delta / 5
    t_mc = required_samples(eps_mc, d5)
    data_P = SpinCounts.from_samples(samples_P)
    data_Q = SpinCounts.from_samples(samples_Q)
    if data_P.n != data_Q.n:
        raise ParameterError("sample sets have different dimensions")
    if data_P.total <= t_mc:
        raise ParameterError(f"need more than {t_mc} samples from P (Monte Carlo hold-out), got {data_P.total}")
    learn_P, holdout = data_P.split(t_mc, rng)

    evals, fitted = [], []
    for data in (learn_P, data_Q):
        model = ferromagnetic_clamp(learn_ising(data, width_bound, epsilon / 8, d5, check_budget=check_budget))
        if partition == "exact":
            z = exact_partition(model)
        else:
            z = estimate_partition(model, epsilon / 8, d5, rng)
        evals.append(model.evaluator(z.log_value, beta=epsilon / 8, gamma=epsilon / 4))
        fitted.append((model, z))
    est = estimate_tv(Sampler.from_pool(holdout), evals[0], evals[1], eps_mc, d5, rng)
    return TvEstimate(est.value, eps_mc, delta, est.samples_used, est.extra_error,
                      {"target": epsilon, "learned_P": fitted[0], "learned_Q": fitted[1]})


def uniform_evaluator(n):
    log_u = -n * math.log(2.0)
    return EvalApproximator(lambda x: math.exp(log_u), log_batch=lambda xs: np.full(len(xs), log_u))
