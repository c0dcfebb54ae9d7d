"""Sample-and-evaluate total variation estimation.

The estimator needs three things: a way to draw from ``P`` and two
approximate point evaluators, one for ``P`` and one for ``Q``.  Each
evaluator advertises how far it may be from the truth through ``beta``
(total variation slack of the distribution it actually evaluates) and
``gamma`` (pointwise multiplicative slack).  The additive error of the
estimate is then ``2*gamma/(1-gamma) + 3*beta + epsilon``.

Also here: exact TV/KL oracles over explicit tables, the Laplace-corrected
estimator, median amplification and the repeat-and-vote booster that turns
a 3/4-reliable learner into a ``1 - delta`` one.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import ParameterError
from .rng import as_generator, child


def _check_unit(name, value, closed_low=False):
    ok = (0 <= value < 1) if closed_low else (0 < value < 1)
    if not (isinstance(value, (int, float, np.floating)) and ok):
        raise ParameterError(f"{name} must lie in {'[0' if closed_low else '(0'}, 1), got {value!r}")


def _key(x):
    if isinstance(x, np.ndarray):
        return tuple(x.tolist())
    if isinstance(x, list):
        return tuple(x)
    return x


class DiscreteDistribution:
    """An explicit probability table over a finite, enumerable support.

    Treated as immutable: ``mass`` is a read-only array.
    """

    def __init__(self, support, mass, *, normalize=False):
        support = tuple(_key(s) for s in support)
        mass = np.asarray(mass, dtype=np.float64).copy()
        if mass.ndim != 1 or len(mass) != len(support):
            raise ParameterError("support and mass must be parallel sequences")
        if len(support) == 0:
            raise ParameterError("empty support")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise ParameterError("masses must be finite and nonnegative")
        if len(set(support)) != len(support):
            raise ParameterError("support entries must be distinct")
        total = mass.sum()
        if normalize:
            if total <= 0:
                raise ParameterError("cannot normalize zero mass")
            mass /= total
        elif abs(total - 1.0) > 1e-12:
            raise ParameterError(f"masses sum to {total!r}, not 1")
        mass.setflags(write=False)
        self.support = support
        self.mass = mass
        self._index = {s: i for i, s in enumerate(support)}

    @classmethod
    def from_dict(cls, table, normalize=False):
        return cls(list(table), list(table.values()), normalize=normalize)

    @classmethod
    def uniform(cls, support):
        support = list(support)
        return cls(support, np.full(len(support), 1.0 / len(support)), normalize=True)

    @classmethod
    def point_mass(cls, x):
        return cls([x], [1.0])

    def __len__(self):
        return len(self.support)

    def __repr__(self):
        return f"DiscreteDistribution({len(self)} atoms)"

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.as_dict().items(), key=repr)))

    def prob(self, x):
        i = self._index.get(_key(x))
        return 0.0 if i is None else float(self.mass[i])

    def as_dict(self):
        return dict(zip(self.support, self.mass.tolist()))

    def sample(self, rng, size=None):
        rng = as_generator(rng)
        if size is None:
            return self.support[rng.choice(len(self.support), p=self.mass)]
        idx = rng.choice(len(self.support), size=size, p=self.mass)
        return [self.support[i] for i in idx]

    def sampler(self):
        return Sampler(self.sample, f"explicit table over {len(self)} atoms",
                       batch=lambda rng, size: self.sample(rng, size))

    def evaluator(self, beta=0.0, gamma=0.0):
        return EvalApproximator(self.prob, beta=beta, gamma=gamma,
                                batch=lambda xs: np.array([self.prob(x) for x in xs]))


@dataclass(frozen=True)
class EvalApproximator:
    """A point evaluator that approximates some distribution ``P_hat``.

    ``P_hat`` is within TV ``beta`` of the target and ``eval`` is within a
    factor ``1 +- gamma`` of ``P_hat`` everywhere.  ``batch`` (list of points
    to array of values) and ``log_batch`` (the same, in log space) are
    optional fast paths.
    """

    eval: Callable[[Any], float]
    beta: float = 0.0
    gamma: float = 0.0
    batch: Optional[Callable[[Sequence], np.ndarray]] = None
    log_batch: Optional[Callable[[Sequence], np.ndarray]] = None

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ParameterError(f"beta must lie in [0, 1], got {self.beta!r}")
        if not 0 <= self.gamma < 1:
            raise ParameterError(f"gamma must lie in [0, 1), got {self.gamma!r}")

    def __call__(self, x):
        return self.eval(x)

    def evaluate(self, xs):
        if self.batch is not None:
            return np.asarray(self.batch(xs), dtype=np.float64)
        if self.log_batch is not None:
            return np.exp(np.asarray(self.log_batch(xs), dtype=np.float64))
        return np.array([self.eval(x) for x in xs], dtype=np.float64)


@dataclass(frozen=True)
class Sampler:
    """Sample access to a distribution.

    ``draw(rng)`` returns one point; ``batch(rng, size)`` returns ``size``
    i.i.d. points when a vectorized path exists.
    """

    draw: Callable[[np.random.Generator], Any]
    description: str = ""
    batch: Optional[Callable[[np.random.Generator, int], Sequence]] = None

    def sample(self, rng, size):
        rng = as_generator(rng)
        if self.batch is not None:
            return self.batch(rng, size)
        return [self.draw(rng) for _ in range(size)]

    @classmethod
    def from_pool(cls, points, description="held-out pool"):
        """Serve points from a fixed pool of independent draws, in order.

        Each point is handed out once; asking for more than the pool holds
        raises ``ParameterError``.
        """
        points = list(points) if not isinstance(points, np.ndarray) else points
        cursor = [0]

        def take(rng, size):
            start = cursor[0]
            if start + size > len(points):
                raise ParameterError(
                    f"sample pool exhausted: need {start + size}, have {len(points)}")
            cursor[0] = start + size
            return points[start:start + size]

        return cls(lambda rng: take(rng, 1)[0], description, batch=take)


@dataclass(frozen=True)
class TvEstimate:
    """Result of a TV estimate.

    ``epsilon`` is the Monte Carlo accuracy target and ``extra_error`` the
    analytic slack contributed by approximate evaluators; their sum is the
    additive error guaranteed with probability ``1 - delta``.
    """

    value: float
    epsilon: float
    delta: float
    samples_used: int
    extra_error: float = 0.0
    details: dict = field(default_factory=dict, compare=False)

    @property
    def error_bound(self):
        """Additive error that holds with probability ``1 - delta``."""
        return self.extra_error + self.epsilon


def required_samples(epsilon, delta):
    """Hoeffding budget ``ceil(ln(2/delta) / (2 epsilon^2))`` for a [0,1] mean."""
    _check_unit("epsilon", epsilon)
    _check_unit("delta", delta)
    return math.ceil(math.log(2.0 / delta) / (2.0 * epsilon * epsilon) - 1e-9)


def analytic_extra_error(beta, gamma):
    return 2.0 * gamma / (1.0 - gamma) + 3.0 * beta


def ratio_terms(alpha, beta, log_space=False):
    """Per-sample terms ``1[alpha > beta] * (1 - beta/alpha)``.

    Zero wherever ``alpha`` is zero; with ``log_space`` the inputs are logs.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if log_space:
        hit = alpha > beta
        with np.errstate(invalid="ignore"):
            diff = np.where(hit, beta - alpha, 0.0)
        return np.where(hit, -np.expm1(diff), 0.0)
    hit = alpha > beta
    safe = np.where(hit, alpha, 1.0)
    return np.where(hit, 1.0 - beta / safe, 0.0)


def estimate_tv(sampler_P, eval_P, eval_Q, epsilon, delta, rng=None, *, samples=None):
    """Estimate ``d_TV(P, Q)`` by averaging ratio terms over draws from ``P``.

    :param sampler_P: sample access to ``P``.
    :param eval_P: evaluator for ``P``; ``eval_Q`` likewise for ``Q``.
    :param samples: override the Hoeffding budget with a larger count.
    :return: a :class:`TvEstimate` whose ``error_bound`` holds w.p. ``1 - delta``.
    """
    t = required_samples(epsilon, delta)
    if samples is not None:
        if samples < t:
            raise ParameterError(f"samples={samples} below the required {t}")
        t = int(samples)
    rng = as_generator(rng)
    xs = sampler_P.sample(rng, t)
    if eval_P.log_batch is not None and eval_Q.log_batch is not None:
        terms = ratio_terms(eval_P.log_batch(xs), eval_Q.log_batch(xs), log_space=True)
    else:
        terms = ratio_terms(eval_P.evaluate(xs), eval_Q.evaluate(xs))
    value = float(np.clip(np.mean(terms), 0.0, 1.0))
    extra = analytic_extra_error(max(eval_P.beta, eval_Q.beta), max(eval_P.gamma, eval_Q.gamma))
    return TvEstimate(value, epsilon, delta, t, extra)


def _union(p, q):
    dp, dq = p.as_dict(), q.as_dict()
    keys = list(dp)
    keys.extend(k for k in dq if k not in dp)
    return keys, dp, dq


def exact_tv(p, q):
    keys, dp, dq = _union(p, q)
    total = math.fsum(abs(dp.get(k, 0.0) - dq.get(k, 0.0)) for k in keys)
    return min(1.0, max(0.0, 0.5 * total))


def exact_kl(p, q):
    """``sum_x p(x) ln(p(x)/q(x))``; ``math.inf`` if ``p`` is not dominated by ``q``."""
    dq = q.as_dict()
    terms = []
    for x, px in p.as_dict().items():
        if px <= 0:
            continue
        qx = dq.get(x, 0.0)
        if qx <= 0:
            return math.inf
        terms.append(px * (math.log(px) - math.log(qx)))
    return max(0.0, math.fsum(terms))


def laplace_estimate(counts, support=None):
    """Add-one smoothed frequencies ``(z_i + 1) / (z + k)``."""
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size == 0:
        raise ParameterError("need at least one item")
    if np.any(counts < 0):
        raise ParameterError("counts must be nonnegative")
    k = counts.size
    mass = (counts.astype(np.float64) + 1.0) / (counts.sum() + k)
    support = range(k) if support is None else support
    return DiscreteDistribution(support, mass / mass.sum())


def median_repetitions(delta):
    _check_unit("delta", delta)
    return math.ceil(18.0 * math.log(1.0 / delta) - 1e-9)


def amplify_median(run, delta, rng=None):
    """Median of ``ceil(18 ln(1/delta))`` independent calls ``run(rng)``."""
    rng = as_generator(rng)
    reps = median_repetitions(delta)
    values = [float(run(child(rng, f"median-{i}"))) for i in range(reps)]
    return float(np.median(values))


def boost_repetitions(delta):
    _check_unit("delta", delta)
    reps = math.ceil(324.0 * math.log(2.0 / delta) - 1e-9)
    if reps < 2:
        raise ParameterError(f"delta={delta} gives fewer than two repetitions")
    return reps


def boost_learner(learner, dist_estimator, sample_source, epsilon, delta, rng=None, *,
                  deduplicate=False, details=False):
    """Boost a learner that succeeds w.p. 3/4 to one that succeeds w.p. ``1 - delta``.

    ``learner(sample_source, rng)`` returns a model; ``dist_estimator(a, b,
    eps, delta, rng)`` estimates their distance.  The learner is run ``R``
    times, every pair is compared at accuracy ``epsilon/4`` and the model
    agreeing (estimate at most ``3*epsilon/4``) with the most others wins;
    ties go to the lowest index.

    With ``deduplicate`` the estimator is assumed deterministic, and learner
    outputs that are the same object share one set of distance calls.
    """
    _check_unit("epsilon", epsilon)
    reps = boost_repetitions(delta)
    rng = as_generator(rng)
    eps4 = epsilon / 4.0
    pair_delta = delta / (2.0 * reps * reps)
    threshold = 3.0 * eps4
    models = [learner(sample_source, child(rng, f"learn-{i}")) for i in range(reps)]
    est_rng = child(rng, "pairs")

    if deduplicate:
        group_of, reps_of = {}, []
        labels = np.empty(reps, dtype=np.int64)
        for i, m in enumerate(models):
            g = group_of.setdefault(id(m), len(reps_of))
            if g == len(reps_of):
                reps_of.append(m)
            labels[i] = g
        sizes = np.bincount(labels, minlength=len(reps_of))
        close = np.zeros((len(reps_of), len(reps_of)), dtype=bool)
        for a in range(len(reps_of)):
            close[a, a] = True
            for b in range(a + 1, len(reps_of)):
                d = dist_estimator(reps_of[a], reps_of[b], eps4, pair_delta, est_rng)
                close[a, b] = close[b, a] = d <= threshold
        group_counts = close.astype(np.int64) @ sizes - 1
        counts = group_counts[labels]
    else:
        counts = np.zeros(reps, dtype=np.int64)
        for i in range(reps):
            for j in range(i + 1, reps):
                if dist_estimator(models[i], models[j], eps4, pair_delta, est_rng) <= threshold:
                    counts[i] += 1
                    counts[j] += 1

    best = int(np.argmax(counts))
    if details:
        return models[best], {"index": best, "counts": counts, "repetitions": reps}
    return models[best]
