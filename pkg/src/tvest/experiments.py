"""Benchmark sweeps and the boosting demonstration behind the CLI.

Every random choice is drawn from a stream keyed by the sweep seed and the
row's grid coordinates, so rows do not depend on evaluation order.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bayesnet import random_bn
from .causal import (
    Cbn,
    Intervention,
    check_identifiability,
    estimate_tv_interventional,
    interventional_distribution,
    random_cbn,
)
from .core import DiscreteDistribution, boost_learner, boost_repetitions, estimate_tv, exact_tv
from .errors import ParameterError, TvestError
from .gaussian import random_gaussian, tv_1d_quadrature, tv_between_gaussians_params
from .ising import EXACT_LIMIT_N, estimate_partition, random_ising
from .rng import stream

CSV_HEADER = "family,n,d,epsilon,samples_used,estimate,oracle_value,abs_error,wall_time_ms,seed"


@dataclass
class BenchmarkRecord:
    family: str
    n: int
    d: object
    epsilon: float
    seed: int
    samples_used: int = None
    estimate: float = None
    oracle_value: float = None
    wall_time_ms: float = None
    error: str = None

    @property
    def abs_error(self):
        if self.estimate is None or self.oracle_value is None:
            return None
        return abs(self.estimate - self.oracle_value)

    def csv_row(self):
        def f(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return format(v, ".12g")
            return str(v)

        return ",".join(f(v) for v in (self.family, self.n, self.d, self.epsilon, self.samples_used,
                                        self.estimate, self.oracle_value, self.abs_error,
                                        self.wall_time_ms, self.seed))


def random_pair(family, n, d, rng, *, alphabet=2, width=1.0, hidden=0):
    """Two independent random models of the family, plus an intervention for causal."""
    if family == "bayesnet":
        return random_bn(n, d, alphabet, rng), random_bn(n, d, alphabet, rng), None
    if family == "ising":
        return random_ising(n, width, rng), random_ising(n, width, rng), None
    if family == "gaussian":
        return random_gaussian(n, rng), random_gaussian(n, rng), None
    if family == "causal":
        # same graph, fresh tables
        p = random_cbn(n, d, alphabet, rng, hidden=hidden)
        q = Cbn(p.v, p.parents, {x: rng.dirichlet(np.ones(alphabet), size=p.cpt[x].shape[:-1]) for x in p.v},
                p.hidden, alphabet)
        node = next((x for x in p.v if check_identifiability(p.admg, x)), None)
        return p, q, Intervention(node, 0)
    raise ParameterError(f"unknown family {family!r}")


def parameter_estimate(family, p, q, epsilon, delta, rng, iv=None):
    """Sample-and-evaluate estimate using the models' own samplers and evaluators."""
    if family == "gaussian":
        return tv_between_gaussians_params(p, q, epsilon, delta, rng)
    if family == "causal":
        if iv is None:
            pd, qd = interventional_distribution(p, None), interventional_distribution(q, None)
            return estimate_tv(pd.sampler(), pd.evaluator(), qd.evaluator(), epsilon, delta, rng)
        return estimate_tv_interventional(p, q, iv, epsilon, delta, rng)
    if family == "ising" and p.n > EXACT_LIMIT_N:
        # AIS partitions at a tenth of the accuracy, reported through gamma
        zp = estimate_partition(p, epsilon / 10, delta / 3, rng)
        zq = estimate_partition(q, epsilon / 10, delta / 3, rng)
        return estimate_tv(p.sampler("glauber"), p.evaluator(zp.log_value, gamma=epsilon / 10),
                           q.evaluator(zq.log_value, gamma=epsilon / 10), epsilon, delta / 3, rng)
    return estimate_tv(p.sampler(), p.evaluator(), q.evaluator(), epsilon, delta, rng)


def exact_oracle(family, p, q, iv=None):
    """Exact TV where enumeration (or 1-D quadrature) is available."""
    if family == "gaussian":
        if p.n != 1:
            raise ParameterError("no exact TV oracle for multivariate Gaussians")
        return tv_1d_quadrature(p, q)
    if family == "causal":
        return exact_tv(interventional_distribution(p, iv), interventional_distribution(q, iv))
    return exact_tv(p.joint(), q.joint())


def _benchmark_row(family, n, d, eps, trial, seed, delta, alphabet, width, hidden, timing):
    rng = stream(seed, f"benchmark/{family}/{n}/{d}/{eps}/{trial}")
    dcol = width if family == "ising" else (None if family == "gaussian" else d)
    rec = BenchmarkRecord(family, n, dcol, eps, seed)
    t0 = time.perf_counter()
    try:
        p, q, iv = random_pair(family, n, d, rng, alphabet=alphabet, width=width, hidden=hidden)
        if family == "causal" and iv.node is None:
            raise ParameterError("no node identifiable in the generated model")
        est = parameter_estimate(family, p, q, eps, delta, rng, iv)
        rec.samples_used, rec.estimate = est.samples_used, est.value
    except TvestError as exc:
        rec.error = f"{exc.code}: {exc}"
    if timing:
        rec.wall_time_ms = round((time.perf_counter() - t0) * 1000.0, 3)
    if rec.error is None:
        try:
            rec.oracle_value = exact_oracle(family, p, q, iv)
        except TvestError:
            pass
    return rec


def run_benchmark(family, ns, d, epsilons, trials, seed, *, delta=0.1, alphabet=2, width=1.0, hidden=0,
                  timing=False, jobs=1):
    """One :class:`BenchmarkRecord` per (n, epsilon, trial), in grid order.

    Failures are captured on the record (``error``) and the sweep continues.
    With ``jobs > 1`` rows are computed in worker processes; each row owns its
    RNG stream and results are collected in grid order, so output is unchanged.
    """
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if jobs < 1:
        raise ParameterError("jobs must be at least 1")
    grid = [(family, n, d, eps, trial, seed, delta, alphabet, width, hidden, timing)
            for n in ns for eps in epsilons for trial in range(trials)]
    if jobs == 1:
        return [_benchmark_row(*cell) for cell in grid]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_benchmark_row, *zip(*grid), chunksize=max(1, len(grid) // (4 * jobs))))


def boost_demo(epsilon, delta, trials, seed, *, support=8, menu=4, success=0.75):
    """Boost a mock learner that is within ``epsilon/4`` of the truth w.p. ``success``.

    Good outputs come from a fixed menu of hypotheses within ``epsilon/4``;
    failures come from a menu of point masses.  Distances are exact.
    Returns (successes, trials, repetitions) where a success means the
    boosted output lies within ``epsilon`` of the truth.
    """
    reps = boost_repetitions(delta)

    def distance(a, b, eps, dlt, rng):
        return exact_tv(a, b)

    wins = 0
    for trial in range(trials):
        rng = stream(seed, f"boost/{trial}")
        truth = DiscreteDistribution(range(support), rng.dirichlet(np.ones(support)))
        good = []
        for _ in range(menu):
            other = rng.dirichlet(np.ones(support))
            s = rng.uniform(0.0, 1.0) * epsilon / 4
            good.append(DiscreteDistribution(range(support), (1 - s) * truth.mass + s * other, normalize=True))
        bad = [DiscreteDistribution.point_mass(int(a)) for a in rng.choice(support, size=menu, replace=False)]

        def learner(src, r):
            pool = good if r.random() < success else bad
            return pool[int(r.integers(len(pool)))]

        out = boost_learner(learner, distance, None, epsilon, delta, rng, deduplicate=True)
        wins += exact_tv(out, truth) <= epsilon + 1e-12
    return wins, trials, reps

