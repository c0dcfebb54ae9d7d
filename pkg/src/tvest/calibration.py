"""Empirically calibrated constants for learners whose sample complexity is
only known up to order.

The values live in ``calibration.json`` next to this module.  Running
``python -m tvest.calibration`` repeats both procedures and prints the
constants they imply; the pinned values carry some margin above those.
"""

import json
import math
from functools import lru_cache
from importlib import resources

import numpy as np


@lru_cache(maxsize=None)
def load_constants():
    with resources.files(__package__).joinpath("calibration.json").open() as fh:
        return json.load(fh)


def calibrate_gaussian(dims=(2, 3, 4), m=2000, trials=200, quantile=0.9, seed=1):
    """Smallest ``C`` with ``d_TV(truth, learned) <= sqrt(C n^2 / m)`` at the quantile.

    The learned-vs-truth TV law is affine invariant, so ``N(0, I)`` stands in
    for every truth.  TV is measured by the parameter-mode estimator at
    accuracy 0.005.
    """
    from .gaussian import GaussianParams, learn_gaussian, tv_between_gaussians_params
    from .rng import stream

    implied = {}
    for n in dims:
        rng = stream(seed, f"gaussian-calibration-{n}")
        truth = GaussianParams(np.zeros(n), np.eye(n))
        tv = [tv_between_gaussians_params(truth, learn_gaussian(truth.sample(rng, m)), 0.005, 0.05, rng).value
              for _ in range(trials)]
        q = float(np.quantile(tv, quantile))
        implied[n] = q * q * m / (n * n)
    return implied


def calibrate_ising(grid=((2, 0.5), (3, 0.5), (4, 1.0), (6, 1.0), (8, 1.0)), m=10 ** 8, models=20,
                    quantile=0.95, delta=0.1, seed=1):
    """Implied ``C`` in ``m = C e^(6d) n^3 ln(n/delta) / eps^2`` per (n, width) cell.

    For random ferromagnetic models the quantile of ``max_x |log P(x) -
    log P_hat(x)|`` after learning from ``m`` samples is scaled to ``c =
    q sqrt(m)``; reaching error ``eps`` then needs ``c^2 / eps^2`` samples.
    """
    from .ising import SpinCounts, learn_ising, max_log_ratio, random_ising
    from .rng import stream

    implied = {}
    for n, w in grid:
        rng = stream(seed, f"ising-calibration-{n}-{w}")
        errs = []
        for _ in range(models):
            truth = random_ising(n, w, rng)
            fit = learn_ising(SpinCounts.from_model(truth, m, rng), w, 0.5, delta, check_budget=False)
            errs.append(max_log_ratio(truth, fit))
        c = float(np.quantile(errs, quantile)) * math.sqrt(m)
        implied[(n, w)] = c * c / (math.exp(6 * w) * n ** 3 * math.log(n / delta))
    return implied


if __name__ == "__main__":
    print("pinned:", load_constants())
    for n, c in calibrate_gaussian().items():
        print(f"gaussian n={n}: implied C = {c:.3f}")
    for (n, w), c in calibrate_ising().items():
        print(f"ising n={n} width={w}: implied C = {c:.4f}")
