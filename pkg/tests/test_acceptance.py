"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Trial counts, tolerances and time limits are the ones the criteria state.
Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""

import itertools
import math
import time

import numpy as np
import pytest

from tvest.bayesnet import Dag, kl_between_bns, learn_bn, random_bn
from tvest.causal import (
    Intervention,
    c_components,
    estimate_tv_interventional,
    interventional_distribution,
    random_cbn,
)
from tvest.cli import main
from tvest.core import (
    DiscreteDistribution,
    EvalApproximator,
    analytic_extra_error,
    boost_repetitions,
    estimate_tv,
    exact_kl,
    exact_tv,
    laplace_estimate,
    required_samples,
)
from tvest.experiments import CSV_HEADER, boost_demo
from tvest.gaussian import (
    GaussianParams,
    estimate_tv_gaussians,
    gaussian_sample_budget,
    tv_1d_equal_variance,
    tv_1d_quadrature,
    tv_between_gaussians_params,
)
from tvest.ising import (
    SpinCounts,
    estimate_partition,
    estimate_tv_ising,
    exact_partition,
    ising_sample_budget,
    random_ising,
)
from tvest.rng import stream

from conftest import ACCEPTANCE_LINES
from constructions import causal_pair, confounded_instance, five_node_admg, ising_pair


def report(number, ok, summary, elapsed, limit):
    """Record and print the criterion line, then assert it."""
    within = elapsed < limit
    passed = bool(ok) and within
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {summary}; {elapsed:.1f}s (limit {limit}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def random_dist(rng, k=16):
    return DiscreteDistribution(range(k), rng.dirichlet(np.ones(k)))


# -- 1: exact evaluators ---------------------------------------------------------------

def test_criterion_01_core_estimator():
    t0 = time.perf_counter()
    eps, delta, trials = 0.05, 0.1, 200
    hits = 0
    for trial in range(trials):
        rng = stream(trial, "acc1")
        p, q = random_dist(rng), random_dist(rng)
        est = estimate_tv(p.sampler(), p.evaluator(), q.evaluator(), eps, delta, rng)
        assert est.samples_used == required_samples(eps, delta)
        hits += abs(est.value - exact_tv(p, q)) <= eps
    rate = hits / trials
    report(1, rate >= 0.85, f"|estimate - exact| <= {eps} in {rate:.3f} of {trials} trials (need 0.85)",
           time.perf_counter() - t0, 5)


# -- 2: beta, gamma > 0 ----------------------------------------------------------------

def test_criterion_02_error_budget():
    t0 = time.perf_counter()
    eps, delta, beta, gamma, trials = 0.03, 0.1, 0.02, 0.05, 200
    bound = analytic_extra_error(beta, gamma) + eps
    assert bound == pytest.approx(2 * gamma / (1 - gamma) + 3 * beta + eps)
    hits = 0
    for trial in range(trials):
        rng = stream(trial, "acc2")
        p, q, r = random_dist(rng), random_dist(rng), random_dist(rng)
        # P_hat = (1 - s) P + s R sits at exact TV beta from P
        s = beta / exact_tv(p, r)
        p_hat = DiscreteDistribution(range(16), (1 - s) * p.mass + s * r.mass)
        assert exact_tv(p, p_hat) == pytest.approx(beta, abs=1e-12)
        wobble = np.where(np.arange(16) % 2 == 0, 1 + gamma, 1 - gamma)
        ev_p = EvalApproximator(lambda x, m=p_hat.mass: m[x] * wobble[x], beta=beta, gamma=gamma)
        est = estimate_tv(p.sampler(), ev_p, q.evaluator(), eps, delta, rng)
        assert est.extra_error == pytest.approx(bound - eps)
        hits += abs(est.value - exact_tv(p, q)) <= bound
    rate = hits / trials
    report(2, rate >= 0.85, f"|estimate - exact| <= {bound:.4f} in {rate:.3f} of {trials} trials (need 0.85)",
           time.perf_counter() - t0, 10)


# -- 3: Bayes-net learning -------------------------------------------------------------

def test_criterion_03_bayesnet_learning():
    t0 = time.perf_counter()
    n, d, eps, trials = 4, 1, 0.2, 200
    m = math.ceil(24 * n * 2 ** d * math.log(n * 2 ** d) / eps)
    t = math.ceil(12 * math.log(n * 2 ** d))
    bn = random_bn(n, d, 2, stream(3, "acc3"), dag=Dag.chain(n))
    hits = 0
    for trial in range(trials):
        X = bn.sample(stream(trial, "acc3-data"), m)
        hits += kl_between_bns(bn, learn_bn(X, bn.dag, 2, m=m, t=t)) <= 6 * eps
    rate = hits / trials
    report(3, rate >= 0.70, f"KL <= {6 * eps:.1f} in {rate:.3f} of {trials} trials at m={m}, t={t} (need 0.70)",
           time.perf_counter() - t0, 60)


# -- 4: KL decomposition ---------------------------------------------------------------

def test_criterion_04_kl_chain_rule():
    t0 = time.perf_counter()
    rng = stream(4, "acc4")
    worst = 0.0
    for _ in range(100):
        p = random_bn(4, 2, 2, rng)
        q = random_bn(4, 2, 2, rng, dag=p.dag)
        worst = max(worst, abs(kl_between_bns(p, q) - exact_kl(p.joint(), q.joint())))
    report(4, worst <= 1e-9, f"max |decomposed - joint KL| = {worst:.2e} over 100 pairs (need <= 1e-9)",
           time.perf_counter() - t0, 10)


# -- 5: Laplace estimator --------------------------------------------------------------

def test_criterion_05_laplace_bound():
    t0 = time.perf_counter()
    trials = 10_000
    worst, ok = -math.inf, True
    for k, z in itertools.product((2, 4, 8), (1, 9, 99)):
        rng = stream(5, f"acc5-{k}-{z}")
        D = DiscreteDistribution(range(k), rng.dirichlet(np.ones(k)))
        counts = rng.multinomial(z, D.mass, size=trials)
        kls = np.array([exact_kl(D, laplace_estimate(c)) for c in counts])
        se = kls.std(ddof=1) / math.sqrt(trials)
        slack = kls.mean() - ((k - 1) / (z + 1) + 3 * se)
        worst = max(worst, slack)
        ok &= slack <= 0
    report(5, ok, f"mean KL - ((k-1)/(z+1) + 3 SE) peaks at {worst:.4f} over 9 cells (need <= 0)",
           time.perf_counter() - t0, 60)


# -- 6: Pinsker ------------------------------------------------------------------------

def test_criterion_06_pinsker():
    t0 = time.perf_counter()
    rng = stream(6, "acc6")
    violations = 0
    for _ in range(1000):
        k = int(rng.integers(2, 17))
        p, q = random_dist(rng, k), random_dist(rng, k)
        violations += exact_tv(p, q) ** 2 > 2 * exact_kl(p, q)
    report(6, violations == 0, f"{violations} violations of tv^2 <= 2 KL on 1000 pairs",
           time.perf_counter() - t0, 2)


# -- 7: Ising partition function -------------------------------------------------------

def test_criterion_07_ising_partition():
    t0 = time.perf_counter()
    rng = stream(7, "acc7")
    hits = 0
    for _ in range(50):
        m = random_ising(12, 2.0, rng)
        assert m.width <= 2 + 1e-12
        est = estimate_partition(m, 0.1, 0.1, rng)
        hits += abs(est.value / exact_partition(m).value - 1) <= 0.1
    rate = hits / 50
    report(7, rate >= 0.9, f"|Z_hat/Z - 1| <= 0.1 for {hits}/50 models (need 0.90)",
           time.perf_counter() - t0, 120)


# -- 8: Ising pipeline -----------------------------------------------------------------

def test_criterion_08_ising_pipeline():
    t0 = time.perf_counter()
    eps, delta, width, trials = 0.12, 0.1, 0.8, 50
    p, q = ising_pair()
    D = exact_tv(p.joint(), q.joint())
    m = ising_sample_budget(p.n, width, eps / 8, delta / 5)
    hits = 0
    for trial in range(trials):
        rng = stream(trial, "acc8")
        # the learning budget from each model, plus a Monte Carlo hold-out from P
        sp = SpinCounts.from_model(p, m + 30_000, rng)
        sq = SpinCounts.from_model(q, m, rng)
        est = estimate_tv_ising(sp, sq, width, eps, delta, rng)
        assert est.error_bound <= eps + 1e-12
        hits += abs(est.value - D) <= eps
    rate = hits / trials
    report(8, rate >= 0.8, f"|estimate - {D:.4f}| <= {eps} in {rate:.3f} of {trials} trials, "
                           f"m={m} per model (need 0.80)", time.perf_counter() - t0, 600)


# -- 9, 10: Gaussians ------------------------------------------------------------------

def test_criterion_09_gaussian_parameter_mode():
    t0 = time.perf_counter()
    p, q = GaussianParams([0.0], [[1.0]]), GaussianParams([1.0], [[1.0]])
    oracle = tv_1d_quadrature(p, q)
    assert oracle == pytest.approx(0.38292, abs=5e-6)
    hits = sum(abs(tv_between_gaussians_params(p, q, 0.02, 0.1, stream(t, "acc9")).value - oracle) <= 0.02
               for t in range(100))
    report(9, hits >= 90, f"|estimate - {oracle:.5f}| <= 0.02 in {hits}/100 trials (need 90)",
           time.perf_counter() - t0, 10)


def test_criterion_10_gaussian_pipeline():
    t0 = time.perf_counter()
    eps, delta, trials = 0.1, 0.1, 50
    p, q = GaussianParams([0.0, 0.0], np.eye(2)), GaussianParams([1.0, 0.0], np.eye(2))
    oracle = tv_1d_quadrature(GaussianParams([0.0], [[1.0]]), GaussianParams([1.0], [[1.0]]))
    assert oracle == pytest.approx(tv_1d_equal_variance(0, 1, 1), abs=1e-9)
    m = gaussian_sample_budget(2, eps / 4)
    t_mc = required_samples(eps / 4, delta)
    hits = 0
    for trial in range(trials):
        rng = stream(trial, "acc10")
        est = estimate_tv_gaussians(p.sample(rng, m + t_mc), q.sample(rng, m), eps, delta, rng)
        hits += abs(est.value - oracle) <= eps
    rate = hits / trials
    report(10, rate >= 0.8, f"|estimate - {oracle:.5f}| <= {eps} in {rate:.3f} of {trials} trials, "
                            f"m={m} (need 0.80)", time.perf_counter() - t0, 60)


# -- 11, 12: causal --------------------------------------------------------------------

def test_criterion_11_causal_exactness():
    t0 = time.perf_counter()
    rng = stream(11, "acc11")
    worst_sum, worst_err = 0.0, 0.0
    for _ in range(100):
        cbn = random_cbn(5, 2, 2, rng)
        a = cbn.v[int(rng.integers(len(cbn.v)))]
        val = int(rng.integers(2))
        obs = interventional_distribution(cbn, None)
        do = interventional_distribution(cbn, Intervention(a, val))
        worst_sum = max(worst_sum, abs(do.mass.sum() - 1))
        ia = cbn.v.index(a)
        for x in itertools.product((0, 1), repeat=len(cbn.v)):
            if x[ia] != val:
                closed = 0.0
            else:
                assign = dict(zip(cbn.v, x))
                own = cbn.cpt[a][tuple(assign[p] for p in cbn.parents[a]) + (val,)]
                closed = obs.prob(x) / own
            worst_err = max(worst_err, abs(do.prob(x) - closed))
    conf = confounded_instance()
    obs = interventional_distribution(conf, None)
    do = interventional_distribution(conf, Intervention("A", 1))
    p_do = sum(m for (a, b), m in do.as_dict().items() if b == 1)
    p_cond = obs.prob((1, 1)) / (obs.prob((1, 0)) + obs.prob((1, 1)))
    ok = worst_sum <= 1e-12 and worst_err <= 1e-12 and abs(p_do - p_cond) > 0.05
    report(11, ok, f"closed-form error {worst_err:.1e}, mass error {worst_sum:.1e} on 100 instances; "
                   f"confounded P_a(B=1)={p_do:.3f} vs P(B=1|A=1)={p_cond:.3f}", time.perf_counter() - t0, 10)


def test_criterion_12_causal_estimation():
    t0 = time.perf_counter()
    p, q, iv = causal_pair()
    D = exact_tv(interventional_distribution(p, iv), interventional_distribution(q, iv))
    hits = sum(abs(estimate_tv_interventional(p, q, iv, 0.05, 0.1, stream(t, "acc12")).value - D) <= 0.05
               for t in range(100))
    comps = c_components(five_node_admg())
    ok = hits >= 90 and comps == [("A", "C"), ("B", "D", "E")]
    report(12, ok, f"|estimate - {D:.3f}| <= 0.05 in {hits}/100 trials (need 90); c-components {comps}",
           time.perf_counter() - t0, 30)


# -- 13: boosting ----------------------------------------------------------------------

def test_criterion_13_boosting():
    t0 = time.perf_counter()
    wins, trials, reps = boost_demo(0.2, 0.05, 400, seed=13)
    ok = reps == math.ceil(324 * math.log(40)) == boost_repetitions(0.05) and wins / trials >= 0.95
    report(13, ok, f"within epsilon in {wins}/{trials} trials with R={reps} (need 0.95)",
           time.perf_counter() - t0, 30)


# -- 14: CLI determinism ---------------------------------------------------------------

def test_criterion_14_cli_determinism(tmp_path, capsys):
    t0 = time.perf_counter()

    def run(*argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    f = {}
    shapes = {"bayesnet": ["--n", 4, "--d", 1], "ising": ["--n", 5, "--width", 1.0],
              "gaussian": ["--n", 2], "causal": ["--n", 4, "--d", 1, "--hidden", 1]}
    for fam, shape in shapes.items():
        for i in (0, 1):
            f[fam, i] = tmp_path / f"{fam}{i}.json"
            run("gen-model", "--family", fam, *shape, "--seed", i, "--out", f[fam, i])
    for key, model, count in (("bs", f["bayesnet", 0], 2000), ("is0", f["ising", 0], 8000),
                              ("is1", f["ising", 1], 8000), ("gs0", f["gaussian", 0], 3000),
                              ("gs1", f["gaussian", 1], 3000)):
        f[key] = tmp_path / f"{key}.txt"
        run("sample", "--model", model, "--count", count, "--seed", 3, "--out", f[key])

    commands = [["gen-model", "--family", fam, *shape, "--seed", 9] for fam, shape in shapes.items()]
    commands += [["sample", "--model", f[fam, 0], "--count", 40, "--seed", 9] for fam in shapes]
    commands += [["estimate-tv", "--model", f[fam, 0], "--model2", f[fam, 1], "--seed", 9, "--format", fmt]
                 for fam in shapes for fmt in ("text", "csv", "json")]
    commands += [["exact-tv", "--model", f[fam, 0], "--model2", f[fam, 1]] for fam in ("bayesnet", "ising", "causal")]
    commands += [["estimate-kl", "--model", f[fam, 0], "--model2", f[fam, 1], "--seed", 9] for fam in shapes]
    commands += [
        ["estimate-tv", "--family", "bayesnet", "--samples", f["bs"], "--samples2", f["bs"],
         "--model", f["bayesnet", 0], "--model2", f["bayesnet", 0], "--epsilon", 0.3, "--seed", 9],
        ["estimate-tv", "--family", "ising", "--samples", f["is0"], "--samples2", f["is1"], "--width", 1.0,
         "--epsilon", 0.2, "--skip-budget-check", "--seed", 9],
        ["estimate-tv", "--family", "gaussian", "--samples", f["gs0"], "--samples2", f["gs1"],
         "--skip-budget-check", "--seed", 9],
        ["learn", "--family", "bayesnet", "--samples", f["bs"], "--model", f["bayesnet", 0], "--seed", 9],
        ["learn", "--family", "ising", "--samples", f["is0"], "--width", 1.0, "--skip-budget-check", "--seed", 9],
        ["learn", "--family", "gaussian", "--samples", f["gs0"], "--skip-budget-check", "--seed", 9],
        ["sample-size", "--family", "bayesnet", "--n", 4, "--d", 1, "--epsilon", 0.2],
        ["sample-size", "--family", "gaussian", "--n", 3],
        ["boost-demo", "--epsilon", 0.2, "--trials", 5, "--seed", 9],
    ]
    mismatched, failed = [], []
    for argv in commands:
        first, second = run(*argv), run(*argv)
        if first[0] != 0:
            failed.append((argv[0], first[2].strip()))
        if first != second:
            mismatched.append(argv[0])
    headers_ok = True
    for fam in shapes:
        out_a, out_b = tmp_path / f"bench-{fam}-a.csv", tmp_path / f"bench-{fam}-b.csv"
        for out in (out_a, out_b):
            run("benchmark", "--family", fam, "--n-values", "2,3", "--trials", 3, "--seed", 9, "--out", out)
        if out_a.read_bytes() != out_b.read_bytes():
            mismatched.append(f"benchmark {fam}")
        headers_ok &= out_a.read_text().splitlines()[0] == CSV_HEADER
    ok = not mismatched and not failed and headers_ok
    detail = (f"{len(commands) + 4} commands run twice, {len(mismatched)} differ, {len(failed)} failed; "
              f"benchmark header {'matches' if headers_ok else 'differs'}")
    if failed:
        detail += f"; first failure {failed[0]}"
    report(14, ok, detail, time.perf_counter() - t0, 60)
