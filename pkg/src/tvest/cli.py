"""``tvest`` command-line interface.

Exit codes: 0 success, 1 contract violation, 2 family mismatch, 3 size guard,
64 usage error.  Failures print one ``error: {json}`` line on stderr.
"""

import argparse
import json
import math
import sys
from pathlib import Path

from . import io
from .bayesnet import (
    bn_learning_m,
    default_threshold,
    estimate_tv_bns,
    kl_between_bns,
    learn_bn,
    random_bn,
)
from .calibration import load_constants
from .causal import Intervention, interventional_distribution, random_cbn
from .core import exact_kl, median_repetitions, required_samples
from .errors import FamilyMismatchError, ParameterError, SizeError, TvestError
from .experiments import CSV_HEADER, BenchmarkRecord, boost_demo, exact_oracle, parameter_estimate, run_benchmark
from .gaussian import estimate_tv_gaussians, gaussian_sample_budget, kl_gaussians, learn_gaussian, random_gaussian
from .ising import EXACT_LIMIT_N, estimate_tv_ising, ising_sample, ising_sample_budget, learn_ising, random_ising
from .rng import stream

EXIT_CODES = {"family_mismatch": 2, "size_guard": 3, "usage": 64}


class UsageError(Exception):
    code = "usage"


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _emit(out, payload, fmt):
    """Write a flat result dict as ``key=value`` lines or JSON."""
    if fmt == "json":
        text = json.dumps(payload, sort_keys=True) + "\n"
    elif fmt == "text":
        text = "".join(f"{k}={_fmt(v)}\n" for k, v in payload.items())
    else:
        raise UsageError("csv output is only available for estimate-tv, exact-tv and benchmark")
    _write(out, text)


def _write(out, text):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _unit(name):
    def parse(s):
        v = float(s)
        if not 0 < v < 1:
            raise argparse.ArgumentTypeError(f"{name} must lie in (0, 1)")
        return v

    return parse


def _int_list(s):
    return [int(x) for x in s.split(",") if x]


def _float_list(s):
    return [float(x) for x in s.split(",") if x]


def _intervention(spec):
    if spec is None:
        return None
    node, sep, value = spec.partition("=")
    if not sep:
        raise UsageError("--intervene expects NODE=VALUE")
    return Intervention(node, int(value))


def _load_pair(args):
    if not args.model or not args.model2:
        raise UsageError("--model and --model2 are both required")
    p = io.load_model(args.model, args.family)
    q = io.load_model(args.model2, args.family)
    fp, fq = io.family_of(p), io.family_of(q)
    if fp != fq:
        raise FamilyMismatchError(f"--model is {fp} but --model2 is {fq}")
    return fp, p, q


def _dims(family, model):
    if family == "bayesnet":
        return model.n, model.dag.in_degree
    if family == "ising":
        return model.n, model.width
    if family == "gaussian":
        return model.n, None
    return len(model.v), model.admg.in_degree


# -- commands -----------------------------------------------------------------

def cmd_gen_model(args):
    if args.family is None or args.n is None:
        raise UsageError("--family and --n are required")
    if args.family == "ising" and args.width is None:
        raise UsageError("ising models need --width")
    if args.n < 1 or args.d < 0 or args.alphabet < 2 or args.hidden < 0:
        raise ParameterError("need n >= 1, d >= 0, alphabet >= 2, hidden >= 0")
    rng = stream(args.seed, f"gen-model/{args.family}")
    if args.family == "bayesnet":
        model = random_bn(args.n, args.d, args.alphabet, rng)
    elif args.family == "ising":
        if args.width <= 0:
            raise ParameterError("width must be positive")
        model = random_ising(args.n, args.width, rng, theta=args.theta)
    elif args.family == "gaussian":
        model = random_gaussian(args.n, rng)
    else:
        if args.hidden and args.n < 2:
            raise ParameterError("hidden confounders need at least two observables")
        model = random_cbn(args.n, args.d, args.alphabet, rng, hidden=args.hidden)
    _write(args.out, io.dumps(model))


def cmd_sample(args):
    if not args.model:
        raise UsageError("--model is required")
    model = io.load_model(args.model, args.family)
    family = io.family_of(model)
    if args.count < 1:
        raise ParameterError("--count must be positive")
    rng = stream(args.seed, "sample")
    iv = _intervention(args.intervene)
    if iv is not None and family != "causal":
        raise ParameterError("--intervene applies to causal models only")
    if family == "ising":
        mode = args.mode or ("exact" if model.n <= EXACT_LIMIT_N else "glauber")
        X = ising_sample(model, rng, size=args.count, mode=mode, burn_in=args.burn_in)
    elif family == "causal":
        X = model.sample(rng, args.count, iv)
    else:
        X = model.sample(rng, args.count)
    _write(args.out, io.format_samples(X))


def cmd_learn(args):
    if not args.samples:
        raise UsageError("--samples is required")
    family = args.family
    template = io.load_model(args.model, family) if args.model else None
    if family is None:
        if template is None:
            raise UsageError("--family (or a --model template) is required")
        family = io.family_of(template)
    X = io.read_samples(args.samples, real=family == "gaussian")
    if family == "bayesnet":
        if template is None:
            raise UsageError("bayesnet learning needs --model for the DAG")
        k = template.alphabet_size
        t = args.threshold if args.threshold is not None else default_threshold(template.n, template.dag.in_degree, k)
        model = learn_bn(X, template.dag, k, t=t)
    elif family == "ising":
        if args.width is None:
            raise UsageError("ising learning needs --width")
        model = learn_ising(X, args.width, args.epsilon, args.delta, check_budget=not args.skip_budget_check)
    elif family == "gaussian":
        model = learn_gaussian(X)
    else:
        raise ParameterError("learning causal models from observational samples is not supported")
    _write(args.out, io.dumps(model))


def _tv_payload(family, n, d, est, seed, mode, oracle=None):
    payload = {"family": family, "mode": mode, "n": n, "d": d, "estimate": est.value,
               "target_epsilon": est.details.get("target", est.epsilon),
               "extra_error": est.extra_error, "epsilon": est.epsilon, "error_bound": est.error_bound,
               "delta": est.delta, "samples_used": est.samples_used, "seed": seed}
    if oracle is not None:
        payload["oracle_value"] = oracle
    return payload


def _csv_line(family, n, d, epsilon, samples_used, estimate, oracle, seed):
    rec = BenchmarkRecord(family, n, d, epsilon, seed, samples_used, estimate, oracle)
    return CSV_HEADER + "\n" + rec.csv_row() + "\n"


def cmd_estimate_tv(args):
    rng = stream(args.seed, "estimate-tv")
    iv = _intervention(args.intervene)
    if args.samples or args.samples2:
        if not args.samples or not args.samples2:
            raise UsageError("sample mode needs --samples and --samples2")
        family = args.family
        if family is None:
            raise UsageError("sample mode needs --family")
        if family == "bayesnet":
            if not args.model or not args.model2:
                raise UsageError("bayesnet sample mode needs --model/--model2 for the two DAGs")
            fam, p, q = _load_pair(args)
            XP, XQ = io.read_samples(args.samples), io.read_samples(args.samples2)
            est = estimate_tv_bns(XP, XQ, p.dag, q.dag, p.alphabet_size, args.epsilon, args.delta, rng)
            n, d = p.n, max(p.dag.in_degree, q.dag.in_degree)
        elif family == "ising":
            if args.width is None:
                raise UsageError("ising sample mode needs --width")
            XP, XQ = io.read_samples(args.samples), io.read_samples(args.samples2)
            est = estimate_tv_ising(XP, XQ, args.width, args.epsilon, args.delta, rng,
                                    check_budget=not args.skip_budget_check, partition=args.partition)
            n, d = XP.shape[1], args.width
        elif family == "gaussian":
            XP, XQ = io.read_samples(args.samples, real=True), io.read_samples(args.samples2, real=True)
            est = estimate_tv_gaussians(XP, XQ, args.epsilon, args.delta, rng,
                                        check_budget=not args.skip_budget_check)
            n, d = XP.shape[1], None
        else:
            raise ParameterError("causal estimation runs on model files (parameter mode)")
        mode, oracle = "sample", None
    else:
        family, p, q = _load_pair(args)
        if family == "causal":
            if iv is not None:
                p.check_intervention(iv)
        elif iv is not None:
            raise ParameterError("--intervene applies to causal models only")
        if _dims(family, p)[0] != _dims(family, q)[0]:
            raise ParameterError("models have different numbers of variables")
        est = parameter_estimate(family, p, q, args.epsilon, args.delta, rng, iv)
        n, d = _dims(family, p)
        mode = "parameter"
        try:
            oracle = exact_oracle(family, p, q, iv)
        except TvestError:
            oracle = None
    if args.format == "csv":
        _write(args.out, _csv_line(family, n, d, est.epsilon, est.samples_used, est.value, oracle, args.seed))
    else:
        _emit(args.out, _tv_payload(family, n, d, est, args.seed, mode, oracle), args.format)


def cmd_exact_tv(args):
    family, p, q = _load_pair(args)
    iv = _intervention(args.intervene)
    if iv is not None and family != "causal":
        raise ParameterError("--intervene applies to causal models only")
    value = exact_oracle(family, p, q, iv)
    n, d = _dims(family, p)
    if args.format == "csv":
        _write(args.out, _csv_line(family, n, d, 0.0, 0, value, value, args.seed))
    else:
        _emit(args.out, {"family": family, "n": n, "exact_tv": value}, args.format)


def cmd_estimate_kl(args):
    family, p, q = _load_pair(args)
    iv = _intervention(args.intervene)
    se = 0.0
    if family == "bayesnet" and (p.dag != q.dag or p.alphabet_size != q.alphabet_size):
        # no shared factorization: enumerate the joints (size-guarded)
        value = exact_kl(p.joint(), q.joint())
    elif family == "bayesnet":
        value, se = kl_between_bns(p, q, rng=stream(args.seed, "estimate-kl"), mc_samples=args.mc_samples,
                                   details=True)
    elif family == "gaussian":
        value = kl_gaussians(p, q)
    elif family == "ising":
        value = exact_kl(p.joint(), q.joint())
    else:
        value = exact_kl(interventional_distribution(p, iv), interventional_distribution(q, iv))
    payload = {"family": family, "kl": value if math.isfinite(value) else "inf", "standard_error": se}
    _emit(args.out, payload, args.format)


def cmd_sample_size(args):
    if args.family is None or args.n is None:
        raise UsageError("--family and --n are required")
    eps, delta = args.epsilon, args.delta
    payload = {"family": args.family, "n": args.n, "epsilon": eps, "delta": delta}
    if args.family == "bayesnet":
        per = bn_learning_m(args.n, args.d, args.alphabet, eps)
        reps = median_repetitions(delta)
        payload |= {"learning_per_repetition": per, "repetitions": reps, "learning_total": per * reps,
                    "learning_constant": "24 (explicit)"}
    elif args.family == "ising":
        if args.width is None:
            raise UsageError("ising needs --width")
        c = load_constants()["ising_learning_constant"]
        payload |= {"width": args.width, "learning_total": ising_sample_budget(args.n, args.width, eps, delta),
                    "learning_constant": f"{c!r} (calibrated)"}
    elif args.family == "gaussian":
        c = load_constants()["gaussian_learning_constant"]
        payload |= {"learning_total": gaussian_sample_budget(args.n, eps),
                    "learning_constant": f"{c!r} (calibrated)"}
    else:
        payload |= {"learning_total": None, "learning_constant": "not applicable (known models)"}
    payload["estimator_samples"] = required_samples(eps, delta)
    _emit(args.out, payload, args.format)


def cmd_benchmark(args):
    if args.family is None:
        raise UsageError("--family is required")
    ns = args.n_values or ([args.n] if args.n else [3, 4, 5])
    epsilons = args.epsilons or [args.epsilon]
    records = run_benchmark(args.family, ns, args.d, epsilons, args.trials, args.seed, delta=args.delta,
                            alphabet=args.alphabet, width=args.width if args.width is not None else 1.0,
                            hidden=args.hidden, timing=args.timing, jobs=args.jobs)
    if args.format == "json":
        rows = [{"family": r.family, "n": r.n, "d": r.d, "epsilon": r.epsilon, "samples_used": r.samples_used,
                 "estimate": r.estimate, "oracle_value": r.oracle_value, "abs_error": r.abs_error,
                 "wall_time_ms": r.wall_time_ms, "seed": r.seed, "error": r.error} for r in records]
        _write(args.out, json.dumps(rows, sort_keys=True) + "\n")
    else:
        _write(args.out, CSV_HEADER + "\n" + "".join(r.csv_row() + "\n" for r in records))
    failures = [f"{i},{json.dumps(r.error)}\n" for i, r in enumerate(records) if r.error]
    if failures:
        text = "row,error\n" + "".join(failures)
        if args.out:
            Path(str(args.out) + ".errors.csv").write_text(text)
        else:
            sys.stderr.write(text)


def cmd_boost_demo(args):
    wins, trials, reps = boost_demo(args.epsilon, args.delta, args.trials, args.seed)
    _emit(args.out, {"epsilon": args.epsilon, "delta": args.delta, "repetitions": reps, "trials": trials,
                     "successes": wins, "success_rate": wins / trials, "seed": args.seed}, args.format)


COMMANDS = {
    "gen-model": (cmd_gen_model, "write a random model as JSON"),
    "sample": (cmd_sample, "draw samples from a model file"),
    "learn": (cmd_learn, "fit a model to a sample file"),
    "estimate-tv": (cmd_estimate_tv, "estimate TV distance from models or samples"),
    "exact-tv": (cmd_exact_tv, "exact TV distance by enumeration"),
    "estimate-kl": (cmd_estimate_kl, "KL divergence between two models"),
    "sample-size": (cmd_sample_size, "learning and estimation sample budgets"),
    "benchmark": (cmd_benchmark, "seeded sweep written as CSV"),
    "boost-demo": (cmd_boost_demo, "success rate of the boosted mock learner"),
}


def build_parser():
    common = Parser(add_help=False)
    common.add_argument("--family", choices=io.FAMILIES)
    common.add_argument("--model")
    common.add_argument("--model2")
    common.add_argument("--samples")
    common.add_argument("--samples2")
    common.add_argument("--epsilon", type=_unit("epsilon"), default=0.1)
    common.add_argument("--delta", type=_unit("delta"), default=0.1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--out")
    common.add_argument("--format", choices=("text", "csv", "json"), default="text")
    shape = common.add_argument_group("model shape")
    shape.add_argument("--n", type=int)
    shape.add_argument("--d", type=int, default=1)
    shape.add_argument("--alphabet", type=int, default=2)
    shape.add_argument("--width", type=float)
    shape.add_argument("--theta", type=float, default=0.0)
    shape.add_argument("--hidden", type=int, default=0)
    extra = common.add_argument_group("command options")
    extra.add_argument("--count", type=int, default=1000, help="sample: number of draws")
    extra.add_argument("--mode", choices=("exact", "glauber"), help="sample: ising sampler")
    extra.add_argument("--burn-in", type=int, default=1000, help="sample: glauber burn-in sweeps")
    extra.add_argument("--intervene", metavar="NODE=VALUE", help="causal: atomic intervention")
    extra.add_argument("--threshold", type=int, help="learn: bayesnet count threshold t")
    extra.add_argument("--skip-budget-check", action="store_true",
                       help="learn/estimate-tv: allow fewer samples than the calibrated budget")
    extra.add_argument("--partition", choices=("ais", "exact"), default="ais",
                       help="estimate-tv: ising partition function method in sample mode")
    extra.add_argument("--mc-samples", type=int, default=100_000, help="estimate-kl: draws above the guard")
    extra.add_argument("--n-values", type=_int_list, help="benchmark: comma-separated n grid")
    extra.add_argument("--epsilons", type=_float_list, help="benchmark: comma-separated epsilon grid")
    extra.add_argument("--timing", action="store_true", help="benchmark: fill wall_time_ms")
    extra.add_argument("--jobs", type=int, default=1, help="benchmark: worker processes")

    parser = Parser(prog="tvest", description="Total-variation distance estimation for structured distributions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def _fail(code, message, **extra):
    sys.stderr.write("error: " + json.dumps({"code": code, "message": message, **extra}, sort_keys=True) + "\n")
    return EXIT_CODES.get(code, 1)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command][0](args)
    except UsageError as exc:
        return _fail("usage", str(exc))
    except SizeError as exc:
        return _fail(exc.code, str(exc), bits=exc.bits, limit=exc.limit)
    except TvestError as exc:
        return _fail(exc.code, str(exc))
    except ValueError as exc:
        return _fail("parameter", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
