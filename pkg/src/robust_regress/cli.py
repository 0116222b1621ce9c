"""Command-line entry point: ``robust-regress {gen,fit,bench,spread-check}``.

Exit codes: 0 success, 1 user error, 2 estimation failure.  Every error
prints one line ``error: <code>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, huber, median, spread
from .errors import EstimationFailure, RobustRegressError
from .io import instance_from_csv, instance_to_csv, truth_to_csv
from .model import build_instance, error_metrics, gaussian_design, make_noise, parse_noise, random_beta
from .rng import RandomSource

EXIT_OK, EXIT_USER, EXIT_ESTIMATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


_formatter = functools.partial(argparse.HelpFormatter, width=88, max_help_position=32)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robust-regress", formatter_class=_formatter,
                description="Robust linear regression under oblivious outliers.")
    sub = p.add_subparsers(dest="command", metavar="{gen,fit,bench,spread-check}",
                           parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="generate a Gaussian-design instance", formatter_class=_formatter)
    g.add_argument("--n", type=int, required=True, help="number of samples")
    g.add_argument("--d", type=int, required=True, help="number of covariates")
    g.add_argument("--alpha", type=float, required=True, help="inlier fraction in (0, 1]")
    g.add_argument("--noise", required=True, metavar="KIND:VALUE",
                   help="outlier pattern: spike:MAG, gauss:SIGMA or pareto:SHAPE")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--beta-norm", type=float, default=5.0, help="norm of beta* (default 5)")
    g.add_argument("--out", required=True, metavar="FILE", help="instance CSV to write")
    g.add_argument("--truth-out", metavar="FILE", help="also write beta* and eta to this CSV")

    f = sub.add_parser("fit", help="fit an estimator to an instance file", formatter_class=_formatter)
    f.add_argument("--in", dest="infile", required=True, metavar="FILE", help="instance CSV")
    f.add_argument("--estimator", default="huber",
                   help="huber, median, median-boot, sparse-boot:K or nonspherical (default huber)")
    f.add_argument("--h", type=float, default=2.0, help="Huber transition point (default 2)")
    f.add_argument("--scale", type=float, default=2.0, help="Huber loss multiplier (default 2)")
    f.add_argument("--delta", metavar="D|auto",
                   help="bound on 3(1+||beta*||) for median-boot, sparse-boot and nonspherical")
    f.add_argument("--seed", type=int, default=0, help="seed for the randomized estimators")
    f.add_argument("--truth", metavar="FILE", help="truth CSV; adds err_param and err_pred")
    f.add_argument("--out", required=True, metavar="FILE", help="result JSON to write")

    b = sub.add_parser("bench", help="run a Monte-Carlo sweep", formatter_class=_formatter)
    b.add_argument("--config", required=True, metavar="FILE", help="key = value experiment config")
    b.add_argument("--out", required=True, metavar="DIR", help="output directory")
    b.add_argument("--timing", action="store_true",
                   help="also write per-trial wall times (not reproducible byte for byte)")

    s = sub.add_parser("spread-check", help="search for spreadness violations of a design",
                       formatter_class=_formatter)
    s.add_argument("--in", dest="infile", required=True, metavar="FILE", help="instance CSV")
    s.add_argument("--m", type=int, required=True, help="number of deleted coordinates")
    s.add_argument("--restarts", type=int, default=32, help="random restarts (default 32)")
    s.add_argument("--seed", type=int, default=0, help="seed for the restarts")
    s.add_argument("--out", required=True, metavar="FILE", help="report JSON to write")
    return p


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | Path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise FileNotFoundError(f"cannot write {path}: {exc.strerror}") from None


def cmd_gen(args) -> int:
    spec = parse_noise(args.noise, args.alpha)
    src = RandomSource(args.seed)
    X = gaussian_design(args.n, args.d, src.child(1))
    eta = make_noise(args.n, spec, src.child(2))
    beta = random_beta(args.d, args.beta_norm, src.child(3))
    inst = build_instance(beta, X, eta)
    _write(args.out, instance_to_csv(inst))
    if args.truth_out:
        _write(args.truth_out, truth_to_csv(inst.truth))
    return EXIT_OK


def _delta(args, inst) -> float:
    if args.delta is None:
        raise UsageError(f"--estimator {args.estimator} needs --delta D or --delta auto")
    if args.delta == "auto":
        return median.estimate_norm_bound(inst)
    try:
        return float(args.delta)
    except ValueError:
        raise UsageError(f"--delta must be a number or 'auto', got {args.delta!r}") from None


def cmd_fit(args) -> int:
    inst = instance_from_csv(_read(args.infile), _read(args.truth) if args.truth else None)
    params = huber.HuberParams(h=args.h, scale=args.scale)
    rng = RandomSource(args.seed)
    name, _, k = args.estimator.partition(":")
    trace = None
    if name == "huber":
        result = huber.minimize_huber(inst, params)
    elif name in ("median", "median-boot", "sparse-boot", "nonspherical"):
        if name == "median":
            beta = median.multivariate_median_iteration(inst, median.MedianConfig(), rng)
            iterations = 1
        else:
            trace = []
            if name == "sparse-boot":
                if not k.isdigit():
                    raise UsageError("sparse-boot needs a sparsity, e.g. sparse-boot:5")
                cfg = median.MedianConfig(delta_bound=_delta(args, inst), sparsity_k=int(k))
                beta = median.sparse_bootstrap(inst, cfg, rng, trace=trace)
            elif name == "median-boot":
                cfg = median.MedianConfig(delta_bound=_delta(args, inst))
                beta = median.bootstrap_median(inst, cfg, rng, trace=trace)
            else:
                cfg = median.MedianConfig(delta_bound=_delta(args, inst))
                cov = median.estimate_covariance(inst.X)
                second = inst.rows(np.arange(inst.n // 2, inst.n))
                beta = median.nonspherical_bootstrap(second, cfg, cov, rng, trace=trace)
            iterations = len(trace)
        grad = huber.huber_gradient(inst, beta, params)
        result = huber.EstimatorResult(beta, iterations, float(np.linalg.norm(grad)),
                                       huber.huber_loss(inst, beta, params), True)
    else:
        raise UsageError(f"unknown estimator {args.estimator!r}")

    out = result.to_dict()
    out["estimator"] = args.estimator
    if trace is not None:
        out["trace"] = trace
    if inst.truth is not None:
        out.update(error_metrics(result.beta_hat, inst))
    _write(args.out, json.dumps(out, indent=2) + "\n")
    if not result.converged:
        raise EstimationFailure(
            f"gradient norm {result.final_grad_norm:.3g} above tolerance after {result.iterations} iterations")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = harness.parse_config(_read(args.config))
    records = harness.run_trials(cfg)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FileNotFoundError(f"cannot create {out}: {exc.strerror}") from None
    _write(out / "records.jsonl", "".join(r.to_json() + "\n" for r in records))
    _write(out / "aggregate.csv", harness.aggregate_csv(harness.aggregate(records)))
    if args.timing:
        _write(out / "timings.csv", "n,trial,runtime_ms\n" + "".join(
            f"{r.n},{r.trial},{r.runtime_ms!r}\n" for r in records))
    return EXIT_OK


def cmd_spread(args) -> int:
    inst = instance_from_csv(_read(args.infile))
    report = spread.spread_witness_search(inst.X, args.m, args.restarts, RandomSource(args.seed))
    _write(args.out, report.to_json() + "\n")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "bench": cmd_bench, "spread-check": cmd_spread}


def _fail(code: str, message: str, status: int) -> int:
    print(f"error: {code}: {' '.join(message.split())}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        usage = str(exc).split("\n", 1)
        if len(usage) > 1:
            print(usage[1], file=sys.stderr)
        return _fail("usage", usage[0], EXIT_USER)
    except EstimationFailure as exc:
        return _fail(exc.code, str(exc), EXIT_ESTIMATION)
    except RobustRegressError as exc:
        return _fail(exc.code, str(exc), EXIT_USER)
    except FileNotFoundError as exc:
        return _fail("io", str(exc), EXIT_USER)


if __name__ == "__main__":
    sys.exit(main())
