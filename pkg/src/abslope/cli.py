"""Command-line entry point: ``abslope fit|simulate|predict|lambda``."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .core import Hyperparams, UnusableColumnError, bh_lambda, read_csv
from .predict import DEFAULT_DRAWS, predict_batch
from .saem import FitResult, fit_abslope
from .simulate import METHODS, read_scenario, run_scenario, write_results
from .slobe import fit_slobe

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="abslope",
                                 description="Adaptive Bayesian SLOPE with missing covariates.")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit ABSLOPE or SLOBE to a CSV file")
    f.add_argument("--data", required=True)
    f.add_argument("--response", required=True)
    f.add_argument("--method", choices=("abslope", "slobe"), default="slobe")
    f.add_argument("--q", type=float, default=0.1)
    f.add_argument("--a", type=float, default=None)
    f.add_argument("--b", type=float, default=None)
    f.add_argument("--t0", type=_positive_int, default=20)
    f.add_argument("--max-iter", type=_positive_int, default=500)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--trace", default=None, help="write the per-iteration trace CSV here")
    f.add_argument("--out", required=True, help="model JSON")

    s = sub.add_parser("simulate", help="run a simulation scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    s.add_argument("--timing", action="store_true",
                   help="record wall time per replication (output is then not reproducible)")

    p = sub.add_parser("predict", help="predict rows of a CSV with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--S", type=_positive_int, default=DEFAULT_DRAWS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    lam = sub.add_parser("lambda", help="print the BH penalty sequence")
    lam.add_argument("--p", type=_positive_int, required=True)
    lam.add_argument("--q", type=float, default=0.1)
    return ap


def cmd_fit(args):
    try:
        hyper = Hyperparams(q=args.q, a=args.a, b=args.b, t0=args.t0, max_iter=args.max_iter,
                            tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data = read_csv(args.data, response=args.response)
    fitter = fit_abslope if args.method == "abslope" else fit_slobe
    fit = fitter(data, hyper, seed=args.seed, record_trace=args.trace is not None)
    with open(args.out, "w") as fh:
        json.dump(fit.to_dict(), fh, indent=1)
        fh.write("\n")
    if args.trace is not None:
        fit.write_trace(args.trace)
    return EXIT_OK


def cmd_simulate(args):
    try:
        sc = read_scenario(args.scenario)
    except (OSError, ValueError) as exc:
        raise UsageError(f"scenario: {exc}") from None
    res = run_scenario(sc, args.method, threads=args.threads)
    write_results(res, args.out, timing=args.timing)
    if res.n_failed:
        print(f"{res.n_failed} of {sc.reps} replications failed", file=sys.stderr)
    return EXIT_OK


def _load_model(path):
    try:
        with open(path) as fh:
            return FitResult.from_dict(json.load(fh))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: not a model file ({exc})") from None


def cmd_predict(args):
    fit = _load_model(args.model)
    header, values, _ = read_csv(args.data)
    p = fit.beta_hat.shape[0]
    if fit.columns is not None:
        missing = [c for c in fit.columns if c not in header]
        if missing:
            raise UsageError(f"data lacks model columns: {', '.join(missing)}")
        X = values[:, [header.index(c) for c in fit.columns]]
    elif values.shape[1] == p:
        X = values
    else:
        raise UsageError(f"data has {values.shape[1]} columns, model expects {p}")
    y_hat = predict_batch(X, fit, S=args.S, seed=args.seed)
    with open(args.out, "w") as fh:
        fh.write("row,prediction\n")
        for i, v in enumerate(y_hat):
            fh.write(f"{i},{float(v)!r}\n")
    return EXIT_OK


def cmd_lambda(args):
    try:
        lam = bh_lambda(args.p, args.q)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write("".join(f"{float(v)!r}\n" for v in lam.values))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "predict": cmd_predict, "lambda": cmd_lambda}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"abslope {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, UnusableColumnError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"abslope {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
