# cli.py
"""
Command line front end.

    python cli.py validate model.txt
    python cli.py simulate model.txt --n 10000 --seed 7 > obs.txt
    python cli.py estimate --model model.txt --obs obs.txt --method 2s
    python cli.py benchmark --x 2 --y 2 --reps 3 --sizes 1e3,1e4

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import sentry_sdk
from dotenv import load_dotenv

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import constants as C
import file_formats as F
from benchmark import default_bound, random_initial_P, rmse, run_benchmark, smoothed_start
from hmm_core.errors import NumericalError
from hmm_core.estimators import estimate_em, estimate_mm, estimate_two_step
from hmm_core.markov import require_valid, sample, validate_model
from hmm_core.models import EstimationReport, HmmModel, PolytopeBound
from hmm_core.moments import empirical_moments, polytope_from_elementwise_P_bound
from utils import parse_log_level, setup_logging

logger = logging.getLogger(__name__)

METHODS = {"mm": C.METHOD_MM, "2s": C.METHOD_TWO_STEP, "em": C.METHOD_EM}


def parse_bound(text: str, model: HmmModel) -> PolytopeBound:
    """'auto', a comma-separated list, or 'courtois:<lower-bound file>'."""
    text = text.strip()
    if text == "auto":
        return default_bound(model)
    if text.startswith("courtois:"):
        L = F.read_lower_bound_matrix(text.split(":", 1)[1])
        return polytope_from_elementwise_P_bound(L)
    values = [float(token) for token in text.split(",") if token.strip()]
    if len(values) == 1:
        values = values * model.num_states
    return PolytopeBound(lower=np.array(values))


def _read_observation_arg(path: str, num_outputs: int):
    if path == "-":
        return F.parse_observations(sys.stdin.read(), num_outputs)
    return F.read_observations(path, num_outputs)


def cmd_validate(args: argparse.Namespace) -> int:
    model = F.read_model(args.model, check_distributions=False)
    exit_code = C.EXIT_OK
    for level in ("structural", "assumption1"):
        report = validate_model(model, level)
        print(f"{level}: {'pass' if report.passed else 'fail'}")
        for failure in report.failures:
            print(f"  - {failure}")
        if level == args.level and not report.passed:
            exit_code = C.EXIT_VALIDATION_ERROR
    return exit_code


def cmd_simulate(args: argparse.Namespace) -> int:
    model = F.read_model(args.model)
    obs, states = sample(model, args.n, args.seed)
    if args.out:
        F.write_observations(obs, args.out)
        logger.info(f"✅ {len(obs)} observations written to {args.out}")
    else:
        sys.stdout.write(F.format_observations(obs))
    if args.states:
        Path(args.states).write_text(
            "\n".join(str(int(s) + 1) for s in states) + "\n", encoding="utf-8"
        )
    return C.EXIT_OK


def _estimate(args: argparse.Namespace, model: HmmModel) -> EstimationReport:
    obs = _read_observation_arg(args.obs, model.num_outputs)
    if args.moments_csv:
        F.write_moments_csv(empirical_moments(obs), args.moments_csv)
        logger.info(f"💾 Empirical moments written to {args.moments_csv}")
    method = METHODS[args.method]
    if method == C.METHOD_EM:
        if args.em_init == "true":
            P_init = model.P
        elif args.em_init == "mm":
            P_init = smoothed_start(
                estimate_mm(obs, model.B, model.pi0, parse_bound(args.bound, model)).P_hat
            )
        else:
            P_init = random_initial_P(model.num_states, args.seed)
        return estimate_em(obs, model.B, model.pi0, P_init, args.tol, args.max_iter)

    require_valid(model, "assumption1")
    bound = parse_bound(args.bound, model)
    if method == C.METHOD_MM:
        return estimate_mm(obs, model.B, model.pi0, bound, dump_kkt=args.dump_kkt)
    return estimate_two_step(obs, model.B, model.pi0, bound, dump_kkt=args.dump_kkt)


def cmd_estimate(args: argparse.Namespace) -> int:
    model = F.read_model(args.model)
    report = _estimate(args, model)
    if args.format == "csv":
        row = {**report.to_row(), "rmse": rmse(report.P_hat, model.P)}
        pd.DataFrame([row]).to_csv(sys.stdout, index=False, float_format=C.CSV_FLOAT_FORMAT)
    else:
        print(report.to_text())
        print(f"rmse: {rmse(report.P_hat, model.P):.10g}")
    return C.EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    overrides = {
        "num_states": args.x,
        "num_outputs": args.y,
        "replicates": args.reps,
        "sample_sizes": F.parse_sizes(args.sizes) if args.sizes else None,
        "master_seed": args.seed,
        "arms": F.parse_arms(args.arms) if args.arms else None,
        "output_dir": args.output,
        "workers": args.workers or int(os.environ.get(C.WORKERS_ENV, "1")),
    }
    config = F.read_config(args.config, overrides) if args.config else F.parse_config("", overrides)
    medians, _ = run_benchmark(config)
    print(medians.to_csv(index=False, float_format=C.CSV_FLOAT_FORMAT), end="")
    return C.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Two-step (moment matching + Newton) estimation of HMM transition matrices."
    )
    parser.add_argument("--log-level", default=None, help=f"Overrides ${C.LOG_LEVEL_ENV}.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Check a model file.")
    p.add_argument("model")
    p.add_argument("--level", choices=["structural", "assumption1"], default="structural")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("simulate", help="Sample observations from a model file.")
    p.add_argument("model")
    p.add_argument("--n", type=int, default=10_000, help="Number of observations.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="Observation file (stdout if omitted).")
    p.add_argument("--states", default=None, help="Also write the hidden state path here.")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("estimate", help="Estimate P from observations; B and pi0 come from the model file.")
    p.add_argument("--model", required=True)
    p.add_argument("--obs", required=True, help="Observation file, or '-' for stdin.")
    p.add_argument("--method", choices=sorted(METHODS), default="2s")
    p.add_argument("--bound", default="auto", help="auto | l1,l2,... | courtois:<file>")
    p.add_argument("--em-init", choices=["random", "mm", "true"], default="random")
    p.add_argument("--seed", type=int, default=C.DEFAULT_MASTER_SEED, help="Seed of the random EM start.")
    p.add_argument("--tol", type=float, default=C.EM_TOLERANCE)
    p.add_argument("--max-iter", type=int, default=C.EM_MAX_ITER)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--moments-csv", default=None, help="Also write the empirical moment matrix here.")
    p.add_argument("--dump-kkt", default=None, help="Write the final KKT system of the MM QP here (mm, 2s).")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("benchmark", help="Seeded Monte Carlo comparison; writes CSV tables.")
    p.add_argument("--config", default=None, help="key=value file; flags override it.")
    p.add_argument("--x", type=int, default=None)
    p.add_argument("--y", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--sizes", default=None, help="Comma-separated, e.g. 1e3,1e4")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--arms", default=None, help="Comma-separated subset of mm,em,em-mm,em-true,2s")
    p.add_argument("--output", default=None)
    p.add_argument("--workers", type=int, default=None, help=f"Defaults to ${C.WORKERS_ENV} or 1.")
    p.set_defaults(handler=cmd_benchmark)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)

    sentry_dsn = os.environ.get(C.SENTRY_DSN_ENV)
    if sentry_dsn:
        sentry_sdk.init(dsn=sentry_dsn, traces_sample_rate=1.0, environment="cli")

    setup_logging(level=parse_log_level(args.log_level or os.environ.get(C.LOG_LEVEL_ENV)))

    try:
        return args.handler(args)
    except NumericalError as e:
        logger.error(f"❌ Numerical failure: {e}")
        if sentry_dsn:
            sentry_sdk.capture_exception(e)
        print(f"error: {e}", file=sys.stderr)
        return C.EXIT_NUMERICAL_ERROR
    except (ValueError, OSError) as e:
        logger.error(f"❌ Invalid input: {e}")
        if sentry_dsn:
            sentry_sdk.capture_exception(e)
        print(f"error: {e}", file=sys.stderr)
        return C.EXIT_VALIDATION_ERROR


if __name__ == "__main__":
    sys.exit(main())
