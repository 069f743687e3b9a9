"""Command-line interface.

Subcommands: ``simulate`` (one cell), ``sweep`` (grid), ``bounds`` (theory
report), ``gen-instance`` and ``prepare-movielens``. Any flag may also come
from ``--config FILE``, a flat ``key = value`` file using the flag names
(``runs = 2000``, ``algs = unif,sh``); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .baselines import ALGORITHMS, AlgorithmParams
from .core import BanditInstance, InstanceError, load_instance, save_instance
from .harness import (
    ExperimentConfig,
    FixedProblem,
    RatingsProblem,
    SweepTable,
    SyntheticProblem,
    _FixedDraw,
    run_cell,
    sweep,
    write_provenance,
)
from .instances import SyntheticSpec, complete_matrix, ingest_ratings, subsample_ratings, synthetic_instance
from .theory import theory_report

logger = logging.getLogger("varbai")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list:
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _alg_list(text: str) -> list:
    names = [v.strip() for v in str(text).split(",") if v.strip()]
    for name in names:
        if name not in ALGORITHMS:
            raise argparse.ArgumentTypeError(f"unknown algorithm {name!r} (choose from {','.join(ALGORITHMS)})")
    return names


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="base random seed; fully determines outputs (default: 0)")
    p.add_argument("-o", "--output", help="output file (default: standard output)")
    p.add_argument("--config", help="flat key=value file of flag defaults")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr (repeatable)")


def _add_problem(p):
    p.add_argument("--ratings", help="completed-ratings .npz from prepare-movielens (default: synthetic Gaussian bandit)")
    p.add_argument(
        "--target-scale",
        choices=("catalogue", "raw"),
        default="catalogue",
        help="with --ratings: map target means onto the movie-mean range (catalogue) or match them unscaled (raw) (default: catalogue)",
    )
    p.add_argument("--fixed-instance", action="store_true", help="reuse the instance of run 0 in every run (debugging)")
    p.add_argument("--delta", type=float, default=0.05, help="shadavar confidence parameter (default: 0.05)")
    p.add_argument("--gamma", type=float, default=1.96, help="vbr confidence width (default: 1.96)")
    p.add_argument("--runs", type=int, default=5000, help="Monte Carlo runs per cell (default: 5000)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes (default: all cores)")
    p.add_argument("--timing", action="store_true", help="record mean runtime per run (makes output non-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varbai",
        description="Fixed-budget best-arm identification with heterogeneous variances.",
        epilog="Sequential-halving algorithms use floor(n / ceil(log2 K)) pulls per stage; leftover budget is unused.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="mistake probability of one algorithm at one (K, n)")
    _add_common(p)
    p.add_argument("--alg", required=True, choices=ALGORITHMS)
    p.add_argument("--K", type=int, help="number of arms (taken from --instance if given)")
    p.add_argument("--n", type=int, required=True, help="budget")
    p.add_argument("--instance", help="fixed Gaussian instance file (JSON with means, variances)")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    _add_problem(p)

    p = sub.add_parser("sweep", help="mistake probabilities over algorithms x K x n")
    _add_common(p)
    p.add_argument("--algs", type=_alg_list, required=True, help="comma-separated algorithm names")
    p.add_argument("--K", type=_int_list, required=True, help="comma-separated arm counts")
    p.add_argument("--n", type=_int_list, required=True, help="comma-separated budgets")
    p.add_argument("--provenance", help="also write the full config as JSON here")
    _add_problem(p)

    p = sub.add_parser("bounds", help="evaluate the theoretical error bounds for an instance")
    _add_common(p)
    p.add_argument("--means", type=_float_list)
    p.add_argument("--vars", type=_float_list)
    p.add_argument("--instance", help="instance file instead of --means/--vars")
    p.add_argument("--n", type=int, required=True, help="budget")
    p.add_argument("--delta", type=float, help="delta for the adaptive bound (default: 1/(2Kn))")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("gen-instance", help="write a synthetic instance file")
    _add_common(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--unperturbed", action="store_true", help="closed-form means and variances, no noise")

    p = sub.add_parser("prepare-movielens", help="complete a MovieLens ratings file by rank-5 ALS")
    _add_common(p)
    p.add_argument("input", help="ratings file in UserID::MovieID::Rating::Timestamp format")
    p.add_argument("--max-users", type=int, help="keep at most this many of the most active users")
    p.add_argument("--max-movies", type=int, help="keep at most this many of the most rated movies")
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--reg", type=float, default=0.1, help="ridge penalty (default: 0.1)")
    p.add_argument("--iters", type=int, default=20, help="ALS iterations (default: 20)")
    return parser


def read_config(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv):
    """Parse ``argv``, taking missing flags from ``--config`` if one is given."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    values = read_config(known.config)
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"{known.config}: unknown setting {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{known.config}: bad value for {key}: {exc}") from None
        else:
            defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _write_output(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _cmd_simulate(args) -> int:
    params = AlgorithmParams(delta=args.delta, gamma=args.gamma)
    if args.instance:
        instance = load_instance(args.instance)
        problem = FixedProblem(instance)
        K = instance.n_arms
        if args.K is not None and args.K != K:
            raise UsageError(f"--K {args.K} does not match the {K}-armed instance")
    else:
        if args.K is None:
            raise UsageError("--K is required without --instance")
        K = args.K
        problem = RatingsProblem(args.ratings, target_scale=args.target_scale) if args.ratings else SyntheticProblem()
        if args.fixed_instance:
            problem = _FixedDraw(problem, args.seed)
    ExperimentConfig((args.alg,), (K,), (args.n,), args.runs, args.seed, delta=args.delta, gamma=args.gamma).validate()
    cell = run_cell(args.alg, problem, K, args.n, args.runs, args.seed, params, args.threads, timing=args.timing)
    row = cell.row
    if args.format == "csv":
        text = SweepTable([row]).to_csv()
        for w in cell.warnings:
            logger.warning(w)
    elif args.format == "json":
        record = dict(zip(("algorithm", "K", "n", "runs", "mistakes", "mistake_prob", "std_err", "mean_runtime_ms"), (row.algorithm, row.K, row.n, row.runs, row.mistakes, row.mistake_prob, row.std_err, row.mean_runtime_ms)))
        record["warnings"] = cell.warnings
        text = json.dumps(record, sort_keys=True) + "\n"
    else:
        lines = [
            f"algorithm      {row.algorithm}",
            f"K              {row.K}",
            f"n              {row.n}",
            f"runs           {row.runs}",
            f"mistakes       {row.mistakes}",
            f"mistake_prob   {row.mistake_prob:.10g}",
            f"std_err        {row.std_err:.10g}",
        ]
        if row.mean_runtime_ms is not None:
            lines.append(f"runtime_ms     {row.mean_runtime_ms:.10g}")
        lines += [f"warning        {w}" for w in cell.warnings]
        text = "\n".join(lines) + "\n"
    _write_output(args.output, text)
    return 0


def _cmd_sweep(args) -> int:
    config = ExperimentConfig(
        algorithms=tuple(args.algs),
        K_values=tuple(args.K),
        n_values=tuple(args.n),
        runs=args.runs,
        base_seed=args.seed,
        ratings_path=args.ratings,
        target_scale=args.target_scale,
        fixed_instance=args.fixed_instance,
        delta=args.delta,
        gamma=args.gamma,
        threads=args.threads,
        timing=args.timing,
    )
    config.validate()
    done = []
    try:
        table = sweep(config, on_row=done.append)
    except Exception:
        if args.output and done:
            partial = f"{args.output}.partial"
            _write_output(partial, SweepTable(done).to_csv())
            logger.error("sweep aborted; %d finished rows written to %s", len(done), partial)
        raise
    _write_output(args.output, table.to_csv())
    if args.provenance:
        write_provenance(config, args.provenance)
    return 0


def _cmd_bounds(args) -> int:
    if args.instance:
        instance = load_instance(args.instance)
    else:
        if args.means is None or args.vars is None:
            raise UsageError("give --means and --vars, or --instance")
        instance = BanditInstance(args.means, args.vars)
    report = theory_report(instance, args.n, args.delta)
    text = report.to_text() + "\n"
    if args.format == "json":
        text = json.dumps(report.to_dict(), sort_keys=True) + "\n"
    _write_output(args.output, text)
    return 0


def _cmd_gen_instance(args) -> int:
    spec = SyntheticSpec.unperturbed(args.K) if args.unperturbed else SyntheticSpec(args.K)
    instance = synthetic_instance(spec, args.seed)
    if args.output:
        save_instance(instance, args.output)
    else:
        sys.stdout.write(json.dumps(instance.to_dict(), indent=2) + "\n")
    return 0


def _cmd_prepare(args) -> int:
    if not args.output:
        raise UsageError("prepare-movielens needs -o/--output for the .npz file")
    ratings = ingest_ratings(args.input)
    if args.max_users or args.max_movies:
        ratings = subsample_ratings(ratings, args.max_users, args.max_movies)
    completed = complete_matrix(ratings, args.rank, args.reg, args.iters, args.seed)
    out = Path(args.output)
    tmp = out.with_name(f".{out.name}.tmp.npz")
    completed.save(tmp)
    os.replace(tmp, out)
    sys.stdout.write(
        f"users {completed.matrix.shape[0]}\nmovies {completed.matrix.shape[1]}\nratings {len(ratings)}\nrmse {completed.rmse:.6g}\n"
    )
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "bounds": _cmd_bounds,
    "gen-instance": _cmd_gen_instance,
    "prepare-movielens": _cmd_prepare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"varbai: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"varbai: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, InstanceError, OSError, RuntimeError) as exc:
        print(f"varbai: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
