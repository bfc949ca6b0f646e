"""Command line entry point: ``vcgmm {fit,bench,coreset,seed,eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .baselines import kmeanspp_fit
from .bench import (ALGORITHMS, ExperimentSpec, map_partition, nmi, relative_error,
                    grid_configs, run_experiment, run_single, split_data,
                    write_results)
from .coreset import LwcsConfig, build_lightweight_coreset, identity_coreset
from .errors import ConfigError, ContractViolation, DataFormatError, NumericalAbort
from .instrument import DistanceCounter
from .model import GmmParams, quantization_error
from .report import RunReport
from .seeding import SeedingConfig, afkmc2_seed, dsquared_seed, uniform_seed

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _seed_list(tokens) -> tuple[int, ...]:
    out: list[int] = []
    for tok in tokens:
        if ":" in tok:
            lo, hi = tok.split(":", 1)
            out.extend(range(int(lo), int(hi)))
        else:
            out.append(int(tok))
    return tuple(out)


def _data_args(p, required=True):
    p.add_argument("--data", required=required, help="dataset file (.csv or binary)")
    p.add_argument("--format", choices=("csv", "binary"), default=None)


def _algo_args(p, multi: bool):
    nargs = "+" if multi else None
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--c-prime", type=int, default=None, help="default: equal to G")
    p.add_argument("--g-size", nargs=nargs, default=["5"] if multi else "5",
                   help="neighborhood size; '3+1' adds one random cluster")
    p.add_argument("--plus-one", action="store_true")
    p.add_argument("--coreset-size", type=int, nargs=nargs, default=None)
    p.add_argument("--chain-length", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--init-esteps", type=int, default=0)
    p.add_argument("--test-split", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vcgmm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="run one algorithm once")
    _data_args(p)
    _algo_args(p, multi=False)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="vc-gmm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", action="store_true",
                   help="also run k-means++ with the same seed to report the relative error")

    p = sub.add_parser("bench", help="seeded grid over algorithms and settings")
    _data_args(p)
    _algo_args(p, multi=True)
    p.add_argument("--algorithms", nargs="+", choices=ALGORITHMS, default=["vc-gmm"])
    p.add_argument("--seed-chain-lengths", type=int, nargs="+", default=[2, 5, 10, 20])
    p.add_argument("--seeds", nargs="+", default=["0:50"], help="integers or ranges a:b")

    p = sub.add_parser("coreset", help="build and save a lightweight coreset")
    _data_args(p)
    p.add_argument("--coreset-size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("seed", help="seeding only")
    _data_args(p)
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--method", choices=("afkmc2", "d2", "uniform"), default="afkmc2")
    p.add_argument("--chain-length", type=int, default=2)
    p.add_argument("--coreset-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output model JSON")

    p = sub.add_parser("eval", help="metrics for a saved model")
    _data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--reference", default=None, help="model whose MAP partition is the NMI reference")
    p.add_argument("--labels", default=None, help="CSV with one reference label per row")
    p.add_argument("--out", default=None, help="output JSON")
    return parser


def _spec(args, multi: bool) -> ExperimentSpec:
    sizes = args.coreset_size
    if sizes is None:
        sizes = []
    elif not multi:
        sizes = [sizes]
    g_sizes = args.g_size if multi else [args.g_size]
    algorithms = tuple(args.algorithms) if multi else (args.algorithm,)
    needs_coreset = {"vc-gmm", "lwcs-kmeans"} & set(algorithms)
    if needs_coreset and not sizes:
        raise ConfigError(f"{sorted(needs_coreset)} need --coreset-size")
    try:
        seeds = _seed_list(args.seeds) if multi else (args.seed,)
    except ValueError:
        raise ConfigError(f"invalid seed list {args.seeds}") from None
    return ExperimentSpec(
        dataset=args.data, data_format=args.format, algorithms=algorithms,
        n_clusters=args.clusters, coreset_sizes=tuple(sizes), g_sizes=tuple(g_sizes),
        c_prime=args.c_prime, plus_one=args.plus_one, chain_length=args.chain_length,
        seed_chain_lengths=tuple(getattr(args, "seed_chain_lengths", (args.chain_length,))),
        convergence_epsilon=args.epsilon, max_iterations=args.max_iters,
        n_initial_esteps=args.init_esteps, seeds=seeds, test_split=args.test_split,
        n_workers=args.workers)


def _print_report(rep: RunReport, out=None) -> None:
    out = out or sys.stdout
    print(f"algorithm            {rep.algorithm}", file=out)
    if rep.final_objective is not None:
        print(f"final objective      {rep.final_objective:.10g}", file=out)
    print(f"iterations           {rep.n_iterations} (converged: {rep.converged})", file=out)
    print(f"quantization error   {rep.final_quantization_error:.10g}", file=out)
    print(f"eta vs k-means++     {'n/a' if rep.eta is None else f'{rep.eta:+.4f}'}", file=out)
    counts = ", ".join(f"{k}={v}" for k, v in rep.distance_counts.items())
    print(f"distance evaluations {rep.total_distance_evaluations} ({counts})", file=out)
    total = rep.algorithm_time
    fractions = ", ".join(f"{k}={v / total:.1%}" for k, v in rep.wall_times.items()
                          if k != "evaluation" and total > 0)
    print(f"time                 {total:.3f}s ({fractions})", file=out)


def _cmd_fit(args) -> int:
    spec = _spec(args, multi=False)
    data = io.load_dataset(args.data, args.format)
    spec.validate(data.shape[0])
    train, test = split_data(data, spec.test_split, spec.split_seed)
    algo = spec.algorithms[0]
    params = next((p for _, p in grid_configs(spec)), {})
    means, rep = run_single(algo, params, spec, train, test, args.seed)
    rep.seed = args.seed
    rep.config_echo.update(grid=params, spec=asdict(spec))
    if args.baseline:
        base_means, base = run_single("kmeanspp", {}, spec, train, test, args.seed)
        rep.eta = relative_error(rep.final_quantization_error, base.final_quantization_error)
        rep.nmi = nmi(map_partition(test, means), map_partition(test, base_means))
    _print_report(rep)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.save_model(GmmParams(means, rep.final_variance or 1.0), out / "model.json",
                      {"algorithm": algo})
        write_results([rep], out / "results.jsonl")
    return 0


def _cmd_bench(args) -> int:
    spec = _spec(args, multi=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        spec.results_path = str(out / "results.jsonl")
        spec.summary_path = str(out / "summary.json")
    reports, summary = run_experiment(spec)
    for key, entry in summary.items():
        eta = entry.get("eta", {})
        speed = entry.get("speedup_distance_evaluations")
        frac = entry.get("setup_time_fraction", {}).get("mean", 0.0)
        print(f"{key:55s} runs={entry['n_runs']:3d} failed={entry['n_failed']} "
              f"eta={eta.get('mean', float('nan')):+.4f}±{eta.get('sem', float('nan')):.4f} "
              f"speedup(dist)={'-' if speed is None else f'{speed:.1f}x'} "
              f"setup-time={frac:.1%}")
    return 0


def _cmd_coreset(args) -> int:
    data = io.load_dataset(args.data, args.format)
    counter = DistanceCounter("coreset")
    coreset = build_lightweight_coreset(data, LwcsConfig(args.coreset_size, args.seed), counter)
    io.save_coreset(coreset, args.out)
    print(f"coreset of {coreset.n_core} points, total weight {coreset.total_weight:.6g}, "
          f"{counter['coreset']} distance evaluations -> {args.out}")
    return 0


def _cmd_seed(args) -> int:
    data = io.load_dataset(args.data, args.format)
    cfg = SeedingConfig(args.clusters, args.chain_length, args.seed)
    counter = DistanceCounter("seeding")
    if args.method == "afkmc2":
        coreset = (identity_coreset(data) if args.coreset_size is None else
                   build_lightweight_coreset(data, LwcsConfig(args.coreset_size, args.seed),
                                             counter))
        with counter.phase("seeding"):
            means = afkmc2_seed(coreset, cfg, counter)
    elif args.method == "d2":
        means = dsquared_seed(data, cfg, counter)
    else:
        means = uniform_seed(data, cfg)
    q = quantization_error(data, means)
    print(f"{args.method} seeding: C={args.clusters} quantization error {q:.10g}, "
          f"{counter.total()} distance evaluations")
    if args.out:
        io.save_model(GmmParams(means, 1.0), args.out, {"algorithm": f"seed-{args.method}"})
    return 0


def _cmd_eval(args) -> int:
    data = io.load_dataset(args.data, args.format)
    params = io.load_model(args.model)
    if params.dim != data.shape[1]:
        raise DataFormatError(f"model dimension {params.dim} != data dimension {data.shape[1]}")
    labels = map_partition(data, params)
    result = {"quantization_error": quantization_error(data, params.means),
              "n_points": int(data.shape[0]), "n_clusters": params.n_clusters}
    ref = None
    if args.reference:
        ref = map_partition(data, io.load_model(args.reference))
    elif args.labels:
        ref = io.load_csv(args.labels)[:, 0]
        if ref.size != labels.size:
            raise DataFormatError(f"{args.labels}: {ref.size} labels for {labels.size} points")
    if ref is not None:
        result["nmi"] = nmi(labels, ref)
    for k, v in result.items():
        print(f"{k:20s} {v}")
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2))
    return 0


_COMMANDS = {"fit": _cmd_fit, "bench": _cmd_bench, "coreset": _cmd_coreset,
             "seed": _cmd_seed, "eval": _cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, ContractViolation, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
