"""Command-line entry point.

Subcommands are thin adapters over the library: simulate (draw a
multi-sample dataset from configured laws), analyze (survival curves
from CSV), kernel (grid covariance matrix), verify (run the harness),
counterexample (inverse-map difference-quotient table), dump-fn (step
functions in text form).

Exit codes: 0 success, 2 usage error, 3 data error, 4 verification
failure.  Outputs are written atomically; progress goes to stderr and
stdout stays silent unless --stdout is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .empirical import Mode, MultiSampleData, read_csv, write_csv
from .errors import ContractError, DataError, DomainError, SingularityError
from .functionals import HazardBundle, kaplan_meier, nelson_aalen, rmst
from .jsonio import canonical_json, write_atomic
from .limits import (
    KernelKind,
    PlainPopulation,
    assemble_kernel_matrix,
    exponential_survival_population,
)
from .empirical import LambdaVector, at_risk_process, ecdf, uncensored_subdist, pooled_ecdf
from .resampling import SeedSpec
from .verify import (
    ExperimentConfig,
    Law,
    conditional_cov_experiment,
    increment_condition_probe,
    inverse_counterexample,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERIFY_FAILED = 4


def _progress(msg: str):
    print(msg, file=sys.stderr)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _seed_from(args, config: dict | None = None) -> SeedSpec:
    """Seed resolution: flag > environment > config > default 0."""
    if args.seed is not None:
        return SeedSpec(args.seed)
    env = os.environ.get("PERMBOOT_SEED")
    if env is not None:
        try:
            return SeedSpec(int(env))
        except ValueError as exc:
            raise DataError(f"PERMBOOT_SEED must be an integer, got {env!r}") from exc
    if config and "seed" in config:
        s = config["seed"]
        return SeedSpec(s["master_seed"], s.get("stream_id", 0))
    return SeedSpec(0)


def _threads_from(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("PERMBOOT_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise DataError(f"PERMBOOT_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


# -- simulate ----------------------------------------------------------

def _cmd_simulate(args) -> int:
    config = _load_json(args.config)
    for key in ("mode", "group_laws", "sizes"):
        if key not in config:
            raise DataError(f"simulate config missing {key!r}")
    mode = Mode(config["mode"])
    laws = [Law.from_dict(d) for d in config["group_laws"]]
    sizes = config["sizes"]
    if len(laws) != len(sizes):
        raise DataError("need one law per group")
    seed = _seed_from(args, config)
    rng = seed.rng()
    groups = []
    if mode is Mode.PLAIN:
        for law, n in zip(laws, sizes):
            groups.append(tuple(float(x) for x in law.sample(rng, n)))
    else:
        cens_cfg = config.get("censoring_laws") or [{"kind": "none"}] * len(laws)
        cens = [Law.from_dict(d) for d in cens_cfg]
        for law, cl, n in zip(laws, cens, sizes):
            x = law.sample(rng, n)
            c = cl.sample(rng, n)
            groups.append(
                tuple((float(min(a, b)), int(a <= b)) for a, b in zip(x, c))
            )
    data = MultiSampleData(tuple(groups))
    write_csv(args.output, data)
    _progress(f"wrote {sum(sizes)} observations to {args.output}")
    return EXIT_OK


# -- analyze -----------------------------------------------------------

def _cmd_analyze(args) -> int:
    data = read_csv(args.input, Mode.SURVIVAL)
    pooled = data.pooled()
    all_times = [z for z, _d in pooled.pooled]
    tau = args.tau if args.tau is not None else max(all_times)
    rows = []
    summary_groups = []
    for j, g in enumerate(data.groups, start=1):
        bundle = HazardBundle(at_risk_process(g), uncensored_subdist(g), tau)
        lam = nelson_aalen(bundle)
        surv = kaplan_meier(bundle)
        times = sorted({z for z, _d in g if z <= tau})
        for t in times:
            rows.append((j, t, lam(t), surv(t)))
        summary_groups.append(
            {
                "group": j,
                "n": len(g),
                "events": sum(d for _z, d in g),
                "na_at_tau": lam(min(tau, lam.hi)),
                "km_at_tau": surv(min(tau, surv.hi)),
                "rmst": rmst(surv, tau),
            }
        )
    lines = ["group,time,na,km"]
    for j, t, na_v, km_v in rows:
        lines.append(
            f"{j},{format(t, '.17g')},{format(na_v, '.17g')},{format(km_v, '.17g')}"
        )
    write_atomic(args.output_curves, "\n".join(lines) + "\n")
    summary = {"tau": float(tau), "groups": summary_groups}
    text = canonical_json(summary) + "\n"
    write_atomic(args.output_summary, text)
    if args.stdout:
        sys.stdout.write(text)
    _progress(f"analyzed {data.m} groups; curves -> {args.output_curves}")
    return EXIT_OK


# -- kernel ------------------------------------------------------------

def _kernel_population(config: dict):
    pop_cfg = config.get("population")
    if pop_cfg is None:
        raise DataError("kernel config missing 'population'")
    if "plain" in pop_cfg:
        law = Law.from_dict(pop_cfg["plain"])
        return PlainPopulation(law.cdf)
    if "survival_exponential" in pop_cfg:
        sc = pop_cfg["survival_exponential"]
        lam = LambdaVector(tuple(config["lambdas"]))
        return exponential_survival_population(
            sc["fail_rates"], sc.get("cens_rates", [0.0] * len(lam)), lam, config["tau"]
        )
    raise DataError("population must be 'plain' or 'survival_exponential'")


def _cmd_kernel(args) -> int:
    config = _load_json(args.config)
    for key in ("kind", "lambdas", "grid"):
        if key not in config:
            raise DataError(f"kernel config missing {key!r}")
    try:
        kind = KernelKind(config["kind"])
    except ValueError as exc:
        raise DataError(f"unknown kernel kind {config['kind']!r}") from exc
    lambdas = LambdaVector(tuple(config["lambdas"]))
    grid = [float(t) for t in config["grid"]]
    pop = _kernel_population(config)
    matrix = assemble_kernel_matrix(kind, pop, lambdas, grid)
    lines = [",".join(format(v, ".17g") for v in row) for row in matrix]
    write_atomic(args.output_matrix, "\n".join(lines) + "\n")
    meta = {
        "kind": kind.value,
        "lambdas": list(lambdas.values),
        "grid": grid,
        "tau": config.get("tau"),
        "dim": int(matrix.shape[0]),
    }
    text = canonical_json(meta) + "\n"
    write_atomic(args.output_meta, text)
    if args.stdout:
        sys.stdout.write(text)
    _progress(f"kernel matrix {matrix.shape[0]}x{matrix.shape[1]} -> {args.output_matrix}")
    return EXIT_OK


# -- verify ------------------------------------------------------------

def _cmd_verify(args) -> int:
    raw = _load_json(args.config)
    if args.seed is not None:
        raw.setdefault("seed", {})["master_seed"] = args.seed
    elif os.environ.get("PERMBOOT_SEED") is not None:
        raw.setdefault("seed", {})["master_seed"] = int(os.environ["PERMBOOT_SEED"])
    if args.draws is not None:
        raw["draws"] = args.draws
    if args.exhaustive:
        raw["exhaustive"] = True
    config = ExperimentConfig.from_dict(raw)
    threads = _threads_from(args)
    _progress(
        f"verify: scenario={config.scenario.value} sizes={config.sizes} "
        f"R={config.outer_reps} B={config.draws} threads={threads}"
    )
    report = conditional_cov_experiment(config, threads=threads)
    text = report.to_json()
    write_atomic(args.output, text)
    if args.stdout:
        sys.stdout.write(text)
    agg = report.aggregates
    _progress(
        f"verify: max|dev|={agg['max_abs_dev']:.4g} "
        f"pass={agg['frac_pass']:.3f} -> {args.output}"
    )
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


# -- counterexample ----------------------------------------------------

def _cmd_counterexample(args) -> int:
    try:
        n_values = [int(s) for s in args.n.split(",") if s.strip()]
    except ValueError as exc:
        raise DataError(f"--n must be a comma-separated integer list: {exc}") from exc
    if not n_values or any(n < 1 for n in n_values):
        raise DataError("--n needs integers >= 1")
    rows = inverse_counterexample(n_values)
    lines = ["n,t_n,ratio,derivative,gap,increment_probe_K1"]
    for row in rows:
        probe = increment_condition_probe("counterexample", row["n"], 1)
        lines.append(
            "{n},{t},{r},{d},{g},{p}".format(
                n=row["n"],
                t=format(row["t_n"], ".17g"),
                r=format(row["ratio"], ".17g"),
                d=format(row["derivative"], ".17g"),
                g=format(row["gap"], ".17g"),
                p=format(probe, ".17g"),
            )
        )
    text = "\n".join(lines) + "\n"
    if args.output:
        write_atomic(args.output, text)
        _progress(f"counterexample table -> {args.output}")
    if args.stdout or not args.output:
        sys.stdout.write(text)
    return EXIT_OK


# -- dump-fn -----------------------------------------------------------

_DUMPABLE = ("ecdf", "pooled-ecdf", "at-risk", "uncensored", "na", "km")


def _cmd_dump_fn(args) -> int:
    mode = Mode.PLAIN if args.fn in ("ecdf", "pooled-ecdf") else Mode.SURVIVAL
    data = read_csv(args.input, mode)
    pooled = data.pooled()
    if args.fn == "pooled-ecdf":
        fn = pooled_ecdf(pooled)
    elif args.fn == "ecdf":
        fn = ecdf(pooled.pooled if args.group == 0 else data.groups[args.group - 1])
    else:
        obs = pooled.pooled if args.group == 0 else data.groups[args.group - 1]
        if args.fn == "at-risk":
            fn = at_risk_process(obs)
        elif args.fn == "uncensored":
            fn = uncensored_subdist(obs)
        else:
            tau = args.tau if args.tau is not None else max(z for z, _d in obs)
            bundle = HazardBundle(at_risk_process(obs), uncensored_subdist(obs), tau)
            fn = nelson_aalen(bundle) if args.fn == "na" else kaplan_meier(bundle)
    text = fn.to_text()
    if args.output:
        write_atomic(args.output, text)
        _progress(f"{args.fn} -> {args.output}")
    if args.stdout or not args.output:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permboot",
        description="Resampling empirical processes: simulation, survival "
        "curves, limit kernels and Monte Carlo verification.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="simulate a multi-sample dataset to CSV")
    p.add_argument("--config", required=True, help="JSON: mode, group_laws, sizes")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="Nelson-Aalen / Kaplan-Meier / RMST from CSV")
    p.add_argument("--input", required=True, help="survival CSV: group,time,status")
    p.add_argument("--tau", type=float, default=None, help="horizon (default: max time)")
    p.add_argument("--output-curves", default="curves.csv")
    p.add_argument("--output-summary", default="summary.json")
    p.add_argument("--stdout", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("kernel", help="emit an assembled limit covariance matrix")
    p.add_argument("--config", required=True, help="JSON: kind, lambdas, grid, population")
    p.add_argument("--output-matrix", default="kernel.csv")
    p.add_argument("--output-meta", default="kernel.json")
    p.add_argument("--stdout", action="store_true")
    p.set_defaults(func=_cmd_kernel)

    p = sub.add_parser("verify", help="run the conditional covariance harness")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default="report.json")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--stdout", action="store_true")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("counterexample", help="inverse-map difference-quotient table")
    p.add_argument("--n", default="1,4,25,100,10000", help="comma-separated n values")
    p.add_argument("--output", default=None)
    p.add_argument("--stdout", action="store_true")
    p.set_defaults(func=_cmd_counterexample)

    p = sub.add_parser("dump-fn", help="serialize an empirical step function")
    p.add_argument("--input", required=True)
    p.add_argument("--fn", required=True, choices=_DUMPABLE)
    p.add_argument("--group", type=int, default=0, help="1-based group, 0 = pooled")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--stdout", action="store_true")
    p.set_defaults(func=_cmd_dump_fn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ContractError, DomainError, SingularityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
