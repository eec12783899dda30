"""Command-line entry point: ``nishimori {run,verify,eit,lambda,reconstruct}``.

Exit codes:
    0  success (every requested check passed)
    1  a verification check failed
    2  unknown flag or malformed command line
    3  unreadable or unparsable config file
    4  invalid combination of config fields
    5  runtime failure (sampler exhaustion, oracle non-convergence)

Environment overrides: NISHIMORI_WORKERS (worker count) and
NISHIMORI_OUTPUT_DIR (where outputs land when no path is given).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .estimators import (
    CHECKS,
    HarnessConfig,
    identity_harness,
    lambda_value,
    planted_instance,
    reconstruct_relative,
)
from .gibbs import ExperimentConfig, run_quenched_experiment, write_records
from .lattice import build_box
from .oracle import OracleNotConverged
from .paths import bridge_sampler, estimate_eit_tail, markov_mixing, uniform_iid, write_eit_csv
from .streams import PATHS, PLANTED, stream

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_CONFIG_UNREADABLE, EXIT_CONFIG_INVALID, EXIT_RUNTIME = range(6)

SUITES = {
    "nishimori-core": ("factorization", "internal_energy", "spin_glass", "mmsp"),
    "nishimori-full": CHECKS,
}

log = logging.getLogger("nishimori")


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, message)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_CONFIG_UNREADABLE, f"cannot read config {path}: {exc.strerror}") from None
    try:
        if str(path).endswith((".yaml", ".yml")):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_CONFIG_UNREADABLE, f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(EXIT_CONFIG_UNREADABLE, f"config {path} must hold a mapping")
    return data


def config_hash(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()


def output_dir(arg):
    out = Path(arg or os.environ.get("NISHIMORI_OUTPUT_DIR", "nishimori-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def workers(arg):
    if arg is not None:
        return arg
    env = os.environ.get("NISHIMORI_WORKERS")
    return int(env) if env else 1


def write_manifest(out: Path, command: str, config: dict, seed):
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "master_seed": seed,
        "versions": {
            "nishimori": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return manifest


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args):
    data = {}
    if args.manifest:
        data = load_config(args.manifest).get("config", {})
    if args.config:
        data.update(load_config(args.config))
    for key in ("model", "beta", "u", "replicas", "master_seed", "output_format"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.dims:
        data["dims"] = args.dims
    if args.off_nishimori:
        data["off_nishimori"] = True
    data["workers"] = workers(args.workers)
    try:
        cfg = ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG_INVALID, f"invalid config: {exc}") from None
    out = output_dir(args.output)
    records = run_quenched_experiment(cfg)
    ext = "csv" if cfg.output_format == "csv" else "jsonl"
    path = Path(cfg.output) if cfg.output else out / f"records.{ext}"
    write_records(records, path, cfg.output_format)
    stored = cfg.to_dict()
    stored.pop("workers")
    write_manifest(out, "run", stored, cfg.master_seed)
    agg = [r for r in records if r.metadata.get("replica") == "all"]
    for r in agg:
        print(f"{r.name}\t{r.mean:.6g}\t{r.stderr:.2g}")
    return EXIT_OK


def cmd_verify(args):
    checks = SUITES[args.suite] if args.suite else tuple(args.check)
    cfg = HarnessConfig(model=args.model, beta=args.beta, seed=args.seed)
    if args.replicas:
        cfg = dataclasses.replace(cfg, replicas=args.replicas)
    if args.sweeps:
        cfg = dataclasses.replace(cfg, measure=args.sweeps)
    out = output_dir(args.output)
    failed = 0
    lines = []
    for check in checks:
        for rec in identity_harness(check, cfg):
            lines.append(rec.to_json())
            status = "PASS" if rec.passed else "FAIL"
            failed += not rec.passed
            val = rec.mc_value if rec.mc_value is not None else rec.oracle_value
            err = f" ± {rec.mc_stderr:.2g}" if rec.mc_stderr else ""
            print(f"{status} {rec.check:16s} {rec.lattice:9s} {rec.quantity}: {val:.10g}{err} (expected {rec.expected})")
    (out / "verify.jsonl").write_text("\n".join(lines) + "\n")
    write_manifest(out, "verify", {"suite": args.suite, "checks": list(checks), **dataclasses.asdict(cfg)}, args.seed)
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def _measure(args, dim):
    if args.measure == "uniform_iid":
        return uniform_iid(dim)
    return markov_mixing(dim, args.rho)


def cmd_eit(args):
    out = output_dir(args.output)
    rng = stream(args.seed, PATHS)
    res = estimate_eit_tail(_measure(args, args.dim), args.n, args.pairs, rng)
    write_eit_csv(res, out / "eit.csv")
    write_manifest(out, "eit", vars_dict(args), args.seed)
    print(f"{res.sampler} d={args.dim} n={args.n}: alpha={res.alpha:.4f} ± {res.alpha_se:.2g} C={res.C:.4f} R2={res.r2:.4f}")
    return EXIT_OK


def cmd_lambda(args):
    betas = args.beta
    if args.grid:
        lo, hi, num = args.grid
        betas = list(np.linspace(lo, hi, int(num)))
    for b in betas:
        if b < 0:
            raise CliError(EXIT_CONFIG_INVALID, "beta must be nonnegative")
        lam = lambda_value(args.model, b)
        print(f"{args.model}\t{b:g}\t{lam.value!r}\t{lam.error:.1e}")
    return EXIT_OK


def cmd_reconstruct(args):
    out = output_dir(args.output)
    n = args.n
    lat = build_box([n + 1] * 3)
    x, y = (0, 0, 0), (n, n, n)
    dis, truth = planted_instance(lat, args.model, args.beta, stream(args.seed, PLANTED), args.instances)
    batch = bridge_sampler(_measure(args, 3), x, y).sample(stream(args.seed, PATHS), args.paths)
    rec = reconstruct_relative(dis, x, y, batch, lambda_value(args.model, args.beta), truth=truth)
    with open(out / "reconstruct.csv", "w") as fh:
        fh.write("instance,alignment\n")
        for i, a in enumerate(rec.alignment):
            fh.write(f"{i},{a!r}\n")
    write_manifest(out, "reconstruct", vars_dict(args), args.seed)
    flag = "" if rec.informative else " (non-informative: lambda too small)"
    print(f"mean alignment {rec.alignment.mean():.4f} ± {rec.alignment.std(ddof=1) / np.sqrt(len(rec.alignment)):.2g}{flag}")
    return EXIT_OK


def vars_dict(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "output", "verbose")}


def build_parser():
    p = _Parser(prog="nishimori", description="Nishimori-line spin models: experiments and checks.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="quenched Monte Carlo experiment")
    r.add_argument("--config", help="JSON or YAML experiment config")
    r.add_argument("--manifest", help="rerun from a manifest.json")
    r.add_argument("--model")
    r.add_argument("--beta", type=float)
    r.add_argument("--u", type=float)
    r.add_argument("--off-nishimori", action="store_true")
    r.add_argument("--dims", type=int, nargs="+")
    r.add_argument("--replicas", type=int)
    r.add_argument("--seed", dest="master_seed", type=int)
    r.add_argument("--format", dest="output_format", choices=("csv", "jsonl"))
    r.add_argument("--workers", type=int)
    r.add_argument("--output", help="output directory")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="identity checks")
    g = v.add_mutually_exclusive_group(required=True)
    g.add_argument("--suite", choices=sorted(SUITES))
    g.add_argument("--check", action="append", choices=CHECKS)
    v.add_argument("--beta", type=float, default=1.5)
    v.add_argument("--model", default="xy")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--replicas", type=int)
    v.add_argument("--sweeps", type=int)
    v.add_argument("--output")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("eit", help="intersection-tail estimate")
    e.add_argument("--dim", type=int, default=3)
    e.add_argument("--n", type=int, default=16)
    e.add_argument("--pairs", type=int, default=100_000)
    e.add_argument("--measure", choices=("uniform_iid", "markov_mixing"), default="uniform_iid")
    e.add_argument("--rho", type=float, default=0.5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--output")
    e.set_defaults(func=cmd_eit)

    lam = sub.add_parser("lambda", help="tabulate lambda(beta)")
    lam.add_argument("--model", default="xy")
    lam.add_argument("--beta", type=float, nargs="+", default=[1.0])
    lam.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "NUM"))
    lam.set_defaults(func=cmd_lambda)

    rc = sub.add_parser("reconstruct", help="planted synchronisation")
    rc.add_argument("--model", default="su2", choices=("xy", "su2", "so3"))
    rc.add_argument("--beta", type=float, default=16.0)
    rc.add_argument("--n", type=int, default=6)
    rc.add_argument("--instances", type=int, default=64)
    rc.add_argument("--paths", type=int, default=512)
    rc.add_argument("--measure", choices=("uniform_iid", "markov_mixing"), default="markov_mixing")
    rc.add_argument("--rho", type=float, default=0.5)
    rc.add_argument("--seed", type=int, default=0)
    rc.add_argument("--output")
    rc.set_defaults(func=cmd_reconstruct)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"nishimori: {exc}", file=sys.stderr)
        return exc.code
    except (RuntimeError, OracleNotConverged) as exc:
        print(f"nishimori: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"nishimori: {exc}", file=sys.stderr)
        return EXIT_CONFIG_INVALID


if __name__ == "__main__":
    sys.exit(main())
