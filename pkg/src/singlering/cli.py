"""Command-line driver.

Exit codes: 0 all checks pass, 1 a statistical check failed,
2 usage/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import (
    EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, ConfigError, config_from_options, parse_config,
    run_experiment,
)
from .linalg import Matrix, NumericalError
from .measures import EmpiricalMeasure, MeasureSizeError, levy_prokhorov
from .sampling import Group, SeedSpec, sample_haar


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").strip("[]").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").strip("[]").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="TOML experiment config")
    p.add_argument("--seed", type=int, help="master seed (required unless set in the config)")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="record format")
    return p


def _experiment_opts() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--law", help='e.g. "two-atom:1,2", "uniform:1,2", "atoms:1:0.5,3:0.5"')
    p.add_argument("--dims", type=_int_list, help="comma-separated dimensions")
    p.add_argument("--k", type=int)
    p.add_argument("--group", help="SU, SO, U or O")
    p.add_argument("--trials", type=int)
    p.add_argument("--samples", type=int, help="Monte Carlo samples per trial")
    p.add_argument("--delta", type=float, help="annulus margin")
    p.add_argument("--rotation", help="two-sided Haar rotation group applied to A_d")
    p.add_argument("--field", choices=("real", "complex"), help="sphere field for concentration")
    p.add_argument("--diag", type=_float_list, help="explicit diagonal matrix instead of a law")
    return p


def build_parser() -> argparse.ArgumentParser:
    common, opts = _common(), _experiment_opts()
    parser = argparse.ArgumentParser(prog="singlering", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("single-ring", "spectral radius and annulus support of U A_d"),
                           ("conjecture", "both sides of the Dedieu-Shub inequality"),
                           ("concentration", "concentration of ||A v|| on the sphere")):
        sub.add_parser(name, parents=[common, opts], help=helptext)
    sw = sub.add_parser("sweep", parents=[common, opts], help="run an experiment over several d")
    sw.add_argument("--experiment", choices=("single-ring", "concentration", "conjecture"))

    sp = sub.add_parser("sample", parents=[common], help="dump one Haar matrix as JSON")
    sp.add_argument("--group", default="SU")
    sp.add_argument("--dim", type=int, required=True)
    sp.add_argument("--trial", type=int, default=0)

    lp = sub.add_parser("lp-dist", parents=[common], help="Levy-Prokhorov distance of two measure files")
    lp.add_argument("alpha", type=Path)
    lp.add_argument("beta", type=Path)
    lp.add_argument("--tol", type=float, default=1e-4)
    return parser


_OPTION_KEYS = ("law", "dims", "k", "group", "trials", "samples", "delta", "rotation", "field", "diag")


def _load_config(args):
    overrides = {key: getattr(args, key, None) for key in _OPTION_KEYS}
    overrides["seed"] = args.seed
    overrides["format"] = args.format
    overrides["threads"] = args.threads
    if args.out is not None:
        overrides["output"] = str(args.out)
    if args.command == "sweep":
        overrides["experiment"] = args.experiment
    if args.config is None:
        kw = {k: v for k, v in overrides.items() if k != "seed"}
        return config_from_options(args.command, args.seed, **kw)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    cfg = parse_config(text, overrides, default_kind=args.command)
    if cfg.kind != args.command:
        raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}", "kind")
    return cfg


def _cmd_experiment(args) -> int:
    cfg = _load_config(args)
    manifest = run_experiment(cfg, threads=args.threads)
    out = Path(cfg.output)
    print(f"wrote {', '.join(str(out / f) for f in manifest.files)}")
    for s in manifest.summaries:
        print(json.dumps(s, sort_keys=True))
    for name, ok in sorted(manifest.checks.items()):
        print(f"check {name}: {'PASS' if ok else 'FAIL'}")
    for f in manifest.failures:
        print(f"trial {f['trial_index']} (d={f['d']}) failed: {f['error']}", file=sys.stderr)
    return manifest.exit_code


def _cmd_sample(args) -> int:
    if args.seed is None:
        raise ConfigError("missing seed: pass --seed", "seed")
    group = Group.parse(args.group)
    u = sample_haar(group, args.dim, SeedSpec(args.seed, args.trial))
    text = json.dumps(Matrix(u, group.field).to_json())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"haar_{group.value}{args.dim}_s{args.seed}_t{args.trial}.json").write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_lp(args) -> int:
    try:
        alpha = EmpiricalMeasure.from_json(args.alpha.read_text(encoding="utf-8"))
        beta = EmpiricalMeasure.from_json(args.beta.read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load measure: {exc}") from None
    print(repr(levy_prokhorov(alpha, beta, tol=args.tol)))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "lp-dist":
            return _cmd_lp(args)
        return _cmd_experiment(args)
    except (ConfigError, MeasureSizeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
