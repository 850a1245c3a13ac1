"""Command-line entry point ``horocount``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import ConfigError, ExperimentConfig, load_config
from .groups import GroupSpecError, dumps_numbers, load_group
from .orbits import EnumerationError, EnumerationPolicy, PartialEnumeration, enumerate_ball
from .patterson import build_ps_atoms, estimate_delta

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


def _error(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"code": code, "message": message}}) + "\n")
    return EXIT_ERROR


def _emit(doc: dict) -> None:
    sys.stdout.write(dumps_numbers(doc) + "\n")


def _policy(args, method: str = "word_bfs") -> EnumerationPolicy:
    return EnumerationPolicy(method=method, threads=args.threads or 1)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "group", None):
        # a group given on the command line is relative to the working directory
        cfg.group = replace(cfg.group, path=str(Path(args.group).resolve()))
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else cfg.resolve(cfg.output_dir)


# ---------------------------------------------------------------------------


def cmd_enumerate(args) -> int:
    spec = load_group(args.group)
    status = EXIT_OK
    try:
        batch = enumerate_ball(spec, args.T, _policy(args, args.method))
    except PartialEnumeration as exc:
        batch, status = exc.batch, EXIT_FLAGGED
    if args.out:
        batch.to_csv(args.out)
    _emit({"label": batch.label, "T": batch.T, "elements": len(batch), "status": batch.status})
    return status


def cmd_delta(args) -> int:
    spec = load_group(args.group)
    d = estimate_delta(spec, args.Rmax, _policy(args))
    doc = {
        "delta": d.delta,
        "stderr": d.stderr,
        "method": d.method,
        "R_range": list(d.R_range),
        "poincare_delta": d.poincare_delta,
        "poincare_stderr": d.poincare_stderr,
        "agree": d.agree,
        "count": d.count,
    }
    _emit(doc)
    if args.out:
        Path(args.out).write_text(dumps_numbers(doc) + "\n")
    return EXIT_FLAGGED if d.flagged else EXIT_OK


def cmd_atoms(args) -> int:
    spec = load_group(args.group)
    policy = _policy(args)
    d = estimate_delta(spec, args.Rmax, policy)
    s = d.delta + 0.1 if args.s == "auto" else float(args.s)
    atoms = build_ps_atoms(spec, s, args.R, delta=d.delta, policy=policy)
    if args.out:
        atoms.save(args.out)
    _emit(pipeline.atoms_summary(atoms) | {"delta": d.delta})
    return EXIT_FLAGGED if d.flagged else EXIT_OK


def cmd_orbit_sum(args) -> int:
    cfg = _config(args)
    doc = pipeline.run_orbit_sum(cfg, args.T, args.threads)
    _emit(doc)
    flagged = doc["status"] != "certified" or not doc["controlled_basepoint"]
    return EXIT_FLAGGED if flagged else EXIT_OK


def cmd_ratio(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    run = pipeline.run_ratio(cfg, out, args.threads)
    _emit({"out": str(out / "ratio.csv")} | {k: run.summary[k] for k in ("delta", "ratio_min", "ratio_max", "band_min", "band_max")})
    return EXIT_FLAGGED if run.result.flagged else EXIT_OK


def cmd_ledrappier(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    tab = pipeline.run_ledrappier(cfg, out)
    _emit({"out": str(out / "ledrappier.csv"), "ratio_errors": tab.ratio_errors().tolist()})
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    rep = pipeline.run_audit(cfg, out, args.threads)
    _emit({"out": str(out / "audit.csv"), "upper_ok": rep.upper_ok, "lower_ok": rep.lower_ok, "c_star": list(rep.c_star)})
    return EXIT_OK if rep.upper_ok and rep.lower_ok else EXIT_FLAGGED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed recorded in outputs (the pipeline is deterministic)")
    common.add_argument("--threads", type=int, default=None, help="worker threads; HOROCOUNT_THREADS overrides")
    common.add_argument("--out", default=None, help="output file or directory")

    with_config = argparse.ArgumentParser(add_help=False)
    with_config.add_argument("--config", default=None, help="TOML or JSON experiment config")
    with_config.add_argument("--group", default=None, help="group JSON, overrides the config")

    p = argparse.ArgumentParser(prog="horocount", description="Horospherical orbit counting experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enumerate", parents=[common], help="enumerate the orbit ball of norm <= T")
    e.add_argument("--group", required=True)
    e.add_argument("--T", type=float, required=True)
    e.add_argument("--method", choices=["word_bfs", "dedup_bfs", "direct_scan"], default="word_bfs")
    e.set_defaults(func=cmd_enumerate)

    d = sub.add_parser("delta", parents=[common], help="estimate the critical exponent")
    d.add_argument("--group", required=True)
    d.add_argument("--Rmax", type=float, default=12.0)
    d.set_defaults(func=cmd_delta)

    a = sub.add_parser("atoms", parents=[common], help="build Patterson-Sullivan atoms")
    a.add_argument("--group", required=True)
    a.add_argument("--s", default="auto")
    a.add_argument("--R", type=float, default=12.0)
    a.add_argument("--Rmax", type=float, default=None, help="radius for the exponent estimate (default: R)")
    a.set_defaults(func=cmd_atoms)

    o = sub.add_parser("orbit-sum", parents=[common, with_config], help="orbit sum at one threshold")
    o.add_argument("--T", type=float, required=True)
    o.set_defaults(func=cmd_orbit_sum)

    for name, func, text in (
        ("ratio", cmd_ratio, "orbit sum over the limiting integral across a T grid"),
        ("ledrappier", cmd_ledrappier, "SL2(Z) Ledrappier ratio check"),
        ("audit", cmd_audit, "fit the horospherical ball constant"),
    ):
        s = sub.add_parser(name, parents=[common, with_config], help=text)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        return _error("E_INVALID_ARGUMENT", "invalid command line; see --help")
    if getattr(args, "command", None) == "atoms" and args.Rmax is None:
        args.Rmax = args.R
    try:
        return args.func(args)
    except (GroupSpecError, ConfigError, EnumerationError) as exc:
        return _error(exc.code, str(exc))
    except (ValueError, OSError) as exc:
        return _error(getattr(exc, "code", "E_INVALID_ARGUMENT" if isinstance(exc, ValueError) else "E_IO"), str(exc))


if __name__ == "__main__":
    sys.exit(main())
