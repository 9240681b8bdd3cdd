"""Command-line entry point: ``tumorflow run|experiment|green``.

Output goes to ``$SIM_OUT_DIR`` (default ``./out``). The exit status is 0 on
success, 1 when a run aborts or a criterion fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .experiments import PRESETS, run_experiment
from .greens import discrete_green_matrix
from .simulator import run

OK_TERMINATIONS = ("t_end", "steady")


def out_dir() -> Path:
    return Path(os.environ.get("SIM_OUT_DIR", "./out"))


def _load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
        raise SystemExit(2) from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(2) from None


def cmd_run(args) -> int:
    cfg = _load(args.config)
    out = out_dir()
    rec = run(cfg, out_dir=out)
    t_final = rec.final.t if rec.final is not None else 0.0
    print(f"termination={rec.termination} t={t_final:.6g} steps={rec.steps} rows={len(rec.rows)}")
    if rec.error:
        print(f"error: {rec.error}", file=sys.stderr)
    if rec.final is not None:
        print(f"wrote {out / 'diagnostics.csv'}")
    return 0 if rec.termination in OK_TERMINATIONS else 1


def cmd_experiment(args) -> int:
    names = list(PRESETS) if args.preset == "all" else [args.preset]
    failed = []
    for name in names:
        res = run_experiment(name, out_dir())
        print(res.criterion.line())
        if not res.passed:
            failed.append(res.criterion.code)
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_green(args) -> int:
    cfg = _load(args.config)
    try:
        G = discrete_green_matrix(cfg.grid, cfg.params.mu, cfg.tol)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = out_dir()
    out.mkdir(parents=True, exist_ok=True)
    path = G.write_triplets(out / "green.txt")
    sym = G.symmetry_defect()
    print(f"wrote {path}  cells={cfg.grid.size} symmetry={sym:.3e} min_entry={G.min_entry():.6g}")
    return 0 if sym <= 10 * cfg.tol and G.min_entry() > 0 else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tumorflow", description="Growth-model simulator and acceptance presets.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="integrate a JSON config")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)
    p_exp = sub.add_parser("experiment", help="run an acceptance preset")
    p_exp.add_argument("preset", choices=[*PRESETS, "all"], metavar="preset",
                       help="one of: " + ", ".join(PRESETS) + ", all")
    p_exp.set_defaults(func=cmd_experiment)
    p_green = sub.add_parser("green", help="dump the discrete Green's matrix for a config's grid and mu")
    p_green.add_argument("config")
    p_green.set_defaults(func=cmd_green)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
