"""Command-line entry point: ``plapsim {run,sweep,verify,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config
from .registry import UnknownAnchorError, load_registry
from .runner import resolve_threads, run_experiment, set_seed, summarize_reports, sweep, verify

EXIT_OK, EXIT_AUDIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def _tol_overrides(text: str | None) -> dict:
    """Accept a JSON object or comma-separated key=value pairs."""
    if not text:
        return {}
    text = text.strip()
    if text.startswith("{"):
        return {k: float(v) for k, v in json.loads(text).items()}
    out = {}
    for part in text.split(","):
        key, _, val = part.partition("=")
        if not _:
            raise ValueError(f"tolerance override {part!r} is not key=value")
        out[key.strip()] = float(val)
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", help="artifact directory (default: the config's output.dir)")
    p.add_argument("--seed", type=int, help="override the initial-data seed")
    p.add_argument("--threads", type=int, help="worker threads (fallback: PLAPSIM_THREADS, then 1)")
    p.add_argument("--tol-overrides", help='e.g. "fit=0.2,energy=1e-9" or a JSON object')


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plapsim", description="Spectral Galerkin p-Laplacian simulator and estimate audits")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one configured scenario and audit it")
    run.add_argument("--config", required=True)
    _common(run)

    sw = sub.add_parser("sweep", help="repeat a scenario over parameter values")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True, choices=["p", "mu", "nu", "modes", "dt"])
    sw.add_argument("--values", required=True, help="comma-separated values, run in the given order")
    _common(sw)

    ver = sub.add_parser("verify", help="run the canonical scenario bound to each anchor")
    ver.add_argument("anchors", nargs="*", help="anchors to verify (default: all registered)")
    ver.add_argument("--list", action="store_true", help="list registered anchors and exit")
    _common(ver)

    rep = sub.add_parser("report", help="summarize report JSON files in a directory")
    rep.add_argument("--out-dir", required=True)
    rep.add_argument("--config", help="unused; accepted for symmetry")
    return ap


def _print_reports(reports, stream) -> None:
    for r in reports:
        d = r if isinstance(r, dict) else r.to_dict()
        stream.write(f"{d['verdict']:5s} {d['anchor']:18s} {d['claim']}\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out, err = sys.stdout, sys.stderr
    try:
        tols = _tol_overrides(getattr(args, "tol_overrides", None))
        threads = resolve_threads(getattr(args, "threads", None))
        known = load_registry()

        if args.command == "run":
            cfg = set_seed(load_config(args.config, known), args.seed)
            res = run_experiment(cfg, out_dir=args.out_dir, tol_overrides=tols)
            _print_reports(res.reports, out)
            if res.error:
                err.write(f"solver failure: {res.error}\n")
            for a in res.artifacts:
                out.write(f"wrote {a}\n")
            return res.exit_code

        if args.command == "sweep":
            cfg = set_seed(load_config(args.config, known), args.seed)
            values = [v for v in args.values.split(",") if v.strip()]
            code, path = sweep(cfg, args.param, values, out_dir=args.out_dir, threads=threads, tol_overrides=tols)
            out.write(f"wrote {path}\n")
            return code

        if args.command == "verify":
            if args.list:
                for name, entry in known.items():
                    out.write(f"{name:18s} {entry['description']}\n")
                return EXIT_OK
            anchors = args.anchors or list(known)
            code, results = verify(anchors, out_dir=args.out_dir, tol_overrides=tols, seed=args.seed, threads=threads)
            for anchor, res in results:
                if res.error:
                    out.write(f"fail  {anchor:18s} solver failure: {res.error}\n")
                _print_reports(res.reports, out)
            return code

        if args.command == "report":
            code, rows = summarize_reports(args.out_dir)
            if not rows:
                err.write(f"no report files found in {args.out_dir}\n")
                return EXIT_USAGE
            _print_reports(rows, out)
            return code
    except (ConfigError, UnknownAnchorError, ValueError, FileNotFoundError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
