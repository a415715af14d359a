"""Command-line interface: solve / value / simulate / compare / plot.

Every command is a pure function of its flags, input files, and seed.  A
JSON manifest with a content hash over (command, spec, config, version,
output names) accompanies the outputs, and each output references that
hash, so any figure or table can be traced to the exact invocation that
produced it.  Reruns are byte-identical except the manifest's timestamp
and wall-time fields, which stay outside the hash.

Exit codes: 0 ok, 2 bad arguments, 3 solver non-convergence, 4 I/O error,
5 schema mismatch in an input file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .closed_forms import ProblemSpec, mean_g
from .boundaries import (BoundaryPair, SolverConfig, solve_boundaries,
                         NonConvergenceError, InvariantViolationError,
                         SchemaError)
from .bellman import LatticeSpec, bellman_solve, oracle_compare
from .value import build_value_surface, value_at
from .montecarlo import (MAX_STORED_PATHS, SimConfig, parse_policy,
                         evaluate_policy, per_path_records,
                         save_per_path_csv)
from .plotting import save_boundaries_svg

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4
EXIT_SCHEMA = 5


def _canonical_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _manifest_core(command: str, spec: dict, config: dict,
                   outputs: list[str]) -> tuple[dict, str]:
    core = {"command": command, "spec": spec, "config": config,
            "version": __version__, "outputs": sorted(outputs)}
    return core, _canonical_hash(core)


def _write_manifest(path: str, core: dict, manifest_hash: str,
                    wall_time_s: float) -> None:
    doc = dict(core)
    doc["manifest_hash"] = manifest_hash
    doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    doc["wall_time_s"] = round(wall_time_s, 3)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _positive(parser: argparse.ArgumentParser, name: str, value: float):
    if value <= 0:
        parser.error(f"{name} must be positive, got {value:g}")
    return value


def _load_boundaries(path: str) -> BoundaryPair:
    try:
        return BoundaryPair.load_json(path)
    except SchemaError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_SCHEMA)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)


def _ensure_outdir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)


def cmd_solve(parser, args) -> int:
    _positive(parser, "--horizon", args.horizon)
    _positive(parser, "--tol", args.tol)
    t0 = time.monotonic()
    spec = ProblemSpec(mu=args.mu, T=args.horizon)
    cfg = SolverConfig(n_steps=args.n_steps, tol_res=args.tol,
                       tol_b=min(1e-7, args.tol / 10.0))
    try:
        bp = solve_boundaries(spec, cfg)
    except (NonConvergenceError, InvariantViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    _ensure_outdir(args.out)
    csv_path = os.path.join(args.out, "boundaries.csv")
    json_path = os.path.join(args.out, "boundaries.json")
    core, h = _manifest_core(
        "solve", {"mu": spec.mu, "T": spec.T},
        {"n_steps": cfg.n_steps, "tol_res": cfg.tol_res, "tol_b": cfg.tol_b,
         "damping": cfg.damping, "max_iter": cfg.max_iter},
        ["boundaries.csv", "boundaries.json"])
    try:
        bp.save_csv(csv_path, manifest_hash=h)
        bp.save_json(json_path, config=cfg, manifest_hash=h)
        _write_manifest(os.path.join(args.out, "manifest.json"), core, h,
                        time.monotonic() - t0)
    except OSError as exc:
        print(f"error: writing outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {csv_path} and {json_path} (manifest {h[:12]})")
    return EXIT_OK


def _parse_grid(parser, text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        n_t, n_x = int(a), int(b)
    except ValueError:
        parser.error(f"--grid must look like 100x200, got {text!r}")
    if n_t < 2 or n_x < 2:
        parser.error("--grid sizes must be >= 2")
    return n_t, n_x


def cmd_value(parser, args) -> int:
    t0 = time.monotonic()
    bp = _load_boundaries(args.boundaries)
    n_t, n_x = _parse_grid(parser, args.grid)
    spec = bp.spec
    surface = build_value_surface(spec, bp, n_t=n_t, n_x=n_x)
    v00 = value_at(spec, bp, 0.0, 0.0)
    vstar = v00 + mean_g(spec)
    print(f"V(0,0) = {v00:.10g}")
    print(f"V* = {vstar:.10g}")
    if args.out:
        _ensure_outdir(args.out)
        core, h = _manifest_core(
            "value", {"mu": spec.mu, "T": spec.T},
            {"grid": args.grid, "boundaries": os.path.basename(args.boundaries)},
            ["surface.csv"])
        try:
            surface.save_csv(os.path.join(args.out, "surface.csv"),
                             manifest_hash=h)
            _write_manifest(os.path.join(args.out, "manifest.json"), core, h,
                            time.monotonic() - t0)
        except OSError as exc:
            print(f"error: writing outputs: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def cmd_simulate(parser, args) -> int:
    _positive(parser, "--paths", args.paths)
    t0 = time.monotonic()
    bp = _load_boundaries(args.boundaries)
    spec = bp.spec
    try:
        cfg = SimConfig(n_paths=args.paths, n_steps=args.steps,
                        seed=args.seed)
        rule = parse_policy(args.policy, spec, bp)
    except ValueError as exc:
        parser.error(str(exc))
    if args.dump and args.paths > MAX_STORED_PATHS:
        parser.error(f"--dump is limited to {MAX_STORED_PATHS} paths")
    report = evaluate_policy(spec, rule, cfg)
    core, h = _manifest_core(
        "simulate", {"mu": spec.mu, "T": spec.T},
        {"paths": args.paths, "steps": args.steps, "seed": args.seed,
         "policy": args.policy,
         "boundaries": os.path.basename(args.boundaries)},
        [os.path.basename(p) for p in (args.out, args.dump) if p])
    doc = report.to_json_dict()
    doc["manifest_hash"] = h
    line = json.dumps(doc)
    print(line)
    try:
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(line + "\n")
        if args.dump:
            save_per_path_csv(args.dump, per_path_records(spec, rule, cfg),
                              manifest_hash=h)
        if args.out or args.dump:
            target = args.out if args.out else args.dump
            _write_manifest(target + ".manifest.json", core, h,
                            time.monotonic() - t0)
    except OSError as exc:
        print(f"error: writing outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_compare(parser, args) -> int:
    _positive(parser, "--horizon", args.horizon)
    t0 = time.monotonic()
    spec = ProblemSpec(mu=args.mu, T=args.horizon)
    n_t, n_x = _parse_grid(parser, args.lattice)
    try:
        bp_int = solve_boundaries(spec, SolverConfig(n_steps=args.n_steps))
    except (NonConvergenceError, InvariantViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    _, bp_bell = bellman_solve(spec, LatticeSpec(n_t=n_t, n_x=n_x))
    rep = oracle_compare(bp_int, bp_bell)
    doc = rep.to_json_dict()
    doc["spec"] = {"mu": spec.mu, "T": spec.T}
    print(json.dumps(doc))
    if args.out:
        _ensure_outdir(args.out)
        core, h = _manifest_core(
            "compare", doc["spec"],
            {"n_steps": args.n_steps, "lattice": args.lattice},
            ["compare.json"])
        doc["manifest_hash"] = h
        try:
            with open(os.path.join(args.out, "compare.json"), "w",
                      encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1)
                fh.write("\n")
            _write_manifest(os.path.join(args.out, "manifest.json"), core, h,
                            time.monotonic() - t0)
        except OSError as exc:
            print(f"error: writing outputs: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def cmd_plot(parser, args) -> int:
    pairs = [_load_boundaries(p) for p in args.boundaries]
    core, h = _manifest_core(
        "plot",
        {"mus": [p.spec.mu for p in pairs], "T": pairs[0].spec.T},
        {"inputs": [os.path.basename(p) for p in args.boundaries]},
        [os.path.basename(args.out)])
    try:
        save_boundaries_svg(pairs, args.out, manifest_hash=h)
        _write_manifest(args.out + ".manifest.json", core, h, 0.0)
    except OSError as exc:
        print(f"error: writing {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lastzero",
        description="Optimal prediction of the last zero of Brownian motion "
                    "with drift: boundaries, value, simulation, plots.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the boundary integral equations")
    p.add_argument("--mu", type=float, required=True, help="drift")
    p.add_argument("--horizon", type=float, required=True, help="horizon T")
    p.add_argument("--n-steps", type=int, default=400)
    p.add_argument("--tol", type=float, default=1e-6,
                   help="residual tolerance")
    p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("value", help="value surface from solved boundaries")
    p.add_argument("--boundaries", required=True, help="boundaries.json")
    p.add_argument("--grid", default="100x200", help="t-by-x grid, e.g. 100x200")
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("simulate", help="Monte Carlo policy evaluation")
    p.add_argument("--boundaries", required=True)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", default="optimal",
                   help="optimal | fixed_time:C | sqrt_rule:Z | "
                        "scaled_optimal:F")
    p.add_argument("--out", default=None, help="report file (.jsonl)")
    p.add_argument("--dump", default=None,
                   help="per-path CSV (path_id,g,tau,abs_error); "
                        "small runs only")

    p = sub.add_parser("compare", help="integral solver vs lattice oracle")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--n-steps", type=int, default=400)
    p.add_argument("--lattice", default="2000x2001")
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("plot", help="SVG of boundary curves")
    p.add_argument("--boundaries", nargs="+", required=True,
                   help="one or more boundaries.json files")
    p.add_argument("--out", required=True, help="output .svg path")
    return parser


_HANDLERS = {"solve": cmd_solve, "value": cmd_value, "simulate": cmd_simulate,
             "compare": cmd_compare, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](parser, args)
    except ValueError as exc:
        # bad numeric domain reaching a library constructor
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
