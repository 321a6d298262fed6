"""Command line front end: point sampling, Betti computation, experiments.

Exit codes are stable: 0 on success, 1 on runtime failures (unreadable
inputs, sampler errors), 2 on usage or config errors (bad flags, config
schema violations). The default output root is the current directory,
overridable with the RGCOMPLEX_OUTPUT_ROOT environment variable; no command
writes outside its resolved output location.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

from . import __version__
from .complexes import build_cech
from .homology import betti_numbers
from .experiments import ConfigError, RunManifest, load_config, run_experiment
from .point_process import (
    DensitySpec,
    Window,
    load_sample_csv,
    sample_binomial,
    sample_ginibre,
    sample_homogeneous_poisson,
)

OUTPUT_ROOT_ENV = "RGCOMPLEX_OUTPUT_ROOT"


class UsageError(ValueError):
    pass


def _resolve_out(path: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.join(os.environ.get(OUTPUT_ROOT_ENV, "."), path)


def _parse_window(text: str, dim: int) -> Window:
    kind, _, arg = text.partition(":")
    try:
        size = float(arg)
    except ValueError:
        raise UsageError(f"bad window {text!r}: expected cube:SIDE or ball:RADIUS") from None
    if size <= 0:
        raise UsageError("window size must be > 0")
    if kind == "cube":
        return Window.cube(size, dim)
    if kind == "ball":
        return Window.ball(size, dim)
    raise UsageError(f"unknown window kind {kind!r}: expected cube or ball")


def cmd_sample(args) -> int:
    if args.process == "poisson":
        if args.lam is None or args.lam <= 0:
            raise UsageError("poisson sampling needs --lambda > 0")
        window = _parse_window(args.window, args.dim)
        sample = sample_homogeneous_poisson(args.lam, window, args.seed)
    elif args.process == "binomial":
        if args.n is None or args.n < 1:
            raise UsageError("binomial sampling needs --n >= 1")
        window = _parse_window(args.window, args.dim)
        if window.kind == "ball":
            raise UsageError("binomial sampling needs a cube window")
        sample = sample_binomial(args.n, DensitySpec.uniform(window), args.seed)
    else:
        if args.n is None or args.n < 1:
            raise UsageError("ginibre sampling needs --n >= 1 (truncation order)")
        if args.dim != 2:
            raise UsageError("ginibre sampling is planar: --dim 2")
        sample = sample_ginibre(args.n, args.seed)
    out = _resolve_out(args.out)
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    sample.save_csv(out + ".csv")
    sample.save_json(out + ".json")
    print(f"wrote {out}.csv ({len(sample)} points) and {out}.json")
    return 0


def _betti_row(points, r: float, k_cap: int | None, p: int) -> tuple[list[str], list]:
    c = build_cech(points, r, k_cap=k_cap)
    bv = betti_numbers(c, p)
    betti = bv.all_betti()
    counts = bv.counts.S
    header = ["n_points", "r", "p", "chi"]
    header += [f"beta_{k}" for k in range(len(betti))]
    header += [f"S_{j}" for j in range(len(counts))]
    row = [len(points), repr(float(r)), p, bv.chi] + list(betti) + list(counts)
    return header, row


def cmd_betti(args) -> int:
    try:
        sample = load_sample_csv(args.input)
    except OSError:
        raise
    except Exception as exc:
        print(f"error: malformed input {args.input}: {exc}", file=sys.stderr)
        return 2
    if args.r < 0:
        raise UsageError("--r must be >= 0")
    if args.p < 2:
        raise UsageError("--p must be a prime >= 2")
    header, row = _betti_row(sample.points, args.r, args.k_cap, args.p)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerow(row)
    text = buf.getvalue()
    if args.out:
        out = _resolve_out(args.out)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.dump_complex:
        c = build_cech(sample.points, args.r, k_cap=args.k_cap)
        c.save_text(_resolve_out(args.dump_complex))
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        out_dir = _resolve_out(args.out)
    else:
        stem = os.path.splitext(os.path.basename(args.config))[0]
        out_dir = _resolve_out(f"{stem}_{cfg.config_hash()[:8]}")
    result = run_experiment(cfg, out_dir, workers=args.workers)
    print(f"wrote {result.out_dir} (records: {len(result.records)} rows, kind: {cfg.kind})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgcomplex",
        description="Random geometric complexes: sampling, homology, experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sample = sub.add_parser("sample", help="sample a point process to CSV + JSON envelope")
    p_sample.add_argument("--process", required=True, choices=["poisson", "binomial", "ginibre"])
    p_sample.add_argument("--lambda", dest="lam", type=float, help="Poisson intensity")
    p_sample.add_argument("--n", type=int, help="point count (binomial) or truncation order (ginibre)")
    p_sample.add_argument("--dim", type=int, default=2)
    p_sample.add_argument("--window", default="cube:10", help="cube:SIDE or ball:RADIUS")
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--out", default="sample", help="output path prefix")
    p_sample.set_defaults(func=cmd_sample)

    p_betti = sub.add_parser("betti", help="Betti numbers of a point CSV at radius r")
    p_betti.add_argument("input", help="point CSV (header x0..x{d-1})")
    p_betti.add_argument("--r", type=float, required=True)
    p_betti.add_argument("--k-cap", dest="k_cap", type=int, default=None)
    p_betti.add_argument("--p", type=int, default=2, help="coefficient field prime")
    p_betti.add_argument("--out", default=None, help="write the row here instead of stdout")
    p_betti.add_argument("--dump-complex", dest="dump_complex", default=None)
    p_betti.set_defaults(func=cmd_betti)

    p_exp = sub.add_parser("experiment", help="run a config file through the experiment harness")
    p_exp.add_argument("config", help="experiment config file (key = value lines)")
    p_exp.add_argument("--out", default=None, help="output directory")
    p_exp.add_argument("--workers", type=int, default=1, help="worker processes; never affects outputs")
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
