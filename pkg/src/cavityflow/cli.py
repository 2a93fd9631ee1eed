"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 I/O failure.  The CAVITYFLOW_THREADS environment variable caps the
number of kernel threads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, parse_config


def _apply_thread_limit():
    threads = os.environ.get("CAVITYFLOW_THREADS")
    if not threads:
        return
    try:
        import numba

        numba.set_num_threads(max(1, int(threads)))
    except (ImportError, ValueError):
        pass


def _cmd_run(args) -> int:
    from . import runner

    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        manifest, result = runner.run_case(config, args.out)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    if manifest.failure:
        print(f"numerical failure: {manifest.failure}", file=sys.stderr)
        return 2
    nu = manifest.timings.get("steps", 0)
    print(
        f"done: {result.steps} steps, t={result.state.t:.6g}, "
        f"Nu_cold={result.series['nu_cold'][-1]:.4f}, "
        f"steady={'yes' if result.steady else 'no'}"
    )
    return 0


def _cmd_sweep(args) -> int:
    from . import runner

    try:
        config = parse_config(args.config)
        values = [float(tok) for tok in args.values.split(",") if tok.strip()]
        if not values:
            raise ConfigError("sweep needs at least one value")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        manifests = runner.sweep(
            config,
            args.axis,
            values,
            warm_start=args.warm_start,
            parallel=args.parallel,
            out_dir=args.out,
        )
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    failures = [m for m in manifests if m.failure]
    for m in failures:
        print(f"run failed: {m.failure}", file=sys.stderr)
    print(f"sweep finished: {len(manifests) - len(failures)}/{len(manifests)} runs ok")
    return 2 if len(failures) == len(manifests) else 0


def _cmd_export_vtk(args) -> int:
    from . import io

    try:
        positions, v, T, p, eta = io.load_checkpoint(args.checkpoint)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, IndexError) as exc:
        print(f"config error: bad checkpoint file: {exc}", file=sys.stderr)
        return 1
    out = args.out or str(Path(args.checkpoint).with_suffix(".vtk"))
    try:
        io.export_vtk(out, positions, {"v": v, "T": T, "p": p, "eta": eta})
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    _apply_thread_limit()
    parser = argparse.ArgumentParser(
        prog="cavityflow",
        description="Meshless solver for natural convection of power-law fluids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single case from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="vary one parameter over several runs")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True, help="h, h1, h2, w, c, n or ra")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--warm-start", action="store_true")
    p_sweep.add_argument("--parallel", action="store_true")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_vtk = sub.add_parser("export-vtk", help="convert a checkpoint CSV to VTK")
    p_vtk.add_argument("checkpoint")
    p_vtk.add_argument("-o", "--out", default=None)
    p_vtk.set_defaults(func=_cmd_export_vtk)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
