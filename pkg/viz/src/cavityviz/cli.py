"""Command-line figure scripts for archived solver CSV outputs.

Exit codes: 0 success, 1 schema error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from .data import PlotSpec, SchemaError
from . import render


def _spec_from(args, kind) -> PlotSpec:
    options = {}
    if getattr(args, "contours", None):
        options["contours"] = args.contours
    if getattr(args, "y", None):
        options["y"] = args.y
    spec = PlotSpec(
        inputs=list(args.inputs),
        kind=kind,
        output=args.out,
        options=options,
    )
    plane = getattr(args, "slice", None)
    if plane:
        parts = plane.split(",")
        if len(parts) != 3:
            raise SchemaError("slice must be axis,offset,half_width")
        spec.slice_axis = parts[0].strip()
        spec.slice_offset = float(parts[1])
        spec.slice_half_width = float(parts[2])
    return spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cavityviz", description="Render figures from solver CSV outputs"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_field = sub.add_parser("field", help="|v| heatmap with T contours")
    p_field.add_argument("inputs", nargs=1)
    p_field.add_argument("-o", "--out", default="field.png")
    p_field.add_argument("--slice", default=None, help="axis,offset,half_width (3D)")
    p_field.add_argument("--contours", type=int, default=None)
    p_field.set_defaults(fn=render.plot_field, kind="field")

    p_series = sub.add_parser("series", help="Nusselt evolution lines")
    p_series.add_argument("inputs", nargs="+")
    p_series.add_argument("-o", "--out", default="series.png")
    p_series.set_defaults(fn=render.plot_series, kind="series")

    p_conv = sub.add_parser("convergence", help="Nu vs node count, log axis")
    p_conv.add_argument("inputs", nargs="+")
    p_conv.add_argument("-o", "--out", default="convergence.png")
    p_conv.add_argument("--y", default=None, help="y column (default nu_cold)")
    p_conv.set_defaults(fn=render.plot_convergence, kind="convergence")

    p_prof = sub.add_parser("profile", help="transect value plots")
    p_prof.add_argument("inputs", nargs="+")
    p_prof.add_argument("-o", "--out", default="profile.png")
    p_prof.set_defaults(fn=render.plot_profile, kind="profile")

    args = parser.parse_args(argv)
    try:
        spec = _spec_from(args, args.kind)
        out = args.fn(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
