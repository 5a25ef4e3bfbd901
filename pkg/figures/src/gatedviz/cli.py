"""Command-line entry: render every figure kind from a report directory.

A completed report directory holds loss_curve.csv, confusion_base.csv,
confusion_gated.csv, gate_biases_layer<l>.csv and gate_raw.csv (the primary
toolkit's export schemas).  Images land next to their inputs unless --out
is given.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

from .render import KINDS, FigureSpec, render
from .schemas import MissingInputError, SchemaError


def build_specs(report_dir: str, out_dir: str, curve: str | None, bins: int):
    j = lambda name: os.path.join(report_dir, name)
    layer_files = sorted(
        glob.glob(j("gate_biases_layer*.csv")),
        key=lambda p: int("".join(ch for ch in os.path.basename(p) if ch.isdigit())),
    )
    return {
        "loss_curves": FigureSpec(
            "loss_curves",
            (curve or j("loss_curve.csv"),),
            os.path.join(out_dir, "loss_curves.png"),
        ),
        "confusion_pair": FigureSpec(
            "confusion_pair",
            (j("confusion_base.csv"), j("confusion_gated.csv")),
            os.path.join(out_dir, "confusion_pair.png"),
        ),
        "gate_images": FigureSpec(
            "gate_images",
            tuple(layer_files),
            os.path.join(out_dir, "gate_images.png"),
        ),
        "gate_histograms": FigureSpec(
            "gate_histograms",
            (j("gate_raw.csv"),),
            os.path.join(out_dir, "gate_histograms.png"),
            bins=bins,
        ),
    }


def dispatch(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gatednet-figures",
        description="Render gatednet report CSVs into the experiment figures.",
    )
    parser.add_argument("--report", required=True, help="completed report directory")
    parser.add_argument("--out", default=None, help="image output directory (default: report)")
    parser.add_argument("--curve", default=None, help="explicit loss_curve.csv path")
    parser.add_argument("--bins", type=int, default=30, help="histogram bin count")
    parser.add_argument("--only", choices=KINDS, default=None, help="render a single kind")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    out_dir = args.out or args.report
    os.makedirs(out_dir, exist_ok=True)
    specs = build_specs(args.report, out_dir, args.curve, args.bins)
    kinds = [args.only] if args.only else list(KINDS)
    for kind in kinds:
        spec = specs[kind]
        if kind == "gate_images" and not spec.inputs:
            print(
                f"gatednet-figures: error: no gate_biases_layer*.csv in {args.report}",
                file=sys.stderr,
            )
            return 1
        try:
            path = render(spec)
        except (MissingInputError, SchemaError) as e:
            print(f"gatednet-figures: error: {e}", file=sys.stderr)
            return 1
        print(f"gatednet-figures: wrote {path}")
    return 0


def main() -> None:
    raise SystemExit(dispatch())
