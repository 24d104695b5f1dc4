"""Command-line front door.

Subcommands: design | incident | simulate | optimize | report.
Exit codes: 0 success, 2 validation error, 3 numerical divergence, 4 I/O error.

Configuration resolution order (later wins): preset, --config file,
--set key=value overrides, then the --outdir / --workers convenience flags
(PATCHGA_WORKERS overrides the config worker count when no flag is given).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from patchga import config as cfgmod
from patchga import pipeline
from patchga.errors import DivergenceError, ValidationError
from patchga.mesh import PixelMap
from patchga.seeddesign import design_patch, paper_seed
from patchga.spectra import write_atomic

log = logging.getLogger("patchga")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

WORKERS_ENV = "PATCHGA_WORKERS"


def _add_config_options(p: argparse.ArgumentParser):
    p.add_argument("--preset", default="paper", help="base preset: paper or smoke")
    p.add_argument("--config", help="flat key=value config file applied over the preset")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--outdir", help="output directory (overrides run.outdir)")
    p.add_argument("--workers", type=int, help="evaluator worker processes")
    p.add_argument("--print-config", action="store_true",
                   help="print the fully resolved configuration and exit")


def _resolve_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.preset(args.preset)
    if args.config:
        cfg = cfgmod.load_config(args.config, base=cfg)
    values = {}
    for assignment in args.overrides:
        cfgmod.set_override(values, assignment)
    if values:
        cfg = cfgmod.apply_values(cfg, values)
    workers = args.workers
    if workers is None and os.environ.get(WORKERS_ENV):
        try:
            workers = int(os.environ[WORKERS_ENV])
        except ValueError as err:
            raise ValidationError(f"{WORKERS_ENV} must be an integer") from err
    extra = {}
    if workers is not None:
        extra["run.workers"] = workers
    if args.outdir is not None:
        extra["run.outdir"] = args.outdir
    if extra:
        cfg = cfgmod.apply_values(cfg, extra)
    return cfg


def cmd_design(args) -> int:
    for name in ("fc", "eps_r", "h", "z0"):
        val = getattr(args, name)
        if val is not None and val <= 0:
            raise ValidationError(f"{name} must be > 0, got {val}")
    if args.paper_seed:
        dims, extras = paper_seed(), {}
    else:
        if args.fc is None or args.eps_r is None or args.h is None:
            raise ValidationError("design needs --paper-seed or all of --fc, --eps-r, --h")
        result = design_patch(args.fc, args.eps_r, args.h, z0=args.z0)
        dims = result.dims
        extras = {"eps_eff": result.eps_eff, "delta_l_m": result.delta_l,
                  "g1_s": result.g1, "rin0_ohm": result.rin0}
    rows = [
        ("W  (patch width)", dims.w), ("L  (patch length)", dims.l),
        ("W1 (feed width)", dims.w1), ("g  (inset gap)", dims.g),
        ("Y0 (inset depth)", dims.y0), ("eps_r", dims.eps_r), ("h  (substrate)", dims.h),
    ]
    print("inset-fed rectangular patch dimensions")
    for label, val in rows:
        if "eps" in label:
            print(f"  {label:<18}: {val:.4g}")
        else:
            print(f"  {label:<18}: {val * 1e3:.4f} mm")
    for label, val in extras.items():
        print(f"  {label:<18}: {val:.6g}")
    print()
    print("# machine-readable")
    kv = {"w_m": dims.w, "l_m": dims.l, "w1_m": dims.w1, "g_m": dims.g,
          "y0_m": dims.y0, "eps_r": dims.eps_r, "h_m": dims.h, **extras}
    for key, val in kv.items():
        print(f"{key} = {val!r}")
    return EXIT_OK


def cmd_incident(args) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfgmod.format_config(cfg), end="")
        return EXIT_OK
    outdir = Path(cfg.outdir)
    cache = pipeline.ensure_incident(cfg, outdir / "cache")
    print(f"fingerprint={cache.fingerprint}")
    print(f"samples={len(cache.samples)} dt={cache.dt:.17g}")
    return EXIT_OK


def _load_pixelmap(args) -> PixelMap:
    if args.all_ones:
        return PixelMap.ones()
    if args.chromosome:
        try:
            text = Path(args.chromosome).read_text()
        except OSError as err:
            raise FileNotFoundError(f"cannot read chromosome file: {err}") from err
        return PixelMap.from_text(text)
    raise ValidationError("simulate needs --all-ones or --chromosome FILE")


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfgmod.format_config(cfg), end="")
        return EXIT_OK
    pm = _load_pixelmap(args)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cache = pipeline.ensure_incident(cfg, outdir / "cache")
    spectrum, rec, f_min = pipeline.simulate_pixelmap(cfg, pm, cache)
    write_atomic(outdir / "s11.csv", spectrum.to_csv())
    log.info("wrote %s", outdir / "s11.csv")
    print(f"bw_hz={rec.bw_hz:.17g} rl_min_db={rec.rl_min_db:.17g} f_min_hz={f_min:.17g}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        print(cfgmod.format_config(cfg), end="")
        return EXIT_OK
    state = pipeline.run_optimize(cfg, cfg.outdir, resume=args.resume)
    best = state.best_record
    print(f"generation={state.generation} best_fit={best.fit:.17g} "
          f"bw_hz={best.bw_hz:.17g} rl_min_db={best.rl_min_db:.17g}")
    return EXIT_OK


def cmd_report(args) -> int:
    summary = pipeline.run_report(args.run_dir)
    print(summary, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchga",
        description="FDTD + genetic algorithm optimizer for pixelated patch antennas",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="print seed patch dimensions")
    p.add_argument("--paper-seed", action="store_true",
                   help="print the fixed reference geometry instead of the formulas")
    p.add_argument("--fc", type=float, help="design frequency (Hz)")
    p.add_argument("--eps-r", type=float, dest="eps_r", help="substrate permittivity")
    p.add_argument("--h", type=float, help="substrate height (m)")
    p.add_argument("--z0", type=float, default=50.0, help="feed impedance (ohm)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("incident", help="record (or reuse) the incident reference run")
    _add_config_options(p)
    p.set_defaults(func=cmd_incident)

    p = sub.add_parser("simulate", help="evaluate one pixel map and export S11")
    _add_config_options(p)
    p.add_argument("--all-ones", action="store_true", help="use the full rectangular seed patch")
    p.add_argument("--chromosome", help="17x17 grid file of '0'/'1'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="run the genetic algorithm")
    _add_config_options(p)
    p.add_argument("--resume", help="checkpoint file to continue from")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("report", help="aggregate a finished run directory")
    p.add_argument("run_dir", help="directory written by optimize")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        stream=sys.stderr, format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (FileNotFoundError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
