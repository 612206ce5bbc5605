"""Command line entry point: ``dualstitch <subcommand> ...``.

Exit codes: 0 success, 2 calibration error, 3 coverage error, 4 sequence gap,
1 anything else the library reports.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from dualstitch.calibration import load_calibration
from dualstitch.errors import StitchError
from dualstitch.images import read_equirect, read_fisheye, write_image
from dualstitch.mls import DEFAULT_SPACING, Variant, load_grid, save_grid
from dualstitch.temporal import GateThresholds

log = logging.getLogger("dualstitch")


def _thresholds(args) -> GateThresholds:
    if args.no_gate:
        return GateThresholds.disabled()
    return GateThresholds(args.ncc_thresh, args.dy_margin, args.dx_drift, args.dx_floor)


def _add_threshold_flags(p):
    d = GateThresholds()
    p.add_argument("--ncc-thresh", type=float, default=d.ncc, help="NCC score a boundary must exceed")
    p.add_argument("--dy-margin", type=float, default=d.dy_margin, help="allowed |dy| in pixels")
    p.add_argument("--dx-drift", type=float, default=d.dx_drift, help="allowed relative dx drift")
    p.add_argument("--dx-floor", type=float, default=d.dx_floor, help="lower bound on |prev dx| in the drift rule")
    p.add_argument("--no-gate", action="store_true", help="accept every match (disables jitter control)")


def parse_pert(specs):
    """Parse ``rot=yaw,pitch,roll``, ``gain=d`` and ``dec=dx,dy`` items.

    Items may be given as repeated flags or joined with ';'.
    """
    from dualstitch.oracle import Perturbation

    fields = {}
    keys = {"rot": "rotation", "rotation": "rotation", "gain": "radial_gain_delta", "dec": "decenter", "decenter": "decenter"}
    for spec in specs or ():
        for item in filter(None, spec.split(";")):
            key, _, value = item.partition("=")
            key = key.strip().lower()
            if key not in keys or not value:
                raise ValueError(f"bad perturbation item {item!r}; expected rot=a,b,c gain=g dec=x,y")
            nums = tuple(float(v) for v in value.split(","))
            name = keys[key]
            want = {"rotation": 3, "radial_gain_delta": 1, "decenter": 2}[name]
            if len(nums) != want:
                raise ValueError(f"{key} needs {want} value(s), got {len(nums)}")
            fields[name] = nums[0] if want == 1 else nums
    return Perturbation(**fields)


def cmd_unwarp(args):
    from dualstitch.lens import compensate_falloff, unwarp_fisheye

    calib = load_calibration(args.calib)
    lens = calib.right if args.lens == "right" else calib.left
    width = args.width or calib.panorama_width
    img = unwarp_fisheye(compensate_falloff(read_fisheye(args.fisheye), lens), lens, width)
    write_image(args.output, img.pixels)


def cmd_build_grid(args):
    from dualstitch.pipeline import StitchConfig, build_grid

    config = StitchConfig.from_file(
        args.calib, width=args.width, variant=args.variant, alpha=args.alpha, spacing=args.spacing
    )
    grid = build_grid(config)
    save_grid(args.output, grid)
    log.info("grid %dx%d spacing %d -> %s", grid.width, grid.height, grid.spacing, args.output)


def _config(args, **extra):
    from dualstitch.pipeline import StitchConfig

    calib = load_calibration(args.calib)
    grid = load_grid(args.grid)
    if grid.width % 2 or grid.height * 2 != grid.width:
        raise StitchError(f"grid {args.grid} is not for a 2:1 panorama")
    config = StitchConfig(calib, width=grid.width, **extra)
    return config, grid


def cmd_stitch(args):
    from dualstitch.pipeline import stitch_frame

    config, grid = _config(args, refine=not args.no_refine, blend=not args.no_blend)
    res = stitch_frame(read_fisheye(args.left), read_fisheye(args.right), config, grid)
    write_image(args.output, res.panorama.pixels)
    if args.diag:
        Path(args.diag).write_text(res.diag_line(0) + "\n")


def cmd_stitch_video(args):
    from dualstitch.pipeline import stitch_sequence

    config, grid = _config(args, thresholds=_thresholds(args), refine=not args.no_refine, blend=not args.no_blend)
    stitch_sequence(args.in_dir, args.out_dir, config, grid, diag_path=args.diag)


def cmd_synth(args):
    from dualstitch import oracle

    pert = parse_pert(args.pert)
    scene = oracle.make_scene(
        args.scene, args.width, pert, channels=args.channels, seed=args.seed, n_per_band=args.n_per_band
    )
    paths = oracle.write_scene(scene, args.out_dir)
    if args.frames:
        corrupt = set(args.corrupt or ())
        oracle.write_sequence(scene, Path(args.out_dir) / "frames", args.frames, corrupt)
    for name, path in paths.items():
        print(f"{name}\t{path}")


def cmd_eval(args):
    from dualstitch.layout import SeamLayout
    from dualstitch.oracle import seam_error

    stitched = read_equirect(args.stitched)
    truth = read_equirect(args.truth)
    if stitched.pixels.shape != truth.pixels.shape:
        raise StitchError(f"image shapes differ: {stitched.pixels.shape} vs {truth.pixels.shape}")
    layout = SeamLayout(stitched.width, stitched.height, args.overlap)
    report = seam_error(stitched, truth, layout)
    sys.stdout.write(report.tsv())


def cmd_serve(args):
    import uvicorn

    uvicorn.run("dualstitch.service.app:app", host=args.host, port=args.port, log_level="info")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualstitch", description="Dual-fisheye 360 stitching")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("unwarp", help="fisheye image -> equirect image for one lens")
    p.add_argument("fisheye")
    p.add_argument("calib")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--lens", choices=("left", "right"), default="right")
    p.add_argument("--width", type=int)
    p.set_defaults(func=cmd_unwarp)

    p = sub.add_parser("build-grid", help="precompute the MLS backward grid")
    p.add_argument("calib")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--spacing", type=int, default=DEFAULT_SPACING)
    p.add_argument("--alpha", type=float)
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.RIGID.value)
    p.add_argument("--width", type=int, help="panorama width (default: from the calibration)")
    p.set_defaults(func=cmd_build_grid)

    for name, helptext in (("stitch", "stitch one fisheye pair"), ("stitch-video", "stitch numbered side-by-side frames")):
        p = sub.add_parser(name, help=helptext)
        if name == "stitch":
            p.add_argument("left")
            p.add_argument("right")
        else:
            p.add_argument("in_dir")
            p.add_argument("out_dir")
        p.add_argument("calib")
        p.add_argument("grid")
        if name == "stitch":
            p.add_argument("-o", "--output", required=True)
            p.set_defaults(func=cmd_stitch)
        else:
            _add_threshold_flags(p)
            p.set_defaults(func=cmd_stitch_video)
        p.add_argument("--no-refine", action="store_true")
        p.add_argument("--no-blend", action="store_true", help="hard cut at the band centres")
        p.add_argument("--diag", help="diagnostics file (one line per frame)")

    p = sub.add_parser("synth", help="render an oracle scene with known misalignment")
    p.add_argument("--scene", choices=("checker", "gradient", "noise", "composite"), default="checker")
    p.add_argument("--pert", action="append", help="e.g. rot=1,0,0;gain=0.01;dec=3,0")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-per-band", type=int, default=24)
    p.add_argument("--frames", type=int, default=0, help="also write a static side-by-side sequence")
    p.add_argument("--corrupt", type=int, nargs="*", help="frame numbers whose overlap gets noise")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="seam-band error between a stitched panorama and ground truth")
    p.add_argument("stitched")
    p.add_argument("truth")
    p.add_argument("--overlap", type=float, default=15.0, help="overlap band width in degrees")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "seed", 0) is None:
        from dualstitch.oracle import DEFAULT_SEED

        args.seed = DEFAULT_SEED
    try:
        args.func(args)
    except StitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
