"""Command-line entry point: ``perspdeform <group> <command> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, io
from .core import PolarSpec
from .errors import FormatError, InvalidSpec, PerspDeformError
from .geometry import compose_perspective
from .metrics import DisplayWindow, report
from .phantom import BeadPhantomSpec, generate, layout
from .pipeline import PRESETS, DatasetRecipe, batch_generate, resolve_geometry
from .projector import MU_WATER, cone_project, parallel_project
from .resample import inverse, to_log_polar, to_polar
from .views import COMBOS, difference_image, flip_image, render_opbp, stack

GLOBAL_DEFAULTS = {"geometry": "bead", "seed": 0, "out": ".", "window": "0,6"}


def _global_parser(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    g = p.add_argument_group("global options")
    g.add_argument("--geometry", metavar="FILE|PRESET",
                   help=f"geometry config file or preset ({', '.join(PRESETS)}); default bead", **kw)
    g.add_argument("--seed", type=int, metavar="U64", help="random seed (default 0)", **kw)
    g.add_argument("--out", metavar="DIR", help="output directory (default .)", **kw)
    g.add_argument("--window", metavar="LO,HI", help="display window for PNG/metrics (default 0,6)", **kw)
    return p


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _window(args) -> DisplayWindow:
    try:
        return DisplayWindow.parse(args.window)
    except ValueError as exc:
        raise InvalidSpec(f"--window expects 'lo,hi', got {args.window!r}") from exc


def _geometry(args):
    return resolve_geometry(args.geometry)


def _out(args, name: str) -> Path:
    return Path(args.out) / name


def _triple(text: str, cast=float):
    vals = [cast(x) for x in text.split(",")]
    if len(vals) != 3:
        raise InvalidSpec(f"expected three comma-separated values, got {text!r}")
    return tuple(vals)


# --------------------------------------------------------------------------
# handlers
# --------------------------------------------------------------------------


def cmd_phantom_gen(args):
    spec = BeadPhantomSpec(seed=args.seed, shape=_triple(args.shape, int), voxel_mm=args.voxel)
    lay = layout(spec)
    vol = generate(spec)
    raw = _out(args, f"{args.name}.raw")
    io.save_volume(raw, vol)
    io.write_json(_out(args, f"{args.name}_layout.json"), lay.to_dict())
    _emit({"volume": str(raw), "n_beads": len(lay.beads), "seed": args.seed})


def _save_image_outputs(args, img, name):
    raw = _out(args, f"{name}.raw")
    io.save_image(raw, img)
    if not getattr(args, "no_png", False):
        io.save_png(_out(args, f"{name}.png"), img, _window(args))
    return raw


def cmd_project(args):
    vol = io.load_volume(args.volume)
    geom = _geometry(args)
    if args.command == "cone":
        img = cone_project(vol, geom, args.angle, mu_water=args.mu_water)
    else:
        img = parallel_project(vol, geom, args.angle, args.mode, mu_water=args.mu_water)
    raw = _save_image_outputs(args, img, args.name or f"{args.command}_{args.angle:g}")
    _emit({"image": str(raw), "max": float(img.data.max()), "kind": img.kind})


def cmd_resample(args):
    img = io.load_image(args.image)
    if args.command == "inverse":
        res = inverse(img)
    else:
        spec = PolarSpec.covering(args.n_phi, n_rho=args.n_rho, rho_spacing=args.rho_spacing,
                                  log_initial_rho=args.log_initial_rho)
        res = to_polar(img, spec) if args.command == "polar" else to_log_polar(img, spec)
    raw = _save_image_outputs(args, res, args.name or f"{Path(args.image).stem}_{args.command}")
    _emit({"image": str(raw), "space": res.space, "shape": list(res.data.shape)})


def cmd_views(args):
    w = _window(args)
    if args.command == "flip":
        img = io.load_image(args.image)
        res = flip_image(img, args.p_u)
        raw = _save_image_outputs(args, res, args.name or f"{Path(args.image).stem}_flipped")
        _emit({"image": str(raw)})
    elif args.command == "diff":
        res = difference_image(io.load_image(args.image), io.load_image(args.aux))
        raw = _save_image_outputs(args, res, args.name or "difference")
        _emit({"image": str(raw), "abs_max": float(np.abs(res.data).max())})
    elif args.command == "opbp":
        res = render_opbp(io.load_image(args.image), _geometry(args), args.threshold)
        raw = _save_image_outputs(args, res, args.name or f"{Path(args.image).stem}_opbp")
        _emit({"image": str(raw)})
    else:
        img0 = io.load_image(args.image)
        aux = io.load_image(args.aux) if args.aux else None
        third = io.load_image(args.third) if args.third else None
        st = stack(img0, aux, args.combo, third)
        files = io.save_stack(_out(args, args.name or f"stack_{args.combo}"), st, w)
        _emit({k: str(v) for k, v in files.items()})


def cmd_analyze(args):
    if args.command == "alpha":
        lo, hi = analysis.alpha_bounds(args.half_depth, args.d_si)
        _emit({"alpha_min": lo, "alpha_max": hi, "half_depth_mm": args.half_depth, "d_si_mm": args.d_si})
    elif args.command == "distances":
        geom = _geometry(args)
        if args.d_si is not None:
            geom = resolve_geometry({**geom.to_config(), "d_si_mm": args.d_si, "d_sd_mm": args.d_si})
        hists = analysis.distance_distributions(args.diameter, args.height, geom, args.step)
        csv_path = _out(args, f"{args.name}.csv")
        summary_path = io.save_histograms(csv_path, hists)
        _emit({"csv": str(csv_path), "summary": str(summary_path), **{h.metric: h.summary for h in hists}})
    elif args.command == "perturb":
        geom = _geometry(args)
        res = analysis.perturb(geom, analysis.Perturbation(args.kind, args.magnitude, args.direction))
        path = _out(args, f"{args.name}.cfg")
        io.save_geometry(path, res)
        _emit({"geometry": str(path), **res.to_config()})
    else:
        geom = _geometry(args)
        if args.p0 and args.p180:
            P0, P180 = _load_matrix(args.p0), _load_matrix(args.p180)
        else:
            g2 = geom
            if args.kind:
                g2 = analysis.perturb(geom, analysis.Perturbation(args.kind, args.magnitude, args.direction))
            P0 = compose_perspective(geom, 0.0)
            P180 = compose_perspective(g2, math.pi)
        al = analysis.align_complementary(P0, P180, geom)
        res = {"shift_u_px": al.shift_u, "shift_v_px": al.shift_v, "residual_mm": al.residual_mm}
        if args.save:
            io.write_json(_out(args, f"{args.name}.json"), res)
        _emit(res)


def _load_matrix(path) -> np.ndarray:
    try:
        P = np.loadtxt(path, dtype=float)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read projection matrix {path}: {exc}") from exc
    if P.shape != (3, 4):
        raise FormatError(f"{path}: expected a 3x4 matrix, got shape {P.shape}")
    return P


def cmd_metrics(args):
    a, b = io.load_image(args.a), io.load_image(args.b)
    rep = report(a, b, _window(args))
    if args.save:
        io.write_json(_out(args, f"metrics_{args.command}.json"), rep)
    _emit({args.command: rep[args.command], **rep})


def cmd_dataset_generate(args):
    recipe_dict = io.read_json(args.recipe)
    present = vars(args)
    if "seed" in present:
        recipe_dict["seed"] = args.seed
    if "geometry" in present:
        recipe_dict["geometry"] = args.geometry
    if "window" in present:
        recipe_dict["window"] = args.window
    if "out" in present:
        recipe_dict["out_dir"] = args.out
    recipe = DatasetRecipe.from_dict(recipe_dict)
    sources = args.volumes if args.volumes else args.phantoms
    man = batch_generate(recipe, sources, progress=None if args.quiet else
                         (lambda e: print(f"wrote {e['id']}", file=sys.stderr)))
    _emit({"out_dir": recipe.out_dir, "n_pairs": man["n_pairs"]})


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    glob = _global_parser(suppress=True)
    parser = argparse.ArgumentParser(
        prog="perspdeform",
        description="Perspective-deformation toolkit: phantoms, projections, view stacks, analysis.",
        parents=[_global_parser(suppress=False)],
    )
    groups = parser.add_subparsers(dest="group", required=True, metavar="GROUP")

    def leaf(sub, name, func, help_):
        p = sub.add_parser(name, help=help_, parents=[glob])
        p.set_defaults(func=func)
        return p

    # phantom
    g = groups.add_parser("phantom", help="bead phantom generation")
    sub = g.add_subparsers(dest="command", required=True, metavar="COMMAND")
    p = leaf(sub, "gen", cmd_phantom_gen, "generate a random bead phantom volume")
    p.add_argument("--shape", default="512,512,512", help="nx,ny,nz voxels")
    p.add_argument("--voxel", type=float, default=0.625, help="voxel size in mm")
    p.add_argument("--name", default="phantom")

    # project
    g = groups.add_parser("project", help="forward projection")
    sub = g.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, help_ in (("cone", "perspective (cone-beam) projection"), ("parallel", "orthogonal projection")):
        p = leaf(sub, name, cmd_project, help_)
        p.add_argument("volume", help="volume raw file (sidecar next to it)")
        p.add_argument("--angle", type=float, default=0.0, help="view angle in degrees")
        p.add_argument("--mu-water", type=float, default=MU_WATER)
        p.add_argument("--name")
        p.add_argument("--no-png", action="store_true")
        if name == "parallel":
            p.add_argument("--mode", choices=("exact", "paper_approx"), default="exact")

    # resample
    g = groups.add_parser("resample", help="polar / log-polar transforms")
    sub = g.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, help_ in (("polar", "Cartesian to polar"), ("logpolar", "Cartesian to log-polar"),
                        ("inverse", "polar or log-polar back to Cartesian")):
        p = leaf(sub, name, cmd_resample, help_)
        p.add_argument("image")
        p.add_argument("--name")
        p.add_argument("--no-png", action="store_true")
        if name != "inverse":
            p.add_argument("--n-rho", type=int, default=512)
            p.add_argument("--n-phi", type=int, default=512)
            p.add_argument("--rho-spacing", type=float, default=0.375)
            p.add_argument("--log-initial-rho", type=float, default=0.0075)

    # views
    g = groups.add_parser("views", help="view combinations")
    sub = g.add_subparsers(dest="command", required=True, metavar="COMMAND")
    p = leaf(sub, "flip", cmd_views, "mirror an image about the principal point")
    p.add_argument("image")
    p.add_argument("--p-u", type=float, help="mirror column (default: principal point of the image)")
    p = leaf(sub, "stack", cmd_views, "assemble an RGB stack")
    p.add_argument("image", help="reference (0 degree) image")
    p.add_argument("aux", nargs="?", help="aligned auxiliary image")
    p.add_argument("--third", help="third image for the triple combo")
    p.add_argument("--combo", choices=COMBOS, default="comp_dup")
    p = leaf(sub, "opbp", cmd_views, "render OPBP stripes of a 90 degree view")
    p.add_argument("image")
    p.add_argument("--threshold", type=float, default=0.0)
    p = leaf(sub, "diff", cmd_views, "signed difference image")
    p.add_argument("image")
    p.add_argument("aux")
    for p in sub.choices.values():
        p.add_argument("--name")
        p.add_argument("--no-png", action="store_true")

    # analyze
    g = groups.add_parser("analyze", help="geometric analysis")
    sub = g.add_subparsers(dest="command", required=True, metavar="COMMAND")
    p = leaf(sub, "distances", cmd_analyze, "distance histograms over a cylinder")
    p.add_argument("--diameter", type=float, default=320.0)
    p.add_argument("--height", type=float, default=320.0)
    p.add_argument("--step", type=float, default=2.0)
    p.add_argument("--d-si", type=float, help="override source-isocenter distance (virtual detector)")
    p.add_argument("--name", default="distances")
    p = leaf(sub, "alpha", cmd_analyze, "closed-form ratio bounds")
    p.add_argument("--half-depth", type=float, default=160.0)
    p.add_argument("--d-si", type=float, default=600.0)
    for name, help_ in (("perturb", "write a perturbed geometry"), ("align", "complementary-view alignment")):
        p = leaf(sub, name, cmd_analyze, help_)
        p.add_argument("--kind", choices=analysis.PERTURBATIONS, required=name == "perturb")
        p.add_argument("--magnitude", type=float, default=0.0)
        p.add_argument("--direction", type=float, default=0.0, help="shift direction on the detector, degrees")
        p.add_argument("--name", default="perturbed" if name == "perturb" else "alignment")
        if name == "align":
            p.add_argument("--p0", help="text file with the 3x4 matrix of the 0 degree view")
            p.add_argument("--p180", help="text file with the 3x4 matrix of the 180 degree view")
            p.add_argument("--save", action="store_true", help="also write a JSON report to --out")

    # metrics
    g = groups.add_parser("metrics", help="image quality metrics")
    sub = g.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in ("rmse", "ssim"):
        p = leaf(sub, name, cmd_metrics, f"{name.upper()} on windowed images")
        p.add_argument("a")
        p.add_argument("b")
        p.add_argument("--save", action="store_true", help="write a metrics JSON to --out")

    # dataset
    g = groups.add_parser("dataset", help="batch dataset generation")
    sub = g.add_subparsers(dest="command", required=True, metavar="COMMAND")
    p = leaf(sub, "generate", cmd_dataset_generate, "generate pairs from a JSON recipe")
    p.add_argument("recipe", help="recipe JSON file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--phantoms", type=int, default=1, help="number of bead phantoms")
    src.add_argument("--volumes", nargs="+", help="volume raw files instead of bead phantoms")
    p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    explicit = dict(vars(args))
    for k, v in GLOBAL_DEFAULTS.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)
            explicit.pop(k, None)
    if args.group == "dataset":
        # only flags given on the command line override the recipe
        for k in GLOBAL_DEFAULTS:
            if k not in explicit and hasattr(args, k):
                delattr(args, k)
    try:
        args.func(args)
    except PerspDeformError as exc:
        category = type(exc).__name__
        print(f"perspdeform: error [{category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
