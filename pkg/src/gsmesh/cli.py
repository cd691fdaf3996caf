"""Batch command-line front end.

Subcommands compose the library pipeline: `render` (images from a scene),
`extract` (level-set mesh), `fit` (optimize a scene against posed images),
`check` (embedded oracle suites), `field-dump` (opacity samples as PLY).
Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

import argparse
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import FitConfig, SceneConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _add_scene_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--level", type=float, default=None, help="level-set value")
    p.add_argument("--binary-steps", type=int, default=None,
                   help="binary-search rounds for level refinement")
    p.add_argument("--box-sigma", type=float, default=None,
                   help="bounding-box extent in sigmas")
    p.add_argument("--prune-alpha", type=float, default=None,
                   help="alpha threshold for grid generation")
    p.add_argument("--near-clip", type=float, default=None)
    p.add_argument("--alpha-d", type=float, default=None,
                   help="depth-distortion loss weight")
    p.add_argument("--beta-n", type=float, default=None,
                   help="normal-consistency loss weight")


def _scene_config(args) -> SceneConfig:
    cfg = SceneConfig()
    mapping = {"level": "level", "binary_steps": "binary_steps",
               "box_sigma": "box_sigma", "prune_alpha": "prune_alpha",
               "near_clip": "near_clip", "alpha_d": "alpha_distortion",
               "beta_n": "beta_normal"}
    overrides = {}
    for arg_name, cfg_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[cfg_name] = value
    return cfg.replace(**overrides) if overrides else cfg


def _print_config(cfg: SceneConfig):
    for f in fields(cfg):
        print(f"{f.name} = {getattr(cfg, f.name)}")


def _load_inputs(args, need_images: bool):
    from .io import load_cameras, load_gaussians

    scene = load_gaussians(args.scene)
    views = load_cameras(args.cameras, load_images=need_images)
    if getattr(args, "views", None):
        by_id = {v.view_id: v for v in views}
        try:
            views = [by_id[i] for i in args.views]
        except KeyError as e:
            raise FileNotFoundError(f"no camera with id {e.args[0]}")
    return scene, views


def cmd_render(args) -> int:
    from .io import depth_for_display, save_image
    from .render import render_view

    scene, views = _load_inputs(args, need_images=False)
    cfg = _scene_config(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = []
    for v in views:
        buf = render_view(scene, v, cfg)
        save_image(buf.color, outdir / f"color_{v.view_id:04d}.png")
        save_image(depth_for_display(buf.depth, buf.accumulation),
                   outdir / f"depth_{v.view_id:04d}.png")
        save_image(0.5 * (buf.normal + 1.0), outdir / f"normal_{v.view_id:04d}.png")
        summary.append({"view": v.view_id,
                        "mean_accumulation": float(buf.accumulation.mean()),
                        "mean_contributors": float(buf.contributors.mean())})
        print(f"view {v.view_id}: mean accumulation "
              f"{summary[-1]['mean_accumulation']:.4f}")
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump({"views": summary}, fh, indent=1)
    return EXIT_OK


def cmd_extract(args) -> int:
    from .io import save_mesh
    from .tetra import extract_mesh

    scene, views = _load_inputs(args, need_images=False)
    cfg = _scene_config(args)
    t0 = time.time()
    mesh, stats = extract_mesh(scene, views, cfg, return_stats=True)
    print(f"grid vertices: {stats.grid_vertices}")
    print(f"tets: {stats.tets_kept} kept / {stats.tets_total} total "
          f"({stats.tets_total - stats.tets_kept} dropped)")
    print(f"crossings: {stats.crossings} "
          f"({stats.unvisited_crossings} touching never-visited vertices)")
    print(f"refinement rounds: {stats.refine_rounds}")
    print(f"mesh: {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles "
          f"({time.time() - t0:.1f}s)")
    save_mesh(mesh, args.output, fmt=args.format)
    return EXIT_OK


def cmd_fit(args) -> int:
    from .io import load_cameras, load_gaussians, save_gaussians
    from .optimize import FitDivergenceError, fit

    init = load_gaussians(args.init)
    views = load_cameras(args.cameras, load_images=True)
    missing = [v.view_id for v in views if v.image is None]
    if missing:
        raise FileNotFoundError(f"cameras without reference images: {missing}")
    cfg = _scene_config(args)
    fc = FitConfig(seed=args.seed)
    if args.iters is not None:
        fc.iterations = args.iters

    def log_line(e):
        print(f"iter {e['iter']:5d}  L_c {e['loss_photometric']:.6f}  "
              f"L_d {e['loss_distortion']:.6f}  L_n {e['loss_normal']:.6f}  "
              f"gaussians {e['gaussians']}")

    try:
        fitted, _ = fit(init, views, fc.iterations, cfg, fc, log_fn=log_line)
    except FitDivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    save_gaussians(fitted, args.output)
    print(f"saved {len(fitted)} Gaussians to {args.output}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_checks

    faults = frozenset(args.inject_fault or [])
    results = run_checks(faults, seed=args.seed)
    all_ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:15s} {r.seconds:6.2f}s  {r.detail}")
        all_ok &= r.passed
    return EXIT_OK if all_ok else EXIT_NUMERIC


def cmd_field_dump(args) -> int:
    from .field import field_opacity
    from .io import save_field_ply
    from .tetra import generate_vertices

    scene, views = _load_inputs(args, need_images=False)
    cfg = _scene_config(args)
    pruned = scene.select(scene.opacities >= cfg.prune_alpha)
    pts, _, _ = generate_vertices(pruned, cfg)
    if len(pts) == 0:
        print("error: no Gaussians above the prune threshold", file=sys.stderr)
        return EXIT_INPUT
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    n = args.resolution
    axes = [np.linspace(lo[i], hi[i], n) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    values = field_opacity(scene, views, grid, cfg)
    save_field_ply(grid, values, args.output)
    print(f"dumped {len(grid)} samples to {args.output} "
          f"(opacity range {values.min():.4f}..{values.max():.4f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsmesh",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--print-config", action="store_true",
                    help="print the numeric defaults and exit")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: hardware parallelism)")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("render", help="render color/depth/normal images")
    p.add_argument("scene"), p.add_argument("cameras"), p.add_argument("outdir")
    p.add_argument("--views", type=int, nargs="*", help="camera ids to render")
    _add_scene_config_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("extract", help="extract a level-set mesh")
    p.add_argument("scene"), p.add_argument("cameras"), p.add_argument("output")
    p.add_argument("--format", choices=["obj", "ply"], default=None)
    _add_scene_config_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="optimize a scene against posed images")
    p.add_argument("cameras"), p.add_argument("init"), p.add_argument("output")
    p.add_argument("--iters", type=int, default=None)
    _add_scene_config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("check", help="run the embedded oracle suites")
    p.add_argument("--inject-fault", action="append",
                   help="deliberately break a kernel (harness self-test)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("field-dump", help="dump opacity-field samples as PLY")
    p.add_argument("scene"), p.add_argument("cameras"), p.add_argument("output")
    p.add_argument("--resolution", type=int, default=24,
                   help="grid samples per axis")
    _add_scene_config_flags(p)
    p.set_defaults(func=cmd_field_dump)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        try:
            import torch

            torch.set_num_threads(max(1, args.threads))
        except ImportError:
            pass
    if args.print_config:
        _print_config(SceneConfig())
        return EXIT_OK
    if not getattr(args, "command", None):
        build_parser().print_help()
        return EXIT_INPUT
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
