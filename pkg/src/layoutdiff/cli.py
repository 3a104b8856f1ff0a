"""Batch entry points: render control signals, curate layouts from annotated
depth maps, run generation/edits headlessly, and benchmark scalability.

Exit codes: 0 success, 2 missing input file, 3 corrupt/invalid layout,
4 empty input (nothing processed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from .fit import FitConfig, Rect2D, fit_camera, lift_box
from .gateway import RemoteDenoiser, make_local_backend
from .latents import load_latent, save_latent
from .orchestrator import PARALLEL, SEQUENTIAL, GenerationConfig, edit_apply, generate_scene
from .raster import export_depth, export_masks, import_depth, render_depth, render_masks
from .scene import (
    Camera,
    LayoutParseError,
    ObjectSpec,
    Scene,
    load_layout,
    save_layout,
    validate_scene,
)
from .toy import decode_preview

EXIT_OK = 0
EXIT_MISSING = 2
EXIT_INVALID = 3
EXIT_EMPTY = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_layout(path: str) -> Scene:
    file = Path(path)
    if not file.exists():
        raise CliError(EXIT_MISSING, f"file not found: {path}")
    try:
        scene = load_layout(file.read_bytes())
    except LayoutParseError as exc:
        raise CliError(EXIT_INVALID, f"invalid layout {path}: {exc}")
    violations = validate_scene(scene)
    if violations:
        report = "; ".join(str(v) for v in violations)
        raise CliError(EXIT_INVALID, f"invalid layout {path}: {report}")
    return scene


def _make_denoiser(backend: str, steps: int, step_latency: float = 0.0):
    if backend == "toy":
        return make_local_backend("toy", steps=steps, step_latency=step_latency)
    return RemoteDenoiser(backend)


def _generation_config(args) -> GenerationConfig:
    return GenerationConfig(
        steps=args.steps,
        seed=args.seed,
        use_background_path=not args.no_background,
        two_stage=args.two_stage,
        mode=args.mode,
    )


def cmd_render(args) -> int:
    scene = _read_layout(args.layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "depth.png").write_bytes(export_depth(render_depth(scene)))
    (out / "masks.png").write_bytes(export_masks(render_masks(scene)))
    print(f"wrote {out / 'depth.png'} and {out / 'masks.png'}")
    return EXIT_OK


def cmd_curate(args) -> int:
    input_dir = Path(args.input)
    if not input_dir.is_dir():
        raise CliError(EXIT_MISSING, f"file not found: {args.input}")
    pairs = [
        (png, png.with_suffix(".json"))
        for png in sorted(input_dir.glob("*.png"))
        if png.with_suffix(".json").exists()
    ]
    if not pairs:
        raise CliError(EXIT_EMPTY, f"no depth PNG + annotation pairs in {args.input}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = []
    for png_path, ann_path in pairs:
        name = png_path.stem
        try:
            depth = import_depth(png_path.read_bytes())
            annotation = json.loads(ann_path.read_text())
            camera = Camera.default(depth.width, depth.height)
            rects, objects = [], []
            for i, entry in enumerate(annotation["boxes"]):
                rect = Rect2D(*entry["rect"])
                box = lift_box(rect, depth, camera, box_id=entry.get("id", f"object_{i}"))
                rects.append(rect)
                objects.append(ObjectSpec(box=box, prompt=entry["prompt"]))
            fit = fit_camera(
                [spec.box for spec in objects], rects, camera, FitConfig(seed=args.seed)
            )
            scene = Scene(
                camera=fit.camera,
                objects=tuple(objects),
                background_prompt=annotation.get("background_prompt", "a plain background"),
            )
            (out / f"{name}.layout.json").write_bytes(save_layout(scene))
            report.append(
                {
                    "scene": name,
                    "final_loss": fit.final_loss,
                    "iterations": fit.iterations,
                    "restarts_used": fit.restarts_used,
                }
            )
            print(f"{name}: loss={fit.final_loss:.4f} iterations={fit.iterations}")
        except Exception as exc:
            print(f"{name}: skipped ({exc})", file=sys.stderr)
    (out / "fit_report.json").write_text(json.dumps(report, indent=2))
    if not report:
        raise CliError(EXIT_EMPTY, "all scenes failed")
    return EXIT_OK


def cmd_generate(args) -> int:
    scene = _read_layout(args.layout)
    config = _generation_config(args)
    denoiser = _make_denoiser(args.backend, config.steps)
    latent = generate_scene(scene, denoiser, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "latent.lat").write_bytes(save_latent(latent))
    (out / "preview.png").write_bytes(decode_preview(latent))
    print(f"wrote {out / 'latent.lat'} and {out / 'preview.png'}")
    return EXIT_OK


def cmd_edit(args) -> int:
    old_scene = _read_layout(args.layout)
    new_scene = _read_layout(args.new_layout)
    latent_path = Path(args.latent)
    if not latent_path.exists():
        raise CliError(EXIT_MISSING, f"file not found: {args.latent}")
    z_img = load_latent(latent_path.read_bytes())
    config = _generation_config(args)
    denoiser = _make_denoiser(args.backend, config.steps)
    latent = edit_apply(old_scene, new_scene, z_img, denoiser, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "latent.lat").write_bytes(save_latent(latent))
    (out / "preview.png").write_bytes(decode_preview(latent))
    print(f"wrote {out / 'latent.lat'} and {out / 'preview.png'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.backend != "toy":
        raise CliError(EXIT_INVALID, "bench requires the toy backend")
    sizes = sorted({int(s) for s in args.sizes.split(",") if s.strip()})
    if not sizes:
        raise CliError(EXIT_EMPTY, "no sizes given")
    modes = (PARALLEL, SEQUENTIAL) if args.mode == "both" else (args.mode,)
    report = bench_mod.run_bench(
        sizes, steps=args.steps, modes=modes, step_latency=args.latency, seed=args.seed
    )
    print(bench_mod.format_table(report))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default flag values")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--steps", type=int, default=50)
    common.add_argument("--backend", default="toy", help='"toy" or a backend endpoint URL')

    generation = argparse.ArgumentParser(add_help=False)
    generation.add_argument("--two-stage", action="store_true")
    generation.add_argument("--no-background", action="store_true")
    generation.add_argument("--mode", choices=[PARALLEL, SEQUENTIAL], default=PARALLEL)

    parser = argparse.ArgumentParser(prog="layoutdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", parents=[common], help="render depth + mask PNGs for a layout")
    p.add_argument("--layout", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("curate", parents=[common], help="lift 2D annotations and fit cameras")
    p.add_argument("--input", required=True, help="directory of depth PNGs + .json annotations")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("generate", parents=[common, generation], help="generate a scene latent")
    p.add_argument("--layout", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("edit", parents=[common, generation], help="apply a layout edit to a latent")
    p.add_argument("--layout", required=True, help="layout the latent was generated from")
    p.add_argument("--new-layout", required=True)
    p.add_argument("--latent", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("bench", parents=[common], help="time generation vs object count")
    p.add_argument("--sizes", default="2,8", help="comma-separated object counts")
    p.add_argument("--mode", choices=[PARALLEL, SEQUENTIAL, "both"], default="both")
    p.add_argument("--latency", type=float, default=bench_mod.DEFAULT_STEP_LATENCY)
    p.add_argument("--out", help="write a machine-readable JSON report here")
    p.set_defaults(func=cmd_bench)
    return parser


def _apply_config_file(args, argv: list[str]) -> None:
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise CliError(EXIT_MISSING, f"file not found: {args.config}")
    doc = json.loads(path.read_text())
    for key in ("seed", "steps", "backend"):
        if key in doc and f"--{key}" not in argv:
            setattr(args, key, doc[key])


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
