"""Command-line client.

Thin wrapper over the service handlers: each subcommand builds a request
model from its flags, runs the handler in-process, and prints the
response summary.  Exit codes: 0 success, 1 runtime failure, 2 invalid
configuration or arguments, 3 geometry mismatch between valid inputs.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from . import service as sv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--output-dir", default=None,
        help=f"run output directory (default: ${sv.OUTPUT_DIR_ENV} "
             f"or ./cassim-runs)")
    sub.add_argument(
        "--threads", type=int, default=0,
        help="worker threads for band rendering; 0 = hardware concurrency")


def _base_kwargs(args) -> dict:
    kw = {"threads": args.threads}
    if args.output_dir is not None:
        kw["output_dir"] = args.output_dir
    return kw


def _cmd_design(args) -> sv.CommandResponse:
    return sv.handle_design(sv.DesignRequest(
        config_path=args.config, iterations=args.iterations,
        seed=args.seed, **_base_kwargs(args)))


def _cmd_render(args) -> sv.CommandResponse:
    return sv.handle_render(sv.RenderRequest(
        system=args.system, scene=args.scene, mask_path=args.mask,
        open_ratio=args.open_ratio, mask_seed=args.mask_seed,
        rng_seed=args.seed, oversampling=args.oversampling,
        rays_per_pixel=args.rays, scene_size=args.scene_size,
        bands=args.bands, **_base_kwargs(args)))


def _cmd_map(args) -> sv.CommandResponse:
    return sv.handle_map(sv.MapRequest(
        system=args.system, height=args.height, width=args.width,
        bands=args.bands, oversampling=args.oversampling,
        **_base_kwargs(args)))


def _cmd_analyze(args) -> sv.CommandResponse:
    return sv.handle_analyze(sv.AnalyzeRequest(
        system=args.system, span_mm=args.span_mm, grid=args.grid,
        psf_rays=args.psf_rays, **_base_kwargs(args)))


def _cmd_reconstruct(args) -> sv.CommandResponse:
    return sv.handle_reconstruct(sv.ReconstructRequest(
        acquisition_path=args.acquisition, mask_path=args.mask,
        system=args.system, truth_path=args.truth,
        iterations=args.iterations, tv_weight=args.tv_weight,
        scene_size=args.scene_size, bands=args.bands,
        **_base_kwargs(args)))


def _cmd_validate(args) -> sv.CommandResponse:
    return sv.handle_validate(sv.ValidateRequest(
        system=args.system, **_base_kwargs(args)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cassim",
        description="Ray-traced simulation, design, and reconstruction for "
                    "coded-aperture snapshot spectral imagers.")
    parser.add_argument("--version", action="version",
                        version=f"cassim {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("design",
                        help="optimize a double-Amici prism and emit a "
                             "system config")
    p.add_argument("--config", default=None,
                   help="YAML overrides: initial point, loss weights, "
                        "optimizer settings")
    p.add_argument("--iterations", type=int, default=None,
                   help="optimizer iterations (overrides config)")
    p.add_argument("--seed", type=int, default=0)
    _common(p)
    p.set_defaults(func=_cmd_design)

    p = subs.add_parser("render",
                        help="render a scene into a coded acquisition")
    p.add_argument("--system", default="AP",
                   help="reference name (SP, AP, mSP, mAP) or config path")
    p.add_argument("--scene", default="blocks",
                   help="scene name (blocks, slits, smooth) or cube "
                        "container path")
    p.add_argument("--mask", default=None,
                   help="mask file (.pgm or container); default: random")
    p.add_argument("--open-ratio", type=float, default=0.5,
                   help="open fraction of the random mask")
    p.add_argument("--mask-seed", type=int, default=21)
    p.add_argument("--seed", type=int, default=7, help="render RNG seed")
    p.add_argument("--oversampling", type=int, default=4,
                   help="spectral sub-bands per native band")
    p.add_argument("--rays", type=int, default=20,
                   help="rays per scene pixel per wavelength")
    p.add_argument("--scene-size", type=int, default=64)
    p.add_argument("--bands", type=int, default=28)
    _common(p)
    p.set_defaults(func=_cmd_render)

    p = subs.add_parser("map",
                        help="export the spatio-spectral mapping table")
    p.add_argument("--system", default="AP")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--bands", type=int, default=28)
    p.add_argument("--oversampling", type=int, default=1,
                   help="sub-band mapping entries per native band")
    _common(p)
    p.set_defaults(func=_cmd_map)

    p = subs.add_parser("analyze",
                        help="export distortion, spectral spread, and spot "
                             "diagrams as CSV")
    p.add_argument("--system", default="AP")
    p.add_argument("--span-mm", type=float, default=5.0,
                   help="full field width of the distortion grid")
    p.add_argument("--grid", type=int, default=21,
                   help="distortion grid points per side")
    p.add_argument("--psf-rays", type=int, default=61)
    _common(p)
    p.set_defaults(func=_cmd_analyze)

    p = subs.add_parser("reconstruct",
                        help="reconstruct a cube from an acquisition")
    p.add_argument("--acquisition", required=True,
                   help="acquisition container path")
    p.add_argument("--mask", required=True,
                   help="mask file used during acquisition")
    p.add_argument("--system", default="AP",
                   help="system whose mapping builds the operator")
    p.add_argument("--truth", default=None,
                   help="ground-truth cube for a quality report")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--tv-weight", type=float, default=2e-2)
    p.add_argument("--scene-size", type=int, default=64)
    p.add_argument("--bands", type=int, default=28)
    _common(p)
    p.set_defaults(func=_cmd_reconstruct)

    p = subs.add_parser("validate",
                        help="run the built-in physics and consistency "
                             "checks for a system")
    p.add_argument("--system", default="AP")
    _common(p)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        response = args.func(args)
    except sv.ConfigError as exc:
        print(f"cassim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except sv.GeometryMismatch as exc:
        print(f"cassim: geometry mismatch: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"cassim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"{response.command}: wrote {len(response.files)} file(s) to "
          f"{response.output_dir}")
    for name in response.files:
        print(f"  {name}")
    for key, value in response.summary.items():
        print(f"  {key} = {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
