"""Command-line interface.

Every subcommand prints one ``status=ok key=value ...`` line on success.
Exit codes: 0 ok, 2 usage or configuration error, 3 malformed file,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .colorimetry import render_cube, render_filter_swatches
from .core import PolarizedFilterBank, SensitivityMatrix, SpectralGrid, default_grid, psnr, rmse, spectral_angle
from .errors import ConfigError, FormatError, NumericalError, SnapMsiError, StageError
from .experiment import ExperimentSpec, quantize_8bit, recover, resolve_pattern, resolve_sensitivities, run_experiment
from .forward import NoiseSpec, mosaic_apply, polarized_mosaic
from .io import (
    atomic_write,
    read_cube,
    read_mosaic,
    read_stokes,
    read_wiener,
    write_cube,
    write_mosaic,
    write_pattern,
    write_png,
    write_sensitivity,
    write_stokes,
    write_wiener,
)
from .optimize import OptimizerConfig, optimize_sensitivity, random_init_sensitivity
from .patterns import AnnealingSchedule, annd, best_of_restarts
from .recovery import recover_stokes, wiener_apply, wiener_train
from .synth import synth_cube, synth_stokes

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(SnapMsiError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _status(**kv) -> str:
    parts = ["status=ok"] + [f"{k}={_fmt(v)}" for k, v in kv.items()]
    return " ".join(parts)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v).replace(" ", "_")


def _pattern_arg(text: str, grid: SpectralGrid):
    """``preset:NAME`` or a pattern text file."""
    if text.startswith("preset:"):
        return resolve_pattern({"preset": text[len("preset:"):]}, grid)
    return resolve_pattern({"file": text}, grid)


def _sens_arg(text: str, pattern, preset, grid: SpectralGrid, seed: int) -> SensitivityMatrix:
    """``preset``, ``delta``, ``random`` or a sensitivity CSV."""
    if text in ("preset", "delta", "random"):
        return resolve_sensitivities({text: True}, pattern, preset, grid, seed)
    return resolve_sensitivities({"file": text}, pattern, preset, grid, seed)


def _grid_args(args) -> SpectralGrid:
    d = default_grid()
    return SpectralGrid(
        args.start_nm if args.start_nm is not None else d.start_nm,
        args.step_nm if args.step_nm is not None else d.step_nm,
        args.bands if args.bands is not None else d.count,
    )


def _bank_arg(text: str, grid: SpectralGrid):
    pattern, bank = _pattern_arg(text, grid)
    if not isinstance(bank, PolarizedFilterBank):
        raise ConfigError(f"{text} does not describe a polarized filter bank")
    return pattern, bank


def cmd_synth(args) -> str:
    grid = _grid_args(args)
    if args.stokes:
        s = synth_stokes(args.height, args.width, grid, args.basis_dim, args.smoothness,
                         args.dop, np.deg2rad(args.aolp_deg), args.seed)
        write_stokes(args.out, s)
    else:
        write_cube(args.out, synth_cube(args.height, args.width, grid, args.basis_dim, args.smoothness, args.seed))
    return _status(out=args.out, height=args.height, width=args.width, bands=grid.count)


def cmd_mosaic(args) -> str:
    cube = read_cube(args.cube)
    pattern, preset = _pattern_arg(args.pattern, cube.grid)
    sens = _sens_arg(args.sens, pattern, preset, cube.grid, args.seed)
    y = mosaic_apply(cube, pattern, sens, NoiseSpec(args.noise, args.seed))
    if args.quantize:
        y = quantize_8bit(y)
    write_mosaic(args.out, y)
    return _status(out=args.out, height=y.height, width=y.width)


def cmd_demosaic(args) -> str:
    y = read_mosaic(args.mosaic)
    if args.method == "wiener":
        if not args.model:
            raise ConfigError("--method wiener needs --model")
        est = wiener_apply(read_wiener(args.model), y)
    else:
        if not args.sens:
            raise ConfigError(f"--method {args.method} needs --sens")
        grid = _grid_args(args)
        pattern, preset = _pattern_arg(args.pattern, grid)
        sens = _sens_arg(args.sens, pattern, preset, grid, args.seed)
        params = {"lam": args.lam, "max_iters": args.max_iters, "smoothing_sigma": args.smoothing_sigma}
        est = recover(args.method, y, pattern, sens, params, seed=args.seed)
    write_cube(args.out, est)
    return _status(out=args.out, method=args.method, bands=est.grid.count)


def cmd_train_wiener(args) -> str:
    cubes = [read_cube(p) for p in args.cubes]
    pattern, preset = _pattern_arg(args.pattern, cubes[0].grid)
    sens = _sens_arg(args.sens, pattern, preset, cubes[0].grid, args.seed)
    model = wiener_train(cubes, pattern, sens, args.noise, args.window_tiles, args.ridge, args.seed)
    write_wiener(args.out, model)
    return _status(out=args.out, phases=pattern.area, window=model.window_size)


def cmd_optimize_sens(args) -> str:
    cubes = [read_cube(p) for p in args.cubes]
    grid = cubes[0].grid
    pattern, _ = _pattern_arg(args.pattern, grid)
    if args.init == "random":
        init = random_init_sensitivity(pattern.num_filters, grid, args.seed)
    else:
        init = _sens_arg(args.init, pattern, None, grid, args.seed)
    cfg = OptimizerConfig(
        max_outer_iters=args.iters, noise_sigma=args.noise, window_tiles=args.window_tiles,
        ridge=args.ridge, seed=args.seed,
    )
    sens, model, trace = optimize_sensitivity(cubes, pattern, init, cfg)
    write_sensitivity(args.out, sens)
    if args.model:
        write_wiener(args.model, model)
    if args.trace:
        atomic_write(args.trace, trace.to_csv().encode())
    acc = trace.accepted()
    return _status(out=args.out, iterations=len(trace.records) - 1, mse_start=acc[0].objective,
                   mse_end=acc[-1].objective, stop=trace.stop_reason)


def cmd_optimize_pattern(args) -> str:
    schedule = AnnealingSchedule(patience=args.patience)
    res = best_of_restarts(args.tile[0], args.tile[1], args.filters, args.counts, schedule, args.seed, args.restarts)
    write_pattern(args.out, res.pattern)
    return _status(out=args.out, annd=res.annd, initial_annd=res.initial_annd, seed=res.seed)


def cmd_annd(args) -> str:
    pattern, _ = _pattern_arg(args.pattern, default_grid())
    report = annd(pattern)
    per_band = ",".join(repr(v) for v in report.per_band)
    return _status(annd=report.overall, per_band=per_band)


def cmd_render(args) -> str:
    cube = read_cube(args.cube)
    write_png(args.out, render_cube(cube))
    return _status(out=args.out, height=cube.height, width=cube.width)


def cmd_swatches(args) -> str:
    grid = _grid_args(args)
    pattern, preset = _pattern_arg(args.pattern, grid) if args.pattern else (None, None)
    if args.sens in ("preset", "delta", "random"):
        if pattern is None:
            raise ConfigError(f"--sens {args.sens} needs --pattern")
        sens = _sens_arg(args.sens, pattern, preset, grid, args.seed)
    else:
        sens = _sens_arg(args.sens, None, None, grid, args.seed)
    colors = render_filter_swatches(sens)
    size = args.swatch_size
    raster = np.repeat(np.repeat(colors[None, :, :], size, axis=0), size, axis=1)
    write_png(args.out, raster)
    return _status(out=args.out, filters=sens.num_filters)


def cmd_metrics(args) -> str:
    ref, test = read_cube(args.reference), read_cube(args.test)
    return _status(psnr_db=psnr(ref, test, args.peak), rmse=rmse(ref, test), sam_rad=spectral_angle(ref, test))


def cmd_simulate_pol(args) -> str:
    s = read_stokes(args.stokes)
    pattern, bank = _bank_arg(args.pattern, s.grid)
    y = polarized_mosaic(s, bank, pattern, NoiseSpec(args.noise, args.seed))
    write_mosaic(args.out, y)
    return _status(out=args.out, height=y.height, width=y.width)


def cmd_recover_pol(args) -> str:
    y = read_mosaic(args.mosaic)
    grid = _grid_args(args)
    pattern, bank = _bank_arg(args.pattern, grid)
    s = recover_stokes(y, bank, pattern, "ridge", basis_dim=args.basis_dim, ridge=args.ridge)
    write_stokes(args.out, s)
    return _status(out=args.out, max_dop=float(np.max(s.dop())))


def cmd_run(args) -> str:
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    report = run_experiment(spec)
    m = report.metrics
    return _status(outputs=report.outputs, method=m["method"], psnr_db=m["psnr_db"], rmse=m["rmse"], sam_rad=m["sam_rad"])


def _add_grid(p) -> None:
    p.add_argument("--start-nm", type=float, default=None)
    p.add_argument("--step-nm", type=float, default=None)
    p.add_argument("--bands", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snapmsi", description="Snapshot multispectral filter array toolkit.")
    parser.add_argument("--version", action="version", version=f"snapmsi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text, seed_default=0):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=seed_default)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic cube or Stokes cube")
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--basis-dim", type=int, default=4)
    p.add_argument("--smoothness", type=float, default=3.0)
    p.add_argument("--stokes", action="store_true")
    p.add_argument("--dop", type=float, default=0.5)
    p.add_argument("--aolp-deg", type=float, default=0.0)
    _add_grid(p)

    p = add("mosaic", cmd_mosaic, "simulate a filter-array capture")
    p.add_argument("--cube", required=True)
    p.add_argument("--pattern", required=True, help="preset:NAME or pattern file")
    p.add_argument("--sens", default="preset", help="preset | delta | random | CSV file")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--quantize", action="store_true")
    p.add_argument("--out", required=True)

    p = add("demosaic", cmd_demosaic, "recover a cube from a mosaic")
    p.add_argument("--method", required=True, choices=("bilinear", "ibd", "ppi", "vtv", "wiener"))
    p.add_argument("--mosaic", required=True)
    p.add_argument("--pattern", default=None)
    p.add_argument("--sens", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--lam", type=float, default=0.01)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--smoothing-sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_grid(p)

    p = add("train-wiener", cmd_train_wiener, "train a Wiener demosaicking model")
    p.add_argument("--cubes", nargs="+", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--sens", default="preset")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--window-tiles", type=int, default=3)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--out", required=True)

    p = add("optimize-sens", cmd_optimize_sens, "jointly optimize sensitivities and the Wiener model")
    p.add_argument("--cubes", nargs="+", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--init", default="random")
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--window-tiles", type=int, default=1)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--trace", default=None)

    p = add("optimize-pattern", cmd_optimize_pattern, "anneal a filter arrangement for low ANND")
    p.add_argument("--tile", type=int, nargs=2, required=True, metavar=("H", "W"))
    p.add_argument("--filters", type=int, required=True)
    p.add_argument("--counts", type=int, nargs="+", default=None)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--patience", type=int, default=10_000)
    p.add_argument("--out", required=True)

    p = add("annd", cmd_annd, "average nearest-neighbor distance of a pattern")
    p.add_argument("--pattern", required=True)

    p = add("render", cmd_render, "render a cube to sRGB PNG")
    p.add_argument("--cube", required=True)
    p.add_argument("--out", required=True)

    p = add("swatches", cmd_swatches, "render one colour swatch per filter")
    p.add_argument("--sens", required=True, help="preset | delta | random | CSV file")
    p.add_argument("--pattern", default=None)
    p.add_argument("--swatch-size", type=int, default=16)
    p.add_argument("--out", required=True)
    _add_grid(p)

    p = add("metrics", cmd_metrics, "PSNR, RMSE and spectral angle between two cubes")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--peak", type=float, default=1.0)

    p = add("simulate-pol", cmd_simulate_pol, "capture a Stokes cube through a polarized bank")
    p.add_argument("--stokes", required=True)
    p.add_argument("--pattern", default="preset:fig7-pol16")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = add("recover-pol", cmd_recover_pol, "recover Stokes spectra from a polarized mosaic")
    p.add_argument("--mosaic", required=True)
    p.add_argument("--pattern", default="preset:fig7-pol16")
    p.add_argument("--basis-dim", type=int, default=4)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    _add_grid(p)

    p = add("run", cmd_run, "run a JSON experiment spec", seed_default=None)
    p.add_argument("spec")
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, FormatError):
        return EXIT_FORMAT
    if isinstance(exc, (NumericalError, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_USAGE


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        line = args.func(args)
    except (SnapMsiError, ValueError, ArithmeticError, OSError) as exc:
        print(f"status=error code={exit_code(exc)} message={exc}", file=sys.stderr)
        return exit_code(exc)
    print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
