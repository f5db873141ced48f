"""Declarative end-to-end runs: load -> mosaic -> recover -> evaluate -> render.

An experiment is a JSON document::

    {
      "version": 1,
      "seed": 0,
      "input": {"cube": "scene.msic"}            # or {"synth": {...}} / {"chart": {...}}
      "pattern": {"preset": "bayer"},            # or {"file": "tile.txt"} / {"cells": [[...]], "num_filters": K}
      "sensitivities": {"preset": true},         # or {"file": ...} / {"delta": true | [bands]} / {"random": true}
      "noise": {"sigma": 0.0},
      "quantize_8bit": false,
      "method": "wiener",                         # bilinear | ibd | ppi | vtv | wiener
      "params": {"window_tiles": 3, "ridge": 1e-6},
      "training": {"self": true},                # or {"cubes": [...]} / {"synth": {"count": n, ...}}
      "outputs": "out"
    }

Relative paths resolve against the directory of the experiment file. Every
referenced file is checked before any work starts, outputs are staged in a
temporary directory and moved into place only after all stages succeed, and
every output is a deterministic function of the experiment file.
"""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classic import BandSampling, demosaic_bilinear, demosaic_interband, demosaic_ppi
from .colorimetry import render_cube
from .core import (
    FilterArrayPattern,
    MosaickedImage,
    MultispectralImage,
    SensitivityMatrix,
    SpectralGrid,
    default_grid,
    psnr,
    rmse,
    spectral_angle,
)
from .errors import ConfigError, SnapMsiError, StageError
from .forward import NoiseSpec, mosaic_apply
from .io import cube_to_bytes, png_bytes, read_cube, read_pattern, read_sensitivity
from .optimize import random_init_sensitivity
from .patterns import preset_pattern
from .recovery import VtvConfig, demosaic_vtv, wiener_apply, wiener_train
from .synth import synth_chart, synth_cube

SPEC_VERSION = 1
METHODS = ("bilinear", "ibd", "ppi", "vtv", "wiener")
METRIC_COLUMNS = ("method", "psnr_db", "rmse", "sam_rad")


@dataclass
class ExperimentSpec:
    seed: int
    input: dict
    pattern: dict
    sensitivities: dict
    method: str
    outputs: Path
    base_dir: Path
    noise_sigma: float = 0.0
    quantize_8bit: bool = False
    params: dict = field(default_factory=dict)
    training: dict | None = None

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise ConfigError("experiment spec must be a JSON object")
        version = doc.get("version", SPEC_VERSION)
        if version != SPEC_VERSION:
            raise ConfigError(f"unsupported spec version {version!r}")
        if "seed" not in doc or not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
            raise ConfigError("spec needs an integer 'seed'")
        for key in ("input", "pattern", "sensitivities", "method", "outputs"):
            if key not in doc:
                raise ConfigError(f"spec is missing '{key}'")
        method = doc["method"]
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
        base = Path(base_dir)
        training = doc.get("training")
        if method == "wiener" and training is None:
            raise ConfigError("method 'wiener' needs a 'training' section")
        return cls(
            seed=doc["seed"],
            input=dict(doc["input"]),
            pattern=dict(doc["pattern"]),
            sensitivities=dict(doc["sensitivities"]),
            method=method,
            outputs=base / doc["outputs"],
            base_dir=base,
            noise_sigma=float(doc.get("noise", {}).get("sigma", 0.0)),
            quantize_8bit=bool(doc.get("quantize_8bit", False)),
            params=dict(doc.get("params", {})),
            training=dict(training) if training is not None else None,
        )

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"spec file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc, path.parent)

    def path(self, rel) -> Path:
        return self.base_dir / rel

    def referenced_files(self) -> list[Path]:
        files = []
        if "cube" in self.input:
            files.append(self.path(self.input["cube"]))
        if "file" in self.pattern:
            files.append(self.path(self.pattern["file"]))
        if "file" in self.sensitivities:
            files.append(self.path(self.sensitivities["file"]))
        if self.training and "cubes" in self.training:
            files += [self.path(p) for p in self.training["cubes"]]
        return files


@dataclass
class ExperimentReport:
    metrics: dict
    outputs: Path
    files: list[str]


def _grid_from(section: dict) -> SpectralGrid:
    if "grid" in section:
        start, step, count = section["grid"]
        return SpectralGrid(float(start), float(step), int(count))
    return default_grid()


def load_input(spec: ExperimentSpec) -> tuple[MultispectralImage, np.ndarray | None]:
    """The reference cube and, for chart inputs, its patch-index map."""
    src = spec.input
    if "cube" in src:
        return read_cube(spec.path(src["cube"])), None
    if "synth" in src:
        p = src["synth"]
        cube = synth_cube(
            int(p.get("height", 32)), int(p.get("width", 32)), _grid_from(p),
            int(p.get("basis_dim", 4)), float(p.get("smoothness", 3.0)), spec.seed,
        )
        return cube, None
    if "chart" in src:
        p = src["chart"]
        return synth_chart(_grid_from(p), int(p.get("patch_size", 8)), 4, 6, spec.seed)
    raise ConfigError("input must name a 'cube', 'synth' or 'chart' source")


def resolve_pattern(section: dict, grid: SpectralGrid, base_dir: Path = Path(".")):
    """``(pattern, preset_description_or_None)``."""
    if "preset" in section:
        return preset_pattern(section["preset"], grid)
    if "file" in section:
        return read_pattern(base_dir / section["file"]), None
    if "cells" in section:
        cells = section["cells"]
        k = int(section.get("num_filters", int(np.max(cells)) + 1))
        return FilterArrayPattern(cells, k), None
    raise ConfigError("pattern must give a 'preset', 'file' or 'cells'")


def resolve_sensitivities(
    section: dict, pattern: FilterArrayPattern, preset, grid: SpectralGrid, seed: int, base_dir: Path = Path(".")
) -> SensitivityMatrix:
    if section.get("preset"):
        if not isinstance(preset, SensitivityMatrix):
            raise ConfigError("pattern has no preset sensitivity curves")
        return preset
    if "file" in section:
        return read_sensitivity(base_dir / section["file"])
    if "delta" in section:
        bands = section["delta"]
        if bands is True:
            bands = list(range(pattern.num_filters))
        return SensitivityMatrix.delta(grid, bands)
    if section.get("random"):
        return random_init_sensitivity(pattern.num_filters, grid, seed)
    raise ConfigError("sensitivities must give 'preset', 'file', 'delta' or 'random'")


def quantize_8bit(y: MosaickedImage) -> MosaickedImage:
    return MosaickedImage(np.round(np.clip(y.data, 0.0, 1.0) * 255.0) / 255.0)


def _training_set(spec: ExperimentSpec, cube: MultispectralImage) -> list[MultispectralImage]:
    t = spec.training or {}
    if t.get("self"):
        return [cube]
    if "cubes" in t:
        return [read_cube(spec.path(p)) for p in t["cubes"]]
    if "synth" in t:
        p = t["synth"]
        n = int(p.get("count", 10))
        return [
            synth_cube(cube.height, cube.width, cube.grid, int(p.get("basis_dim", 4)),
                       float(p.get("smoothness", 3.0)), spec.seed + 1 + i)
            for i in range(n)
        ]
    raise ConfigError("training must give 'self', 'cubes' or 'synth'")


def recover(
    method: str,
    y: MosaickedImage,
    pattern: FilterArrayPattern,
    sens: SensitivityMatrix,
    params: dict,
    training=None,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> MultispectralImage:
    if method in ("bilinear", "ibd", "ppi"):
        try:
            sampling = BandSampling.from_sensitivities(pattern, sens)
        except ConfigError as exc:
            raise ConfigError(
                f"{method} interpolates each band from the filters peaking in it: {exc}; "
                "use vtv or wiener for broadband filters"
            ) from None
        if method == "bilinear":
            return demosaic_bilinear(y, sampling)
        if method == "ibd":
            return demosaic_interband(y, sampling, float(params.get("smoothing_sigma", 1.0)))
        radius = params.get("kernel_radius")
        return demosaic_ppi(y, sampling, None if radius is None else int(radius))
    if method == "vtv":
        cfg = VtvConfig(lam=float(params.get("lam", 0.01)), max_iters=int(params.get("max_iters", 500)))
        return demosaic_vtv(y, pattern, sens, cfg).image
    if method == "wiener":
        model = wiener_train(
            training, pattern, sens, noise_sigma,
            int(params.get("window_tiles", 3)), float(params.get("ridge", 1e-6)), seed,
        )
        return wiener_apply(model, y)
    raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")


def _csv(rows) -> bytes:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode()


def _patch_spectra(ref: MultispectralImage, est: MultispectralImage, index: np.ndarray | None) -> bytes:
    if index is None:
        index = np.zeros(ref.shape[:2], dtype=np.int64)
    rows = [("patch", "wavelength_nm", "reference", "recovered")]
    wl = ref.grid.wavelengths
    for patch in range(int(index.max()) + 1):
        sel = index == patch
        r = ref.data[sel].mean(axis=0)
        e = est.data[sel].mean(axis=0)
        rows += [(patch, repr(float(w)), repr(float(a)), repr(float(b))) for w, a, b in zip(wl, r, e)]
    return _csv(rows)


def _mosaic_png(y: MosaickedImage) -> bytes:
    return png_bytes(np.round(np.clip(y.data, 0.0, 1.0) * 255.0).astype(np.uint8))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (SnapMsiError, ValueError, ArithmeticError, OSError) as exc:
        raise StageError(name, exc) from exc


def _check_files(spec: ExperimentSpec) -> None:
    for path in spec.referenced_files():
        if not path.is_file():
            raise ConfigError(f"missing input file: {path}")


def _evaluate(ref: MultispectralImage, est: MultispectralImage, method: str) -> dict:
    return {
        "method": method,
        "psnr_db": psnr(ref, est),
        "rmse": rmse(ref, est),
        "sam_rad": spectral_angle(ref, est),
    }


def _publish(files: dict[str, bytes], target: Path) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(dir=target.parent, prefix=f".{target.name}.", suffix=".staging"))
    try:
        for name, data in files.items():
            (staging / name).write_bytes(data)
        if not target.exists():
            os.replace(staging, target)
            return
        for name in files:
            os.replace(staging / name, target / name)
    finally:
        if staging.exists():
            shutil.rmtree(staging)


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Run one experiment; a failing stage raises :class:`StageError` naming it."""
    _stage("load", _check_files, spec)
    cube, index = _stage("load", load_input, spec)
    pattern, preset = _stage("load", resolve_pattern, spec.pattern, cube.grid, spec.base_dir)
    sens = _stage(
        "load", resolve_sensitivities, spec.sensitivities, pattern, preset, cube.grid, spec.seed, spec.base_dir
    )
    training = _stage("load", _training_set, spec, cube) if spec.method == "wiener" else None

    y = _stage("mosaic", mosaic_apply, cube, pattern, sens, NoiseSpec(spec.noise_sigma, spec.seed))
    if spec.quantize_8bit:
        y = quantize_8bit(y)
    est = _stage(
        "recover", recover, spec.method, y, pattern, sens, spec.params, training, spec.noise_sigma, spec.seed
    )
    metrics = _stage("evaluate", _evaluate, cube, est, spec.method)

    files = {
        "metrics.csv": _csv([METRIC_COLUMNS, [metrics["method"]] + [repr(float(metrics[c])) for c in METRIC_COLUMNS[1:]]]),
        "spectra.csv": _stage("evaluate", _patch_spectra, cube, est, index),
        "recovered.msic": cube_to_bytes(est),
        "mosaic.png": _stage("render", _mosaic_png, y),
        "reference.png": _stage("render", lambda: png_bytes(render_cube(cube))),
        "recovered.png": _stage("render", lambda: png_bytes(render_cube(est))),
    }
    _stage("write", _publish, files, spec.outputs)
    return ExperimentReport(metrics, spec.outputs, sorted(files))
