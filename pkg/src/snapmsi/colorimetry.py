"""Spectral-to-sRGB rendering under a tabulated illuminant.

Bundled tables: CIE 1931 2-degree colour-matching functions and CIE D65,
both at 10 nm over 420-720 nm. Other grids get linearly resampled copies with
edge clamping.

The XYZ -> linear sRGB matrix is derived from the sRGB primaries and the white
point integrated from the bundled tables rather than the nominal D65
chromaticity. The tables stop at 420 nm, which shifts the integrated white
slightly; normalizing to it keeps the perfect reflector exactly neutral.
Resampled or user-supplied tables get a matrix adapted to their own white.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .core import MultispectralImage, SensitivityMatrix, SpectralGrid, require_same_grid
from .errors import DimensionError, FormatError

SRGB_PRIMARIES_XY = ((0.64, 0.33), (0.30, 0.60), (0.15, 0.06))
D65_NOMINAL_XY = (0.3127, 0.3290)


@dataclass(frozen=True)
class IlluminantTable:
    grid: SpectralGrid
    values: np.ndarray

    def resampled(self, grid: SpectralGrid) -> "IlluminantTable":
        if grid.matches(self.grid):
            return self
        return IlluminantTable(grid, np.interp(grid.wavelengths, self.grid.wavelengths, self.values))


@dataclass(frozen=True)
class CmfTable:
    grid: SpectralGrid
    values: np.ndarray  # L x 3 (xbar, ybar, zbar)

    def resampled(self, grid: SpectralGrid) -> "CmfTable":
        if grid.matches(self.grid):
            return self
        wl, src = grid.wavelengths, self.grid.wavelengths
        cols = [np.interp(wl, src, self.values[:, j]) for j in range(3)]
        return CmfTable(grid, np.stack(cols, axis=1))


def _read_table(name: str) -> tuple[SpectralGrid, np.ndarray]:
    text = resources.files("snapmsi.data").joinpath(name).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    wl = body[:, 0]
    steps = np.diff(wl)
    if not np.allclose(steps, steps[0]):
        raise FormatError(f"{name}: wavelengths are not uniformly spaced")
    return SpectralGrid(wl[0], steps[0], len(wl)), body[:, 1:]


@lru_cache(maxsize=None)
def d65() -> IlluminantTable:
    grid, v = _read_table("cie_d65_420_720_10nm.csv")
    v = v[:, 0]
    v.setflags(write=False)
    return IlluminantTable(grid, v)


@lru_cache(maxsize=None)
def cie1931() -> CmfTable:
    grid, v = _read_table("cie1931_2deg_420_720_10nm.csv")
    v.setflags(write=False)
    return CmfTable(grid, v)


def _tables(grid: SpectralGrid | None, illuminant, cmf):
    illuminant = illuminant or d65()
    cmf = cmf or cie1931()
    if grid is not None:
        illuminant, cmf = illuminant.resampled(grid), cmf.resampled(grid)
    return illuminant, cmf


def spectrum_to_xyz(reflectance, illuminant: IlluminantTable | None = None, cmf: CmfTable | None = None) -> np.ndarray:
    """Tristimulus values normalized so the perfect reflector has ``Y = 1``.

    ``reflectance`` has bands on its last axis; the result replaces that axis
    with (X, Y, Z).
    """
    illuminant, cmf = _tables(None, illuminant, cmf)
    require_same_grid(illuminant.grid, cmf.grid, "illuminant and CMF grids")
    r = np.asarray(reflectance, dtype=np.float64)
    if r.shape[-1] != illuminant.grid.count:
        raise DimensionError(
            f"reflectance has {r.shape[-1]} bands, tables have {illuminant.grid.count}"
        )
    weights = illuminant.values[:, None] * cmf.values
    norm = np.dot(illuminant.values, cmf.values[:, 1])
    return (r @ weights) / norm


def white_point(illuminant: IlluminantTable | None = None, cmf: CmfTable | None = None) -> np.ndarray:
    illuminant, cmf = _tables(None, illuminant, cmf)
    return spectrum_to_xyz(np.ones(illuminant.grid.count), illuminant, cmf)


def rgb_to_xyz_matrix(white_xyz, primaries_xy=SRGB_PRIMARIES_XY) -> np.ndarray:
    """Linear RGB -> XYZ for the given primaries, scaled so RGB (1,1,1) maps to ``white_xyz``."""
    P = np.array([[x / y, 1.0, (1.0 - x - y) / y] for x, y in primaries_xy]).T
    scale = np.linalg.solve(P, np.asarray(white_xyz, dtype=np.float64))
    return P * scale[None, :]


def standard_xyz_to_srgb_matrix() -> np.ndarray:
    x, y = D65_NOMINAL_XY
    return np.linalg.inv(rgb_to_xyz_matrix([x / y, 1.0, (1.0 - x - y) / y]))


def adapted_xyz_to_srgb_matrix(illuminant: IlluminantTable | None = None, cmf: CmfTable | None = None) -> np.ndarray:
    """XYZ -> linear sRGB with the white of the given tables mapped to (1, 1, 1)."""
    return np.linalg.inv(rgb_to_xyz_matrix(white_point(illuminant, cmf)))


@lru_cache(maxsize=None)
def _bundled_matrix() -> np.ndarray:
    m = adapted_xyz_to_srgb_matrix()
    m.setflags(write=False)
    return m


def srgb_encode(v):
    """sRGB transfer curve (linear -> encoded)."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * np.power(np.maximum(v, 0.0031308), 1 / 2.4) - 0.055)


def srgb_decode(v):
    """Inverse of :func:`srgb_encode`."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, np.power((np.maximum(v, 0.04045) + 0.055) / 1.055, 2.4))


def xyz_to_srgb(xyz, matrix: np.ndarray | None = None) -> np.ndarray:
    """Gamma-encoded sRGB in [0, 1]; out-of-gamut channels are clipped independently."""
    m = _bundled_matrix() if matrix is None else np.asarray(matrix, dtype=np.float64)
    lin = np.asarray(xyz, dtype=np.float64) @ m.T
    return np.clip(srgb_encode(np.clip(lin, 0.0, 1.0)), 0.0, 1.0)


def to_8bit(rgb: np.ndarray) -> np.ndarray:
    return np.round(255.0 * rgb).astype(np.uint8)


def render_spectra(spectra, grid: SpectralGrid, illuminant=None, cmf=None) -> np.ndarray:
    illuminant, cmf = _tables(grid, illuminant, cmf)
    native = illuminant is d65() and cmf is cie1931()
    matrix = None if native else adapted_xyz_to_srgb_matrix(illuminant, cmf)
    return to_8bit(xyz_to_srgb(spectrum_to_xyz(spectra, illuminant, cmf), matrix))


def render_cube(x: MultispectralImage, illuminant=None, cmf=None) -> np.ndarray:
    """``(H, W, 3)`` uint8 raster of the cube seen as reflectance."""
    return render_spectra(x.data, x.grid, illuminant, cmf)


def render_filter_swatches(sens: SensitivityMatrix, illuminant=None, cmf=None) -> np.ndarray:
    """``(K, 3)`` uint8 colour per filter, treating each curve as a reflectance."""
    return render_spectra(sens.values, sens.grid, illuminant, cmf)
