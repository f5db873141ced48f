"""Seeded synthetic scenes: smooth low-rank cubes, polarized cubes and a patch chart."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import MultispectralImage, SpectralGrid, StokesCube, default_grid, raised_cosine_basis
from .errors import ConfigError


def _coefficient_maps(rng: np.random.Generator, dim: int, height: int, width: int, smoothness: float) -> np.ndarray:
    maps = rng.standard_normal((dim, height, width))
    if smoothness > 0:
        maps = np.stack([gaussian_filter(m, smoothness, mode="wrap") for m in maps])
    lo = maps.min(axis=(1, 2), keepdims=True)
    hi = maps.max(axis=(1, 2), keepdims=True)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.where(hi > lo, (maps - lo) / span, 1.0)


def synth_cube(
    height: int,
    width: int,
    grid: SpectralGrid | None = None,
    basis_dim: int = 4,
    smoothness: float = 3.0,
    seed: int = 0,
) -> MultispectralImage:
    """Nonnegative combinations of ``basis_dim`` raised-cosine spectra.

    Coefficient maps are low-pass filtered Gaussian noise (periodic, standard
    deviation ``smoothness`` pixels) rescaled to [0, 1]; the cube is then
    divided by its maximum.
    """
    grid = grid or default_grid()
    if not 1 <= basis_dim <= grid.count:
        raise ConfigError(f"basis_dim must be in [1, {grid.count}], got {basis_dim}")
    rng = np.random.default_rng(seed)
    basis = raised_cosine_basis(grid, basis_dim)
    coeffs = _coefficient_maps(rng, basis_dim, height, width, smoothness)
    cube = np.einsum("bhw,bl->hwl", coeffs, basis)
    peak = cube.max()
    if peak > 0:
        cube = cube / peak
    return MultispectralImage(cube, grid)


def synth_stokes(
    height: int,
    width: int,
    grid: SpectralGrid | None = None,
    basis_dim: int = 4,
    smoothness: float = 3.0,
    dop=0.5,
    aolp=0.0,
    seed: int = 0,
) -> StokesCube:
    """Stokes cube with intensity from :func:`synth_cube`.

    ``dop`` (degree of linear polarization, in [0, 1]) and ``aolp`` (angle of
    linear polarization, radians) are scalars or arrays broadcastable to
    ``(H, W)`` or ``(H, W, L)``.
    """
    dop = np.asarray(dop, dtype=np.float64)
    aolp = np.asarray(aolp, dtype=np.float64)
    if np.any(dop < 0) or np.any(dop > 1):
        raise ConfigError("dop must lie in [0, 1]")
    s0 = synth_cube(height, width, grid, basis_dim, smoothness, seed)
    if dop.ndim == 2:
        dop = dop[:, :, None]
    if aolp.ndim == 2:
        aolp = aolp[:, :, None]
    s1 = dop * s0.data * np.cos(2.0 * aolp)
    s2 = dop * s0.data * np.sin(2.0 * aolp)
    s1, s2 = np.broadcast_to(s1, s0.data.shape), np.broadcast_to(s2, s0.data.shape)
    return StokesCube(s0.data, s1, s2, s0.grid)


def chart_spectra(grid: SpectralGrid | None = None, patches: int = 24, seed: int = 0) -> np.ndarray:
    """``patches x L`` distinct smooth reflectances in [0.05, 0.95]."""
    grid = grid or default_grid()
    rng = np.random.default_rng(seed)
    basis = raised_cosine_basis(grid, min(6, grid.count))
    w = rng.uniform(0.0, 1.0, size=(patches, basis.shape[0])) ** 2
    spectra = w @ basis
    lo = spectra.min(axis=1, keepdims=True)
    hi = spectra.max(axis=1, keepdims=True)
    gain = rng.uniform(0.3, 0.9, size=(patches, 1))
    norm = (spectra - lo) / np.where(hi > lo, hi - lo, 1.0)
    return 0.05 + gain * norm


def synth_chart(
    grid: SpectralGrid | None = None,
    patch_size: int = 8,
    rows: int = 4,
    cols: int = 6,
    seed: int = 0,
) -> tuple[MultispectralImage, np.ndarray]:
    """A ``rows x cols`` patch chart and its ``(H, W)`` patch-index map."""
    grid = grid or default_grid()
    spectra = chart_spectra(grid, rows * cols, seed)
    index = np.arange(rows * cols).reshape(rows, cols)
    index = np.repeat(np.repeat(index, patch_size, axis=0), patch_size, axis=1)
    return MultispectralImage(spectra[index], grid), index
