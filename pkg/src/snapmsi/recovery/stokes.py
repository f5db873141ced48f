"""Stokes-cube recovery for spectral-polarization filter arrays.

Two linear estimators, followed by projection onto the physical cone
``s1^2 + s2^2 <= s0^2, s0 >= 0``:

``ridge``
    The Stokes state is taken as constant over each tile and each spectral
    component is expanded on a smooth ``B``-dimensional basis, giving
    ``3B`` unknowns against ``tile_h * tile_w`` measurements. Every tile
    shares one system matrix, so a single regularized pseudo-inverse serves
    the whole image.
``trained-wiener``
    The per-phase Wiener machinery with ``3L`` outputs per pixel, trained on
    Stokes cubes.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import (
    FilterArrayPattern,
    MosaickedImage,
    MultispectralImage,
    PolarizedFilterBank,
    StokesCube,
    raised_cosine_basis,
    require_same_grid,
)
from ..errors import ConfigError, DimensionError, NumericalError
from ..forward import NoiseSpec, polarized_coefficients, polarized_mosaic
from .wiener import WienerModel, apply_wiener_array, fit_wiener

METHODS = ("ridge", "trained-wiener")


def project_to_cone(s0: np.ndarray, s1: np.ndarray, s2: np.ndarray):
    """Clamp ``s0`` at zero and scale ``(s1, s2)`` radially down to DOP <= 1."""
    s0 = np.maximum(s0, 0.0)
    r = np.hypot(s1, s2)
    over = r > s0
    scale = np.where(over, s0 / np.where(over, r, 1.0), 1.0)
    return s0, s1 * scale, s2 * scale


def tile_system_matrix(bank: PolarizedFilterBank, pattern: FilterArrayPattern, basis: np.ndarray) -> np.ndarray:
    """``(tile area) x 3B`` map from basis coefficients to the tile's measurements.

    Columns are ordered (stokes component, basis function).
    """
    coef = polarized_coefficients(bank)  # K x L x 3
    per_filter = np.einsum("kij,bi->kjb", coef, basis)  # K x 3 x B
    return per_filter[pattern.cells.ravel()].reshape(pattern.area, -1)


def tile_blocks(y: np.ndarray, pattern: FilterArrayPattern) -> np.ndarray:
    """``(tiles_r, tiles_c, tile area)`` view of the mosaic, cells row-major."""
    th, tw = pattern.tile_shape
    H, W = y.shape
    if H % th or W % tw:
        raise DimensionError(f"image {H}x{W} is not a multiple of the {th}x{tw} tile")
    return y.reshape(H // th, th, W // tw, tw).transpose(0, 2, 1, 3).reshape(H // th, W // tw, th * tw)


def _ridge_stokes(y: np.ndarray, bank, pattern, basis_dim: int, ridge: float) -> np.ndarray:
    basis = raised_cosine_basis(bank.grid, basis_dim)
    M = tile_system_matrix(bank, pattern, basis)
    n = M.shape[1]
    if ridge < 0:
        raise ConfigError("ridge must be >= 0")
    G = M.T @ M + ridge * np.eye(n)
    if ridge == 0 and np.linalg.matrix_rank(G) < n:
        raise NumericalError(
            f"singular tile system ({M.shape[0]} measurements, {n} unknowns) with ridge 0"
        )
    try:
        pinv = np.linalg.solve(G, M.T)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular tile system: {exc}") from exc
    blocks = tile_blocks(y, pattern)
    coeffs = blocks @ pinv.T  # tiles_r x tiles_c x 3B
    coeffs = coeffs.reshape(coeffs.shape[:2] + (3, basis_dim))
    spectra = np.einsum("abjk,ki->abij", coeffs, basis)  # tiles x L x 3
    th, tw = pattern.tile_shape
    return np.repeat(np.repeat(spectra, th, axis=0), tw, axis=1)


def train_stokes_wiener(
    training: Sequence[StokesCube],
    bank: PolarizedFilterBank,
    pattern: FilterArrayPattern,
    noise_sigma: float = 0.0,
    window_tiles: int = 3,
    ridge: float = 1e-6,
    seed: int = 0,
) -> WienerModel:
    training = list(training)
    if not training:
        raise ConfigError("trained-wiener recovery needs a training set of Stokes cubes")
    for s in training:
        require_same_grid(s.grid, bank.grid, "training and bank grids")
    noise = NoiseSpec(noise_sigma, seed)
    mosaics = [polarized_mosaic(s, bank, pattern, noise, stream=i).data for i, s in enumerate(training)]
    targets = [s.stacked().reshape(s.height, s.width, -1) for s in training]
    return fit_wiener(mosaics, targets, pattern, bank.grid, window_tiles, ridge, components=3, seed=seed)


def recover_stokes(
    y: MosaickedImage,
    bank: PolarizedFilterBank,
    pattern: FilterArrayPattern,
    method: str = "ridge",
    *,
    basis_dim: int = 4,
    ridge: float = 1e-8,
    training: Sequence[StokesCube] | None = None,
    model: WienerModel | None = None,
    window_tiles: int = 3,
    noise_sigma: float = 0.0,
    seed: int = 0,
    project: bool = True,
) -> StokesCube:
    """Linear Stokes recovery; ``project=False`` skips the cone projection."""
    if bank.num_filters != pattern.num_filters:
        raise DimensionError("bank and pattern filter counts differ")
    if method == "ridge":
        est = _ridge_stokes(y.data, bank, pattern, basis_dim, ridge)
    elif method == "trained-wiener":
        if model is None:
            model = train_stokes_wiener(
                training or [], bank, pattern, noise_sigma, window_tiles, ridge, seed
            )
        if model.components != 3:
            raise ConfigError("trained-wiener recovery needs a 3-component (Stokes) model")
        est = apply_wiener_array(model, y.data).reshape(y.height, y.width, -1, 3)
    else:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    s0, s1, s2 = est[..., 0], est[..., 1], est[..., 2]
    if project:
        s0, s1, s2 = project_to_cone(s0, s1, s2)
    return StokesCube(s0, s1, s2, bank.grid)


def recover_spectrum_nonpolarized(
    y: MosaickedImage,
    bank: PolarizedFilterBank,
    pattern: FilterArrayPattern,
    method: str = "ridge",
    **params,
) -> MultispectralImage:
    """The intensity (S0) component of :func:`recover_stokes`."""
    return recover_stokes(y, bank, pattern, method, **params).intensity()
