"""Linear capture operators for spectral and spectral-polarization filter arrays.

``mosaic_apply`` integrates each pixel's spectrum against the sensitivity of
the filter sitting on it. ``polarized_mosaic`` does the same for a bank of
linear diattenuators (TE/TM transmittances with an analyzer orientation),
acting on the (S0, S1, S2) Stokes components. Both have explicit dense
system matrices for testing and small direct solves.

Vectorization convention for the dense matrices: the unknown vector is
``x.ravel()`` of the ``(H, W, L)`` cube (pixel-major, band fastest), and for the
polarized case ``stacked.ravel()`` of the ``(H, W, L, 3)`` Stokes array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FilterArrayPattern,
    MosaickedImage,
    MultispectralImage,
    PolarizedFilterBank,
    SensitivityMatrix,
    StokesCube,
    require_same_grid,
)
from .errors import ConfigError, DimensionError

MAX_DENSE_ENTRIES = 10**6

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise; ``sigma == 0`` disables it."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError(f"noise sigma must be >= 0, got {self.sigma}")


NO_NOISE = NoiseSpec(0.0, 0)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _uniform(key: np.ndarray) -> np.ndarray:
    # top 53 bits -> (0, 1]; never exactly 0 so log() is safe
    return ((_splitmix64(key) >> np.uint64(11)).astype(np.float64) + 1.0) / 2.0**53


def counter_normal(seed: int, height: int, width: int, stream: int = 0) -> np.ndarray:
    """Standard normals keyed by ``(seed, stream, row, col)``.

    Each value depends only on its key, never on traversal order or image
    size, so any sub-window of a larger draw matches a direct draw of the
    window's coordinates.
    """
    with np.errstate(over="ignore"):
        base = _splitmix64(np.array([seed], dtype=np.uint64) & _MASK64)
        base = _splitmix64(base ^ np.uint64(stream & 0xFFFFFFFFFFFFFFFF))
        r = np.arange(height, dtype=np.uint64)[:, None]
        c = np.arange(width, dtype=np.uint64)[None, :]
        key = _splitmix64(base ^ (r << np.uint64(32)) ^ c)
        u1 = _uniform(key)
        u2 = _uniform(key ^ np.uint64(0xD1B54A32D192ED03))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _noise(noise: NoiseSpec | None, shape: tuple[int, int], stream: int = 0) -> np.ndarray | None:
    if noise is None or noise.sigma == 0:
        return None
    return noise.sigma * counter_normal(noise.seed, shape[0], shape[1], stream)


def _check_spectral(pattern: FilterArrayPattern, sens: SensitivityMatrix) -> None:
    if sens.num_filters != pattern.num_filters:
        raise DimensionError(
            f"pattern expects {pattern.num_filters} filters, sensitivities have {sens.num_filters}"
        )


def pixel_sensitivities(pattern: FilterArrayPattern, sens: SensitivityMatrix, height: int, width: int) -> np.ndarray:
    """``(H, W, L)`` array holding each pixel's filter curve."""
    _check_spectral(pattern, sens)
    return sens.values[pattern.index_map(height, width)]


def mosaic_apply(
    x: MultispectralImage,
    pattern: FilterArrayPattern,
    sens: SensitivityMatrix,
    noise: NoiseSpec | None = None,
    stream: int = 0,
) -> MosaickedImage:
    _check_spectral(pattern, sens)
    require_same_grid(x.grid, sens.grid, "cube and sensitivity grids")
    weights = pixel_sensitivities(pattern, sens, x.height, x.width)
    y = np.einsum("rci,rci->rc", weights, x.data)
    n = _noise(noise, y.shape, stream)
    if n is not None:
        y = y + n
    return MosaickedImage(y)


def mosaic_adjoint(y: MosaickedImage, pattern: FilterArrayPattern, sens: SensitivityMatrix) -> MultispectralImage:
    weights = pixel_sensitivities(pattern, sens, y.height, y.width)
    return MultispectralImage(weights * y.data[:, :, None], sens.grid)


def _guard(rows: int, cols: int) -> None:
    if rows * cols > MAX_DENSE_ENTRIES:
        raise ConfigError(
            f"dense system matrix would have {rows * cols} entries (limit {MAX_DENSE_ENTRIES})"
        )


def build_system_matrix(pattern: FilterArrayPattern, sens: SensitivityMatrix, height: int, width: int) -> np.ndarray:
    """Dense ``(H*W) x (H*W*L)`` matrix equal to noiseless ``mosaic_apply``."""
    L = sens.grid.count
    n = height * width
    _guard(n, n * L)
    weights = pixel_sensitivities(pattern, sens, height, width).reshape(n, L)
    A = np.zeros((n, n * L))
    for p in range(n):
        A[p, p * L:(p + 1) * L] = weights[p]
    return A


def _orientation_terms(bank: PolarizedFilterBank) -> tuple[np.ndarray, np.ndarray]:
    two_theta = np.deg2rad(2.0 * bank.orientation_deg)
    return np.cos(two_theta), np.sin(two_theta)


def _check_polarized(pattern: FilterArrayPattern, bank: PolarizedFilterBank) -> None:
    if bank.num_filters != pattern.num_filters:
        raise DimensionError(
            f"pattern expects {pattern.num_filters} filters, bank has {bank.num_filters}"
        )


def polarized_coefficients(bank: PolarizedFilterBank) -> np.ndarray:
    """``K x L x 3`` weights on (S0, S1, S2) for each filter and band."""
    c2, s2 = _orientation_terms(bank)
    a = bank.intensity_gain()
    d = bank.diattenuation_gain()
    return np.stack([a, d * c2[:, None], d * s2[:, None]], axis=-1)


def polarized_mosaic(
    s: StokesCube,
    bank: PolarizedFilterBank,
    pattern: FilterArrayPattern,
    noise: NoiseSpec | None = None,
    stream: int = 0,
) -> MosaickedImage:
    """Linear-diattenuator response of each pixel to the incident Stokes cube.

    Restricted to (S0, S1, S2): four linear analyzers cannot sense circular
    polarization.
    """
    _check_polarized(pattern, bank)
    require_same_grid(s.grid, bank.grid, "stokes and bank grids")
    coef = polarized_coefficients(bank)[pattern.index_map(s.height, s.width)]
    y = np.einsum("rcij,rcij->rc", coef, s.stacked())
    n = _noise(noise, y.shape, stream)
    if n is not None:
        y = y + n
    return MosaickedImage(y)


def polarized_adjoint(y: MosaickedImage, bank: PolarizedFilterBank, pattern: FilterArrayPattern) -> StokesCube:
    _check_polarized(pattern, bank)
    coef = polarized_coefficients(bank)[pattern.index_map(y.height, y.width)]
    return StokesCube.from_stacked(coef * y.data[:, :, None, None], bank.grid)


def polarized_system_matrix(bank: PolarizedFilterBank, pattern: FilterArrayPattern, height: int, width: int) -> np.ndarray:
    """Dense ``(H*W) x (H*W*3L)`` matrix; unknowns ordered (pixel, band, stokes)."""
    _check_polarized(pattern, bank)
    m = 3 * bank.grid.count
    n = height * width
    _guard(n, n * m)
    coef = polarized_coefficients(bank)[pattern.index_map(height, width)].reshape(n, m)
    A = np.zeros((n, n * m))
    for p in range(n):
        A[p, p * m:(p + 1) * m] = coef[p]
    return A
