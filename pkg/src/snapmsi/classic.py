"""Training-free demosaickers: per-band bilinear, inter-band difference smoothing,
and pseudo-panchromatic guidance.

These treat each filter as a sample of one "native" band (the classic
narrowband-MSFA regime). All boundaries are periodic and every method writes
the measured value back at each sampled (pixel, band) site, so samples are
reproduced bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FilterArrayPattern,
    MosaickedImage,
    MultispectralImage,
    SensitivityMatrix,
    SpectralGrid,
    default_grid,
)
from .errors import ConfigError, DimensionError
from .periodic import box_kernel, conv2_separable, gaussian_kernel, triangle_kernel


@dataclass(frozen=True)
class BandSampling:
    """Which filter samples which band.

    ``band_of_filter[k]`` is the native band of filter ``k``; several filters
    may share a band.
    """

    pattern: FilterArrayPattern
    band_of_filter: tuple
    grid: SpectralGrid

    def __post_init__(self):
        bands = tuple(int(b) for b in self.band_of_filter)
        if len(bands) != self.pattern.num_filters:
            raise DimensionError(
                f"need one band per filter ({self.pattern.num_filters}), got {len(bands)}"
            )
        if any(b < 0 or b >= self.grid.count for b in bands):
            raise DimensionError(f"band index out of range for {self.grid.count} bands")
        object.__setattr__(self, "band_of_filter", bands)
        counts = self.cell_counts()
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            raise ConfigError(f"band(s) {empty.tolist()} have no sampled cells")

    @classmethod
    def identity(cls, pattern: FilterArrayPattern, grid: SpectralGrid | None = None) -> "BandSampling":
        """Filter ``k`` samples band ``k``; needs ``K == L``."""
        grid = grid or SpectralGrid(default_grid().start_nm, default_grid().step_nm, pattern.num_filters)
        return cls(pattern, tuple(range(pattern.num_filters)), grid)

    @classmethod
    def from_sensitivities(cls, pattern: FilterArrayPattern, sens: SensitivityMatrix) -> "BandSampling":
        """Native band = peak of each filter curve (lowest band on ties)."""
        if sens.num_filters != pattern.num_filters:
            raise DimensionError("pattern and sensitivity filter counts differ")
        return cls(pattern, tuple(np.argmax(sens.values, axis=1).tolist()), sens.grid)

    @property
    def num_bands(self) -> int:
        return self.grid.count

    def cell_counts(self) -> np.ndarray:
        """Number of tile cells assigned to each band."""
        per_filter = self.pattern.counts()
        out = np.zeros(self.grid.count, dtype=np.int64)
        np.add.at(out, np.asarray(self.band_of_filter), per_filter)
        return out

    def reference_band(self) -> int:
        """Densest-sampled band, lowest index on ties."""
        return int(np.argmax(self.cell_counts()))

    def masks(self, height: int, width: int) -> np.ndarray:
        """Boolean ``(H, W, L)`` array, true where the pixel samples that band."""
        bands = np.asarray(self.band_of_filter)[self.pattern.index_map(height, width)]
        return bands[:, :, None] == np.arange(self.grid.count)[None, None, :]


def _normalized_conv(values: np.ndarray, mask: np.ndarray, krow, kcol) -> np.ndarray:
    num = conv2_separable(values * mask, krow, kcol)
    den = conv2_separable(mask.astype(np.float64), krow, kcol)
    if np.any(den <= 0):
        raise ConfigError("interpolation kernel does not reach a sample from every pixel")
    return num / den


def _interp_kernels(sampling: BandSampling):
    th, tw = sampling.pattern.tile_shape
    return triangle_kernel(th), triangle_kernel(tw)


def _restore_samples(out: np.ndarray, y: np.ndarray, masks: np.ndarray) -> np.ndarray:
    return np.where(masks, y[:, :, None], out)


def _bilinear_planes(y: np.ndarray, masks: np.ndarray, sampling: BandSampling) -> np.ndarray:
    krow, kcol = _interp_kernels(sampling)
    yy = np.broadcast_to(y[:, :, None], masks.shape)
    return _restore_samples(_normalized_conv(yy, masks, krow, kcol), y, masks)


def demosaic_bilinear(y: MosaickedImage, sampling: BandSampling) -> MultispectralImage:
    """Normalized convolution of each band's samples with a separable triangle kernel.

    The kernel's half-width equals the tile period along each axis, which is
    exact bilinear interpolation on a rectangular sampling lattice.
    """
    masks = sampling.masks(y.height, y.width)
    return MultispectralImage(_bilinear_planes(y.data, masks, sampling), sampling.grid)


def demosaic_interband(y: MosaickedImage, sampling: BandSampling, smoothing_sigma: float = 1.0) -> MultispectralImage:
    """Bilinear start, then Gaussian-smoothed differences against the densest band."""
    if smoothing_sigma < 0:
        raise ConfigError("smoothing_sigma must be >= 0")
    masks = sampling.masks(y.height, y.width)
    base = _bilinear_planes(y.data, masks, sampling)
    ref = sampling.reference_band()
    g = gaussian_kernel(smoothing_sigma)
    diff = conv2_separable(base - base[:, :, ref:ref + 1], g, g)
    out = base[:, :, ref:ref + 1] + diff
    out[:, :, ref] = base[:, :, ref]
    return MultispectralImage(_restore_samples(out, y.data, masks), sampling.grid)


def demosaic_ppi(y: MosaickedImage, sampling: BandSampling, kernel_radius=None) -> MultispectralImage:
    """Interpolate per-band differences to a box-filtered pseudo-panchromatic image.

    ``kernel_radius`` is an int or a ``(rows, cols)`` pair and defaults to the
    tile period along each axis, which makes the pseudo-panchromatic image of
    a spatially constant scene exactly flat. The box side ``2 * radius + 1``
    must cover the tile.
    """
    th, tw = sampling.pattern.tile_shape
    if kernel_radius is None:
        kernel_radius = (th, tw)
    rr, rc = (kernel_radius, kernel_radius) if np.isscalar(kernel_radius) else kernel_radius
    rr, rc = int(rr), int(rc)
    if 2 * rr + 1 < th or 2 * rc + 1 < tw:
        raise ConfigError(
            f"PPI box of {2 * rr + 1}x{2 * rc + 1} is smaller than the {th}x{tw} tile"
        )
    ppi = conv2_separable(y.data, box_kernel(rr), box_kernel(rc))
    masks = sampling.masks(y.height, y.width)
    d = np.broadcast_to((y.data - ppi)[:, :, None], masks.shape)
    krow, kcol = _interp_kernels(sampling)
    out = ppi[:, :, None] + _normalized_conv(d, masks, krow, kcol)
    return MultispectralImage(_restore_samples(out, y.data, masks), sampling.grid)
