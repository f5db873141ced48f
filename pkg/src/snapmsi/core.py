"""Domain types shared across the package, plus invariant checks and quality metrics.

Cubes are held as float64 arrays indexed ``(row, col, band)``. Every type is a
frozen dataclass whose arrays are made read-only on construction, so instances
can be shared freely. Constructors only coerce dtypes and check that shapes are
mutually consistent; the value-level invariants (ranges, no dead filters, the
polarization cone) are reported by :func:`validate` and enforced by the
operations that consume the objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError, DimensionError

DEFAULT_START_NM = 420.0
DEFAULT_STEP_NM = 10.0
DEFAULT_COUNT = 31


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform wavelength axis: ``start_nm + i * step_nm`` for ``i < count``."""

    start_nm: float = DEFAULT_START_NM
    step_nm: float = DEFAULT_STEP_NM
    count: int = DEFAULT_COUNT

    def __post_init__(self):
        if not self.step_nm > 0:
            raise ConfigError(f"step_nm must be > 0, got {self.step_nm}")
        if int(self.count) != self.count or self.count < 1:
            raise ConfigError(f"count must be a positive integer, got {self.count}")
        object.__setattr__(self, "start_nm", float(self.start_nm))
        object.__setattr__(self, "step_nm", float(self.step_nm))
        object.__setattr__(self, "count", int(self.count))

    def wavelength(self, i: int) -> float:
        return self.start_nm + i * self.step_nm

    @property
    def wavelengths(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.count)

    @property
    def stop_nm(self) -> float:
        return self.wavelength(self.count - 1)

    def matches(self, other: "SpectralGrid") -> bool:
        return (
            self.count == other.count
            and math.isclose(self.start_nm, other.start_nm, abs_tol=1e-9)
            and math.isclose(self.step_nm, other.step_nm, abs_tol=1e-9)
        )


def default_grid() -> SpectralGrid:
    """The 420-720 nm, 10 nm, 31-band recovery grid."""
    return SpectralGrid(DEFAULT_START_NM, DEFAULT_STEP_NM, DEFAULT_COUNT)


def require_same_grid(a: SpectralGrid, b: SpectralGrid, what: str = "grids") -> None:
    if not a.matches(b):
        raise DimensionError(f"{what} differ: {a} vs {b}")


@dataclass(frozen=True)
class MultispectralImage:
    data: np.ndarray
    grid: SpectralGrid

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3:
            raise DimensionError(f"cube must be 3-D (rows, cols, bands), got shape {data.shape}")
        if data.shape[2] != self.grid.count:
            raise DimensionError(
                f"cube has {data.shape[2]} bands but grid has {self.grid.count}"
            )
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data) -> "MultispectralImage":
        return MultispectralImage(data, self.grid)


@dataclass(frozen=True)
class MosaickedImage:
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise DimensionError(f"mosaic must be 2-D, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FilterArrayPattern:
    """Periodic tile of filter indices; pixel ``(r, c)`` uses ``cells[r % th, c % tw]``."""

    cells: np.ndarray
    num_filters: int

    def __post_init__(self):
        cells = np.array(self.cells)
        if cells.ndim != 2 or cells.size == 0:
            raise DimensionError(f"pattern cells must be a non-empty 2-D array, got {cells.shape}")
        if not np.issubdtype(cells.dtype, np.integer):
            if not np.all(np.mod(cells, 1) == 0):
                raise ConfigError("pattern cells must be integers")
        object.__setattr__(self, "cells", _frozen(cells, dtype=np.int64))
        object.__setattr__(self, "num_filters", int(self.num_filters))

    @property
    def tile_height(self) -> int:
        return self.cells.shape[0]

    @property
    def tile_width(self) -> int:
        return self.cells.shape[1]

    @property
    def tile_shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def area(self) -> int:
        return self.cells.size

    def filter_at(self, r: int, c: int) -> int:
        return int(self.cells[r % self.tile_height, c % self.tile_width])

    def index_map(self, height: int, width: int) -> np.ndarray:
        """Filter index for every pixel of a ``height x width`` sensor."""
        rows = np.arange(height) % self.tile_height
        cols = np.arange(width) % self.tile_width
        return self.cells[rows[:, None], cols[None, :]]

    def counts(self) -> np.ndarray:
        return np.bincount(self.cells.ravel(), minlength=self.num_filters)

    def __eq__(self, other):
        if not isinstance(other, FilterArrayPattern):
            return NotImplemented
        return self.num_filters == other.num_filters and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.num_filters, self.cells.shape, self.cells.tobytes()))


@dataclass(frozen=True)
class SensitivityMatrix:
    """Transmittance of ``K`` filters sampled on ``grid``; ``values`` is ``K x L``."""

    values: np.ndarray
    grid: SpectralGrid

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2:
            raise DimensionError(f"sensitivities must be 2-D (filters, bands), got {values.shape}")
        if values.shape[1] != self.grid.count:
            raise DimensionError(
                f"sensitivities have {values.shape[1]} bands but grid has {self.grid.count}"
            )
        object.__setattr__(self, "values", values)

    @property
    def num_filters(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SensitivityMatrix):
            return NotImplemented
        return self.grid.matches(other.grid) and np.array_equal(self.values, other.values)

    __hash__ = None

    @classmethod
    def delta(cls, grid: SpectralGrid, bands=None) -> "SensitivityMatrix":
        """One filter per listed band with unit transmittance there and zero elsewhere."""
        bands = range(grid.count) if bands is None else bands
        bands = list(bands)
        values = np.zeros((len(bands), grid.count))
        values[np.arange(len(bands)), bands] = 1.0
        return cls(values, grid)


@dataclass(frozen=True)
class StokesCube:
    """Linear polarization state (S0, S1, S2) per pixel and band."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    grid: SpectralGrid

    def __post_init__(self):
        parts = [_frozen(getattr(self, n)) for n in ("s0", "s1", "s2")]
        if parts[0].ndim != 3 or any(p.shape != parts[0].shape for p in parts):
            raise DimensionError("s0, s1, s2 must be 3-D cubes of identical shape")
        if parts[0].shape[2] != self.grid.count:
            raise DimensionError(
                f"stokes cube has {parts[0].shape[2]} bands but grid has {self.grid.count}"
            )
        for name, p in zip(("s0", "s1", "s2"), parts):
            object.__setattr__(self, name, p)

    @property
    def height(self) -> int:
        return self.s0.shape[0]

    @property
    def width(self) -> int:
        return self.s0.shape[1]

    def stacked(self) -> np.ndarray:
        """``(H, W, L, 3)`` array with the Stokes component last."""
        return np.stack([self.s0, self.s1, self.s2], axis=-1)

    @classmethod
    def from_stacked(cls, arr: np.ndarray, grid: SpectralGrid) -> "StokesCube":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr[..., 0], arr[..., 1], arr[..., 2], grid)

    def intensity(self) -> MultispectralImage:
        return MultispectralImage(self.s0, self.grid)

    def dop(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.hypot(self.s1, self.s2) / self.s0
        return np.where(self.s0 > 0, d, 0.0)


@dataclass(frozen=True)
class PolarizedFilterBank:
    """Per-filter TE/TM transmittance curves and analyzer orientation.

    ``orientation_deg`` is stored reduced modulo 180.
    """

    t_te: np.ndarray
    t_tm: np.ndarray
    orientation_deg: np.ndarray
    grid: SpectralGrid
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        te, tm = _frozen(self.t_te), _frozen(self.t_tm)
        if te.ndim != 2 or te.shape != tm.shape:
            raise DimensionError("t_te and t_tm must be 2-D tables of identical shape")
        if te.shape[1] != self.grid.count:
            raise DimensionError(f"bank tables have {te.shape[1]} bands but grid has {self.grid.count}")
        theta = np.atleast_1d(np.asarray(self.orientation_deg, dtype=np.float64))
        if theta.shape != (te.shape[0],):
            raise DimensionError("orientation_deg needs one angle per filter")
        object.__setattr__(self, "t_te", te)
        object.__setattr__(self, "t_tm", tm)
        object.__setattr__(self, "orientation_deg", _frozen(np.mod(theta, 180.0)))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def num_filters(self) -> int:
        return self.t_te.shape[0]

    def intensity_gain(self) -> np.ndarray:
        """``K x L`` coefficient applied to S0."""
        return 0.5 * (self.t_te + self.t_tm)

    def diattenuation_gain(self) -> np.ndarray:
        """``K x L`` coefficient applied to ``cos2t*S1 + sin2t*S2``."""
        return 0.5 * (self.t_te - self.t_tm)


CoreObject = Union[
    SpectralGrid,
    MultispectralImage,
    MosaickedImage,
    FilterArrayPattern,
    SensitivityMatrix,
    StokesCube,
    PolarizedFilterBank,
]


def _finite(name: str, arr: np.ndarray, report: list[str]) -> bool:
    bad = int(np.count_nonzero(~np.isfinite(arr)))
    if bad:
        report.append(f"{name}: {bad} non-finite value(s)")
    return bad == 0


def _unit_range(name: str, arr: np.ndarray, report: list[str]) -> None:
    if _finite(name, arr, report):
        lo, hi = int(np.count_nonzero(arr < 0)), int(np.count_nonzero(arr > 1))
        if lo or hi:
            report.append(f"{name}: {lo + hi} value(s) outside [0, 1]")


def validate(obj: CoreObject, dop_tol: float = 1e-12) -> list[str]:
    """Return a list of violated invariants; an empty list means ``obj`` is valid.

    Never raises for invalid values and never mutates ``obj``.
    """
    report: list[str] = []
    if isinstance(obj, SpectralGrid):
        pass  # construction already enforces step > 0 and count >= 1
    elif isinstance(obj, MultispectralImage):
        if _finite("data", obj.data, report):
            neg = int(np.count_nonzero(obj.data < 0))
            if neg:
                report.append(f"data: {neg} negative value(s)")
    elif isinstance(obj, MosaickedImage):
        _finite("data", obj.data, report)
    elif isinstance(obj, FilterArrayPattern):
        cells, k = obj.cells, obj.num_filters
        if k < 1:
            report.append(f"num_filters must be >= 1, got {k}")
        out = np.argwhere((cells < 0) | (cells >= k))
        if len(out):
            r, c = out[0]
            report.append(
                f"cell index out of range [0, {k}): {len(out)} cell(s), first at "
                f"({r}, {c}) = {cells[r, c]}"
            )
        if k >= 1:
            present = np.zeros(k, dtype=bool)
            inside = cells[(cells >= 0) & (cells < k)]
            present[inside] = True
            dead = np.flatnonzero(~present)
            if len(dead):
                report.append(f"dead filter(s) never placed in the tile: {dead.tolist()}")
    elif isinstance(obj, SensitivityMatrix):
        _unit_range("values", obj.values, report)
    elif isinstance(obj, StokesCube):
        ok = all(_finite(n, getattr(obj, n), report) for n in ("s0", "s1", "s2"))
        if ok:
            neg = int(np.count_nonzero(obj.s0 < 0))
            if neg:
                report.append(f"s0: {neg} negative value(s)")
            excess = obj.s1**2 + obj.s2**2 - obj.s0**2
            bad = np.argwhere(excess > dop_tol * np.maximum(obj.s0**2, 1.0))
            if len(bad):
                r, c, b = bad[0]
                report.append(
                    f"degree of linear polarization exceeds 1 (s1^2 + s2^2 > s0^2) at "
                    f"{len(bad)} site(s), first at pixel ({r}, {c}) band {b}"
                )
    elif isinstance(obj, PolarizedFilterBank):
        _unit_range("t_te", obj.t_te, report)
        _unit_range("t_tm", obj.t_tm, report)
        _finite("orientation_deg", obj.orientation_deg, report)
    else:
        report.append(f"unsupported type {type(obj).__name__}")
    return report


def _cube_array(x) -> np.ndarray:
    if isinstance(x, MultispectralImage):
        return x.data
    if isinstance(x, MosaickedImage):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _pair(reference, test) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(reference, MultispectralImage) and isinstance(test, MultispectralImage):
        require_same_grid(reference.grid, test.grid)
    a, b = _cube_array(reference), _cube_array(test)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(reference, test) -> float:
    a, b = _pair(reference, test)
    return float(np.mean((a - b) ** 2))


def psnr(reference, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over the whole cube; ``inf`` when identical."""
    if not peak > 0:
        raise ConfigError(f"peak must be > 0, got {peak}")
    err = mse(reference, test)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def rmse(reference, test) -> float:
    return math.sqrt(mse(reference, test))


def spectral_angle(reference, test) -> float:
    """Mean spectral angle in radians over pixels where both spectra are nonzero."""
    a, b = _pair(reference, test)
    if a.ndim < 2:
        raise DimensionError("spectral_angle needs a trailing band axis")
    a = a.reshape(-1, a.shape[-1])
    b = b.reshape(-1, b.shape[-1])
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    keep = (na > 0) & (nb > 0)
    if not np.any(keep):
        return 0.0
    u = a[keep] / na[keep, None]
    v = b[keep] / nb[keep, None]
    # atan2 form: exact zero for collinear spectra, where arccos loses ~1e-8
    ang = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1))
    return float(np.mean(ang))


def raised_cosine_basis(grid: SpectralGrid, dim: int) -> np.ndarray:
    """``dim x L`` smooth spectral basis forming a partition of unity.

    Bumps ``cos^2`` are centered at evenly spaced wavelengths from the first
    to the last grid point with half-width equal to their spacing, so the rows
    sum to one at every band and flat spectra lie in the span. ``dim == 1``
    is the constant curve.
    """
    if dim < 1 or dim > grid.count:
        raise ConfigError(f"basis dimension must be in [1, {grid.count}], got {dim}")
    if dim == 1:
        return np.ones((1, grid.count))
    t = np.linspace(0.0, dim - 1.0, grid.count)
    d = np.abs(t[None, :] - np.arange(dim)[:, None])
    return np.where(d < 1.0, np.cos(0.5 * np.pi * d) ** 2, 0.0)
