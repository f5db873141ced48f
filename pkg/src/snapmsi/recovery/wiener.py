"""Per-phase Wiener (ridge-regression) demosaicking learned from full-resolution cubes.

For every offset ``p`` inside the filter tile, a matrix ``W_p`` maps the
vectorized mosaic window around a pixel of that phase to the pixel's full
spectrum. Windows span ``window_tiles`` tiles per side and wrap periodically.
Training pairs come from simulated mosaicking of the training cubes and the
matrices solve the ridge-regularized normal equations

    W_p (Y Y^T + ridge I) = X Y^T

with ``Y`` stacking windows and ``X`` stacking the true spectra as columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import (
    FilterArrayPattern,
    MosaickedImage,
    MultispectralImage,
    SensitivityMatrix,
    SpectralGrid,
    require_same_grid,
)
from ..errors import ConfigError, DimensionError, NumericalError
from ..forward import NoiseSpec, mosaic_apply


@dataclass(frozen=True)
class WienerModel:
    """Trained per-phase estimators.

    ``matrices`` has shape ``(tile_h, tile_w, outputs, window_size)`` where
    ``outputs = components * grid.count``. Spectral models have one component;
    Stokes models have three, ordered (band, stokes) with the Stokes index
    fastest.
    """

    pattern: FilterArrayPattern
    window_tiles: int
    matrices: np.ndarray
    ridge: float
    grid: SpectralGrid
    components: int = 1

    def __post_init__(self):
        m = np.array(self.matrices, dtype=np.float64, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)
        th, tw = self.pattern.tile_shape
        want = (th, tw, self.components * self.grid.count, self.window_size)
        if m.shape != want:
            raise DimensionError(f"wiener matrices have shape {m.shape}, expected {want}")

    @property
    def window_shape(self) -> tuple[int, int]:
        th, tw = self.pattern.tile_shape
        return self.window_tiles * th, self.window_tiles * tw

    @property
    def window_size(self) -> int:
        wh, ww = self.window_shape
        return wh * ww

    def matrix(self, phase_row: int, phase_col: int) -> np.ndarray:
        return self.matrices[phase_row, phase_col]

    def __eq__(self, other):
        if not isinstance(other, WienerModel):
            return NotImplemented
        return (
            self.pattern == other.pattern
            and self.window_tiles == other.window_tiles
            and self.ridge == other.ridge
            and self.components == other.components
            and self.grid.matches(other.grid)
            and np.array_equal(self.matrices, other.matrices)
        )

    __hash__ = None


def _check_window_tiles(window_tiles: int) -> None:
    if window_tiles < 1 or window_tiles % 2 == 0:
        raise ConfigError(f"window_tiles must be an odd integer >= 1, got {window_tiles}")


def _check_tiling(height: int, width: int, pattern: FilterArrayPattern) -> None:
    th, tw = pattern.tile_shape
    if height % th or width % tw:
        raise DimensionError(
            f"image {height}x{width} is not a multiple of the {th}x{tw} tile"
        )


def window_offsets(pattern: FilterArrayPattern, window_tiles: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column offsets of the window relative to its center pixel."""
    th, tw = pattern.tile_shape
    wh, ww = window_tiles * th, window_tiles * tw
    return np.arange(wh) - wh // 2, np.arange(ww) - ww // 2


def phase_windows(y: np.ndarray, pattern: FilterArrayPattern, window_tiles: int, phase: tuple[int, int]) -> np.ndarray:
    """``(N, window_size)`` windows around every pixel of one tile phase (row-major order)."""
    H, W = y.shape
    th, tw = pattern.tile_shape
    dr, dc = window_offsets(pattern, window_tiles)
    rows = np.arange(phase[0], H, th)
    cols = np.arange(phase[1], W, tw)
    R = (rows[:, None] + dr[None, :]) % H
    C = (cols[:, None] + dc[None, :]) % W
    win = y[R[:, None, :, None], C[None, :, None, :]]
    return win.reshape(len(rows) * len(cols), -1)


def phase_targets(x: np.ndarray, pattern: FilterArrayPattern, phase: tuple[int, int]) -> np.ndarray:
    """``(N, outputs)`` true values at every pixel of one tile phase."""
    th, tw = pattern.tile_shape
    sub = x[phase[0]::th, phase[1]::tw]
    return sub.reshape(sub.shape[0] * sub.shape[1], -1)


def _subsample(n: int, max_pairs: int | None, seed: int, phase_index: int) -> np.ndarray | None:
    if max_pairs is None or max_pairs >= n:
        return None
    rng = np.random.default_rng([seed, phase_index])
    return np.sort(rng.choice(n, size=max_pairs, replace=False))


def collect_pairs(
    mosaics: Sequence[np.ndarray],
    targets: Sequence[np.ndarray],
    pattern: FilterArrayPattern,
    window_tiles: int,
    max_pairs_per_phase: int | None = None,
    seed: int = 0,
):
    """Yield ``(phase, Y, X)`` with windows ``Y (N, d)`` and targets ``X (N, M)``."""
    th, tw = pattern.tile_shape
    for a in range(th):
        for b in range(tw):
            Y = np.concatenate([phase_windows(m, pattern, window_tiles, (a, b)) for m in mosaics])
            X = np.concatenate([phase_targets(t, pattern, (a, b)) for t in targets])
            keep = _subsample(len(Y), max_pairs_per_phase, seed, a * tw + b)
            if keep is not None:
                Y, X = Y[keep], X[keep]
            yield (a, b), Y, X


def solve_phase(Y: np.ndarray, X: np.ndarray, ridge: float) -> np.ndarray:
    """Ridge solution ``W`` (``M x d``) for one phase."""
    n, d = Y.shape
    if ridge < 0:
        raise ConfigError(f"ridge must be >= 0, got {ridge}")
    if ridge == 0 and n < d:
        raise NumericalError(
            f"singular system: {n} training pairs for a window of {d} values and ridge 0"
        )
    G = Y.T @ Y
    if ridge:
        G[np.diag_indices(d)] += ridge
    C = X.T @ Y
    try:
        return np.linalg.solve(G, C.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular normal equations: {exc}") from exc


def fit_wiener(
    mosaics: Sequence[np.ndarray],
    targets: Sequence[np.ndarray],
    pattern: FilterArrayPattern,
    grid: SpectralGrid,
    window_tiles: int = 3,
    ridge: float = 1e-6,
    components: int = 1,
    max_pairs_per_phase: int | None = None,
    seed: int = 0,
) -> WienerModel:
    """Fit from already simulated mosaics and ``(H, W, outputs)`` target arrays."""
    _check_window_tiles(window_tiles)
    if not mosaics:
        raise ConfigError("training set is empty")
    for m, t in zip(mosaics, targets):
        if m.shape != t.shape[:2]:
            raise DimensionError("mosaic and target extents differ")
        _check_tiling(*m.shape, pattern)
    th, tw = pattern.tile_shape
    d = window_tiles * th * window_tiles * tw
    mats = np.empty((th, tw, components * grid.count, d))
    for (a, b), Y, X in collect_pairs(mosaics, targets, pattern, window_tiles, max_pairs_per_phase, seed):
        mats[a, b] = solve_phase(Y, X, ridge)
    return WienerModel(pattern, window_tiles, mats, float(ridge), grid, components)


def simulate_training_mosaics(
    training: Sequence[MultispectralImage],
    pattern: FilterArrayPattern,
    sens: SensitivityMatrix,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> list[np.ndarray]:
    """Mosaic each training cube; image ``i`` draws noise on stream ``i``."""
    noise = NoiseSpec(noise_sigma, seed)
    return [mosaic_apply(x, pattern, sens, noise, stream=i).data for i, x in enumerate(training)]


def wiener_train(
    training: Sequence[MultispectralImage],
    pattern: FilterArrayPattern,
    sens: SensitivityMatrix,
    noise_sigma: float = 0.0,
    window_tiles: int = 3,
    ridge: float = 1e-6,
    seed: int = 0,
    max_pairs_per_phase: int | None = None,
) -> WienerModel:
    """Learn per-phase Wiener matrices from simulated captures of ``training``."""
    training = list(training)
    if not training:
        raise ConfigError("training set is empty")
    for x in training:
        require_same_grid(x.grid, training[0].grid, "training grids")
    require_same_grid(training[0].grid, sens.grid, "training and sensitivity grids")
    mosaics = simulate_training_mosaics(training, pattern, sens, noise_sigma, seed)
    return fit_wiener(
        mosaics,
        [x.data for x in training],
        pattern,
        sens.grid,
        window_tiles=window_tiles,
        ridge=ridge,
        max_pairs_per_phase=max_pairs_per_phase,
        seed=seed,
    )


def apply_wiener_array(model: WienerModel, y: np.ndarray) -> np.ndarray:
    """``(H, W, outputs)`` estimate from a raw mosaic array."""
    H, W = y.shape
    _check_tiling(H, W, model.pattern)
    th, tw = model.pattern.tile_shape
    out = np.empty((H, W, model.matrices.shape[2]))
    for a in range(th):
        for b in range(tw):
            win = phase_windows(y, model.pattern, model.window_tiles, (a, b))
            est = win @ model.matrices[a, b].T
            out[a::th, b::tw] = est.reshape(H // th, W // tw, -1)
    return out


def wiener_apply(model: WienerModel, y: MosaickedImage) -> MultispectralImage:
    if model.components != 1:
        raise ConfigError("this model estimates Stokes cubes; use recover_stokes")
    return MultispectralImage(apply_wiener_array(model, y.data), model.grid)
