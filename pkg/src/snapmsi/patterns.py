"""Filter-arrangement design: the average nearest-neighbor distance (ANND)
metric, simulated-annealing arrangement search, and preset tiles.

Distances are Euclidean on the torus defined by the tile. Because the pattern
repeats periodically, the nearest sample of a filter on the infinite sensor is
found by minimizing each axis offset independently modulo the tile period,
which is exactly the toroidal distance.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    FilterArrayPattern,
    PolarizedFilterBank,
    SensitivityMatrix,
    SpectralGrid,
    default_grid,
    validate,
)
from .errors import ConfigError

PRESETS = ("bayer", "brauers6", "monno5", "fig7-pol16")
POL16_PITCHES_NM = (265.0, 280.0, 290.0, 305.0)
POL16_ORIENTATIONS_DEG = (0.0, 45.0, 90.0, 135.0)


@dataclass(frozen=True)
class AnndReport:
    per_band: tuple
    overall: float


def toroidal_sq_distances(tile_height: int, tile_width: int) -> np.ndarray:
    """Integer squared toroidal distances between all cell pairs (row-major cells)."""
    r, c = np.divmod(np.arange(tile_height * tile_width), tile_width)
    dr = np.abs(r[:, None] - r[None, :])
    dc = np.abs(c[:, None] - c[None, :])
    dr = np.minimum(dr, tile_height - dr)
    dc = np.minimum(dc, tile_width - dc)
    return dr * dr + dc * dc


def _band_annd(dsq: np.ndarray, members: np.ndarray) -> float:
    return math.fsum(np.sqrt(dsq[:, members].min(axis=1)).tolist()) / dsq.shape[0]


def annd(pattern: FilterArrayPattern) -> AnndReport:
    problems = validate(pattern)
    if problems:
        raise ConfigError("invalid pattern: " + "; ".join(problems))
    dsq = toroidal_sq_distances(*pattern.tile_shape)
    flat = pattern.cells.ravel()
    per_band = tuple(_band_annd(dsq, np.flatnonzero(flat == k)) for k in range(pattern.num_filters))
    return AnndReport(per_band, math.fsum(per_band) / pattern.num_filters)


@dataclass(frozen=True)
class AnnealingSchedule:
    probe_moves: int = 100
    target_acceptance: float = 0.5
    cooling: float = 0.95
    moves_per_temperature: int = 100
    patience: int = 10_000
    max_moves: int = 500_000


@dataclass
class AnnealResult:
    pattern: FilterArrayPattern
    annd: float
    initial_annd: float
    seed: int
    moves: int
    initial_temperature: float
    trace: list = field(default_factory=list)


def _check_counts(tile_height: int, tile_width: int, k: int, counts) -> list[int] | None:
    area = tile_height * tile_width
    if k < 1 or k > area:
        raise ConfigError(f"need 1 <= K <= tile area ({area}), got K={k}")
    if counts is None:
        return None
    counts = [int(c) for c in counts]
    if len(counts) != k:
        raise ConfigError(f"counts must list {k} entries, got {len(counts)}")
    if any(c < 1 for c in counts) or sum(counts) != area:
        raise ConfigError(f"infeasible counts {counts}: each >= 1 and summing to {area}")
    return counts


def _initial_assignment(area: int, k: int, counts, rng: random.Random) -> list[int]:
    if counts is not None:
        cells = [f for f, n in enumerate(counts) for _ in range(n)]
    else:
        cells = list(range(k)) + [rng.randrange(k) for _ in range(area - k)]
    rng.shuffle(cells)
    return cells


class _AnnealState:
    def __init__(self, cells: list[int], k: int, dsq: np.ndarray):
        self.cells = np.array(cells, dtype=np.int64)
        self.k = k
        self.dsq = dsq
        self.sizes = np.bincount(self.cells, minlength=k)
        self.per_band = np.array([self._band(f) for f in range(k)])

    def _band(self, f: int) -> float:
        members = np.flatnonzero(self.cells == f)
        return float(np.sqrt(self.dsq[:, members].min(axis=1)).sum()) / self.dsq.shape[0]

    @property
    def cost(self) -> float:
        return float(self.per_band.sum()) / self.k

    def propose(self, rng: random.Random, swap: bool):
        """Return ``(changes, delta)`` or None for an inadmissible move."""
        area = len(self.cells)
        if swap:
            i, j = rng.randrange(area), rng.randrange(area)
            if self.cells[i] == self.cells[j]:
                return None
            changes = [(i, int(self.cells[j])), (j, int(self.cells[i]))]
        else:
            i = rng.randrange(area)
            old = int(self.cells[i])
            new = rng.randrange(self.k - 1)
            new += new >= old
            if self.sizes[old] == 1:
                return None
            changes = [(i, new)]
        touched = {int(self.cells[i]) for i, _ in changes} | {f for _, f in changes}
        saved = [(i, int(self.cells[i])) for i, _ in changes]
        for i, f in changes:
            self.cells[i] = f
        new_vals = {f: self._band(f) for f in touched}
        for i, f in saved:
            self.cells[i] = f
        delta = sum(new_vals[f] - self.per_band[f] for f in touched) / self.k
        return changes, new_vals, delta

    def commit(self, changes, new_vals) -> None:
        for i, f in changes:
            self.sizes[self.cells[i]] -= 1
            self.cells[i] = f
            self.sizes[f] += 1
        for f, v in new_vals.items():
            self.per_band[f] = v


def anneal_pattern(
    tile_height: int,
    tile_width: int,
    k: int,
    counts: Sequence[int] | None = None,
    schedule: AnnealingSchedule | None = None,
    seed: int = 0,
) -> AnnealResult:
    """One seeded simulated-annealing run minimizing overall ANND.

    With ``counts`` the moves swap two cells; without, they reassign one cell
    to another filter, never emptying a filter. The best pattern seen is
    returned.
    """
    schedule = schedule or AnnealingSchedule()
    counts = _check_counts(tile_height, tile_width, k, counts)
    rng = random.Random(seed)
    area = tile_height * tile_width
    dsq = toroidal_sq_distances(tile_height, tile_width)
    state = _AnnealState(_initial_assignment(area, k, counts, rng), k, dsq)
    swap = counts is not None
    initial = state.cost

    uphill = []
    for _ in range(schedule.probe_moves):
        move = state.propose(rng, swap)
        if move is not None and move[2] > 0:
            uphill.append(move[2])
    if uphill:
        temperature = -float(np.mean(uphill)) / math.log(schedule.target_acceptance)
    else:
        temperature = 1e-3
    t0 = temperature

    best_cost, best_cells = initial, state.cells.copy()
    since_best = 0
    moves = 0
    trace = []
    while since_best < schedule.patience and moves < schedule.max_moves:
        moves += 1
        since_best += 1
        move = state.propose(rng, swap)
        if move is not None:
            changes, new_vals, delta = move
            if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                state.commit(changes, new_vals)
                cost = state.cost
                if cost < best_cost - 1e-12:
                    best_cost, best_cells = cost, state.cells.copy()
                    since_best = 0
        if moves % schedule.moves_per_temperature == 0:
            trace.append((moves, temperature, state.cost, best_cost))
            temperature *= schedule.cooling

    pattern = FilterArrayPattern(best_cells.reshape(tile_height, tile_width), k)
    return AnnealResult(pattern, annd(pattern).overall, initial, seed, moves, t0, trace)


def optimize_pattern(
    tile_height: int,
    tile_width: int,
    k: int,
    counts: Sequence[int] | None = None,
    annealing: AnnealingSchedule | None = None,
    seed: int = 0,
    restarts: int = 1,
) -> FilterArrayPattern:
    """Best pattern over ``restarts`` seeded runs (seeds ``seed .. seed+restarts-1``).

    Ties go to the lowest seed.
    """
    return best_of_restarts(tile_height, tile_width, k, counts, annealing, seed, restarts).pattern


def best_of_restarts(tile_height, tile_width, k, counts=None, annealing=None, seed=0, restarts=1) -> AnnealResult:
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    best = None
    for s in range(seed, seed + restarts):
        res = anneal_pattern(tile_height, tile_width, k, counts, annealing, s)
        if best is None or res.annd < best.annd:
            best = res
    return best


def _gaussian_filters(grid: SpectralGrid, centers, width_nm: float, peak: float = 0.9) -> SensitivityMatrix:
    wl = grid.wavelengths
    values = np.array([peak * np.exp(-0.5 * ((wl - c) / width_nm) ** 2) for c in centers])
    return SensitivityMatrix(values, grid)


def photonic_crystal_bank(
    grid: SpectralGrid | None = None,
    pitches_nm: Sequence[float] = POL16_PITCHES_NM,
    orientations_deg: Sequence[float] = POL16_ORIENTATIONS_DEG,
) -> PolarizedFilterBank:
    """Synthetic TE/TM transmittance bank, one filter per (pitch, orientation).

    Measured curves are not available, so each pitch gets smooth stand-in
    curves: a transmission peak whose center moves 3.5 nm per nm of lattice
    pitch (440 nm at 265 nm pitch, 580 nm at 305 nm), with the TM peak 60 nm
    redder and broader than the TE peak (form birefringence). Filter index is
    ``pitch_index * n_orient + orient_index``.
    """
    grid = grid or default_grid()
    wl = grid.wavelengths
    te, tm, theta, labels = [], [], [], []
    for p in pitches_nm:
        center = 3.5 * p - 487.5
        curve_te = 0.1 + 0.8 * np.exp(-0.5 * ((wl - center) / 35.0) ** 2)
        curve_tm = 0.15 + 0.7 * np.exp(-0.5 * ((wl - center - 60.0) / 45.0) ** 2)
        for o in orientations_deg:
            te.append(curve_te)
            tm.append(curve_tm)
            theta.append(o)
            labels.append(f"pitch{p:g}nm-{o:g}deg")
    return PolarizedFilterBank(np.array(te), np.array(tm), np.array(theta), grid, tuple(labels))


def preset_pattern(name: str, grid: SpectralGrid | None = None):
    """Return ``(pattern, description)`` for a named tile.

    ``description`` is a ``SensitivityMatrix`` of stand-in Gaussian filters
    for the spectral presets and a ``PolarizedFilterBank`` for ``fig7-pol16``.
    ``monno5`` is reconstructed from its density description: band 0 on the
    checkerboard, four more bands on two cells each, each pair maximally
    separated.
    """
    grid = grid or default_grid()
    if name == "bayer":
        cells = [[0, 1], [2, 3]]  # R, Gr, Gb, B
        return FilterArrayPattern(cells, 4), _gaussian_filters(grid, (610, 540, 540, 460), 30.0)
    if name == "brauers6":
        cells = [[0, 1, 2], [3, 4, 5]]
        centers = np.linspace(grid.start_nm + 20, grid.stop_nm - 20, 6)
        return FilterArrayPattern(cells, 6), _gaussian_filters(grid, centers, 20.0)
    if name == "monno5":
        cells = [
            [0, 1, 0, 2],
            [3, 0, 4, 0],
            [0, 2, 0, 1],
            [4, 0, 3, 0],
        ]
        return FilterArrayPattern(cells, 5), _gaussian_filters(grid, (540, 450, 500, 600, 660), 25.0)
    if name == "fig7-pol16":
        n_o = len(POL16_ORIENTATIONS_DEG)
        cells = [[r * n_o + c for c in range(n_o)] for r in range(len(POL16_PITCHES_NM))]
        return FilterArrayPattern(cells, 16), photonic_crystal_bank(grid)
    raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
