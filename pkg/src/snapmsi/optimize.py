"""Joint optimization of filter spectral sensitivities and Wiener demosaicking.

The outer loop descends on the sensitivities ``S`` while the inner problem,
the Wiener matrices for the current ``S``, is solved exactly in closed form.
The outer objective is

    J(S) = MSE(S) / MSE(S0) + smoothness * mean (second differences)^2
           - barrier * mean [log S + log(1 - S)]

where ``MSE(S)`` is the mean squared reconstruction error over all training
pairs after retraining and ``S0`` is the starting table. Scaling by
``MSE(S0)`` and averaging the penalties makes the weights independent of the
data range and of ``K x L``. The gradient of ``MSE`` comes from forward finite
differences over the ``K x L`` entries; the penalty gradients are analytic.
The log barrier keeps ``S`` strictly inside ``(0, 1)``, and its weight
follows a decreasing schedule.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import FilterArrayPattern, MultispectralImage, SensitivityMatrix, SpectralGrid, psnr
from .errors import ConfigError, NumericalError
from .recovery.wiener import (
    WienerModel,
    collect_pairs,
    simulate_training_mosaics,
    solve_phase,
    wiener_apply,
    wiener_train,
)
from .forward import NoiseSpec, mosaic_apply


@dataclass(frozen=True)
class OptimizerConfig:
    max_outer_iters: int = 30
    barrier_start: float = 1e-2
    barrier_decay: float = 0.5
    barrier_every: int = 5
    barrier_schedule: tuple | None = None
    gradient_step: float = 0.05
    backtracking: float = 0.5
    max_backtracks: int = 12
    stop_tol: float = 1e-6
    smoothness_weight: float = 1e-3
    fd_step: float = 1e-6
    noise_sigma: float = 0.0
    window_tiles: int = 3
    ridge: float = 1e-6
    max_pairs_per_phase: int | None = None
    mse_floor: float = 1e-14
    max_failures: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("barrier_start", "smoothness_weight", "noise_sigma", "ridge", "stop_tol"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0 < self.backtracking < 1:
            raise ConfigError("backtracking factor must lie in (0, 1)")
        if not 0 < self.barrier_decay < 1:
            raise ConfigError("barrier_decay must lie in (0, 1)")
        if self.gradient_step <= 0 or self.fd_step <= 0:
            raise ConfigError("gradient_step and fd_step must be positive")
        if self.barrier_schedule is not None:
            s = np.asarray(self.barrier_schedule, dtype=float)
            if len(s) == 0 or np.any(s < 0) or np.any(np.diff(s) >= 0):
                raise ConfigError("barrier_schedule must be strictly decreasing and nonnegative")

    def barrier_weight(self, iteration: int) -> float:
        if self.barrier_schedule is not None:
            s = self.barrier_schedule
            return float(s[min(iteration, len(s) - 1)])
        return self.barrier_start * self.barrier_decay ** (iteration // self.barrier_every)


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    total: float
    barrier_weight: float
    barrier_value: float
    step: float
    accepted: bool


@dataclass
class OptimizationTrace:
    records: list[TraceRecord] = field(default_factory=list)
    stop_reason: str = ""

    def accepted(self) -> list[TraceRecord]:
        return [r for r in self.records if r.accepted]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "objective", "barrier_weight", "step", "accepted"])
        for r in self.records:
            w.writerow([r.iteration, repr(r.objective), repr(r.barrier_weight), repr(r.step), int(r.accepted)])
        return buf.getvalue()


def random_init_sensitivity(k: int, grid: SpectralGrid, seed: int = 0) -> SensitivityMatrix:
    """I.i.d. uniform entries on [0.05, 0.95]."""
    if k < 1:
        raise ConfigError("need at least one filter")
    rng = np.random.default_rng(seed)
    return SensitivityMatrix(rng.uniform(0.05, 0.95, size=(k, grid.count)), grid)


def _second_diff(L: int) -> np.ndarray:
    D = np.zeros((max(L - 2, 0), L))
    for i in range(L - 2):
        D[i, i:i + 3] = (1.0, -2.0, 1.0)
    return D


def smoothness_penalty(S: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared second difference along wavelength, and its gradient."""
    D = _second_diff(S.shape[1])
    d2 = S @ D.T
    if d2.size == 0:
        return 0.0, np.zeros_like(S)
    return float(np.mean(d2 * d2)), 2.0 * d2 @ D / d2.size


def barrier_value(S: np.ndarray) -> tuple[float, np.ndarray]:
    """``-mean[log S + log(1-S)]`` and its gradient; ``inf`` outside (0, 1)."""
    if np.any(S <= 0) or np.any(S >= 1):
        return math.inf, np.full_like(S, np.nan)
    return float(-np.mean(np.log(S) + np.log1p(-S))), (-1.0 / S + 1.0 / (1.0 - S)) / S.size


class ReconstructionObjective:
    """Training-set reconstruction MSE as a function of the sensitivity table."""

    def __init__(
        self,
        training: Sequence[MultispectralImage],
        pattern: FilterArrayPattern,
        grid: SpectralGrid,
        cfg: OptimizerConfig,
    ):
        self.training = list(training)
        if not self.training:
            raise ConfigError("training set is empty")
        self.pattern = pattern
        self.grid = grid
        self.cfg = cfg
        self.evaluations = 0

    def mse(self, S: np.ndarray) -> float:
        self.evaluations += 1
        sens = SensitivityMatrix(S, self.grid)
        cfg = self.cfg
        mosaics = simulate_training_mosaics(self.training, self.pattern, sens, cfg.noise_sigma, cfg.seed)
        targets = [x.data for x in self.training]
        sq, count = 0.0, 0
        for _, Y, X in collect_pairs(
            mosaics, targets, self.pattern, cfg.window_tiles, cfg.max_pairs_per_phase, cfg.seed
        ):
            W = solve_phase(Y, X, cfg.ridge)
            R = X - Y @ W.T
            sq += float(np.sum(R * R))
            count += R.size
        val = sq / count
        if not math.isfinite(val):
            raise NumericalError("reconstruction objective is not finite")
        return val

    def mse_partial(self, S: np.ndarray, idx: tuple, base: float | None = None) -> float:
        """Forward difference of :meth:`mse` along one entry of ``S``."""
        h = self.cfg.fd_step
        f0 = self.mse(S) if base is None else base
        Sp = np.array(S, dtype=np.float64)
        Sp[idx] += h
        return (self.mse(Sp) - f0) / h

    def mse_gradient(self, S: np.ndarray, base: float | None = None) -> np.ndarray:
        """Forward finite differences of :meth:`mse` over every entry of ``S``."""
        f0 = self.mse(S) if base is None else base
        g = np.empty_like(S)
        for idx in np.ndindex(S.shape):
            g[idx] = self.mse_partial(S, idx, f0)
        return g


def _total(cfg: OptimizerConfig, mse: float, scale: float, S: np.ndarray, weight: float) -> tuple[float, float]:
    smooth, _ = smoothness_penalty(S)
    bar, _ = barrier_value(S)
    return mse / scale + cfg.smoothness_weight * smooth + weight * bar, bar


def optimize_sensitivity(
    training: Sequence[MultispectralImage],
    pattern: FilterArrayPattern,
    init: SensitivityMatrix,
    cfg: OptimizerConfig | None = None,
) -> tuple[SensitivityMatrix, WienerModel, OptimizationTrace]:
    """Alternate closed-form Wiener retraining with barrier-guarded descent on ``S``.

    A step is accepted only when it lowers the penalized objective at the
    current barrier weight and does not raise the reconstruction MSE, so the
    MSE of accepted iterations never increases.
    """
    cfg = cfg or OptimizerConfig()
    if init.num_filters != pattern.num_filters:
        raise ConfigError("initial sensitivities and pattern disagree on the filter count")
    S = np.array(init.values, dtype=np.float64)
    if np.any(S <= 0) or np.any(S >= 1):
        raise ConfigError("initial sensitivities must lie strictly inside (0, 1)")
    objective = ReconstructionObjective(training, pattern, init.grid, cfg)
    trace = OptimizationTrace()

    mse = objective.mse(S)
    scale = max(mse, 1e-300)
    weight = cfg.barrier_weight(0)
    total, bar = _total(cfg, mse, scale, S, weight)
    trace.records.append(TraceRecord(0, mse, total, weight, bar, 0.0, True))
    step = cfg.gradient_step
    failures = 0
    trace.stop_reason = "max_outer_iters"
    if mse <= cfg.mse_floor:
        trace.stop_reason = "mse_floor"
    else:
        for it in range(1, cfg.max_outer_iters + 1):
            weight = cfg.barrier_weight(it)
            total, bar = _total(cfg, mse, scale, S, weight)
            _, g_smooth = smoothness_penalty(S)
            _, g_bar = barrier_value(S)
            grad = objective.mse_gradient(S, mse) / scale + cfg.smoothness_weight * g_smooth + weight * g_bar
            gmax = float(np.max(np.abs(grad)))
            if gmax == 0.0:
                trace.stop_reason = "zero_gradient"
                break
            direction = -grad / gmax
            trial = step
            accepted = False
            for _ in range(cfg.max_backtracks + 1):
                cand = S + trial * direction
                if np.all(cand > 0) and np.all(cand < 1):
                    cand_mse = objective.mse(cand)
                    cand_total, cand_bar = _total(cfg, cand_mse, scale, cand, weight)
                    if cand_total < total and cand_mse <= mse:
                        accepted = True
                        break
                trial *= cfg.backtracking
            if not accepted:
                trace.records.append(TraceRecord(it, mse, total, weight, bar, trial, False))
                failures += 1
                step = max(trial, 1e-12)
                if failures >= cfg.max_failures:
                    trace.stop_reason = "line_search_failed"
                    break
                continue
            failures = 0
            rel = (mse - cand_mse) / max(mse, 1e-300)
            S, mse = cand, cand_mse
            trace.records.append(TraceRecord(it, mse, cand_total, weight, cand_bar, trial, True))
            step = min(trial / cfg.backtracking, 0.5)
            if mse <= cfg.mse_floor:
                trace.stop_reason = "mse_floor"
                break
            if rel < cfg.stop_tol:
                trace.stop_reason = "stop_tol"
                break

    sens = SensitivityMatrix(S, init.grid)
    model = wiener_train(
        training,
        pattern,
        sens,
        noise_sigma=cfg.noise_sigma,
        window_tiles=cfg.window_tiles,
        ridge=cfg.ridge,
        seed=cfg.seed,
        max_pairs_per_phase=cfg.max_pairs_per_phase,
    )
    return sens, model, trace


def heldout_psnr(
    model: WienerModel,
    sens: SensitivityMatrix,
    cubes: Sequence[MultispectralImage],
    noise_sigma: float = 0.0,
    seed: int = 0,
    peak: float = 1.0,
) -> float:
    """PSNR over the concatenation of ``cubes`` after capture and Wiener recovery."""
    ref, est = [], []
    for i, x in enumerate(cubes):
        y = mosaic_apply(x, model.pattern, sens, NoiseSpec(noise_sigma, seed), stream=10_000 + i)
        ref.append(x.data)
        est.append(wiener_apply(model, y).data)
    return psnr(np.concatenate(ref), np.concatenate(est), peak)


def spectral_support(S: np.ndarray, fraction: float = 0.1) -> float:
    """Mean count of bands where a filter exceeds ``fraction`` of its own peak."""
    peaks = S.max(axis=1, keepdims=True)
    return float(np.mean(np.sum(S > fraction * peaks, axis=1)))
