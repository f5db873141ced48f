"""Vectorial total variation demosaicking.

Solves

    min_x  lambda * sum_pixels ||J x||_F + 1/2 ||A x - y||^2

where ``J x`` is the ``L x 2`` stack of periodic forward differences of all
bands at a pixel and ``A`` is the mosaicking operator. The data term is
handled exactly in the primal proximal step: ``A^T A`` is block diagonal with
a rank-one ``s s^T`` block per pixel, so ``(I + tau A^T A)^{-1}`` is a
Sherman-Morrison update. The TV term is dualized, giving the Chambolle-Pock
iteration with ``K = grad`` and ``||K||^2 <= 8``.

The returned image is the best iterate seen, so ``history`` (objective of the
reported iterate) is non-increasing; ``raw_history`` holds the objective of
every primal iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import FilterArrayPattern, MosaickedImage, MultispectralImage, SensitivityMatrix
from ..errors import ConfigError, NumericalError
from ..forward import pixel_sensitivities
from ..periodic import GRAD_NORM_SQ_BOUND, conv2_separable, grad, grad_adjoint, triangle_kernel

_DEFAULT_STEP = 1.0 / math.sqrt(GRAD_NORM_SQ_BOUND)


@dataclass(frozen=True)
class VtvConfig:
    lam: float = 0.01
    max_iters: int = 500
    primal_step: float = _DEFAULT_STEP
    dual_step: float = _DEFAULT_STEP
    stop_tol: float = 1e-7

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.primal_step <= 0 or self.dual_step <= 0:
            raise ConfigError("step sizes must be positive")
        if self.primal_step * self.dual_step * GRAD_NORM_SQ_BOUND > 1.0 + 1e-12:
            raise ConfigError(
                "step sizes violate primal_step * dual_step * 8 <= 1 "
                f"({self.primal_step * self.dual_step * GRAD_NORM_SQ_BOUND:.6g})"
            )


@dataclass
class VtvResult:
    image: MultispectralImage
    objective: float
    residual: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)
    raw_history: list[float] = field(default_factory=list)


def vtv(x: np.ndarray) -> float:
    """Sum over pixels of the Frobenius norm of the band-stacked gradient."""
    g = grad(x)
    return float(np.sqrt(np.sum(g * g, axis=(2, 3))).sum())


def vtv_objective(x: np.ndarray, weights: np.ndarray, y: np.ndarray, lam: float) -> tuple[float, float]:
    """Return ``(objective, ||A x - y||)``."""
    r = np.einsum("rci,rci->rc", weights, x) - y
    res = float(np.sqrt(np.sum(r * r)))
    return lam * vtv(x) + 0.5 * res * res, res


def initial_estimate(y: np.ndarray, weights: np.ndarray, pattern: FilterArrayPattern) -> np.ndarray:
    """Per-band sensitivity-weighted normalized convolution of the back-projection.

    For delta sensitivities this is bilinear interpolation of each band.
    """
    krow = triangle_kernel(pattern.tile_height)
    kcol = triangle_kernel(pattern.tile_width)
    num = conv2_separable(weights * y[:, :, None], krow, kcol)
    den = conv2_separable(weights * weights, krow, kcol)
    safe = den > 1e-300
    return np.where(safe, num / np.where(safe, den, 1.0), 0.0)


def demosaic_vtv(
    y: MosaickedImage,
    pattern: FilterArrayPattern,
    sens: SensitivityMatrix,
    cfg: VtvConfig | None = None,
    x0: np.ndarray | None = None,
) -> VtvResult:
    cfg = cfg or VtvConfig()
    weights = pixel_sensitivities(pattern, sens, y.height, y.width)
    yd = y.data
    tau, sigma, lam = cfg.primal_step, cfg.dual_step, cfg.lam
    x = initial_estimate(yd, weights, pattern) if x0 is None else np.array(x0, dtype=np.float64)
    sq = np.sum(weights * weights, axis=2)
    shrink = tau / (1.0 + tau * sq)
    data_push = tau * weights * yd[:, :, None]

    p = np.zeros(x.shape + (2,))
    xbar = x.copy()
    obj, _ = vtv_objective(x, weights, yd, lam)
    best_x, best_obj = x, obj
    history, raw_history = [obj], [obj]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        p += sigma * grad(xbar)
        norms = np.sqrt(np.sum(p * p, axis=(2, 3)))
        p /= np.maximum(1.0, norms / lam)[:, :, None, None]

        w = x - tau * grad_adjoint(p) + data_push
        x_new = w - (shrink * np.einsum("rci,rci->rc", weights, w))[:, :, None] * weights
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"VTV iteration diverged at iteration {it}")
        xbar = 2.0 * x_new - x
        change = np.linalg.norm(x_new - x)
        scale = max(np.linalg.norm(x_new), 1e-300)
        x = x_new
        obj, _ = vtv_objective(x, weights, yd, lam)
        raw_history.append(obj)
        # primal-dual iterates are not monotone in the objective; report the best one
        if obj <= best_obj:
            best_x, best_obj = x, obj
        history.append(best_obj)
        if change <= cfg.stop_tol * scale:
            converged = True
            break

    obj, res = vtv_objective(best_x, weights, yd, lam)
    return VtvResult(MultispectralImage(best_x, sens.grid), obj, res, it, converged, history, raw_history)
