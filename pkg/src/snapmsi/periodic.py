"""Toroidal image operators: separable convolution and forward-difference gradients.

Convolutions are accumulated as weighted sums of ``np.roll`` shifts, so the
same floating-point operations run at every pixel. That makes them exactly
equivariant under integer translations, which the demosaicking tests rely on.
"""

from __future__ import annotations

import numpy as np


def _conv_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    half = (len(kernel) - 1) // 2
    out = np.zeros_like(a, dtype=np.float64)
    for i, w in enumerate(kernel):
        if w != 0.0:
            out += w * np.roll(a, i - half, axis=axis)
    return out


def conv2_separable(a: np.ndarray, krow: np.ndarray, kcol: np.ndarray) -> np.ndarray:
    """Periodic convolution of the leading two axes with ``outer(krow, kcol)``.

    Both kernels must have odd length and be symmetric (so correlation and
    convolution coincide).
    """
    return _conv_axis(_conv_axis(a, np.asarray(krow, float), 0), np.asarray(kcol, float), 1)


def triangle_kernel(half_width: int) -> np.ndarray:
    """Weights ``1 - |d| / half_width`` for ``|d| < half_width``."""
    d = np.arange(-half_width + 1, half_width)
    return 1.0 - np.abs(d) / half_width


def gaussian_kernel(sigma: float, truncate: float = 4.0) -> np.ndarray:
    if sigma <= 0:
        return np.ones(1)
    radius = max(1, int(truncate * sigma + 0.5))
    d = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (d / sigma) ** 2)
    return k / k.sum()


def box_kernel(radius: int) -> np.ndarray:
    """Normalized box over ``2 * radius + 1`` taps with half-weight end taps.

    The window then has width exactly ``2 * radius``, so when ``radius`` is a
    multiple of a signal's period every phase is weighted equally and the
    average of a periodic signal is flat.
    """
    if radius == 0:
        return np.ones(1)
    k = np.ones(2 * radius + 1)
    k[0] = k[-1] = 0.5
    return k / (2 * radius)


def grad(x: np.ndarray) -> np.ndarray:
    """Forward differences with wraparound; output has a trailing axis of 2 (rows, cols)."""
    return np.stack([np.roll(x, -1, axis=0) - x, np.roll(x, -1, axis=1) - x], axis=-1)


def grad_adjoint(p: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`grad` (negative divergence)."""
    pr, pc = p[..., 0], p[..., 1]
    return (np.roll(pr, 1, axis=0) - pr) + (np.roll(pc, 1, axis=1) - pc)


GRAD_NORM_SQ_BOUND = 8.0
