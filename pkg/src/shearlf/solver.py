"""Iterative hard-thresholding inpainting of a decimated EPI in the shearlet domain.

Each iteration fills the unknown rows with the current estimate, transforms,
hard-thresholds the directional coefficients, transforms back and then takes
a double-overrelaxation (DORE) step that extrapolates along the last two
iterate differences with step sizes minimising the data misfit on the known
rows.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .shearlet import ShearletSystem, analysis, project_admissible, synthesis

__all__ = [
    "SolverConfig",
    "hard_threshold",
    "threshold_schedule",
    "lowpass_init",
    "dore_step",
    "st_reconstruct",
    "mask_array",
]


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 100
    alpha: float = 20.0
    schedule: str = "linear"  # "linear" | "exponential"
    lambda_min: float = 0.0
    lambda_max: float | None = None  # None: taken from the first filled estimate
    dore: bool = True
    restrict_orientation: bool = True

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InvalidArgument(f"iterations must be >= 1, got {self.iterations!r}")
        if not self.alpha > 0:
            raise InvalidArgument(f"alpha must be > 0, got {self.alpha!r}")
        if self.schedule not in ("linear", "exponential"):
            raise InvalidArgument(f"unknown schedule {self.schedule!r}")
        if self.lambda_min < 0:
            raise InvalidArgument("lambda_min must be >= 0")
        if self.lambda_max is not None and self.lambda_max < 0:
            raise InvalidArgument("lambda_max must be >= 0")


def mask_array(mask) -> np.ndarray:
    """Accept a LineMask or any 0/1 array and return a float array."""
    arr = getattr(mask, "array", mask)
    return np.asarray(arr, dtype=np.float64)


def hard_threshold(coeffs: np.ndarray, lam: float) -> np.ndarray:
    """Zero every directional coefficient with ``|c| <= lam``.

    Channel 0 (lowpass) is passed through untouched.
    """
    if lam < 0:
        raise InvalidArgument(f"threshold must be >= 0, got {lam!r}")
    out = np.array(coeffs, copy=True)
    if lam == 0:
        return out
    directional = out[..., 1:, :, :]
    directional[np.abs(directional) <= lam] = 0.0
    return out


def threshold_schedule(k: int, cfg: SolverConfig, lambda_max):
    """Threshold at iteration ``k``; ``lambda_max`` may be an array."""
    K = cfg.iterations
    if not 0 <= k < K:
        raise InvalidArgument(f"iteration {k} outside [0, {K})")
    if K == 1:
        return np.full(np.shape(lambda_max), cfg.lambda_min) if np.ndim(lambda_max) else cfg.lambda_min
    if cfg.schedule == "linear":
        frac = k / (K - 1)
        return lambda_max * (1.0 - frac) + cfg.lambda_min * frac
    value = lambda_max * math.exp(-cfg.alpha * k / K)
    return np.maximum(value, cfg.lambda_min) if np.ndim(value) else max(value, cfg.lambda_min)


def lowpass_init(sys: ShearletSystem, measured: np.ndarray, spacing: int) -> np.ndarray:
    """Blurred initial estimate from the decimated canvas.

    Keeps only the frequencies answered by the lowpass filter alone, and scales
    by ``spacing`` to undo the loss of mean level from keeping one row in
    ``spacing``.  The result has no directional content at all.
    """
    measured = np.asarray(measured, dtype=np.float64)
    if measured.shape[-2:] != sys.shape:
        raise InvalidArgument(f"measured {measured.shape} does not match system {sys.shape}")
    if int(spacing) != spacing or spacing < 1:
        raise InvalidArgument(f"spacing must be a positive integer, got {spacing!r}")
    band = sys.lowpass_band[:, : sys.width // 2 + 1]
    spec = np.fft.rfft2(measured) * band
    return spacing * np.fft.irfft2(spec, s=sys.shape)


def _sum_hw(a: np.ndarray) -> np.ndarray:
    return np.sum(a, axis=(-2, -1), keepdims=True)


def _residual(w: np.ndarray, mask: np.ndarray, measured: np.ndarray) -> np.ndarray:
    return mask * w - mask * measured


def _line_search(r_a: np.ndarray, r_b: np.ndarray) -> np.ndarray:
    """Per-image step minimising ||r_a + s (r_a - r_b)||."""
    delta = r_a - r_b
    denom = _sum_hw(delta * delta)
    safe = np.where(denom < 1e-20, 1.0, denom)
    return np.where(denom < 1e-20, 0.0, -_sum_hw(r_a * delta) / safe)


def dore_step(z, x_prev, x_prev2, mask, measured) -> np.ndarray:
    """Double overrelaxation of the plain update ``z``.

    Returns the doubly extrapolated point when it does not increase the
    masked residual relative to ``z``, otherwise ``z`` itself.  Leading axes
    are independent images; the decision is made per image.
    """
    z = np.asarray(z, dtype=np.float64)
    m = mask_array(mask)
    measured = np.asarray(measured, dtype=np.float64)
    r_z = _residual(z, m, measured)
    a = _line_search(r_z, _residual(x_prev, m, measured))
    u = z + a * (z - x_prev)
    r_u = _residual(u, m, measured)
    b = _line_search(r_u, _residual(x_prev2, m, measured))
    v = u + b * (u - x_prev2)
    r_v = _residual(v, m, measured)
    accept = _sum_hw(r_v * r_v) <= _sum_hw(r_z * r_z)
    return np.where(accept, v, z)


def _row_spacing(m: np.ndarray) -> int:
    rows = np.flatnonzero(m.reshape(-1, *m.shape[-2:]).any(axis=(0, 2)))
    if rows.size == 0:
        raise InvalidArgument("mask has no active rows")
    if rows.size == 1:
        return m.shape[-2]
    gaps = np.diff(rows)
    return int(gaps[0]) if np.all(gaps == gaps[0]) else max(1, round(m.shape[-2] / rows.size))


def st_reconstruct(
    sys: ShearletSystem,
    measured: np.ndarray,
    mask,
    cfg: SolverConfig = SolverConfig(),
    *,
    x0: np.ndarray | None = None,
    callback: Callable[[int, float, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Inpaint the unknown rows of ``measured`` (shape ``(..., H, W)``).

    Leading axes are solved independently but in one vectorised pass; the
    mask must broadcast against ``measured``.  ``callback(k, lam, residual)``
    is invoked after every iteration with the masked residual norm of the new
    iterate (a float for a single image, an array for a batch).
    """
    measured = np.asarray(measured, dtype=np.float64)
    m = mask_array(mask)
    if measured.shape[-2:] != sys.shape or m.shape[-2:] != sys.shape:
        raise InvalidArgument(
            f"measured {measured.shape} / mask {m.shape} do not match system {sys.shape}"
        )
    try:
        m = np.broadcast_to(m, measured.shape)
    except ValueError as exc:
        raise InvalidArgument(f"mask {m.shape} does not broadcast to {measured.shape}") from exc
    spacing = _row_spacing(m)
    known = m * measured
    if x0 is None:
        x0 = lowpass_init(sys, known, spacing)

    def fill(x):
        return known + (1.0 - m) * x

    lam_max = cfg.lambda_max
    if lam_max is None:
        # the largest directional response of the (orientation-restricted)
        # filled start; per image so a batch behaves like separate solves
        start = fill(x0)
        if cfg.restrict_orientation:
            start = project_admissible(sys, start)
        coeffs = analysis(sys, start)[..., 1:, :, :]
        lam_max = np.max(np.abs(coeffs), axis=(-3, -2, -1))
    lam_img = np.asarray(lam_max, dtype=np.float64)[..., None, None, None]

    x_prev2 = x0
    x = x0
    for k in range(cfg.iterations):
        lam = threshold_schedule(k, cfg, lam_img)
        z = synthesis(sys, _threshold_batch(analysis(sys, fill(x)), lam))
        if cfg.restrict_orientation:
            z = project_admissible(sys, z)
        x_new = dore_step(z, x, x_prev2, m, measured) if cfg.dore else z
        x_prev2, x = x, x_new
        if callback is not None:
            r = _residual(x, m, measured)
            norm = np.sqrt(np.sum(r * r, axis=(-2, -1)))
            lam_out = np.broadcast_to(lam, lam_img.shape).reshape(lam_img.shape[:-3])
            if norm.ndim == 0:
                callback(k, float(lam_out), float(norm))
            else:
                callback(k, lam_out, norm)
    return fill(x)


def _threshold_batch(coeffs: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """hard_threshold with a per-image threshold broadcast over channels."""
    out = coeffs
    directional = out[..., 1:, :, :]
    directional[np.abs(directional) <= lam] = 0.0
    return out
