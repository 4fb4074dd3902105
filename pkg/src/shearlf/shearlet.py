"""Single-cone universal shearlet system built directly in the frequency domain.

The system tiles the frequency plane of an ``H x W`` canvas with one lowpass
window and, for every dyadic scale ``j``, ``2**(j+1) + 1`` directional wedges
whose nominal slopes are spread uniformly over ``[0, 1]`` pixels per row.
Windows are real, even and square-summable to one, so the analysis operator
is a Parseval frame and the synthesis operator is its adjoint (and inverse).

Coefficient stacks are stored channels-first, ``(eta, H, W)``, which is the
layout the network consumes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import InvalidArgument

__all__ = [
    "FilterInfo",
    "ShearletSystem",
    "scale_count",
    "shearlet_count",
    "build_system",
    "analysis",
    "synthesis",
    "project_admissible",
]


def scale_count(tau: int) -> int:
    """Number of scales needed for a sampling interval: ``ceil(log2(tau))``."""
    if int(tau) != tau or tau < 2:
        raise InvalidArgument(f"tau must be an integer >= 2, got {tau!r}")
    return (int(tau) - 1).bit_length()


def shearlet_count(xi: int) -> int:
    """Total number of filters (lowpass included) of a ``xi``-scale system."""
    if int(xi) != xi or xi < 1:
        raise InvalidArgument(f"xi must be an integer >= 1, got {xi!r}")
    return 2 ** (xi + 1) + xi - 1


@dataclass(frozen=True)
class FilterInfo:
    kind: str  # "lowpass" or "directional"
    scale: int  # -1 for the lowpass
    shear: int  # 0 for the lowpass
    slope: float | None  # nominal line slope in px/row, None for the lowpass


@dataclass(frozen=True, eq=False)
class ShearletSystem:
    height: int
    width: int
    xi: int
    gamma: int
    filters: np.ndarray = field(repr=False)  # (eta, H, W), real and even
    layout: tuple[FilterInfo, ...] = field(repr=False)
    admissible: np.ndarray = field(repr=False)  # (H, W) in [0, 1]

    @property
    def eta(self) -> int:
        return self.filters.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @cached_property
    def _half(self) -> np.ndarray:
        # columns 0..W//2 of every filter: what rfft2 / irfft2 need
        half = np.ascontiguousarray(self.filters[..., : self.width // 2 + 1])
        half.setflags(write=False)
        return half

    @cached_property
    def _half32(self) -> np.ndarray:
        half = self._half.astype(np.float32)
        half.setflags(write=False)
        return half

    @cached_property
    def lowpass_band(self) -> np.ndarray:
        """Boolean frequency mask where only the lowpass filter responds."""
        directional = np.sum(self.filters[1:] ** 2, axis=0)
        return directional == 0.0

    @cached_property
    def _admissible_half(self) -> np.ndarray:
        half = np.ascontiguousarray(self.admissible[:, : self.width // 2 + 1])
        half.setflags(write=False)
        return half

    def half_filters(self, dtype=np.float64) -> np.ndarray:
        return self._half32 if np.dtype(dtype) == np.float32 else self._half

    def indices_at_scale(self, j: int) -> list[int]:
        return [t for t, info in enumerate(self.layout) if info.scale == j]


# --------------------------------------------------------------------------
# window construction


def _meyer(x: np.ndarray) -> np.ndarray:
    """Polynomial transition rising from 0 at x<=0 to 1 at x>=1."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def _rise(x: np.ndarray) -> np.ndarray:
    return np.sin(0.5 * np.pi * _meyer(x))


def _fall(x: np.ndarray) -> np.ndarray:
    return np.cos(0.5 * np.pi * _meyer(x))


def _lowpass_profile(r: np.ndarray, edge: float) -> np.ndarray:
    """1 below edge/2, 0 above edge, smooth in between."""
    return _fall((r - 0.5 * edge) / (0.5 * edge))


def _radial_windows(r: np.ndarray, xi: int) -> list[np.ndarray]:
    """Lowpass followed by one band per scale; squares sum to one."""
    edges = [2.0 ** (j - xi) for j in range(xi)]
    cumulative = [_lowpass_profile(r, e) for e in edges]
    bands = [cumulative[0]]
    for j in range(xi):
        outer = cumulative[j + 1] ** 2 if j + 1 < xi else 1.0
        bands.append(np.sqrt(np.clip(outer - cumulative[j] ** 2, 0.0, None)))
    return bands


def _orientation(nu_r: np.ndarray, nu_x: np.ndarray) -> np.ndarray:
    """Periodic orientation coordinate on [-1, 3).

    Inside the cone |nu_r| <= |nu_x| it equals the slope -nu_r/nu_x of the
    lines producing that frequency; the other cone is glued on continuously.
    """
    ar, ax = np.abs(nu_r), np.abs(nu_x)
    with np.errstate(divide="ignore", invalid="ignore"):
        cone = np.where(ax > 0, -nu_r / np.where(ax > 0, nu_x, 1.0), 0.0)
        other = np.where(ar > 0, 2.0 + nu_x / np.where(ar > 0, nu_r, 1.0), 2.0)
    return np.where(ar <= ax, cone, other)


def _angular_windows(p: np.ndarray, j: int) -> list[np.ndarray]:
    """2**(j+1)+1 windows centred on slopes 0, h, ..., 1 with h = 2**-(j+1).

    The two end windows also absorb the orientations outside [0, 1]; they
    hand over to each other on [2, 3].
    """
    count = 2 ** (j + 1) + 1
    h = 1.0 / (count - 1)
    centres = [i / (count - 1) for i in range(count)]
    windows = []
    for i, c in enumerate(centres):
        w = np.zeros_like(p)
        up = (p >= c - h) & (p < c)
        down = (p >= c) & (p <= c + h)
        if i > 0:
            w[up] = _rise((p[up] - (c - h)) / h)
        if i < count - 1:
            w[down] = _fall((p[down] - c) / h)
        if i == 0:
            w[p < 0.0] = 0.0
            wrap = (p >= -1.0) & (p < 0.0)
            w[wrap] = 1.0
            hand = (p >= 2.0) & (p < 3.0)
            w[hand] = _rise(p[hand] - 2.0)
        if i == count - 1:
            flat = (p >= 1.0) & (p < 2.0)
            w[flat] = 1.0
            hand = (p >= 2.0) & (p < 3.0)
            w[hand] = _fall(p[hand] - 2.0)
        windows.append(w)
    return windows


def _admissible_weights(p: np.ndarray, passband: np.ndarray) -> np.ndarray:
    """Binary mask: 1 on slopes [0, 1] and on the exact lowpass passband."""
    cone = (p >= 0.0) & (p <= 1.0)
    return (cone | passband).astype(float)


def _reflect(a: np.ndarray) -> np.ndarray:
    """a(-k) on the DFT grid."""
    return np.roll(a[..., ::-1, ::-1], shift=(1, 1), axis=(-2, -1))


def build_system(height: int, width: int, xi: int, gamma: int = 127) -> ShearletSystem:
    """Build a Parseval shearlet system on an ``height x width`` canvas.

    ``gamma`` is the nominal filter support (odd); it is validated and kept
    for bookkeeping, the windows themselves are sampled at canvas resolution.
    """
    if int(xi) != xi or xi < 1:
        raise InvalidArgument(f"xi must be >= 1, got {xi!r}")
    if int(gamma) != gamma or gamma < 3 or gamma % 2 == 0:
        raise InvalidArgument(f"gamma must be an odd integer >= 3, got {gamma!r}")
    minimum = max(64, 2 ** (xi + 2))
    if height < minimum or width < minimum:
        raise InvalidArgument(
            f"canvas {height}x{width} too small for {xi} scales (need >= {minimum})"
        )

    nu_r = 2.0 * np.fft.fftfreq(height)[:, None]
    nu_x = 2.0 * np.fft.fftfreq(width)[None, :]
    nu_r, nu_x = np.broadcast_arrays(nu_r, nu_x)
    radius = np.maximum(np.abs(nu_r), np.abs(nu_x))
    orient = _orientation(nu_r, nu_x)

    radial = _radial_windows(radius, xi)
    squares = [radial[0] ** 2]
    layout = [FilterInfo("lowpass", -1, 0, None)]
    for j in range(xi):
        half = 2**j
        for k, ang in zip(range(-half, half + 1), _angular_windows(orient, j)):
            squares.append((radial[j + 1] * ang) ** 2)
            layout.append(FilterInfo("directional", j, k, (k + half) / (2 * half)))

    g = np.stack(squares)
    # even symmetry on the DFT grid (only Nyquist rows/columns need it)
    g = 0.5 * (g + _reflect(g))
    filters = np.sqrt(g)
    filters /= np.sqrt(np.sum(filters**2, axis=0))
    filters[1:, 0, 0] = 0.0
    filters[0, 0, 0] = 1.0
    filters.setflags(write=False)
    assert filters.shape[0] == shearlet_count(xi)

    admissible = _admissible_weights(orient, radial[0] >= 1.0)
    admissible = 0.5 * (admissible + _reflect(admissible))
    admissible.setflags(write=False)
    return ShearletSystem(
        int(height), int(width), int(xi), int(gamma), filters, tuple(layout), admissible
    )


# --------------------------------------------------------------------------
# transforms


def _check_image(sys: ShearletSystem, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim < 2 or image.shape[-2:] != sys.shape:
        raise InvalidArgument(f"image shape {image.shape} does not match system {sys.shape}")
    if image.dtype not in (np.float32, np.float64):
        image = image.astype(np.float64)
    return image


def analysis(sys: ShearletSystem, image: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Shearlet coefficients of ``image``: shape ``(..., eta, H, W)``.

    One forward real DFT and ``eta`` inverse real DFTs.
    """
    image = _check_image(sys, image)
    spectrum = sfft.rfft2(image, workers=workers)
    product = spectrum[..., None, :, :] * sys.half_filters(image.dtype)
    return sfft.irfft2(product, s=sys.shape, workers=workers)


def synthesis(sys: ShearletSystem, coeffs: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Adjoint of :func:`analysis`: ``eta`` forward DFTs and one inverse DFT."""
    coeffs = np.asarray(coeffs)
    if coeffs.ndim < 3 or coeffs.shape[-3:] != (sys.eta, *sys.shape):
        raise InvalidArgument(
            f"coefficient shape {coeffs.shape} does not match system {(sys.eta, *sys.shape)}"
        )
    if coeffs.dtype not in (np.float32, np.float64):
        coeffs = coeffs.astype(np.float64)
    spectra = sfft.rfft2(coeffs, workers=workers)
    combined = np.sum(spectra * sys.half_filters(coeffs.dtype), axis=-3)
    return sfft.irfft2(combined, s=sys.shape, workers=workers)


def project_admissible(sys: ShearletSystem, image: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Attenuate frequencies whose orientation lies outside slopes [0, 1].

    Inside the admissible cone (and on the lowpass band) the weight is one,
    so images made of lines with slopes in [0, 1] pass unchanged.
    """
    image = _check_image(sys, image)
    weights = sys._admissible_half.astype(image.dtype, copy=False)
    return sfft.irfft2(sfft.rfft2(image, workers=workers) * weights, s=sys.shape, workers=workers)


def scale_energy(coeffs: np.ndarray, sys: ShearletSystem) -> dict[int, float]:
    """Energy per scale (-1 for the lowpass); handy for diagnostics."""
    out: dict[int, float] = {}
    for t, info in enumerate(sys.layout):
        out[info.scale] = out.get(info.scale, 0.0) + float(np.sum(coeffs[..., t, :, :] ** 2))
    return out
