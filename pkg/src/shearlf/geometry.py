"""Mapping EPIs onto the fixed-height processing canvas and back.

An EPI with ``n`` views is placed on a ``canvas_h``-row canvas with one view
every ``spacing`` rows, starting at row ``top``.  View ``i`` is shifted by
``-i * phi`` pixels so that a scene point with disparity ``d`` traces a line
of slope ``(d - phi) / spacing`` pixels per row; for ``phi = d_min`` and
``d_range <= spacing`` every slope lands in ``[0, 1]``.

Canvases are ``(..., H, W)`` arrays; a colour EPI becomes ``(3, H, W)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy import ndimage

from .errors import DisparityBudgetError, InvalidArgument
from .lightfield import DisparityConfig

__all__ = [
    "ShearedEpi",
    "LineMask",
    "choose_phi",
    "preshear_pad",
    "support_mask",
    "default_margin",
    "border_crop",
    "random_crop",
    "make_input_mask",
    "make_eval_mask",
    "decimate",
    "postshear",
    "subpixel_shift",
    "CANVAS_HEIGHT",
    "TOP_ROW",
]

CANVAS_HEIGHT = 128
TOP_ROW = 16
ALIGN = 16


def _ceil_to(v: int, step: int) -> int:
    return -(-v // step) * step


@dataclass(frozen=True, eq=False)
class ShearedEpi:
    canvas: np.ndarray  # (..., H, W)
    line_rows: tuple[int, ...]
    spacing: int  # rows between adjacent lines on this canvas
    phi: float  # horizontal shift per view step
    view_spacing: int  # rows between adjacent views at pre-shear time
    pad_left: int
    pad_right: int
    crop_offsets: tuple[int, int, int]  # (cropped left, cropped right, top row)
    source_width: int

    def __post_init__(self):
        rows = tuple(int(r) for r in self.line_rows)
        object.__setattr__(self, "line_rows", rows)
        if len(rows) > 1 and any(b - a != self.spacing for a, b in zip(rows, rows[1:])):
            raise InvalidArgument(f"line rows {rows} are not spaced by {self.spacing}")

    @property
    def height(self) -> int:
        return self.canvas.shape[-2]

    @property
    def width(self) -> int:
        return self.canvas.shape[-1]

    @property
    def top(self) -> int:
        return self.crop_offsets[2]


@dataclass(frozen=True, eq=False)
class LineMask:
    array: np.ndarray  # (H, W) of 0.0 / 1.0
    active_rows: tuple[int, ...]

    @classmethod
    def from_rows(cls, shape: tuple[int, int], rows) -> "LineMask":
        rows = tuple(sorted(int(r) for r in rows))
        arr = np.zeros(shape)
        if rows:
            if rows[0] < 0 or rows[-1] >= shape[0]:
                raise InvalidArgument(f"rows {rows} outside a {shape[0]}-row canvas")
            arr[list(rows), :] = 1.0
        arr.setflags(write=False)
        return cls(arr, rows)


def choose_phi(d: DisparityConfig, budget: float) -> tuple[float, tuple[float, float]]:
    """Shift per view step and the admissible interval it was chosen from."""
    if d.d_range > budget:
        raise DisparityBudgetError(
            f"disparity range {d.d_range:g} exceeds the budget {budget:g}"
        )
    low = d.d_min - (budget - d.d_range)
    return float(d.d_min), (float(low), float(d.d_min))


def subpixel_shift(rows: np.ndarray, shifts) -> np.ndarray:
    """Shift each row of ``rows`` (..., n, W) right by ``shifts[i]`` pixels.

    Cubic-spline interpolation; samples from outside the row are zero.
    """
    rows = np.asarray(rows, dtype=np.float64)
    out = np.empty_like(rows)
    shifts = np.broadcast_to(np.asarray(shifts, dtype=np.float64), rows.shape[-2:-1])
    for i, s in enumerate(shifts):
        src = rows[..., i, :]
        if s == int(s):
            out[..., i, :] = 0.0
            k = int(s)
            w = src.shape[-1]
            if abs(k) < w:
                if k >= 0:
                    out[..., i, k:] = src[..., : w - k]
                else:
                    out[..., i, : w + k] = src[..., -k:]
            continue
        sh = [0.0] * (src.ndim - 1) + [s]
        out[..., i, :] = ndimage.shift(src, sh, order=3, mode="grid-constant", cval=0.0)
    return out


def _as_rows(epi) -> tuple[np.ndarray, bool]:
    """EPI pixels as (..., n, m); remembers whether a colour axis was moved."""
    arr = np.asarray(getattr(epi, "pixels", epi), dtype=np.float64)
    if arr.ndim == 3:
        return np.moveaxis(arr, -1, 0), True
    if arr.ndim == 2:
        return arr, False
    raise InvalidArgument(f"EPI must be (n, m) or (n, m, C), got {arr.shape}")


def preshear_pad(
    epi,
    phi: float,
    spacing: int,
    canvas_h: int = CANVAS_HEIGHT,
    top: int = TOP_ROW,
    margin: int = 0,
) -> ShearedEpi:
    """Shear the views of ``epi`` by ``phi`` per view and lay them on the canvas.

    ``margin`` adds that many extra zero columns on both sides before the
    width is rounded up to a multiple of 16.
    """
    rows, _ = _as_rows(epi)
    n, m = rows.shape[-2:]
    if spacing < 1 or top < 0 or margin < 0:
        raise InvalidArgument("spacing must be >= 1, top and margin >= 0")
    if canvas_h % ALIGN:
        raise InvalidArgument(f"canvas height {canvas_h} is not a multiple of {ALIGN}")
    if top + spacing * (n - 1) >= canvas_h:
        raise InvalidArgument(
            f"{n} views at spacing {spacing} from row {top} do not fit {canvas_h} rows"
        )
    shear = math.ceil((n - 1) * abs(phi) - 1e-9)
    width = _ceil_to(m + shear + 2 * margin, ALIGN)
    extra = width - m - shear - 2 * margin
    # the shear pad goes where the content moves: right for phi < 0
    if phi < 0:
        pad_left, pad_right = extra // 2, shear + extra - extra // 2
    else:
        pad_left, pad_right = shear + extra // 2, extra - extra // 2
    pad_left += margin
    pad_right += margin
    padded = np.zeros(rows.shape[:-1] + (width,))
    padded[..., pad_left : pad_left + m] = rows
    sheared = subpixel_shift(padded, -phi * np.arange(n))
    canvas = np.zeros(rows.shape[:-2] + (canvas_h, width))
    line_rows = tuple(top + spacing * i for i in range(n))
    canvas[..., list(line_rows), :] = sheared
    return ShearedEpi(
        canvas=canvas,
        line_rows=line_rows,
        spacing=spacing,
        phi=float(phi),
        view_spacing=spacing,
        pad_left=pad_left,
        pad_right=pad_right,
        crop_offsets=(0, 0, top),
        source_width=m,
    )


def support_mask(se: ShearedEpi, tol: float = 1e-3) -> np.ndarray:
    """``(H, W)`` 0/1 array: line rows, restricted to the columns that hold
    view content (padding columns, and columns whose interpolated value
    leans on the padding by more than ``tol``, are excluded)."""
    n = len(se.line_rows)
    views = (np.asarray(se.line_rows) - se.top) // se.view_spacing
    left, right, _ = se.crop_offsets
    full = left + se.width + right
    ones = np.zeros((n, full))
    ones[:, se.pad_left : se.pad_left + se.source_width] = 1.0
    ind = subpixel_shift(ones, -se.phi * views)[:, left : left + se.width]
    out = np.zeros((se.height, se.width))
    out[list(se.line_rows)] = np.abs(ind - 1.0) < tol
    return out


def default_margin(se: ShearedEpi) -> int:
    """Smallest 16-aligned margin that removes every padded column."""
    return _ceil_to(max(se.pad_left, se.pad_right), ALIGN)


def border_crop(se: ShearedEpi, margin: int | None = None) -> ShearedEpi:
    if margin is None:
        margin = default_margin(se)
    if margin < 0 or 2 * margin >= se.width:
        raise InvalidArgument(f"margin {margin} too large for width {se.width}")
    if (se.width - 2 * margin) % ALIGN:
        raise InvalidArgument(f"cropped width {se.width - 2 * margin} not a multiple of {ALIGN}")
    if margin == 0:
        return se
    left, right, top = se.crop_offsets
    return replace(
        se,
        canvas=se.canvas[..., margin : se.width - margin].copy(),
        crop_offsets=(left + margin, right + margin, top),
    )


def random_crop(se: ShearedEpi, width: int, rng) -> ShearedEpi:
    """Full-height crop of ``width`` columns at a uniform random offset."""
    if width > se.width or width < 1:
        raise InvalidArgument(f"crop width {width} outside [1, {se.width}]")
    if width % ALIGN:
        raise InvalidArgument(f"crop width {width} not a multiple of {ALIGN}")
    rng = np.random.default_rng(rng)
    off = int(rng.integers(0, se.width - width + 1))
    left, right, top = se.crop_offsets
    return replace(
        se,
        canvas=se.canvas[..., off : off + width].copy(),
        crop_offsets=(left + off, right + se.width - width - off, top),
    )


def make_input_mask(se: ShearedEpi) -> LineMask:
    """Known rows: all three lines at inference, first/middle/last in training."""
    rows = se.line_rows
    shape = (se.height, se.width)
    if len(rows) == 3:
        return LineMask.from_rows(shape, rows)
    if len(rows) >= 5 and (len(rows) - 1) % 4 == 0:
        return LineMask.from_rows(shape, (rows[0], rows[len(rows) // 2], rows[-1]))
    raise InvalidArgument(f"{len(rows)} lines have no usable first/middle/last split")


def make_eval_mask(se: ShearedEpi) -> LineMask:
    return LineMask.from_rows((se.height, se.width), se.line_rows)


def decimate(se: ShearedEpi, mask: LineMask) -> ShearedEpi:
    if mask.array.shape != (se.height, se.width):
        raise InvalidArgument(f"mask {mask.array.shape} does not match canvas {se.canvas.shape}")
    rows = mask.active_rows
    if not set(rows) <= set(se.line_rows):
        raise InvalidArgument("mask selects rows that carry no line")
    spacing = rows[1] - rows[0] if len(rows) > 1 else se.spacing
    return replace(se, canvas=se.canvas * mask.array, line_rows=rows, spacing=spacing)


def postshear(dense: np.ndarray, se: ShearedEpi, tau: int | None = None) -> np.ndarray:
    """Undo the pre-shear on a dense canvas.

    Returns the ``(..., views, source_width)`` rows at unit spacing between
    the first and last line, i.e. one row per reconstructed view.
    """
    dense = np.asarray(dense, dtype=np.float64)
    if dense.shape[-2:] != (se.height, se.width):
        raise InvalidArgument(f"dense canvas {dense.shape} does not match metadata {se.canvas.shape}")
    if tau is not None and tau != se.spacing:
        raise InvalidArgument(f"line spacing {se.spacing} does not match tau {tau}")
    first, last = se.line_rows[0], se.line_rows[-1]
    rows = dense[..., first : last + 1, :]
    left, right, top = se.crop_offsets
    full = np.zeros(rows.shape[:-1] + (left + se.width + right,))
    full[..., left : left + se.width] = rows
    shifts = se.phi * (np.arange(first, last + 1) - top) / se.view_spacing
    back = subpixel_shift(full, shifts)
    return back[..., se.pad_left : se.pad_left + se.source_width]
