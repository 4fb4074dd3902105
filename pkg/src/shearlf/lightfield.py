"""Horizontal-parallax light fields, their EPIs, and view-level evaluation.

A light field is stored as one array of shape ``(n, rows, cols, 3)``; an EPI
for scanline ``i`` is the ``(n, cols, 3)`` slice ``views[:, i]``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from pathlib import Path
import re

import numpy as np
from PIL import Image

from .errors import ConsistencyError, DataError, InvalidArgument

__all__ = [
    "LightField3D",
    "Epi",
    "DisparityConfig",
    "dense_view_count",
    "extract_epi",
    "extract_all",
    "assemble_lf",
    "split_sub_sslf",
    "select_views",
    "merge_sub_dslf",
    "psnr",
    "evaluate",
    "per_view_psnr",
    "load_lightfield",
    "save_lightfield",
]


@dataclass(frozen=True, eq=False)
class LightField3D:
    views: np.ndarray  # (n, rows, cols, 3)

    def __post_init__(self):
        v = np.asarray(self.views)
        if v.ndim != 4 or v.shape[-1] != 3 or min(v.shape) < 1:
            raise InvalidArgument(f"views must have shape (n, rows, cols, 3), got {v.shape}")
        if v.dtype not in (np.float32, np.float64):
            v = v.astype(np.float64)
        object.__setattr__(self, "views", v)

    @property
    def n(self) -> int:
        return self.views.shape[0]

    @property
    def height(self) -> int:
        return self.views.shape[1]

    @property
    def width(self) -> int:
        return self.views.shape[2]


@dataclass(frozen=True, eq=False)
class Epi:
    pixels: np.ndarray  # (n, cols, 3); row i is the scanline of view i

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[-1] != 3:
            raise InvalidArgument(f"EPI pixels must have shape (n, cols, 3), got {p.shape}")
        object.__setattr__(self, "pixels", p)

    @property
    def n(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class DisparityConfig:
    d_min: float
    d_max: float

    def __post_init__(self):
        if not (math.isfinite(self.d_min) and math.isfinite(self.d_max)):
            raise InvalidArgument("disparities must be finite")
        if self.d_max < self.d_min:
            raise InvalidArgument(f"d_max {self.d_max} < d_min {self.d_min}")

    @property
    def d_range(self) -> float:
        return self.d_max - self.d_min


def dense_view_count(n: int, tau: int) -> int:
    if n < 1 or tau < 1:
        raise InvalidArgument(f"n and tau must be >= 1, got n={n}, tau={tau}")
    return (n - 1) * tau + 1


def extract_epi(lf: LightField3D, row: int) -> Epi:
    if not 0 <= row < lf.height:
        raise IndexError(f"row {row} outside [0, {lf.height})")
    return Epi(lf.views[:, row].copy())


def extract_all(lf: LightField3D) -> list[Epi]:
    return [extract_epi(lf, i) for i in range(lf.height)]


def assemble_lf(epis: list[Epi]) -> LightField3D:
    if not epis:
        raise InvalidArgument("no EPIs to assemble")
    shape = epis[0].pixels.shape
    for e in epis:
        if e.pixels.shape != shape:
            raise InvalidArgument(f"EPI shape {e.pixels.shape} differs from {shape}")
    return LightField3D(np.stack([e.pixels for e in epis], axis=1))


def split_sub_sslf(lf_or_n) -> list[tuple[int, int, int]]:
    """View-index triples of the overlapping 3-view sub light fields."""
    n = lf_or_n if isinstance(lf_or_n, (int, np.integer)) else lf_or_n.n
    if n < 3 or n % 2 == 0:
        raise InvalidArgument(f"need an odd view count >= 3, got {n}")
    return [(2 * i, 2 * i + 1, 2 * i + 2) for i in range(n // 2)]


def select_views(lf: LightField3D, indices) -> LightField3D:
    return LightField3D(lf.views[list(indices)])


def merge_sub_dslf(sub_results: list[LightField3D], tau: int, atol: float = 1e-6) -> LightField3D:
    if not sub_results:
        raise InvalidArgument("no sub light fields to merge")
    expected = 2 * tau + 1
    for i, sub in enumerate(sub_results):
        if sub.n != expected:
            raise InvalidArgument(f"sub result {i} has {sub.n} views, expected {expected}")
    parts = [sub_results[0].views]
    for i in range(1, len(sub_results)):
        prev_last = sub_results[i - 1].views[-1]
        first = sub_results[i].views[0]
        if prev_last.shape != first.shape:
            raise InvalidArgument("sub results have different view sizes")
        gap = float(np.max(np.abs(prev_last - first)))
        if gap > atol:
            raise ConsistencyError(f"shared view between parts {i - 1} and {i} differs by {gap:g}")
        parts.append(sub_results[i].views[1:])
    return LightField3D(np.concatenate(parts, axis=0))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def per_view_psnr(dslf: LightField3D, gt: LightField3D, input_view_indices=()) -> dict[int, float]:
    if dslf.views.shape != gt.views.shape:
        raise InvalidArgument(f"shape mismatch {dslf.views.shape} vs {gt.views.shape}")
    skip = set(int(i) for i in input_view_indices)
    return {i: psnr(dslf.views[i], gt.views[i]) for i in range(gt.n) if i not in skip}


def evaluate(dslf: LightField3D, gt: LightField3D, input_view_indices=()) -> dict[str, float]:
    """Minimum and mean PSNR over the synthesized (non-input) views."""
    scores = per_view_psnr(dslf, gt, input_view_indices)
    if not scores:
        raise InvalidArgument("every view is excluded from evaluation")
    values = list(scores.values())
    # +inf propagates naturally through min and the mean
    return {"min_psnr": min(values), "avg_psnr": float(np.mean(values))}


# --------------------------------------------------------------------------
# image directories

_VIEW_RE = re.compile(r"^view_(\d{4,})\.(png|ppm)$", re.IGNORECASE)


def load_lightfield(directory) -> LightField3D:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    files = sorted(
        (int(m.group(1)), p)
        for p in directory.iterdir()
        if (m := _VIEW_RE.match(p.name))
    )
    if not files:
        raise DataError(f"no view_NNNN.png/.ppm files in {directory}")
    views = []
    for _, path in files:
        try:
            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        if views and arr.shape != views[0].shape:
            raise DataError(f"{path.name} has size {arr.shape[:2]}, expected {views[0].shape[:2]}")
        views.append(arr)
    return LightField3D(np.stack(views))


def save_lightfield(lf: LightField3D, directory, fmt: str = "png") -> list[Path]:
    if fmt not in ("png", "ppm"):
        raise InvalidArgument(f"unsupported format {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for i, view in enumerate(lf.views):
        img = np.clip(np.rint(np.clip(view, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
        path = directory / f"view_{i:04d}.{fmt}"
        Image.fromarray(img, mode="RGB").save(path)
        out.append(path)
    return out
