"""Brute-force renderer for synthetic Lambertian scenes.

A scene is a fronto-parallel textured plane seen by a row of pinhole cameras
spaced uniformly along the horizontal axis.  Every pixel value is the box
average of the texture over the pixel footprint, estimated with
``supersample`` point samples.  Nothing here uses the shearing or shearlet
code, which is what makes it usable as ground truth for them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lightfield import LightField3D

__all__ = ["CosineTexture", "random_texture", "render_epi", "render_planar_lightfield"]


@dataclass(frozen=True, eq=False)
class CosineTexture:
    """``offset + scale * sum_k a_k cos(2 pi f_k x + p_k)``; ``f`` in cycles/px."""

    freqs: np.ndarray
    phases: np.ndarray
    amps: np.ndarray
    offset: float = 0.5
    scale: float = 0.25

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        arg = 2.0 * np.pi * np.multiply.outer(x, self.freqs) + self.phases
        return self.offset + self.scale * np.cos(arg) @ self.amps


def random_texture(rng, terms: int = 30, f_max: float = 0.08) -> CosineTexture:
    """Smooth random 1D texture band-limited to ``f_max`` cycles per pixel."""
    rng = np.random.default_rng(rng)
    return CosineTexture(
        freqs=rng.uniform(0.0, f_max, terms),
        phases=rng.uniform(0.0, 2.0 * np.pi, terms),
        amps=rng.normal(size=terms) / np.sqrt(terms),
    )


def _pixel_offsets(supersample: int) -> np.ndarray:
    return (np.arange(supersample) + 0.5) / supersample - 0.5


def render_epi(texture, rows: int, width: int, slope: float, supersample: int = 8) -> np.ndarray:
    """EPI of ``rows`` x ``width`` whose row ``r`` shows ``texture`` moved by ``slope * r``."""
    xs = np.arange(width)[:, None] + _pixel_offsets(supersample)[None, :]
    out = np.empty((rows, width))
    for r in range(rows):
        out[r] = texture(xs - slope * r).mean(axis=1)
    return out


def render_planar_lightfield(
    textures,
    views: int,
    width: int,
    disparity: float,
    focal: float = 500.0,
    depth: float = 10.0,
    supersample: int = 8,
) -> LightField3D:
    """Render ``views`` cameras looking at a textured plane.

    ``textures[row][channel]`` is the texture of one scanline and colour
    channel, parameterised by plane coordinate in pixel units at the
    reference camera.  Adjacent cameras are spaced so that the plane moves
    by ``disparity`` pixels per view.
    """
    height = len(textures)
    baseline = disparity * depth / focal
    cx = (width - 1) / 2.0
    xs = np.arange(width)[:, None] + _pixel_offsets(supersample)[None, :]
    lf = np.empty((views, height, width, 3))
    for v in range(views):
        # camera v sits at -v * baseline; cast each sub-pixel ray to the plane
        centre = -v * baseline
        world_x = (xs - cx) * depth / focal + centre
        plane_px = world_x * focal / depth + cx
        for r in range(height):
            for c in range(3):
                lf[v, r, :, c] = textures[r][c](plane_px).mean(axis=1)
    return LightField3D(lf)
