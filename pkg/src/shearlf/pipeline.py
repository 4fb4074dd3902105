"""End-to-end reconstruction of a densely-sampled light field.

The input SSLF is cut into overlapping 3-view pieces; every scanline of every
piece becomes a sheared 3-line canvas that is inpainted by the iterative
solver or the network, sheared back and stitched into the output views.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math
from pathlib import Path
import statistics
import time

import numpy as np
from PIL import Image

from .errors import InvalidArgument
from .geometry import (
    CANVAS_HEIGHT,
    TOP_ROW,
    choose_phi,
    decimate,
    make_input_mask,
    postshear,
    preshear_pad,
    support_mask,
)
from .lightfield import (
    DisparityConfig,
    LightField3D,
    dense_view_count,
    merge_sub_dslf,
    per_view_psnr,
    select_views,
    split_sub_sslf,
)
from .nn import ChannelPlan, NetParams, drst_reconstruct, init_params
from .shearlet import ShearletSystem, build_system, scale_count
from .solver import SolverConfig, st_reconstruct

__all__ = [
    "RunConfig",
    "reconstruct_dslf",
    "reconstruct_epi",
    "subsample_for_eval",
    "evaluate_against_gt",
    "cubic_resize",
    "centered_box",
    "prep_eval_data",
    "bench",
    "PAPER_TIMINGS",
    "dump_canvas",
    "dump_filters",
]


@dataclass(frozen=True)
class RunConfig:
    method: str = "st"
    tau: int = 16
    gamma: int = 127
    disparity: DisparityConfig | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    checkpoint: str | None = None
    input: str | None = None
    output: str | None = None
    seed: int = 0
    jobs: int = 1
    dump_dir: str | None = None
    margin: int = 32  # unknown columns added on each side of an inference canvas

    def __post_init__(self):
        if self.method not in ("st", "drst"):
            raise InvalidArgument(f"method must be 'st' or 'drst', got {self.method!r}")
        if int(self.tau) != self.tau or self.tau < 2:
            raise InvalidArgument(f"tau must be an integer >= 2, got {self.tau!r}")
        if TOP_ROW + 2 * self.tau >= CANVAS_HEIGHT:
            raise InvalidArgument(f"tau {self.tau} does not fit three lines on a {CANVAS_HEIGHT}-row canvas")
        if self.disparity is not None and self.disparity.d_range > self.tau:
            raise InvalidArgument(
                f"disparity range {self.disparity.d_range:g} exceeds tau = {self.tau}"
            )
        if self.jobs < 1:
            raise InvalidArgument("jobs must be >= 1")
        if self.margin < 0:
            raise InvalidArgument("margin must be >= 0")

    @property
    def xi(self) -> int:
        return scale_count(self.tau)


def reconstruct_epi(
    sys: ShearletSystem, measured: np.ndarray, mask, cfg: RunConfig, params: NetParams | None
) -> np.ndarray:
    """Inpaint one ``(C, H, W)`` canvas (colour channels solved independently)."""
    if cfg.method == "st":
        return st_reconstruct(sys, measured, mask, cfg.solver)
    if params is None:
        raise InvalidArgument("the drst method needs network parameters")
    out = drst_reconstruct(sys, params, measured).astype(np.float64)
    m = np.asarray(getattr(mask, "array", mask))
    return m * measured + (1.0 - m) * out


def _reconstruct_triple(views: np.ndarray, cfg: RunConfig, params, systems: dict, dump=None):
    """Three input views ``(3, rows, cols, 3)`` -> ``2 tau + 1`` dense views."""
    tau = cfg.tau
    phi, _ = choose_phi(cfg.disparity, tau)
    rows, cols = views.shape[1:3]

    def one_row(r):
        se = preshear_pad(views[:, r], phi, tau, CANVAS_HEIGHT, margin=cfg.margin)
        se = decimate(se, make_input_mask(se))
        # only columns that carry view content count as measurements
        known = support_mask(se)
        sys = systems[se.canvas.shape[-2:]]
        dense = reconstruct_epi(sys, se.canvas, known, cfg, params)
        if dump is not None and r == 0:
            dump(se.canvas, dense)
        return postshear(dense, se, tau)  # (3 colours, 2 tau + 1, cols)

    # all rows share one canvas size; build the system before fanning out
    probe = preshear_pad(views[:, 0, :, 0], phi, tau, CANVAS_HEIGHT, margin=cfg.margin)
    key = probe.canvas.shape[-2:]
    if key not in systems:
        systems[key] = build_system(key[0], key[1], cfg.xi, cfg.gamma)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(one_row, range(rows)))
    else:
        results = [one_row(r) for r in range(rows)]
    out = np.empty((2 * tau + 1, rows, cols, 3))
    for r, res in enumerate(results):
        out[:, r, :, :] = np.moveaxis(res, 0, -1)
    # input views pass through untouched
    out[[0, tau, 2 * tau]] = views
    return out


def _dumper(base: Path, t: int):
    def dump(measured, dense):
        dump_canvas(measured[0], base / f"triple{t:03d}_row0000_measured.png")
        dump_canvas(dense[0], base / f"triple{t:03d}_row0000_dense.png")

    return dump


def reconstruct_dslf(sslf: LightField3D, cfg: RunConfig, params: NetParams | None = None) -> LightField3D:
    if cfg.disparity is None:
        raise InvalidArgument("a disparity range is required")
    if cfg.disparity.d_range > cfg.tau:
        raise InvalidArgument(f"disparity range {cfg.disparity.d_range:g} exceeds tau = {cfg.tau}")
    if cfg.method == "drst" and params is None:
        raise InvalidArgument("the drst method needs a checkpoint")
    triples = split_sub_sslf(sslf)
    systems: dict = {}
    subs = []
    for t, idx in enumerate(triples):
        dump = _dumper(Path(cfg.dump_dir), t) if cfg.dump_dir else None
        subs.append(LightField3D(_reconstruct_triple(sslf.views[list(idx)], cfg, params, systems, dump)))
    out = merge_sub_dslf(subs, cfg.tau)
    assert out.n == dense_view_count(sslf.n, cfg.tau)
    return out


def subsample_for_eval(gt: LightField3D, delta: int) -> LightField3D:
    if int(delta) != delta or delta < 1:
        raise InvalidArgument(f"delta must be a positive integer, got {delta!r}")
    if (gt.n - 1) % delta:
        raise InvalidArgument(f"{gt.n} views cannot be subsampled at rate {delta}")
    return select_views(gt, range(0, gt.n, delta))


def evaluate_against_gt(dslf: LightField3D, gt: LightField3D, delta: int, tau: int) -> dict[int, float]:
    """PSNR of every non-input ground-truth view against its DSLF counterpart.

    Ground-truth view ``g`` sits at DSLF position ``g * tau / delta``; views
    with ``g % delta == 0`` were inputs and are skipped.
    """
    if tau % delta:
        raise InvalidArgument(f"tau {tau} is not a multiple of delta {delta}")
    step = tau // delta
    if (gt.n - 1) * step + 1 != dslf.n:
        raise InvalidArgument(
            f"{gt.n} ground-truth views at rate {delta} do not map onto {dslf.n} DSLF views"
        )
    picked = select_views(dslf, [g * step for g in range(gt.n)])
    inputs = [g for g in range(gt.n) if g % delta == 0]
    return per_view_psnr(picked, gt, inputs)


# --------------------------------------------------------------------------
# evaluation data


def _keys(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(x)
    return np.where(
        x <= 1,
        (a + 2) * x**3 - (a + 3) * x**2 + 1,
        np.where(x < 2, a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a, 0.0),
    )


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Rows of cubic weights mapping ``n_in`` samples to ``n_out``."""
    scale = n_in / n_out
    stretch = max(scale, 1.0)  # widen the kernel when shrinking (anti-aliasing)
    centres = (np.arange(n_out) + 0.5) * scale - 0.5
    support = 2.0 * stretch
    lo = np.floor(centres - support).astype(int) + 1
    taps = int(math.ceil(2 * support)) + 1
    idx = lo[:, None] + np.arange(taps)[None, :]
    w = _keys((idx - centres[:, None]) / stretch)
    w /= w.sum(axis=1, keepdims=True)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(np.arange(n_out), taps), np.clip(idx, 0, n_in - 1).ravel()), w.ravel())
    return mat


def cubic_resize(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Separable cubic resize of ``(rows, cols, ...)`` to ``size = (width, height)``."""
    width, height = size
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] == height and img.shape[1] == width:
        return img.copy()
    rows = _resize_matrix(img.shape[0], height)
    cols = _resize_matrix(img.shape[1], width)
    out = np.tensordot(rows, img, axes=(1, 0))
    out = np.tensordot(cols, out, axes=(1, 1))
    return np.swapaxes(out, 0, 1)


def centered_box(width: int, height: int, aspect=(16, 9)) -> tuple[int, int, int, int]:
    """Largest centred ``(left, top, w, h)`` box of the given aspect ratio."""
    aw, ah = aspect
    w = min(width, height * aw // ah)
    h = w * ah // aw
    return ((width - w) // 2, (height - h) // 2, w, h)


def prep_eval_data(lf: LightField3D, box, target: tuple[int, int]) -> LightField3D:
    """Crop every view to ``box = (left, top, w, h)`` and resize to ``target``."""
    left, top, w, h = box
    if left < 0 or top < 0 or w < 1 or h < 1 or left + w > lf.width or top + h > lf.height:
        raise InvalidArgument(f"crop box {box} outside {lf.width}x{lf.height} views")
    views = [cubic_resize(v[top : top + h, left : left + w], target) for v in lf.views]
    return LightField3D(np.stack(views))


# --------------------------------------------------------------------------
# timing

PAPER_TIMINGS = (
    {"geometry": "1280x13x3", "st_ms": 1529.1, "drst_ms": 640.5, "speedup": 2.4},
)


def bench(
    width: int = 1280,
    n: int = 13,
    cfg: RunConfig = RunConfig(),
    plan: ChannelPlan = ChannelPlan(),
    repeats: int = 1,
    rng=0,
) -> dict:
    """Median wall-clock per colour EPI for the solver and the network.

    The canvas is the inference canvas of a ``width``-pixel EPI (phi = 0).
    ``n`` is recorded for the report only; each colour EPI is one canvas.
    """
    if width < 16 or repeats < 1:
        raise InvalidArgument("width must be >= 16 and repeats >= 1")
    rng = np.random.default_rng(rng)
    W = -(-width // 16) * 16
    sys = build_system(CANVAS_HEIGHT, W, cfg.xi, cfg.gamma)
    rows = [TOP_ROW + cfg.tau * i for i in range(3)]
    mask = np.zeros((CANVAS_HEIGHT, W))
    mask[rows] = 1.0
    measured = rng.random((3, CANVAS_HEIGHT, W)) * mask
    params = init_params(plan, sys.eta, rng, np.float32)

    # warm-up: FFT plans, caches of the filter bank, BLAS threads
    st_reconstruct(sys, measured, mask, replace(cfg.solver, iterations=2))
    drst_reconstruct(sys, params, measured)

    def timed(fn):
        out = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            out.append(1e3 * (time.perf_counter() - t0))
        return statistics.median(out)

    st_ms = timed(lambda: st_reconstruct(sys, measured, mask, cfg.solver))
    drst_ms = timed(lambda: drst_reconstruct(sys, params, measured))
    return {
        "geometry": f"{width}x{n}x3",
        "canvas": (CANVAS_HEIGHT, W),
        "st_iterations": cfg.solver.iterations,
        "st_ms": st_ms,
        "drst_ms": drst_ms,
        "speedup": st_ms / drst_ms,
        "reference": PAPER_TIMINGS[0],
    }


# --------------------------------------------------------------------------
# debug dumps


def dump_canvas(canvas: np.ndarray, path) -> None:
    """Grayscale PNG of a canvas, values clipped to [0, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.rint(np.clip(np.asarray(canvas, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def dump_filters(sys: ShearletSystem, directory) -> list[Path]:
    """One centred magnitude image per frequency-domain filter."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for t, info in enumerate(sys.layout):
        path = directory / f"filter_{t}_j{info.scale}_k{info.shear}.png"
        dump_canvas(np.fft.fftshift(np.abs(sys.filters[t])), path)
        out.append(path)
    return out
