"""A small tensor engine with hand-written backward passes.

Only the layers of the residual encoder-decoder are provided: 3x3 / 1x1
"same" convolutions, leaky ReLU, 2x2 max pooling, nearest 2x upsampling and
channel concatenation.  Tensors are plain ``(N, C, H, W)`` numpy arrays; the
dtype of the input decides the arithmetic precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import struct
import zlib

import numpy as np

from .errors import DataError, InvalidArgument
from .shearlet import ShearletSystem, analysis, synthesis

__all__ = [
    "conv2d",
    "conv2d_backward",
    "leaky_relu",
    "leaky_relu_backward",
    "maxpool2",
    "maxpool2_backward",
    "upsample_nearest2",
    "upsample_nearest2_backward",
    "concat_channels",
    "concat_channels_backward",
    "ChannelPlan",
    "NetParams",
    "init_params",
    "param_count",
    "closed_form_count",
    "unet_forward",
    "unet_backward",
    "drst_reconstruct",
    "masked_l1_loss",
    "AdaMaxState",
    "adamax_step",
    "save_checkpoint",
    "load_checkpoint",
]

LEAK = 0.3


# --------------------------------------------------------------------------
# layers


def _check4(x: np.ndarray, name: str = "x") -> None:
    if x.ndim != 4:
        raise InvalidArgument(f"{name} must be (N, C, H, W), got shape {x.shape}")


def _pad_flat(x: np.ndarray, pad: int) -> np.ndarray:
    """Zero-pad spatially (one extra bottom row) and flatten H, W."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * pad + 1, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad : pad + h, pad : pad + w] = x
    return xp.reshape(n, c, -1)


def _taps(w: np.ndarray) -> np.ndarray:
    # (k, k, K, C) contiguous: BLAS falls back to a slow path on strided slices
    return np.ascontiguousarray(w.transpose(2, 3, 0, 1))


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stride-1 cross-correlation with zero "same" padding, plus bias."""
    _check4(x)
    if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] not in (1, 3):
        raise InvalidArgument(f"kernel must be (K, C, k, k) with k in (1, 3), got {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise InvalidArgument(f"kernel expects {w.shape[1]} channels, input has {x.shape[1]}")
    if b.shape != (w.shape[0],):
        raise InvalidArgument(f"bias shape {b.shape} does not match {w.shape[0]} outputs")
    n, _, h, wd = x.shape
    k = w.shape[2]
    if k == 1:
        y = np.matmul(np.ascontiguousarray(w[:, :, 0, 0]), x.reshape(n, x.shape[1], -1))
        return (y + b[:, None]).reshape(n, -1, h, wd)
    pad = 1
    stride = wd + 2 * pad
    flat = _pad_flat(x, pad)
    length = h * stride
    taps = _taps(w)
    y = np.zeros((n, w.shape[0], length), dtype=np.result_type(x, w))
    for dy in range(3):
        for dx in range(3):
            off = dy * stride + dx
            y += np.matmul(taps[dy, dx], flat[:, :, off : off + length])
    y += b[:, None]
    return y.reshape(n, -1, h, stride)[..., :wd]


def conv2d_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray, need_gx: bool = True):
    """Gradients ``(gx, gw, gb)`` of a :func:`conv2d` call (``gx`` is None
    when ``need_gx`` is false)."""
    n, c, h, wd = x.shape
    kout = w.shape[0]
    gb = gy.sum(axis=(0, 2, 3))
    if w.shape[2] == 1:
        xf = x.reshape(n, c, -1)
        gf = gy.reshape(n, kout, -1)
        gw = np.matmul(gf, xf.transpose(0, 2, 1)).sum(axis=0)[:, :, None, None]
        if not need_gx:
            return None, gw, gb
        gx = np.matmul(np.ascontiguousarray(w[:, :, 0, 0].T), gf).reshape(x.shape)
        return gx, gw, gb
    pad = 1
    stride = wd + 2 * pad
    length = h * stride
    flat = _pad_flat(x, pad)
    gpad = np.zeros((n, kout, h, stride), dtype=gy.dtype)
    gpad[..., :wd] = gy
    gf = gpad.reshape(n, kout, length)
    taps_t = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    gw = np.empty_like(w)
    gflat = np.zeros_like(flat)
    for dy in range(3):
        for dx in range(3):
            off = dy * stride + dx
            gw[:, :, dy, dx] = np.matmul(gf, flat[:, :, off : off + length].transpose(0, 2, 1)).sum(axis=0)
            if need_gx:
                gflat[:, :, off : off + length] += np.matmul(taps_t[dy, dx], gf)
    if not need_gx:
        return None, gw, gb
    gx = gflat.reshape(n, c, h + 2 * pad + 1, stride)[:, :, pad : pad + h, pad : pad + wd]
    return np.ascontiguousarray(gx), gw, gb


def leaky_relu(x: np.ndarray, alpha: float = LEAK) -> np.ndarray:
    return np.where(x > 0, x, alpha * x)


def leaky_relu_backward(x: np.ndarray, gy: np.ndarray, alpha: float = LEAK) -> np.ndarray:
    # slope 1 at exactly zero
    return np.where(x >= 0, gy, alpha * gy)


def maxpool2(x: np.ndarray) -> np.ndarray:
    _check4(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise InvalidArgument(f"max pooling needs even H, W; got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).max(axis=(3, 5))


def maxpool2_backward(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Route each upstream value to the first (row-major) maximum of its block."""
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    idx = blocks.reshape(n, c, h // 2, w // 2, 4).argmax(axis=-1)
    onehot = idx[..., None] == np.arange(4)
    g = np.where(onehot, gy[..., None], 0).astype(gy.dtype)
    g = g.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return g.reshape(n, c, h, w)


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    _check4(x)
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample_nearest2_backward(gy: np.ndarray) -> np.ndarray:
    n, c, h, w = gy.shape
    return gy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check4(a, "a")
    _check4(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise InvalidArgument(f"cannot concatenate {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=1)


def concat_channels_backward(gy: np.ndarray, split: int):
    return gy[:, :split], gy[:, split:]


# --------------------------------------------------------------------------
# network


@dataclass(frozen=True)
class ChannelPlan:
    """Widths of the four encoder convs and four decoder convs."""

    encoder: tuple[int, int, int, int] = (64, 128, 256, 512)
    decoder: tuple[int, int, int, int] | None = None  # None: (e3, e2, e1, e1)

    def __post_init__(self):
        enc = tuple(int(c) for c in self.encoder)
        if len(enc) != 4 or min(enc) < 1:
            raise InvalidArgument(f"encoder plan needs four positive widths, got {self.encoder}")
        dec = self.decoder
        dec = (enc[2], enc[1], enc[0], enc[0]) if dec is None else tuple(int(c) for c in dec)
        if len(dec) != 4 or min(dec) < 1:
            raise InvalidArgument(f"decoder plan needs four positive widths, got {self.decoder}")
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoder", dec)

    def layers(self, channels: int) -> list[tuple[str, int, int, int]]:
        """``(name, in, out, kernel)`` for every conv, in forward order."""
        e, d = self.encoder, self.decoder
        out = []
        prev = channels
        for i, c in enumerate(e):
            out.append((f"enc{i + 1}", prev, c, 3))
            prev = c
        skips = [e[2], e[1], e[0], 0]
        for i, c in enumerate(d):
            out.append((f"dec{i + 1}", prev, c, 3))
            prev = c + skips[i]
        out.append(("final", prev, channels, 1))
        return out


@dataclass(eq=False)
class NetParams:
    plan: ChannelPlan
    channels: int
    tensors: dict[str, np.ndarray] = field(repr=False)

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "NetParams":
        return NetParams(self.plan, self.channels, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "NetParams":
        return NetParams(self.plan, self.channels, {k: v.astype(dtype) for k, v in self.tensors.items()})


def init_params(plan: ChannelPlan, channels: int, rng=None, dtype=np.float32) -> NetParams:
    """He-uniform weights, zero biases, and a zero final 1x1 conv."""
    rng = np.random.default_rng(rng)
    tensors = {}
    for name, cin, cout, k in plan.layers(channels):
        if name == "final":
            w = np.zeros((cout, cin, k, k))
        else:
            limit = np.sqrt(6.0 / (cin * k * k))
            w = rng.uniform(-limit, limit, size=(cout, cin, k, k))
        tensors[f"{name}.w"] = w.astype(dtype)
        tensors[f"{name}.b"] = np.zeros(cout, dtype=dtype)
    return NetParams(plan, channels, tensors)


def param_count(p: NetParams) -> int:
    return sum(int(v.size) for v in p.tensors.values())


def closed_form_count(plan: ChannelPlan, channels: int) -> int:
    return sum(k * k * cin * cout + cout for _, cin, cout, k in plan.layers(channels))


def unet_forward(p: NetParams, x: np.ndarray, keep: bool = False):
    """Residual prediction ``R(x)``; with ``keep`` also returns the tape."""
    _check4(x)
    if x.shape[1] != p.channels:
        raise InvalidArgument(f"network expects {p.channels} channels, got {x.shape[1]}")
    if x.shape[2] % 16 or x.shape[3] % 16:
        raise InvalidArgument(f"spatial size {x.shape[2:]} is not a multiple of 16")
    t = p.tensors
    tape = []
    skips = []
    h = x
    for i in range(1, 5):
        a = conv2d(h, t[f"enc{i}.w"], t[f"enc{i}.b"])
        h_in = h
        r = leaky_relu(a)
        h = maxpool2(r)
        tape.append((h_in, a, r))
        skips.append(h)
    for i in range(1, 5):
        a = conv2d(h, t[f"dec{i}.w"], t[f"dec{i}.b"])
        tape.append((h, a, None))
        h = upsample_nearest2(leaky_relu(a))
        if i < 4:
            h = concat_channels(h, skips[3 - i])
    y = conv2d(h, t["final.w"], t["final.b"])
    tape.append((h, None, None))
    return (y, tape) if keep else y


def unet_backward(p: NetParams, tape, gy: np.ndarray, input_grad: bool = True):
    """Gradients w.r.t. every parameter and (optionally) the network input."""
    t = p.tensors
    grads: dict[str, np.ndarray] = {}
    h_final = tape[8][0]
    gh, grads["final.w"], grads["final.b"] = conv2d_backward(h_final, t["final.w"], gy)
    skip_grads = [None, None, None]
    for i in range(4, 0, -1):
        h_in, a, _ = tape[3 + i]
        if i < 4:
            split = t[f"dec{i}.w"].shape[0]
            gh, skip_grads[3 - i] = concat_channels_backward(gh, split)
        ga = leaky_relu_backward(a, upsample_nearest2_backward(gh))
        gh, grads[f"dec{i}.w"], grads[f"dec{i}.b"] = conv2d_backward(h_in, t[f"dec{i}.w"], ga)
    for i in range(4, 0, -1):
        h_in, a, r = tape[i - 1]
        if i < 4:
            gh = gh + skip_grads[i - 1]
        ga = leaky_relu_backward(a, maxpool2_backward(r, gh))
        need = input_grad or i > 1
        gh, grads[f"enc{i}.w"], grads[f"enc{i}.b"] = conv2d_backward(h_in, t[f"enc{i}.w"], ga, need)
    return grads, gh


def drst_reconstruct(sys: ShearletSystem, p: NetParams, measured: np.ndarray) -> np.ndarray:
    """Single pass: analysis, add the predicted residual, synthesis.

    ``measured`` is ``(H, W)`` or a batch ``(N, H, W)``; arithmetic follows the
    dtype of the parameters.
    """
    measured = np.asarray(measured)
    single = measured.ndim == 2
    batch = measured[None] if single else measured
    dtype = p.tensors["final.w"].dtype
    coeffs = analysis(sys, batch.astype(dtype, copy=False))
    out = synthesis(sys, coeffs + unet_forward(p, coeffs))
    return out[0] if single else out


def masked_l1_loss(pred: np.ndarray, target: np.ndarray, mask) -> tuple[float, np.ndarray]:
    """``sum |target - pred * mask|`` and its gradient w.r.t. ``pred``."""
    m = np.asarray(getattr(mask, "array", mask))
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape or m.shape != pred.shape[-m.ndim :]:
        raise InvalidArgument(f"shapes differ: pred {pred.shape}, target {target.shape}, mask {m.shape}")
    diff = target - pred * m
    return float(np.abs(diff).sum()), (-np.sign(diff) * m).astype(pred.dtype)


# --------------------------------------------------------------------------
# optimiser


@dataclass(eq=False)
class AdaMaxState:
    m: dict[str, np.ndarray]
    u: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, p: NetParams) -> "AdaMaxState":
        return cls(
            {k: np.zeros_like(v) for k, v in p.tensors.items()},
            {k: np.zeros_like(v) for k, v in p.tensors.items()},
            0,
        )


def adamax_step(
    p: NetParams,
    grads: dict[str, np.ndarray],
    state: AdaMaxState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
) -> tuple[NetParams, AdaMaxState]:
    if not lr > 0:
        raise InvalidArgument(f"learning rate must be > 0, got {lr!r}")
    t = state.t + 1
    scale = lr / (1.0 - beta1**t)
    new_t, new_m, new_u = {}, {}, {}
    for name, value in p.tensors.items():
        g = grads[name]
        if g.shape != value.shape:
            raise InvalidArgument(f"gradient for {name} has shape {g.shape}, expected {value.shape}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        u = np.maximum(beta2 * state.u[name], np.abs(g))
        step = np.divide(m, u, out=np.zeros_like(m), where=u > 0)
        new_t[name] = (value - scale * step).astype(value.dtype)
        new_m[name] = m.astype(value.dtype)
        new_u[name] = u.astype(value.dtype)
    return NetParams(p.plan, p.channels, new_t), AdaMaxState(new_m, new_u, t)


# --------------------------------------------------------------------------
# checkpoints

MAGIC = b"DRST0001"


def _pack_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for _ in range(self.u32()):
            name = self.take(self.u32()).decode("utf-8")
            rank = self.u32()
            dims = struct.unpack(f"<{rank}I", self.take(4 * rank))
            count = int(np.prod(dims)) if rank else 1
            out[name] = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
        return out


def save_checkpoint(path, p: NetParams, state: AdaMaxState | None = None) -> None:
    state = state or AdaMaxState.zeros_like(p)
    plan = [p.channels, *p.plan.encoder, *p.plan.decoder]
    body = [MAGIC, struct.pack("<I", len(plan)), struct.pack(f"<{len(plan)}I", *plan)]
    body.append(_pack_tensors(p.tensors))
    body.append(struct.pack("<Q", state.t))
    body.append(_pack_tensors({f"m/{k}": v for k, v in state.m.items()}))
    body.append(_pack_tensors({f"u/{k}": v for k, v in state.u.items()}))
    data = b"".join(body)
    with open(path, "wb") as fh:
        fh.write(data + struct.pack("<I", zlib.crc32(data)))


def load_checkpoint(path) -> tuple[NetParams, AdaMaxState]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a DRST checkpoint")
    body, trailer = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) != trailer:
        raise DataError(f"checkpoint {path} failed its CRC check")
    r = _Reader(body)
    r.take(len(MAGIC))
    count = r.u32()
    if count != 9:
        raise DataError(f"checkpoint {path} has a {count}-entry channel plan, expected 9")
    plan = struct.unpack("<9I", r.take(4 * 9))
    channels, enc, dec = plan[0], plan[1:5], plan[5:9]
    tensors = r.tensors()
    t = struct.unpack("<Q", r.take(8))[0]
    m = {k[2:]: v for k, v in r.tensors().items()}
    u = {k[2:]: v for k, v in r.tensors().items()}
    if r.pos != len(body):
        raise DataError(f"checkpoint {path} has trailing bytes")
    p = NetParams(ChannelPlan(enc, dec), channels, tensors)
    return p, AdaMaxState(m, u, t)
