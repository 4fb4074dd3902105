"""Training data preparation and the residual-network training loop.

Training canvases are 9-view sub light fields sheared at a quarter of the
sampling interval, so the nine lines sit 4 rows apart on the canvas.  The
first, middle and last line form the network input (16 rows apart, like an
inference canvas) and all nine are the supervision target.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataError, DisparityBudgetError, InvalidArgument, NumericalError
from .geometry import (
    CANVAS_HEIGHT,
    LineMask,
    ShearedEpi,
    border_crop,
    choose_phi,
    make_eval_mask,
    make_input_mask,
    preshear_pad,
    random_crop,
)
from .lightfield import DisparityConfig, extract_epi
from .nn import (
    AdaMaxState,
    ChannelPlan,
    NetParams,
    adamax_step,
    init_params,
    masked_l1_loss,
    save_checkpoint,
    unet_backward,
    unet_forward,
)
from .shearlet import ShearletSystem, analysis, synthesis

__all__ = [
    "EpiRecord",
    "EpiStore",
    "phi_variants",
    "prepare_training_set",
    "training_record_count",
    "iterations_per_epoch",
    "Minibatch",
    "sample_minibatch",
    "loss_and_grads",
    "TrainConfig",
    "learning_rate",
    "train",
    "overfit_smoke",
]

EPIS_PER_BATCH = 4
CROP_WIDTH = 384
PHI_VARIANTS = 3


@dataclass(frozen=True)
class EpiRecord:
    source: str
    variant: int
    phi: float
    row: int
    channels: int
    height: int
    width: int
    offset: int  # float32 elements into the blob
    line_rows: tuple[int, ...]
    spacing: int


class EpiStore:
    """Read-only manifest + packed float32 blob of border-cropped canvases."""

    MANIFEST = "manifest.jsonl"
    BLOB = "canvases.f32"

    def __init__(self, directory):
        self.directory = Path(directory)
        manifest = self.directory / self.MANIFEST
        blob = self.directory / self.BLOB
        if not manifest.is_file() or not blob.is_file():
            raise DataError(f"{self.directory} does not hold an EPI store")
        self.records: list[EpiRecord] = []
        with open(manifest) as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    d["line_rows"] = tuple(d["line_rows"])
                    self.records.append(EpiRecord(**d))
        size = blob.stat().st_size // 4
        self._blob = np.memmap(blob, dtype="<f4", mode="r", shape=(size,)) if size else np.zeros(0, "<f4")
        for r in self.records:
            if r.offset + r.channels * r.height * r.width > size:
                raise DataError(f"record {r.source}/{r.row} points past the end of the blob")

    def __len__(self) -> int:
        return len(self.records)

    def canvas(self, i: int) -> np.ndarray:
        r = self.records[i]
        n = r.channels * r.height * r.width
        arr = np.asarray(self._blob[r.offset : r.offset + n]).reshape(r.channels, r.height, r.width)
        arr = arr.copy()
        return arr

    def sheared(self, i: int) -> ShearedEpi:
        r = self.records[i]
        return ShearedEpi(
            canvas=self.canvas(i),
            line_rows=r.line_rows,
            spacing=r.spacing,
            phi=r.phi,
            view_spacing=r.spacing,
            pad_left=0,
            pad_right=0,
            crop_offsets=(0, 0, r.line_rows[0]),
            source_width=r.width,
        )


def phi_variants(d: DisparityConfig, budget: float) -> list[float]:
    """The three shifts used for augmentation: d_min, d_min - D/2, d_min - D."""
    phi, (low, _) = choose_phi(d, budget)
    slack = phi - low
    return [phi, phi - 0.5 * slack, phi - slack]


def training_record_count(sslf_count: int, height: int = 512) -> int:
    return sslf_count * PHI_VARIANTS * height


def iterations_per_epoch(record_count: int, batch_epis: int = EPIS_PER_BATCH) -> int:
    return record_count // batch_epis


def prepare_training_set(sslfs, tau: int, directory, names=None) -> EpiStore:
    """Shear, pad and border-crop every EPI of every SSLF three times.

    ``sslfs`` is a list of ``(LightField3D, DisparityConfig)``; views are
    placed ``tau // 4`` rows apart.
    """
    if tau % 4:
        raise InvalidArgument(f"tau must be divisible by 4, got {tau}")
    spacing = tau // 4
    budget = tau / 4
    names = list(names) if names is not None else [f"sslf{i:04d}" for i in range(len(sslfs))]
    for name, (lf, d) in zip(names, sslfs):
        if d.d_range > budget:
            raise DisparityBudgetError(
                f"{name}: disparity range {d.d_range:g} exceeds tau/4 = {budget:g}"
            )
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offset = 0
    with open(directory / EpiStore.BLOB, "wb") as blob, open(directory / EpiStore.MANIFEST, "w") as man:
        for name, (lf, d) in zip(names, sslfs):
            for variant, phi in enumerate(phi_variants(d, budget)):
                for row in range(lf.height):
                    se = border_crop(preshear_pad(extract_epi(lf, row), phi, spacing, CANVAS_HEIGHT))
                    data = np.ascontiguousarray(se.canvas, dtype="<f4")
                    blob.write(data.tobytes())
                    rec = EpiRecord(
                        source=name,
                        variant=variant,
                        phi=float(phi),
                        row=row,
                        channels=data.shape[0],
                        height=data.shape[1],
                        width=data.shape[2],
                        offset=offset,
                        line_rows=se.line_rows,
                        spacing=spacing,
                    )
                    man.write(json.dumps(asdict(rec)) + "\n")
                    offset += data.size
    return EpiStore(directory)


# --------------------------------------------------------------------------
# mini-batches


@dataclass(frozen=True, eq=False)
class Minibatch:
    inputs: np.ndarray  # (B, 1, H, W) decimated canvases
    targets: np.ndarray  # (B, 1, H, W) all-line canvases
    input_mask: LineMask
    eval_mask: LineMask
    records: tuple[int, ...]


def sample_minibatch(
    store: EpiStore, rng, indices=None, width: int = CROP_WIDTH, dtype=np.float32
) -> Minibatch:
    """Four records, randomly cropped and split into 12 one-channel canvases."""
    if len(store) == 0:
        raise InvalidArgument("the EPI store is empty")
    rng = np.random.default_rng(rng)
    if indices is None:
        indices = rng.integers(0, len(store), EPIS_PER_BATCH)
    targets, in_mask, ev_mask = [], None, None
    for i in indices:
        se = random_crop(store.sheared(int(i)), width, rng)
        m_in, m_ev = make_input_mask(se), make_eval_mask(se)
        if in_mask is None:
            in_mask, ev_mask = m_in, m_ev
        elif m_in.active_rows != in_mask.active_rows or m_ev.active_rows != ev_mask.active_rows:
            raise DataError("records in one batch have different line layouts")
        targets.append(se.canvas * m_ev.array)
    target = np.concatenate(targets, axis=0)[:, None].astype(dtype)
    inputs = (target * in_mask.array).astype(dtype)
    return Minibatch(inputs, target, in_mask, ev_mask, tuple(int(i) for i in indices))


def loss_and_grads(sys: ShearletSystem, p: NetParams, batch: Minibatch):
    """Masked L1 loss of the batch and its gradient for every parameter.

    Back-propagation through the fixed transforms uses their adjoints:
    the gradient of synthesis is analysis and vice versa.
    """
    x = batch.inputs[:, 0]
    coeffs = analysis(sys, x)
    residual, tape = unet_forward(p, coeffs, keep=True)
    pred = synthesis(sys, coeffs + residual)
    loss, g_pred = masked_l1_loss(pred, batch.targets[:, 0], batch.eval_mask)
    g_coeffs = analysis(sys, g_pred)
    grads, _ = unet_backward(p, tape, g_coeffs.astype(residual.dtype), input_grad=False)
    return loss, grads


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    epoch_length: int | None = None  # None: len(store) // 4
    lr_high: float = 1e-3
    lr_low: float = 1e-4
    high_epochs: int = 2
    plan: ChannelPlan = field(default_factory=ChannelPlan)
    seed: int = 0
    checkpoint_dir: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1 or (self.epoch_length is not None and self.epoch_length < 1):
            raise InvalidArgument("epochs and epoch_length must be >= 1")
        if not (self.lr_high > 0 and self.lr_low > 0):
            raise InvalidArgument("learning rates must be > 0")


def learning_rate(step: int, epoch_length: int, cfg: TrainConfig) -> float:
    return cfg.lr_high if step < cfg.high_epochs * epoch_length else cfg.lr_low


def train(store: EpiStore, sys: ShearletSystem, cfg: TrainConfig = TrainConfig(), params=None):
    """Run the training loop; returns ``(params, checkpoint paths, losses)``.

    Records are permuted once per epoch with a seed derived from the run
    seed.  A non-finite loss aborts with :class:`NumericalError`; checkpoints
    written for earlier epochs are left in place.
    """
    if len(store) < EPIS_PER_BATCH:
        raise InvalidArgument(f"need at least {EPIS_PER_BATCH} records, store has {len(store)}")
    first = store.records[0]
    if first.height != sys.height:
        raise InvalidArgument(f"store canvases have {first.height} rows, system expects {sys.height}")
    epoch_length = cfg.epoch_length or iterations_per_epoch(len(store))
    p = params if params is not None else init_params(cfg.plan, sys.eta, cfg.seed, np.float32)
    state = AdaMaxState.zeros_like(p)
    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    log = None
    if cfg.log_path:
        log = open(cfg.log_path, "w", newline="")
        writer = csv.writer(log)
        writer.writerow(["step", "epoch", "lr", "loss"])
    checkpoints, losses = [], []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            order_rng = np.random.default_rng([cfg.seed, epoch])
            order = order_rng.permutation(len(store))
            crop_rng = np.random.default_rng([cfg.seed, epoch, 1])
            for it in range(epoch_length):
                start = (it * EPIS_PER_BATCH) % len(order)
                idx = np.take(order, range(start, start + EPIS_PER_BATCH), mode="wrap")
                batch = sample_minibatch(store, crop_rng, indices=idx)
                loss, grads = loss_and_grads(sys, p, batch)
                if not math.isfinite(loss):
                    raise NumericalError(f"non-finite loss at step {step} (epoch {epoch})")
                lr = learning_rate(step, epoch_length, cfg)
                p, state = adamax_step(p, grads, state, lr)
                losses.append(loss)
                if log:
                    writer.writerow([step, epoch, lr, f"{loss:.6g}"])
                step += 1
            if ckpt_dir:
                path = ckpt_dir / f"epoch_{epoch + 1:03d}.drst"
                save_checkpoint(path, p, state)
                checkpoints.append(path)
    finally:
        if log:
            log.close()
    return p, checkpoints, losses


def overfit_smoke(
    store: EpiStore,
    sys: ShearletSystem,
    steps: int = 200,
    lr: float = 1e-2,
    plan: ChannelPlan = ChannelPlan((8, 16, 32, 64)),
    seed: int = 0,
) -> list[float]:
    """Train repeatedly on one fixed mini-batch and return the loss per step.

    ``lr == 0`` freezes the parameters (no optimiser step is taken).
    """
    if lr < 0:
        raise InvalidArgument(f"learning rate must be >= 0, got {lr!r}")
    rng = np.random.default_rng(seed)
    batch = sample_minibatch(store, rng)
    p = init_params(plan, sys.eta, seed, np.float32)
    state = AdaMaxState.zeros_like(p)
    losses = []
    for _ in range(steps):
        loss, grads = loss_and_grads(sys, p, batch)
        if not math.isfinite(loss):
            raise NumericalError(f"non-finite loss after {len(losses)} steps")
        losses.append(loss)
        if lr > 0:
            p, state = adamax_step(p, grads, state, lr)
    return losses
