"""Desk-scale training: synthetic moving-shape data, MSE objective, Adam,
and a two-phase learning-rate schedule.

Masks are generated once per run and held fixed, matching how a physical
encoder would be calibrated.  Augmented samples are re-encoded from the
augmented cube so measurement and ground truth always stay consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .tensor import Tensor
from .forward_model import VideoCube, MaskSet, generate_masks, encode
from .network import NetworkConfig, ParamStore, build_network, network_forward_tensor


class TrainingDivergence(RuntimeError):
    """Raised when the loss becomes non-finite."""


@dataclass
class TrainConfig:
    lr_initial: float = 1e-4
    lr_final: float = 1e-5
    epochs_phase1: int = 30
    epochs_phase2: int = 4
    batch: int = 2
    crop: int = 64
    count: int = 8
    b: int = 8
    random_crop: bool = True
    random_scale: bool = True
    random_flip: bool = True
    grad_clip: float = 0.0  # 0 disables clipping
    seed: int = 0

    def validate(self):
        if self.lr_initial <= 0 or self.lr_final <= 0:
            raise ValueError("learning rates must be positive")
        if self.crop % 2:
            raise ValueError("crop size must be even")
        return self


# -- synthetic data ---------------------------------------------------------

def _draw_disc(frame, cy, cx, radius, value):
    h, w = frame.shape
    yy, xx = np.ogrid[:h, :w]
    frame[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius] = value


def _draw_rect(frame, cy, cx, hh, hw, value):
    h, w = frame.shape
    y0, y1 = int(max(0, cy - hh)), int(min(h, cy + hh))
    x0, x1 = int(max(0, cx - hw)), int(min(w, cx + hw))
    if y0 < y1 and x0 < x1:
        frame[y0:y1, x0:x1] = value


def make_synthetic_dataset(count, b, h, w, seed=0):
    """Translating rectangles/discs over a mild gradient background.

    Per-frame displacement is at most 3 px; values stay in [0, 1];
    deterministic for a fixed seed.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    cubes = []
    for _ in range(count):
        gy, gx = rng.uniform(-0.15, 0.15, size=2)
        base = rng.uniform(0.05, 0.25)
        yy, xx = np.mgrid[:h, :w]
        background = np.clip(base + gy * yy / max(h - 1, 1) + gx * xx / max(w - 1, 1), 0, 1)
        n_shapes = rng.integers(2, 5)
        shapes = []
        for _ in range(n_shapes):
            shapes.append({
                "kind": rng.choice(["disc", "rect"]),
                "cy": rng.uniform(0.15 * h, 0.85 * h),
                "cx": rng.uniform(0.15 * w, 0.85 * w),
                "size": rng.uniform(0.06, 0.18) * min(h, w),
                "vy": rng.uniform(-3.0, 3.0),
                "vx": rng.uniform(-3.0, 3.0),
                "value": rng.uniform(0.35, 1.0),
            })
        frames = np.empty((b, 1, h, w))
        for m in range(b):
            frame = background.copy()
            for s in shapes:
                cy = s["cy"] + m * s["vy"]
                cx = s["cx"] + m * s["vx"]
                if s["kind"] == "disc":
                    _draw_disc(frame, cy, cx, s["size"] / 2, s["value"])
                else:
                    _draw_rect(frame, cy, cx, s["size"] / 2, s["size"] / 2, s["value"])
            frames[m, 0] = frame
        cubes.append(VideoCube(frames=np.clip(frames, 0.0, 1.0)))
    return cubes


# -- augmentation -------------------------------------------------------------

def _resize_bilinear(frames, out_h, out_w):
    b, c, h, w = frames.shape
    ys = np.linspace(0, h - 1, out_h)
    xs = np.linspace(0, w - 1, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[None, None, :, None]
    fx = (xs - x0)[None, None, None, :]
    tl = frames[:, :, y0][:, :, :, x0]
    tr = frames[:, :, y0][:, :, :, x1]
    bl = frames[:, :, y1][:, :, :, x0]
    br = frames[:, :, y1][:, :, :, x1]
    top = tl * (1 - fx) + tr * fx
    bot = bl * (1 - fx) + br * fx
    return top * (1 - fy) + bot * fy


def augment(cube, config, rng):
    """Random scale, crop and flips; output is crop x crop, values in [0, 1]."""
    frames = cube.frames
    if config.random_scale and rng.random() < 0.5:
        factor = rng.uniform(1.0, 1.3)
        new_h = max(config.crop, int(round(frames.shape[2] * factor)))
        new_w = max(config.crop, int(round(frames.shape[3] * factor)))
        frames = np.clip(_resize_bilinear(frames, new_h, new_w), 0.0, 1.0)
    h, w = frames.shape[2:]
    if h < config.crop or w < config.crop:
        raise ValueError(f"sample {h}x{w} smaller than crop {config.crop}")
    if config.random_crop:
        y0 = rng.integers(0, h - config.crop + 1)
        x0 = rng.integers(0, w - config.crop + 1)
    else:
        y0 = (h - config.crop) // 2
        x0 = (w - config.crop) // 2
    frames = frames[:, :, y0:y0 + config.crop, x0:x0 + config.crop]
    if config.random_flip:
        if rng.random() < 0.5:
            frames = frames[:, :, ::-1, :]
        if rng.random() < 0.5:
            frames = frames[:, :, :, ::-1]
    return VideoCube(frames=np.ascontiguousarray(frames))


# -- objective and optimizer ---------------------------------------------------

def mse_loss(pred, truth):
    """Mean squared difference; differentiable w.r.t. ``pred``."""
    truth_arr = np.asarray(getattr(truth, "frames", truth))
    if tuple(truth_arr.shape) != pred.shape:
        raise tn.ShapeError(f"shape mismatch: pred {pred.shape} vs truth {truth_arr.shape}")
    diff = tn.sub(pred, Tensor(truth_arr.astype(pred.data.dtype)))
    return tn.mean(tn.mul(diff, diff))


class AdamState:
    """First/second moment buffers, lazily initialized to zeros at step 0."""

    def __init__(self):
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, grad_clip=0.0):
    """Standard bias-corrected Adam update over every parameter with a grad."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite gradient for parameter {name!r}")
        if grad_clip > 0:
            norm = float(np.linalg.norm(g))
            if norm > grad_clip:
                g = g * (grad_clip / norm)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


# -- training loop --------------------------------------------------------------

def train(config: TrainConfig, net_config: NetworkConfig, dataset=None,
          params=None, masks=None, progress=None):
    """Two-phase training run; returns (params, history).

    History rows are dicts with keys step, epoch, lr, loss.  The masks are
    generated once from the run seed and stay fixed.
    """
    config.validate()
    net_config.validate()
    if dataset is None:
        dataset = make_synthetic_dataset(config.count, config.b,
                                         config.crop, config.crop, seed=config.seed)
    if not dataset:
        raise ValueError("dataset must be nonempty")
    if params is None:
        params = build_network(net_config, seed=config.seed)
    if masks is None:
        masks = generate_masks(config.b, config.crop, config.crop,
                               density=0.5, seed=config.seed + 1)
    rng = np.random.Generator(np.random.PCG64(config.seed + 2))
    state = AdamState()
    history = []
    step = 0
    schedule = ([config.lr_initial] * config.epochs_phase1
                + [config.lr_final] * config.epochs_phase2)
    for epoch, lr in enumerate(schedule):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(order), config.batch):
            batch_idx = order[start:start + config.batch]
            for p in params.tensors():
                p.zero_grad()
            batch_loss = 0.0
            grads = {name: np.zeros_like(p.data) for name, p in params.items()}
            for i in batch_idx:
                cube = augment(dataset[i], config, rng)
                y = encode(cube, masks, noise_sigma=0.0)
                pred = network_forward_tensor(y, masks, params, net_config)
                loss = mse_loss(pred, cube)
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise TrainingDivergence(
                        f"loss diverged at step {step} (epoch {epoch}): {loss_val}")
                tn.backward(loss)
                for name, p in params.items():
                    if p.grad is not None:
                        grads[name] += p.grad
                batch_loss += loss_val
            k = len(batch_idx)
            for name, p in params.items():
                p.grad = grads[name] / k
            adam_step(params, state, lr, grad_clip=config.grad_clip)
            step += 1
            batch_loss /= k
            epoch_losses.append(batch_loss)
            history.append({"step": step, "epoch": epoch, "lr": lr, "loss": batch_loss})
        if progress is not None and epoch_losses:
            progress(epoch, lr, float(np.mean(epoch_losses)))
    return params, history


def save_history_csv(path, history):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,epoch,lr,loss\n")
        for row in history:
            fh.write(f"{row['step']},{row['epoch']},{row['lr']:.8g},{row['loss']:.10g}\n")
