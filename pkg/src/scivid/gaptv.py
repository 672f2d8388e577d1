"""Model-based reconstruction baseline: generalized alternating projection
with total-variation denoising.

The measurement-consistency projection exploits the diagonal structure of
the sensing operator's Gram matrix (per-pixel sums of squared masks), so
it reduces to an elementwise division.
"""

from __future__ import annotations

import numpy as np

from .forward_model import (Measurement, MaskSet, VideoCube, ZERO_SUM_GUARD,
                            bayer_split, bayer_merge)

TV_INNER_ITERS = 20


def _grad2d(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1, :] = u[1:, :] - u[:-1, :]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _div2d(p1, p2):
    d = np.zeros_like(p1)
    d[0, :] = p1[0, :]
    d[1:-1, :] = p1[1:-1, :] - p1[:-2, :]
    d[-1, :] = -p1[-2, :]
    d2 = np.zeros_like(p2)
    d2[:, 0] = p2[:, 0]
    d2[:, 1:-1] = p2[:, 1:-1] - p2[:, :-2]
    d2[:, -1] = -p2[:, -2]
    return d + d2


def _tv_denoise_frame(f, weight, inner_iters):
    # Projected gradient descent on the anisotropic dual problem:
    # min_{|p|<=1} ||w div p - f||^2, then u = f - w div p.
    p1 = np.zeros_like(f)
    p2 = np.zeros_like(f)
    step = 1.0 / (8.0 * weight)
    u = f
    for _ in range(inner_iters):
        u = f - weight * _div2d(p1, p2)
        gx, gy = _grad2d(u)
        p1 = np.clip(p1 - step * gx, -1.0, 1.0)
        p2 = np.clip(p2 - step * gy, -1.0, 1.0)
    return f - weight * _div2d(p1, p2)


def tv_denoise(x, weight, inner_iters=TV_INNER_ITERS):
    """Per-frame anisotropic TV denoising; weight 0 returns the input."""
    if weight < 0:
        raise ValueError("TV weight must be nonnegative")
    frames = np.asarray(getattr(x, "frames", x), dtype=np.float64)
    wrap = hasattr(x, "frames")
    if weight == 0 or inner_iters <= 0:
        out = frames.copy()
    else:
        flat = frames.reshape((-1,) + frames.shape[-2:])
        out = np.stack([_tv_denoise_frame(fr, weight, inner_iters) for fr in flat])
        out = out.reshape(frames.shape)
    return VideoCube(frames=out) if wrap else out


def gap_projection(x, y_plane, masks):
    """One measurement-consistency step: x <- x + M * (y - sum(M x)) / sum(M^2)."""
    phi = masks.masks
    phi_sq_sum = (phi * phi).sum(axis=0)
    denom = np.where(phi_sq_sum == 0.0, ZERO_SUM_GUARD, phi_sq_sum)
    residual = y_plane - (phi * x).sum(axis=0)
    return x + phi * (residual / denom)[None]


def _reconstruct_plane(y_plane, masks, iters, tv_weight, tv_inner):
    phi = masks.masks
    phi_sum = phi.sum(axis=0)
    denom = np.where(phi_sum == 0.0, ZERO_SUM_GUARD, phi_sum)
    x = phi * (y_plane / denom)[None]  # normalized backprojection start
    for _ in range(iters):
        x = gap_projection(x, y_plane, masks)
        if tv_weight > 0:
            x = np.stack([_tv_denoise_frame(fr, tv_weight, tv_inner) for fr in x])
    return x


def gap_tv_reconstruct(y, masks, iters=50, tv_weight=0.05, tv_inner=TV_INNER_ITERS):
    """Alternate exact measurement projection with TV denoising.

    Grayscale measurements return a [B, 1, H, W] cube.  Bayer measurements
    are reconstructed per color sub-plane and reassembled into the mosaic
    domain as a [B, 1, H, W] cube (no demosaicing).
    """
    if masks.b != y.b:
        raise ValueError(f"mask count {masks.b} != measurement B {y.b}")
    if y.color_mode == "gray":
        x = _reconstruct_plane(y.y, masks, iters, tv_weight, tv_inner)
        return VideoCube(frames=x[:, None])
    subs = bayer_split(y, masks)
    recon = {key: _reconstruct_plane(sub_y.y, sub_m, iters, tv_weight, tv_inner)
             for key, (sub_y, sub_m) in subs.items()}
    b = y.b
    frames = np.stack([bayer_merge({k: recon[k][m] for k in recon}) for m in range(b)])
    return VideoCube(frames=frames[:, None])
