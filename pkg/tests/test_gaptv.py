import numpy as np
import pytest

from scivid import forward_model as fm
from scivid import gaptv
from scivid.metrics import psnr
from scivid.training import make_synthetic_dataset


def scene(b=4, h=16, w=16, seed=0):
    vid = make_synthetic_dataset(1, b, h, w, seed=seed)[0]
    masks = fm.generate_masks(b, h, w, seed=seed + 1)
    return vid, masks, fm.encode(vid, masks)


class TestTvDenoise:
    def test_zero_weight_is_identity(self):
        x = np.random.default_rng(0).uniform(0, 1, (2, 1, 8, 8))
        out = gaptv.tv_denoise(x, 0.0)
        assert np.array_equal(out, x)
        assert out is not x

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            gaptv.tv_denoise(np.zeros((1, 1, 4, 4)), -0.1)

    def test_reduces_total_variation(self):
        rng = np.random.default_rng(1)
        clean = np.zeros((12, 12))
        clean[:, 6:] = 1.0
        noisy = clean + 0.2 * rng.standard_normal(clean.shape)

        def tv(u):
            return np.abs(np.diff(u, axis=0)).sum() + np.abs(np.diff(u, axis=1)).sum()

        out = gaptv.tv_denoise(noisy[None, None], 0.1)[0, 0]
        assert tv(out) < tv(noisy)

    def test_stronger_weight_smooths_more(self):
        rng = np.random.default_rng(2)
        noisy = rng.uniform(0, 1, (10, 10))

        def tv(u):
            return np.abs(np.diff(u, axis=0)).sum() + np.abs(np.diff(u, axis=1)).sum()

        mild = gaptv.tv_denoise(noisy[None, None], 0.02)[0, 0]
        strong = gaptv.tv_denoise(noisy[None, None], 0.2)[0, 0]
        assert tv(strong) < tv(mild) < tv(noisy)

    def test_constant_frame_is_fixed_point(self):
        x = np.full((1, 1, 8, 8), 0.4)
        out = gaptv.tv_denoise(x, 0.1)
        assert np.allclose(out, 0.4, atol=1e-12)

    def test_videocube_wrapper_roundtrip(self):
        vid = fm.VideoCube(np.random.default_rng(3).uniform(0, 1, (2, 1, 8, 8)))
        out = gaptv.tv_denoise(vid, 0.05)
        assert isinstance(out, fm.VideoCube)
        assert out.frames.shape == vid.frames.shape


class TestGapProjection:
    def test_residual_zero_after_one_step(self):
        vid, masks, meas = scene(seed=4)
        x0 = np.zeros_like(vid.frames[:, 0])
        x1 = gaptv.gap_projection(x0, meas.y, masks)
        resid = meas.y - (masks.masks * x1).sum(axis=0)
        covered = masks.masks.sum(axis=0) > 0
        assert np.allclose(resid[covered], 0.0, atol=1e-10)

    def test_idempotent(self):
        vid, masks, meas = scene(seed=5)
        x1 = gaptv.gap_projection(np.zeros_like(vid.frames[:, 0]), meas.y, masks)
        x2 = gaptv.gap_projection(x1, meas.y, masks)
        assert np.allclose(x1, x2, atol=1e-10)

    def test_truth_is_fixed_point(self):
        vid, masks, meas = scene(seed=6)
        x = gaptv.gap_projection(vid.frames[:, 0].copy(), meas.y, masks)
        assert np.allclose(x, vid.frames[:, 0], atol=1e-10)


class TestGapTvReconstruct:
    def test_output_shape_gray(self):
        vid, masks, meas = scene(seed=7)
        out = gaptv.gap_tv_reconstruct(meas, masks, iters=3)
        assert isinstance(out, fm.VideoCube)
        assert out.frames.shape == vid.frames.shape

    def test_more_iterations_improve_fidelity(self):
        vid, masks, meas = scene(b=4, h=32, w=32, seed=8)
        few = gaptv.gap_tv_reconstruct(meas, masks, iters=2, tv_weight=0.02)
        many = gaptv.gap_tv_reconstruct(meas, masks, iters=40, tv_weight=0.02)
        assert psnr(many, vid)[1] > psnr(few, vid)[1]

    def test_mask_count_mismatch(self):
        vid, masks, meas = scene(seed=9)
        bad = fm.generate_masks(3, 16, 16, seed=0)
        with pytest.raises(ValueError, match="mask count"):
            gaptv.gap_tv_reconstruct(meas, bad)

    def test_deterministic(self):
        vid, masks, meas = scene(seed=10)
        a = gaptv.gap_tv_reconstruct(meas, masks, iters=5)
        b = gaptv.gap_tv_reconstruct(meas, masks, iters=5)
        assert np.array_equal(a.frames, b.frames)

    def test_bayer_reconstructs_mosaic_domain(self):
        gray = make_synthetic_dataset(1, 4, 16, 16, seed=11)[0].frames[:, 0]
        rgb = np.stack([0.9 * gray, 0.7 * gray, 0.5 * gray], axis=1)
        vid = fm.VideoCube(rgb)
        masks = fm.generate_masks(4, 16, 16, seed=12)
        meas = fm.encode(vid, masks)
        out = gaptv.gap_tv_reconstruct(meas, masks, iters=10, tv_weight=0.01)
        assert out.frames.shape == (4, 1, 16, 16)
        mosaic = fm.mosaic_rggb(vid.frames)
        # closer to the true mosaic than an all-gray guess
        base = np.full_like(mosaic, 0.5)
        err = np.mean((out.frames[:, 0] - mosaic) ** 2)
        assert err < np.mean((base - mosaic) ** 2)
