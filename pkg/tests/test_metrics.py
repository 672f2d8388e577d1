import numpy as np
import pytest

from scivid import metrics
from naive_ref import psnr_scalar, ssim_scalar


def rand_frames(shape, seed):
    return np.random.default_rng(seed).uniform(0, 1, shape)


class TestPsnr:
    def test_identical_reports_cap(self):
        a = rand_frames((3, 1, 8, 8), 0)
        per_frame, mean = metrics.psnr(a, a.copy())
        assert per_frame == [metrics.PSNR_CAP] * 3
        assert mean == metrics.PSNR_CAP

    def test_constant_offset_closed_form(self):
        # uniform error of 0.1 gives exactly -20*log10(0.1) = 20 dB
        a = np.full((1, 1, 4, 4), 0.5)
        b = np.full((1, 1, 4, 4), 0.6)
        _, mean = metrics.psnr(a, b)
        assert mean == pytest.approx(20.0, abs=1e-10)

    def test_matches_scalar_reference(self):
        a = rand_frames((2, 1, 6, 6), 1)
        b = rand_frames((2, 1, 6, 6), 2)
        per_frame, mean = metrics.psnr(a, b)
        ref = [psnr_scalar(a[m], b[m]) for m in range(2)]
        assert np.allclose(per_frame, ref, atol=1e-10)
        assert mean == pytest.approx(np.mean(ref))

    def test_inputs_clamped_to_unit_range(self):
        a = np.full((1, 1, 4, 4), 1.7)
        b = np.full((1, 1, 4, 4), 1.0)
        assert metrics.psnr(a, b)[1] == metrics.PSNR_CAP

    def test_peak_parameter(self):
        a = np.zeros((1, 1, 4, 4))
        b = np.full((1, 1, 4, 4), 0.5)
        _, at_one = metrics.psnr(a, b, peak=1.0)
        _, at_half = metrics.psnr(a, b, peak=0.5)
        assert at_one - at_half == pytest.approx(20 * np.log10(2), abs=1e-10)

    def test_shape_mismatch_errors(self):
        with pytest.raises(ValueError, match="mismatch"):
            metrics.psnr(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 4, 5)))

    def test_accepts_bare_2d_and_3d_arrays(self):
        a = rand_frames((6, 6), 3)
        assert metrics.psnr(a, a)[1] == metrics.PSNR_CAP
        stack = rand_frames((2, 6, 6), 4)
        per_frame, _ = metrics.psnr(stack, stack)
        assert len(per_frame) == 2


class TestSsim:
    def test_identical_is_one(self):
        a = rand_frames((2, 1, 16, 16), 5)
        per_frame, mean = metrics.ssim(a, a.copy())
        assert np.allclose(per_frame, 1.0)
        assert mean == pytest.approx(1.0)

    def test_matches_scalar_reference(self):
        a = rand_frames((1, 1, 14, 14), 6)
        b = np.clip(a + 0.1 * rand_frames((1, 1, 14, 14), 7), 0, 1)
        _, mean = metrics.ssim(a, b)
        assert mean == pytest.approx(ssim_scalar(a[0, 0], b[0, 0]), abs=1e-10)

    def test_small_window_matches_reference(self):
        a = rand_frames((1, 1, 8, 8), 8)
        b = np.clip(a + 0.05, 0, 1)
        _, mean = metrics.ssim(a, b, window=7)
        assert mean == pytest.approx(ssim_scalar(a[0, 0], b[0, 0], window=7), abs=1e-10)

    def test_frame_smaller_than_window_errors(self):
        a = rand_frames((1, 1, 8, 8), 9)
        with pytest.raises(ValueError, match="window"):
            metrics.ssim(a, a)

    def test_degradation_lowers_score(self):
        rng = np.random.default_rng(10)
        a = rand_frames((1, 1, 24, 24), 11)
        mild = np.clip(a + 0.02 * rng.standard_normal(a.shape), 0, 1)
        harsh = np.clip(a + 0.3 * rng.standard_normal(a.shape), 0, 1)
        _, s_mild = metrics.ssim(a, mild)
        _, s_harsh = metrics.ssim(a, harsh)
        assert 1.0 > s_mild > s_harsh

    def test_symmetry(self):
        a = rand_frames((1, 1, 16, 16), 12)
        b = rand_frames((1, 1, 16, 16), 13)
        assert metrics.ssim(a, b)[1] == pytest.approx(metrics.ssim(b, a)[1], abs=1e-12)

    def test_color_averages_channels(self):
        a = rand_frames((1, 3, 16, 16), 14)
        b = np.clip(a + 0.05, 0, 1)
        _, mean = metrics.ssim(a, b)
        per_chan = [metrics.ssim(a[:, c], b[:, c])[1] for c in range(3)]
        assert mean == pytest.approx(np.mean(per_chan), abs=1e-12)

    def test_gaussian_window_normalized(self):
        k = metrics.gaussian_window()
        assert k.shape == (11, 11)
        assert k.sum() == pytest.approx(1.0)
        assert k[5, 5] == k.max()


class TestTable:
    def test_alignment_and_content(self):
        text = metrics.format_metric_table(
            [("net", "32.1", "0.95"), ("baseline", "24.0", "0.80")],
            ("method", "psnr", "ssim"))
        lines = text.splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("method")
        assert all(len(line.split()) == 3 for line in lines)
