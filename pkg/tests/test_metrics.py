import numpy as np
import pytest

from revealtoy.metrics import (
    PSNR_CAP_DB,
    luma01,
    matting_errors,
    psnr,
    soft_iou,
    ssim,
    texture_logvar_laplacian,
)


class TestPsnr:
    def test_identical_hits_cap(self):
        a = np.random.default_rng(0).uniform(-1, 1, (8, 8))
        assert psnr(a, a.copy()) == PSNR_CAP_DB

    def test_known_value(self):
        # MSE 0.01 with max_val 1 is exactly 20 dB
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)
        np.testing.assert_allclose(psnr(a, b, max_val=1.0), 20.0, atol=1e-12)

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            shape = (rng.integers(2, 12), rng.integers(2, 12))
            a = rng.uniform(-1, 1, shape)
            b = rng.uniform(-1, 1, shape)
            mse = np.mean((a - b) ** 2)
            expect = min(10 * np.log10(4.0 / mse), 99.0)
            assert abs(psnr(a, b) - expect) < 1e-9

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        a, b = rng.uniform(-1, 1, (6, 6)), rng.uniform(-1, 1, (6, 6))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((3, 2)))


def ssim_oracle(a, b, value_range=1.0):
    """Per-window brute-force loop: weighted moments with explicit sums."""
    n, sigma = 11, 1.5
    w = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            w[i, j] = np.exp(-((i - 5) ** 2 + (j - 5) ** 2) / (2 * sigma**2))
    w /= w.sum()
    c1, c2 = (0.01 * value_range) ** 2, (0.03 * value_range) ** 2
    vals = []
    for y in range(a.shape[0] - n + 1):
        for x in range(a.shape[1] - n + 1):
            pa = a[y:y + n, x:x + n]
            pb = b[y:y + n, x:x + n]
            mu_a = (w * pa).sum()
            mu_b = (w * pb).sum()
            var_a = (w * (pa - mu_a) ** 2).sum()
            var_b = (w * (pb - mu_b) ** 2).sum()
            cov = (w * (pa - mu_a) * (pb - mu_b)).sum()
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(vals))


class TestSsim:
    def test_identical_is_one(self):
        a = np.random.default_rng(3).uniform(0, 1, (16, 16))
        np.testing.assert_allclose(ssim(a, a.copy()), 1.0, atol=1e-12)

    def test_negated_zero_mean_content(self):
        rng = np.random.default_rng(4)
        a = 0.5 + 0.4 * np.sin(np.linspace(0, 20, 256)).reshape(16, 16)
        b = 1.0 - a  # mirrored around 0.5: structure term flips sign
        assert ssim(a, b) <= 0.0

    def test_matches_window_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            h = int(rng.integers(11, 18))
            wdt = int(rng.integers(11, 18))
            a = rng.uniform(0, 1, (h, wdt))
            b = rng.uniform(0, 1, (h, wdt))
            assert abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-9

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        a, b = rng.uniform(0, 1, (14, 14)), rng.uniform(0, 1, (14, 14))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-9

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((10, 12)), np.zeros((10, 12)))


class TestSoftIou:
    def test_identical(self):
        a = np.random.default_rng(7).uniform(0, 1, (9, 9))
        assert soft_iou(a, a.copy()) == 1.0

    def test_disjoint(self):
        a = np.zeros(10)
        b = np.zeros(10)
        a[:5] = 1.0
        b[5:] = 1.0
        assert soft_iou(a, b) == 0.0

    def test_constant_maps(self):
        a = np.full((4, 4), 0.5)
        b = np.ones((4, 4))
        assert soft_iou(a, b) == 0.5

    def test_both_empty(self):
        assert soft_iou(np.zeros(6), np.zeros(6)) == 1.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            a = rng.uniform(0, 1, 40)
            b = rng.uniform(0, 1, 40)
            expect = sum(min(x, y) for x, y in zip(a, b)) \
                / sum(max(x, y) for x, y in zip(a, b))
            assert abs(soft_iou(a, b) - expect) < 1e-9


class TestMattingErrors:
    def test_zero_at_truth(self):
        a = np.random.default_rng(9).uniform(0, 1, (5, 5))
        out = matting_errors(a, a.copy())
        assert out == {"sad": 0.0, "mad": 0.0, "mse": 0.0}

    def test_uniform_error(self):
        a = np.full(100, 0.1)
        out = matting_errors(a, np.zeros(100))
        np.testing.assert_allclose(
            [out["sad"], out["mad"], out["mse"]], [0.01, 0.1, 0.01], atol=1e-15)

    def test_matches_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            a = rng.uniform(0, 1, 30)
            b = rng.uniform(0, 1, 30)
            out = matting_errors(a, b)
            d = [abs(x - y) for x, y in zip(a, b)]
            assert abs(out["sad"] - sum(d) / 1000) < 1e-9
            assert abs(out["mad"] - sum(d) / 30) < 1e-9
            assert abs(out["mse"] - sum(v * v for v in d) / 30) < 1e-9


class TestTexture:
    def test_constant_image_floor(self):
        val = texture_logvar_laplacian(np.full((8, 8), 0.37))
        np.testing.assert_allclose(val, np.log(1e-12), atol=1e-12)

    def test_checkerboard_exceeds_gradient(self):
        yy, xx = np.mgrid[0:12, 0:12]
        checker = ((yy + xx) % 2).astype(np.float64)
        gradient = xx / 11.0
        assert texture_logvar_laplacian(checker) > texture_logvar_laplacian(gradient)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, (7, 9))
        resp = []
        for i in range(1, 6):
            for j in range(1, 8):
                resp.append(x[i - 1, j] + x[i + 1, j] + x[i, j - 1]
                            + x[i, j + 1] - 4 * x[i, j])
        expect = np.log(np.var(resp) + 1e-12)
        assert abs(texture_logvar_laplacian(x) - expect) < 1e-9

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            texture_logvar_laplacian(np.zeros((2, 5)))


class TestLuma:
    def test_weights(self):
        img = np.zeros((1, 1, 3))
        img[0, 0] = [1.0, -1.0, -1.0]  # unit red in [0,1] space
        np.testing.assert_allclose(luma01(img)[0, 0], 0.299, atol=1e-12)
        img[0, 0] = [-1.0, 1.0, -1.0]
        np.testing.assert_allclose(luma01(img)[0, 0], 0.587, atol=1e-12)
        img[0, 0] = [-1.0, -1.0, 1.0]
        np.testing.assert_allclose(luma01(img)[0, 0], 0.114, atol=1e-12)

    def test_white_is_one(self):
        img = np.ones((2, 2, 3))
        np.testing.assert_allclose(luma01(img), 1.0, atol=1e-12)

    def test_accepts_rgba(self):
        img = np.zeros((2, 2, 4))
        assert luma01(img).shape == (2, 2)
