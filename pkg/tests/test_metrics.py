import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deblur.metrics import MetricReport, frame_report, gaussian_window, hfen, log_kernel, psnr, ser, ssim


def direct_same_conv(img, k):
    """Zero-padded 'same' convolution by explicit loops."""
    h, w = img.shape
    kh, kw = k.shape
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(kh):
                for j in range(kw):
                    yy, xx = y + kh // 2 - i, x + kw // 2 - j
                    if 0 <= yy < h and 0 <= xx < w:
                        acc += k[i, j] * img[yy, xx]
            out[y, x] = acc
    return out


def brute_ssim(a, b, L, size=11, sigma=1.5):
    g = np.array([[math.exp(-((i - size // 2) ** 2 + (j - size // 2) ** 2) / (2 * sigma ** 2))
                   for j in range(size)] for i in range(size)])
    g /= g.sum()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for y in range(a.shape[0] - size + 1):
        for x in range(a.shape[1] - size + 1):
            pa, pb = a[y:y + size, x:x + size], b[y:y + size, x:x + size]
            ma, mb = np.sum(g * pa), np.sum(g * pb)
            va = np.sum(g * (pa - ma) ** 2)
            vb = np.sum(g * (pb - mb) ** 2)
            cov = np.sum(g * (pa - ma) * (pb - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ser_examples():
    assert ser([3.0, 4.0], [3.0, 4.0]) == math.inf
    assert ser(np.zeros(5), np.arange(1.0, 6.0)) == pytest.approx(0.0, abs=1e-12)
    assert ser([3.0, 4.5], [3.0, 4.0]) == pytest.approx(20.0, abs=1e-12)


def test_ser_uses_magnitude():
    ref = np.array([3.0, 4.0])
    assert ser(ref * np.exp(1j * 0.7), ref) > 250


def test_psnr_examples():
    assert psnr([1.0, 1.0], [1.0, 1.0]) == math.inf
    assert psnr([0.0, 1.0], [1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.01, 100.0), st.integers(0, 2 ** 31 - 1))
def test_scale_invariance(c, seed):
    r = np.random.default_rng(seed)
    a, b = r.random(20) + 0.1, r.random(20) + 0.1
    assert psnr(c * a, c * b) == pytest.approx(psnr(a, b), abs=1e-9)
    assert ser(c * a, c * b) == pytest.approx(ser(a, b), abs=1e-9)


def test_zero_reference_rejected():
    for fn in (ser, psnr):
        with pytest.raises(ValueError):
            fn(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        ser(np.ones(3), np.ones(4))


def test_log_kernel_zero_sum():
    k = log_kernel()
    assert k.shape == (15, 15)
    assert abs(k.sum()) < 1e-15
    np.testing.assert_allclose(k, k.T)


def test_hfen_identical_and_db_sentinel(rng):
    a = rng.random((20, 20))
    assert hfen(a, a) == 0.0
    assert hfen(a, a, mode="db") == -math.inf


def test_hfen_constant_offset_on_interior(rng):
    ref = rng.random((40, 40))
    k = log_kernel()
    diff = direct_same_conv(ref + 2.5, k) - direct_same_conv(ref, k)
    assert np.abs(diff[7:-7, 7:-7]).max() < 1e-12


def test_hfen_matches_direct_convolution(rng):
    ref, rec = rng.random((18, 18)), rng.random((18, 18))
    k = log_kernel()
    lr, lc = direct_same_conv(ref, k), direct_same_conv(rec, k)
    expect = np.linalg.norm(lr - lc) / np.linalg.norm(lr)
    assert abs(hfen(rec, ref) - expect) < 1e-10
    assert abs(hfen(rec, ref, mode="db") - 20 * math.log10(expect)) < 1e-9


def test_hfen_errors(rng):
    with pytest.raises(ValueError):
        hfen(np.ones((10, 10)), np.ones((10, 10)))
    with pytest.raises(ValueError):
        hfen(np.ones((20, 20)), np.zeros((20, 20)))
    with pytest.raises(ValueError):
        hfen(rng.random((20, 20)), rng.random((20, 20)), mode="log")


def test_ssim_identical_exactly_one(rng):
    a = rng.random((24, 24))
    assert ssim(a, a) == 1.0


def test_ssim_inverted_binary_low(rng):
    ref = (rng.random((32, 32)) > 0.5).astype(float)
    assert ssim(1 - ref, ref) < 0.3


def test_ssim_matches_brute_force(rng):
    ref, rec = rng.random((16, 19)), rng.random((16, 19))
    assert abs(ssim(rec, ref, data_range=1.0) - brute_ssim(rec, ref, 1.0)) < 1e-8


def test_ssim_window_matches_definition():
    g = gaussian_window()
    assert g.shape == (11, 11) and g.sum() == pytest.approx(1.0)


def test_ssim_rejects_degenerate_range():
    with pytest.raises(ValueError):
        ssim(np.ones((12, 12)), np.ones((12, 12)))


@given(st.integers(0, 2 ** 31 - 1))
def test_metrics_permutation_symmetric(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((16, 16)), r.random((16, 16))
    perm = r.permutation(256)
    pa, pb = a.ravel()[perm].reshape(16, 16), b.ravel()[perm].reshape(16, 16)
    assert ser(pa, pb) == pytest.approx(ser(a, b), abs=1e-10)
    assert psnr(pa, pb) == pytest.approx(psnr(a, b), abs=1e-10)


@given(st.integers(0, 2 ** 31 - 1))
def test_hfen_nonnegative_and_ssim_bounded(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((16, 16)), r.random((16, 16))
    assert hfen(a, b) >= 0
    assert -1 <= ssim(a, b) <= 1


def test_report_round_trip(rng):
    ref = rng.random((4, 16, 16)) + 0.5
    rec = ref + 0.05 * rng.standard_normal(ref.shape)
    for metric in ("ser", "psnr", "hfen", "ssim"):
        rep = frame_report(rec, ref, metric)
        assert len(rep.values) == 4
        back = MetricReport.from_csv(rep.to_csv())
        np.testing.assert_array_equal(back.values, rep.values)
        assert back.mean == rep.mean and back.std == rep.std
    s = frame_report(rec, ref, "ssim")
    assert s.summary()["data_range"] == ref.max()
    assert frame_report(rec, ref, "hfen").summary()["hfen_mode"] == "ratio"
