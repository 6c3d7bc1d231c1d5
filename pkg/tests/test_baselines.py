import numpy as np
import pytest
from hypothesis import given, strategies as st

from deblur.baselines import (
    FactorPair,
    conjugate_residual,
    lowrank_recon,
    navigator_distances,
    storm_laplacian,
    storm_recon,
)
from deblur.metrics import ser
from deblur.mri_ops import CoilMaps, KSpaceDataset
from deblur.phantom import (
    ImageSeries,
    PhantomConfig,
    acquire,
    cartesian_masks,
    golden_angle_schedule,
    make_coilmaps,
    make_phantom,
)


def radial(series, sigma=0.0, spokes=8, coils=3, seed=0):
    h = series.shape[0]
    return acquire(series, make_coilmaps(coils, *series.shape, seed=seed),
                   golden_angle_schedule(series.n_frames, spokes, h), sigma, seed=seed + 1)


def rank1_series(n_f=10, h=16):
    r = np.random.default_rng(3)
    img = make_phantom(PhantomConfig(H=h, W=h, duration=0.0468, cardiac_amplitude=0, respiratory_amplitude=0)).frames[0]
    t = 1.0 + 0.3 * np.sin(np.arange(n_f)) + 0.05 * r.standard_normal(n_f)
    return ImageSeries(t[:, None, None] * img[None])


def test_lowrank_rank1_noiseless_exact():
    s = rank1_series()
    masks, nav = cartesian_masks(10, 16, 16, 4)
    ds = acquire(s, make_coilmaps(3, 16, 16), masks=masks, nav_mask=nav)
    fp = lowrank_recon(ds, r=1, lam=0.0, iters=100)
    assert ser(fp.series(s.shape), s.frames) > 40


def test_lowrank_rank1_radial_improves_with_sweeps():
    s = rank1_series()
    ds = radial(s, spokes=12)
    short, long = (ser(lowrank_recon(ds, r=1, lam=0.0, iters=n).series(s.shape), s.frames) for n in (30, 300))
    assert long > short > 15


def test_lowrank_penalty_shrinks_factors():
    s = rank1_series(6, 16)
    ds = radial(s, sigma=0.1)
    norms = []
    for lam in (1e3, 3e3, 1e4, 1e5, 1e6):
        fp = lowrank_recon(ds, r=2, lam=lam, iters=40)
        norms.append((np.linalg.norm(fp.U), np.linalg.norm(fp.V)))
    u, v = np.array(norms).T
    assert np.all(np.diff(u) <= 0) and np.all(np.diff(v) <= 0)
    assert np.all(np.diff(u[:3]) < 0) and np.all(np.diff(v[:3]) < 0)
    assert u[-1] < 1e-20 and v[-1] < 1e-20


def test_lowrank_full_cartesian_matches_adjoint():
    r = np.random.default_rng(0)
    n_f, h = 4, 8
    frames = r.standard_normal((n_f, h, h)) + 1j * r.standard_normal((n_f, h, h))
    masks = np.ones((n_f, h, h), dtype=bool)
    nav = np.zeros((h, h), dtype=bool)
    nav[h // 2] = True
    ds = acquire(ImageSeries(frames), make_coilmaps(2, h, h, seed=1), masks=masks, nav_mask=nav, noise_sigma=0.3, seed=2)
    adj = np.stack([sum(ds.coilmaps.maps[c].conj() * ds.adjoint(ds.samples[i], i)[c] for c in range(2))
                    for i in range(n_f)]) if ds.adjoint(ds.samples[0], 0).ndim == 3 else \
        np.stack([ds.adjoint(ds.samples[i], i) for i in range(n_f)])
    fp = lowrank_recon(ds, r=n_f, lam=0.0, iters=400)
    np.testing.assert_allclose(fp.series((h, h)), adj, atol=1e-6 * np.abs(adj).max())


def test_lowrank_monotone_and_deterministic():
    s = make_phantom(PhantomConfig(H=16, W=16, duration=0.5, respiratory_amplitude=1.0))
    ds = radial(s, sigma=0.5)
    fp = lowrank_recon(ds, r=3, lam=1.0, iters=30)
    obj = np.array(fp.info["objective"])
    assert np.all(np.diff(obj) <= 1e-12 * obj[0])
    again = lowrank_recon(ds, r=3, lam=1.0, iters=30)
    assert again.U.tobytes() == fp.U.tobytes()


def test_lowrank_rank_bound():
    s = rank1_series(4)
    with pytest.raises(ValueError):
        lowrank_recon(radial(s), r=5)


def test_identical_frames_have_unit_weight():
    s = make_phantom(PhantomConfig(H=16, W=16, duration=0.3, cardiac_amplitude=0, respiratory_amplitude=0))
    ds = radial(s)
    assert np.all(navigator_distances(ds) == 0)
    lap = storm_laplacian(ds, k_nn=None)
    off = ~np.eye(s.n_frames, dtype=bool)
    assert np.all(lap.W[off] == 1.0)
    n = s.n_frames
    np.testing.assert_allclose(lap.L, n * np.eye(n) - np.ones((n, n)), atol=1e-15)


def test_laplacian_invariants():
    s = make_phantom(PhantomConfig(H=16, W=16, duration=1.5, respiratory_amplitude=1.0))
    lap = storm_laplacian(radial(s, sigma=0.2))
    assert np.array_equal(lap.W, lap.W.T) and np.all(lap.W >= 0)
    assert np.abs(lap.L @ np.ones(s.n_frames)).max() < 1e-12 * lap.W.sum()
    vals, vecs = lap.eig()
    assert np.all(vals >= 0) and vals[0] < 1e-10
    raw = np.linalg.eigvalsh(lap.L)
    assert raw.min() > -1e-10
    assert np.all(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] > 0)


def test_cardiac_period_frames_are_neighbours():
    s = make_phantom(PhantomConfig(H=32, W=32, duration=3.0, respiratory_amplitude=0))
    lap = storm_laplacian(radial(s, sigma=0.05), k_nn=5)
    n = s.n_frames
    for i in range(n - 12):
        assert lap.W[i, i + 12] > 0 and lap.W[i + 12, i] > 0


def test_missing_navigators_rejected():
    s = rank1_series(4, 16)
    masks = np.ones((4, 16, 16), dtype=bool)
    ds = acquire(s, make_coilmaps(1, 16, 16), masks=masks)
    with pytest.raises(ValueError):
        storm_laplacian(ds)


def test_storm_static_gives_average():
    s = rank1_series(8, 16)
    frames = np.repeat(s.frames.mean(0, keepdims=True), 8, axis=0)
    static = ImageSeries(frames)
    ds = radial(static, sigma=0.0, spokes=6)
    lap = storm_laplacian(ds, k_nn=None)
    fp = storm_recon(ds, lap, r=1, lam=1.0, iters=200)
    np.testing.assert_allclose(np.abs(fp.V[:, 0]), 1 / np.sqrt(8), atol=1e-12)
    rec = fp.series(static.shape)
    np.testing.assert_allclose(rec, np.broadcast_to(rec.mean(0), rec.shape), atol=1e-10)


def test_storm_v_orthonormal_and_residuals_monotone():
    s = make_phantom(PhantomConfig(H=16, W=16, duration=1.5, respiratory_amplitude=1.0))
    ds = radial(s, sigma=0.3)
    fp = storm_recon(ds, storm_laplacian(ds), r=6, lam=10.0, iters=40)
    assert np.abs(fp.V.T @ fp.V - np.eye(6)).max() < 1e-10
    res = np.array(fp.info["residuals"])
    assert np.all(np.diff(res) <= 1e-12 * res[0])
    with pytest.raises(ValueError):
        storm_recon(ds, storm_laplacian(ds), r=ds.n_frames + 1)


@given(st.integers(2, 12), st.integers(0, 2 ** 31 - 1))
def test_conjugate_residual_solves_hermitian(n, seed):
    r = np.random.default_rng(seed)
    M = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
    A = M @ M.conj().T + n * np.eye(n)
    b = r.standard_normal(n) + 1j * r.standard_normal(n)
    x, hist, ok = conjugate_residual(lambda v: A @ v, b, np.zeros(n, complex), max_iter=4 * n, tol=1e-12)
    assert ok
    np.testing.assert_allclose(A @ x, b, atol=1e-9 * np.linalg.norm(b))
    assert all(b2 <= b1 * (1 + 1e-12) for b1, b2 in zip(hist, hist[1:]))


def test_factor_pair_validation():
    with pytest.raises(ValueError):
        FactorPair(np.zeros((4, 2)), np.zeros((3, 3)))
    fp = FactorPair(np.ones((4, 1)), np.array([[1.0], [2.0]]))
    np.testing.assert_array_equal(fp.frame(1, (2, 2)), 2 * np.ones((2, 2)))
