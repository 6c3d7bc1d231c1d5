import numpy as np
import pytest
from hypothesis import given, strategies as st

from deblur import difftensor as dt
from deblur.generators import (
    GeneratorNet,
    LatentTrajectory,
    factors_from_channels,
    identity_spatial_net,
    l1_weight_norm,
    seed_from_factors,
    soft_threshold,
    spatial_forward,
    spatial_net,
    temporal_forward,
    temporal_net,
)

from oracles import conv1d_loops, conv2d_loops


def zero_like(net):
    return net.with_params([np.zeros_like(p) for p in net.params])


def test_paper_widths():
    assert spatial_net(30).widths == [60] * 5
    assert temporal_net(2, 30).widths == [2, 16, 16, 16, 30]


def test_identity_1x1_on_positive_seed(rng):
    c = 4
    w = np.eye(c)[:, :, None, None]
    net = GeneratorNet("spatial", [w] * 4, [np.zeros(c)] * 4)
    seed = rng.random((c, 6, 5)) + 0.1
    U = spatial_forward(net, seed)
    np.testing.assert_array_equal(U, factors_from_channels(seed))


def test_identity_net_with_offset_handles_negative_seed(rng):
    U0 = rng.standard_normal((30, 3)) + 1j * rng.standard_normal((30, 3))
    seed = seed_from_factors(U0, (5, 6))
    net = identity_spatial_net(6, 3, offset=-seed.min() + 1)
    np.testing.assert_allclose(spatial_forward(net, seed), U0, atol=1e-12)


def test_zero_nets_give_zero_factors(rng):
    s = zero_like(spatial_net(2, seed=1))
    assert np.all(spatial_forward(s, rng.standard_normal((4, 5, 5))) == 0)
    t = zero_like(temporal_net(2, 3, seed=1))
    assert np.all(temporal_forward(t, rng.standard_normal((2, 9))) == 0)


def test_spatial_matches_layer_oracle(rng):
    net = spatial_net(2, seed=3, hidden=3)
    seed = rng.standard_normal((4, 6, 5))
    h = seed
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = conv2d_loops(h, w, b)
        if l < 3:
            h = np.maximum(h, 0)
    np.testing.assert_allclose(spatial_forward(net, seed), factors_from_channels(h), atol=1e-12)


def test_temporal_matches_layer_oracle(rng):
    net = temporal_net(2, 3, seed=4, hidden=5)
    Z = rng.standard_normal((2, 11))
    h = Z
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = conv1d_loops(h, w, b)
        if l < 3:
            h = np.maximum(h, 0)
    np.testing.assert_allclose(temporal_forward(net, Z), h.T, atol=1e-12)


def test_output_layer_has_no_relu():
    net = temporal_net(2, 4, seed=0)
    V = temporal_forward(net, np.random.default_rng(0).standard_normal((2, 30)))
    assert V.min() < 0


@given(st.integers(0, 2 ** 31 - 1))
def test_constant_latents_give_identical_interior_rows(seed):
    net = temporal_net(2, 3, k=3, seed=seed)
    Z = np.ones((2, 20)) * np.random.default_rng(seed).standard_normal((2, 1))
    V = temporal_forward(net, Z)
    # receptive field radius is 4 for four k=3 layers
    np.testing.assert_allclose(V[4:-4], np.broadcast_to(V[4], V[4:-4].shape), atol=1e-13)


def test_seed_round_trip(rng):
    U = rng.standard_normal((12, 3)) + 1j * rng.standard_normal((12, 3))
    seed = seed_from_factors(U, (3, 4))
    assert seed.shape == (6, 3, 4)
    np.testing.assert_array_equal(seed[0], U[:, 0].real.reshape(3, 4))
    np.testing.assert_array_equal(seed[1], U[:, 0].imag.reshape(3, 4))
    np.testing.assert_array_equal(factors_from_channels(seed), U)


def test_l1_norm_examples(rng):
    net = zero_like(temporal_net(2, 3))
    assert l1_weight_norm(net) == 0
    net.weights[1][0, 0, 1] = -3.0
    assert l1_weight_norm(net) == 3.0
    rnd = spatial_net(2, seed=5)
    assert l1_weight_norm(rnd) == pytest.approx(sum(abs(float(v)) for v in rnd.flat()), rel=1e-14)
    assert l1_weight_norm(rnd, include_bias=False) < l1_weight_norm(rnd)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0, 5))
def test_soft_threshold_is_l1_prox(w, t):
    w = np.array(w)
    p = soft_threshold(w, t)
    np.testing.assert_array_equal(p, np.sign(w) * np.maximum(np.abs(w) - t, 0))
    # prox optimality: the output minimises 0.5(p-w)^2 + t|p| against nearby candidates
    obj = lambda q: 0.5 * (q - w) ** 2 + t * np.abs(q)
    for d in (-1e-3, 1e-3):
        assert np.all(obj(p) <= obj(p + d) + 1e-12)


def test_generator_finite_differences(rng):
    net = spatial_net(1, seed=2, hidden=3)
    seed = rng.standard_normal((2, 5, 5))
    G = rng.standard_normal((2, 5, 5))
    out, nodes = net.build(seed)
    dt.backward(out, G)
    grads = [n.grad for n in nodes]
    params = net.params
    eps = 1e-6
    for pi in range(len(params)):
        d = rng.standard_normal(params[pi].shape)
        f = lambda s: np.sum(G * net.with_params([p + s * d if i == pi else p for i, p in enumerate(params)])(seed))
        num = (f(eps) - f(-eps)) / (2 * eps)
        ana = np.sum(grads[pi] * d)
        assert abs(num - ana) <= 1e-5 * max(1.0, abs(ana))


@pytest.mark.parametrize("bad", [
    lambda: GeneratorNet("spectral", [np.zeros((1, 1, 1))] * 4, [np.zeros(1)] * 4),
    lambda: GeneratorNet("temporal", [np.zeros((1, 1, 1))] * 3, [np.zeros(1)] * 3),
    lambda: GeneratorNet("temporal", [np.zeros((1, 1, 1, 1))] * 4, [np.zeros(1)] * 4),
    lambda: GeneratorNet("temporal", [np.zeros((1, 1, 3))] * 4, [np.zeros(2)] * 4),
    lambda: GeneratorNet("temporal", [np.zeros((2, 1, 3))] * 4, [np.zeros(2)] * 4),
])
def test_malformed_nets_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_forward_shape_and_kind_errors(rng):
    with pytest.raises(ValueError):
        spatial_forward(spatial_net(2), rng.standard_normal((3, 4, 4)))
    with pytest.raises(ValueError):
        temporal_forward(temporal_net(2, 3), rng.standard_normal((3, 8)))
    with pytest.raises(ValueError):
        spatial_forward(temporal_net(2, 3), rng.standard_normal((2, 4, 4)))
    with pytest.raises(ValueError):
        factors_from_channels(np.zeros((3, 2, 2)))
    with pytest.raises(ValueError):
        LatentTrajectory(np.array([[np.nan, 0.0]]))


def test_latent_trajectory_accepted(rng):
    Z = LatentTrajectory(rng.standard_normal((2, 7)))
    assert (Z.d, Z.n_frames) == (2, 7)
    assert temporal_forward(temporal_net(2, 3), Z).shape == (7, 3)


def test_random_init_deterministic():
    a, b = spatial_net(2, seed=9), spatial_net(2, seed=9)
    assert a.flat().tobytes() == b.flat().tobytes()
    bound = 1 / np.sqrt(4 * 9)
    assert np.abs(a.weights[0]).max() <= bound
