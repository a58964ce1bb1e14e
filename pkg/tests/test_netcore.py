import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiermda import netcore
from hiermda.data import Dataset
from hiermda.netcore import DimensionError, NetSpec, Sample

from . import oracles


def rel_err(analytic, numeric, floor=1e-8):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    small = np.abs(analytic) < floor
    assert np.all(np.abs(analytic - numeric)[small] <= floor)
    big = ~small
    if not big.any():
        return 0.0
    return float(np.max(np.abs(analytic - numeric)[big] / np.abs(analytic[big])))


class TestNetSpec:
    def test_param_count(self):
        spec = NetSpec((2, 3, 2))
        assert spec.num_params == 2 * 3 + 3 + 3 * 2 + 2 == 17

    @pytest.mark.parametrize("boundary", [0, 1, 2])
    def test_encoder_decoder_split(self, boundary):
        spec = NetSpec((2, 3, 2), encoder_boundary=boundary)
        assert spec.num_encoder_params + spec.num_decoder_params == 17
        assert spec.num_encoder_params == [0, 9, 17][boundary]

    def test_default_boundary_puts_last_layer_in_decoder(self):
        assert NetSpec((4, 5, 6, 3)).encoder_boundary == 2

    @pytest.mark.parametrize("widths", [(3,), (3, 1), (3, 0, 2)])
    def test_rejects_bad_widths(self, widths):
        with pytest.raises(ValueError):
            NetSpec(widths)

    def test_rejects_bad_boundary(self):
        with pytest.raises(ValueError):
            NetSpec((2, 2), encoder_boundary=2)


class TestInit:
    def test_deterministic(self):
        spec = NetSpec((3, 5, 4))
        a = netcore.init_params(spec, 7)
        b = netcore.init_params(spec, 7)
        assert a.tobytes() == b.tobytes()

    def test_biases_zero(self):
        spec = NetSpec((3, 5, 4))
        for _, b in netcore.unflatten(spec, netcore.init_params(spec, 3)):
            assert np.all(b == 0.0)

    def test_length(self):
        assert netcore.init_params(NetSpec((2, 3, 2)), 11).shape == (17,)

    def test_weight_scale(self):
        spec = NetSpec((400, 300, 2))
        W, _ = netcore.unflatten(spec, netcore.init_params(spec, 0))[0]
        assert abs(W.std() - 1 / math.sqrt(400)) < 2e-3
        assert abs(W.mean()) < 2e-3


def test_layout_round_trip(rng):
    spec = NetSpec((3, 4, 5, 2))
    theta = rng.normal(size=spec.num_params)
    assert np.array_equal(netcore.flatten(netcore.unflatten(spec, theta)), theta)


class TestForward:
    def test_zero_params_uniform(self, backend):
        spec = NetSpec((3, 4, 8))
        p = netcore.forward(spec, np.zeros(spec.num_params), [1.0, -2.0, 3.0])
        np.testing.assert_array_equal(p, np.full(8, 0.125))

    def test_hand_softmax(self, backend):
        # single affine layer 1 -> 2 with weights (1, -1): logits (ln 3, -ln 3)
        spec = NetSpec((1, 2))
        theta = np.array([1.0, -1.0, 0.0, 0.0])
        p = netcore.forward(spec, theta, [math.log(3.0)])
        np.testing.assert_allclose(p, [0.9, 0.1], rtol=0, atol=1e-15)

    def test_matches_scalar_oracle(self, backend, rng):
        for act in ("relu", "tanh"):
            spec = NetSpec((3, 4, 5, 3), act)
            theta = rng.normal(size=spec.num_params)
            x = rng.normal(size=3)
            np.testing.assert_allclose(netcore.forward(spec, theta, x),
                                       oracles.probs(spec.layer_widths, act, theta, x),
                                       rtol=0, atol=1e-14)

    def test_dimension_error(self, backend):
        spec = NetSpec((3, 2))
        with pytest.raises(DimensionError):
            netcore.forward(spec, np.zeros(spec.num_params), [1.0, 2.0])
        with pytest.raises(DimensionError):
            netcore.forward(spec, np.zeros(spec.num_params + 1), [1.0, 2.0, 3.0])

    @settings(max_examples=50, deadline=None)
    @given(scale=st.floats(1e-3, 1e4), seed=st.integers(0, 10_000))
    def test_prediction_invariants_under_large_params(self, scale, seed):
        spec = NetSpec((2, 6, 5))
        r = np.random.default_rng(seed)
        theta = scale * r.normal(size=spec.num_params)
        P = netcore.forward_batch(spec, theta, r.normal(size=(7, 2)))
        assert np.all(np.isfinite(P)) and np.all(P >= 0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-9)


class TestDataLoss:
    def test_half_half_is_ln2(self, backend):
        spec = NetSpec((1, 2))
        loss = netcore.data_loss(spec, np.zeros(4), [Sample(np.array([0.3]), 0)])
        assert loss == pytest.approx(math.log(2), abs=1e-15)

    def test_confident_correct_is_zero(self, backend):
        spec = NetSpec((1, 2))
        theta = np.array([0.0, 0.0, 800.0, -800.0])  # biases force p = (1, 0)
        assert netcore.data_loss(spec, theta, [Sample(np.array([1.0]), 0)]) == 0.0

    def test_clamped_when_wrong_and_certain(self, backend):
        spec = NetSpec((1, 2))
        theta = np.array([0.0, 0.0, 800.0, -800.0])
        loss = netcore.data_loss(spec, theta, [Sample(np.array([1.0]), 1)])
        assert loss == pytest.approx(-math.log(1e-12))

    def test_matches_scalar_oracle(self, backend, rng):
        spec = NetSpec((3, 4, 3), "tanh")
        theta = rng.normal(size=spec.num_params)
        X = rng.normal(size=(3, 3))
        y = np.array([0, 2, 1])
        got = netcore.data_loss(spec, theta, Dataset("d", X, y))
        want = oracles.cross_entropy(spec.layer_widths, "tanh", theta, X, y)
        assert abs(got - want) <= 1e-12

    def test_empty_batch(self, backend):
        with pytest.raises(ValueError):
            netcore.data_loss(NetSpec((1, 2)), np.zeros(4), [])

    def test_permutation_invariant(self, backend, rng):
        spec = NetSpec((2, 5, 3))
        theta = rng.normal(size=spec.num_params)
        X = rng.normal(size=(20, 2))
        y = rng.integers(0, 3, 20)
        perm = rng.permutation(20)
        a = netcore.data_loss(spec, theta, Dataset("d", X, y))
        b = netcore.data_loss(spec, theta, Dataset("d", X[perm], y[perm]))
        assert a == pytest.approx(b, rel=1e-13)


class TestGradients:
    def test_fd_quadratic(self):
        g = netcore.fd_grad(lambda t: float(np.sum(t * t)), np.array([1.0, -2.0]), 1e-6)
        np.testing.assert_allclose(g, [2.0, -4.0], atol=1e-6)

    def test_fd_constant(self):
        np.testing.assert_array_equal(netcore.fd_grad(lambda t: 3.0, np.ones(5)), np.zeros(5))

    def test_fd_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            netcore.fd_grad(lambda t: 0.0, np.ones(2), 0.0)

    @pytest.mark.parametrize("act", ["relu", "tanh"])
    def test_data_grad_vs_fd(self, backend, act):
        r = np.random.default_rng(99)
        spec = NetSpec((4, 6, 5, 3), act)
        assert spec.num_params <= 200
        for _ in range(10):
            # moderate scale keeps every probability above the 1e-12 log clamp
            theta = 0.5 * r.normal(size=spec.num_params)
            batch = Dataset("d", r.normal(size=(5, 4)), r.integers(0, 3, 5))
            analytic = netcore.data_grad(spec, theta, batch)
            numeric = netcore.fd_grad(lambda t: netcore.data_loss(spec, t, batch), theta, 1e-5)
            assert rel_err(analytic, numeric) <= 1e-5

    def test_zero_residual_bias_grad(self, backend):
        spec = NetSpec((1, 3, 2))
        theta = np.zeros(spec.num_params)
        theta[-2:] = [800.0, -800.0]
        g = netcore.data_grad(spec, theta, [Sample(np.array([0.5]), 0), Sample(np.array([-1.0]), 0)])
        np.testing.assert_array_equal(g[-2:], [0.0, 0.0])

    def test_duplicating_batch_doubles_grad(self, backend, rng):
        spec = NetSpec((2, 4, 3))
        theta = rng.normal(size=spec.num_params)
        X = rng.normal(size=(6, 2))
        y = rng.integers(0, 3, 6)
        g1 = netcore.data_grad(spec, theta, Dataset("d", X, y))
        g2 = netcore.data_grad(spec, theta, Dataset("d", np.vstack([X, X]), np.concatenate([y, y])))
        np.testing.assert_allclose(g2, 2 * g1, rtol=1e-13, atol=1e-15)
