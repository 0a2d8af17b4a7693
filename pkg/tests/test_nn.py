import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from canalrl.nn import (MlpParams, adam_init, adam_step, gaussian_sample, init_mlp, mlp_backward,
                        mlp_forward, params_from_flat, params_to_flat, zeros_like_params)
from oracles import fd_gradient, grad_mismatch, loop_forward


def scalar_net(*layers):
    sizes = [np.shape(layers[0][0])[1]] + [np.shape(w)[0] for w, _ in layers]
    return MlpParams(tuple(sizes), tuple(np.array(w, float) for w, _ in layers),
                     tuple(np.array(b, float) for _, b in layers))


class TestForward:
    def test_zero_network_gives_zero(self, rng):
        p = zeros_like_params(init_mlp((4, 6, 3), rng))
        assert np.array_equal(mlp_forward(p, rng.normal(size=4)), np.zeros(3))

    def test_single_affine_layer(self):
        p = scalar_net(([[2.0]], [1.0]))
        assert mlp_forward(p, [3.0]) == pytest.approx([7.0])

    def test_relu_clips_negative_preactivation(self):
        p = scalar_net(([[-1.0]], [0.0]), ([[5.0]], [0.0]))
        assert mlp_forward(p, [4.0]) == pytest.approx([0.0])

    def test_matches_loop_oracle_batched(self, rng):
        p = init_mlp((3, 7, 5, 2), rng)
        x = rng.normal(size=(9, 3))
        np.testing.assert_allclose(mlp_forward(p, x), loop_forward(p, x)[0], rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch_rejected(self, rng):
        p = init_mlp((3, 4, 2), rng)
        with pytest.raises(ValueError):
            mlp_forward(p, np.zeros(4))

    def test_invalid_shapes_rejected(self):
        with pytest.raises(ValueError):
            MlpParams((2, 3), (np.zeros((2, 3)),), (np.zeros(3),))
        with pytest.raises(ValueError):
            MlpParams((2,), (), ())

    def test_init_bounds(self, rng):
        p = init_mlp((16, 8, 1), rng)
        assert np.all(np.abs(p.weights[0]) <= 1 / math.sqrt(16))
        assert np.all(np.abs(p.weights[1]) <= 1 / math.sqrt(8))
        assert all(np.all(b == 0) for b in p.biases)


class TestBackward:
    def test_zero_cotangent(self, rng):
        p = init_mlp((3, 4, 2), rng)
        g, gx = mlp_backward(p, rng.normal(size=3), np.zeros(2))
        assert all(np.all(a == 0) for a in g.arrays())
        assert np.all(gx == 0)

    def test_linear_case(self):
        p = scalar_net(([[2.0]], [0.5]))
        g, gx = mlp_backward(p, np.array([3.0]), np.array([1.0]))
        assert g.weights[0][0, 0] == 3.0
        assert g.biases[0][0] == 1.0
        assert gx[0] == 2.0

    def test_random_342_matches_finite_differences(self, rng):
        p = init_mlp((3, 4, 2), rng)
        p = p.with_arrays([a + rng.normal(0, 0.2, a.shape) for a in p.arrays()])
        x = rng.normal(size=3)
        cot = rng.normal(size=2)

        def loss(q):
            out, pattern = loop_forward(q, x)
            return float(out @ cot), pattern

        g, _ = mlp_backward(p, x, cot)
        bad, worst = grad_mismatch(g.arrays(), fd_gradient(loss, p))
        assert bad == 0, worst

    def test_input_gradient_matches_finite_differences(self, rng):
        p = init_mlp((4, 6, 3), rng)
        x = rng.normal(size=4)
        cot = rng.normal(size=3)
        _, gx = mlp_backward(p, x, cot)
        h = 1e-6
        num = np.array([(mlp_forward(p, x + h * e) @ cot - mlp_forward(p, x - h * e) @ cot) / (2 * h)
                        for e in np.eye(4)])
        np.testing.assert_allclose(gx, num, rtol=1e-6, atol=1e-8)

    def test_batch_gradient_is_sum_of_rows(self, rng):
        p = init_mlp((3, 5, 2), rng)
        x = rng.normal(size=(4, 3))
        cot = rng.normal(size=(4, 2))
        g, _ = mlp_backward(p, x, cot)
        rows = [mlp_backward(p, x[i], cot[i])[0].arrays() for i in range(4)]
        for k, a in enumerate(g.arrays()):
            np.testing.assert_allclose(a, sum(r[k] for r in rows), rtol=1e-12, atol=1e-14)

    def test_shape_mismatch_rejected(self, rng):
        p = init_mlp((3, 4, 2), rng)
        with pytest.raises(ValueError):
            mlp_backward(p, np.zeros(3), np.zeros(3))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), hidden=st.lists(st.integers(1, 6), min_size=1, max_size=2))
    def test_property_gradient_correctness(self, seed, hidden):
        rng = np.random.default_rng(seed)
        sizes = (4, *hidden, 3)
        p = init_mlp(sizes, rng)
        p = p.with_arrays([a + rng.normal(0, 0.3, a.shape) for a in p.arrays()])
        assert p.n_params <= 200
        x = rng.normal(size=(3, 4))
        cot = rng.normal(size=(3, 3))

        def loss(q):
            out, pattern = loop_forward(q, x)
            return float(np.sum(out * cot)), pattern

        g, _ = mlp_backward(p, x, cot)
        bad, worst = grad_mismatch(g.arrays(), fd_gradient(loss, p))
        assert bad == 0, worst


class TestAdam:
    def test_null_update(self, rng):
        p = init_mlp((2, 3, 1), rng)
        new, st_ = adam_step(p, zeros_like_params(p), adam_init(p))
        assert all(np.array_equal(a, b) for a, b in zip(new.arrays(), p.arrays()))
        assert st_.step_count == 1

    def test_first_step_magnitude_is_learning_rate(self):
        p = scalar_net(([[0.0]], [0.0]))
        g = scalar_net(([[1.0]], [0.0]))
        new, state = adam_step(p, g, adam_init(p, learning_rate=0.1))
        # m_hat = 1, v_hat = 1 after bias correction
        assert new.weights[0][0, 0] == pytest.approx(-0.1, abs=1e-8)
        assert state.step_count == 1

    def test_matches_hand_recurrence_over_steps(self):
        p = scalar_net(([[0.5]], [0.0]))
        state = adam_init(p, learning_rate=0.01)
        w, m, v = 0.5, 0.0, 0.0
        for t, grad in enumerate([0.3, -1.2, 0.7], start=1):
            g = scalar_net(([[grad]], [0.0]))
            p, state = adam_step(p, g, state)
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad ** 2
            w -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert p.weights[0][0, 0] == pytest.approx(w, rel=1e-12)
        assert state.step_count == 3

    def test_deterministic(self, rng):
        p = init_mlp((3, 4, 2), rng)
        g = p.with_arrays([rng.normal(size=a.shape) for a in p.arrays()])
        s = adam_init(p)
        a1, s1 = adam_step(p, g, s)
        a2, s2 = adam_step(p, g, s)
        assert params_to_flat(a1).tobytes() == params_to_flat(a2).tobytes()
        assert params_to_flat(s1.second_moment).tobytes() == params_to_flat(s2.second_moment).tobytes()

    def test_non_finite_gradient_rejected(self, rng):
        p = init_mlp((2, 2), rng)
        g = p.with_arrays([np.full(a.shape, np.nan) for a in p.arrays()])
        with pytest.raises(FloatingPointError):
            adam_step(p, g, adam_init(p))

    def test_input_not_mutated(self, rng):
        p = init_mlp((2, 3, 1), rng)
        before = params_to_flat(p).copy()
        adam_step(p, p, adam_init(p))
        assert np.array_equal(before, params_to_flat(p))


class TestGaussianHead:
    def test_standard_normal_at_mean(self):
        out = gaussian_sample(np.zeros(5), np.zeros(5), np.zeros(5))
        assert np.array_equal(out.action, np.zeros(5))
        per_dim = -0.5 * math.log(2 * math.pi)
        assert per_dim == pytest.approx(-0.91894, abs=1e-5)
        # the squash correction at u = 0 is only the 1e-6 floor
        assert out.log_prob == pytest.approx(5 * (per_dim - math.log1p(1e-6)), abs=1e-12)
        assert out.log_prob == pytest.approx(5 * per_dim, abs=1e-5)

    def test_saturation_keeps_log_prob_finite(self):
        out = gaussian_sample(np.full(5, 10.0), np.zeros(5), np.zeros(5))
        assert np.all(out.action == pytest.approx(1.0))
        assert np.isfinite(out.log_prob)

    def test_matches_direct_density(self):
        mu, sigma, eps = 0.2, 0.5, 1.0
        out = gaussian_sample(np.full(5, mu), np.full(5, math.log(sigma)), np.full(5, eps))
        u = mu + sigma * eps
        per_dim = (-0.5 * ((u - mu) / sigma) ** 2 - math.log(sigma * math.sqrt(2 * math.pi))
                   - math.log(1 - math.tanh(u) ** 2 + 1e-6))
        assert out.log_prob == pytest.approx(5 * per_dim, abs=1e-12)

    def test_log_std_is_clamped(self):
        out = gaussian_sample(np.zeros(5), np.array([-50, -20, 0, 2, 9.0]), np.ones(5))
        np.testing.assert_array_equal(out.log_std, [-20, -20, 0, 2, 2])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.lists(st.floats(-3, 1.5), min_size=5, max_size=5),
           st.lists(st.floats(-4, 4), min_size=5, max_size=5))
    def test_property_squash_consistency(self, mu, ls, eps):
        mu, ls, eps = map(np.array, (mu, ls, eps))
        out = gaussian_sample(mu, ls, eps)
        assert np.array_equal(out.action, np.tanh(mu + np.exp(ls) * eps))
        assert np.all(np.abs(out.action) <= 1.0)
        assert np.isfinite(out.log_prob)

    def test_saturation_correction_grows_toward_bounds(self):
        # same Gaussian term (noise fixed), mean pushed outward: the squash term raises density
        lps = [gaussian_sample(np.full(5, m), np.zeros(5), np.zeros(5)).log_prob for m in (0.0, 1.0, 2.0, 4.0)]
        assert all(b > a for a, b in zip(lps, lps[1:]))

    def test_batched_matches_rows(self, rng):
        mu, ls, eps = rng.normal(size=(3, 4, 5))
        out = gaussian_sample(mu, ls, eps)
        for i in range(4):
            assert out.log_prob[i] == gaussian_sample(mu[i], ls[i], eps[i]).log_prob


def test_flat_round_trip(rng):
    p = init_mlp((12, 7, 3), rng)
    q = params_from_flat(p.layer_sizes, params_to_flat(p))
    assert params_to_flat(q).tobytes() == params_to_flat(p).tobytes()
    with pytest.raises(ValueError):
        params_from_flat(p.layer_sizes, np.zeros(5))
