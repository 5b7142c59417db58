"""Loss and gradient checks against central finite differences.

Every gradient the trainer applies is validated here on small random
instances: perturb one input entry by +-h, difference the loss, compare to
the analytic gradient entry. 64-bit throughout, h = 1e-5.
"""

import math

import numpy as np
import pytest

from distilvec.trainer import (
    AttentionLayer,
    attention_context,
    log_sigmoid,
    loss_contextualized,
    loss_negative,
    loss_semantic,
    sigmoid,
)

H = 1e-5
REL_TOL = 1e-5
LOG_2 = math.log(2.0)
NEG_LOG_SIGMOID_1 = 0.3132616875182228  # -log(sigmoid(1))


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def central_diff(f, x: np.ndarray, index: tuple) -> float:
    plus = x.copy()
    minus = x.copy()
    plus[index] += H
    minus[index] -= H
    return (f(plus) - f(minus)) / (2.0 * H)


class TestSigmoidHelpers:
    def test_sigmoid_stable_at_extremes(self):
        assert sigmoid(1000.0) == 1.0
        assert sigmoid(-1000.0) == pytest.approx(0.0, abs=1e-300)
        assert sigmoid(0.0) == 0.5

    def test_log_sigmoid_matches_naive_in_safe_range(self):
        for x in np.linspace(-30, 30, 61):
            assert abs(log_sigmoid(x) - math.log(1 / (1 + math.exp(-x)))) < 1e-12

    def test_log_sigmoid_no_overflow(self):
        assert log_sigmoid(-1000.0) == -1000.0
        assert log_sigmoid(1000.0) == 0.0


class TestLossSemantic:
    def test_orthogonal_gives_log_two(self):
        context = np.array([[1.0, 0.0, 0.0]])
        center = np.array([0.0, 1.0, 0.0])
        loss, _, _ = loss_semantic(context, center)
        assert loss == pytest.approx(LOG_2, abs=1e-12)

    def test_parallel_unit_vectors(self):
        context = np.array([[0.0, 1.0]])
        center = np.array([0.0, 1.0])
        loss, _, _ = loss_semantic(context, center)
        assert loss == pytest.approx(NEG_LOG_SIGMOID_1, abs=1e-12)

    def test_repeated_rows_share_gradient(self):
        rng = np.random.default_rng(1)
        rows = np.tile(rng.standard_normal(4), (3, 1))
        center = rng.standard_normal(4)
        _, grad_ctx, _ = loss_semantic(rows, center)
        assert grad_ctx.shape == (4,)

    @pytest.mark.parametrize("normalize", [True, False])
    def test_gradients_match_finite_differences(self, normalize):
        rng = np.random.default_rng(42)
        for _ in range(100):
            m = int(rng.integers(1, 6))
            rows = rng.standard_normal((m, 5))
            center = rng.standard_normal(5)
            _, grad_ctx, grad_center = loss_semantic(rows, center, normalize=normalize)
            r = int(rng.integers(0, m))
            j = int(rng.integers(0, 5))
            fd = central_diff(
                lambda x: loss_semantic(x, center, normalize=normalize)[0], rows, (r, j)
            )
            assert rel_err(grad_ctx[j], fd) < REL_TOL
            fd = central_diff(
                lambda x: loss_semantic(rows, x, normalize=normalize)[0], center, (j,)
            )
            assert rel_err(grad_center[j], fd) < REL_TOL

    def test_empty_context_rejected(self):
        with pytest.raises(ValueError):
            loss_semantic(np.zeros((0, 3)), np.zeros(3))


class TestLossContextualized:
    def test_orthogonal_gives_log_two(self):
        loss, _, _ = loss_contextualized(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert loss == pytest.approx(LOG_2, abs=1e-12)

    def test_identical_unit_vectors(self):
        v = np.array([1.0, 0.0])
        loss, grad_v, grad_u = loss_contextualized(v, v.copy())
        assert loss == pytest.approx(NEG_LOG_SIGMOID_1, abs=1e-12)
        # Normalized dot of a vector with itself is constant, so both
        # gradients vanish identically.
        assert np.allclose(grad_v, 0.0, atol=1e-15)
        assert np.allclose(grad_u, 0.0, atol=1e-15)

    @pytest.mark.parametrize("normalize", [True, False])
    def test_gradients_match_finite_differences(self, normalize):
        rng = np.random.default_rng(17)
        for _ in range(100):
            v = rng.standard_normal(6)
            u = rng.standard_normal(6)
            _, grad_v, grad_u = loss_contextualized(v, u, normalize=normalize)
            j = int(rng.integers(0, 6))
            fd = central_diff(
                lambda x: loss_contextualized(x, u, normalize=normalize)[0], v, (j,)
            )
            assert rel_err(grad_v[j], fd) < REL_TOL
            fd = central_diff(
                lambda x: loss_contextualized(v, x, normalize=normalize)[0], u, (j,)
            )
            assert rel_err(grad_u[j], fd) < REL_TOL

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            loss_contextualized(np.zeros(3), np.zeros(4))


class TestLossNegative:
    def test_orthogonal_negatives(self):
        negatives = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        center = np.array([0.0, 1.0])
        loss, _, _ = loss_negative(negatives, center)
        assert loss == pytest.approx(-3 * LOG_2, abs=1e-12)

    def test_negative_equal_to_unit_center(self):
        v = np.array([0.0, 0.0, 1.0])
        loss, _, _ = loss_negative(v[None, :], v)
        assert loss == pytest.approx(-NEG_LOG_SIGMOID_1, abs=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            k = int(rng.integers(1, 7))
            rows = rng.standard_normal((k, 4))
            center = rng.standard_normal(4)
            _, grad_rows, grad_center = loss_negative(rows, center)
            r = int(rng.integers(0, k))
            j = int(rng.integers(0, 4))
            fd = central_diff(lambda x: loss_negative(x, center)[0], rows, (r, j))
            assert rel_err(grad_rows[r, j], fd) < REL_TOL
            fd = central_diff(lambda x: loss_negative(rows, x)[0], center, (j,))
            assert rel_err(grad_center[j], fd) < REL_TOL

    def test_minimizing_pushes_products_down(self):
        # One plain gradient step on the negative rows must reduce the loss
        # (the term is added to the minimized joint loss as printed).
        rng = np.random.default_rng(3)
        rows = rng.standard_normal((4, 5))
        center = rng.standard_normal(5)
        loss, grad_rows, _ = loss_negative(rows, center)
        stepped, _, _ = loss_negative(rows - 0.1 * grad_rows, center)
        assert stepped < loss


class TestAttention:
    def test_center_only_limit(self):
        rng = np.random.default_rng(0)
        layer = AttentionLayer(
            rng.standard_normal((6, 3)), rng.standard_normal((6, 3)),
            lambda1=0.7, lambda2=0.0,
        )
        o_c = rng.standard_normal(6)
        o_ctx = rng.standard_normal((4, 6))
        got = attention_context(layer, o_c, o_ctx)
        assert np.allclose(got, 0.7 * layer.w1.T @ o_c, atol=1e-14)

    def test_symmetric_context_collapses(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((5, 3))
        layer = AttentionLayer(w, w.copy(), lambda1=0.5, lambda2=0.5)
        o_c = rng.standard_normal(5)
        o_ctx = np.tile(o_c, (3, 1))
        got = attention_context(layer, o_c, o_ctx)
        assert np.allclose(got, w.T @ o_c, atol=1e-13)

    def test_reduced_equals_per_position_for_linear_phi(self):
        # Averaging before the shared map equals averaging the mapped
        # positions, exactly, when phi is the identity.
        rng = np.random.default_rng(2)
        layer = AttentionLayer(
            rng.standard_normal((6, 3)), rng.standard_normal((6, 3)),
            lambda1=0.4, lambda2=0.9,
        )
        o_c = rng.standard_normal(6)
        o_ctx = rng.standard_normal((5, 6))
        reduced = attention_context(layer, o_c, o_ctx)
        per_position = 0.4 * layer.w1.T @ o_c + 0.9 * np.mean(
            [layer.w2.T @ o for o in o_ctx], axis=0
        )
        assert np.allclose(reduced, per_position, rtol=1e-12, atol=1e-12)

    def test_reduction_differs_for_tanh(self):
        rng = np.random.default_rng(4)
        layer = AttentionLayer(
            rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), phi="tanh"
        )
        o_c = rng.standard_normal(4)
        o_ctx = rng.standard_normal((3, 4)) * 2.0
        reduced = attention_context(layer, o_c, o_ctx)
        per_position = 0.5 * layer.w1.T @ o_c + 0.5 * np.mean(
            [layer.w2.T @ np.tanh(o) for o in o_ctx], axis=0
        )
        assert not np.allclose(reduced, per_position, atol=1e-6)

    def test_empty_context_rejected(self):
        layer = AttentionLayer(np.zeros((3, 2)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            layer.context_vector(np.zeros(3), np.zeros((0, 3)))

    @pytest.mark.parametrize("phi", ["none", "tanh"])
    def test_weight_gradients_match_finite_differences(self, phi):
        # Chain: W1/W2 -> context vector -> alignment loss against a center.
        rng = np.random.default_rng(23)
        for _ in range(100):
            d, d_emb, m = 4, 3, int(rng.integers(1, 5))
            w1 = rng.standard_normal((d, d_emb))
            w2 = rng.standard_normal((d, d_emb))
            o_c = rng.standard_normal(d)
            o_ctx = rng.standard_normal((m, d))
            center = rng.standard_normal(d_emb)

            def loss_of(w1_val, w2_val):
                layer = AttentionLayer(w1_val, w2_val, lambda1=0.5, lambda2=0.5, phi=phi)
                v = layer.context_vector(o_c, o_ctx)
                return loss_contextualized(v, center)[0]

            layer = AttentionLayer(w1, w2, lambda1=0.5, lambda2=0.5, phi=phi)
            v = layer.context_vector(o_c, o_ctx)
            _, grad_v, _ = loss_contextualized(v, center)
            grad_w1, grad_w2 = layer.gradients(o_c, o_ctx, grad_v)

            r, c = int(rng.integers(0, d)), int(rng.integers(0, d_emb))
            fd = central_diff(lambda x: loss_of(x, w2), w1, (r, c))
            assert rel_err(grad_w1[r, c], fd) < REL_TOL
            fd = central_diff(lambda x: loss_of(w1, x), w2, (r, c))
            assert rel_err(grad_w2[r, c], fd) < REL_TOL

    def test_mismatched_weight_shapes_rejected(self):
        with pytest.raises(ValueError):
            AttentionLayer(np.zeros((3, 2)), np.zeros((2, 3)))

    def test_unknown_phi_rejected(self):
        with pytest.raises(ValueError):
            AttentionLayer(np.zeros((2, 2)), np.zeros((2, 2)), phi="relu")
