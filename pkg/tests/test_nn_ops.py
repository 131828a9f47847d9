"""Semantic contracts of the layer primitives, with hand-computed values."""

import math

import numpy as np
import pytest

from provsentry import nn


class TestAffine:
    def test_identity(self):
        out = nn.affine(nn.constant(np.eye(2)), nn.constant(np.eye(2)),
                        nn.constant(np.zeros((1, 2))))
        assert np.allclose(out.data, np.eye(2))

    def test_hand_value(self):
        # [[1,2]] @ [[1],[1]] + [[3]] = [[6]]
        out = nn.affine(nn.constant([[1.0, 2.0]]), nn.constant([[1.0], [1.0]]),
                        nn.constant([[3.0]]))
        assert out.data[0, 0] == 6.0

    def test_shape_contract(self):
        rng = np.random.default_rng(0)
        out = nn.affine(nn.constant(rng.normal(size=(3, 4))),
                        nn.constant(rng.normal(size=(4, 5))))
        assert out.data.shape == (3, 5)

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(nn.ShapeError, match=r"3, 4.*5, 2"):
            nn.affine(nn.constant(np.zeros((3, 4))), nn.constant(np.zeros((5, 2))))


class TestSoftmaxRows:
    def test_symmetry(self):
        out = nn.softmax_rows(nn.constant([[0.0, 0.0]]))
        assert np.allclose(out.data, [[0.5, 0.5]])

    def test_large_values_no_overflow(self):
        out = nn.softmax_rows(nn.constant([[1000.0, 1000.0]]))
        assert np.isfinite(out.data).all()
        assert np.allclose(out.data, [[0.5, 0.5]])

    def test_hand_value(self):
        out = nn.softmax_rows(nn.constant([[math.log(1.0), math.log(3.0)]]))
        assert np.allclose(out.data, [[0.25, 0.75]])

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        z = rng.normal(scale=30, size=(40, 9))
        out = nn.softmax_rows(nn.constant(z))
        assert np.abs(out.data.sum(axis=1) - 1.0).max() <= 1e-6
        assert (out.data >= 0).all()

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(20, 6))
        a = nn.softmax_rows(nn.constant(z)).data
        b = nn.softmax_rows(nn.constant(z + 17.25)).data
        assert np.abs(a - b).max() <= 1e-12


class TestLayerNorm:
    def test_constant_row_is_zero(self):
        out = nn.layer_norm(nn.constant([[3.0, 3.0, 3.0]]),
                            nn.constant([[1.0, 1.0, 1.0]]),
                            nn.constant([[0.0, 0.0, 0.0]]))
        assert np.allclose(out.data, 0.0)

    def test_unit_variance_row_fixed_point(self):
        out = nn.layer_norm(nn.constant([[-1.0, 1.0]]),
                            nn.constant([[1.0, 1.0]]),
                            nn.constant([[0.0, 0.0]]), eps=1e-12)
        assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-6)

    def test_bias_passthrough(self):
        out = nn.layer_norm(nn.constant([[7.0, 7.0]]),
                            nn.constant([[1.0, 1.0]]),
                            nn.constant([[5.0, 5.0]]))
        assert np.allclose(out.data, 5.0)

    def test_row_statistics(self):
        rng = np.random.default_rng(3)
        x = rng.normal(scale=4, size=(30, 16))
        ones = nn.constant(np.ones((1, 16)))
        zeros = nn.constant(np.zeros((1, 16)))
        out = nn.layer_norm(nn.constant(x), ones, zeros, eps=1e-10).data
        assert np.abs(out.mean(axis=1)).max() <= 1e-9
        assert np.abs(out.var(axis=1) - 1.0).max() <= 1e-6

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            nn.layer_norm(nn.constant([[1.0]]), nn.constant([[1.0]]),
                          nn.constant([[0.0]]), eps=0.0)


class TestWeightedCrossEntropy:
    def test_perfect_prediction(self):
        loss = nn.weighted_cross_entropy(nn.constant([[1.0, 0.0]]),
                                         np.array([[1.0, 0.0]]), [1.0, 1.0])
        assert abs(loss.item()) <= 1e-9

    def test_hand_value_two_ln_two(self):
        loss = nn.weighted_cross_entropy(nn.constant([[0.5, 0.5]]),
                                         np.array([[1.0, 0.0]]), [1.0, 1.0])
        assert loss.item() == pytest.approx(2 * math.log(2), abs=1e-9)

    def test_doubling_weight_doubles_positive_term_only(self):
        probs = nn.constant([[0.5, 0.5]])
        y = np.array([[1.0, 0.0]])
        base = nn.weighted_cross_entropy(probs, y, [1.0, 1.0]).item()
        doubled = nn.weighted_cross_entropy(probs, y, [2.0, 1.0]).item()
        # positive term is ln 2, so doubling w1 adds exactly ln 2
        assert doubled - base == pytest.approx(math.log(2), abs=1e-9)
        assert doubled == pytest.approx(3 * math.log(2), abs=1e-9)

    def test_non_one_hot_rejected(self):
        with pytest.raises(ValueError, match="one-hot"):
            nn.weighted_cross_entropy(nn.constant([[0.5, 0.5]]),
                                      np.array([[1.0, 1.0]]), [1.0, 1.0])

    def test_nonnegative_when_weights_at_least_one(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            z = rng.normal(scale=5, size=(8, 5))
            probs = nn.softmax_rows(nn.constant(z))
            y = np.eye(5)[rng.integers(0, 5, size=8)]
            w = rng.uniform(1.0, 4.0, size=5)
            assert nn.weighted_cross_entropy(probs, y, w).item() >= 0.0

    def test_clamp_keeps_loss_finite(self):
        loss = nn.weighted_cross_entropy(nn.constant([[0.0, 1.0]]),
                                         np.array([[1.0, 0.0]]), [1.0, 1.0])
        assert np.isfinite(loss.item())
        # both the clamped positive term and the clamped negative term
        # contribute -ln(1e-12) ~ 27.63
        assert loss.item() == pytest.approx(-2 * math.log(nn.LOG_CLAMP), rel=1e-6)


class TestDeterminism:
    def test_ops_bit_identical(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(10, 8))
        w = rng.normal(size=(8, 8))

        def run():
            h = nn.affine(nn.constant(x), nn.constant(w))
            h = nn.layer_norm(h, nn.constant(np.ones((1, 8))),
                              nn.constant(np.zeros((1, 8))))
            return nn.softmax_rows(h).data.copy()

        assert run().tobytes() == run().tobytes()
