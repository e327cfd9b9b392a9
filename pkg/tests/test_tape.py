import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ifenet.tape import (ShapeError, Tape, ValidationError, grad_check)


def scalar_sum(tape, v):
    """Reduce any node to a scalar with matmuls against ones."""
    left = tape.constant(np.ones((1, v.shape[0])))
    right = tape.constant(np.ones((v.shape[1], 1)))
    return tape.matmul(left, tape.matmul(v, right))


class TestLeaves:
    def test_constant_zero_matrix(self):
        t = Tape()
        v = t.constant(np.zeros((2, 2)))
        assert v.shape == (2, 2)
        assert np.array_equal(t.value(v), np.zeros((2, 2)))

    def test_constant_round_trip(self):
        t = Tape()
        v = t.constant([1.0, 2.0, 3.0])
        assert np.array_equal(t.value(v), [[1, 2, 3]])

    def test_constant_rejects_nan(self):
        with pytest.raises(ValidationError):
            Tape().constant([1.0, float("nan")])

    def test_parameter_rejects_inf(self):
        with pytest.raises(ValidationError):
            Tape().parameter([float("inf")])

    def test_unused_parameter_gets_zero_adjoint(self):
        t = Tape()
        p = t.parameter(np.zeros((2, 3)))
        loss = t.constant([[5.0]])
        grads = t.backward(loss)
        assert np.array_equal(grads[p], np.zeros((2, 3)))

    def test_linear_loss_adjoint_all_ones(self):
        t = Tape()
        p = t.parameter(np.arange(6.0).reshape(2, 3))
        grads = t.backward(scalar_sum(t, p))
        assert np.array_equal(grads[p], np.ones((2, 3)))

    def test_quadratic_adjoint(self):
        t = Tape()
        p = t.parameter([[2.0]])
        grads = t.backward(scalar_sum(t, t.mul(p, p)))
        assert np.array_equal(grads[p], [[4.0]])


class TestMatmul:
    def test_identity(self):
        t = Tape()
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = t.matmul(t.constant(np.eye(2)), t.constant(m))
        assert np.array_equal(t.value(out), m)

    def test_direct_product(self):
        t = Tape()
        out = t.matmul(t.constant([[1.0, 2.0]]), t.constant(np.array([[3.0], [4.0]])))
        assert np.array_equal(t.value(out), [[11.0]])

    def test_shape_mismatch_names_both_shapes(self):
        t = Tape()
        a = t.constant(np.zeros((2, 3)))
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            t.matmul(a, a)


class TestElementwise:
    def test_exp_of_zeros(self):
        t = Tape()
        out = t.exp(t.constant(np.zeros((2, 3))))
        assert np.array_equal(t.value(out), np.ones((2, 3)))

    def test_relu(self):
        t = Tape()
        out = t.relu(t.constant([-1.0, 0.0, 2.0]))
        assert np.array_equal(t.value(out), [[0.0, 0.0, 2.0]])

    def test_mul(self):
        t = Tape()
        out = t.mul(t.constant([1.0, 2.0]), t.constant([3.0, 4.0]))
        assert np.array_equal(t.value(out), [[3.0, 8.0]])

    def test_binary_shape_mismatch(self):
        t = Tape()
        with pytest.raises(ShapeError):
            t.add(t.constant(np.zeros((1, 2))), t.constant(np.zeros((2, 2))))

    def test_scale_rejects_nonfinite_factor(self):
        t = Tape()
        with pytest.raises(ValidationError):
            t.scale(t.constant([1.0]), float("nan"))

    def test_elementwise_dispatch(self):
        t = Tape()
        out = t.elementwise("scale", t.constant([2.0]), c=3.0)
        assert t.value(out)[0, 0] == 6.0
        with pytest.raises(ValidationError):
            t.elementwise("frobnicate", t.constant([1.0]))


class TestRowSoftmax:
    def test_uniform_on_zeros(self):
        t = Tape()
        out = t.row_softmax(t.constant([0.0, 0.0, 0.0]))
        assert np.allclose(t.value(out), 1 / 3, atol=1e-15)

    def test_shift_invariance_no_overflow(self):
        t = Tape()
        out = t.row_softmax(t.constant([1000.0, 1000.0]))
        assert np.array_equal(t.value(out), [[0.5, 0.5]])

    def test_direct_evaluation(self):
        t = Tape()
        out = t.row_softmax(t.constant([0.0, math.log(3.0)]))
        assert np.allclose(t.value(out), [[0.25, 0.75]], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 4), elements=st.floats(-100, 100)))
    def test_rows_sum_to_one(self, x):
        t = Tape()
        y = t.value(t.row_softmax(t.constant(x)))
        assert np.all(y >= 0.0) and np.all(y <= 1.0)
        assert np.allclose(y.sum(axis=1), 1.0, atol=1e-12)


class TestMeanOverRows:
    def test_single_row_identity(self):
        t = Tape()
        out = t.mean_over_rows(t.constant([1.0, 2.0]))
        assert np.array_equal(t.value(out), [[1.0, 2.0]])

    def test_symmetry(self):
        t = Tape()
        out = t.mean_over_rows(t.constant([[1.0, 3.0], [3.0, 1.0]]))
        assert np.array_equal(t.value(out), [[2.0, 2.0]])

    def test_direct(self):
        t = Tape()
        out = t.mean_over_rows(t.constant([[0.0, 6.0], [3.0, 0.0], [6.0, 3.0]]))
        assert np.array_equal(t.value(out), [[3.0, 3.0]])


class TestCrossEntropy:
    def test_uniform_logits(self):
        t = Tape()
        loss = t.cross_entropy_loss(t.constant([0.0, 0.0]), [0])
        assert np.isclose(t.value(loss)[0, 0], math.log(2.0), atol=1e-15)

    def test_saturated_logits_stay_finite(self):
        t = Tape()
        loss = t.cross_entropy_loss(t.constant([1e6, -1e6]), [0])
        assert 0.0 <= t.value(loss)[0, 0] < 1e-9

    def test_direct_evaluation(self):
        t = Tape()
        loss = t.cross_entropy_loss(t.constant([1.0, 0.0]), [1])
        assert np.isclose(t.value(loss)[0, 0], math.log(1 + math.e), atol=1e-12)

    def test_out_of_range_label(self):
        t = Tape()
        with pytest.raises(ValidationError):
            t.cross_entropy_loss(t.constant([0.0, 0.0]), [2])


class TestBackward:
    def test_requires_scalar_loss(self):
        t = Tape()
        with pytest.raises(ShapeError):
            t.backward(t.constant(np.zeros((2, 2))))

    def test_scalar_parameter_adjoint_is_one(self):
        t = Tape()
        p = t.parameter([[3.0]])
        assert t.backward(p)[p] == np.array([[1.0]])

    def test_deterministic_sweeps(self):
        t = Tape()
        p = t.parameter(np.array([[1.0, -2.0], [0.5, 3.0]]))
        loss = scalar_sum(t, t.exp(t.scale(t.mul(p, p), 0.1)))
        g1, g2 = t.backward(loss), t.backward(loss)
        assert np.array_equal(g1[p], g2[p])

    def test_adjoint_accumulation_is_additive(self):
        t = Tape()
        p = t.parameter(np.array([[1.0, 2.0]]))
        loss = t.add(scalar_sum(t, p), scalar_sum(t, p))
        assert np.array_equal(t.backward(loss)[p], [[2.0, 2.0]])


def random_dag_build(rng, shape):
    """Closure factory: a random composition of the primitive op set."""
    m, n = shape
    mix = rng.standard_normal((n, n))
    labels = rng.integers(0, 2, m)

    def build(arrays):
        t = Tape()
        p, q = t.parameter(arrays[0]), t.parameter(arrays[1])
        a = t.mul(p, q)
        b = t.relu(t.add(a, t.scale(q, 0.5)))
        c = t.matmul(b, t.constant(mix))
        d = t.row_softmax(t.add(c, t.exp(t.scale(p, 0.3))))
        e = t.mean_over_rows(t.mul(d, c))
        two_col = t.matmul(e, t.constant(rng_free_proj(n)))
        loss = t.cross_entropy_loss(t.matmul(t.constant(np.ones((m, 1))), two_col),
                                    labels)
        return t, loss, [p, q]

    return build


def rng_free_proj(n):
    # fixed projection to 2 columns, deterministic per n
    return np.linspace(-1.0, 1.0, 2 * n).reshape(n, 2)


class TestGradCheck:
    def test_quadratic_loss(self):
        def build(arrays):
            t = Tape()
            p = t.parameter(arrays[0])
            return t, scalar_sum(t, t.mul(p, p)), [p]

        err = grad_check(build, [np.array([[0.7, -1.3], [2.1, 0.4]])], eps=1e-5)
        assert err < 1e-6

    def test_constant_loss_zero_error(self):
        def build(arrays):
            t = Tape()
            p = t.parameter(arrays[0])
            return t, t.constant([[1.0]]), [p]

        assert grad_check(build, [np.array([[1.0, 2.0]])], eps=1e-5) == 0.0

    def test_random_dags_match_finite_differences(self):
        rng = np.random.default_rng(7)
        for trial in range(12):
            m = int(rng.integers(2, 7))
            n = int(rng.integers(2, 7))
            build = random_dag_build(rng, (m, n))
            # keep relu inputs away from the kink
            arrs = [rng.uniform(0.1, 1.5, (m, n)) * rng.choice([-1, 1], (m, n)),
                    rng.uniform(0.1, 1.5, (m, n)) * rng.choice([-1, 1], (m, n))]
            assert grad_check(build, arrs, eps=1e-5) < 1e-4

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValidationError):
            grad_check(lambda a: None, [np.ones((1, 1))], eps=0.0)
