import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from advchat.errors import ConfigError, DimensionError, UsageError
from advchat.numerics import (
    AdamState,
    Parameter,
    Tape,
    Tensor,
    activation,
    adam_step,
    add,
    add_n,
    affine,
    backward,
    binary_ce,
    categorical_ce,
    column,
    concat,
    gather_columns,
    gradient_check,
    loss_eval,
    mse,
    mul,
    relu,
    scale,
    sigmoid,
    softmax,
    gradient_check as _gc,  # noqa: F401  (re-import guard for refactors)
    zero_grad,
)


def _ref_matvec(w, x, b):
    # independent straight-line oracle: no numpy linear algebra
    m = len(w)
    out = []
    for i in range(m):
        acc = b[i]
        for j in range(len(x)):
            acc += w[i][j] * x[j]
        out.append(acc)
    return out


class TestAffine:
    def test_identity(self):
        out = affine(Tensor(np.eye(2)), Tensor([3.0, 4.0]), Tensor([0.0, 0.0]))
        assert np.allclose(out.data, [3.0, 4.0])

    def test_against_reference_matvec(self):
        w = [[1.0, 2.0], [3.0, 4.0]]
        x = [1.0, 1.0]
        b = [1.0, 1.0]
        out = affine(Tensor(w), Tensor(x), Tensor(b))
        assert out.data.tolist() == _ref_matvec(w, x, b) == [4.0, 8.0]

    def test_zero_weight(self):
        out = affine(Tensor(np.zeros((1, 3))), Tensor([5.0, -2.0, 9.0]), Tensor([7.0]))
        assert out.data.tolist() == [7.0]

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 2\).*\(3,\)"):
            affine(Tensor(np.eye(2)), Tensor([1.0, 2.0, 3.0]), Tensor([0.0, 0.0]))


class TestActivation:
    @given(st.floats(-30, 30))
    def test_softmax_constant_vector_is_uniform(self, c):
        out = activation("softmax", Tensor([c, c, c]))
        assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_sigmoid_zero(self):
        assert activation("sigmoid", Tensor([0.0])).data[0] == 0.5

    def test_relu_negative(self):
        assert activation("relu", Tensor([-3.0])).data[0] == 0.0

    def test_softmax_empty_is_domain_error(self):
        with pytest.raises(ValueError):
            softmax(Tensor(np.zeros(0)))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            activation("gelu", Tensor([1.0]))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
    def test_softmax_is_a_probability_vector(self, xs):
        p = softmax(Tensor(xs)).data
        assert np.all(p > 0.0) and np.all(p < 1.0 + 1e-15)
        assert abs(p.sum() - 1.0) < 1e-12


class TestConcat:
    def test_definition(self):
        out = concat([Tensor([1.0, 2.0]), Tensor([3.0])])
        assert out.data.tolist() == [1.0, 2.0, 3.0]

    def test_single_part_identity(self):
        v = Tensor([4.0, 5.0])
        assert concat([v]).data.tolist() == [4.0, 5.0]

    def test_full_scale_discriminator_input_width(self):
        # probability vector + two sentence embeddings at full-scale sizes
        parts = [Tensor(np.zeros(7000)), Tensor(np.zeros(300)), Tensor(np.zeros(300))]
        assert concat([parts[1], parts[2], parts[0]]).shape == (7600,)

    def test_empty_list_is_domain_error(self):
        with pytest.raises(ValueError):
            concat([])


class TestLosses:
    def test_perfect_categorical_prediction(self):
        target = np.array([0.0, 1.0, 0.0])
        smoothed = np.array([1e-12, 1.0 - 2e-12, 1e-12])
        out = loss_eval("categorical_ce", Tensor(smoothed), target)
        assert out.item() == pytest.approx(0.0, abs=1e-9)

    @given(st.sampled_from([0.0, 1.0]))
    def test_binary_ce_at_half_is_ln2(self, label):
        out = loss_eval("binary_ce", Tensor([0.5]), np.array([label]))
        assert out.item() == pytest.approx(math.log(2), abs=1e-12)

    def test_mse_identity(self):
        v = np.array([1.0, -2.0, 3.5])
        assert loss_eval("mse", Tensor(v), v).item() == 0.0

    def test_binary_ce_clamped_at_exact_zero_and_one(self):
        for p, t in [(0.0, 1.0), (1.0, 0.0), (0.0, 0.0), (1.0, 1.0)]:
            out = binary_ce(Tensor([p]), np.array([t]))
            assert np.isfinite(out.item())

    def test_unknown_loss_kind(self):
        with pytest.raises(ConfigError):
            loss_eval("huber", Tensor([0.5]), np.array([0.5]))


class TestBackward:
    def test_square_gradient(self):
        x = Parameter(np.array(3.0), "x")
        with Tape() as tape:
            loss = mul(x, x)
        backward(tape, loss)
        assert x.grad == pytest.approx(6.0)

    def test_softmax_ce_gradient_is_p_minus_onehot(self):
        rng = np.random.default_rng(7)
        w = Parameter(rng.uniform(-1, 1, (4, 3)), "w")
        b = Parameter(rng.uniform(-1, 1, 4), "b")
        x = np.array([0.3, -0.2, 0.9])
        target = np.array([0.0, 0.0, 1.0, 0.0])

        with Tape() as tape:
            logits = affine(w, Tensor(x), b)
            p = softmax(logits)
            loss = categorical_ce(p, target)
        backward(tape, loss)
        # analytic composition must equal p - onehot at the softmax input,
        # which lands in b.grad because d(logits)/d(b) is the identity
        assert np.allclose(b.grad, p.data - target, atol=1e-12)

        report = gradient_check(
            lambda: categorical_ce(softmax(affine(w, Tensor(x), b)), target),
            [w, b],
            tolerance=1e-6,
        )
        assert report.passed, report.failures

    def test_unused_parameter_keeps_zero_grad(self):
        x = Parameter(np.array(2.0), "x")
        unused = Parameter(np.ones(3), "unused")
        with Tape() as tape:
            loss = mul(x, x)
        backward(tape, loss)
        assert np.all(unused.grad == 0.0)

    def test_non_trainable_parameter_gets_no_grad(self):
        x = Parameter(np.array(2.0), "x", trainable=False)
        with Tape() as tape:
            loss = mul(x, x)
        backward(tape, loss)
        assert np.all(x.grad == 0.0)

    def test_loss_not_on_tape_is_usage_error(self):
        x = Parameter(np.array(2.0), "x")
        with Tape():
            pass
        with Tape() as other:
            loss = mul(x, x)
        stray = Tensor(np.array(1.0))
        with pytest.raises(UsageError):
            backward(other, stray)

    def test_tapes_do_not_nest(self):
        with Tape():
            with pytest.raises(UsageError):
                with Tape():
                    pass

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(0, 10**6),
        st.floats(-3, 3),
        st.floats(-3, 3),
    )
    def test_backward_linearity(self, seed, a, b):
        params, make_losses = _linear_pair_graph(seed)

        zero_grad(params)
        with Tape() as tape:
            l1, _ = make_losses()
        backward(tape, l1)
        g1 = {p.name: p.grad.copy() for p in params}

        zero_grad(params)
        with Tape() as tape:
            _, l2 = make_losses()
        backward(tape, l2)
        g2 = {p.name: p.grad.copy() for p in params}

        zero_grad(params)
        with Tape() as tape:
            l1, l2 = make_losses()
            combined = add(scale(l1, a), scale(l2, b))
        backward(tape, combined)
        for p in params:
            expected = a * g1[p.name] + b * g2[p.name]
            assert np.allclose(p.grad, expected, atol=1e-10)


def _linear_pair_graph(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(2, 5))
    w = Parameter(rng.uniform(-1, 1, (m, n)), "w")
    b = Parameter(rng.uniform(-1, 1, m), "b")
    x = Parameter(rng.uniform(-1, 1, n), "x")
    target = np.zeros(m)
    target[int(rng.integers(0, m))] = 1.0

    def make_losses():
        h = affine(w, x, b)
        p = softmax(h)
        l1 = mse(tanh_like(h), np.zeros(m))
        l2 = categorical_ce(p, target)
        return l1, l2

    return [w, b, x], make_losses


def tanh_like(h):
    from advchat.numerics import tanh

    return tanh(h)


def _fd_graph(seed):
    """A small graph exercising every differentiable primitive."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    m = int(rng.integers(2, 4))
    emb = Parameter(rng.uniform(-1, 1, (n, 5)), "emb")
    w = Parameter(rng.uniform(0.3, 1.0, (m, 2 * n)) * rng.choice([-1, 1], (m, 2 * n)), "w")
    b = Parameter(rng.uniform(0.2, 0.8, m) * rng.choice([-1, 1], m), "b")
    v = Parameter(rng.uniform(-1, 1, m), "v")
    idx = rng.integers(1, 5, size=3)
    onehot = np.zeros(m)
    onehot[int(rng.integers(0, m))] = 1.0

    def forward():
        e = gather_columns(emb, idx, skip_index=0)
        z = concat([column(e, 0), column(e, 2)])
        h = affine(w, z, b)
        s = sigmoid(h)
        p = softmax(h)
        r = relu(h)
        mixed = add_n([mul(s, v), scale(r, 0.25), sub_like(s, v)])
        l1 = mse(mixed, np.zeros(m))
        l2 = categorical_ce(p, onehot)
        l3 = binary_ce(s, onehot)
        return add(add(l1, l2), scale(l3, 0.5))

    def preactivation():
        e = gather_columns(emb, idx, skip_index=0)
        z = concat([column(e, 0), column(e, 2)])
        return affine(w, z, b).data

    return [emb, w, b, v], forward, preactivation


def sub_like(a, b):
    from advchat.numerics import sub

    return sub(a, b)


class TestFiniteDifferenceAgreement:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_random_graphs_match_central_differences(self, seed):
        params, forward, preactivation = _fd_graph(seed)
        # finite differences are only meaningful away from the relu kink
        assume(np.min(np.abs(preactivation())) > 1e-3)
        report = gradient_check(forward, params, tolerance=1e-6)
        assert report.passed, (report.failures, report.max_relative_error)

    def test_report_names_corrupted_parameter(self):
        from advchat import numerics

        rng = np.random.default_rng(3)
        w = Parameter(rng.uniform(-1, 1, (2, 2)), "w")
        b = Parameter(rng.uniform(-1, 1, 2), "wrong_rule")
        x = np.array([0.4, -0.7])

        def forward():
            h = affine(w, Tensor(x), b)
            # a deliberately wrong backward rule for the bias path
            out = Tensor(h.data * 1.0)
            numerics._record(out, (h,), lambda g: (np.zeros_like(g),))
            bad = add(h, out)
            return mse(bad, np.zeros(2))

        report = gradient_check(forward, [w, b], tolerance=1e-6)
        assert not report.passed
        assert "wrong_rule" in report.failures and "w" in report.failures


class TestAdam:
    def _params(self):
        rng = np.random.default_rng(11)
        return [
            Parameter(rng.uniform(-1, 1, (2, 3)), "a"),
            Parameter(rng.uniform(-1, 1, 4), "b"),
        ]

    def test_zero_grads_leave_values_unchanged(self):
        params = self._params()
        before = [p.data.copy() for p in params]
        adam_step(params, AdamState(), lr=0.1)
        for p, prev in zip(params, before):
            assert np.array_equal(p.data, prev)

    def test_first_step_magnitude(self):
        g = 0.37
        p = Parameter(np.array([1.0]), "p")
        p.grad[...] = g
        state = AdamState()
        adam_step([p], state, lr=0.01)
        # bias correction makes the first step lr * g / (|g| + eps)
        expected = 0.01 * g / (abs(g) + state.eps)
        assert p.data[0] == pytest.approx(1.0 - expected, abs=1e-15)
        assert state.step_count == 1

    def test_frozen_parameter_is_bit_identical(self):
        p = Parameter(np.array([1.0, 2.0]), "p", trainable=False)
        p.grad[...] = 5.0
        before = p.data.tobytes()
        adam_step([p], AdamState(), lr=0.5)
        assert p.data.tobytes() == before

    def test_nonpositive_lr_is_config_error(self):
        with pytest.raises(ConfigError):
            adam_step([], AdamState(), lr=0.0)

    @given(st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_determinism(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.uniform(-1, 1, 6)
        grad = rng.uniform(-1, 1, 6)

        results = []
        for _ in range(2):
            p = Parameter(data.copy(), "p")
            p.grad[...] = grad
            state = AdamState()
            adam_step([p], state, lr=1e-3)
            adam_step([p], state, lr=1e-3)
            results.append(p.data.tobytes())
        assert results[0] == results[1]


class TestGradientCheckHarness:
    def test_affine_mse_passes_at_1e6(self):
        rng = np.random.default_rng(5)
        w = Parameter(rng.uniform(-1, 1, (3, 2)), "w")
        b = Parameter(rng.uniform(-1, 1, 3), "b")
        x = np.array([0.5, -1.5])
        target = np.array([0.1, 0.2, 0.3])

        report = gradient_check(
            lambda: mse(affine(w, Tensor(x), b), target), [w, b], tolerance=1e-6
        )
        assert report.passed
        assert report.max_relative_error < 1e-6


class TestFiniteness:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=6))
    def test_exported_ops_stay_finite(self, xs):
        v = Tensor(xs)
        n = len(xs)
        outs = [
            relu(v).data,
            sigmoid(v).data,
            softmax(v).data,
            binary_ce(sigmoid(v), np.zeros(n)).data,
            mse(v, np.zeros(n)).data,
            categorical_ce(softmax(v), np.eye(n)[0]).data,
        ]
        for out in outs:
            assert np.all(np.isfinite(out))
