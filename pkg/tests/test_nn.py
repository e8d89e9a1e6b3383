import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catalyst.nn import (Dense, Model, NumericalError, PruneSet, ShapeError, Submodule,
                         evaluate, filter_norms, forward_submodule, init_mlp, model_forward_backward,
                         param_group, sgd_step)
from catalyst.verify import _rel_err, fd_model_grads, jittered_batch, random_grad_model


def naive_forward(sub, x):
    """Loop-by-loop evaluation of b_A + A sigma(b_W + W x)."""
    act = {"relu": lambda v: max(v, 0.0), "identity": lambda v: v, "tanh": math.tanh}[sub.sigma.value]
    hidden = []
    for i in range(sub.W.shape[0]):
        s = sub.b_W[i]
        for j in range(sub.W.shape[1]):
            s += sub.W[i, j] * x[j]
        hidden.append(act(s))
    out = []
    for k in range(sub.A.shape[0]):
        s = sub.b_A[k]
        for i in range(len(hidden)):
            s += sub.A[k, i] * hidden[i]
        out.append(s)
    return np.array(out)


def random_sub(rng, n_in=4, n_hidden=3, n_out=2, sigma="relu"):
    return Submodule(rng.normal(size=(n_hidden, n_in)), rng.normal(size=n_hidden),
                     rng.normal(size=(n_out, n_hidden)), rng.normal(size=n_out), sigma)


class TestSubmodule:
    def test_identity_relu(self):
        sub = Submodule(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(forward_submodule(sub, [1.0, -1.0]), [1.0, 0.0])

    def test_zero_input_gives_bias_path(self, rng):
        sub = random_sub(rng)
        expected = sub.b_A + sub.A @ np.maximum(sub.b_W, 0)
        np.testing.assert_allclose(forward_submodule(sub, np.zeros(4)), expected, rtol=0, atol=1e-14)

    @pytest.mark.parametrize("sigma", ["relu", "identity", "tanh"])
    def test_matches_naive_loop(self, rng, sigma):
        for _ in range(10):
            sub = random_sub(rng, sigma=sigma)
            x = rng.normal(size=4)
            np.testing.assert_allclose(forward_submodule(sub, x), naive_forward(sub, x), rtol=1e-13, atol=1e-13)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            forward_submodule(random_sub(rng), np.zeros(5))

    def test_inconsistent_shapes_rejected(self):
        with pytest.raises(ShapeError):
            Submodule(np.ones((3, 2)), np.ones(2), np.ones((1, 3)), np.ones(1))
        with pytest.raises(ShapeError):
            Submodule(np.ones((3, 2)), np.ones(3), np.ones((1, 4)), np.ones(1))
        with pytest.raises(ShapeError):
            Submodule(np.ones((3, 2)), np.ones(3), np.ones((2, 3)), np.ones(1))

    def test_permutation_equivariance(self, rng):
        sub = random_sub(rng, n_hidden=6)
        perm = rng.permutation(6)
        permuted = Submodule(sub.W[perm], sub.b_W[perm], sub.A[:, perm], sub.b_A)
        x = rng.normal(size=(20, 4))
        np.testing.assert_allclose(forward_submodule(sub, x), forward_submodule(permuted, x), rtol=0, atol=1e-12)

    def test_removing_dead_channels_equals_zeroing(self, rng):
        sub = random_sub(rng, n_hidden=5)
        # channels 1 and 3 never fire: zero filter, negative bias
        sub.W[[1, 3]] = 0.0
        sub.b_W[[1, 3]] = -1.0
        keep = [0, 2, 4]
        smaller = Submodule(sub.W[keep], sub.b_W[keep], sub.A[:, keep], sub.b_A)
        x = rng.normal(size=(50, 4))
        np.testing.assert_allclose(forward_submodule(sub, x), forward_submodule(smaller, x), rtol=0, atol=1e-12)


class TestFilterNorms:
    def test_three_four_five(self):
        np.testing.assert_array_equal(filter_norms([[3.0, 4.0], [0.0, 0.0]]), [5.0, 0.0])

    def test_identity(self):
        np.testing.assert_array_equal(filter_norms(np.eye(3)), [1.0, 1.0, 1.0])

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_brute_force(self, n, m, seed):
        W = np.random.default_rng(seed).normal(size=(n, m))
        brute = [math.sqrt(sum(v * v for v in row)) for row in W.tolist()]
        np.testing.assert_allclose(filter_norms(W), brute, rtol=1e-14)


class TestPruneSet:
    def test_sorted_and_kept(self):
        P = PruneSet([3, 0], 5)
        assert P.indices == (0, 3)
        np.testing.assert_array_equal(P.kept, [1, 2, 4])

    def test_duplicates_and_range(self):
        with pytest.raises(IndexError):
            PruneSet([1, 1], 3)
        with pytest.raises(IndexError):
            PruneSet([3], 3)
        with pytest.raises(IndexError):
            PruneSet([-1], 3)


class TestModel:
    def test_dims_must_chain(self, rng):
        sub = random_sub(rng)
        with pytest.raises(ShapeError):
            Model(sub, pre=[Dense(np.ones((3, 2)), np.zeros(3))])
        with pytest.raises(ShapeError):
            Model(sub, post=[Dense(np.ones((3, 5)), np.zeros(3))])

    def test_param_groups(self):
        assert param_group("sub.D") == "D" and param_group("sub.Dbar") == "D"
        assert param_group("sub.W") == "theta" and param_group("pre.0.b") == "theta"

    def test_init_mlp_layout(self):
        m = init_mlp([2, 8, 6, 3], target=1, rng=0)
        assert len(m.pre) == 1 and len(m.post) == 0
        assert m.sub.W.shape == (6, 8) and m.sub.A.shape == (3, 6)
        assert m.forward(np.zeros((4, 2))).shape == (4, 3)

    def test_copy_is_deep(self):
        m = init_mlp([2, 4, 3], rng=0)
        c = m.copy()
        c.sub.W[0, 0] += 1.0
        assert m.sub.W[0, 0] != c.sub.W[0, 0]


class TestForwardBackward:
    def test_uniform_softmax(self):
        m = init_mlp([3, 5, 4], rng=0)
        for p in m.params().values():
            p[...] = 0.0
        loss, grads = model_forward_backward(m, (np.ones((4, 3)), np.array([0, 1, 2, 3])))
        assert loss == pytest.approx(math.log(4), abs=1e-15)
        assert all(np.all(np.isfinite(g)) for g in grads.values())

    def test_mean_invariance(self, rng):
        m = init_mlp([3, 5, 2], rng=0)
        x, y = rng.normal(size=(1, 3)), np.array([1])
        one, _ = model_forward_backward(m, (x, y))
        two, _ = model_forward_backward(m, (np.vstack([x, x]), np.array([1, 1])))
        assert one == pytest.approx(two, rel=1e-15)

    @pytest.mark.parametrize("extended", [False, True])
    def test_matches_finite_differences(self, extended):
        rng = np.random.default_rng(7)
        for _ in range(5):
            model = random_grad_model(rng, extended)
            batch = jittered_batch(rng, model)
            _, grads = model_forward_backward(model, batch)
            fd = fd_model_grads(model, batch)
            for k in fd:
                assert _rel_err(grads[k], fd[k]) <= 1e-5, k

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_loss_carries_step(self):
        m = init_mlp([2, 3, 2], rng=0)
        m.sub.A[...] = np.inf
        with pytest.raises(NumericalError) as exc:
            model_forward_backward(m, (np.ones((1, 2)), np.array([0])), step=17)
        assert exc.value.step == 17

    def test_evaluate(self):
        m = init_mlp([2, 3, 2], rng=0)
        for p in m.params().values():
            p[...] = 0.0
        m.sub.b_A[...] = [1.0, 0.0]
        loss, acc = evaluate(m, np.zeros((4, 2)), np.array([0, 0, 1, 1]))
        assert acc == 50.0
        assert loss == pytest.approx(-np.log(np.exp(1) / (np.exp(1) + 1)) / 2 - np.log(1 / (np.exp(1) + 1)) / 2)


class TestSGD:
    def test_zero_grad_no_decay(self):
        p = {"w": np.array([1.5, -2.0])}
        out = sgd_step(p, {"w": np.zeros(2)}, 0.1, 0.0)
        np.testing.assert_array_equal(out["w"], p["w"])

    def test_plain_step(self):
        out = sgd_step({"w": np.array([1.0])}, {"w": np.array([1.0])}, 0.1)
        assert out["w"][0] == pytest.approx(0.9, abs=1e-15)

    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(1e-4, 1.0), st.floats(0.0, 1.0))
    def test_decay_closed_form(self, p, g, lr, alpha):
        out = sgd_step({"w": np.array([p])}, {"w": np.array([g])}, lr, alpha)["w"][0]
        assert out == pytest.approx((1 - lr * alpha) * p - lr * g, rel=1e-12, abs=1e-12)

    def test_per_group_decay(self):
        params = {"sub.W": np.array([1.0]), "sub.D": np.array([1.0])}
        grads = {k: np.zeros(1) for k in params}
        out = sgd_step(params, grads, 0.5, {"sub.W": 0.2, "sub.D": 0.0})
        assert out["sub.W"][0] == pytest.approx(0.9) and out["sub.D"][0] == 1.0

    def test_momentum_buffers(self):
        buf = {}
        p = {"w": np.array([0.0])}
        g = {"w": np.array([1.0])}
        p = sgd_step(p, g, 0.1, momentum=0.9, buffers=buf)
        p = sgd_step(p, g, 0.1, momentum=0.9, buffers=buf)
        # second step uses buffer 0.9 * 1 + 1
        assert p["w"][0] == pytest.approx(-0.1 - 0.19)

    def test_rejects_bad_lr(self):
        with pytest.raises(ValueError):
            sgd_step({"w": np.zeros(1)}, {"w": np.zeros(1)}, 0.0)
