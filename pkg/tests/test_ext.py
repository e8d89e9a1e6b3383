import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catalyst.ext import (ExtendedSubmodule, c_ratios, catalyst_reg, catalyst_reg_grad, degenerate_channels,
                          embed, forward_extended, psi)
from catalyst.nn import ShapeError, Submodule, activate, forward_submodule
from catalyst.verify import _rel_err, fd_catalyst_reg_grad


def sub_with_norms(norms, n_in=3, rng=None):
    rng = np.random.default_rng(0 if rng is None else rng)
    W = rng.normal(size=(len(norms), n_in))
    W *= np.asarray(norms, dtype=float)[:, None] / np.linalg.norm(W, axis=1, keepdims=True)
    n = len(norms)
    return Submodule(W, rng.normal(size=n), rng.normal(size=(2, n)), rng.normal(size=2))


def naive_extended(ext, x):
    out = ext.b_A.copy()
    for i in range(ext.n_hidden):
        u = ext.b_W[i] + sum(ext.W[i, j] * x[j] for j in range(ext.n_in))
        h = ext.D[i] * u - ext.Dbar[i] * u + max(u, 0.0)
        out = out + ext.A[:, i] * h
    return out


class TestPsi:
    @pytest.mark.parametrize("sigma", ["relu", "identity", "tanh"])
    def test_equal_diagonals_reduce_to_sigma(self, rng, sigma):
        d = rng.normal(size=6)
        x = rng.normal(size=(50, 6)) * 10
        assert np.max(np.abs(psi(d, d, x, sigma) - activate(x, sigma))) <= 1e-15

    def test_hand_values(self):
        assert psi([1.0], [0.0], [-2.0])[0] == -2.0
        assert psi([0.0], [1.0], [3.0])[0] == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            psi([1.0, 2.0], [0.0], [1.0])


class TestEmbed:
    def test_diag_is_norms(self):
        ext = embed(sub_with_norms([5.0, 1.0]), 1.0)
        np.testing.assert_allclose(ext.D, [5.0, 1.0], rtol=1e-15)
        np.testing.assert_array_equal(ext.D, ext.Dbar)
        np.testing.assert_allclose(c_ratios(ext), [1.0, 1.0], rtol=1e-15)

    def test_scale_two(self):
        np.testing.assert_allclose(c_ratios(embed(sub_with_norms([5.0, 1.0]), 2.0)), [2.0, 2.0], rtol=1e-15)

    def test_function_preserved(self, rng):
        sub = sub_with_norms(rng.uniform(0.1, 10, size=8), n_in=4, rng=rng)
        x = rng.normal(size=(100, 4))
        assert np.abs(forward_extended(embed(sub, 1.0), x) - forward_submodule(sub, x)).max() <= 1e-12

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            embed(sub_with_norms([1.0]), 0.0)

    def test_zero_filter_flagged(self, caplog):
        sub = sub_with_norms([1.0, 2.0])
        sub.W[1] = 0.0
        ext = embed(sub)
        assert ext.D[1] == 0.0 and "zero filters" in caplog.text
        np.testing.assert_array_equal(degenerate_channels(ext), [1])

    def test_ratios_equal_across_magnitudes(self, rng):
        sub = sub_with_norms(10.0 ** rng.uniform(-1.5, 1.5, size=32), rng=rng)
        r = c_ratios(embed(sub, 1.0))
        assert r.max() - r.min() <= 1e-12


class TestForwardExtended:
    def test_zero_diagonals(self, rng):
        sub = sub_with_norms([1.0, 2.0, 3.0], rng=rng)
        ext = ExtendedSubmodule(sub, np.zeros(3), np.zeros(3))
        x = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(forward_extended(ext, x), forward_submodule(sub, x))

    def test_identity_closed_form(self, rng):
        sub = sub_with_norms([1.0, 2.0, 3.0], rng=rng)
        sub.sigma = sub.sigma.__class__("identity")
        D = rng.normal(size=3)
        ext = ExtendedSubmodule(sub, D, np.zeros(3))
        x = rng.normal(size=3)
        expected = sub.b_A + sub.A @ ((1.0 + D) * (sub.b_W + sub.W @ x))
        np.testing.assert_allclose(forward_extended(ext, x), expected, rtol=1e-13)

    def test_matches_naive_loop(self, rng):
        for _ in range(10):
            sub = sub_with_norms(rng.uniform(0.5, 2, size=4), rng=rng)
            ext = ExtendedSubmodule(sub, rng.normal(size=4), rng.normal(size=4))
            x = rng.normal(size=3)
            np.testing.assert_allclose(forward_extended(ext, x), naive_extended(ext, x), rtol=1e-12, atol=1e-13)

    def test_diag_length_checked(self):
        with pytest.raises(ShapeError):
            ExtendedSubmodule(sub_with_norms([1.0, 2.0]), np.zeros(3), np.zeros(2))


class TestRegulariser:
    def test_hand_value(self):
        assert catalyst_reg([2.0, 0.0], [[3.0, 4.0], [1.0, 0.0]]) == 10.0

    def test_zero_and_identity(self, rng):
        assert catalyst_reg(np.zeros(3), rng.normal(size=(3, 2))) == 0.0
        assert catalyst_reg([1.0, 1.0], np.eye(2)) == 2.0

    @given(st.floats(-100, 100), st.integers(0, 2**31))
    @settings(max_examples=50)
    def test_absolutely_homogeneous(self, t, seed):
        r = np.random.default_rng(seed)
        D, W = r.normal(size=5), r.normal(size=(5, 3))
        assert catalyst_reg(t * D, W) == pytest.approx(abs(t) * catalyst_reg(D, W), rel=1e-12, abs=1e-12)

    def test_zero_value_forces_zero_rows(self, rng):
        W = rng.normal(size=(4, 3))
        W[[0, 2]] = 0.0
        D = np.array([1.5, 0.0, -2.0, 0.0])
        assert catalyst_reg(D, W) == 0.0
        assert np.all(np.linalg.norm(W[D != 0], axis=1) <= 1e-15)

    def test_gradient_finite_differences(self, rng):
        for _ in range(20):
            D, W = rng.normal(size=5), rng.normal(size=(5, 3))
            gD, gW = catalyst_reg_grad(D, W)
            fD, fW = fd_catalyst_reg_grad(D, W)
            assert _rel_err(gD, fD) <= 1e-6 and _rel_err(gW, fW) <= 1e-6

    def test_gradient_conventions(self, rng):
        W = rng.normal(size=(3, 2))
        W[2] = 0.0
        D = np.array([0.0, 1.0, 4.0])
        gD, gW = catalyst_reg_grad(D, W)
        np.testing.assert_array_equal(gW[0], [0.0, 0.0])  # D_ii = 0
        assert gD[2] == 0.0  # F_i = 0
        np.testing.assert_array_equal(gW[2], [0.0, 0.0])
        assert np.all(np.isfinite(gW))


class TestRatios:
    def test_simple(self):
        ext = ExtendedSubmodule(Submodule(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2)), [3.0, 0.1], [0, 0])
        np.testing.assert_allclose(c_ratios(ext), [3.0, 0.1])

    def test_sentinels(self):
        W = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        ext = ExtendedSubmodule(Submodule(W, np.zeros(3), np.ones((1, 3)), np.zeros(1)), [2.0, 0.0, -0.5], np.zeros(3))
        r = c_ratios(ext)
        assert r[0] == np.inf and r[1] == 1.0 and r[2] == 0.5
