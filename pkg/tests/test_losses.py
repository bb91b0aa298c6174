import numpy as np
import pytest
from hypothesis import given, strategies as st

from marginpo.losses import (
    beta_dpo_loss,
    beta_dpo_loss_vg,
    dpo_rewards,
    gamma_po_loss,
    margin_loss_vg,
    margin_po_loss,
    rdpo_length_loss,
    rdpo_loss,
    rdpo_loss_vg,
    simpo_rewards,
)
from marginpo.types import RewardPair

# 40-digit reference values:
#   softplus(-0.6)                          -> margin loss at m=1, gamma=0.4
#   0.9*softplus(-0.6) + 0.1*softplus(1.4)  -> rdpo at m=1, gamma0=0.4, eps=0.1
SOFTPLUS_NEG_06 = 0.4374879504858856
RDPO_1_04_01 = 0.5557808964291422
RDPO_1_04_01_DVAL = -0.2386909355409259

margins_st = st.floats(min_value=-30.0, max_value=30.0, allow_nan=False)
gammas_st = st.floats(min_value=0.0, max_value=5.0, allow_nan=False)


def _fd(loss_fn, m, h=1e-6):
    """Central finite difference of a margin -> value map."""
    return (loss_fn(m + h) - loss_fn(m - h)) / (2.0 * h)


class TestDpoRewards:
    def test_worked_example(self):
        rp = dpo_rewards(-1.0, -2.0, -1.5, -1.5, beta=0.1)
        np.testing.assert_allclose(rp.r_w, 0.05, rtol=1e-12)
        np.testing.assert_allclose(rp.r_l, -0.05, rtol=1e-12)
        np.testing.assert_allclose(rp.margin, 0.1, rtol=1e-12)

    @given(st.floats(-20, 0, allow_nan=False), st.floats(-20, 0, allow_nan=False))
    def test_margin_ignores_common_reference_shift(self, lw, ll):
        """Shifting both reference log-probs by a constant leaves the margin
        unchanged (up to roundoff)."""
        a = dpo_rewards(lw, ll, -1.0, -2.0, beta=0.5).margin
        b = dpo_rewards(lw, ll, -1.0 + 3.0, -2.0 + 3.0, beta=0.5).margin
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            dpo_rewards(-1.0, -2.0, -1.0, -2.0, beta=0.0)


class TestSimpoRewards:
    def test_worked_example(self):
        rp = simpo_rewards(-10.0, -10.0, 10, 5, beta=2.5)
        np.testing.assert_allclose(rp.r_w, -2.5, rtol=1e-12)
        np.testing.assert_allclose(rp.r_l, -5.0, rtol=1e-12)
        np.testing.assert_allclose(rp.margin, 2.5, rtol=1e-12)

    def test_length_normalization(self):
        """Doubling a response's log-prob and its length leaves its reward
        unchanged."""
        a = simpo_rewards(-6.0, -4.0, 12, 8, beta=2.0)
        b = simpo_rewards(-12.0, -4.0, 24, 8, beta=2.0)
        np.testing.assert_allclose(a.r_w, b.r_w, rtol=1e-12)

    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            simpo_rewards(-1.0, -1.0, 0, 5, beta=1.0)


class TestMarginPoLoss:
    def test_reference_value(self):
        out = margin_po_loss(RewardPair(1.0, 0.0), gamma=0.4)
        np.testing.assert_allclose(out.value, SOFTPLUS_NEG_06, rtol=1e-14)

    def test_zero_gamma_is_plain_logistic_loss(self):
        """gamma = 0 reduces to -log sigmoid(margin), bit for bit."""
        m = 0.37
        out = margin_po_loss(RewardPair(m, 0.0), gamma=0.0)
        value0, _ = margin_loss_vg(m, 0.0)
        assert out.value == float(value0)

    def test_gradient_antisymmetry_is_exact(self):
        out = margin_po_loss(RewardPair(0.9, 0.2), gamma=0.4)
        assert out.d_loss_d_rl == -out.d_loss_d_rw

    def test_finite_difference_gradient(self):
        """d_loss_d_rw matches a central difference to < 1e-5 relative over
        1000 random (margin, gamma) draws."""
        rng = np.random.default_rng(42)
        m = rng.normal(0.0, 2.0, 1000)
        g = rng.uniform(0.0, 1.0, 1000)
        _, dval = margin_loss_vg(m, g)
        h = 1e-6
        up, _ = margin_loss_vg(m + h, g)
        dn, _ = margin_loss_vg(m - h, g)
        fd = (up - dn) / (2.0 * h)
        rel = np.abs(dval - fd) / np.abs(dval)
        assert rel.max() < 1e-5

    @given(margins_st, gammas_st)
    def test_value_positive_and_gradient_bounded(self, m, g):
        """Loss value is > 0 and d/dm lies in (-1, 0]."""
        value, dval = margin_loss_vg(m, g)
        assert value >= 0.0
        assert -1.0 < dval <= 0.0

    def test_monotone_decreasing_in_margin(self):
        m = np.linspace(-10, 10, 201)
        value, _ = margin_loss_vg(m, 0.4)
        assert np.all(np.diff(value) < 0.0)

    def test_rejects_non_finite_gamma(self):
        with pytest.raises(ValueError):
            margin_po_loss(RewardPair(1.0, 0.0), gamma=float("inf"))


class TestGammaPoLoss:
    def test_identical_to_fixed_margin_loss(self):
        """The dynamic-margin loss is the same operation with a per-pair
        gamma; outputs match exactly."""
        pair = RewardPair(0.8, -0.1)
        assert gamma_po_loss(pair, 0.55) == margin_po_loss(pair, 0.55)


class TestRdpoLoss:
    def test_reference_value(self):
        out = rdpo_loss(RewardPair(1.0, 0.0), gamma0=0.4, epsilon=0.1)
        np.testing.assert_allclose(out.value, RDPO_1_04_01, rtol=1e-14)
        np.testing.assert_allclose(out.d_loss_d_rw, RDPO_1_04_01_DVAL, rtol=1e-13)

    def test_epsilon_zero_is_bit_identical_to_margin_loss(self):
        """With no smoothing the mixture collapses to the plain loss exactly:
        1.0*a + 0.0*b == a in floating point for the values involved."""
        rng = np.random.default_rng(42)
        for m in rng.normal(0.0, 3.0, 200):
            pair = RewardPair(float(m), 0.0)
            a = rdpo_loss(pair, gamma0=0.4, epsilon=0.0)
            b = margin_po_loss(pair, gamma=0.4)
            assert a.value == b.value
            assert a.d_loss_d_rw == b.d_loss_d_rw

    def test_mixture_structure(self):
        """Value decomposes as (1-eps)*loss(m) + eps*loss(-m), both at the
        same target margin."""
        m, g0, eps = 0.7, 0.3, 0.49
        value, _ = rdpo_loss_vg(m, g0, eps)
        keep, _ = margin_loss_vg(m, g0)
        flip, _ = margin_loss_vg(-m, g0)
        np.testing.assert_allclose(
            value, (1 - eps) * keep + eps * flip, rtol=1e-15
        )

    def test_epsilon_domain(self):
        pair = RewardPair(1.0, 0.0)
        with pytest.raises(ValueError):
            rdpo_loss(pair, gamma0=0.4, epsilon=-0.01)
        with pytest.raises(ValueError):
            rdpo_loss(pair, gamma0=0.4, epsilon=0.5)

    def test_finite_difference_gradient(self):
        rng = np.random.default_rng(7)
        m = rng.normal(0.0, 2.0, 1000)
        _, dval = rdpo_loss_vg(m, 0.4, 0.3)
        h = 1e-6
        up, _ = rdpo_loss_vg(m + h, 0.4, 0.3)
        dn, _ = rdpo_loss_vg(m - h, 0.4, 0.3)
        fd = (up - dn) / (2.0 * h)
        rel = np.abs(dval - fd) / np.maximum(np.abs(dval), 1e-6)
        assert rel.max() < 1e-5


class TestRdpoLengthLoss:
    def test_equals_margin_loss_with_length_target(self):
        """The target margin is alpha * (len_w - len_l); everything else is
        the shared loss."""
        pair = RewardPair(0.4, -0.2)
        out = rdpo_length_loss(pair, len_w=30, len_l=10, alpha=0.02)
        ref = margin_po_loss(pair, gamma=0.02 * 20)
        assert out == ref

    def test_negative_length_gap_gives_negative_target(self):
        """A shorter winner gets an easier (negative) target margin, so its
        loss is below the symmetric-length loss."""
        pair = RewardPair(0.1, 0.0)
        shorter = rdpo_length_loss(pair, len_w=10, len_l=40, alpha=0.05)
        equal = rdpo_length_loss(pair, len_w=20, len_l=20, alpha=0.05)
        assert shorter.value < equal.value

    def test_rejects_negative_alpha(self):
        with pytest.raises(ValueError):
            rdpo_length_loss(RewardPair(0.1, 0.0), 10, 10, alpha=-0.1)


class TestBetaDpoLoss:
    def test_alpha_zero_is_bit_identical_to_plain_loss(self):
        """alpha = 0 gives multiplier exactly 1, so the value matches
        -log sigmoid(m) bitwise."""
        rng = np.random.default_rng(42)
        for m in rng.normal(0.0, 3.0, 200):
            pair = RewardPair(float(m), 0.0)
            a = beta_dpo_loss(pair, beta0=1.0, alpha=0.0, running_mean_margin=0.3)
            b = margin_po_loss(pair, gamma=0.0)
            assert a.value == b.value
            assert a.d_loss_d_rw == b.d_loss_d_rw

    def test_multiplier_floor(self):
        """Margins far below the running mean clamp the multiplier at 0.01,
        and the clamped branch drops the alpha term from the gradient."""
        m = -3.0
        value, dval = beta_dpo_loss_vg(m, alpha=1.0, running_mean_margin=0.0)
        # c_raw = 1 + 1.0*(-3) = -2 -> clamped to 0.01
        expected_value, expected_dval_core = margin_loss_vg(0.01 * m, 0.0)
        np.testing.assert_allclose(value, expected_value, rtol=1e-15)
        np.testing.assert_allclose(dval, expected_dval_core * 0.01, rtol=1e-13)

    def test_above_mean_margin_gets_larger_multiplier(self):
        """A margin above the running mean is scaled harder than one below
        it: c = 1 + alpha*(m - M0) is increasing in m."""
        hi, _ = beta_dpo_loss_vg(2.0, alpha=0.5, running_mean_margin=0.0)
        plain, _ = margin_loss_vg(2.0, 0.0)
        # c = 2 at m = 2, so the loss is softplus(-4) < softplus(-2)
        assert float(hi) < float(plain)

    def test_finite_difference_gradient_unclamped(self):
        rng = np.random.default_rng(3)
        m = np.clip(rng.normal(0.0, 2.0, 1000), -4.0, 4.0)
        alpha, m0 = 0.1, 0.0
        _, dval = beta_dpo_loss_vg(m, alpha, m0)
        h = 1e-6
        up, _ = beta_dpo_loss_vg(m + h, alpha, m0)
        dn, _ = beta_dpo_loss_vg(m - h, alpha, m0)
        fd = (up - dn) / (2.0 * h)
        rel = np.abs(dval - fd) / np.maximum(np.abs(dval), 1e-6)
        assert rel.max() < 1e-5

    def test_finite_difference_gradient_clamped(self):
        m = np.linspace(-5.0, -3.0, 50)
        _, dval = beta_dpo_loss_vg(m, 1.0, 0.0)
        h = 1e-6
        up, _ = beta_dpo_loss_vg(m + h, 1.0, 0.0)
        dn, _ = beta_dpo_loss_vg(m - h, 1.0, 0.0)
        fd = (up - dn) / (2.0 * h)
        rel = np.abs(dval - fd) / np.abs(dval)
        assert rel.max() < 1e-5

    def test_rejects_nonpositive_beta0(self):
        with pytest.raises(ValueError):
            beta_dpo_loss(RewardPair(0.1, 0.0), beta0=0.0, alpha=0.1,
                          running_mean_margin=0.0)


class TestLossFiniteDifferenceSweep:
    def test_all_margin_losses_pass_fd_at_1000_points(self):
        """One combined sweep: every loss family's d/dm agrees with central
        differences (h = 1e-6) to better than 1e-5 relative at 1000 random
        margins each."""
        rng = np.random.default_rng(42)
        m = np.clip(rng.normal(0.0, 2.0, 1000), -4.5, 4.5)
        cases = [
            lambda x: margin_loss_vg(x, 0.4),
            lambda x: rdpo_loss_vg(x, 0.4, 0.1),
            lambda x: beta_dpo_loss_vg(x, 0.1, 0.0),
        ]
        h = 1e-6
        for core in cases:
            _, dval = core(m)
            up, _ = core(m + h)
            dn, _ = core(m - h)
            fd = (up - dn) / (2.0 * h)
            rel = np.abs(dval - fd) / np.maximum(np.abs(dval), 1e-6)
            assert rel.max() < 1e-5
