"""Preference losses and per-method reward definitions.

Every margin-based loss routes through the same two primitives (softplus,
sigmoid), so identities like rdpo(eps=0) == fixed-margin loss hold bit-for-bit
rather than approximately. The array-valued helpers (suffix _vg, value and
gradient together) are the training path; the per-pair operations wrap them.

Gradient convention: every loss here depends on the rewards only through the
margin m = r_w - r_l, so d_loss_d_rw = dL/dm and d_loss_d_rl = -dL/dm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from marginpo.numerics import sigmoid, softplus
from marginpo.types import RewardPair

__all__ = [
    "LossOutput",
    "dpo_rewards",
    "simpo_rewards",
    "margin_po_loss",
    "rdpo_loss",
    "rdpo_length_loss",
    "beta_dpo_loss",
    "gamma_po_loss",
    "margin_loss_vg",
    "rdpo_loss_vg",
    "beta_dpo_loss_vg",
]

# beta_dpo's per-pair beta is floored here (as a fraction of beta0); a
# negative beta would invert the preference direction.
BETA_DPO_FLOOR = 0.01


@dataclass(frozen=True)
class LossOutput:
    value: float
    d_loss_d_rw: float
    d_loss_d_rl: float


def dpo_rewards(
    policy_logprob_w: float,
    policy_logprob_l: float,
    ref_logprob_w: float,
    ref_logprob_l: float,
    beta: float,
) -> RewardPair:
    """Policy/reference log-ratio rewards: r = beta * (log pi - log pi_ref)."""
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    return RewardPair(
        r_w=beta * (policy_logprob_w - ref_logprob_w),
        r_l=beta * (policy_logprob_l - ref_logprob_l),
    )


def simpo_rewards(
    policy_logprob_w: float,
    policy_logprob_l: float,
    len_w: int,
    len_l: int,
    beta: float,
) -> RewardPair:
    """Length-normalized rewards: r = (beta/|y|) * log pi, no reference."""
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if len_w < 1 or len_l < 1:
        raise ValueError("lengths must be >= 1")
    return RewardPair(
        r_w=(beta / len_w) * policy_logprob_w,
        r_l=(beta / len_l) * policy_logprob_l,
    )


# ----------------------------------------------------- vectorized loss cores


def margin_loss_vg(margin, gamma):
    """softplus(gamma - m) and its d/dm, elementwise: the -log sigmoid(m - gamma)
    loss every fixed- and dynamic-margin method shares."""
    margin = np.asarray(margin, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    value = softplus(gamma - margin)
    dval = -sigmoid(gamma - margin)
    return value, dval


def rdpo_loss_vg(margin, gamma0, epsilon):
    """Label-smoothed mixture of the loss and its flipped-label counterpart."""
    margin = np.asarray(margin, dtype=np.float64)
    value = (1.0 - epsilon) * softplus(gamma0 - margin) + epsilon * softplus(
        margin + gamma0
    )
    dval = -(1.0 - epsilon) * sigmoid(gamma0 - margin) + epsilon * sigmoid(
        margin + gamma0
    )
    return value, dval


def beta_dpo_loss_vg(margin, alpha, running_mean_margin):
    """Margin-calibrated beta scaling, in beta0-normalized units.

    The incoming margin is already beta0-scaled, so the per-pair multiplier is
    c = 1 + alpha*(m - M0), floored at BETA_DPO_FLOOR, and the loss is
    softplus(-c*m). The d/dm includes the dependence of c on m itself (zero
    where the floor is active).
    """
    margin = np.asarray(margin, dtype=np.float64)
    c_raw = 1.0 + alpha * (margin - running_mean_margin)
    c = np.maximum(c_raw, BETA_DPO_FLOOR)
    value = softplus(-c * margin)
    dc_dm = np.where(c_raw > BETA_DPO_FLOOR, alpha, 0.0)
    dval = -sigmoid(-c * margin) * (c + margin * dc_dm)
    return value, dval


# ------------------------------------------------------- per-pair operations


def _check_finite_margin(pair: RewardPair) -> float:
    m = pair.margin
    if not np.isfinite(m):
        raise ValueError("reward margin must be finite")
    return m


def _output(value, dval) -> LossOutput:
    return LossOutput(
        value=float(value), d_loss_d_rw=float(dval), d_loss_d_rl=float(-dval)
    )


def margin_po_loss(pair: RewardPair, gamma: float) -> LossOutput:
    """-log sigmoid(m - gamma) with a fixed target margin."""
    m = _check_finite_margin(pair)
    if not np.isfinite(gamma):
        raise ValueError("gamma must be finite")
    value, dval = margin_loss_vg(m, gamma)
    return _output(value, dval)


def gamma_po_loss(pair: RewardPair, gamma_i: float) -> LossOutput:
    """Same loss form as margin_po_loss; gamma_i comes from the margin solver
    per pair instead of being a shared constant."""
    return margin_po_loss(pair, gamma_i)


def rdpo_loss(pair: RewardPair, gamma0: float, epsilon: float) -> LossOutput:
    """(1-eps) * loss(m) + eps * loss(-m), both with target margin gamma0."""
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must be in [0, 0.5), got {epsilon}")
    m = _check_finite_margin(pair)
    value, dval = rdpo_loss_vg(m, gamma0, epsilon)
    return _output(value, dval)


def rdpo_length_loss(
    pair: RewardPair, len_w: int, len_l: int, alpha: float
) -> LossOutput:
    """Fixed-margin loss with the margin set to alpha * (len_w - len_l)."""
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    m = _check_finite_margin(pair)
    value, dval = margin_loss_vg(m, alpha * (len_w - len_l))
    return _output(value, dval)


def beta_dpo_loss(
    pair: RewardPair, beta0: float, alpha: float, running_mean_margin: float
) -> LossOutput:
    """Per-pair beta_i = beta0 * (1 + alpha*(m - M0)), floored at 0.01*beta0;
    loss is -log sigmoid((beta_i/beta0) * m) on the beta0-scaled margin m."""
    if not beta0 > 0.0:
        raise ValueError(f"beta0 must be positive, got {beta0}")
    m = _check_finite_margin(pair)
    value, dval = beta_dpo_loss_vg(m, alpha, running_mean_margin)
    return _output(value, dval)
