"""Numerically stable scalar primitives shared by every loss and solver path.

All margin-based losses reduce to softplus/sigmoid evaluations, so a single
stable implementation here keeps the reduction identities between methods
bit-exact instead of merely close.
"""

from __future__ import annotations

import numpy as np

__all__ = ["softplus", "sigmoid", "neg_log_sigmoid", "log_softmax"]


def softplus(x):
    """log(1 + e^x), branched at 0 so neither tail overflows.

    x <= 0: log1p(e^x); x > 0: x + log1p(e^-x). Accepts scalars or arrays,
    returns float64.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    neg = x <= 0.0
    out[neg] = np.log1p(np.exp(x[neg]))
    out[~neg] = x[~neg] + np.log1p(np.exp(-x[~neg]))
    if out.ndim == 0:
        return float(out)
    return out


def sigmoid(x):
    """1 / (1 + e^-x), branched at 0. Accepts scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    neg = x < 0.0
    ex = np.exp(x[neg])
    out[neg] = ex / (1.0 + ex)
    out[~neg] = 1.0 / (1.0 + np.exp(-x[~neg]))
    if out.ndim == 0:
        return float(out)
    return out


def neg_log_sigmoid(x):
    """-log sigmoid(x) == softplus(-x). The logistic preference loss core."""
    return softplus(np.negative(x))


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Row-stable log softmax: shift by the max before exponentiating."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
