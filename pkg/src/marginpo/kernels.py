"""Hot numeric kernels with two interchangeable backends.

The multiplicative-weights solver loop and the per-batch policy-gradient
scatter dominate runtime, so both exist twice: a pure-numpy reference here
and numba twins in _kernels_numba. The MARGINPO_BACKEND environment variable
picks one: "auto" (default, numba when importable), "numba", or "numpy".
Both backends use the same update order and ascending-index reductions, so a
given backend is bit-reproducible run to run.
"""

from __future__ import annotations

import importlib.util
import os

import numpy as np

__all__ = ["active_backend", "mwu_solve", "policy_batch_grad", "HAS_NUMBA"]

HAS_NUMBA = importlib.util.find_spec("numba") is not None

_numba_mod = None

# Floor inside log() calls; multiplicative updates keep p strictly positive,
# this only guards against denormal underflow after extreme steps.
_P_FLOOR = 1e-300


def active_backend() -> str:
    """Resolve MARGINPO_BACKEND to the backend used for this call."""
    mode = os.environ.get("MARGINPO_BACKEND", "auto").strip().lower()
    if mode not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"MARGINPO_BACKEND must be one of auto/numba/numpy, got {mode!r}"
        )
    if mode == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    if mode == "numba" and not HAS_NUMBA:
        raise RuntimeError("MARGINPO_BACKEND=numba but numba is not installed")
    return mode


def _numba_kernels():
    global _numba_mod
    if _numba_mod is None:
        from marginpo import _kernels_numba

        _numba_mod = _kernels_numba
    return _numba_mod


def mwu_solve(
    margins: np.ndarray, gamma0: float, tau: float, eta: float, iterations: int
):
    """Run the mirror-descent/multiplicative-weights margin solve.

    Returns (p, objective_trace, min_gamma_trace, max_gamma_trace, kl_trace,
    max_simplex_error, min_probability, halvings). Each trace has one entry
    per iteration; the last three are scalar diagnostics accumulated over the
    whole run.
    """
    margins = np.ascontiguousarray(margins, dtype=np.float64)
    if active_backend() == "numba":
        return _numba_kernels().mwu_solve(
            margins, float(gamma0), float(tau), float(eta), int(iterations)
        )
    return _mwu_solve_np(margins, float(gamma0), float(tau), float(eta), int(iterations))


def policy_batch_grad(
    rows: np.ndarray,
    winner_ids: np.ndarray,
    loser_ids: np.ndarray,
    coef_w: np.ndarray,
    coef_l: np.ndarray,
    dloss_dmargin: np.ndarray,
    softmax_table: np.ndarray,
) -> np.ndarray:
    """Accumulate d(mean batch loss)/d(logits) for a categorical policy.

    Each pair i contributes dloss_dmargin[i] * (coef_w[i] * dlogpi_w - coef_l[i]
    * dlogpi_l) where dlogpi[x, y]/dlogits[x, k] = 1[k == y] - softmax(x)[k].
    dloss_dmargin must already carry the 1/B batch-mean factor. softmax_table
    is the full (prompts, responses) softmax of the current logits.
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    winner_ids = np.ascontiguousarray(winner_ids, dtype=np.int64)
    loser_ids = np.ascontiguousarray(loser_ids, dtype=np.int64)
    coef_w = np.ascontiguousarray(coef_w, dtype=np.float64)
    coef_l = np.ascontiguousarray(coef_l, dtype=np.float64)
    dloss_dmargin = np.ascontiguousarray(dloss_dmargin, dtype=np.float64)
    softmax_table = np.ascontiguousarray(softmax_table, dtype=np.float64)
    if active_backend() == "numba":
        return _numba_kernels().policy_batch_grad(
            rows, winner_ids, loser_ids, coef_w, coef_l, dloss_dmargin, softmax_table
        )
    return _policy_batch_grad_np(
        rows, winner_ids, loser_ids, coef_w, coef_l, dloss_dmargin, softmax_table
    )


# ---------------------------------------------------------------- numpy twins


def _objective_np(p, margins, gamma0, tau):
    n = p.size
    gaps = margins - n * gamma0 * p
    # softplus(-gaps), branched for stability
    neg = gaps >= 0.0
    sp = np.empty_like(gaps)
    sp[neg] = np.log1p(np.exp(-gaps[neg]))
    sp[~neg] = -gaps[~neg] + np.log1p(np.exp(gaps[~neg]))
    kl = np.sum(p * np.log(n * np.maximum(p, _P_FLOOR)))
    return float(np.mean(sp) + tau * kl)


def _gradient_np(p, margins, gamma0, tau):
    n = p.size
    z = n * gamma0 * p - margins
    neg = z < 0.0
    sig = np.empty_like(z)
    ez = np.exp(z[neg])
    sig[neg] = ez / (1.0 + ez)
    sig[~neg] = 1.0 / (1.0 + np.exp(-z[~neg]))
    return gamma0 * sig + tau * (1.0 + np.log(n * np.maximum(p, _P_FLOOR)))


def _mwu_solve_np(margins, gamma0, tau, eta, iterations):
    n = margins.size
    p = np.full(n, 1.0 / n)
    objective_trace = np.empty(iterations)
    min_gamma_trace = np.empty(iterations)
    max_gamma_trace = np.empty(iterations)
    kl_trace = np.empty(iterations)
    obj_prev = _objective_np(p, margins, gamma0, tau)
    max_simplex_error = abs(p.sum() - 1.0)
    min_probability = float(p.min())
    halvings = 0
    for t in range(iterations):
        grad = _gradient_np(p, margins, gamma0, tau)
        eta_t = eta
        q = p
        obj_new = obj_prev
        for _ in range(11):
            w = np.log(np.maximum(p, _P_FLOOR)) - eta_t * grad
            w -= w.max()
            q = np.exp(w)
            q /= q.sum()
            obj_new = _objective_np(q, margins, gamma0, tau)
            if obj_new <= obj_prev + 1e-10:
                break
            eta_t *= 0.5
            halvings += 1
        p = q
        obj_prev = obj_new
        gam = n * gamma0 * p
        objective_trace[t] = obj_new
        min_gamma_trace[t] = gam.min()
        max_gamma_trace[t] = gam.max()
        kl_trace[t] = float(np.sum(p * np.log(n * np.maximum(p, _P_FLOOR))))
        max_simplex_error = max(max_simplex_error, abs(p.sum() - 1.0))
        min_probability = min(min_probability, float(p.min()))
    return (
        p,
        objective_trace,
        min_gamma_trace,
        max_gamma_trace,
        kl_trace,
        max_simplex_error,
        min_probability,
        halvings,
    )


def _policy_batch_grad_np(
    rows, winner_ids, loser_ids, coef_w, coef_l, dloss_dmargin, softmax_table
):
    grad = np.zeros_like(softmax_table)
    aw = dloss_dmargin * coef_w
    al = -dloss_dmargin * coef_l
    np.add.at(grad, (rows, winner_ids), aw)
    np.add.at(grad, (rows, loser_ids), al)
    np.add.at(grad, rows, -(aw + al)[:, None] * softmax_table[rows])
    return grad
