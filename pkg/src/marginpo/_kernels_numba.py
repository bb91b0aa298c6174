"""Numba twins of the kernels in kernels.py. Same math, same update order."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_P_FLOOR = 1e-300


@nb.njit(cache=True)
def _softplus_s(x):
    if x <= 0.0:
        return math.log1p(math.exp(x))
    return x + math.log1p(math.exp(-x))


@nb.njit(cache=True)
def _sigmoid_s(x):
    if x < 0.0:
        e = math.exp(x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(-x))


@nb.njit(cache=True)
def _objective(p, margins, gamma0, tau):
    n = p.size
    loss = 0.0
    kl = 0.0
    for i in range(n):
        loss += _softplus_s(-(margins[i] - n * gamma0 * p[i]))
        kl += p[i] * math.log(n * max(p[i], _P_FLOOR))
    return loss / n + tau * kl


@nb.njit(cache=True)
def mwu_solve(margins, gamma0, tau, eta, iterations):
    n = margins.size
    p = np.full(n, 1.0 / n)
    q = np.empty(n)
    w = np.empty(n)
    grad = np.empty(n)
    objective_trace = np.empty(iterations)
    min_gamma_trace = np.empty(iterations)
    max_gamma_trace = np.empty(iterations)
    kl_trace = np.empty(iterations)
    obj_prev = _objective(p, margins, gamma0, tau)
    ssum = 0.0
    for i in range(n):
        ssum += p[i]
    max_simplex_error = abs(ssum - 1.0)
    min_probability = 1.0 / n
    halvings = 0
    for t in range(iterations):
        for i in range(n):
            grad[i] = gamma0 * _sigmoid_s(n * gamma0 * p[i] - margins[i]) + tau * (
                1.0 + math.log(n * max(p[i], _P_FLOOR))
            )
        eta_t = eta
        obj_new = obj_prev
        for _ in range(11):
            wmax = -np.inf
            for i in range(n):
                w[i] = math.log(max(p[i], _P_FLOOR)) - eta_t * grad[i]
                if w[i] > wmax:
                    wmax = w[i]
            s = 0.0
            for i in range(n):
                q[i] = math.exp(w[i] - wmax)
                s += q[i]
            for i in range(n):
                q[i] /= s
            obj_new = _objective(q, margins, gamma0, tau)
            if obj_new <= obj_prev + 1e-10:
                break
            eta_t *= 0.5
            halvings += 1
        for i in range(n):
            p[i] = q[i]
        obj_prev = obj_new
        gmin = np.inf
        gmax = -np.inf
        kl = 0.0
        psum = 0.0
        pmin = np.inf
        for i in range(n):
            g = n * gamma0 * p[i]
            if g < gmin:
                gmin = g
            if g > gmax:
                gmax = g
            kl += p[i] * math.log(n * max(p[i], _P_FLOOR))
            psum += p[i]
            if p[i] < pmin:
                pmin = p[i]
        objective_trace[t] = obj_new
        min_gamma_trace[t] = gmin
        max_gamma_trace[t] = gmax
        kl_trace[t] = kl
        err = abs(psum - 1.0)
        if err > max_simplex_error:
            max_simplex_error = err
        if pmin < min_probability:
            min_probability = pmin
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


@nb.njit(cache=True)
def policy_batch_grad(
    rows, winner_ids, loser_ids, coef_w, coef_l, dloss_dmargin, softmax_table
):
    grad = np.zeros_like(softmax_table)
    n_resp = softmax_table.shape[1]
    for i in range(rows.size):
        r = rows[i]
        aw = dloss_dmargin[i] * coef_w[i]
        al = -dloss_dmargin[i] * coef_l[i]
        grad[r, winner_ids[i]] += aw
        grad[r, loser_ids[i]] += al
        s = aw + al
        for k in range(n_resp):
            grad[r, k] -= s * softmax_table[r, k]
    return grad
