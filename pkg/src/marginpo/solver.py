"""Per-batch target-margin solver.

Minimizes  mean_i softplus(-(m_i - n*p_i*gamma0)) + tau * sum_i p_i*log(n*p_i)
over the probability simplex with multiplicative-weights mirror descent, then
reads off per-pair margins gamma_i = n * p_i * gamma0. The simplex constraint
ties the margins together: sum gamma_i == n * gamma0, so raising one pair's
target lowers the budget left for the others. tau -> infinity pins p at
uniform (every gamma_i == gamma0); tau -> 0 reallocates margin freely toward
pairs the reward model already separates well.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from marginpo import kernels
from marginpo.numerics import sigmoid, softplus

__all__ = [
    "SolverConfig",
    "MarginSolverState",
    "margin_objective",
    "objective_gradient",
    "second_derivative",
    "solve",
    "projected_gradient_norm",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("iteration", "objective", "min_gamma", "max_gamma", "kl_to_uniform")


@dataclass(frozen=True)
class SolverConfig:
    """Solver hyperparameters.

    eta defaults to min(0.5 / tau, 1.0) when not given. pool_size is the
    margin-vector width the training loop assembles per solve; solve() itself
    accepts any length and uses the actual length everywhere the pool width
    would appear.
    """

    gamma0: float = 0.4
    tau: float = 1.0
    eta: float | None = None
    iterations: int = 20
    pool_size: int = 256

    def __post_init__(self):
        if not self.gamma0 > 0.0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.eta is not None and not self.eta > 0.0:
            raise ValueError(f"eta must be positive when given, got {self.eta}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {self.pool_size}")

    @property
    def step_size(self) -> float:
        return self.eta if self.eta is not None else min(0.5 / self.tau, 1.0)


@dataclass
class MarginSolverState:
    """Result of one solve: simplex weights, margins, and run diagnostics.

    gammas[i] == len(p) * p[i] * gamma0 (clamped at 0 on the way out, a
    no-op while p stays positive). objective_trace holds the post-update
    objective of each iteration and is non-increasing up to the 1e-10
    safeguard slack.
    """

    p: np.ndarray
    gammas: np.ndarray
    objective_trace: np.ndarray
    min_gamma_trace: np.ndarray = field(repr=False, default=None)
    max_gamma_trace: np.ndarray = field(repr=False, default=None)
    kl_trace: np.ndarray = field(repr=False, default=None)
    max_simplex_error: float = 0.0
    min_probability: float = 0.0
    halvings: int = 0


def _check_margins(margins) -> np.ndarray:
    margins = np.asarray(margins, dtype=np.float64)
    if margins.ndim != 1 or margins.size == 0:
        raise ValueError("margins must be a non-empty 1-d array")
    if not np.all(np.isfinite(margins)):
        raise ValueError("margins must be finite")
    return margins


def margin_objective(p, margins, config: SolverConfig) -> float:
    """Objective value at simplex point p for the given margin vector."""
    p = np.asarray(p, dtype=np.float64)
    margins = _check_margins(margins)
    if p.shape != margins.shape:
        raise ValueError("p and margins must have the same shape")
    if np.any(p <= 0.0):
        raise ValueError("p must be strictly positive")
    n = p.size
    loss = np.mean(softplus(-(margins - n * config.gamma0 * p)))
    kl = np.sum(p * np.log(n * p))
    return float(loss + config.tau * kl)


def objective_gradient(p, margins, config: SolverConfig) -> np.ndarray:
    """Exact d(margin_objective)/dp, entrywise."""
    p = np.asarray(p, dtype=np.float64)
    margins = _check_margins(margins)
    if p.shape != margins.shape:
        raise ValueError("p and margins must have the same shape")
    if np.any(p <= 0.0):
        raise ValueError("p must be strictly positive")
    n = p.size
    z = n * config.gamma0 * p - margins
    return config.gamma0 * sigmoid(z) + config.tau * (1.0 + np.log(n * p))


def second_derivative(p_i: float, m_i: float, config: SolverConfig) -> float:
    """d2(objective)/dp_i^2 at a single coordinate; positive for p_i > 0.

    Uses config.pool_size as the vector width n. The logistic factor is
    computed as sigmoid(z)*sigmoid(-z) so large |z| cannot overflow.
    """
    if not p_i > 0.0:
        raise ValueError("p_i must be strictly positive")
    n = config.pool_size
    z = m_i - n * p_i * config.gamma0
    return float(
        n * config.gamma0**2 * sigmoid(z) * sigmoid(-z) + config.tau / p_i
    )


def solve(margins, config: SolverConfig) -> MarginSolverState:
    """Run the multiplicative-weights solve from the uniform start.

    Deterministic: no randomness, fixed iteration count, ascending-index
    reductions. A step that would raise the objective by more than 1e-10
    retries with a halved step size, at most 10 times, for that step only.
    """
    margins = _check_margins(margins)
    n = margins.size
    (
        p,
        objective_trace,
        min_gamma_trace,
        max_gamma_trace,
        kl_trace,
        max_simplex_error,
        min_probability,
        halvings,
    ) = kernels.mwu_solve(
        margins, config.gamma0, config.tau, config.step_size, config.iterations
    )
    gammas = np.maximum(0.0, n * config.gamma0 * p)
    return MarginSolverState(
        p=p,
        gammas=gammas,
        objective_trace=objective_trace,
        min_gamma_trace=min_gamma_trace,
        max_gamma_trace=max_gamma_trace,
        kl_trace=kl_trace,
        max_simplex_error=float(max_simplex_error),
        min_probability=float(min_probability),
        halvings=int(halvings),
    )


def projected_gradient_norm(p, margins, config: SolverConfig) -> float:
    """Infinity norm of the gradient projected onto the simplex tangent.

    Zero at an interior stationary point: the raw gradient is then constant
    across coordinates and projection removes the common shift.
    """
    g = objective_gradient(p, margins, config)
    return float(np.max(np.abs(g - np.dot(p, g))))


def write_trace_csv(state: MarginSolverState, path) -> None:
    """Write the per-iteration trace with the canonical five columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for t in range(state.objective_trace.size):
            writer.writerow(
                [
                    t,
                    repr(float(state.objective_trace[t])),
                    repr(float(state.min_gamma_trace[t])),
                    repr(float(state.max_gamma_trace[t])),
                    repr(float(state.kl_trace[t])),
                ]
            )
