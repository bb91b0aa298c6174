"""Numerical checks of the adaptive-label-smoothing reading of dynamic
margins, plus the diagnostic curves (margin-vs-gamma, tau sweep) as CSV data.

A margin shift of delta away from the fixed target gamma0 changes the loss
exactly as label smoothing with some epsilon would; epsilon_exact solves that
equality (it is affine in epsilon, so no root-finding), and epsilon_approx is
the first-order closed form. The scan utilities quantify where the
approximation is trustworthy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from marginpo.errors import ConfigError, DegenerateInputError
from marginpo.numerics import sigmoid, softplus
from marginpo.solver import SolverConfig, solve
from marginpo.trainer import TrainConfig, evaluate_accuracy, train
from marginpo.types import GAMMA_METHODS, Dataset

__all__ = [
    "TheoremPoint",
    "epsilon_approx",
    "epsilon_exact",
    "theorem_point",
    "theorem_scan",
    "epsilon_monotonicity_scan",
    "gamma_vs_gap_curve",
    "tau_sweep",
    "write_theorem_csv",
    "write_curve_csv",
    "write_tau_sweep_csv",
]

# |delta| <= REGIME_FACTOR * |m - gamma0| marks a point as inside the
# first-order approximation regime.
REGIME_FACTOR = 0.1

THEOREM_COLUMNS = ("m", "gamma0", "delta", "eps_exact", "eps_approx", "rel_err", "in_regime")
CURVE_COLUMNS = ("margin", "gamma", "gamma0")
TAU_SWEEP_COLUMNS = ("tau", "acc_mean", "acc_std", "seeds")


@dataclass(frozen=True)
class TheoremPoint:
    """One margin/shift configuration with both smoothing equivalents."""

    m: float
    gamma0: float
    delta: float
    epsilon_exact: float
    epsilon_approx: float
    in_regime: bool

    @property
    def rel_err(self) -> float:
        return abs(self.epsilon_exact - self.epsilon_approx) / max(
            abs(self.epsilon_exact), 1e-12
        )


def _denominator(m: float, gamma0: float) -> float:
    return softplus(m + gamma0) - softplus(gamma0 - m)


def epsilon_approx(m: float, gamma0: float, delta: float) -> float:
    """First-order smoothing equivalent delta*sigmoid(gamma0 - m) / D with
    D = softplus(m + gamma0) - softplus(gamma0 - m); D vanishes iff m == 0."""
    den = _denominator(m, gamma0)
    if abs(den) < 1e-12:
        raise DegenerateInputError("denominator vanishes at m = 0")
    return float(delta * sigmoid(gamma0 - m) / den)


def epsilon_exact(m: float, gamma0: float, delta: float) -> float:
    """Exact smoothing equivalent: the loss equality is affine in epsilon,
    so epsilon = (A(delta) - A(0)) / (B - A(0)) with A(d) = softplus(gamma0 +
    d - m) and B = softplus(m + gamma0)."""
    a0 = softplus(gamma0 - m)
    b = softplus(m + gamma0)
    if abs(b - a0) < 1e-12:
        raise DegenerateInputError("branch losses coincide at m = 0")
    return float((softplus(gamma0 + delta - m) - a0) / (b - a0))


def theorem_point(m: float, gamma0: float, delta: float) -> TheoremPoint:
    return TheoremPoint(
        m=float(m),
        gamma0=float(gamma0),
        delta=float(delta),
        epsilon_exact=epsilon_exact(m, gamma0, delta),
        epsilon_approx=epsilon_approx(m, gamma0, delta),
        in_regime=abs(delta) <= REGIME_FACTOR * abs(m - gamma0),
    )


def theorem_scan(
    n_points: int = 10_000,
    seed: int = 0,
    gamma0_range=(0.1, 1.0),
    gap_range=(0.5, 2.0),
    delta_factor: float = 0.05,
    out_of_regime_points: int = 0,
) -> list[TheoremPoint]:
    """Random scan over the approximation regime.

    In-regime rows draw gamma0 and the positive gap m - gamma0 uniformly from
    their ranges and |delta| up to delta_factor * gap. Out-of-regime rows use
    deliberately large |delta| (0.2 to 0.5 of the gap) and come flagged
    in_regime False.
    """
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(n_points):
        g0 = rng.uniform(*gamma0_range)
        gap = rng.uniform(*gap_range)
        delta = rng.uniform(-delta_factor, delta_factor) * gap
        points.append(theorem_point(g0 + gap, g0, delta))
    for _ in range(out_of_regime_points):
        g0 = rng.uniform(*gamma0_range)
        gap = rng.uniform(*gap_range)
        delta = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 0.5) * gap
        points.append(theorem_point(g0 + gap, g0, delta))
    return points


def epsilon_monotonicity_scan(gamma0: float, delta: float, m_grid) -> bool:
    """True iff epsilon_approx strictly decreases along the ascending m_grid
    (delta > 0); single-point grids pass vacuously."""
    m_grid = np.asarray(m_grid, dtype=np.float64)
    if m_grid.size and not np.all(np.diff(m_grid) > 0.0):
        raise ValueError("m_grid must be strictly increasing")
    values = [epsilon_approx(float(m), gamma0, delta) for m in m_grid]
    return all(b < a for a, b in zip(values, values[1:]))


def gamma_vs_gap_curve(margins, config: SolverConfig):
    """Solve once and return the (margin, gamma) relation sorted by margin.

    Checks the structural claims on the way out: gammas non-decreasing in the
    margin (1e-9 slack) and inside [0, n * gamma0].
    """
    margins = np.asarray(margins, dtype=np.float64)
    if margins.size == 0:
        raise ValueError("margins must be nonempty")
    state = solve(margins, config)
    order = np.argsort(margins, kind="stable")
    m_sorted = margins[order]
    g_sorted = state.gammas[order]
    if np.any(np.diff(g_sorted) < -1e-9):
        raise ValueError("solver produced a decreasing margin-gamma relation")
    upper = margins.size * config.gamma0
    if g_sorted.min() < 0.0 or g_sorted.max() > upper + 1e-9:
        raise ValueError("gammas escaped the [0, n*gamma0] interval")
    return m_sorted, g_sorted


def tau_sweep(
    train_ds: Dataset,
    heldout_ds: Dataset,
    base: TrainConfig,
    tau_grid,
    seeds=(0, 1, 2),
) -> list[dict]:
    """Train the configured gamma method once per (tau, seed); one row per
    tau with mean/std of final heldout accuracy across seeds."""
    if base.loss.method not in GAMMA_METHODS:
        raise ConfigError("tau_sweep requires a gamma-method TrainConfig")
    tau_grid = [float(t) for t in tau_grid]
    if not tau_grid or any(t <= 0 for t in tau_grid):
        raise ValueError("tau_grid must be nonempty and positive")
    if sorted(tau_grid) != tau_grid:
        raise ValueError("tau_grid must be ascending")
    rows = []
    for tau in tau_grid:
        accs = []
        for seed in seeds:
            config = replace(
                base, solver=replace(base.solver, tau=tau, eta=None), seed=int(seed)
            )
            policy, _ = train(train_ds, config, heldout=heldout_ds)
            accs.append(evaluate_accuracy(policy, heldout_ds, config.loss))
        rows.append(
            {
                "tau": tau,
                "acc_mean": float(np.mean(accs)),
                "acc_std": float(np.std(accs)),
                "seeds": len(accs),
            }
        )
    return rows


# ------------------------------------------------------------------ CSV I/O


def write_theorem_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(THEOREM_COLUMNS)
        for pt in points:
            writer.writerow(
                [
                    repr(pt.m),
                    repr(pt.gamma0),
                    repr(pt.delta),
                    repr(pt.epsilon_exact),
                    repr(pt.epsilon_approx),
                    repr(pt.rel_err),
                    "true" if pt.in_regime else "false",
                ]
            )


def write_curve_csv(margins_sorted, gammas_sorted, gamma0: float, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for m, g in zip(margins_sorted, gammas_sorted):
            writer.writerow([repr(float(m)), repr(float(g)), repr(float(gamma0))])


def write_tau_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TAU_SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(
                [repr(row["tau"]), repr(row["acc_mean"]), repr(row["acc_std"]), row["seeds"]]
            )
