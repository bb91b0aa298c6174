"""Desk-scale toolkit for preference optimization with dynamic per-pair
target margins: losses, the simplex margin solver, a FIFO margin queue, a
categorical toy trainer, synthetic data generation, and analysis scans."""

__version__ = "0.1.0"

from marginpo.analysis import (
    epsilon_approx,
    epsilon_exact,
    epsilon_monotonicity_scan,
    gamma_vs_gap_curve,
    tau_sweep,
    theorem_point,
    theorem_scan,
)
from marginpo.datagen import GenConfig, flip_labels, generate
from marginpo.errors import ConfigError, DegenerateInputError, NumericError
from marginpo.losses import (
    LossOutput,
    beta_dpo_loss,
    dpo_rewards,
    gamma_po_loss,
    margin_po_loss,
    rdpo_length_loss,
    rdpo_loss,
    simpo_rewards,
)
from marginpo.margin_queue import MarginQueue
from marginpo.solver import (
    MarginSolverState,
    SolverConfig,
    margin_objective,
    objective_gradient,
    projected_gradient_norm,
    second_derivative,
    solve,
    write_trace_csv,
)
from marginpo.trainer import (
    PolicySnapshot,
    TrainConfig,
    TrainReport,
    load_checkpoint,
    policy_gradient_check,
    save_checkpoint,
    train,
)
from marginpo.types import (
    Dataset,
    LossConfig,
    PreferencePair,
    RewardPair,
    bt_probability,
    load_dataset,
    save_dataset,
)
