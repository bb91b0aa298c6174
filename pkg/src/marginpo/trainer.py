"""Categorical-policy trainer exercising the whole per-batch pipeline:
rewards, margin queue, margin solve, loss, analytic gradient, optimizer step.

The policy is a logits table of shape (prompts, responses_per_prompt) with a
frozen reference table; whole-response log-probabilities are log-softmax rows.
Per-pair target margins from the solver are constants of the policy step: the
gradient never flows through the solve. beta_dpo's running mean margin is
likewise a frozen statistic within each step (updated before use, not
differentiated).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from marginpo import kernels
from marginpo.errors import ConfigError, NumericError
from marginpo.losses import beta_dpo_loss_vg, margin_loss_vg, rdpo_loss_vg
from marginpo.margin_queue import MarginQueue
from marginpo.numerics import log_softmax
from marginpo.solver import SolverConfig, solve
from marginpo.types import GAMMA_METHODS, Dataset, LossConfig, RewardPair

__all__ = [
    "PolicySnapshot",
    "TrainConfig",
    "TrainReport",
    "train",
    "policy_gradient_check",
    "save_checkpoint",
    "load_checkpoint",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
EMA_MOMENTUM = 0.9


@dataclass
class PolicySnapshot:
    """Per-prompt response logits plus the frozen reference table."""

    logits: np.ndarray
    ref_logits: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.ref_logits = np.asarray(self.ref_logits, dtype=np.float64)
        if self.logits.shape != self.ref_logits.shape or self.logits.ndim != 2:
            raise ValueError("logits and ref_logits must share a 2-d shape")

    def log_prob_table(self) -> np.ndarray:
        return log_softmax(self.logits)

    def ref_log_prob_table(self) -> np.ndarray:
        return log_softmax(self.ref_logits)

    def log_prob(self, prompt: int, response: int) -> float:
        p, k = self.logits.shape
        if not (0 <= prompt < p and 0 <= response < k):
            raise ValueError(f"index ({prompt}, {response}) out of range for {p}x{k}")
        return float(self.log_prob_table()[prompt, response])


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig
    solver: SolverConfig | None = None
    queue_capacity: int = 1024
    batch_size: int = 64
    epochs: int = 1
    learning_rate: float = 0.01
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.queue_capacity < 1:
            raise ValueError(f"queue_capacity must be >= 1, got {self.queue_capacity}")
        if self.loss.method in GAMMA_METHODS and self.solver is None:
            raise ConfigError(
                f"method {self.loss.method} requires a solver configuration"
            )


@dataclass
class TrainReport:
    method: str
    seed: int
    epochs: int
    train_loss: list
    heldout_accuracy: list
    gamma_min: float | None = None
    gamma_mean: float | None = None
    gamma_max: float | None = None
    seconds: float = 0.0

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "seed": self.seed,
            "epochs": self.epochs,
            "train_loss": self.train_loss,
            "heldout_accuracy": self.heldout_accuracy,
        }
        if self.gamma_min is not None:
            doc["gamma_min"] = self.gamma_min
            doc["gamma_mean"] = self.gamma_mean
            doc["gamma_max"] = self.gamma_max
        doc["seconds"] = self.seconds
        return json.dumps(doc, indent=2) + "\n"


def _dataset_arrays(dataset: Dataset):
    n = len(dataset.pairs)
    rows = np.empty(n, dtype=np.int64)
    widx = np.empty(n, dtype=np.int64)
    lidx = np.empty(n, dtype=np.int64)
    wlen = np.empty(n, dtype=np.float64)
    llen = np.empty(n, dtype=np.float64)
    for i, pair in enumerate(dataset.pairs):
        rows[i] = pair.prompt_id
        widx[i] = pair.winner_id
        lidx[i] = pair.loser_id
        wlen[i] = pair.winner_len
        llen[i] = pair.loser_len
    return rows, widx, lidx, wlen, llen


def _rewards(method, cfg: LossConfig, logp, ref_logp, rows, widx, lidx, wlen, llen):
    """Per-pair (r_w, r_l) arrays under the method's reward definition."""
    lp_w = logp[rows, widx]
    lp_l = logp[rows, lidx]
    if method in ("simpo", "gamma_simpo"):
        r_w = (cfg.beta / wlen) * lp_w
        r_l = (cfg.beta / llen) * lp_l
        coef_w = cfg.beta / wlen
        coef_l = cfg.beta / llen
    else:
        r_w = cfg.beta * (lp_w - ref_logp[rows, widx])
        r_l = cfg.beta * (lp_l - ref_logp[rows, lidx])
        coef_w = np.full(rows.size, cfg.beta)
        coef_l = np.full(rows.size, cfg.beta)
    return r_w, r_l, coef_w, coef_l


class _EmaState:
    """beta_dpo's running mean of batch-mean margins; update before use."""

    def __init__(self):
        self.value = None

    def update(self, batch_mean: float) -> float:
        if self.value is None:
            self.value = batch_mean
        else:
            self.value = EMA_MOMENTUM * self.value + (1.0 - EMA_MOMENTUM) * batch_mean
        return self.value


def _batch_loss_terms(method, cfg: LossConfig, margins, wlen, llen, gamma, m0):
    """Per-pair loss values and d/dmargin for one batch.

    gamma is the solver output restricted to this batch (gamma methods only);
    m0 is beta_dpo's pre-updated running mean, a constant of this batch.
    """
    if method == "dpo":
        return margin_loss_vg(margins, 0.0)
    if method == "simpo":
        return margin_loss_vg(margins, cfg.gamma0)
    if method == "rdpo":
        return rdpo_loss_vg(margins, cfg.gamma0, cfg.epsilon)
    if method == "rdpo_length":
        return margin_loss_vg(margins, cfg.alpha_len * (wlen - llen))
    if method == "beta_dpo":
        return beta_dpo_loss_vg(margins, cfg.beta_dpo_alpha, m0)
    if method in GAMMA_METHODS:
        return margin_loss_vg(margins, gamma)
    raise ValueError(f"unknown method {method!r}")


def train(
    dataset: Dataset,
    config: TrainConfig,
    heldout: Dataset | None = None,
    initial_policy: PolicySnapshot | None = None,
    on_batch=None,
):
    """Run the seeded training loop; returns (PolicySnapshot, TrainReport).

    The policy starts at the reference (zero logits) unless initial_policy
    warm-starts both tables. on_batch, when given, is called after each
    gamma-method batch with a dict of the assembled margins, index map,
    solver gammas, and applied gammas (test instrumentation).
    """
    if len(dataset.pairs) == 0:
        raise ValueError("dataset must contain at least one pair")
    started = time.perf_counter()
    method = config.loss.method
    n_prompts = dataset.prompts
    n_resp = dataset.responses_per_prompt
    if initial_policy is not None:
        theta = initial_policy.logits.copy()
        ref_logits = initial_policy.ref_logits.copy()
        if theta.shape != (n_prompts, n_resp):
            raise ValueError("initial policy shape does not match the dataset")
    else:
        theta = np.zeros((n_prompts, n_resp))
        ref_logits = np.zeros((n_prompts, n_resp))
    ref_logp = log_softmax(ref_logits)

    rows, widx, lidx, wlen, llen = _dataset_arrays(dataset)
    held_arrays = _dataset_arrays(heldout) if heldout is not None else None
    n = rows.size

    rng = np.random.default_rng(config.seed)
    queue = (
        MarginQueue(capacity=config.queue_capacity, rng_seed=config.seed)
        if method in GAMMA_METHODS
        else None
    )
    ema = _EmaState()

    mom = np.zeros_like(theta)
    vel = np.zeros_like(theta)
    adam_t = 0

    train_loss = []
    heldout_accuracy = []
    final_gammas = None

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss_sum = 0.0
        epoch_gammas = [] if method in GAMMA_METHODS else None
        for start in range(0, n, config.batch_size):
            sel = perm[start : start + config.batch_size]
            logp = log_softmax(theta)
            r_w, r_l, coef_w, coef_l = _rewards(
                method, config.loss, logp, ref_logp,
                rows[sel], widx[sel], lidx[sel], wlen[sel], llen[sel],
            )
            margins = r_w - r_l

            gamma = None
            if queue is not None:
                batch_pairs = [
                    RewardPair(r_w=float(a), r_l=float(b)) for a, b in zip(r_w, r_l)
                ]
                queue.push_batch(batch_pairs)
                pool = max(config.solver.pool_size, len(batch_pairs))
                assembled, index_map = queue.assemble_margins(batch_pairs, pool)
                state = solve(assembled, config.solver)
                gamma = state.gammas[index_map]
                epoch_gammas.append(gamma)
                if on_batch is not None:
                    on_batch(
                        {
                            "margins": assembled,
                            "index_map": index_map,
                            "gammas": state.gammas,
                            "applied": gamma,
                        }
                    )

            m0 = (
                ema.update(float(np.mean(margins))) if method == "beta_dpo" else None
            )
            values, dval = _batch_loss_terms(
                method, config.loss, margins, wlen[sel], llen[sel], gamma, m0
            )
            batch_loss = float(np.mean(values))
            if not np.isfinite(batch_loss):
                raise NumericError(f"non-finite batch loss at epoch {epoch}")
            epoch_loss_sum += float(np.sum(values))

            grad = kernels.policy_batch_grad(
                rows[sel], widx[sel], lidx[sel],
                coef_w, coef_l, dval / sel.size, np.exp(logp),
            )
            if config.optimizer == "sgd":
                theta -= config.learning_rate * grad
            else:
                adam_t += 1
                mom = ADAM_BETA1 * mom + (1.0 - ADAM_BETA1) * grad
                vel = ADAM_BETA2 * vel + (1.0 - ADAM_BETA2) * grad * grad
                m_hat = mom / (1.0 - ADAM_BETA1**adam_t)
                v_hat = vel / (1.0 - ADAM_BETA2**adam_t)
                theta -= config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        train_loss.append(epoch_loss_sum / n)
        if held_arrays is not None:
            heldout_accuracy.append(
                _pairwise_accuracy(method, config.loss, theta, ref_logp, held_arrays)
            )
        if epoch_gammas is not None and epoch == config.epochs - 1:
            final_gammas = np.concatenate(epoch_gammas)

    policy = PolicySnapshot(logits=theta, ref_logits=ref_logits)
    report = TrainReport(
        method=method,
        seed=config.seed,
        epochs=config.epochs,
        train_loss=train_loss,
        heldout_accuracy=heldout_accuracy,
        seconds=time.perf_counter() - started,
    )
    if final_gammas is not None:
        report.gamma_min = float(np.min(final_gammas))
        report.gamma_mean = float(np.mean(final_gammas))
        report.gamma_max = float(np.max(final_gammas))
    return policy, report


def _pairwise_accuracy(method, cfg, theta, ref_logp, arrays) -> float:
    """Fraction of pairs whose implied margin under the method's reward
    definition is positive."""
    rows, widx, lidx, wlen, llen = arrays
    logp = log_softmax(theta)
    r_w, r_l, _, _ = _rewards(method, cfg, logp, ref_logp, rows, widx, lidx, wlen, llen)
    return float(np.mean((r_w - r_l) > 0.0))


def evaluate_accuracy(policy: PolicySnapshot, dataset: Dataset, loss: LossConfig) -> float:
    """Heldout pairwise accuracy of a trained policy."""
    return _pairwise_accuracy(
        loss.method,
        loss,
        policy.logits,
        log_softmax(policy.ref_logits),
        _dataset_arrays(dataset),
    )


def policy_gradient_check(dataset: Dataset, config: TrainConfig, trials: int) -> float:
    """Max relative error between the analytic batch gradient and central
    finite differences at randomly probed logit entries.

    Uses a random policy/reference point (seeded by config.seed) and the first
    batch of the dataset. Solver gammas and the beta_dpo running mean are
    frozen at the base point, matching their constant-per-step treatment in
    training.

    Errors are normalized by max(|analytic|, |fd|, 1e-6): coordinates whose
    true gradient vanishes exactly (a probe prompt outside the batch, or the
    cancelling softmax term when coef_w == coef_l) still produce ~1e-10 of
    finite-difference roundoff, which the floor keeps out of the maximum.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    method = config.loss.method
    rng = np.random.default_rng(config.seed)
    n_prompts = dataset.prompts
    n_resp = dataset.responses_per_prompt
    theta = rng.normal(0.0, 1.0, (n_prompts, n_resp))
    ref_logp = log_softmax(rng.normal(0.0, 1.0, (n_prompts, n_resp)))

    rows, widx, lidx, wlen, llen = _dataset_arrays(dataset)
    sel = np.arange(min(config.batch_size, rows.size))
    rows, widx, lidx = rows[sel], widx[sel], lidx[sel]
    wlen, llen = wlen[sel], llen[sel]

    def batch_margins(th):
        logp = log_softmax(th)
        r_w, r_l, cw, cl = _rewards(
            method, config.loss, logp, ref_logp, rows, widx, lidx, wlen, llen
        )
        return r_w - r_l, cw, cl, logp

    margins0, coef_w, coef_l, logp0 = batch_margins(theta)

    gamma = None
    if method in GAMMA_METHODS:
        queue = MarginQueue(capacity=config.queue_capacity, rng_seed=config.seed)
        pairs = [RewardPair(r_w=float(m), r_l=0.0) for m in margins0]
        queue.push_batch(pairs)
        pool = max(config.solver.pool_size, len(pairs))
        assembled, index_map = queue.assemble_margins(pairs, pool)
        gamma = solve(assembled, config.solver).gammas[index_map]
    m0 = float(np.mean(margins0)) if method == "beta_dpo" else None

    def batch_loss(th):
        m, _, _, _ = batch_margins(th)
        values, _ = _batch_loss_terms(method, config.loss, m, wlen, llen, gamma, m0)
        return float(np.mean(values))

    _, dval = _batch_loss_terms(
        method, config.loss, margins0, wlen, llen, gamma, m0
    )
    analytic = kernels.policy_batch_grad(
        rows, widx, lidx, coef_w, coef_l, dval / rows.size, np.exp(logp0)
    )

    h = 1e-5
    worst = 0.0
    for _ in range(trials):
        x = int(rng.integers(0, n_prompts))
        k = int(rng.integers(0, n_resp))
        probe = theta.copy()
        probe[x, k] += h
        up = batch_loss(probe)
        probe[x, k] -= 2.0 * h
        down = batch_loss(probe)
        fd = (up - down) / (2.0 * h)
        a = analytic[x, k]
        err = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
        worst = max(worst, err)
    return worst


# -------------------------------------------------------------- checkpoints


def save_checkpoint(policy: PolicySnapshot, path) -> None:
    """Flat binary: one JSON shape-header line, then raw little-endian
    float64 C-order bytes of logits followed by ref_logits."""
    p, k = policy.logits.shape
    header = json.dumps(
        {"prompts": p, "responses": k, "dtype": "<f8", "arrays": ["logits", "ref_logits"]}
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(policy.logits, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(policy.ref_logits, dtype="<f8").tobytes())


def load_checkpoint(path) -> PolicySnapshot:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        p, k = int(header["prompts"]), int(header["responses"])
        count = p * k
        logits = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(p, k).copy()
        ref = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(p, k).copy()
    return PolicySnapshot(logits=logits, ref_logits=ref)
