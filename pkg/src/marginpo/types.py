"""Domain types shared across the toolkit, plus the dataset JSON format.

The dataset serializer is canonical: dumping a loaded dataset reproduces the
input bytes exactly, which the CLI reproducibility contract relies on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from marginpo.numerics import sigmoid

__all__ = [
    "PreferencePair",
    "RewardPair",
    "LossConfig",
    "Dataset",
    "METHODS",
    "GAMMA_METHODS",
    "bt_probability",
    "save_dataset",
    "load_dataset",
    "dataset_to_json",
]

METHODS = ("dpo", "simpo", "rdpo", "rdpo_length", "beta_dpo", "gamma_dpo", "gamma_simpo")
GAMMA_METHODS = ("gamma_dpo", "gamma_simpo")

# Methods whose rewards are policy/reference log-ratios scaled by beta; the
# rest (simpo, gamma_simpo) use length-normalized policy log-probs.
LOG_RATIO_METHODS = ("dpo", "rdpo", "rdpo_length", "beta_dpo", "gamma_dpo")


@dataclass(frozen=True)
class PreferencePair:
    """One labeled comparison: winner/loser response indices under a prompt.

    true_gap is the hidden-reward difference r*(winner) - r*(loser) at
    labeling time; it is evaluation ground truth and survives label flips
    unchanged (a flip swaps the ids and lengths and sets flipped).
    """

    prompt_id: int
    winner_id: int
    loser_id: int
    winner_len: int
    loser_len: int
    true_gap: float
    flipped: bool = False

    def __post_init__(self):
        if self.prompt_id < 0 or self.winner_id < 0 or self.loser_id < 0:
            raise ValueError("prompt and response indices must be >= 0")
        if self.winner_id == self.loser_id:
            raise ValueError("winner_id and loser_id must differ")
        if self.winner_len < 1 or self.loser_len < 1:
            raise ValueError("response lengths must be >= 1")
        if not _finite(self.true_gap):
            raise ValueError("true_gap must be finite")


@dataclass(frozen=True)
class RewardPair:
    """Rewards of the preferred and dispreferred response; margin is derived."""

    r_w: float
    r_l: float

    def __post_init__(self):
        if not (_finite(self.r_w) and _finite(self.r_l)):
            raise ValueError("rewards must be finite")

    @property
    def margin(self) -> float:
        return self.r_w - self.r_l


@dataclass(frozen=True)
class LossConfig:
    """Method selection plus every per-method hyperparameter.

    gamma0 is the fixed target margin (simpo, rdpo) and the solver's margin
    budget per pair (gamma methods); epsilon is the rdpo smoothing weight;
    alpha_len the length-difference penalty of rdpo_length; beta_dpo_alpha
    the margin-sensitivity of beta_dpo's per-pair beta scaling.
    """

    method: str = "dpo"
    beta: float = 1.0
    gamma0: float = 0.0
    epsilon: float = 0.0
    alpha_len: float = 0.0
    beta_dpo_alpha: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; expected one of {METHODS}"
            )
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(f"epsilon must be in [0, 0.5), got {self.epsilon}")
        if self.gamma0 < 0.0:
            raise ValueError(f"gamma0 must be >= 0, got {self.gamma0}")
        if self.alpha_len < 0.0:
            raise ValueError(f"alpha_len must be >= 0, got {self.alpha_len}")


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of preference pairs over an indexed prompt table."""

    prompts: int
    responses_per_prompt: int
    pairs: tuple[PreferencePair, ...]
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "heldout"):
            raise ValueError(f"split must be train or heldout, got {self.split!r}")
        for pair in self.pairs:
            if not 0 <= pair.prompt_id < self.prompts:
                raise ValueError(f"pair references prompt {pair.prompt_id} out of range")
            k = self.responses_per_prompt
            if not (0 <= pair.winner_id < k and 0 <= pair.loser_id < k):
                raise ValueError("pair references a response index out of range")

    def __len__(self) -> int:
        return len(self.pairs)


def _finite(x) -> bool:
    x = float(x)
    return x == x and abs(x) != float("inf")


def bt_probability(r_w: float, r_l: float) -> float:
    """Bradley-Terry win probability sigmoid(r_w - r_l); saturates, never overflows."""
    if not (_finite(r_w) and _finite(r_l)):
        raise ValueError("rewards must be finite")
    return float(sigmoid(r_w - r_l))


# ------------------------------------------------------------- serialization

_PAIR_FIELDS = (
    "prompt_id",
    "winner_id",
    "loser_id",
    "winner_len",
    "loser_len",
    "true_gap",
    "flipped",
)


def dataset_to_json(dataset: Dataset) -> str:
    """Canonical JSON text for a dataset; load(dump(x)) == dump(x) bytewise."""
    pairs = [
        {name: getattr(pair, name) for name in _PAIR_FIELDS} for pair in dataset.pairs
    ]
    doc = {
        "prompts": dataset.prompts,
        "responses_per_prompt": dataset.responses_per_prompt,
        "pairs": pairs,
    }
    return json.dumps(doc, indent=2) + "\n"


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(dataset_to_json(dataset))


def load_dataset(path, split: str = "train") -> Dataset:
    """Read the dataset JSON document; the split tag is caller-supplied
    (the serialized format does not carry it)."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        pairs = tuple(
            PreferencePair(
                prompt_id=int(rec["prompt_id"]),
                winner_id=int(rec["winner_id"]),
                loser_id=int(rec["loser_id"]),
                winner_len=int(rec["winner_len"]),
                loser_len=int(rec["loser_len"]),
                true_gap=float(rec["true_gap"]),
                flipped=bool(rec["flipped"]),
            )
            for rec in doc["pairs"]
        )
        return Dataset(
            prompts=int(doc["prompts"]),
            responses_per_prompt=int(doc["responses_per_prompt"]),
            pairs=pairs,
            split=split,
        )
    except KeyError as exc:
        raise ValueError(f"dataset file {path} is missing field {exc}") from exc
