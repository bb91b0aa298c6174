"""Synthetic Bradley-Terry preference data with controllable ambiguity.

Hidden per-response rewards are Gaussian with a configurable scale; labels
are sampled from the BT win probability on the hidden gap, so low-gap pairs
get noisy labels exactly as ambiguous real annotations do. true_gap records
the hidden difference relative to the observed winner at labeling time and is
never touched afterwards: label flips swap the ids but leave the ground
truth in place for the evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from marginpo.numerics import sigmoid
from marginpo.types import Dataset, PreferencePair

__all__ = ["GenConfig", "generate", "flip_labels"]


@dataclass(frozen=True)
class GenConfig:
    prompts: int = 40
    responses_per_prompt: int = 4
    pairs_per_prompt: int = 8
    true_reward_scale: float = 1.0
    ambiguity_fraction: float = 0.0
    length_min: int = 8
    length_max: int = 256
    heldout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.prompts < 2 or self.responses_per_prompt < 2:
            raise ValueError("prompts and responses_per_prompt must be >= 2")
        if self.pairs_per_prompt < 1:
            raise ValueError("pairs_per_prompt must be >= 1")
        if self.true_reward_scale < 0.0:
            raise ValueError("true_reward_scale must be >= 0")
        if not 0.0 <= self.ambiguity_fraction <= 1.0:
            raise ValueError("ambiguity_fraction must be in [0, 1]")
        if not 1 <= self.length_min <= self.length_max:
            raise ValueError("need 1 <= length_min <= length_max")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ValueError("heldout_fraction must be in [0, 1)")


def generate(config: GenConfig):
    """Sample a dataset; returns (train, heldout) with disjoint pairs.

    ambiguity_fraction of all pair slots draw their response pair from the
    candidates with |hidden gap| < 0.1 * scale (falling back to the
    minimum-gap candidates when none qualify); the rest draw uniformly from
    every candidate pair. Labels always come from the BT model.
    """
    rng = np.random.default_rng(config.seed)
    p, k = config.prompts, config.responses_per_prompt
    rewards = rng.normal(0.0, config.true_reward_scale, (p, k))
    lengths = rng.integers(config.length_min, config.length_max + 1, (p, k))

    candidates = [(a, b) for a in range(k) for b in range(a + 1, k)]
    total = p * config.pairs_per_prompt
    n_ambiguous = int(round(config.ambiguity_fraction * total))
    ambiguous_slot = np.zeros(total, dtype=bool)
    ambiguous_slot[:n_ambiguous] = True
    rng.shuffle(ambiguous_slot)

    threshold = 0.1 * config.true_reward_scale
    pairs = []
    slot = 0
    for x in range(p):
        gaps = np.array([rewards[x, a] - rewards[x, b] for a, b in candidates])
        near = np.flatnonzero(np.abs(gaps) < threshold)
        if near.size == 0:
            near = np.flatnonzero(np.abs(gaps) == np.min(np.abs(gaps)))
        for _ in range(config.pairs_per_prompt):
            pool = near if ambiguous_slot[slot] else np.arange(len(candidates))
            a, b = candidates[int(rng.choice(pool))]
            if rng.random() < sigmoid(rewards[x, a] - rewards[x, b]):
                w, l = a, b
            else:
                w, l = b, a
            pairs.append(
                PreferencePair(
                    prompt_id=x,
                    winner_id=w,
                    loser_id=l,
                    winner_len=int(lengths[x, w]),
                    loser_len=int(lengths[x, l]),
                    true_gap=float(rewards[x, w] - rewards[x, l]),
                )
            )
            slot += 1

    order = rng.permutation(total)
    n_held = int(round(config.heldout_fraction * total))
    held_idx = sorted(order[:n_held])
    train_idx = sorted(order[n_held:])
    train = Dataset(
        prompts=p,
        responses_per_prompt=k,
        pairs=tuple(pairs[i] for i in train_idx),
        split="train",
    )
    heldout = Dataset(
        prompts=p,
        responses_per_prompt=k,
        pairs=tuple(pairs[i] for i in held_idx),
        split="heldout",
    )
    return train, heldout


def flip_labels(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Swap winner/loser (ids and lengths) independently w.p. rate.

    Train split only; flipped pairs keep their true_gap so ground truth
    survives the injected noise.
    """
    if dataset.split != "train":
        raise ValueError("flip_labels applies to the train split only")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"flip rate must be in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    draws = rng.random(len(dataset.pairs))
    flipped_pairs = []
    for pair, u in zip(dataset.pairs, draws):
        if u < rate:
            flipped_pairs.append(
                replace(
                    pair,
                    winner_id=pair.loser_id,
                    loser_id=pair.winner_id,
                    winner_len=pair.loser_len,
                    loser_len=pair.winner_len,
                    flipped=True,
                )
            )
        else:
            flipped_pairs.append(pair)
    return replace(dataset, pairs=tuple(flipped_pairs))
