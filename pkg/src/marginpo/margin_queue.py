"""Bounded FIFO history of reward pairs feeding the margin solver.

The solver wants a wide, batch-debiased margin vector; the queue supplies
recent history to pad the current batch up to the solver pool width. History
entries never receive gradients; only the current batch's slots are mapped
back to the loss.
"""

from __future__ import annotations

import csv
from collections import deque

import numpy as np

from marginpo.types import RewardPair

__all__ = ["MarginQueue"]


class MarginQueue:
    """FIFO buffer of (r_w, r_l) with seeded, call-counted sampling.

    Sampling derives a fresh generator from (rng_seed, call_counter) per
    assemble call, so a sample depends only on the seed, the call index, and
    the queue contents, not on how much randomness earlier calls consumed.
    """

    def __init__(self, capacity: int = 1024, rng_seed: int = 0):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.rng_seed = int(rng_seed)
        self._entries: deque[tuple[float, float]] = deque(maxlen=self.capacity)
        self._calls = 0

    def __len__(self) -> int:
        return len(self._entries)

    def push_batch(self, pairs) -> "MarginQueue":
        """Append pairs oldest-first, evicting from the front past capacity."""
        for pair in pairs:
            self._entries.append((float(pair.r_w), float(pair.r_l)))
        return self

    def snapshot(self) -> list[RewardPair]:
        """Copy of the entries, oldest first, for diagnostics."""
        return [RewardPair(r_w=rw, r_l=rl) for rw, rl in self._entries]

    def margins(self) -> np.ndarray:
        out = np.empty(len(self._entries))
        for i, (rw, rl) in enumerate(self._entries):
            out[i] = rw - rl
        return out

    def assemble_margins(self, current_batch, pool_size: int):
        """Current batch margins padded with history sampled from the queue.

        Returns (margins, batch_index_map). The batch occupies the leading
        slots, so batch_index_map is 0..B-1; the remaining min(pool_size - B,
        len(queue)) slots are drawn uniformly without replacement from the
        queue. Solver outputs at positions beyond the map are history-only
        and must not feed any loss.
        """
        batch = list(current_batch)
        if len(batch) == 0:
            raise ValueError("current_batch must be nonempty")
        if pool_size < len(batch):
            raise ValueError(
                f"pool_size {pool_size} smaller than batch size {len(batch)}"
            )
        batch_margins = np.array([p.r_w - p.r_l for p in batch], dtype=np.float64)
        n_extra = min(pool_size - len(batch), len(self._entries))
        if n_extra > 0:
            rng = np.random.default_rng((self.rng_seed, self._calls))
            picks = rng.choice(len(self._entries), size=n_extra, replace=False)
            history = self.margins()[picks]
            margins = np.concatenate([batch_margins, history])
        else:
            margins = batch_margins
        self._calls += 1
        return margins, np.arange(len(batch))

    def dump_csv(self, path) -> None:
        """Debug export of the raw entries, oldest first."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("r_w", "r_l", "margin"))
            for rw, rl in self._entries:
                writer.writerow((repr(rw), repr(rl), repr(rw - rl)))
