import csv

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from marginpo.margin_queue import MarginQueue
from marginpo.types import RewardPair


def _pairs(values):
    return [RewardPair(r_w=float(v), r_l=0.0) for v in values]


class TestFifo:
    def test_eviction_order(self):
        """Past capacity the oldest entries leave first; survivors keep their
        insertion order."""
        q = MarginQueue(capacity=4, rng_seed=0)
        q.push_batch(_pairs([0, 1, 2, 3, 4, 5]))
        np.testing.assert_array_equal(q.margins(), [2, 3, 4, 5])

    def test_len_caps_at_capacity(self):
        q = MarginQueue(capacity=8, rng_seed=0)
        q.push_batch(_pairs(range(20)))
        assert len(q) == 8

    def test_push_returns_self(self):
        q = MarginQueue(capacity=4, rng_seed=0)
        assert q.push_batch(_pairs([1.0])) is q

    def test_snapshot_preserves_pairs(self):
        q = MarginQueue(capacity=4, rng_seed=0)
        q.push_batch([RewardPair(0.5, 0.2), RewardPair(-1.0, 1.0)])
        snap = q.snapshot()
        assert snap == [RewardPair(0.5, 0.2), RewardPair(-1.0, 1.0)]

    def test_rejects_bad_capacity(self):
        with pytest.raises(ValueError):
            MarginQueue(capacity=0)

    @settings(deadline=None)
    @given(st.lists(st.integers(0, 1000), max_size=200), st.integers(1, 50))
    def test_length_never_exceeds_capacity(self, values, capacity):
        """Length is min(pushed, capacity) and the content is the most recent
        suffix, for any push sequence."""
        q = MarginQueue(capacity=capacity, rng_seed=0)
        q.push_batch(_pairs(values))
        assert len(q) == min(len(values), capacity)
        np.testing.assert_array_equal(q.margins(), values[-capacity:] if values else [])


class TestAssemble:
    def test_batch_leads_and_index_map(self):
        """The current batch occupies the leading slots verbatim and the
        index map points exactly at them."""
        q = MarginQueue(capacity=16, rng_seed=0)
        q.push_batch(_pairs([10, 11, 12, 13]))
        batch = _pairs([1.5, -2.5, 0.25])
        margins, index_map = q.assemble_margins(batch, pool_size=6)
        np.testing.assert_array_equal(index_map, [0, 1, 2])
        np.testing.assert_array_equal(margins[:3], [1.5, -2.5, 0.25])
        assert margins.size == 6

    def test_padding_without_replacement(self):
        """When the pool needs exactly the whole queue, the padded slots are a
        permutation of the queue contents (no duplicates)."""
        q = MarginQueue(capacity=8, rng_seed=0)
        q.push_batch(_pairs([10, 20, 30, 40, 50]))
        margins, _ = q.assemble_margins(_pairs([1]), pool_size=6)
        np.testing.assert_array_equal(np.sort(margins[1:]), [10, 20, 30, 40, 50])

    def test_short_queue_pads_what_exists(self):
        """pool_size larger than batch + queue yields batch + full queue."""
        q = MarginQueue(capacity=8, rng_seed=0)
        q.push_batch(_pairs([7, 8]))
        margins, index_map = q.assemble_margins(_pairs([1, 2]), pool_size=100)
        assert margins.size == 4
        np.testing.assert_array_equal(index_map, [0, 1])

    def test_empty_queue_returns_batch_only(self):
        q = MarginQueue(capacity=8, rng_seed=0)
        margins, index_map = q.assemble_margins(_pairs([3, 4]), pool_size=10)
        np.testing.assert_array_equal(margins, [3, 4])
        np.testing.assert_array_equal(index_map, [0, 1])

    def test_rejects_empty_batch(self):
        q = MarginQueue(capacity=8, rng_seed=0)
        with pytest.raises(ValueError):
            q.assemble_margins([], pool_size=4)

    def test_rejects_pool_smaller_than_batch(self):
        q = MarginQueue(capacity=8, rng_seed=0)
        with pytest.raises(ValueError):
            q.assemble_margins(_pairs([1, 2, 3]), pool_size=2)


class TestSamplingDeterminism:
    def test_same_seed_same_history(self):
        """Two queues with equal seeds and push history assemble identical
        margin vectors call for call."""
        a = MarginQueue(capacity=64, rng_seed=7)
        b = MarginQueue(capacity=64, rng_seed=7)
        for q in (a, b):
            q.push_batch(_pairs(np.arange(40)))
        batch = _pairs([100.0, 200.0])
        for _ in range(5):
            ma, _ = a.assemble_margins(batch, pool_size=16)
            mb, _ = b.assemble_margins(batch, pool_size=16)
            np.testing.assert_array_equal(ma, mb)

    def test_call_counter_advances_the_stream(self):
        """Consecutive calls draw different samples even with identical
        arguments, but the sequence is reproducible."""
        q = MarginQueue(capacity=64, rng_seed=7)
        q.push_batch(_pairs(np.arange(64)))
        batch = _pairs([500.0])
        first, _ = q.assemble_margins(batch, pool_size=17)
        second, _ = q.assemble_margins(batch, pool_size=17)
        assert not np.array_equal(first, second)

    def test_different_seeds_differ(self):
        a = MarginQueue(capacity=64, rng_seed=1)
        b = MarginQueue(capacity=64, rng_seed=2)
        for q in (a, b):
            q.push_batch(_pairs(np.arange(64)))
        ma, _ = a.assemble_margins(_pairs([0.5]), pool_size=33)
        mb, _ = b.assemble_margins(_pairs([0.5]), pool_size=33)
        assert not np.array_equal(ma, mb)


class TestSamplingUniformity:
    def test_chi_square_over_history_draws(self):
        """10^5 history draws from a full 1024-entry queue: occupancy counts
        binned into 32 groups pass a chi-square uniformity test at p > 0.001.
        Within-call no-replacement correlation only lowers the statistic, so
        the test is conservative."""
        q = MarginQueue(capacity=1024, rng_seed=42)
        q.push_batch(_pairs(np.arange(1024)))
        counts = np.zeros(1024)
        batch = _pairs([-1.0])
        for _ in range(1000):
            margins, _ = q.assemble_margins(batch, pool_size=101)
            drawn = margins[1:].astype(np.int64)
            counts[drawn] += 1
        assert counts.sum() == 100_000
        binned = counts.reshape(32, 32).sum(axis=1)
        result = scipy.stats.chisquare(binned)
        assert result.pvalue > 0.001


class TestDumpCsv:
    def test_round_trip(self, tmp_path):
        q = MarginQueue(capacity=8, rng_seed=0)
        q.push_batch([RewardPair(0.125, -0.5), RewardPair(1.0, 0.3)])
        path = tmp_path / "queue.csv"
        q.dump_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["r_w", "r_l", "margin"]
        assert float(rows[1][0]) == 0.125
        assert float(rows[2][2]) == 1.0 - 0.3
