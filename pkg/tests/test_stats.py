import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovmix import aggregate, dataset_stats, sufficient_stats
from markovmix.errors import InconsistentPath, WeightRowSum
from markovmix.simulate import SamplePath


def make_path(initial, events, censored, horizon, regime=None, pid=0):
    return SamplePath(pid, initial, regime, tuple(events), censored, horizon)


ONE_JUMP = make_path(0, [(0, 2.0)], (1, 3.0), 5.0, regime=0)


@st.composite
def paths(draw, p=3, M=2):
    n = draw(st.integers(0, 8))
    state = draw(st.integers(0, p - 1))
    events = []
    for _ in range(n):
        events.append((state, draw(st.floats(0.01, 5.0))))
        state = (state + draw(st.integers(1, p - 1))) % p
    cens = draw(st.floats(0.01, 5.0))
    horizon = math.fsum([d for _, d in events] + [cens])
    regime = draw(st.integers(0, M - 1))
    return make_path(events[0][0] if events else state, events, (state, cens), horizon, regime)


class TestSufficientStats:
    def test_one_jump(self):
        s = sufficient_stats(ONE_JUMP, 2)
        np.testing.assert_array_equal(s.B, [1, 0])
        np.testing.assert_array_equal(s.Njump, [[0, 1], [0, 0]])
        np.testing.assert_array_equal(s.Nexit, [1, 0])
        np.testing.assert_array_equal(s.Z, [2.0, 3.0])

    def test_no_jump(self):
        s = sufficient_stats(make_path(0, [], (0, 5.0), 5.0), 2)
        np.testing.assert_array_equal(s.B, [1, 0])
        assert s.Njump.sum() == 0
        np.testing.assert_array_equal(s.Z, [5.0, 0.0])

    def test_repeated_state_rejected(self):
        with pytest.raises(InconsistentPath):
            sufficient_stats(make_path(0, [(0, 1.0)], (0, 4.0), 5.0), 2)

    def test_nonpositive_duration_rejected(self):
        with pytest.raises(InconsistentPath):
            sufficient_stats(make_path(0, [(0, 0.0)], (1, 5.0), 5.0), 2)

    @given(paths())
    def test_invariants(self, path):
        s = sufficient_stats(path, 3)
        assert s.B.sum() == 1
        np.testing.assert_array_equal(s.Nexit, s.Njump.sum(axis=1))
        assert np.all(np.diag(s.Njump) == 0)
        assert abs(s.Z.sum() - path.horizon) <= 1e-9
        assert s.Njump.sum() == len(path.events)

    def test_dataset_time_conservation(self, large_stats):
        total = math.fsum(large_stats.Z.ravel())
        assert abs(total - 20_000 * 100.0) <= 1e-6 * 20_000 * 100.0


class TestAggregate:
    def test_hard_labels_pick_paths(self):
        a = ONE_JUMP
        b = make_path(1, [(1, 1.0), (0, 1.5)], (1, 2.5), 5.0, regime=1, pid=1)
        ds = dataset_stats([a, b], 2)
        ws = aggregate(ds, M=2)
        sa = sufficient_stats(a, 2)
        np.testing.assert_array_equal(ws.Njump[0], sa.Njump)
        np.testing.assert_array_equal(ws.Z[0], sa.Z)
        np.testing.assert_array_equal(ws.B[0], sa.B)
        assert ws.source == "labels"

    def test_uniform_weights(self, large_stats):
        sub = large_stats.subset(np.arange(500))
        ws = aggregate(sub, np.full((500, 2), 0.5))
        np.testing.assert_allclose(ws.Z[0], 0.5 * sub.Z.sum(axis=0), rtol=1e-12)
        np.testing.assert_allclose(ws.Njump[1], 0.5 * sub.Njump.sum(axis=0), rtol=1e-12)
        np.testing.assert_array_equal(ws.Z[0], ws.Z[1])

    def test_weight_rows_checked(self, large_stats):
        sub = large_stats.subset(np.arange(3))
        w = np.full((3, 2), 0.5)
        w[2] = [0.5, 0.5 + 1e-7]
        with pytest.raises(WeightRowSum) as err:
            aggregate(sub, w)
        assert err.value.row == 3

    def test_labels_sum_to_path_count(self, large_stats):
        ws = aggregate(large_stats, M=2)
        assert ws.B.sum() == large_stats.n_paths

    def test_switching_share_for_state_three(self, large_stats):
        ws = aggregate(large_stats, M=2)
        n3 = ws.B_total[2]
        share = ws.B[0, 2] / n3
        assert abs(share - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / n3)

    def test_hard_label_partition_is_exact(self, large_stats):
        ws = aggregate(large_stats, M=2)
        np.testing.assert_array_equal(ws.Njump.sum(axis=0), ws.Njump_total)
        np.testing.assert_array_equal(ws.B.sum(axis=0), ws.B_total)
        np.testing.assert_array_equal(ws.Nexit.sum(axis=0), ws.Nexit_total)

    def test_linearity(self, large_stats):
        rng = np.random.default_rng(3)
        w = rng.dirichlet([1.0, 1.0], size=large_stats.n_paths)
        whole = aggregate(large_stats, w)
        cut = 7_321
        a = aggregate(large_stats.subset(np.arange(cut)), w[:cut])
        b = aggregate(large_stats.subset(np.arange(cut, large_stats.n_paths)), w[cut:])
        both = a + b
        for name in ("Njump", "Nexit", "Z", "B"):
            np.testing.assert_allclose(getattr(both, name), getattr(whole, name), rtol=1e-9)
        assert both.n_paths == whole.n_paths

    def test_order_independence(self, large_stats):
        rng = np.random.default_rng(4)
        w = rng.dirichlet([1.0, 1.0], size=large_stats.n_paths)
        perm = rng.permutation(large_stats.n_paths)
        a = aggregate(large_stats, w)
        b = aggregate(large_stats.subset(perm), w[perm])
        np.testing.assert_allclose(a.Z, b.Z, rtol=1e-12)
        # exact time total survives summation
        assert abs(math.fsum(a.Z.ravel()) - 2e6) <= 1e-6

    @settings(max_examples=30)
    @given(st.lists(paths(), min_size=1, max_size=10))
    def test_weighted_totals_match_loop(self, items):
        ds = dataset_stats(items, 3)
        w = np.linspace(0.1, 0.9, len(items))
        w = np.stack([w, 1 - w], axis=1)
        ws = aggregate(ds, w)
        expected = sum(w[k, 1] * sufficient_stats(x, 3).Z for k, x in enumerate(items))
        np.testing.assert_allclose(ws.Z[1], expected, rtol=1e-12, atol=1e-12)
