"""Sum tree: totals, prefix lookups against a linear-scan oracle."""

import numpy as np
import pytest

from plastic_replay.sumtree import SumTree


class TestUpdate:
    def test_single_leaf_total(self):
        tree = SumTree(8)
        tree.update(3, 5.0)
        assert tree.total() == 5.0

    def test_overwrite_last_value_wins(self):
        tree = SumTree(8)
        tree.update(3, 5.0)
        tree.update(3, 2.0)
        assert tree.total() == 2.0
        assert tree.leaf(3) == 2.0

    def test_negative_value_rejected(self):
        tree = SumTree(8)
        with pytest.raises(ValueError):
            tree.update(0, -1.0)

    def test_leaf_out_of_range(self):
        tree = SumTree(8)
        with pytest.raises(IndexError):
            tree.update(8, 1.0)

    def test_rounds_leaf_count_to_power_of_two(self):
        assert SumTree(5).leaf_count == 8
        assert SumTree(8).leaf_count == 8
        assert SumTree(1).leaf_count == 1

    def test_shadow_array_oracle(self):
        rng = np.random.default_rng(0)
        n = 1024
        tree = SumTree(n)
        shadow = np.zeros(n)
        for _ in range(100_000):
            leaf = int(rng.integers(n))
            value = float(rng.random() * 10)
            tree.update(leaf, value)
            shadow[leaf] = value
        assert tree.total() == pytest.approx(shadow.sum(), rel=1e-9)
        np.testing.assert_array_equal(tree.leaves()[:n], shadow)

    def test_internal_nodes_consistent_after_rebuild(self):
        rng = np.random.default_rng(1)
        tree = SumTree(64)
        for leaf in range(64):
            tree.update(leaf, float(rng.random()))
        tree.rebuild()
        nodes = tree.nodes
        for idx in range(tree.leaf_count - 1):
            assert nodes[idx] == pytest.approx(
                nodes[2 * idx + 1] + nodes[2 * idx + 2], rel=1e-9
            )


class TestFindPrefix:
    def test_first_leaf_range(self):
        tree = SumTree(4)
        for i, v in enumerate([1.0, 3.0, 2.0, 4.0]):
            tree.update(i, v)
        assert tree.find_prefix(0.5) == 0

    def test_cumulative_lookup(self):
        tree = SumTree(4)
        for i, v in enumerate([1.0, 3.0, 2.0, 4.0]):
            tree.update(i, v)
        # cumulative sums are [1, 4, 6, 10]
        assert tree.find_prefix(3.5) == 1
        assert tree.find_prefix(4.0) == 2
        assert tree.find_prefix(9.999) == 3

    def test_boundary_descends_right(self):
        tree = SumTree(4)
        for i, v in enumerate([1.0, 3.0, 2.0, 4.0]):
            tree.update(i, v)
        assert tree.find_prefix(1.0) == 1

    def test_zero_priority_leaf_never_returned(self):
        tree = SumTree(4)
        tree.update(1, 5.0)
        for u in np.linspace(0.0, 4.999, 23):
            assert tree.find_prefix(float(u)) == 1

    def test_domain_errors(self):
        tree = SumTree(4)
        tree.update(0, 2.0)
        with pytest.raises(ValueError):
            tree.find_prefix(-0.1)
        with pytest.raises(ValueError):
            tree.find_prefix(2.0)
        with pytest.raises(ValueError):
            SumTree(4).find_prefix(0.0)

    def test_linear_scan_oracle(self):
        # Integer-valued leaves make every cumulative sum exact, so the
        # tree walk and a searchsorted scan must agree on every query.
        rng = np.random.default_rng(2)
        n = 128
        tree = SumTree(n)
        values = rng.integers(0, 20, size=n).astype(np.float64)
        for leaf, v in enumerate(values):
            tree.update(leaf, float(v))
        cumulative = np.cumsum(values)
        total = cumulative[-1]
        for u in rng.random(10_000) * total:
            expected = int(np.searchsorted(cumulative, u, side="right"))
            assert tree.find_prefix(float(u)) == expected
