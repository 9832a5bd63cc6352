"""Deterministic random stream behavior."""

import numpy as np
import pytest

from momentcloud.rng import RandomStream, derive_seed


class TestRandomStream:
    def test_replay_bitwise(self):
        a = RandomStream(42).uniform(1000)
        b = RandomStream(42).uniform(1000)
        assert np.array_equal(a, b)

    def test_chunking_matches_bulk(self):
        bulk = RandomStream(7).uniform(100)
        stream = RandomStream(7)
        parts = np.concatenate([stream.uniform(30), stream.uniform(70)])
        assert np.array_equal(bulk, parts)

    def test_uniform_range_and_mean(self):
        u = RandomStream(1).uniform(200000, -2.0, 3.0)
        assert u.min() >= -2.0 and u.max() < 3.0
        assert abs(u.mean() - 0.5) < 0.02

    def test_normal_moments(self):
        g = RandomStream(2).normal(200000, 1.5)
        assert abs(g.mean()) < 0.02
        assert abs(g.std() - 1.5) / 1.5 < 0.01

    def test_integers_bounds(self):
        v = RandomStream(3).integers(10000, 7)
        assert v.min() >= 0 and v.max() <= 6
        counts = np.bincount(v, minlength=7)
        assert counts.min() > 10000 / 7 * 0.8

    def test_permutation_is_permutation(self):
        for n in (1, 2, 17, 100):
            perm = RandomStream(n).permutation(n)
            assert sorted(perm.tolist()) == list(range(n))

    def test_permutations_vary_with_seed(self):
        assert not np.array_equal(RandomStream(4).permutation(50),
                                  RandomStream(5).permutation(50))

    def test_choice_without_replacement(self):
        picked = RandomStream(6).choice(20, 8)
        assert len(set(picked.tolist())) == 8
        assert all(0 <= i < 20 for i in picked)

    def test_choice_bounds(self):
        with pytest.raises(ValueError):
            RandomStream(7).choice(5, 6)

    def test_different_seeds_differ(self):
        assert not np.array_equal(RandomStream(0).uniform(100),
                                  RandomStream(1).uniform(100))


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)

    def test_tag_order_matters(self):
        assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)

    def test_children_are_independent(self):
        a = RandomStream(derive_seed(9, 0)).uniform(100)
        b = RandomStream(derive_seed(9, 1)).uniform(100)
        assert not np.array_equal(a, b)

    def test_derive_method_matches_function(self):
        assert np.array_equal(RandomStream(11).derive(3).uniform(10),
                              RandomStream(derive_seed(11, 3)).uniform(10))
