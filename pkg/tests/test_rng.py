"""Tests for the deterministic random streams."""

import numpy as np
import pytest

from problabel.rng import Prng, derive_seed, fnv1a64, mix64


class TestPrng:
    def test_same_seed_same_stream(self):
        a = Prng(42)
        b = Prng(42)
        assert [a.next_u64() for _ in range(50)] == [b.next_u64() for _ in range(50)]

    def test_different_seeds_diverge(self):
        a = Prng(1)
        b = Prng(2)
        assert [a.next_u64() for _ in range(5)] != [b.next_u64() for _ in range(5)]

    def test_zero_seed_works(self):
        values = [Prng(0).uniform() for _ in range(3)]
        assert all(0.0 <= v < 1.0 for v in values)

    def test_uniform_range_and_mean(self):
        prng = Prng(7)
        draws = prng.uniforms(20000)
        assert draws.min() >= 0.0 and draws.max() < 1.0
        assert abs(draws.mean() - 0.5) < 0.01

    def test_normal_moments(self):
        prng = Prng(11)
        draws = prng.normals(40000)
        assert abs(draws.mean()) < 0.02
        assert abs(draws.std() - 1.0) < 0.02

    def test_shuffle_is_permutation(self):
        prng = Prng(5)
        items = list(range(100))
        prng.shuffle(items)
        assert sorted(items) == list(range(100))
        assert items != list(range(100))

    def test_randint_bounds(self):
        prng = Prng(9)
        draws = [prng.randint(7) for _ in range(500)]
        assert set(draws) == set(range(7))

    def test_randint_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            Prng(1).randint(0)


class TestDerivation:
    def test_derive_is_pure(self):
        assert derive_seed(3, "a", 1) == derive_seed(3, "a", 1)

    def test_derive_depends_on_all_tags(self):
        base = derive_seed(3, "a", 1, 2)
        assert base != derive_seed(4, "a", 1, 2)
        assert base != derive_seed(3, "b", 1, 2)
        assert base != derive_seed(3, "a", 2, 2)
        assert base != derive_seed(3, "a", 1, 3)

    def test_order_matters(self):
        assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)

    def test_fnv_distinct(self):
        assert fnv1a64("train") != fnv1a64("test")

    def test_mix64_is_64_bit(self):
        assert 0 <= mix64(2**64 - 1) < 2**64
