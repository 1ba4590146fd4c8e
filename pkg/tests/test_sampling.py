"""Seeded-randomness tests: golden sequences, marginal distributions, and
stream determinism."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdr_lab.sampling import (
    Rng,
    WeightedSampler,
    _splitmix64,
    build_sampler,
    sample,
    sample_permutation,
)

# 99.9% chi-square critical values (standard tables), keyed by df
CHI2_CRIT_999 = {2: 13.8155, 7: 24.3219, 31: 61.0983}


# ---------------------------------------------------------------------------
# seed mixing
# ---------------------------------------------------------------------------


def test_splitmix64_reference_values():
    # first output of the splitmix64 stream from state 0 is the published
    # test vector 0xE220A8397B1DCDAF
    assert _splitmix64(0) == 0xE220A8397B1DCDAF
    assert _splitmix64(1) == 10451216379200822465
    assert _splitmix64(2) == 10905525725756348110
    assert _splitmix64(1234567) == 6457827717110365317
    assert _splitmix64(0xDEADBEEF) == 5395234354446855067


def test_splitmix64_range_and_spread():
    outs = {_splitmix64(z) for z in range(1000)}
    assert len(outs) == 1000
    assert all(0 <= v < 2 ** 64 for v in outs)


# ---------------------------------------------------------------------------
# Rng
# ---------------------------------------------------------------------------


def test_rng_golden_uniforms():
    np.testing.assert_array_equal(
        Rng(0).uniform(4),
        [0.6369616873214543, 0.2697867137638703,
         0.04097352393619469, 0.016527635528529094])
    np.testing.assert_array_equal(
        Rng(42).uniform(4),
        [0.7739560485559633, 0.4388784397520523,
         0.8585979199113825, 0.6973680290593639])


def test_rng_golden_normals():
    np.testing.assert_array_equal(
        Rng(42).normal(3),
        [0.30471707975443135, -1.0399841062404955, 0.7504511958064572])


def test_rng_same_seed_same_stream():
    a, b = Rng(777), Rng(777)
    np.testing.assert_array_equal(a.uniform(100), b.uniform(100))
    np.testing.assert_array_equal(a.normal(50), b.normal(50))
    assert [a.integer(10) for _ in range(20)] == [b.integer(10) for _ in range(20)]


def test_rng_child_seeds_golden():
    assert [Rng(42).child(i).seed for i in range(4)] == [
        13679457532755275413, 13432527470776545160,
        3935774486848180498, 1265094156158224713]


def test_rng_child_streams_differ():
    parent = Rng(9)
    seen = {parent.child(i).seed for i in range(64)}
    assert len(seen) == 64
    # child streams do not advance or depend on the parent's draw position
    before = Rng(9).child(3).uniform(5)
    p2 = Rng(9)
    p2.uniform(100)
    np.testing.assert_array_equal(p2.child(3).uniform(5), before)


def test_rng_rejects_bad_seed():
    with pytest.raises(ValueError):
        Rng(-1)
    with pytest.raises(ValueError):
        Rng(1 << 64)


def test_rng_integer_bounds():
    r = Rng(5)
    draws = [r.integer(7) for _ in range(500)]
    assert min(draws) == 0 and max(draws) == 6


# ---------------------------------------------------------------------------
# WeightedSampler
# ---------------------------------------------------------------------------


def test_sampler_fields():
    s = build_sampler((1.0, 2.0, 3.0))
    np.testing.assert_array_equal(s.cumulative_weights, [1.0, 3.0, 6.0])
    assert s.total == 6.0
    assert len(s) == 3


def test_sampler_total_matches_frobenius():
    arr = np.random.default_rng(1).standard_normal((40, 7))
    row_sq = np.einsum("ij,ij->i", arr, arr)
    s = build_sampler(row_sq)
    frob_sq = float(np.linalg.norm(arr) ** 2)
    assert abs(s.total - frob_sq) <= 1e-12 * frob_sq


def test_sampler_rejects_invalid_weights():
    for bad in ([], [0.0, 0.0], [1.0, -0.5], [np.inf, 1.0], [np.nan]):
        with pytest.raises(ValueError, match="invalid weights"):
            build_sampler(bad)


def test_sampler_single_row():
    s = build_sampler([2.5])
    r = Rng(0)
    assert all(sample(s, r) == 0 for _ in range(50))


def test_sampler_zero_weight_never_drawn():
    s = build_sampler((0.0, 3.0, 1.0))
    draws = s.sample_many(Rng(12), 200_000)
    counts = np.bincount(draws, minlength=3)
    assert counts[0] == 0
    for i, p in ((1, 0.75), (2, 0.25)):
        bound = 3.0 * np.sqrt(p * (1 - p) / 200_000)
        assert abs(counts[i] / 200_000 - p) <= bound


def test_sampler_golden_sequence():
    s = build_sampler((1.0, 2.0, 3.0))
    r = Rng(42)
    assert [sample(s, r) for _ in range(12)] == [2, 1, 2, 2, 0, 2, 2, 2, 0, 1, 1, 2]


def test_sampler_frequencies_one_two_three():
    s = build_sampler((1.0, 2.0, 3.0))
    draws = s.sample_many(Rng(314), 10**6)
    counts = np.bincount(draws, minlength=3)
    for i, p in enumerate((1 / 6, 1 / 3, 1 / 2)):
        bound = 3.0 * np.sqrt(p * (1 - p) / 10**6)
        assert abs(counts[i] / 10**6 - p) <= bound


def test_sample_many_matches_scalar_stream():
    s = build_sampler((0.5, 1.5, 2.0, 0.0, 1.0))
    batch = s.sample_many(Rng(88), 64)
    r = Rng(88)
    ones = [sample(s, r) for _ in range(64)]
    np.testing.assert_array_equal(batch, ones)


@pytest.mark.parametrize("length,seed,df", [(3, 1001, 2), (8, 1002, 7), (32, 1003, 31)])
def test_sampler_chi_square(length, seed, df):
    # marginals over 1e6 draws stay under the 99.9% critical value
    w = Rng(seed).uniform(length) + 0.05
    s = build_sampler(w)
    counts = np.bincount(s.sample_many(Rng(seed + 7), 10**6), minlength=length)
    expected = (w / w.sum()) * 10**6
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < CHI2_CRIT_999[df]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=12),
       st.integers(min_value=0, max_value=2**32))
def test_sampler_draws_have_positive_weight(weights, seed):
    w = np.array(weights)
    if not np.any(w > 0.0):
        return
    s = WeightedSampler(w)
    idx = s.sample_many(Rng(seed), 32)
    assert np.all(w[idx] > 0.0)


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------


def test_permutation_n1():
    np.testing.assert_array_equal(sample_permutation(1, Rng(0)), [0])


def test_permutation_rejects_n0():
    with pytest.raises(ValueError, match="permutation length"):
        sample_permutation(0, Rng(0))


def test_permutation_is_bijection():
    r = Rng(17)
    for n in (2, 5, 30):
        p = sample_permutation(n, r)
        np.testing.assert_array_equal(np.sort(p), np.arange(n))


def test_permutation_multinomial_counts():
    # n=3 over 6e4 draws: each of the 6 orders lands within 3 sd of 1e4
    r = Rng(5)
    counts = {}
    for _ in range(60_000):
        key = tuple(int(v) for v in sample_permutation(3, r))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    bound = 3.0 * np.sqrt(1e4 * (5.0 / 6.0))
    for c in counts.values():
        assert abs(c - 10_000) <= bound
