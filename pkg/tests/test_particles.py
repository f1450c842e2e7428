import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from reshuffle.particles import (
    Genealogy,
    ParticleCollapse,
    ParticleSystem,
    ancestors_to_multiplicity,
    ess,
    extract_trajectories,
    extract_trajectory,
    log_normalize,
    make_rng,
    multiplicity_to_ancestors,
)

finite = st.floats(-700, 700, allow_nan=False)


class TestLogNormalize:
    def test_symmetric(self):
        w, lt = log_normalize([0.0, 0.0])
        np.testing.assert_allclose(w, [0.5, 0.5])
        assert lt == pytest.approx(math.log(2))

    def test_shift_invariant(self):
        w, lt = log_normalize([-1000.0] * 3)
        np.testing.assert_allclose(w, [1 / 3] * 3)
        assert lt == pytest.approx(-1000 + math.log(3))

    def test_exact_ratio(self):
        w, lt = log_normalize([math.log(3), 0.0])
        np.testing.assert_allclose(w, [0.75, 0.25])
        assert lt == pytest.approx(math.log(4))

    def test_all_neg_inf_collapses(self):
        with pytest.raises(ParticleCollapse, match="zero weight"):
            log_normalize([-np.inf, -np.inf])

    def test_nan_rejected(self):
        with pytest.raises(ParticleCollapse):
            log_normalize([0.0, np.nan])

    @given(arrays(float, st.integers(1, 50), elements=finite))
    def test_sums_to_one(self, log_w):
        w, _ = log_normalize(log_w)
        assert abs(w.sum() - 1) <= 1e-12
        assert np.all(w >= 0)

    @given(st.integers(1, 30), st.integers(0, 29), finite)
    def test_single_finite_entry(self, S, k, v):
        k = k % S
        log_w = np.full(S, -np.inf)
        log_w[k] = v
        w, lt = log_normalize(log_w)
        assert w[k] == 1.0 and lt == pytest.approx(v)


class TestEss:
    def test_uniform(self):
        assert ess(np.full(10, 0.1)) == pytest.approx(10.0)

    def test_degenerate(self):
        assert ess([1.0, 0.0, 0.0]) == 1.0

    def test_direct_value(self):
        assert ess([0.5, 0.25, 0.25]) == pytest.approx(1 / (0.25 + 0.0625 + 0.0625))
        assert ess([0.5, 0.25, 0.25]) == pytest.approx(2.6667, abs=1e-4)

    @given(arrays(float, st.integers(1, 40), elements=st.floats(0.01, 1.0)), st.randoms())
    def test_bounds_and_permutation(self, raw, rnd):
        w = raw / raw.sum()
        e = ess(w)
        assert 1 - 1e-9 <= e <= w.size + 1e-9
        perm = list(range(w.size))
        rnd.shuffle(perm)
        assert ess(w[perm]) == pytest.approx(e, rel=1e-12)


class TestMultiplicity:
    @pytest.mark.parametrize("counts, expected", [
        ([1, 1, 1], [0, 1, 2]),
        ([3, 0, 0], [0, 0, 0]),
        ([2, 0, 1], [0, 0, 2]),
    ])
    def test_examples(self, counts, expected):
        assert multiplicity_to_ancestors(counts).tolist() == expected

    def test_sum_mismatch(self):
        with pytest.raises(ValueError, match="sum"):
            multiplicity_to_ancestors([2, 2, 0])

    def test_negative(self):
        with pytest.raises(ValueError):
            multiplicity_to_ancestors([2, -1, 2])

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=20))
    def test_multiset(self, raw):
        # rescale into a valid multiplicity vector summing to its length
        S = len(raw)
        counts = np.zeros(S, dtype=int)
        for i in range(S):
            counts[raw[i] % S] += 1
        a = multiplicity_to_ancestors(counts)
        assert a.size == S
        assert np.all(np.diff(a) >= 0)
        np.testing.assert_array_equal(ancestors_to_multiplicity(a, S), counts)


class TestTrajectories:
    def test_single_step(self):
        g = Genealogy(np.array([[0, 1, 2]]), np.array([False]))
        states = np.array([[4.0, 5.0, 6.0]])
        assert extract_trajectory(g, states, 2).tolist() == [6.0]

    def test_hand_built(self):
        g = Genealogy(np.array([[0, 1], [0, 0]]), np.array([False, True]))
        states = np.array([[10.0, 20.0], [30.0, 40.0]])
        assert extract_trajectory(g, states, 1).tolist() == [10.0, 40.0]

    @given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_identity_genealogy_is_column(self, N, S, seed):
        rng = np.random.default_rng(seed)
        states = rng.normal(size=(N, S))
        g = Genealogy(np.tile(np.arange(S), (N, 1)), np.zeros(N, bool))
        for s in range(S):
            np.testing.assert_array_equal(extract_trajectory(g, states, s), states[:, s])
        np.testing.assert_array_equal(extract_trajectories(g, states), states)

    def test_all_paths_match_single(self, rng):
        N, S = 6, 5
        anc = np.vstack([np.arange(S)] + [np.sort(rng.integers(0, S, S)) for _ in range(N - 1)])
        g = Genealogy(anc, np.ones(N, bool))
        states = rng.normal(size=(N, S))
        all_paths = extract_trajectories(g, states)
        for s in range(S):
            np.testing.assert_array_equal(all_paths[:, s], extract_trajectory(g, states, s))

    def test_distinct_counts_monotone(self, rng):
        N, S = 20, 8
        anc = np.vstack([np.arange(S)] + [np.sort(rng.integers(0, S, S)) for _ in range(N - 1)])
        d = Genealogy(anc, np.ones(N, bool)).distinct_ancestor_counts()
        assert d[0] == S
        assert np.all(np.diff(d) <= 0)


def test_particle_system_length_check():
    with pytest.raises(ValueError):
        ParticleSystem(np.zeros(3), np.zeros(2), np.ones(3) / 3)


def test_make_rng_reproducible():
    a = make_rng(7, 3).normal(size=5)
    b = make_rng(7, 3).normal(size=5)
    c = make_rng(7, 4).normal(size=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
