import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedluar.client_trainer import LocalUpdate
from fedluar.errors import ConfigurationError, FedLuarError, ProtocolError
from fedluar.luar_core import (SCHEMES, RecyclerState, compose_dropping_update,
                               compose_global_update, compute_scores, measure_noise,
                               refresh_scores, sample_recycle_set, selection_probabilities,
                               weighted_sample_without_replacement)
from fedluar.nn_core import LayerKeyedVector

positive_scores = st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=12)


def lkv(*bufs):
    return LayerKeyedVector({i: np.asarray(b, dtype=float) for i, b in enumerate(bufs)})


def upd(cid, mapping):
    return LocalUpdate(cid, LayerKeyedVector({l: np.asarray(b, dtype=float)
                                              for l, b in mapping.items()}), 1)


# -- scores -----------------------------------------------------------------

def test_score_hand_example():
    s = compute_scores(lkv([3.0, 4.0]), lkv([0.6, 0.8]))
    assert s[0] == pytest.approx(5.0, rel=1e-15)


def test_zero_update_scores_zero():
    assert compute_scores(lkv([0.0, 0.0], [1.0]), lkv([1.0, 2.0], [3.0]))[0] == 0.0


def test_zero_weights_use_eps_guard():
    s = compute_scores(lkv([1.0]), lkv([0.0]))
    assert np.isfinite(s[0]) and s[0] == pytest.approx(1e12)


def test_scaling_weights_halves_score():
    rng = np.random.default_rng(0)
    d, x = lkv(rng.normal(size=5), rng.normal(size=3)), lkv(rng.normal(size=5), rng.normal(size=3))
    s1 = compute_scores(d, x)
    x2 = x.copy()
    x2[1] = 2 * x2[1]
    s2 = compute_scores(d, x2)
    assert s2[0] == s1[0]
    assert s2[1] == pytest.approx(s1[1] / 2, rel=1e-14)


def test_score_structure_mismatch():
    with pytest.raises(FedLuarError):
        compute_scores(lkv([1.0]), lkv([1.0, 2.0]))


# -- probabilities ----------------------------------------------------------

def test_probabilities_example():
    p = selection_probabilities([1.0, 2.0, 4.0])
    np.testing.assert_allclose(p, [4 / 7, 2 / 7, 1 / 7], rtol=0, atol=1e-12)


def test_probabilities_tiny_score():
    # weights 1e6, 1, 1 -> 1e6 / (1e6 + 2)
    p = selection_probabilities([1e-6, 1.0, 1.0])
    assert p[0] == pytest.approx(1e6 / (1e6 + 2), rel=1e-14)
    assert p[0] == pytest.approx(0.999998, abs=1e-6)


def test_probabilities_equal_scores():
    np.testing.assert_allclose(selection_probabilities([3.0] * 5), [0.2] * 5, atol=1e-15)


def test_zero_score_gets_guarded_weight():
    p = selection_probabilities([0.0, 1.0])
    assert np.all(p > 0) and p[0] > 0.999


def test_probabilities_errors():
    with pytest.raises(FedLuarError):
        selection_probabilities([])
    with pytest.raises(FedLuarError):
        selection_probabilities([1.0, -1.0])


@settings(max_examples=200, deadline=None)
@given(positive_scores)
def test_probability_simplex(scores):
    p = selection_probabilities(scores)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p > 0)


@settings(max_examples=200, deadline=None)
@given(positive_scores)
def test_probabilities_monotone(scores):
    s = np.array(scores)
    p = selection_probabilities(s)
    for a, b in itertools.permutations(range(len(s)), 2):
        if s[a] < s[b]:
            assert p[a] > p[b]


@settings(max_examples=200, deadline=None)
@given(positive_scores, st.floats(1e-3, 1e3))
def test_probabilities_scale_invariant(scores, c):
    p1 = selection_probabilities(scores)
    p2 = selection_probabilities(np.array(scores) * c)
    np.testing.assert_allclose(p1, p2, rtol=0, atol=1e-12)


# -- sampling ---------------------------------------------------------------

@pytest.mark.parametrize("scheme", [s for s in SCHEMES if s != "none"])
def test_delta_bounds(scheme):
    p = selection_probabilities([1.0, 2.0, 4.0, 8.0])
    assert sample_recycle_set(p, 0, scheme, 0) == frozenset()
    assert sample_recycle_set(p, 4, scheme, 0) == frozenset(range(4))
    got = sample_recycle_set(p, 2, scheme, 0)
    assert len(got) == 2 and got <= set(range(4))
    with pytest.raises(ConfigurationError):
        sample_recycle_set(p, 5, scheme, 0)


def test_none_scheme_never_recycles():
    assert sample_recycle_set([0.5, 0.5], 1, "none", 0) == frozenset()


def test_deterministic_schemes():
    p = selection_probabilities([4.0, 1.0, 1.0, 2.0, 8.0])
    assert sample_recycle_set(p, 2, "top_input_side", 0) == {0, 1}
    assert sample_recycle_set(p, 2, "bottom_output_side", 0) == {3, 4}
    # smallest scores are layers 1 and 2 (tie); next is 3
    assert sample_recycle_set(p, 2, "deterministic_luar", 0) == {1, 2}
    assert sample_recycle_set(p, 1, "deterministic_luar", 0) == {1}
    assert sample_recycle_set(p, 3, "deterministic_luar", 0) == {1, 2, 3}


def test_unknown_scheme():
    with pytest.raises(ConfigurationError):
        sample_recycle_set([1.0], 1, "bogus", 0)


def test_single_draw_frequencies_match_p():
    p = selection_probabilities([1.0, 2.0, 4.0])
    rng = np.random.default_rng(12345)
    n = 100_000
    counts = np.zeros(3)
    for _ in range(n):
        (i,) = sample_recycle_set(p, 1, "luar", rng)
        counts[i] += 1
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_pair_frequencies_match_sequential_enumeration():
    # oracle: P({i, j}) = p_i p_j / (1 - p_i) + p_j p_i / (1 - p_j)
    p = np.array([0.5, 0.3, 0.15, 0.05])
    exact = {}
    for i, j in itertools.combinations(range(4), 2):
        exact[frozenset((i, j))] = p[i] * p[j] / (1 - p[i]) + p[j] * p[i] / (1 - p[j])
    assert sum(exact.values()) == pytest.approx(1.0)
    rng = np.random.default_rng(7)
    n = 60_000
    counts = dict.fromkeys(exact, 0)
    for _ in range(n):
        counts[frozenset(weighted_sample_without_replacement(p, 2, rng))] += 1
    for key, q in exact.items():
        assert abs(counts[key] - n * q) <= 4 * np.sqrt(n * q * (1 - q))


def test_uniform_random_ignores_weights():
    p = np.array([0.97, 0.01, 0.01, 0.01])
    rng = np.random.default_rng(0)
    counts = np.zeros(4)
    for _ in range(20_000):
        for i in sample_recycle_set(p, 1, "uniform_random", rng):
            counts[i] += 1
    assert np.all(np.abs(counts - 5000) <= 4 * np.sqrt(20_000 * 0.25 * 0.75))


def test_sampling_is_seeded():
    p = selection_probabilities([1.0, 1.5, 2.0, 3.0, 5.0, 8.0])
    draws = [sample_recycle_set(p, 2, "luar", 99) for _ in range(3)]
    assert draws[0] == draws[1] == draws[2]


# -- composition ------------------------------------------------------------

def test_mean_of_two_clients():
    state = RecyclerState([2], 0)
    applied, rec = compose_global_update([upd(0, {0: [1, 1]}), upd(1, {0: [3, 3]})], state)
    assert list(applied[0]) == [2.0, 2.0]
    assert rec == frozenset()
    assert state.last_applied is applied


def test_recycled_layer_reuses_previous_update():
    state = RecyclerState([1, 2], 1)
    state.last_applied = lkv([0.5], [9.0, 9.0])
    state.current_set = frozenset({0})
    applied, rec = compose_global_update([upd(0, {1: [1, 2]}), upd(1, {1: [3, 4]})], state)
    assert list(applied[0]) == [0.5]
    assert list(applied[1]) == [2.0, 3.0]
    assert rec == {0}
    assert list(state.staleness) == [1, 0]


def test_client_order_does_not_matter():
    rng = np.random.default_rng(1)
    ups = [upd(c, {0: rng.normal(size=4)}) for c in range(5)]
    s1, s2 = RecyclerState([4], 0), RecyclerState([4], 0)
    a1, _ = compose_global_update(ups, s1)
    a2, _ = compose_global_update(ups[::-1], s2)
    assert a1.equal(a2)


def test_protocol_errors():
    state = RecyclerState([1, 1], 1)
    state.last_applied = lkv([0.0], [0.0])
    state.current_set = frozenset({1})
    with pytest.raises(ProtocolError):
        compose_global_update([upd(0, {0: [1.0], 1: [1.0]})], state)
    with pytest.raises(ProtocolError):
        compose_global_update([], state)
    with pytest.raises(ProtocolError):
        compose_global_update([upd(0, {0: [1.0, 2.0]})], state)
    fresh = RecyclerState([1, 1], 1)
    fresh.current_set = frozenset({1})
    with pytest.raises(ProtocolError):
        compose_global_update([upd(0, {0: [1.0]})], fresh)


def test_recycler_state_validates_delta():
    with pytest.raises(ConfigurationError):
        RecyclerState([1, 1], 3)


def test_dropping_zeroes_recycled_layers():
    state = RecyclerState([1, 2], 1)
    state.last_applied = lkv([0.5], [9.0, 9.0])
    state.current_set = frozenset({0})
    applied = compose_dropping_update([upd(0, {1: [1, 2]})], state)
    assert list(applied[0]) == [0.0]
    assert list(applied[1]) == [1.0, 2.0]


def test_dropping_single_client_mean():
    applied = compose_dropping_update([upd(0, {0: [-2.0]})], RecyclerState([1], 0))
    assert list(applied[0]) == [-2.0]


def test_dropping_equals_recycling_without_recycled_layers():
    rng = np.random.default_rng(2)
    ups = [upd(c, {0: rng.normal(size=3), 1: rng.normal(size=2)}) for c in range(3)]
    a, _ = compose_global_update(ups, RecyclerState([3, 2], 0))
    b = compose_dropping_update(ups, RecyclerState([3, 2], 0))
    assert a.equal(b)


def test_staleness_law_over_sequence():
    sizes = [1, 1, 1]
    state = RecyclerState(sizes, 1)
    sets = [set(), {0}, {0}, {1}, {0}, {0}, {0}, set()]
    state.last_applied = lkv([0.0], [0.0], [0.0])
    for t, r in enumerate(sets):
        state.current_set = frozenset(r)
        fresh = {l: [float(t)] for l in range(3) if l not in r}
        compose_global_update([upd(0, fresh)], state)
        for l in range(3):
            run = 0
            for past in reversed(sets[: t + 1]):
                if l not in past:
                    break
                run += 1
            assert state.staleness[l] == run


def test_frozen_refresh_keeps_recycled_scores():
    state = RecyclerState([2, 2], 1)
    state.scores = np.array([7.0, 7.0])
    state.current_set = frozenset({0})
    s = refresh_scores(state, lkv([3.0, 4.0], [3.0, 4.0]), lkv([1.0, 0.0], [1.0, 0.0]), "frozen")
    assert list(s) == [7.0, 5.0]
    s = refresh_scores(state, lkv([3.0, 4.0], [3.0, 4.0]), lkv([1.0, 0.0], [1.0, 0.0]), "applied")
    assert list(s) == [5.0, 5.0]


# -- noise ------------------------------------------------------------------

def test_noise_zero_without_recycling():
    fresh = lkv([1.0, 2.0], [3.0])
    assert measure_noise(fresh.copy(), fresh, set()) == (0.0, 0.0)


def test_noise_full_recycling_of_zero_update():
    fresh = lkv([1.0, 2.0], [3.0])
    n_sq, kappa = measure_noise(lkv([0.0, 0.0], [0.0]), fresh, {0, 1})
    assert n_sq == 14.0 and kappa == 1.0


def test_noise_matches_elementwise_recomputation():
    rng = np.random.default_rng(3)
    fresh = lkv(rng.normal(size=5), rng.normal(size=3), rng.normal(size=4))
    applied = fresh.copy()
    applied[1] = rng.normal(size=3)
    n_sq, kappa = measure_noise(applied, fresh, {1})
    a, f = applied.flat(), fresh.flat()
    brute = 0.0
    for i in range(a.size):
        brute += (a[i] - f[i]) ** 2
    assert n_sq == pytest.approx(brute, rel=1e-13)
    f1 = sum(v * v for v in fresh[1])
    assert kappa == pytest.approx(f1 / sum(v * v for v in f), rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.sets(st.integers(0, 3)))
def test_kappa_in_unit_interval(seed, rec):
    rng = np.random.default_rng(seed)
    fresh = lkv(*(rng.normal(size=3) for _ in range(4)))
    _, kappa = measure_noise(fresh, fresh, rec)
    assert 0.0 <= kappa <= 1.0
    assert (kappa == 0.0) == (len(rec) == 0)
