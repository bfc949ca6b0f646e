import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcgmm.errors import ContractViolation
from vcgmm.instrument import DistanceCounter
from vcgmm.model import (GmmParams, TruncatedState, WeightedCoreset, check_data,
                         coreset_log_likelihood, explicit_bound, kl_gap, merged_objective,
                         quantization_error, responsibilities, squared_distance,
                         truncated_responsibilities)

from . import oracles


def _state(k_sets, n_clusters, g_size=1):
    k_sets = np.asarray(k_sets, dtype=np.int64)
    g = np.arange(n_clusters)[:, None] if g_size == 1 else np.array(
        [[(c + j) % n_clusters for j in range(g_size)] for c in range(n_clusters)])
    return TruncatedState(k_sets=k_sets, g_sets=g)


def _random_sets(rng, n, n_clusters, c_prime):
    return np.array([rng.choice(n_clusters, c_prime, replace=False) for _ in range(n)])


def _instance(seed, n=30, dim=3, n_clusters=6, c_prime=3, weighted=True):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, dim)) * 2
    w = rng.uniform(0.2, 3.0, size=n) if weighted else np.ones(n)
    means = rng.normal(size=(n_clusters, dim)) * 2
    params = GmmParams(means, rng.uniform(0.3, 2.0))
    k = _random_sets(rng, n, n_clusters, c_prime)
    return WeightedCoreset(pts, w), params, _state(k, n_clusters)


# -- data types ---------------------------------------------------------------

def test_check_data_rejects_bad_input():
    with pytest.raises(ContractViolation):
        check_data(np.empty((0, 3)))
    with pytest.raises(ContractViolation, match="row 1, column 0"):
        check_data([[0.0], [np.nan]])
    with pytest.raises(ContractViolation):
        check_data([[0.0, np.inf]])
    assert check_data([1.0, 2.0]).shape == (2, 1)


def test_coreset_invariants():
    with pytest.raises(ContractViolation):
        WeightedCoreset(np.zeros((2, 2)), [1.0, 0.0])
    with pytest.raises(ContractViolation):
        WeightedCoreset(np.zeros((2, 2)), [1.0])
    with pytest.raises(ContractViolation):
        WeightedCoreset(np.zeros((2, 2)), [1.0, np.inf])
    cs = WeightedCoreset(np.zeros((3, 2)), [1.0, 2.0, 0.5])
    assert cs.n_core == 3 and cs.dim == 2 and cs.total_weight == 3.5


def test_params_invariants():
    with pytest.raises(ContractViolation):
        GmmParams(np.zeros((2, 2)), 0.0)
    with pytest.raises(ContractViolation):
        GmmParams(np.zeros((2, 2)), -1.0)
    with pytest.raises(ContractViolation):
        GmmParams(np.array([[np.nan]]), 1.0)
    p = GmmParams(np.zeros((4, 3)), 2.0)
    assert p.n_clusters == 4 and p.dim == 3


def test_state_validation_and_queries():
    st_ = TruncatedState(k_sets=np.array([[0, 1], [2, 1]]),
                         g_sets=np.array([[0, 1], [1, 2], [2, 0]]),
                         labels=np.array([0, 2]),
                         dist_rows=np.array([0, 0, 2]), dist_cols=np.array([0, 1, 2]),
                         dist_vals=np.array([0.0, 4.0, 0.0]))
    st_.validate()
    assert [p.tolist() for p in st_.partition()] == [[0], [], [1]]
    assert st_.cluster_distance(0, 1) == 4.0
    assert st_.cluster_distance(1, 0) == math.inf
    assert st_.search_space(1).tolist() == [0, 1, 2]
    bad = TruncatedState(k_sets=np.array([[0, 0]]), g_sets=np.array([[0, 1], [1, 0]]))
    with pytest.raises(ContractViolation):
        bad.validate()
    bad = TruncatedState(k_sets=np.array([[0, 3]]), g_sets=np.array([[0, 1], [1, 0]]))
    with pytest.raises(ContractViolation):
        bad.validate()
    bad = TruncatedState(k_sets=np.array([[0]]), g_sets=np.array([[1, 0], [0, 1]]))
    with pytest.raises(ContractViolation):
        bad.validate()


# -- squared distance ---------------------------------------------------------

def test_squared_distance_examples():
    assert squared_distance([1.5, -2.0], [1.5, -2.0]) == 0.0
    assert squared_distance([0, 0], [3, 4]) == 25.0


def test_squared_distance_counts_and_mismatch():
    counter = DistanceCounter("estep")
    squared_distance([1.0], [2.0], counter)
    squared_distance([1.0], [2.0])
    assert counter["estep"] == 1
    with pytest.raises(ContractViolation):
        squared_distance([1.0, 2.0], [1.0])


def test_squared_distance_matches_scalar_loop():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, y = rng.normal(size=10), rng.normal(size=10)
        assert squared_distance(x, y) == pytest.approx(oracles.sqdist(x, y), rel=1e-14)


# -- responsibilities ---------------------------------------------------------

def test_truncated_responsibilities_examples():
    p = GmmParams(np.array([[0.0], [2.0], [5.0]]), 1.0)
    assert truncated_responsibilities([1.0], p, [2]) == {2: 1.0}
    s = truncated_responsibilities([1.0], p, [0, 1])
    assert s[0] == pytest.approx(0.5, abs=1e-15) and s[1] == pytest.approx(0.5, abs=1e-15)
    var = 0.7
    s = truncated_responsibilities(None, GmmParams(p.means, var), [0, 1], dists=[0.0, 2 * var])
    e = math.exp(-1.0)
    assert s[0] == pytest.approx(1 / (1 + e), rel=1e-14)
    assert s[1] == pytest.approx(e / (1 + e), rel=1e-14)
    with pytest.raises(ContractViolation):
        truncated_responsibilities([1.0], p, [])


def test_truncated_responsibilities_charges_counter():
    p = GmmParams(np.zeros((5, 2)), 1.0)
    counter = DistanceCounter()
    truncated_responsibilities([1.0, 1.0], p, [0, 3, 4], counter=counter)
    truncated_responsibilities([1.0, 1.0], p, [0, 3, 4], dists=[1, 2, 3], counter=counter)
    assert counter["estep"] == 3


@given(st.lists(st.floats(0, 1e9), min_size=1, max_size=8),
       st.floats(1e-6, 1e3))
def test_responsibilities_normalize(dists, var):
    s = responsibilities(np.array([dists]), var)[0]
    assert np.all(s >= 0) and np.all(np.isfinite(s))
    assert abs(s.sum() - 1.0) <= 1e-12


def test_responsibilities_stable_far_from_data():
    var = 1e-3
    d = np.array([[1e6 * var + 5.0, 1e6 * var + 7.0, 2e6 * var]])
    s = responsibilities(d, var)
    assert np.all(np.isfinite(s)) and abs(s.sum() - 1) < 1e-12


# -- objectives ---------------------------------------------------------------

def test_merged_objective_single_point_example():
    cs = WeightedCoreset(np.array([[0.7]]), [1.0])
    p = GmmParams(np.array([[0.7]]), 1.0)
    f = merged_objective(cs, p, _state([[0]], 1))
    assert f == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-15)


def test_merged_objective_linear_in_weights():
    cs, p, state = _instance(1)
    doubled = WeightedCoreset(cs.points, 2 * cs.weights)
    assert merged_objective(doubled, p, state) == 2 * merged_objective(cs, p, state)


def test_merged_objective_matches_oracle():
    for seed in range(5):
        cs, p, state = _instance(seed)
        ref = oracles.merged_objective(cs.points, cs.weights, p.means, p.variance, state.k_sets)
        assert merged_objective(cs, p, state) == pytest.approx(ref, rel=1e-12)


def test_full_sets_equal_coreset_likelihood():
    for seed in range(5):
        cs, p, _ = _instance(seed)
        full = _state(np.tile(np.arange(p.n_clusters), (cs.n_core, 1)), p.n_clusters)
        lc = coreset_log_likelihood(cs, p)
        assert merged_objective(cs, p, full) == pytest.approx(lc, rel=1e-10)


def test_coreset_likelihood_hand_instance():
    pts = np.array([[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]])
    w = np.array([1.0, 2.0, 0.5])
    means = np.array([[0.0, 0.0], [1.0, 1.0]])
    p = GmmParams(means, 0.8)
    ref = oracles.log_likelihood(pts, w, means, 0.8)
    assert coreset_log_likelihood(WeightedCoreset(pts, w), p) == pytest.approx(ref, rel=1e-12)


def test_identity_coreset_likelihood_is_full_likelihood():
    rng = np.random.default_rng(4)
    data = rng.normal(size=(40, 2))
    means = rng.normal(size=(3, 2))
    cs = WeightedCoreset(data, np.ones(40))
    ref = oracles.log_likelihood(data, [1.0] * 40, means, 1.3)
    assert coreset_log_likelihood(cs, GmmParams(means, 1.3)) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_objective_sandwich(seed, c_prime):
    cs, p, _ = _instance(seed, n_clusters=6, c_prime=c_prime)
    rng = np.random.default_rng(seed)
    state = _state(_random_sets(rng, cs.n_core, 6, c_prime), 6)
    f = merged_objective(cs, p, state)
    lc = coreset_log_likelihood(cs, p)
    assert f <= lc + 1e-10 * abs(lc)
    if c_prime == 6:
        assert f == pytest.approx(lc, rel=1e-10)
    # the gap is the weighted KL divergence of the truncated posteriors
    assert lc - f == pytest.approx(kl_gap(cs, p, state.k_sets), rel=1e-8, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_objectives_shift_invariant(seed, a, b):
    cs, p, state = _instance(seed, dim=2)
    shift = np.array([a, b])
    cs2 = WeightedCoreset(cs.points + shift, cs.weights)
    p2 = GmmParams(p.means + shift, p.variance)
    assert merged_objective(cs2, p2, state) == pytest.approx(
        merged_objective(cs, p, state), rel=1e-9)
    assert coreset_log_likelihood(cs2, p2) == pytest.approx(coreset_log_likelihood(cs, p), rel=1e-9)
    q = quantization_error(cs.points, p.means)
    assert quantization_error(cs2.points, p2.means) == pytest.approx(q, rel=1e-9)


def test_merged_objective_rejects_bad_sets():
    cs, p, state = _instance(0)
    with pytest.raises(ContractViolation):
        merged_objective(cs, p, _state(np.full((cs.n_core, 1), p.n_clusters), p.n_clusters))
    with pytest.raises(ContractViolation):
        merged_objective(cs, p, _state(np.zeros((3, 1)), p.n_clusters))


def test_merged_objective_uses_cached_distances_without_charging():
    cs, p, state = _instance(2)
    counter = DistanceCounter()
    d = np.array([[oracles.sqdist(y, p.means[c]) for c in k]
                  for y, k in zip(cs.points, state.k_sets)])
    f = merged_objective(cs, p, state, dists=d, counter=counter)
    assert counter.total() == 0
    assert f == pytest.approx(merged_objective(cs, p, state), rel=1e-13)


def test_explicit_bound_maximized_by_truncated_posteriors():
    cs, p, state = _instance(6)
    d = np.array([[oracles.sqdist(y, p.means[c]) for c in k]
                  for y, k in zip(cs.points, state.k_sets)])
    s = responsibilities(d, p.variance)
    best = explicit_bound(cs, p, state.k_sets, s)
    assert best == pytest.approx(merged_objective(cs, p, state), rel=1e-12)
    rng = np.random.default_rng(0)
    other = rng.dirichlet(np.ones(state.c_prime), size=cs.n_core)
    assert explicit_bound(cs, p, state.k_sets, other) < best


# -- quantization error -------------------------------------------------------

def test_quantization_error_examples():
    pts = np.array([[1.0, 2.0], [3.0, 3.0]])
    assert quantization_error(pts, pts) == 0.0
    assert quantization_error([[0.0]], [[1.0], [-2.0]]) == 1.0


def test_quantization_error_matches_brute_force():
    rng = np.random.default_rng(9)
    pts, means = rng.normal(size=(100, 4)), rng.normal(size=(5, 4))
    counter = DistanceCounter("evaluation")
    q = quantization_error(pts, means, counter)
    assert q == pytest.approx(oracles.quantization_error(pts, means), rel=1e-13)
    assert counter["evaluation"] == 500
