"""Policy-evaluation adapter: pair-chain construction and Bellman oracles."""

import numpy as np
import pytest

from ttssa import (FeatureMap, FeatureScale, MarkovRewardProcess,
                   bellman_fixed_point, build_gtd_instance, exact_values,
                   scale_features, validate_assumptions)
from ttssa.gtd import x_star_tracking_check
from ttssa.markov import stationary_distribution
from ttssa.problem import BLOCK_NORM_BOUND, exact_solution


@pytest.fixture(scope="module")
def single_state():
    return MarkovRewardProcess(np.array([[1.0]]), np.array([1.0]), 0.9)


@pytest.fixture(scope="module")
def two_state():
    return MarkovRewardProcess(np.array([[0.5, 0.5], [0.3, 0.7]]),
                               np.array([1.0, 2.0]), 0.9)


def test_mrp_validation():
    with pytest.raises(ValueError):
        MarkovRewardProcess(np.array([[0.5, 0.4]]), np.array([1.0]), 0.9)
    with pytest.raises(ValueError):
        MarkovRewardProcess(np.array([[1.0]]), np.array([1.0]), 1.0)
    with pytest.raises(ValueError):
        MarkovRewardProcess(np.array([[1.0]]), np.array([1.0, 2.0]), 0.5)


def test_single_state_blocks(single_state):
    model = build_gtd_instance(single_state, FeatureMap([[0.5]]))
    assert model.chain.n_states == 1
    assert float(model.table.a11[0, 0, 0]) == pytest.approx(0.25, rel=1e-14)
    # phi (phi - discount phi') = 0.5 * (0.5 - 0.45)
    assert float(model.table.a12[0, 0, 0]) == pytest.approx(0.025, rel=1e-14)
    assert float(model.table.a21[0, 0, 0]) == pytest.approx(-0.025, rel=1e-14)
    assert np.all(model.table.a22 == 0.0)
    assert model.table.b1[0] == pytest.approx([0.5], rel=1e-14)
    assert np.all(model.table.b2 == 0.0)


def test_single_state_ground_truth(single_state):
    """Both solution routes give Y* = 20 and fitted value 10 exactly."""
    feats = FeatureMap([[0.5]])
    bell = bellman_fixed_point(single_state, feats)
    assert bell.y_star == pytest.approx([20.0], abs=1e-10)
    assert bell.fitted_values == pytest.approx([10.0], abs=1e-10)
    model = build_gtd_instance(single_state, feats)
    sol = exact_solution(model.problem)
    assert sol.y_star == pytest.approx([20.0], abs=1e-10)
    assert exact_values(single_state) == pytest.approx([10.0], abs=1e-10)
    assert x_star_tracking_check(model.problem, sol) < 1e-12


def test_pair_chain_marginal(two_state):
    feats, _ = scale_features(two_state, FeatureMap(np.eye(2)))
    model = build_gtd_instance(two_state, feats)
    pi_pair = stationary_distribution(model.chain)
    pi_base = stationary_distribution_of(two_state.transition)
    # marginal over the first pair coordinate reproduces the base chain
    marg = np.zeros(2)
    for (i, _), w in zip(model.pair_states, pi_pair):
        marg[i] += w
    assert marg == pytest.approx(pi_base, abs=1e-12)
    # pair (i, j) moves to (j, l) with the base probability of j -> l
    s = model.pair_states.index((0, 1))
    t = model.pair_states.index((1, 1))
    assert model.chain.transition[s, t] == pytest.approx(0.7)


def stationary_distribution_of(p):
    from ttssa import FiniteMarkovChain
    return stationary_distribution(FiniteMarkovChain(p))


def test_tabular_features_recover_exact_values(two_state):
    feats, c = scale_features(two_state, FeatureMap(np.eye(2)))
    assert 0 < c <= 1
    bell = bellman_fixed_point(two_state, feats)
    assert bell.fitted_values == pytest.approx(exact_values(two_state), rel=1e-8)


def test_zero_discount_fits_reward(two_state):
    mrp = MarkovRewardProcess(two_state.transition, two_state.reward, 0.0)
    feats, _ = scale_features(mrp, FeatureMap(np.eye(2)))
    bell = bellman_fixed_point(mrp, feats)
    assert bell.fitted_values == pytest.approx(mrp.reward, rel=1e-10)


def test_feature_scale_guard(single_state):
    with pytest.raises(FeatureScale):
        build_gtd_instance(single_state, FeatureMap([[2.0]]))


def test_scale_features_hits_bound(single_state):
    scaled, c = scale_features(single_state, FeatureMap([[2.0]]))
    assert c < 1.0
    model = build_gtd_instance(single_state, scaled)
    worst = max(float(np.linalg.norm(model.table.a11[0], ord=2)),
                float(np.linalg.norm(model.table.a12[0], ord=2)))
    assert worst <= BLOCK_NORM_BOUND + 1e-12
    # a11 = (c*phi)^2 saturates the bound exactly for a single feature
    assert float(np.linalg.norm(model.table.a11[0], ord=2)) == pytest.approx(
        BLOCK_NORM_BOUND, rel=1e-10)


def test_scale_features_identity_when_small(single_state):
    feats = FeatureMap([[0.1]])
    scaled, c = scale_features(single_state, feats)
    assert c == 1.0
    assert np.array_equal(scaled.phi, feats.phi)


def test_built_instance_satisfies_assumptions(two_state):
    feats, _ = scale_features(two_state, FeatureMap(np.eye(2)))
    model = build_gtd_instance(two_state, feats)
    report = validate_assumptions(model.problem, model.table, chain=model.chain)
    assert report.all_ok
