"""Exact chain analysis: laws, stationarity, bounds, hitting times."""

import itertools
import math

import numpy as np
import pytest

from markosparse.chain_analysis import (
    banlast_hitting_time_exact,
    build_transition_matrix,
    deviation_curve,
    enumerate_masks,
    enumerate_states,
    expected_hitting_time_banlast,
    expected_hitting_time_randm,
    mixing_time,
    monte_carlo_hitting_time,
    newest_mask_marginal,
    optimal_history_size,
    recurrent_class,
    rho_bound_banlast,
    rho_bound_kawasaki_normalize,
    sequential_mask_law,
    stationary_distribution,
)
from markosparse.errors import InvalidArgumentError, NonErgodicError, TooLargeError


def test_enumerate_masks_and_states_counts():
    masks = enumerate_masks(4, 2)
    assert masks == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    states = enumerate_states(4, 2, 2)
    assert len(states) == 36
    with pytest.raises(TooLargeError):
        enumerate_states(30, 5, 4)


def test_sequential_mask_law_m1_is_the_base_law():
    p = np.array([0.2, 0.3, 0.5])
    law = sequential_mask_law(p, 1)
    for mask, prob in law.items():
        assert prob == pytest.approx(p[mask[0]])


def test_sequential_mask_law_matches_brute_force_m2():
    p = np.array([0.5, 0.3, 0.2])
    law = sequential_mask_law(p, 2)
    # direct sum over ordered draws: P(i then j) = p_i * p_j / (1 - p_i)
    for (i, j), prob in law.items():
        expect = p[i] * p[j] / (1 - p[i]) + p[j] * p[i] / (1 - p[j])
        assert prob == pytest.approx(expect)
    assert sum(law.values()) == pytest.approx(1.0)


def test_transition_matrices_are_stochastic():
    for kind, kwargs in (
        ("banlast", dict(d=5, m=2, K=1)),
        ("kawasaki", dict(d=4, m=1, K=2, b=2.0)),
        ("rand", dict(d=4, m=1, K=1)),
    ):
        chain = build_transition_matrix(kind, **kwargs)
        np.testing.assert_allclose(chain.P.sum(axis=1), 1.0, atol=1e-12)
        assert chain.P.min() >= 0.0


def test_banlast_small_chains_have_uniform_stationary_law():
    for d, m, K in ((3, 1, 1), (4, 1, 1), (5, 1, 2), (5, 2, 1)):
        chain = build_transition_matrix("banlast", d=d, m=m, K=K)
        result = stationary_distribution(chain)
        np.testing.assert_allclose(result.pi[result.recurrent],
                                   1.0 / len(result.recurrent), atol=1e-12)
        marg = newest_mask_marginal(chain, result.pi)
        np.testing.assert_allclose(marg, m / d, atol=1e-12)


def test_banlast_recurrent_class_is_disjoint_tuples():
    # with K=2 the reachable states are the ordered pairs of disjoint masks
    chain = build_transition_matrix("banlast", d=4, m=1, K=2)
    result = stationary_distribution(chain)
    assert chain.n_states == 16
    assert len(result.recurrent) == 12
    np.testing.assert_allclose(result.pi[result.recurrent], 1.0 / 12, atol=1e-12)
    assert result.pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_kawasaki_k1_chains_have_uniform_stationary_law():
    for d, m, K, b in ((3, 1, 1, 2.0), (4, 1, 1, 5.0)):
        chain = build_transition_matrix("kawasaki", d=d, m=m, K=K, b=b)
        result = stationary_distribution(chain)
        np.testing.assert_allclose(result.pi[result.recurrent],
                                   1.0 / len(result.recurrent), atol=1e-12)
        np.testing.assert_allclose(newest_mask_marginal(chain, result.pi), m / d, atol=1e-12)


def test_kawasaki_k2_stationary_law_is_witnessed_nonuniform():
    # the two-step penalty memory breaks tuple-uniformity even though the
    # newest-mask marginal stays exactly m/d
    chain = build_transition_matrix("kawasaki", d=4, m=1, K=2, b=2.0)
    result = stationary_distribution(chain)
    pi = result.pi[result.recurrent]
    np.testing.assert_allclose(pi @ chain.P[np.ix_(result.recurrent, result.recurrent)],
                               pi, atol=1e-11)
    assert pi.max() - pi.min() > 0.01
    np.testing.assert_allclose(newest_mask_marginal(chain, result.pi), 0.25, atol=1e-11)


def test_nonergodic_chains_are_reported():
    with pytest.raises(NonErgodicError, match="periodic"):
        recurrent_class(build_transition_matrix("banlast", d=2, m=1, K=1))
    with pytest.raises(NonErgodicError, match="reducible"):
        recurrent_class(build_transition_matrix("banlast", d=4, m=2, K=1))


def test_state_and_matrix_caps():
    with pytest.raises(TooLargeError):
        build_transition_matrix("banlast", d=40, m=4, K=3)
    with pytest.raises(TooLargeError):
        build_transition_matrix("banlast", d=30, m=1, K=3, matrix_cap=1000)


def test_kawasaki_multicoordinate_masks_need_joint_law():
    with pytest.raises(InvalidArgumentError):
        build_transition_matrix("kawasaki", d=4, m=2, K=1, b=2.0)
    chain = build_transition_matrix("kawasaki", d=4, m=2, K=1, b=2.0, joint_law=True)
    np.testing.assert_allclose(chain.P.sum(axis=1), 1.0, atol=1e-12)


def test_rho_bound_banlast_worked_value():
    bound = rho_bound_banlast(4, 1, 1)
    assert bound.rho == pytest.approx(math.sqrt(7) / 3, abs=1e-15)
    assert bound.C == pytest.approx(9 / 7, abs=1e-15)
    for d, m, K in ((3, 1, 1), (5, 1, 2), (5, 2, 1)):
        with pytest.raises(InvalidArgumentError):
            rho_bound_banlast(d, m, K)  # outside d > (2K+1)m


def test_rho_bound_kawasaki_worked_value():
    bound = rho_bound_kawasaki_normalize(2, 1, 1, 2.0)
    assert bound.rho == pytest.approx(2 / 3, abs=1e-15)
    assert bound.C == pytest.approx(1.5, abs=1e-15)


def test_deviation_curves_respect_the_ergodicity_bound():
    cases = [
        ("banlast", dict(d=4, m=1, K=1), rho_bound_banlast(4, 1, 1)),
        ("kawasaki", dict(d=3, m=1, K=1, b=2.0), rho_bound_kawasaki_normalize(3, 1, 1, 2.0)),
        ("kawasaki", dict(d=4, m=1, K=1, b=5.0), rho_bound_kawasaki_normalize(4, 1, 1, 5.0)),
        ("kawasaki", dict(d=4, m=1, K=2, b=2.0), rho_bound_kawasaki_normalize(4, 1, 2, 2.0)),
    ]
    for kind, kwargs, bound in cases:
        chain = build_transition_matrix(kind, **kwargs)
        curve = deviation_curve(chain, t_max=200)
        envelope = bound.C * bound.rho ** np.arange(201)
        assert np.all(curve <= envelope + 1e-12), (kind, kwargs)


def test_mixing_time_decreases_with_looser_eps():
    chain = build_transition_matrix("banlast", d=4, m=1, K=1)
    t_tight = mixing_time(chain, eps=1e-6)
    t_loose = mixing_time(chain, eps=0.2)
    assert 1 <= t_loose <= t_tight


def test_hitting_time_closed_forms():
    assert expected_hitting_time_randm(10) == pytest.approx(10.0, abs=1e-12)
    assert expected_hitting_time_banlast(10, 7) == pytest.approx(3.3852766346593515, abs=1e-12)
    assert expected_hitting_time_banlast(10, 0) == pytest.approx(10.0, abs=1e-12)
    assert banlast_hitting_time_exact(10, 7) == pytest.approx(5.8, abs=1e-9)
    assert banlast_hitting_time_exact(10, 0) == pytest.approx(10.0, abs=1e-12)


def test_exact_hitting_time_matches_monte_carlo():
    # the closed-form estimate is optimistic; the exact process mean is the
    # value a simulation reproduces
    mean, stderr = monte_carlo_hitting_time("banlast", d=10, m=1, K=7, trials=200_000, seed=3)
    assert abs(mean - 5.8) / 5.8 < 0.01
    assert stderr < 0.02
    mean_rand, _ = monte_carlo_hitting_time("rand", d=10, m=1, trials=100_000, seed=4)
    assert abs(mean_rand - 10.0) / 10.0 < 0.02


def test_monte_carlo_identity_is_instant():
    assert monte_carlo_hitting_time("identity", d=5, trials=10) == (1.0, 0.0)


def test_optimal_history_size_matches_the_grid():
    grid = [5.3, 6.7, 8.3, 10.0, 11.1, 12.5, 14.3, 16.7, 20.0]
    assert [optimal_history_size(a) for a in grid] == [4, 5, 6, 7, 8, 9, 10, 12, 15]
    assert optimal_history_size(3.0) == 1
    with pytest.raises(InvalidArgumentError):
        optimal_history_size(2.0)


def test_optimal_history_size_respects_k_max():
    assert optimal_history_size(10.0, K_max=3) == 3
