"""Chain engine tests: exact simulation, transition laws, compensators."""

import numpy as np
import pytest
from scipy.linalg import expm

from rsjd import (
    GeneratorMatrix,
    RegimePath,
    ValidationError,
    chain_increments,
    sample_regime_path,
    sample_regime_paths,
    transition_matrix,
    two_state,
)
from rsjd.errors import DomainError
from rsjd.streams import REGIME, substream


class TestGeneratorMatrix:
    def test_row_sum_violation_rejected(self):
        with pytest.raises(ValidationError):
            GeneratorMatrix(np.array([[-1.0, 1.0], [0.5, -0.6]]))

    def test_negative_off_diagonal_rejected(self):
        with pytest.raises(ValidationError):
            GeneratorMatrix(np.array([[0.5, -0.5], [1.0, -1.0]]))

    def test_single_state_rejected(self):
        with pytest.raises(ValidationError):
            GeneratorMatrix(np.array([[0.0]]))

    def test_exit_rates(self):
        gen = two_state(1.3, 0.4)
        np.testing.assert_allclose(gen.exit_rates, [1.3, 0.4])


class TestSampling:
    def test_zero_rates_yield_no_events(self):
        gen = GeneratorMatrix(np.zeros((2, 2)))
        path = sample_regime_path(gen, 1, 5.0, substream(0, 0, REGIME))
        assert path.n_jumps == 0
        assert path.state_at(3.0) == 1

    def test_initial_state_and_chaining(self):
        gen = two_state(2.0, 3.0)
        path = sample_regime_path(gen, 2, 10.0, substream(7, 0, REGIME))
        assert path.initial_state == 2
        if path.n_jumps:
            assert path.jump_from[0] == 2
            assert np.all(path.jump_from[1:] == path.jump_to[:-1])
            assert np.all(path.jump_from != path.jump_to)

    def test_mean_jump_count_symmetric_chain(self):
        # Exit rate is 1 in both states, so the jump count over [0, T] has
        # mean exactly T by the renewal rate argument.
        gen = two_state(1.0, 1.0)
        paths = sample_regime_paths(gen, 1, 10.0, 10_000, master_seed=11)
        counts = np.diff(paths.offsets)
        se = counts.std(ddof=1) / np.sqrt(counts.size)
        assert abs(counts.mean() - 10.0) < 3 * se

    def test_single_path_matches_batch_member(self):
        gen = two_state(0.8, 1.7)
        batch = sample_regime_paths(gen, 1, 4.0, 50, master_seed=123)
        solo = sample_regime_path(gen, 1, 4.0, substream(123, 17, REGIME))
        member = batch[17]
        np.testing.assert_array_equal(solo.jump_times, member.jump_times)
        np.testing.assert_array_equal(solo.jump_to, member.jump_to)

    def test_absorbing_row_stops_jumping(self):
        gen = GeneratorMatrix(np.array([[-1.0, 1.0], [0.0, 0.0]]))
        paths = sample_regime_paths(gen, 1, 50.0, 200, master_seed=3)
        for p in range(20):
            path = paths[p]
            assert path.n_jumps <= 1
            if path.n_jumps:
                assert path.jump_to[0] == 2

    def test_block_extension_for_long_paths(self):
        gen = two_state(40.0, 40.0)
        paths = sample_regime_paths(gen, 1, 2.0, 500, master_seed=21)
        counts = np.diff(paths.offsets)
        assert abs(counts.mean() - 80.0) < 3 * counts.std(ddof=1) / np.sqrt(counts.size)
        # spot-check structural invariants survive the widened buffers
        for p in (0, int(np.argmax(counts))):
            RegimePath(
                paths[p].initial_state,
                paths[p].jump_times,
                paths[p].jump_from,
                paths[p].jump_to,
                2.0,
            )

    def test_invalid_initial_state(self):
        with pytest.raises(ValidationError):
            sample_regime_path(two_state(1, 1), 3, 1.0, substream(0, 0, REGIME))


class TestTransitionMatrix:
    def test_zero_elapsed_is_identity(self, symmetric_chain):
        np.testing.assert_array_equal(transition_matrix(symmetric_chain, 0.0), np.eye(2))

    def test_two_state_closed_form_value(self, symmetric_chain):
        # (1 + e^{-2s})/2 at s = ln2/2 equals exactly 3/4.
        p = transition_matrix(symmetric_chain, np.log(2.0) / 2.0)
        assert p[0, 0] == pytest.approx(0.75, abs=1e-15)

    def test_matches_matrix_exponential(self, rng):
        for _ in range(5):
            lam12, lam21 = rng.uniform(0.1, 3.0, size=2)
            gen = two_state(lam12, lam21)
            s = rng.uniform(0.0, 2.0)
            np.testing.assert_allclose(
                transition_matrix(gen, s), expm(s * gen.rates), atol=1e-12
            )

    def test_long_run_symmetric_limit(self, symmetric_chain):
        p = transition_matrix(symmetric_chain, 50.0)
        np.testing.assert_allclose(p, np.full((2, 2), 0.5), atol=1e-10)

    def test_three_state_uniformization(self, rng):
        rates = rng.uniform(0.1, 2.0, size=(3, 3))
        np.fill_diagonal(rates, 0.0)
        np.fill_diagonal(rates, -rates.sum(axis=1))
        gen = GeneratorMatrix(rates)
        for s in (0.05, 0.7, 3.1):
            p = transition_matrix(gen, s)
            np.testing.assert_allclose(p, expm(s * rates), atol=1e-11)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-10)

    def test_chapman_kolmogorov(self, rng):
        gen = two_state(1.4, 0.6)
        for _ in range(5):
            s, t = rng.uniform(0.0, 1.5, size=2)
            lhs = transition_matrix(gen, s) @ transition_matrix(gen, t)
            np.testing.assert_allclose(lhs, transition_matrix(gen, s + t), atol=1e-8)

    def test_negative_elapsed_rejected(self, symmetric_chain):
        with pytest.raises(DomainError):
            transition_matrix(symmetric_chain, -0.1)

    def test_empirical_state_frequencies(self, symmetric_chain):
        n = 20_000
        paths = sample_regime_paths(symmetric_chain, 1, 1.0, n, master_seed=9)
        for s in (0.25, 0.75):
            freq = (paths.states_at(s) == 1).mean()
            target = transition_matrix(symmetric_chain, s)[0, 0]
            se = np.sqrt(target * (1 - target) / n)
            assert abs(freq - target) < 3 * se


class TestChainIncrements:
    def test_no_jump_path(self):
        gen = two_state(1.0, 0.0)
        path = RegimePath(1, np.array([]), np.array([], dtype=np.int64),
                          np.array([], dtype=np.int64), 3.0)
        grid = np.linspace(0.0, 3.0, 7)
        inc = chain_increments(path, gen, grid)
        assert inc.into_counts[1, -1] == 0
        assert inc.compensators[1, -1] == pytest.approx(3.0)
        assert inc.compensated[1, -1] == pytest.approx(-3.0)

    def test_single_jump_path_compensates_exactly(self):
        # jump 1 -> 2 at t = 1 with rates lam12 = 1, lam21 = 0 over [0, 2]
        gen = GeneratorMatrix(np.array([[-1.0, 1.0], [0.0, 0.0]]))
        path = RegimePath(1, np.array([1.0]), np.array([1]), np.array([2]), 2.0)
        inc = chain_increments(path, gen, np.linspace(0.0, 2.0, 9))
        assert inc.into_counts[1, -1] == 1
        assert inc.compensators[1, -1] == pytest.approx(1.0)
        assert inc.compensated[1, -1] == pytest.approx(0.0)

    def test_pair_counts_sum_to_into_counts(self, symmetric_chain):
        paths = sample_regime_paths(symmetric_chain, 1, 2.0, 50, master_seed=31)
        grid = np.linspace(0.0, 2.0, 11)
        for p in range(10):
            inc = chain_increments(paths[p], symmetric_chain, grid)
            np.testing.assert_array_equal(inc.pair_counts.sum(axis=0), inc.into_counts)

    def test_compensator_is_nondecreasing_from_zero(self, symmetric_chain):
        paths = sample_regime_paths(symmetric_chain, 2, 1.5, 20, master_seed=5)
        grid = np.linspace(0.0, 1.5, 16)
        inc = chain_increments(paths[3], symmetric_chain, grid)
        assert np.all(inc.compensators[:, 0] == 0.0)
        assert np.all(np.diff(inc.compensators, axis=1) >= -1e-15)

    def test_martingale_means(self, symmetric_chain):
        n = 10_000
        paths = sample_regime_paths(symmetric_chain, 1, 1.0, n, master_seed=77)
        phi = paths.into_counts(2).astype(np.float64)
        lam = paths.terminal_compensators(symmetric_chain)
        for j in range(2):
            diff = phi[:, j] - lam[:, j]
            se = diff.std(ddof=1) / np.sqrt(n)
            assert abs(diff.mean()) < 3 * se

    def test_batch_terminal_values_match_single_path(self, symmetric_chain):
        paths = sample_regime_paths(symmetric_chain, 1, 1.0, 25, master_seed=13)
        grid = np.linspace(0.0, 1.0, 5)
        phi = paths.into_counts(2)
        lam = paths.terminal_compensators(symmetric_chain)
        for p in (0, 7, 24):
            inc = chain_increments(paths[p], symmetric_chain, grid)
            np.testing.assert_array_equal(inc.into_counts[:, -1], phi[p])
            np.testing.assert_allclose(inc.compensators[:, -1], lam[p], atol=1e-12)
