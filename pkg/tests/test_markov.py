# tests/test_markov.py
import itertools
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from hmm_core.errors import ModelValidationError, NoStationaryDistributionError
from hmm_core.markov import (
    analytic_moments,
    lumped_chain,
    marginal_pair_distribution,
    require_valid,
    sample,
    stationary_distribution,
    validate_model,
)
from hmm_core.models import HmmModel


# =====================
# 🔧 Fixtures
# =====================
@pytest.fixture
def two_state_model() -> HmmModel:
    """🔧 The 2×2 reference model used across the suite."""
    return HmmModel(
        P=[[0.7, 0.3], [0.4, 0.6]],
        B=[[0.8, 0.2], [0.3, 0.7]],
        pi0=[0.5, 0.5],
    )


@pytest.fixture
def trivial_model() -> HmmModel:
    return HmmModel(P=[[1.0]], B=[[1.0]], pi0=[1.0])


def path_sum_pair_probability(model: HmmModel, k: int) -> np.ndarray:
    """Pr(y_k = i, y_k+1 = j) by summing over every state path x_0..x_k+1."""
    x, y = model.num_states, model.num_outputs
    result = np.zeros((y, y))
    for path in itertools.product(range(x), repeat=k + 2):
        weight = model.pi0[path[0]]
        for a, b in zip(path[:-1], path[1:]):
            weight *= model.P[a, b]
        result += weight * np.outer(model.B[path[-2]], model.B[path[-1]])
    return result


# =====================
# 🧪 Tests
# =====================
class TestValidateModel:
    def test_identity_model_is_structural_only(self):
        """🧪 Identity matrices are stochastic but contain zeros."""
        model = HmmModel(P=np.eye(2), B=np.eye(2), pi0=[1.0, 0.0])
        assert validate_model(model, "structural").passed
        report = validate_model(model, "assumption1")
        assert not report.passed
        assert any("not strictly positive" in failure for failure in report.failures)
        assert not any("rank" in failure for failure in report.failures)

    def test_bad_row_sum_is_reported(self):
        model = HmmModel(P=[[0.5, 0.6], [0.4, 0.6]], B=np.eye(2), pi0=[0.5, 0.5])
        report = validate_model(model, "structural")
        assert not report.passed
        assert any("row 0 sum 1.1" in failure for failure in report.failures)

    def test_reference_model_passes_both_levels(self, two_state_model):
        assert validate_model(two_state_model, "structural").passed
        assert validate_model(two_state_model, "assumption1").passed

    def test_more_states_than_outputs_fails_rank(self):
        model = HmmModel(
            P=np.full((3, 3), 1 / 3), B=[[0.5, 0.5], [0.4, 0.6], [0.3, 0.7]], pi0=np.full(3, 1 / 3)
        )
        report = validate_model(model, "assumption1")
        assert any("rank(B) < X" in failure for failure in report.failures)

    def test_dimension_mismatch_is_a_hard_error(self):
        with pytest.raises(ValueError):
            HmmModel(P=np.eye(2), B=np.eye(3), pi0=[0.5, 0.5])
        with pytest.raises(ValueError):
            HmmModel(P=np.eye(2), B=np.eye(2), pi0=[1.0])

    def test_unknown_level(self, two_state_model):
        with pytest.raises(ValueError):
            validate_model(two_state_model, "strict")

    def test_require_valid_raises(self):
        model = HmmModel(P=np.eye(2), B=np.eye(2), pi0=[1.0, 0.0])
        with pytest.raises(ModelValidationError):
            require_valid(model, "assumption1")

    def test_model_arrays_are_read_only(self, two_state_model):
        with pytest.raises(ValueError):
            two_state_model.P[0, 0] = 0.1


class TestSample:
    def test_trivial_model_gives_zero_labels(self, trivial_model):
        obs, states = sample(trivial_model, 20, seed=1)
        assert np.all(obs.labels == 0)
        assert np.all(states == 0)
        assert obs.num_pairs == 19

    def test_identity_sensor_reveals_states(self):
        model = HmmModel(P=[[0.7, 0.3], [0.4, 0.6]], B=np.eye(2), pi0=[0.5, 0.5])
        obs, states = sample(model, 500, seed=3)
        np.testing.assert_array_equal(obs.labels, states)

    def test_same_seed_same_sequence(self, two_state_model):
        first, _ = sample(two_state_model, 1000, seed=42)
        second, _ = sample(two_state_model, 1000, seed=42)
        third, _ = sample(two_state_model, 1000, seed=43)
        np.testing.assert_array_equal(first.labels, second.labels)
        assert not np.array_equal(first.labels, third.labels)

    def test_too_short(self, two_state_model):
        with pytest.raises(ValueError):
            sample(two_state_model, 1, seed=0)

    def test_label_frequencies_match_stationary_output_law(self, two_state_model):
        obs, _ = sample(two_state_model, 100_000, seed=11)
        frequencies = np.bincount(obs.labels, minlength=2) / len(obs)
        expected = stationary_distribution(two_state_model.P) @ two_state_model.B
        np.testing.assert_allclose(frequencies, expected, atol=0.01)

    def test_pair_frequencies_converge_to_flow_matrix(self):
        P = np.array([[0.7, 0.3], [0.4, 0.6]])
        model = HmmModel(P=P, B=np.eye(2), pi0=[0.5, 0.5])
        obs, _ = sample(model, 100_000, seed=5)
        pairs = np.zeros((2, 2))
        np.add.at(pairs, (obs.labels[:-1], obs.labels[1:]), 1.0)
        pairs /= obs.num_pairs
        pi = stationary_distribution(P)
        np.testing.assert_allclose(pairs, pi[:, None] * P, atol=0.01)


class TestStationaryDistribution:
    def test_uniform(self):
        pi = stationary_distribution(np.full((4, 4), 0.25))
        np.testing.assert_allclose(pi, np.full(4, 0.25), atol=1e-14)

    def test_two_state_closed_form(self):
        pi = stationary_distribution(np.array([[0.7, 0.3], [0.4, 0.6]]))
        np.testing.assert_allclose(pi, [4 / 7, 3 / 7], atol=1e-14)

    def test_matches_power_iteration(self):
        rng = np.random.default_rng(0)
        P = rng.random((5, 5)) + 0.01
        P /= P.sum(axis=1, keepdims=True)
        pi = stationary_distribution(P)

        power = np.full(5, 0.2)
        for _ in range(500):
            power = power @ P
        np.testing.assert_allclose(pi, power, atol=1e-10)
        assert np.max(np.abs(P.T @ pi - pi)) <= 1e-12
        assert pi.sum() == pytest.approx(1.0, abs=1e-15)

    def test_reducible_chain(self):
        with pytest.raises(NoStationaryDistributionError, match="no unique stationary distribution"):
            stationary_distribution(np.eye(2))


class TestAnalyticMoments:
    def test_identity_sensor_at_lag_zero(self):
        model = HmmModel(P=[[0.7, 0.3], [0.4, 0.6]], B=np.eye(2), pi0=[1.0, 0.0])
        moments = analytic_moments(model, 0)
        np.testing.assert_allclose(moments.matrix, [[0.7, 0.3], [0.0, 0.0]], atol=1e-15)
        assert moments.kind == "analytic"
        assert moments.lag == 0

    def test_fully_symmetric_model(self):
        model = HmmModel(P=np.full((3, 3), 1 / 3), B=np.full((3, 3), 1 / 3), pi0=[1.0, 0.0, 0.0])
        for k in [0, 1, 5, "stationary"]:
            np.testing.assert_allclose(analytic_moments(model, k).matrix, np.full((3, 3), 1 / 9), atol=1e-14)

    def test_matches_path_enumeration(self, two_state_model):
        expected = path_sum_pair_probability(two_state_model, 3)
        np.testing.assert_allclose(analytic_moments(two_state_model, 3).matrix, expected, atol=1e-14)

    def test_entries_sum_to_one_and_converge(self, two_state_model):
        limit = analytic_moments(two_state_model, "stationary")
        assert limit.kind == "analytic-stationary"
        distances = []
        for k in range(8):
            moments = analytic_moments(two_state_model, k)
            assert moments.matrix.sum() == pytest.approx(1.0, abs=1e-12)
            distances.append(np.linalg.norm(moments.matrix - limit.matrix))
        assert all(b < a for a, b in zip(distances[1:], distances[2:]))

    def test_negative_lag(self, two_state_model):
        with pytest.raises(ValueError):
            analytic_moments(two_state_model, -1)


class TestLumpedChain:
    def test_trivial(self, trivial_model):
        chain = lumped_chain(trivial_model)
        np.testing.assert_array_equal(chain.T, [[1.0]])

    def test_rows_are_stochastic(self, two_state_model):
        chain = lumped_chain(two_state_model)
        assert chain.T.shape == (8, 8)
        np.testing.assert_allclose(chain.T.sum(axis=1), 1.0, atol=1e-12)

    def test_enumeration_order(self, two_state_model):
        chain = lumped_chain(two_state_model)
        P, B = two_state_model.P, two_state_model.B
        # (i, j, l) = (1, 0, 1) -> (0, 1, 0): requires i' = j
        source, target = chain.state_index(1, 0, 1), chain.state_index(0, 1, 0)
        assert chain.T[source, target] == pytest.approx(P[1, 0] * B[0, 1])
        assert chain.T[source, chain.state_index(1, 1, 0)] == 0.0

    def test_positive_model_gives_primitive_chain(self, two_state_model):
        chain = lumped_chain(two_state_model)
        assert chain.is_primitive(power=2)
        assert chain.is_primitive()

    def test_deterministic_model_is_not_primitive(self):
        chain = lumped_chain(HmmModel(P=np.eye(2), B=np.eye(2), pi0=[0.5, 0.5]))
        assert not chain.is_primitive()

    def test_marginal_matches_stationary_moments(self, two_state_model):
        marginal = marginal_pair_distribution(lumped_chain(two_state_model))
        expected = analytic_moments(two_state_model, "stationary").matrix
        np.testing.assert_allclose(marginal, expected, atol=1e-10)
