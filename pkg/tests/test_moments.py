# tests/test_moments.py
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from benchmark import default_bound, generate_random_system
from hmm_core.errors import DegenerateMassError, ModelValidationError, PerturbationTooLargeError
from hmm_core.markov import analytic_moments, sample, stationary_distribution
from hmm_core.models import HmmModel, MomentMatrix, ObservationSequence, PolytopeBound
from hmm_core.moments import (
    assemble_qp,
    daniel_bound,
    empirical_moments,
    polytope_from_elementwise_P_bound,
    recover_P,
    recover_pi,
    solve_moment_matching,
    unvec,
    vec,
)
from hmm_core.qp import min_eigenvalue, solve_qp


@pytest.fixture
def two_state_model() -> HmmModel:
    return HmmModel(
        P=[[0.7, 0.3], [0.4, 0.6]],
        B=[[0.8, 0.2], [0.3, 0.7]],
        pi0=[0.5, 0.5],
    )


class TestVectorization:
    def test_column_major_kronecker_identity(self):
        """🧪 vec(Bᵀ A B) = (B ⊗ B)ᵀ vec(A)."""
        rng = np.random.default_rng(0)
        A, B = rng.random((3, 3)), rng.random((3, 4))
        np.testing.assert_allclose(vec(B.T @ A @ B), np.kron(B, B).T @ vec(A), atol=1e-13)

    def test_unvec_inverts_vec(self):
        A = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(unvec(vec(A), 2), A)
        np.testing.assert_array_equal(vec(A), [0, 3, 1, 4, 2, 5])


class TestEmpiricalMoments:
    def test_pair_counts(self):
        obs = ObservationSequence(labels=[0, 1, 1, 0], num_outputs=2)
        moments = empirical_moments(obs)
        np.testing.assert_allclose(moments.matrix, [[0, 1 / 3], [1 / 3, 1 / 3]])
        assert moments.kind == "empirical"
        assert moments.num_pairs == 3

    def test_too_short(self):
        with pytest.raises(ValueError):
            empirical_moments(ObservationSequence(labels=[0], num_outputs=2))


class TestRecovery:
    def test_round_trip_is_exact(self):
        """🧪 A = diag(π)P  ->  (π, P) on 1000 random instances."""
        rng = np.random.default_rng(1)
        for _ in range(1000):
            x = int(rng.integers(1, 6))
            P = rng.random((x, x)) + 1e-3
            P /= P.sum(axis=1, keepdims=True)
            pi = rng.random(x) + 1e-3
            pi /= pi.sum()
            A = pi[:, None] * P
            np.testing.assert_allclose(recover_pi(A), pi, rtol=0, atol=1e-14)
            np.testing.assert_allclose(recover_P(A), P, rtol=0, atol=1e-14)

    def test_degenerate_mass(self):
        with pytest.raises(DegenerateMassError, match="degenerate stationary mass"):
            recover_P(np.array([[0.5, 0.5], [0.0, 0.0]]))


class TestMomentMatching:
    @pytest.mark.parametrize("size", [2, 3, 4, 5])
    def test_noiseless_moments_recover_P(self, size):
        for seed in range(5):
            model = generate_random_system(size, size, seed=100 * size + seed)
            moments = analytic_moments(model, "stationary")
            solution = solve_moment_matching(moments, model.B, default_bound(model))

            assert solution.qp.status == "optimal"
            assert solution.qp.kkt_residual <= 1e-9
            np.testing.assert_allclose(solution.P_hat, model.P, atol=1e-6)
            np.testing.assert_allclose(solution.pi_hat, stationary_distribution(model.P), atol=1e-6)

    def test_reference_model(self, two_state_model):
        moments = analytic_moments(two_state_model, "stationary")
        solution = solve_moment_matching(moments, two_state_model.B, default_bound(two_state_model))
        np.testing.assert_allclose(solution.P_hat, two_state_model.P, atol=1e-6)
        assert solution.renormalization < 1e-6
        np.testing.assert_allclose(solution.P_hat.sum(axis=1), 1.0, atol=1e-12)

    def test_empirical_moments_are_feasible_and_certified(self, two_state_model):
        obs = ObservationSequence(
            labels=np.random.default_rng(2).integers(0, 2, size=300), num_outputs=2
        )
        solution = solve_moment_matching(
            empirical_moments(obs), two_state_model.B, default_bound(two_state_model)
        )
        assert solution.qp.status == "optimal"
        assert solution.qp.kkt_residual <= 1e-9
        assert np.all(solution.A >= 0)
        assert np.all(solution.pi_hat >= default_bound(two_state_model).lower - 1e-12)

    def test_bound_constraint_binds(self, two_state_model):
        """🧪 Mass concentrated on one output pushes π against the lower bound."""
        moments = MomentMatrix(matrix=[[1.0, 0.0], [0.0, 0.0]], kind="empirical", num_pairs=10)
        bound = PolytopeBound(lower=[0.2, 0.2])
        solution = solve_moment_matching(moments, two_state_model.B, bound)
        assert solution.qp.kkt_residual <= 1e-9
        assert solution.pi_hat.min() == pytest.approx(0.2, abs=1e-9)

    def test_rank_deficient_B(self):
        B = np.array([[0.5, 0.5], [0.5, 0.5]])
        moments = MomentMatrix(matrix=np.full((2, 2), 0.25), kind="empirical", num_pairs=4)
        with pytest.raises(ModelValidationError, match="not strictly convex"):
            assemble_qp(moments, B, PolytopeBound(lower=[0.1, 0.1]))

    def test_bound_sum_above_one_is_rejected(self):
        with pytest.raises(ValueError):
            PolytopeBound(lower=[0.6, 0.6])

    def test_zero_bound_is_rejected(self):
        with pytest.raises(ValueError):
            PolytopeBound(lower=[0.0, 0.1])

    def test_qp_shape(self, two_state_model):
        moments = analytic_moments(two_state_model, "stationary")
        problem = assemble_qp(moments, two_state_model.B, PolytopeBound(lower=[0.1, 0.1]))
        assert problem.Q.shape == (4, 4)
        assert problem.D.shape == (2, 4)  # 𝟙ᵀx = 1 plus one flow-balance row
        assert problem.G.shape == (6, 4)
        assert min_eigenvalue(problem.Q) > 0


class TestBounds:
    def test_courtois_bound_contains_stationary_distribution(self):
        P = np.array([[0.7, 0.3], [0.4, 0.6]])
        bound = polytope_from_elementwise_P_bound(0.5 * P)
        pi = stationary_distribution(P)
        assert np.all(pi >= bound.lower - 1e-12)
        np.testing.assert_allclose(bound.vertices.sum(axis=0), 1.0)
        np.testing.assert_array_equal(bound.source_L, 0.5 * P)

    def test_courtois_rejects_unit_spectral_radius(self):
        with pytest.raises(ValueError):
            polytope_from_elementwise_P_bound(np.array([[0.7, 0.5], [0.6, 0.6]]))

    def test_courtois_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            polytope_from_elementwise_P_bound(np.array([[-0.1, 0.3], [0.4, 0.2]]))

    def test_daniel_bound_covers_the_actual_perturbation(self, two_state_model):
        moments = analytic_moments(two_state_model, "stationary")
        bound = default_bound(two_state_model)
        problem = assemble_qp(moments, two_state_model.B, bound)
        exact = solve_qp(problem)

        rng = np.random.default_rng(3)
        direction = rng.standard_normal(problem.q.size)
        shift = 0.1 * min_eigenvalue(problem.Q) * direction / np.linalg.norm(direction)
        perturbed = problem.model_copy(update={"q": problem.q + shift})
        moved = solve_qp(perturbed)

        limit = daniel_bound(problem.Q, problem.q, perturbed.q, exact.x)
        assert np.linalg.norm(moved.x - exact.x) <= limit

    def test_daniel_bound_rejects_large_perturbations(self, two_state_model):
        problem = assemble_qp(
            analytic_moments(two_state_model, "stationary"),
            two_state_model.B,
            default_bound(two_state_model),
        )
        shift = np.full(problem.q.size, min_eigenvalue(problem.Q))
        with pytest.raises(PerturbationTooLargeError):
            daniel_bound(problem.Q, problem.q, problem.q + shift, np.zeros(problem.q.size))


class TestQpAssembly:
    def test_matches_quadruple_loop_oracle(self, two_state_model):
        """🧪 Q and q from the element-wise expansion of ‖BᵀAB − M̂‖²_F."""
        B = two_state_model.B
        x, y = B.shape
        Mhat = analytic_moments(two_state_model, "stationary")
        problem = assemble_qp(Mhat, B, PolytopeBound(lower=[0.1, 0.1]))

        Q = np.zeros((x * x, x * x))
        q = np.zeros(x * x)
        for i in range(x):
            for j in range(x):
                for k in range(x):
                    for l in range(x):
                        left = sum(B[i, a] * B[k, a] for a in range(y))
                        right = sum(B[j, b] * B[l, b] for b in range(y))
                        Q[i + x * j, k + x * l] = 2.0 * left * right
                q[i + x * j] = 2.0 * sum(
                    B[i, a] * B[j, b] * Mhat.matrix[a, b] for a in range(y) for b in range(y)
                )

        np.testing.assert_allclose(problem.Q, Q, atol=1e-14)
        np.testing.assert_allclose(problem.q, q, atol=1e-14)

    def test_identity_sensor(self):
        Mhat = MomentMatrix(matrix=[[0.3, 0.2], [0.15, 0.35]], kind="empirical", num_pairs=100)
        problem = assemble_qp(Mhat, np.eye(2), PolytopeBound(lower=[0.1, 0.1]))
        np.testing.assert_allclose(problem.Q, 2.0 * np.eye(4))
        np.testing.assert_allclose(problem.q, 2.0 * vec(Mhat.matrix))

    def test_identity_sensor_with_feasible_moments(self):
        """🧪 M̂ already satisfies every constraint, so Â = M̂ with objective −‖M̂‖²."""
        Mhat = MomentMatrix(matrix=[[0.3, 0.2], [0.2, 0.3]], kind="empirical", num_pairs=100)
        solution = solve_moment_matching(Mhat, np.eye(2), PolytopeBound(lower=[0.1, 0.1]))
        np.testing.assert_allclose(solution.A, Mhat.matrix, atol=1e-12)
        assert solution.qp.objective == pytest.approx(-np.sum(Mhat.matrix**2), abs=1e-12)

    def test_single_state_single_output(self):
        Mhat = MomentMatrix(matrix=[[1.0]], kind="empirical", num_pairs=10)
        problem = assemble_qp(Mhat, np.eye(1), PolytopeBound(lower=[0.5]))
        np.testing.assert_allclose(problem.Q, [[2.0]])
        np.testing.assert_allclose(problem.q, [2.0])

        solution = solve_moment_matching(Mhat, np.eye(1), PolytopeBound(lower=[0.5]))
        np.testing.assert_allclose(solution.A, [[1.0]], atol=1e-12)
        np.testing.assert_allclose(solution.P_hat, [[1.0]])

    def test_stationary_pairs_are_feasible_with_equal_objective(self):
        """🧪 (π, P) feasible for the stationary formulation <-> A = diag(π)P feasible for the QP."""
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = int(rng.integers(2, 5))
            model = generate_random_system(x, x + 1, seed=rng)
            Mhat = MomentMatrix(
                matrix=rng.dirichlet(np.ones((x + 1) ** 2)).reshape(x + 1, x + 1),
                kind="empirical",
                num_pairs=1000,
            )
            P = rng.dirichlet(np.ones(x), size=x)
            pi = stationary_distribution(P)
            bound = PolytopeBound(lower=np.full(x, 0.5 * pi.min()))
            problem = assemble_qp(Mhat, model.B, bound)
            constant = np.sum(Mhat.matrix**2)

            A = pi[:, None] * P
            a = vec(A)
            assert np.all(problem.G @ a <= problem.g + 1e-12)
            np.testing.assert_allclose(problem.D @ a, problem.d, atol=1e-12)
            residual = model.B.T @ A @ model.B - Mhat.matrix
            assert problem.objective(a) + constant == pytest.approx(np.sum(residual**2), abs=1e-12)

            # a symmetric A balances its flows, so it maps back to a stationary pair
            S = rng.random((x, x))
            S = (S + S.T) / (S + S.T).sum()
            pi_back, P_back = recover_pi(S), recover_P(S)
            np.testing.assert_allclose(pi_back @ P_back, pi_back, atol=1e-12)
            np.testing.assert_allclose(P_back.sum(axis=1), 1.0, atol=1e-12)
            np.testing.assert_allclose(pi_back[:, None] * P_back, S, atol=1e-15)
            residual = model.B.T @ (pi_back[:, None] * P_back) @ model.B - Mhat.matrix
            assert problem.objective(vec(S)) + constant == pytest.approx(np.sum(residual**2), abs=1e-12)

    def test_empirical_moments_converge(self, two_state_model):
        obs, _ = sample(two_state_model, 100_001, seed=17)
        error = empirical_moments(obs).matrix - analytic_moments(two_state_model, "stationary").matrix
        assert np.linalg.norm(error) <= 0.02


class TestCourtoisBound:
    def test_zero_lower_bound_is_uninformative(self):
        with pytest.raises(ValueError):
            polytope_from_elementwise_P_bound(np.zeros((3, 3)))

    def test_uniform_lower_bound_is_symmetric(self):
        bound = polytope_from_elementwise_P_bound(0.05 * np.full((4, 4), 0.25))
        np.testing.assert_allclose(bound.lower, np.full(4, bound.lower[0]), atol=1e-15)
        assert bound.lower[0] > 0

    def test_hand_inverted_two_state_case(self):
        """🧪 (I − Lᵀ)⁻¹ = [[0.9, 0.1], [0.1, 0.9]] / 0.8; normalized columns are its vertices."""
        bound = polytope_from_elementwise_P_bound(np.full((2, 2), 0.1))
        np.testing.assert_allclose(bound.vertices, [[0.9, 0.1], [0.1, 0.9]], atol=1e-15)
        np.testing.assert_allclose(bound.lower, [0.1, 0.1], atol=1e-15)


class TestDanielBound:
    def test_zero_perturbation(self):
        q = np.array([0.4, -0.2])
        assert daniel_bound(2.0 * np.eye(2), q, q, np.array([1.0, 0.0])) == 0.0

    def test_scaled_identity(self):
        bound = daniel_bound(2.0 * np.eye(2), np.zeros(2), np.array([0.1, 0.0]), np.array([0.0, 1.0]))
        assert bound == pytest.approx(0.1 / 1.9 * 2.0)
        assert bound == pytest.approx(0.10526, abs=1e-5)
