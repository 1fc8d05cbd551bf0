"""
Moment matching: empirical second-order moments, the convex QP in
A = diag(pi_inf) P, recovery of (pi_inf, P) and bound helpers.

Vectorization is column-major throughout (vec stacks columns), so that
vec(Bᵀ A B) = (B ⊗ B)ᵀ vec(A).
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np

import constants as C
from .errors import (
    DegenerateMassError,
    ModelValidationError,
    MomentMatchingError,
    PerturbationTooLargeError,
)
from .models import MomentMatchSolution, MomentMatrix, ObservationSequence, PolytopeBound, QpProblem
from .qp import min_eigenvalue, solve_qp

logger = logging.getLogger(__name__)


def vec(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=float).flatten(order="F")


def unvec(vector: np.ndarray, rows: int) -> np.ndarray:
    return np.asarray(vector, dtype=float).reshape((rows, -1), order="F")


def empirical_moments(obs: ObservationSequence) -> MomentMatrix:
    """[M̂]_ij = (1/N) #{k < N : y_k = i, y_k+1 = j}, one pass over the labels."""
    if len(obs) < 2:
        raise ValueError("at least two observations are needed for pair moments")
    y = obs.num_outputs
    labels = obs.labels
    counts = np.bincount(labels[:-1] * y + labels[1:], minlength=y * y)
    matrix = counts.reshape((y, y)) / obs.num_pairs
    return MomentMatrix(matrix=matrix, kind="empirical", num_pairs=obs.num_pairs)


def _check_full_rank(B: np.ndarray) -> None:
    x, y = B.shape
    if x > y or np.linalg.svd(B, compute_uv=False)[-1] <= C.RANK_TOLERANCE:
        raise ModelValidationError("moment matching not strictly convex: rank(B) < X")


def assemble_qp(Mhat: MomentMatrix, B: np.ndarray, bound: PolytopeBound) -> QpProblem:
    B = np.asarray(B, dtype=float)
    x, y = B.shape
    if Mhat.num_outputs != y:
        raise ValueError(f"moment matrix is {Mhat.num_outputs}×{Mhat.num_outputs}, B has {y} outputs")
    if bound.lower.size != x:
        raise ValueError(f"bound has {bound.lower.size} entries, expected {x}")
    _check_full_rank(B)

    kron = np.kron(B, B)
    Q = 2.0 * kron @ kron.T
    Q = 0.5 * (Q + Q.T)
    q = 2.0 * kron @ vec(Mhat.matrix)

    n = x * x
    row_sums = np.zeros((x, n))
    col_sums = np.zeros((x, n))
    for i in range(x):
        for j in range(x):
            row_sums[i, i + j * x] = 1.0  # A[i, j]
            col_sums[i, j + i * x] = 1.0  # A[j, i]

    # (A − Aᵀ)𝟙 = 0 has rank X − 1; the last row is dropped
    D = np.vstack([np.ones((1, n)), (row_sums - col_sums)[: x - 1]])
    d = np.concatenate([[1.0], np.zeros(x - 1)])
    G = np.vstack([-np.eye(n), -row_sums])
    g = np.concatenate([np.zeros(n), -bound.lower])

    return QpProblem(Q=Q, q=q, G=G, g=g, D=D, d=d)


def recover_pi(A: np.ndarray) -> np.ndarray:
    """pi_inf = A𝟙."""
    pi = np.asarray(A, dtype=float).sum(axis=1)
    if np.any(pi <= 0):
        raise DegenerateMassError(
            f"degenerate stationary mass: row {int(np.argmin(pi))} of A sums to {pi.min():.3e}"
        )
    return pi


def recover_P(A: np.ndarray) -> np.ndarray:
    """P = diag(A𝟙)⁻¹ A."""
    A = np.asarray(A, dtype=float)
    return A / recover_pi(A)[:, None]


def solve_moment_matching(
    Mhat: MomentMatrix,
    B: np.ndarray,
    bound: PolytopeBound,
    tol: float = C.QP_TOLERANCE,
    dump_kkt: Optional[Path] = None,
) -> MomentMatchSolution:
    problem = assemble_qp(Mhat, B, bound)
    solution = solve_qp(problem, tol=tol, dump_kkt=dump_kkt)

    if solution.status == "infeasible":
        raise MomentMatchingError(
            f"moment-matching QP infeasible (violation {solution.infeasibility:.3e}); "
            f"lower bound sum {bound.lower.sum():.4g} too large?"
        )
    if solution.status != "optimal":
        logger.warning(
            f"⚠️ moment-matching QP ended with status '{solution.status}' "
            f"(KKT residual {solution.kkt_residual:.2e}); using best iterate."
        )

    x = B.shape[0]
    A = np.clip(unvec(solution.x, x), 0.0, None)
    pi_hat = recover_pi(A)
    P_hat = A / pi_hat[:, None]

    row_sums = P_hat.sum(axis=1)
    correction = float(np.max(np.abs(row_sums - 1.0)))
    P_hat = P_hat / row_sums[:, None]
    if correction > C.RENORMALIZATION_LOG_THRESHOLD:
        logger.warning(f"P_hat rows renormalized (largest correction {correction:.3e}).")

    logger.debug(
        f"Moment matching solved in {solution.iterations} iterations, objective {solution.objective:.6e}"
    )
    return MomentMatchSolution(
        A=A, pi_hat=pi_hat, P_hat=P_hat, qp=solution, renormalization=correction
    )


def polytope_from_elementwise_P_bound(L: np.ndarray) -> PolytopeBound:
    """
    Elementwise bound from the vertices of the polyhedron spanned by the
    normalized columns of (I − Lᵀ)⁻¹, given L <= P elementwise.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"L must be square, got shape {L.shape}")
    if np.any(L < 0):
        raise ValueError("L must be nonnegative")
    radius = np.max(np.abs(np.linalg.eigvals(L.T)))
    if radius >= 1.0:
        raise ValueError(f"spectral radius of Lᵀ is {radius:.4g} >= 1")

    x = L.shape[0]
    try:
        inverse = np.linalg.solve(np.eye(x) - L.T, np.eye(x))
    except np.linalg.LinAlgError as e:
        raise ValueError("I − Lᵀ is singular") from e

    vertices = inverse / inverse.sum(axis=0, keepdims=True)
    lower = vertices.min(axis=1)
    logger.debug(f"Courtois vertices:\n{vertices}\nlower bound {lower}")
    return PolytopeBound(lower=lower, vertices=vertices, source_L=L)


def daniel_bound(
    Q: np.ndarray, q_true: np.ndarray, q_hat: np.ndarray, x_true: np.ndarray
) -> float:
    """δ/(λ_min(Q) − δ)·(1 + ‖x*‖₂) with δ = ‖q_true − q_hat‖₂."""
    delta = float(np.linalg.norm(np.asarray(q_true) - np.asarray(q_hat)))
    lam = min_eigenvalue(Q)
    if lam <= delta:
        raise PerturbationTooLargeError(
            f"perturbation too large for bound: λ_min={lam:.3e} <= δ={delta:.3e}"
        )
    return delta / (lam - delta) * (1.0 + float(np.linalg.norm(x_true)))
