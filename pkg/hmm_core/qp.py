"""
Dense primal active-set solver for strictly convex QPs

    minimize ½xᵀQx − qᵀx   subject to   Gx <= g,  Dx = d.

A feasible start comes from a phase-1 LP (minimum total violation, HiGHS);
its optimal value doubles as the infeasibility certificate. Each iteration
solves the equality-constrained subproblem on the working set through the
full KKT system. Ties (blocking constraint, most negative multiplier) are
broken by the lowest constraint index.
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg as sla
from scipy.optimize import linprog

import constants as C
from .errors import NumericalError
from .models import QpProblem, QpSolution

logger = logging.getLogger(__name__)


def min_eigenvalue(Q: np.ndarray) -> float:
    Q = np.asarray(Q, dtype=float)
    if Q.size == 0:
        return float("inf")
    sym = 0.5 * (Q + Q.T)
    return float(sla.eigh(sym, eigvals_only=True, subset_by_index=[0, 0])[0])


def max_eigenvalue(Q: np.ndarray) -> float:
    Q = np.asarray(Q, dtype=float)
    if Q.size == 0:
        return float("-inf")
    n = Q.shape[0]
    sym = 0.5 * (Q + Q.T)
    return float(sla.eigh(sym, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


def _phase_one(problem: QpProblem) -> Tuple[np.ndarray, float]:
    """Minimizes the total constraint violation; returns (x, violation)."""
    G, g, D, d = problem.G, problem.g, problem.D, problem.d
    n, m_in, m_eq = problem.num_variables, G.shape[0], D.shape[0]

    cost = np.concatenate([np.zeros(n), np.ones(m_in + 2 * m_eq)])
    A_ub = np.hstack([G, -np.eye(m_in), np.zeros((m_in, 2 * m_eq))]) if m_in else None
    A_eq = (
        np.hstack([D, np.zeros((m_eq, m_in)), np.eye(m_eq), -np.eye(m_eq)])
        if m_eq
        else None
    )
    bounds = [(None, None)] * n + [(0, None)] * (m_in + 2 * m_eq)

    result = linprog(
        cost,
        A_ub=A_ub,
        b_ub=g if m_in else None,
        A_eq=A_eq,
        b_eq=d if m_eq else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if result.status != 0:
        raise NumericalError(f"phase-1 LP failed: {result.message}")
    return np.asarray(result.x[:n]), float(result.fun)


def _constraint_matrix(problem: QpProblem, working: List[int]) -> Tuple[np.ndarray, np.ndarray]:
    A = np.vstack([problem.D, problem.G[working]])
    b = np.concatenate([problem.d, problem.g[working]])
    return A, b


def _initial_working_set(problem: QpProblem, x: np.ndarray) -> List[int]:
    slack = problem.g - problem.G @ x
    working: List[int] = []
    rank = np.linalg.matrix_rank(problem.D) if problem.D.shape[0] else 0
    for i in np.flatnonzero(slack <= C.QP_ACTIVE_TOLERANCE):
        candidate = working + [int(i)]
        A, _ = _constraint_matrix(problem, candidate)
        if A.shape[0] <= problem.num_variables and np.linalg.matrix_rank(A) > rank:
            working, rank = candidate, rank + 1
    return working


def _snap(problem: QpProblem, x: np.ndarray, working: List[int]) -> np.ndarray:
    """Least-norm correction making the working constraints hold exactly."""
    A, b = _constraint_matrix(problem, working)
    if A.shape[0] == 0:
        return x
    residual = A @ x - b
    return x - A.T @ np.linalg.solve(A @ A.T, residual)


def _kkt_matrix(Q: np.ndarray, A: np.ndarray) -> np.ndarray:
    m = A.shape[0]
    return np.block([[Q, A.T], [A, np.zeros((m, m))]])


def _solve_eqp(Q: np.ndarray, gradient: np.ndarray, A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Step p and multipliers λ with Qp + Aᵀλ = −gradient, Ap = 0."""
    n = Q.shape[0]
    kkt = _kkt_matrix(Q, A)
    rhs = np.concatenate([-gradient, np.zeros(A.shape[0])])
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        logger.warning("KKT matrix singular, falling back to least squares.")
        solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return solution[:n], solution[n:]


def _residuals(
    problem: QpProblem, x: np.ndarray, mu: np.ndarray, nu: np.ndarray
) -> Tuple[float, float, float]:
    Q, q, G, g, D, d = problem.Q, problem.q, problem.G, problem.g, problem.D, problem.d
    stationarity = np.max(np.abs(Q @ x - q + G.T @ mu + D.T @ nu), initial=0.0)
    violation = np.max(G @ x - g, initial=0.0)
    eq_violation = np.max(np.abs(D @ x - d), initial=0.0)
    complementarity = np.max(np.abs(mu * (G @ x - g)), initial=0.0)
    return float(stationarity), float(max(violation, eq_violation, 0.0)), float(complementarity)


def _dual_objective(problem: QpProblem, mu: np.ndarray, nu: np.ndarray) -> float:
    Q, q, G, g, D, d = problem.Q, problem.q, problem.G, problem.g, problem.D, problem.d
    x = np.linalg.solve(Q, q - G.T @ mu - D.T @ nu)
    return float(0.5 * x @ Q @ x - q @ x + mu @ (G @ x - g) + nu @ (D @ x - d))


def _dump_kkt(path: Path, problem: QpProblem, working: List[int], x: np.ndarray) -> None:
    A, b = _constraint_matrix(problem, working)
    kkt = _kkt_matrix(problem.Q, A)
    rhs = np.concatenate([problem.q - problem.Q @ x, np.zeros(A.shape[0])])
    frame = pd.DataFrame(kkt, columns=[f"k{j}" for j in range(kkt.shape[1])])
    frame["rhs"] = rhs
    frame.to_csv(path, index=False)
    logger.debug(f"KKT system ({kkt.shape[0]} rows) dumped to {path}")


def solve_qp(
    problem: QpProblem,
    tol: float = C.QP_TOLERANCE,
    max_iter: int = C.QP_MAX_ITER,
    x0: Optional[np.ndarray] = None,
    dump_kkt: Optional[Path] = None,
) -> QpSolution:
    Q, q, G, g = problem.Q, problem.q, problem.G, problem.g
    n, m_in, m_eq = problem.num_variables, G.shape[0], problem.D.shape[0]

    if n == 0:
        infeasible = bool(np.any(g < -tol)) or bool(np.any(np.abs(problem.d) > tol))
        return QpSolution(
            x=np.zeros(0),
            objective=0.0,
            status="infeasible" if infeasible else "optimal",
            mu=np.zeros(m_in),
            nu=np.zeros(m_eq),
            stationarity=0.0,
            primal_infeasibility=float(max(np.max(-g, initial=0.0), 0.0)),
            complementarity=0.0,
            iterations=0,
            dual_objective=0.0,
        )

    if x0 is None:
        if m_in or m_eq:
            x, violation = _phase_one(problem)
        else:
            x, violation = np.zeros(n), 0.0
        if violation > C.QP_PHASE1_TOLERANCE:
            logger.warning(f"QP infeasible: minimal total violation {violation:.3e}")
            mu, nu = np.zeros(m_in), np.zeros(m_eq)
            stationarity, primal, complementarity = _residuals(problem, x, mu, nu)
            return QpSolution(
                x=x,
                objective=problem.objective(x),
                status="infeasible",
                mu=mu,
                nu=nu,
                stationarity=stationarity,
                primal_infeasibility=primal,
                complementarity=complementarity,
                iterations=0,
                infeasibility=violation,
            )
    else:
        x = np.array(x0, dtype=float)
        violation = max(
            np.max(G @ x - g, initial=0.0),
            np.max(np.abs(problem.D @ x - problem.d), initial=0.0),
        )
        if violation > C.QP_PHASE1_TOLERANCE:
            raise ValueError(f"warm start violates the constraints by {violation:.3e}")

    working = _initial_working_set(problem, x)
    x = _snap(problem, x, working)
    trace = [problem.objective(x)]
    multipliers = np.zeros(m_eq + len(working))
    status = "max_iter"
    iteration = 0

    for iteration in range(1, max_iter + 1):
        A, _ = _constraint_matrix(problem, working)
        p, multipliers = _solve_eqp(Q, Q @ x - q, A)

        if np.max(np.abs(p), initial=0.0) <= C.QP_STEP_EPS * max(1.0, np.max(np.abs(x), initial=0.0)):
            x = x + p
            working_mu = multipliers[m_eq:]
            if working_mu.size == 0 or working_mu.min() >= -tol:
                status = "optimal"
                trace.append(problem.objective(x))
                break
            drop = working[int(np.argmin(working_mu))]
            working = [i for i in working if i != drop]
            logger.debug(f"QP iteration {iteration}: dropping constraint {drop}")
        else:
            alpha, blocking = 1.0, None
            Gp = G @ p
            for i in range(m_in):
                if i in working or Gp[i] <= C.QP_STEP_EPS:
                    continue
                ratio = max((g[i] - G[i] @ x) / Gp[i], 0.0)
                if ratio < alpha:
                    alpha, blocking = ratio, i
            x = x + alpha * p
            if blocking is not None:
                working = sorted(working + [blocking])
                logger.debug(f"QP iteration {iteration}: adding constraint {blocking} (step {alpha:.3e})")
        trace.append(problem.objective(x))
    else:
        logger.warning(f"QP reached max_iter={max_iter}; returning best iterate.")

    mu = np.zeros(m_in)
    nu = multipliers[:m_eq] if multipliers.size >= m_eq else np.zeros(m_eq)
    if status == "optimal":
        mu[working] = np.clip(multipliers[m_eq:], 0.0, None)
    stationarity, primal, complementarity = _residuals(problem, x, mu, nu)
    if status == "optimal" and max(stationarity, primal, complementarity) > tol:
        logger.warning(
            f"QP converged but KKT residuals exceed tol: "
            f"stationarity={stationarity:.2e}, primal={primal:.2e}, complementarity={complementarity:.2e}"
        )
        status = "inaccurate"

    if dump_kkt is not None:
        _dump_kkt(Path(dump_kkt), problem, working, x)

    dual_objective = _dual_objective(problem, mu, nu) if status == "optimal" else None
    return QpSolution(
        x=x,
        objective=problem.objective(x),
        status=status,
        mu=mu,
        nu=nu,
        stationarity=stationarity,
        primal_infeasibility=primal,
        complementarity=complementarity,
        iterations=iteration,
        working_set=list(working),
        objective_trace=trace,
        dual_objective=dual_objective,
        infeasibility=violation,
    )
