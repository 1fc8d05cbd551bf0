"""
Estimators of P under known B and pi0: moment matching (MM), moment matching
followed by one Newton-Raphson step on the log-likelihood (2S), and
Baum-Welch with B and pi0 held fixed (EM).
"""

import logging
import time
from pathlib import Path
from typing import Literal, Optional, Tuple

import numpy as np

import constants as C
from utils import format_matrix, format_seconds
from .errors import NoStationaryDistributionError, NumericalError, StarvedStateError
from .likelihood import (
    HmmLikelihood,
    P_from_theta,
    fisher_estimate,
    forward_backward,
    theta_from_P,
)
from .markov import stationary_distribution
from .models import (
    EstimationReport,
    MomentMatrix,
    NewtonDiagnostics,
    ObservationSequence,
    PolytopeBound,
    QpProblem,
    RegularizationPolicy,
    ThetaVector,
)
from .moments import empirical_moments, solve_moment_matching
from .ports import LikelihoodObjective
from .qp import max_eigenvalue, solve_qp

logger = logging.getLogger(__name__)


def _stationary_or_none(P: np.ndarray) -> Optional[np.ndarray]:
    try:
        return stationary_distribution(P)
    except NoStationaryDistributionError:
        logger.debug("Estimate has no unique stationary distribution.")
        return None


def estimate_mm(
    obs: ObservationSequence,
    B: np.ndarray,
    pi0: np.ndarray,
    bound: PolytopeBound,
    moments: Optional[MomentMatrix] = None,
    dump_kkt: Optional[Path] = None,
) -> EstimationReport:
    """
    Moment-matching estimate. `moments` replaces the empirical moments of
    `obs` (no pass over the data is made then). `dump_kkt` names a CSV file
    for the final KKT system of the QP.
    """
    start = time.perf_counter()
    if moments is None:
        moments = empirical_moments(obs)
        passes = 1
    else:
        passes = 0
    solution = solve_moment_matching(moments, B, bound, dump_kkt=dump_kkt)
    elapsed = time.perf_counter() - start

    logger.info(f"✅ MM estimate ready in {format_seconds(elapsed)} (QP: {solution.qp.status}).")
    return EstimationReport(
        method=C.METHOD_MM,
        P_hat=solution.P_hat,
        pi_hat=solution.pi_hat,
        theta_hat=theta_from_P(solution.P_hat).theta,
        phase_seconds={"moments": elapsed},
        data_passes=passes,
        qp_status=solution.qp.status,
        kkt_residual=solution.qp.kkt_residual,
    )


def project_interior(theta: ThetaVector, epsilon: float = C.BOUNDARY_PROJECTION) -> Tuple[ThetaVector, bool]:
    """Pulls θ off the boundary so every reconstructed entry of P is >= epsilon."""
    if theta.is_interior and boundary_margin(theta) >= epsilon:
        return theta, False
    x = theta.num_states
    rows = np.maximum(theta.theta.reshape(x, x - 1), epsilon)
    for i in range(x):
        free_mass = rows[i].sum()
        if free_mass > 1.0 - epsilon:
            rows[i] *= (1.0 - epsilon) / free_mass
    projected = ThetaVector(theta=rows.ravel(), num_states=x)
    logger.info(f"θ projected inward by {epsilon:g} before differentiation.")
    return projected, True


def boundary_margin(theta: ThetaVector) -> float:
    if theta.dimension == 0:
        return float("inf")
    return float(min(theta.theta.min(), theta.diagonal.min()))


def _regularize(hessian: np.ndarray, policy: RegularizationPolicy) -> Tuple[np.ndarray, float, float]:
    lam_max = max_eigenvalue(hessian)
    rho = 0.0
    if lam_max > -policy.margin:
        for k in range(policy.max_doublings + 1):
            rho = policy.base * 2.0**k
            if lam_max - rho <= -policy.margin:
                break
        else:
            raise NumericalError(
                f"Hessian regularization exhausted at ρ={rho:.3e} (λ_max={lam_max:.3e})"
            )
        logger.warning(
            f"⚠️ Hessian not negative definite (λ_max={lam_max:.3e}); regularized with ρ={rho:.3e}."
        )
    return hessian - rho * np.eye(hessian.shape[0]), rho, lam_max


def _step_problem(theta: ThetaVector, hessian: np.ndarray, gradient: np.ndarray) -> QpProblem:
    """
    minimize ½Δᵀ(−H)Δ − ∇ᵀΔ  s.t.  θ + Δ >= 0  and  row sums of θ + Δ <= 1.
    """
    x, d = theta.num_states, theta.dimension
    row_blocks = np.kron(np.eye(x), np.ones((1, x - 1)))
    G = np.vstack([-np.eye(d), row_blocks])
    g = np.concatenate([theta.theta, theta.diagonal])
    Q = -hessian
    return QpProblem(Q=0.5 * (Q + Q.T), q=gradient, G=G, g=g)


def newton_step(
    theta_init: ThetaVector,
    B: Optional[np.ndarray] = None,
    pi0: Optional[np.ndarray] = None,
    obs: Optional[ObservationSequence] = None,
    reg_policy: Optional[RegularizationPolicy] = None,
    objective: Optional[LikelihoodObjective] = None,
) -> Tuple[ThetaVector, NewtonDiagnostics]:
    """
    One Newton-Raphson step on the log-likelihood from theta_init, solved as
    a QP that keeps the reconstructed P nonnegative. Without active
    constraints this is θ − H⁻¹∇.
    """
    policy = reg_policy or RegularizationPolicy()
    if objective is None:
        if B is None or pi0 is None or obs is None:
            raise ValueError("B, pi0 and obs are required without an explicit objective")
        objective = HmmLikelihood(B, pi0, obs)

    theta, projected = project_interior(theta_init)
    evaluation = objective.evaluate(theta.theta)
    gradient = evaluation.gradient

    if theta.dimension == 0:
        diagnostics = NewtonDiagnostics(
            gradient_norm=0.0,
            hessian_max_eigenvalue=float("-inf"),
            regularization=0.0,
            non_nd_hessian=False,
            projected=projected,
            step_norm=0.0,
            qp_status="optimal",
            evaluation=evaluation,
        )
        return theta, diagnostics

    hessian, rho, lam_max = _regularize(evaluation.hessian, policy)
    problem = _step_problem(theta, hessian, gradient)
    solution = solve_qp(problem, x0=np.zeros(theta.dimension))
    if solution.status not in ("optimal", "inaccurate"):
        logger.warning(f"⚠️ Newton step QP ended with status '{solution.status}'.")

    step = solution.x
    P_new = P_from_theta(ThetaVector(theta=theta.theta + step, num_states=theta.num_states))
    theta_new = theta_from_P(P_new)

    diagnostics = NewtonDiagnostics(
        gradient_norm=float(np.linalg.norm(gradient)),
        hessian_max_eigenvalue=lam_max,
        regularization=rho,
        non_nd_hessian=rho > 0,
        projected=projected,
        step_norm=float(np.linalg.norm(step)),
        qp_status=solution.status,
        active_constraints=solution.working_set,
        evaluation=evaluation,
    )
    logger.debug(
        f"Newton step: |∇|={diagnostics.gradient_norm:.3e}, |Δ|={diagnostics.step_norm:.3e}, "
        f"active={solution.working_set}"
    )
    return theta_new, diagnostics


def estimate_two_step(
    obs: ObservationSequence,
    B: np.ndarray,
    pi0: np.ndarray,
    bound: PolytopeBound,
    moments: Optional[MomentMatrix] = None,
    objective: Optional[LikelihoodObjective] = None,
    reg_policy: Optional[RegularizationPolicy] = None,
    dump_kkt: Optional[Path] = None,
) -> EstimationReport:
    """MM estimate, then a single Newton step: two passes over the data."""
    mm = estimate_mm(obs, B, pi0, bound, moments=moments, dump_kkt=dump_kkt)

    start = time.perf_counter()
    theta_init = theta_from_P(mm.P_hat)
    theta_new, diagnostics = newton_step(
        theta_init, B, pi0, obs, reg_policy=reg_policy, objective=objective
    )
    evaluation = diagnostics.evaluation
    fisher = fisher_estimate(evaluation, max(obs.num_pairs, 1))
    P_hat = P_from_theta(theta_new)
    elapsed = time.perf_counter() - start

    if diagnostics.non_nd_hessian:
        logger.warning("⚠️ 2S estimate flagged: Hessian at the MM estimate was not negative definite.")
    logger.info(f"✅ 2S estimate ready (Newton phase {format_seconds(elapsed)}).")
    logger.debug(f"2S P_hat:\n{format_matrix(P_hat)}")

    return EstimationReport(
        method=C.METHOD_TWO_STEP,
        P_hat=P_hat,
        pi_hat=_stationary_or_none(P_hat),
        theta_hat=theta_new.theta,
        loglik=evaluation.loglik,
        gradient_norm=diagnostics.gradient_norm,
        hessian_negative_definite=not diagnostics.non_nd_hessian,
        non_nd_hessian=diagnostics.non_nd_hessian,
        fisher=fisher,
        regularization=diagnostics.regularization,
        phase_seconds={**mm.phase_seconds, "newton": elapsed},
        data_passes=mm.data_passes + 1,
        qp_status=mm.qp_status,
        kkt_residual=mm.kkt_residual,
        diagnostics_point="initial",
    )


EmMethod = Literal["EM", "EM-MM", "EM-True"]


def estimate_em(
    obs: ObservationSequence,
    B: np.ndarray,
    pi0: np.ndarray,
    P_init: np.ndarray,
    tol: float = C.EM_TOLERANCE,
    max_iter: int = C.EM_MAX_ITER,
    method: EmMethod = C.METHOD_EM,
) -> EstimationReport:
    """
    Baum-Welch with B and pi0 fixed. Stops when the log-likelihood improves
    by less than `tol` or after `max_iter` M-steps.
    """
    P = np.array(P_init, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != np.asarray(B).shape[0]:
        raise ValueError(f"P_init has shape {P.shape}, expected {np.asarray(B).shape[0]} square")
    if np.any(P <= 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > C.ROW_SUM_TOLERANCE * 10:
        raise ValueError("P_init must be row-stochastic and strictly positive")
    if len(obs) < 2:
        raise ValueError("at least two observations are needed for EM")

    start = time.perf_counter()
    loglik, transitions, visits = forward_backward(P, B, pi0, obs)
    trace = [loglik]
    passes, iterations = 1, 0

    while iterations < max_iter:
        starved = np.flatnonzero(visits <= 0)
        if starved.size:
            raise StarvedStateError(int(starved[0]))
        P = transitions / visits[:, None]
        P = P / P.sum(axis=1, keepdims=True)
        iterations += 1

        loglik, transitions, visits = forward_backward(P, B, pi0, obs)
        passes += 1
        trace.append(loglik)
        improvement = trace[-1] - trace[-2]
        logger.debug(f"EM iteration {iterations}: loglik={loglik:.10f} (Δ={improvement:.3e})")
        if improvement < -1e-9 * max(1.0, abs(loglik)):
            logger.warning(f"⚠️ EM log-likelihood decreased by {-improvement:.3e} at iteration {iterations}.")
        if improvement < tol:
            break
    elapsed = time.perf_counter() - start

    logger.info(f"✅ {method} finished after {iterations} iterations in {format_seconds(elapsed)}.")
    return EstimationReport(
        method=method,
        P_hat=P,
        pi_hat=_stationary_or_none(P),
        theta_hat=theta_from_P(P).theta,
        loglik=trace[-1],
        iterations=iterations,
        loglik_trace=trace,
        phase_seconds={"em": elapsed},
        data_passes=passes,
    )
