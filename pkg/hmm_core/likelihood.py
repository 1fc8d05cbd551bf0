"""
Exact log-likelihood of an observation sequence under known B and pi0, with
exact gradient and Hessian in the minimal parametrization of P.

The forward recursion is normalized at every step:

    α̃_0 = pi0 ∘ b(y_0),  α̃_k+1 = (Pᵀ α̂_k) ∘ b(y_k+1),  c_k = 𝟙ᵀα̃_k,  α̂_k = α̃_k / c_k,

and l_N = Σ log c_k. First and second θ-derivatives of α̂ are carried
through the same recursion, so one pass over the data yields value,
gradient and Hessian.
"""

import logging
from typing import Callable, Tuple, Union

import numpy as np

import constants as C
from .errors import ImpossibleObservationError, InfeasibleThetaError
from .models import LikelihoodEvaluation, ObservationSequence, ThetaVector
from .ports import LikelihoodObjective

logger = logging.getLogger(__name__)

ThetaLike = Union[ThetaVector, np.ndarray]

# entries >= -FEASIBILITY_SLACK are treated as zero when rebuilding P
FEASIBILITY_SLACK = 1e-12


def num_states_for(dimension: int) -> int:
    x = int(round((1 + np.sqrt(1 + 4 * dimension)) / 2))
    if x * (x - 1) != dimension:
        raise ValueError(f"{dimension} is not of the form X(X-1)")
    return x


def _theta_array(theta: ThetaLike) -> np.ndarray:
    if isinstance(theta, ThetaVector):
        return np.asarray(theta.theta, dtype=float)
    return np.atleast_1d(np.asarray(theta, dtype=float))


def off_diagonal_pattern(num_states: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Row index I[m], column index J[m] of θ_m, and E[m] = e_J[m] − e_I[m]
    (so that ∂P/∂θ_m has +1 at (I, J) and −1 at (I, I)).
    """
    rows, cols = [], []
    for i in range(num_states):
        for j in range(num_states):
            if j != i:
                rows.append(i)
                cols.append(j)
    I = np.array(rows, dtype=np.int64)
    J = np.array(cols, dtype=np.int64)
    E = np.zeros((I.size, num_states))
    E[np.arange(I.size), J] += 1.0
    E[np.arange(I.size), I] -= 1.0
    return I, J, E


def theta_from_P(P: np.ndarray) -> ThetaVector:
    P = np.asarray(P, dtype=float)
    x = P.shape[0]
    I, J, _ = off_diagonal_pattern(x)
    return ThetaVector(theta=P[I, J], num_states=x)


def P_from_theta(theta: ThetaLike) -> np.ndarray:
    values = _theta_array(theta)
    x = theta.num_states if isinstance(theta, ThetaVector) else num_states_for(values.size)
    I, J, _ = off_diagonal_pattern(x)

    P = np.zeros((x, x))
    P[I, J] = values
    diagonal = 1.0 - P.sum(axis=1)
    P[np.arange(x), np.arange(x)] = diagonal

    if np.any(P < -FEASIBILITY_SLACK):
        row = int(np.argwhere(P < -FEASIBILITY_SLACK)[0][0])
        raise InfeasibleThetaError("theta outside the feasible region: negative transition probability", row)
    P = np.clip(P, 0.0, None)
    return P / P.sum(axis=1, keepdims=True)


def boundary_distance(theta: ThetaLike) -> float:
    """Smallest coordinate distance of θ to the feasible region's boundary."""
    values = _theta_array(theta)
    if values.size == 0:
        return float("inf")
    x = num_states_for(values.size)
    diagonal = 1.0 - values.reshape(x, x - 1).sum(axis=1)
    return float(min(values.min(), diagonal.min()))


def _observation_probabilities(B: np.ndarray, obs: ObservationSequence) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if obs.num_outputs != B.shape[1]:
        raise ValueError(f"observations use {obs.num_outputs} outputs, B has {B.shape[1]}")
    return B[:, obs.labels].T


def _total_loglik(scales: np.ndarray) -> float:
    return float(np.sum(np.log(scales), dtype=np.longdouble))


def forward_pass(
    P: np.ndarray, B: np.ndarray, pi0: np.ndarray, obs: ObservationSequence
) -> Tuple[float, np.ndarray]:
    """Scaled forward recursion on P directly; returns (l_N, scales)."""
    P = np.asarray(P, dtype=float)
    obs_probs = _observation_probabilities(B, obs)
    scales = np.empty(obs_probs.shape[0])

    alpha = np.asarray(pi0, dtype=float) * obs_probs[0]
    for k in range(obs_probs.shape[0]):
        if k:
            alpha = (alpha @ P) * obs_probs[k]
        c = alpha.sum()
        if c <= 0.0:
            raise ImpossibleObservationError(k)
        scales[k] = c
        alpha = alpha / c
    return _total_loglik(scales), scales


def log_likelihood(
    theta: ThetaLike, B: np.ndarray, pi0: np.ndarray, obs: ObservationSequence
) -> float:
    loglik, _ = forward_pass(P_from_theta(theta), B, pi0, obs)
    return loglik


def gradient_hessian(
    theta: ThetaLike, B: np.ndarray, pi0: np.ndarray, obs: ObservationSequence
) -> LikelihoodEvaluation:
    values = _theta_array(theta)
    P = P_from_theta(theta)
    x = P.shape[0]
    d = values.size
    I, _, E = off_diagonal_pattern(x)
    obs_probs = _observation_probabilities(B, obs)
    n = obs_probs.shape[0]

    scales = np.empty(n)
    # running sums of ∂c/c (first d entries) and ∂²c/c (the d² after them)
    score = np.zeros(d + d * d)
    outer_sum = np.zeros((d, d))

    # rows: α̂, then ∂α̂/∂θ_m, then ∂²α̂/∂θ_m∂θ_n at m·d + n
    state = np.zeros((1 + d + d * d, x))
    state[0] = np.asarray(pi0, dtype=float) * obs_probs[0]
    c = state[0].sum()
    if c <= 0.0:
        raise ImpossibleObservationError(0)
    scales[0] = c
    state[0] /= c

    first = slice(1, 1 + d)
    second = slice(1 + d, None)
    propagated = np.empty_like(state)

    for k in range(1, n):
        b = obs_probs[k]
        np.matmul(state, P, out=propagated)
        # dP_mᵀv = v[I_m] E_m adds the product-rule terms
        propagated[first] += state[0, I][:, None] * E
        cross = state[first][:, I].T[:, :, None] * E[:, None, :]  # [m, n] = ∂_n α̂[I_m] E_m
        cross = cross + cross.transpose(1, 0, 2)
        propagated[second] += cross.reshape(d * d, x)
        propagated *= b

        totals = propagated.sum(axis=1)
        c = totals[0]
        if c <= 0.0:
            raise ImpossibleObservationError(k)
        scales[k] = c
        dc = totals[first]
        score += totals[1:] / c
        outer_sum += np.outer(dc, dc) / (c * c)

        alpha = propagated[0] / c
        d_alpha = (propagated[first] - dc[:, None] * alpha) / c
        coupling = d_alpha[:, None, :] * dc[None, :, None]
        coupling = coupling + coupling.transpose(1, 0, 2)
        state[second] = (
            propagated[second]
            - coupling.reshape(d * d, x)
            - totals[second][:, None] * alpha
        ) / c
        state[first] = d_alpha
        state[0] = alpha

    gradient = score[:d].copy()
    hessian = score[d:].reshape(d, d) - outer_sum
    asymmetry = float(np.max(np.abs(hessian - hessian.T), initial=0.0))
    hessian = 0.5 * (hessian + hessian.T)
    return LikelihoodEvaluation(
        loglik=_total_loglik(scales),
        gradient=gradient,
        hessian=hessian,
        scales=scales,
        asymmetry=asymmetry,
    )


def central_gradient(func: Callable[[np.ndarray], float], theta: np.ndarray, h: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    gradient = np.zeros(theta.size)
    for m in range(theta.size):
        step = np.zeros(theta.size)
        step[m] = h
        gradient[m] = (func(theta + step) - func(theta - step)) / (2.0 * h)
    return gradient


def central_jacobian(
    func: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, h: float
) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    columns = []
    for m in range(theta.size):
        step = np.zeros(theta.size)
        step[m] = h
        columns.append((np.asarray(func(theta + step)) - np.asarray(func(theta - step))) / (2.0 * h))
    if not columns:
        return np.zeros((0, 0))
    jacobian = np.column_stack(columns)
    return 0.5 * (jacobian + jacobian.T)


def _check_step(theta: np.ndarray, h: float) -> None:
    distance = boundary_distance(theta)
    if h >= distance / C.FD_BOUNDARY_FACTOR:
        raise ValueError(
            f"finite-difference step {h:g} too close to the boundary (distance {distance:.3e})"
        )


def fd_gradient(
    theta: ThetaLike,
    B: np.ndarray,
    pi0: np.ndarray,
    obs: ObservationSequence,
    h: float = C.FD_GRADIENT_STEP,
) -> np.ndarray:
    values = _theta_array(theta)
    _check_step(values, h)
    return central_gradient(lambda t: log_likelihood(t, B, pi0, obs), values, h)


def fd_hessian(
    theta: ThetaLike,
    B: np.ndarray,
    pi0: np.ndarray,
    obs: ObservationSequence,
    h: float = C.FD_HESSIAN_STEP,
) -> np.ndarray:
    """Central differences of the exact gradient, symmetrized."""
    values = _theta_array(theta)
    _check_step(values, h)
    return central_jacobian(lambda t: gradient_hessian(t, B, pi0, obs).gradient, values, h)


def fisher_estimate(evaluation: LikelihoodEvaluation, N: int) -> np.ndarray:
    """Observed information −(1/N)∇²l_N; definiteness is logged, not enforced."""
    if N <= 0:
        raise ValueError("N must be positive")
    fisher = -evaluation.hessian / float(N)
    fisher = 0.5 * (fisher + fisher.T)
    if fisher.size and np.linalg.eigvalsh(fisher).min() <= 0:
        logger.warning("⚠️ Observed information is not positive definite.")
    return fisher


def forward_backward(
    P: np.ndarray, B: np.ndarray, pi0: np.ndarray, obs: ObservationSequence
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Scaled forward-backward pass. Returns (l_N, Σ_k ξ_k, Σ_k γ_k) with both
    sums over k = 0..N-1.
    """
    P = np.asarray(P, dtype=float)
    obs_probs = _observation_probabilities(B, obs)
    n, x = obs_probs.shape

    alphas = np.empty((n, x))
    scales = np.empty(n)
    alpha = np.asarray(pi0, dtype=float) * obs_probs[0]
    for k in range(n):
        if k:
            alpha = (alpha @ P) * obs_probs[k]
        c = alpha.sum()
        if c <= 0.0:
            raise ImpossibleObservationError(k)
        scales[k] = c
        alpha = alpha / c
        alphas[k] = alpha

    betas = np.empty((n, x))
    beta = np.ones(x)
    betas[-1] = beta
    for k in range(n - 2, -1, -1):
        beta = P @ (obs_probs[k + 1] * beta) / scales[k + 1]
        betas[k] = beta

    weighted = obs_probs[1:] * betas[1:] / scales[1:, None]
    transitions = P * (alphas[:-1].T @ weighted)
    visits = (alphas[:-1] * betas[:-1]).sum(axis=0)
    return _total_loglik(scales), transitions, visits


class HmmLikelihood(LikelihoodObjective):
    """Log-likelihood of one observation sequence under fixed B and pi0."""

    def __init__(self, B: np.ndarray, pi0: np.ndarray, obs: ObservationSequence):
        self.B = np.asarray(B, dtype=float)
        self.pi0 = np.asarray(pi0, dtype=float)
        self.obs = obs

    @property
    def num_states(self) -> int:
        return self.B.shape[0]

    def evaluate(self, theta: np.ndarray) -> LikelihoodEvaluation:
        return gradient_hessian(
            ThetaVector(theta=theta, num_states=self.num_states), self.B, self.pi0, self.obs
        )
