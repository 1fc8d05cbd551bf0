"""
Model validation, simulation, stationary analysis, analytic second-order
moments and the lumped (y_k, y_k+1, x_k+1) chain.
"""

import logging
from typing import Literal, Optional, Tuple, Union

import numpy as np

import constants as C
from .errors import ModelValidationError, NoStationaryDistributionError
from .models import (
    HmmModel,
    LumpedChain,
    MomentMatrix,
    ObservationSequence,
    ValidationReport,
)

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """
    Every stochastic operation draws from numpy's PCG64 `default_rng`; passing
    an existing Generator shares its stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _stochastic_failures(matrix: np.ndarray, name: str) -> list:
    failures = []
    if np.any(matrix < 0):
        rows, cols = np.nonzero(matrix < 0)
        failures.append(f"{name}[{rows[0]},{cols[0]}] is negative")
    for i, total in enumerate(matrix.sum(axis=1)):
        if abs(total - 1.0) > C.ROW_SUM_TOLERANCE:
            failures.append(f"{name} row {i} sum {total:.12g}")
    return failures


def validate_model(
    model: HmmModel, level: Literal["structural", "assumption1"] = "structural"
) -> ValidationReport:
    if level not in ("structural", "assumption1"):
        raise ValueError(f"unknown validation level '{level}'")

    failures = _stochastic_failures(model.P, "P") + _stochastic_failures(model.B, "B")
    if np.any(model.pi0 < 0):
        failures.append("pi0 has negative entries")
    if abs(model.pi0.sum() - 1.0) > C.ROW_SUM_TOLERANCE:
        failures.append(f"pi0 sum {model.pi0.sum():.12g}")

    if level == "assumption1":
        if not np.all(model.P > 0):
            failures.append("P is not strictly positive")
        if not np.all(model.B > 0):
            failures.append("B is not strictly positive")
        if model.num_states > model.num_outputs:
            failures.append(
                f"rank(B) < X: {model.num_outputs} outputs for {model.num_states} states"
            )
        else:
            sigma_min = np.linalg.svd(model.B, compute_uv=False)[-1]
            if sigma_min <= C.RANK_TOLERANCE:
                failures.append(f"rank(B) < X: smallest singular value {sigma_min:.3e}")

    report = ValidationReport(level=level, failures=failures)
    if report.failures:
        logger.debug(f"Model failed {level} validation: {report.failures}")
    return report


def require_valid(model: HmmModel, level: Literal["structural", "assumption1"]) -> None:
    report = validate_model(model, level)
    if not report.passed:
        raise ModelValidationError(f"{level} validation failed: {'; '.join(report.failures)}")


def sample(
    model: HmmModel, n_obs: int, seed: SeedLike = None
) -> Tuple[ObservationSequence, np.ndarray]:
    """
    Draws x_0 ~ pi0, x_k+1 ~ P[x_k], y_k ~ B[x_k]. Returns the observations
    and the hidden state path; the result depends only on the seed.
    """
    if n_obs < 2:
        raise ValueError(f"n_obs must be at least 2, got {n_obs}")
    require_valid(model, "structural")

    rng = make_rng(seed)
    state_draws = rng.random(n_obs)
    output_draws = rng.random(n_obs)

    cum_pi0 = np.cumsum(model.pi0)
    cum_P = np.cumsum(model.P, axis=1)
    cum_B = np.cumsum(model.B, axis=1)
    last_state = model.num_states - 1

    states = np.empty(n_obs, dtype=np.int64)
    state = min(int(np.searchsorted(cum_pi0, state_draws[0], side="right")), last_state)
    states[0] = state
    for k in range(1, n_obs):
        state = min(
            int(np.searchsorted(cum_P[state], state_draws[k], side="right")), last_state
        )
        states[k] = state

    labels = (cum_B[states] <= output_draws[:, None]).sum(axis=1)
    labels = np.minimum(labels, model.num_outputs - 1)

    return ObservationSequence(labels=labels, num_outputs=model.num_outputs), states


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """
    Solves [(Pᵀ − I); 𝟙ᵀ] π = [0; 1] in the least-squares sense.
    """
    P = np.asarray(P, dtype=float)
    x = P.shape[0]
    system = np.vstack([P.T - np.eye(x), np.ones((1, x))])
    rhs = np.zeros(x + 1)
    rhs[-1] = 1.0

    pi, _, rank, _ = np.linalg.lstsq(system, rhs, rcond=None)
    residual = np.max(np.abs(system @ pi - rhs))
    if rank < x or residual > 1e-9:
        raise NoStationaryDistributionError(
            f"no unique stationary distribution (rank {rank}/{x}, residual {residual:.2e})"
        )
    if np.any(pi < -1e-10):
        raise NoStationaryDistributionError(
            "no unique stationary distribution (negative mass in the solution)"
        )
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def analytic_moments(
    model: HmmModel, k: Union[int, Literal["stationary"]] = "stationary"
) -> MomentMatrix:
    """M_k = Bᵀ diag((Pᵀ)^k pi0) P B, or with pi_inf for k='stationary'."""
    require_valid(model, "structural")
    if k == "stationary":
        state_marginal = stationary_distribution(model.P)
        kind, lag = "analytic-stationary", None
    else:
        if int(k) < 0:
            raise ValueError(f"lag must be nonnegative, got {k}")
        state_marginal = np.linalg.matrix_power(model.P.T, int(k)) @ model.pi0
        kind, lag = "analytic", int(k)

    matrix = model.B.T @ (state_marginal[:, None] * model.P) @ model.B
    return MomentMatrix(matrix=matrix, kind=kind, lag=lag)


def lumped_chain(model: HmmModel) -> LumpedChain:
    """
    T[(i,j,l) -> (i',j',l')] = 1{i'=j} P[l,l'] B[l',j'], enumerated with i
    fastest, then j, then l.
    """
    require_valid(model, "structural")
    x, y = model.num_states, model.num_outputs
    # weights[l, j', l'] = P[l, l'] * B[l', j']
    weights = model.P[:, None, :] * model.B.T[None, :, :]

    transitions = np.zeros((y, y, x, y, y, x))
    for j in range(y):
        transitions[:, j, :, j, :, :] = weights[None, :, :, :]

    size = y * y * x
    T = transitions.reshape((size, size), order="F")
    return LumpedChain(T=T, num_states=x, num_outputs=y)


def marginal_pair_distribution(chain: LumpedChain) -> np.ndarray:
    """Stationary law of the lumped chain summed over the hidden coordinate."""
    pi = stationary_distribution(chain.T)
    y = chain.num_outputs
    return pi.reshape((y, y, chain.num_states), order="F").sum(axis=2)
