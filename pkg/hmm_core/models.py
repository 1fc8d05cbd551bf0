from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    field_validator,
    model_validator,
)

import constants as C

ArrayConfig = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def _frozen_array(value, dtype=float) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True)
    if dtype is float and not np.all(np.isfinite(array)):
        raise ValueError("array contains non-finite entries")
    array.setflags(write=False)
    return array


def _check_stochastic_rows(matrix: np.ndarray, name: str, tol: float) -> None:
    if np.any(matrix < -tol):
        raise ValueError(f"{name} has negative entries")
    row_sums = matrix.sum(axis=1)
    worst = int(np.argmax(np.abs(row_sums - 1.0)))
    if abs(row_sums[worst] - 1.0) > tol:
        raise ValueError(f"{name} row {worst} sums to {row_sums[worst]:.12g}")


class HmmModel(BaseModel):
    """
    Finite HMM: transition matrix P (X×X), observation matrix B (X×Y) and
    initial distribution pi0. Only shapes are enforced on construction; the
    probabilistic invariants are checked by `validate_model`.
    """

    model_config = ArrayConfig

    P: np.ndarray
    B: np.ndarray
    pi0: np.ndarray

    @field_validator("P", "B", "pi0", mode="before")
    @classmethod
    def _coerce(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_dimensions(self):
        if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1]:
            raise ValueError(f"P must be square, got shape {self.P.shape}")
        if self.B.ndim != 2 or self.B.shape[0] != self.P.shape[0]:
            raise ValueError(
                f"B must have {self.P.shape[0]} rows, got shape {self.B.shape}"
            )
        if self.pi0.shape != (self.P.shape[0],):
            raise ValueError(
                f"pi0 must have length {self.P.shape[0]}, got shape {self.pi0.shape}"
            )
        if self.P.shape[0] == 0 or self.B.shape[1] == 0:
            raise ValueError("model needs at least one state and one output")
        return self

    @property
    def num_states(self) -> int:
        return self.P.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.B.shape[1]


class ValidationReport(BaseModel):
    level: Literal["structural", "assumption1"]
    failures: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


class ObservationSequence(BaseModel):
    """Output labels y_0..y_N, 0-based."""

    model_config = ArrayConfig

    labels: np.ndarray
    num_outputs: PositiveInt

    @field_validator("labels", mode="before")
    @classmethod
    def _coerce(cls, value):
        array = np.asarray(value)
        if array.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if array.size and not np.issubdtype(array.dtype, np.integer):
            if not np.all(np.equal(np.mod(array, 1), 0)):
                raise ValueError("labels must be integers")
        return _frozen_array(array, dtype=np.int64)

    @model_validator(mode="after")
    def _check_range(self):
        if self.labels.size == 0:
            raise ValueError("observation sequence is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.num_outputs:
            raise ValueError(f"labels must lie in 0..{self.num_outputs - 1}")
        return self

    @property
    def num_pairs(self) -> int:
        return self.labels.size - 1

    def __len__(self) -> int:
        return self.labels.size

    def prefix(self, length: int) -> "ObservationSequence":
        return ObservationSequence(
            labels=self.labels[:length], num_outputs=self.num_outputs
        )


class MomentMatrix(BaseModel):
    """Joint probability (or frequency) matrix of consecutive output pairs."""

    model_config = ArrayConfig

    matrix: np.ndarray
    kind: Literal["analytic", "analytic-stationary", "empirical"]
    lag: Optional[NonNegativeInt] = None
    num_pairs: Optional[PositiveInt] = None

    @field_validator("matrix", mode="before")
    @classmethod
    def _coerce(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_probabilities(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"moment matrix must be square, got shape {m.shape}")
        if np.any(m < 0):
            raise ValueError("moment matrix has negative entries")
        total = m.sum()
        if abs(total - 1.0) > C.ROW_SUM_TOLERANCE * max(1, m.size):
            raise ValueError(f"moment matrix entries sum to {total:.15g}")
        return self

    @property
    def num_outputs(self) -> int:
        return self.matrix.shape[0]


class LumpedChain(BaseModel):
    """
    Markov chain on triples z = (y_k, y_k+1, x_k+1). State (i, j, l) has
    index i + Y*j + Y*Y*l (i fastest, then j, then l).
    """

    model_config = ArrayConfig

    T: np.ndarray
    num_states: PositiveInt
    num_outputs: PositiveInt

    @field_validator("T", mode="before")
    @classmethod
    def _coerce(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_stochastic(self):
        size = self.num_outputs * self.num_outputs * self.num_states
        if self.T.shape != (size, size):
            raise ValueError(f"T must be {size}×{size}, got {self.T.shape}")
        _check_stochastic_rows(self.T, "T", C.ROW_SUM_TOLERANCE)
        return self

    def state_index(self, i: int, j: int, l: int) -> int:
        y = self.num_outputs
        return i + y * j + y * y * l

    def is_primitive(self, power: Optional[int] = None) -> bool:
        """
        True when T**power > 0 elementwise. Without `power` the Wielandt bound
        (Z-1)**2 + 1 is used, which decides irreducible-and-aperiodic.
        """
        reach = (self.T > 0).astype(float)
        if power is not None:
            return bool(np.all(np.linalg.matrix_power(reach, power) > 0))
        limit = (reach.shape[0] - 1) ** 2 + 1
        current, reached = reach, 1
        while reached < limit and not current.all():
            current = ((current @ current) > 0).astype(float)
            reached *= 2
        return bool(current.all())


class PolytopeBound(BaseModel):
    """Elementwise lower bound A1 >= lower on the stationary distribution."""

    model_config = ArrayConfig

    lower: np.ndarray
    vertices: Optional[np.ndarray] = None
    source_L: Optional[np.ndarray] = None

    @field_validator("lower", "vertices", "source_L", mode="before")
    @classmethod
    def _coerce(cls, value):
        return None if value is None else _frozen_array(value)

    @field_validator("lower")
    @classmethod
    def _check_lower(cls, value: np.ndarray):
        if value.ndim != 1 or value.size == 0:
            raise ValueError("lower bound must be a non-empty vector")
        if np.any(value <= 0):
            raise ValueError("lower bound must be strictly positive (uninformative bound)")
        if value.sum() > 1.0 + C.ROW_SUM_TOLERANCE:
            raise ValueError(
                f"lower bound sums to {value.sum():.6g} > 1, polytope is empty"
            )
        return value


class QpProblem(BaseModel):
    """
    minimize ½xᵀQx − qᵀx subject to Gx <= g and Dx = d.
    Missing constraint blocks are empty.
    """

    model_config = ArrayConfig

    Q: np.ndarray
    q: np.ndarray
    G: np.ndarray
    g: np.ndarray
    D: np.ndarray
    d: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _fill_empty_blocks(cls, data):
        if isinstance(data, dict):
            n = np.asarray(data["q"]).size
            if data.get("G") is None:
                data = {**data, "G": np.zeros((0, n)), "g": np.zeros(0)}
            if data.get("D") is None:
                data = {**data, "D": np.zeros((0, n)), "d": np.zeros(0)}
        return data

    @field_validator("Q", "q", "G", "g", "D", "d", mode="before")
    @classmethod
    def _coerce(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_consistency(self):
        n = self.q.size
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be {n}×{n}, got {self.Q.shape}")
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > C.ROW_SUM_TOLERANCE * max(
            1.0, np.abs(self.Q).max(initial=0.0)
        ):
            raise ValueError("Q is not symmetric")
        G = self.G.reshape(0, n) if self.G.size == 0 and self.G.ndim != 2 else self.G
        D = self.D.reshape(0, n) if self.D.size == 0 and self.D.ndim != 2 else self.D
        if G.ndim != 2 or G.shape[1] != n or self.g.shape != (G.shape[0],):
            raise ValueError("inequality block has inconsistent dimensions")
        if D.ndim != 2 or D.shape[1] != n or self.d.shape != (D.shape[0],):
            raise ValueError("equality block has inconsistent dimensions")
        if D.shape[0] and np.linalg.matrix_rank(D) < D.shape[0]:
            raise ValueError("equality constraint matrix is not full row rank")
        object.__setattr__(self, "G", _frozen_array(G))
        object.__setattr__(self, "D", _frozen_array(D))
        return self

    @property
    def num_variables(self) -> int:
        return self.q.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x - self.q @ x)


class QpSolution(BaseModel):
    model_config = ArrayConfig

    x: np.ndarray
    objective: float
    status: Literal["optimal", "infeasible", "max_iter", "inaccurate"]
    mu: np.ndarray  # inequality multipliers, >= 0
    nu: np.ndarray  # equality multipliers
    stationarity: float
    primal_infeasibility: float
    complementarity: float
    iterations: NonNegativeInt
    working_set: List[int] = Field(default_factory=list)
    objective_trace: List[float] = Field(default_factory=list)
    dual_objective: Optional[float] = None
    infeasibility: float = 0.0  # phase-1 certificate: minimal total violation

    @property
    def kkt_residual(self) -> float:
        return max(self.stationarity, self.primal_infeasibility, self.complementarity)

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


class MomentMatchSolution(BaseModel):
    model_config = ArrayConfig

    A: np.ndarray
    pi_hat: np.ndarray
    P_hat: np.ndarray
    qp: QpSolution
    renormalization: float = 0.0  # largest row-sum correction applied to P_hat

    @property
    def objective(self) -> float:
        return self.qp.objective


class ThetaVector(BaseModel):
    """
    Off-diagonal entries of P row by row (j ascending, j != i); the diagonal
    entry of each row is 1 minus the row's free entries.
    """

    model_config = ArrayConfig

    theta: np.ndarray
    num_states: PositiveInt

    @field_validator("theta", mode="before")
    @classmethod
    def _coerce(cls, value):
        return _frozen_array(np.atleast_1d(np.asarray(value, dtype=float)))

    @model_validator(mode="after")
    def _check_length(self):
        expected = self.num_states * (self.num_states - 1)
        if self.theta.shape != (expected,):
            raise ValueError(f"theta must have length {expected}, got {self.theta.shape}")
        return self

    @property
    def dimension(self) -> int:
        return self.theta.size

    @property
    def diagonal(self) -> np.ndarray:
        x = self.num_states
        if x == 1:
            return np.ones(1)
        return 1.0 - self.theta.reshape(x, x - 1).sum(axis=1)

    @property
    def is_interior(self) -> bool:
        return bool(np.all(self.theta > 0) and np.all(self.diagonal > 0))


class LikelihoodEvaluation(BaseModel):
    model_config = ArrayConfig

    loglik: float
    gradient: np.ndarray
    hessian: np.ndarray
    scales: np.ndarray  # per-step normalizers c_k
    asymmetry: float = 0.0  # max |H - Hᵀ| before symmetrization

    @property
    def num_pairs(self) -> int:
        return self.scales.size - 1


class RegularizationPolicy(BaseModel):
    """H ← H − ρI with the smallest ρ in {0} ∪ {base·2^k} giving λ_max(H) <= −margin."""

    base: PositiveFloat = C.REGULARIZATION_BASE
    margin: PositiveFloat = C.NEGATIVE_DEFINITE_MARGIN
    max_doublings: PositiveInt = C.REGULARIZATION_MAX_DOUBLINGS


class NewtonDiagnostics(BaseModel):
    gradient_norm: float
    hessian_max_eigenvalue: float
    regularization: float
    non_nd_hessian: bool
    projected: bool
    step_norm: float
    qp_status: str
    active_constraints: List[int] = Field(default_factory=list)
    evaluation: LikelihoodEvaluation


MethodTag = Literal["MM", "2S", "EM", "EM-MM", "EM-True"]


class EstimationReport(BaseModel):
    """
    Outcome of one estimator run.

    `loglik`, `gradient_norm` and `hessian_negative_definite` are taken where
    `diagnostics_point` says: for 2S that is the MM point the Newton step
    starts from (no pass is made at the updated θ), for EM the final iterate.
    """

    model_config = ArrayConfig

    method: MethodTag
    P_hat: np.ndarray
    pi_hat: Optional[np.ndarray] = None
    theta_hat: np.ndarray
    loglik: Optional[float] = None
    gradient_norm: Optional[float] = None
    hessian_negative_definite: Optional[bool] = None
    non_nd_hessian: bool = False
    fisher: Optional[np.ndarray] = None
    regularization: float = 0.0
    iterations: Optional[NonNegativeInt] = None
    loglik_trace: List[float] = Field(default_factory=list)
    phase_seconds: Dict[str, float] = Field(default_factory=dict)
    data_passes: NonNegativeInt = 0
    qp_status: Optional[str] = None
    kkt_residual: Optional[float] = None
    diagnostics_point: Literal["estimate", "initial"] = "estimate"

    @model_validator(mode="after")
    def _check_report(self):
        _check_stochastic_rows(self.P_hat, "P_hat", 1e-10)
        if any(value < 0 for value in self.phase_seconds.values()):
            raise ValueError("phase timings must be non-negative")
        return self

    @property
    def total_seconds(self) -> float:
        return float(sum(self.phase_seconds.values()))

    def to_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {
            "method": self.method,
            "loglik": self.loglik,
            "gradient_norm": self.gradient_norm,
            "diagnostics_point": self.diagnostics_point,
            "non_nd_hessian": self.non_nd_hessian,
            "regularization": self.regularization,
            "iterations": self.iterations,
            "data_passes": self.data_passes,
            "seconds": self.total_seconds,
        }
        x = self.P_hat.shape[0]
        for i in range(x):
            for j in range(x):
                row[f"P_{i + 1}_{j + 1}"] = float(self.P_hat[i, j])
        return row

    def to_text(self) -> str:
        def vector(values) -> str:
            return ",".join(f"{v:.10g}" for v in np.ravel(values))

        def optional(value) -> str:
            return "-" if value is None else str(value)

        suffix = "_at_initial" if self.diagnostics_point == "initial" else ""
        lines = [
            f"method: {self.method}",
            f"P_hat: {';'.join(vector(row) for row in self.P_hat)}",
            f"pi_hat: {vector(self.pi_hat) if self.pi_hat is not None else '-'}",
            f"theta_hat: {vector(self.theta_hat) if self.theta_hat.size else '-'}",
            f"loglik{suffix}: {optional(self.loglik)}",
            f"gradient_norm{suffix}: {optional(self.gradient_norm)}",
            f"hessian_negative_definite{suffix}: {optional(self.hessian_negative_definite)}",
            f"non_nd_hessian: {self.non_nd_hessian}",
            f"regularization: {self.regularization:.3g}",
            f"iterations: {optional(self.iterations)}",
            f"data_passes: {self.data_passes}",
        ]
        if self.fisher is not None:
            lines.append(
                f"fisher: {';'.join(vector(row) for row in np.atleast_2d(self.fisher))}"
            )
        if self.qp_status is not None:
            lines.append(f"qp_status: {self.qp_status}")
        if self.kkt_residual is not None:
            lines.append(f"kkt_residual: {self.kkt_residual:.3e}")
        for phase, seconds in self.phase_seconds.items():
            lines.append(f"seconds_{phase}: {seconds:.6f}")
        return "\n".join(lines)


class BenchmarkConfig(BaseModel):
    num_states: PositiveInt
    num_outputs: PositiveInt
    sample_sizes: List[int] = Field(default_factory=lambda: list(C.DEFAULT_SAMPLE_SIZES))
    replicates: PositiveInt = C.DEFAULT_REPLICATES
    master_seed: NonNegativeInt = C.DEFAULT_MASTER_SEED
    arms: List[MethodTag] = Field(default_factory=lambda: list(C.ALL_METHODS))
    bound_policy: Literal["tenth-of-min-stationary"] = C.DEFAULT_BOUND_POLICY
    em_tol: PositiveFloat = C.EM_TOLERANCE
    em_max_iter: PositiveInt = C.EM_MAX_ITER
    output_dir: Path = Path("results")
    workers: PositiveInt = 1

    @field_validator("sample_sizes")
    @classmethod
    def _check_sizes(cls, value: List[int]):
        if not value:
            raise ValueError("at least one sample size is required")
        if any(size < 2 for size in value):
            raise ValueError("sample sizes must be at least 2")
        return sorted(set(value))

    @field_validator("arms")
    @classmethod
    def _check_arms(cls, value: List[str]):
        if not value:
            raise ValueError("at least one estimator arm is required")
        return [arm for arm in C.ALL_METHODS if arm in value]


class BenchmarkRow(BaseModel):
    N: PositiveInt
    rmse: Dict[str, float] = Field(default_factory=dict)
    seconds: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_values(self):
        for value in list(self.rmse.values()) + list(self.seconds.values()):
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"benchmark value {value} is not finite and >= 0")
        return self

    def to_dict(self) -> Dict[str, float]:
        row: Dict[str, float] = {C.N_COLUMN_NAME: self.N}
        for arm, column in C.ARM_COLUMNS.items():
            row[column] = self.rmse.get(arm, np.nan)
        for arm, column in C.ARM_COLUMNS.items():
            row[f"{column}{C.TIME_SUFFIX}"] = self.seconds.get(arm, np.nan)
        return row
