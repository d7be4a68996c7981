"""
SOUP Learning Module
Sum-of-outer-products dictionary learning by block coordinate descent:
SOUP-DILLO (l0 penalty) and OS-DL (l1 penalty)
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Literal, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .exceptions import DegenerateAtomError, DimensionError, ParameterError
from .linalg import (
    ArrayLike,
    CoefMatrix,
    SparseColumn,
    as_complex_matrix,
    as_complex_vector,
    hermitian_matvec,
    normalize_columns,
    residual_norm2,
    sparse_axpy,
    sparse_vdot,
    unit_columns,
)
from .thresholding import L0CodeParams, L1CodeParams, sparse_code_l0, sparse_code_l1, threshold_ties

logger = logging.getLogger(__name__)

Penalty = Union[L0CodeParams, L1CodeParams]
DictionaryInit = Literal["dct", "dct+random"]


class LearnConfig(BaseModel):
    """Parameters of one run of SOUP-DILLO or OS-DL"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    num_atoms: int = Field(ge=1)
    penalty: Penalty = Field(discriminator="kind")
    iterations: int = Field(ge=1)
    atom_order: Literal["cyclic", "random"] = "cyclic"
    seed: int = 0
    fallback_atom: Optional[np.ndarray] = None
    record_steps: bool = False

    @field_validator("fallback_atom", mode="before")
    @classmethod
    def _unit_fallback(cls, v):
        if v is None:
            return None
        v = np.array(v, dtype=np.complex128).reshape(-1)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("fallback_atom must have unit l2 norm")
        return v

    def fallback_for(self, n: int) -> np.ndarray:
        if self.fallback_atom is None:
            v = np.zeros(n, dtype=np.complex128)
            v[0] = 1.0
            return v
        if self.fallback_atom.shape[0] != n:
            raise DimensionError(f"fallback_atom has length {self.fallback_atom.shape[0]}, signals have {n}")
        return self.fallback_atom


@dataclass
class LearnState:
    """Iterates (D, C) plus per-iteration traces"""

    dictionary: np.ndarray
    coefs: CoefMatrix
    objective_trace: List[float] = field(default_factory=list)
    fit_trace: List[float] = field(default_factory=list)
    nnz_trace: List[int] = field(default_factory=list)
    dict_diff_trace: List[float] = field(default_factory=list)
    coef_diff_trace: List[float] = field(default_factory=list)
    step_trace: List[float] = field(default_factory=list)
    tie_count: int = 0

    def __post_init__(self):
        self.dictionary = np.array(as_complex_matrix(self.dictionary), copy=True)
        n, J = self.dictionary.shape
        if n == 0 or self.coefs.num_signals == 0:
            raise ParameterError("learning needs at least one signal of positive length")
        if self.coefs.num_atoms != J:
            raise DimensionError(f"dictionary has {J} atoms, coefficients have {self.coefs.num_atoms}")

    @property
    def signal_length(self) -> int:
        return self.dictionary.shape[0]

    @property
    def num_signals(self) -> int:
        return self.coefs.num_signals

    @property
    def num_atoms(self) -> int:
        return self.dictionary.shape[1]

    def copy(self) -> "LearnState":
        return LearnState(
            dictionary=self.dictionary,
            coefs=self.coefs.copy(),
            objective_trace=list(self.objective_trace),
            fit_trace=list(self.fit_trace),
            nnz_trace=list(self.nnz_trace),
            dict_diff_trace=list(self.dict_diff_trace),
            coef_diff_trace=list(self.coef_diff_trace),
            step_trace=list(self.step_trace),
            tie_count=self.tie_count,
        )


class Feasibility(NamedTuple):
    unit_norm_atoms: bool
    bounded_codes: bool


def overcomplete_dct(n: int, num_atoms: int) -> np.ndarray:
    """n x J separable overcomplete DCT for sqrt(n) x sqrt(n) patches"""
    side = math.isqrt(n)
    if side * side != n:
        raise ParameterError(f"signal length {n} is not a square patch size")
    k = math.ceil(math.sqrt(num_atoms))
    basis = np.zeros((side, k))
    for j in range(k):
        v = np.cos(np.arange(side) * j * np.pi / k)
        if j > 0:
            v = v - v.mean()
        basis[:, j] = v
    basis = normalize_columns(basis).real
    return normalize_columns(np.kron(basis, basis)[:, :num_atoms])


def dct_plus_random(n: int, num_atoms: int, seed: int = 0) -> np.ndarray:
    """Square DCT followed by normalized random Gaussian atoms"""
    square = overcomplete_dct(n, n)
    if num_atoms <= n:
        return square[:, :num_atoms]
    rng = np.random.default_rng(seed)
    extra = normalize_columns(rng.standard_normal((n, num_atoms - n)))
    return np.hstack([square, extra])


def initial_state(n: int, num_signals: int, num_atoms: int,
                  init: DictionaryInit = "dct", seed: int = 0) -> LearnState:
    """C = 0 and D from an analytical dictionary"""
    if n <= 0 or num_signals <= 0:
        raise ParameterError("learning needs at least one signal of positive length")
    if init == "dct":
        D = overcomplete_dct(n, num_atoms)
    elif init == "dct+random":
        D = dct_plus_random(n, num_atoms, seed)
    else:
        raise ParameterError(f"unknown dictionary init {init!r}")
    return LearnState(dictionary=D, coefs=CoefMatrix.zeros(num_signals, num_atoms))


def atom_update(Ec: ArrayLike, c_nonzero: bool, fallback: ArrayLike) -> np.ndarray:
    """Unit-norm minimizer of ||E_j - d c_j^H||_F: E_j c_j / ||E_j c_j||, or v when c_j = 0"""
    if not c_nonzero:
        return np.array(as_complex_vector(fallback), copy=True)
    Ec = as_complex_vector(Ec)
    norm = np.linalg.norm(Ec)
    if norm == 0:
        raise DegenerateAtomError("nonzero sparse code but E_j c_j = 0")
    return Ec / norm


def _check_shapes(Y: np.ndarray, D: np.ndarray, C: CoefMatrix, j: int) -> None:
    n, N = Y.shape
    if D.shape[0] != n:
        raise DimensionError(f"signals have length {n}, atoms have length {D.shape[0]}")
    if C.shape != (N, D.shape[1]):
        raise DimensionError(f"coefficients {C.shape} do not match {N} signals and {D.shape[1]} atoms")
    if not 0 <= j < D.shape[1]:
        raise DimensionError(f"atom index {j} out of range")


def compute_b(Y: ArrayLike, D: ArrayLike, C: CoefMatrix, j: int,
              d_prev: ArrayLike, c_prev: SparseColumn) -> np.ndarray:
    """E_j^H d = Y^H d - C D^H d + c_prev, without forming E_j"""
    Y = as_complex_matrix(Y)
    D = as_complex_matrix(D)
    _check_shapes(Y, D, C, j)
    d_prev = as_complex_vector(d_prev)
    b = hermitian_matvec(Y, d_prev) - C.combine(hermitian_matvec(D, d_prev))
    return sparse_axpy(1.0, c_prev, b, inplace=True)


def compute_h(Y: ArrayLike, D: ArrayLike, C: CoefMatrix, j: int,
              d_prev: ArrayLike, c_prev: SparseColumn, c_new: SparseColumn) -> np.ndarray:
    """E_j c_new = Y c_new - D C^H c_new + d_prev (c_prev^H c_new), touching only support(c_new)"""
    Y = as_complex_matrix(Y)
    D = as_complex_matrix(D)
    _check_shapes(Y, D, C, j)
    d_prev = as_complex_vector(d_prev)
    if c_new.length != Y.shape[1]:
        raise DimensionError(f"code of length {c_new.length} for {Y.shape[1]} signals")
    if c_new.is_zero():
        return np.zeros(Y.shape[0], dtype=np.complex128)
    h = Y[:, c_new.support] @ c_new.values
    h -= D @ C.hermitian_product(c_new)
    h += d_prev * sparse_vdot(c_prev, c_new)
    return h


def _nnz(C: Union[CoefMatrix, ArrayLike]) -> int:
    if isinstance(C, CoefMatrix):
        return C.nnz
    return int(np.count_nonzero(np.asarray(C)))


def _l1(C: Union[CoefMatrix, ArrayLike]) -> float:
    if isinstance(C, CoefMatrix):
        return C.l1_norm()
    return float(np.sum(np.abs(np.asarray(C))))


def objective_l0(Y: ArrayLike, D: ArrayLike, C: Union[CoefMatrix, ArrayLike], lam: float) -> float:
    """||Y - D C^H||_F^2 + lambda^2 ||C||_0"""
    return residual_norm2(Y, D, C) + lam ** 2 * _nnz(C)


def objective_l1(Y: ArrayLike, D: ArrayLike, C: Union[CoefMatrix, ArrayLike], mu: float) -> float:
    """||Y - D C^H||_F^2 + mu ||C||_1"""
    return residual_norm2(Y, D, C) + mu * _l1(C)


def penalty_value(C: Union[CoefMatrix, ArrayLike], penalty: Penalty) -> float:
    if isinstance(penalty, L0CodeParams):
        return penalty.lam ** 2 * _nnz(C)
    return penalty.mu * _l1(C)


def feasibility(D: ArrayLike, C: Union[CoefMatrix, ArrayLike], cap: Optional[float] = None,
                atol: float = 1e-10) -> Feasibility:
    """Constraint checks standing in for the barrier terms of the objective"""
    if isinstance(C, CoefMatrix):
        largest = C.max_abs()
    else:
        largest = float(np.max(np.abs(np.asarray(C)), initial=0.0))
    bounded = cap is None or largest <= cap
    return Feasibility(unit_columns(D, atol), bounded)


def _learn(Y: ArrayLike, init: LearnState, cfg: LearnConfig,
           code_step: Callable[[np.ndarray, LearnState], SparseColumn]) -> LearnState:
    Y = as_complex_matrix(Y)
    n, N = Y.shape
    if n == 0 or N == 0:
        raise ParameterError("learning needs at least one signal of positive length")
    state = init.copy()
    if state.dictionary.shape != (n, cfg.num_atoms) or state.coefs.shape != (N, cfg.num_atoms):
        raise DimensionError(
            f"initial state {state.dictionary.shape}/{state.coefs.shape} does not fit "
            f"{n}x{N} data with {cfg.num_atoms} atoms"
        )
    if not unit_columns(state.dictionary):
        raise ParameterError("initial dictionary columns must have unit norm")

    D = state.dictionary
    C = state.coefs
    fallback = cfg.fallback_for(n)
    rng = np.random.default_rng(cfg.seed)
    J = cfg.num_atoms

    def step_objective() -> float:
        return residual_norm2(Y, D, C) + penalty_value(C, cfg.penalty)

    for t in range(cfg.iterations):
        D_prev = D.copy()
        C_prev = C.copy()
        order = range(J) if cfg.atom_order == "cyclic" else rng.permutation(J)
        for j in order:
            d_prev = D[:, j].copy()
            c_prev = C.column(j)
            b = compute_b(Y, D, C, j, d_prev, c_prev)
            c_new = code_step(b, state)
            h = compute_h(Y, D, C, j, d_prev, c_prev, c_new)
            C.set_column(j, c_new)
            if cfg.record_steps:
                state.step_trace.append(step_objective())
            D[:, j] = atom_update(h, not c_new.is_zero(), fallback)
            if cfg.record_steps:
                state.step_trace.append(step_objective())

        fit = residual_norm2(Y, D, C)
        objective = fit + penalty_value(C, cfg.penalty)
        state.fit_trace.append(fit)
        state.nnz_trace.append(C.nnz)
        state.objective_trace.append(objective)
        state.dict_diff_trace.append(float(np.linalg.norm(D - D_prev)))
        state.coef_diff_trace.append(C.distance(C_prev))
        logger.info(
            "iteration %d/%d: objective=%.6g nnz=%d dD=%.3g dC=%.3g",
            t + 1, cfg.iterations, objective, C.nnz,
            state.dict_diff_trace[-1], state.coef_diff_trace[-1],
        )

    state.dictionary = D
    state.coefs = C
    return state


def soup_dillo(Y: ArrayLike, init: LearnState, cfg: LearnConfig) -> LearnState:
    """SOUP-DILLO: l0-penalized SOUP learning with truncated hard thresholding"""
    params = cfg.penalty
    if not isinstance(params, L0CodeParams):
        raise ParameterError("soup_dillo needs an l0 penalty")
    if init.coefs.max_abs() > params.cap:
        raise ParameterError("initial coefficients exceed the l_inf cap")

    def code_step(b: np.ndarray, state: LearnState) -> SparseColumn:
        ties = threshold_ties(b, params.lam)
        if ties:
            state.tie_count += ties
            logger.debug("%d entries of b sit exactly at lambda; sparse code is not unique", ties)
        return sparse_code_l0(b, params)

    return _learn(Y, init, cfg, code_step)


def os_dl(Y: ArrayLike, init: LearnState, cfg: LearnConfig) -> LearnState:
    """OS-DL: l1-penalized SOUP learning with soft thresholding"""
    params = cfg.penalty
    if not isinstance(params, L1CodeParams):
        raise ParameterError("os_dl needs an l1 penalty")
    return _learn(Y, init, cfg, lambda b, state: sparse_code_l1(b, params))


def learn(Y: ArrayLike, init: LearnState, cfg: LearnConfig) -> LearnState:
    """Dispatch on the penalty kind"""
    if isinstance(cfg.penalty, L0CodeParams):
        return soup_dillo(Y, init, cfg)
    return os_dl(Y, init, cfg)


def sparse_code_fixed_dictionary(Y: ArrayLike, D: ArrayLike, C0: CoefMatrix,
                                 params: L0CodeParams, sweeps: int) -> Tuple[CoefMatrix, List[float]]:
    """l0 block coordinate descent over the c_j with D held fixed"""
    Y = as_complex_matrix(Y)
    D = as_complex_matrix(D)
    if not unit_columns(D):
        raise ParameterError("dictionary columns must have unit norm")
    C = C0.copy()
    trace = []
    for sweep in range(sweeps):
        for j in range(D.shape[1]):
            b = compute_b(Y, D, C, j, D[:, j], C.column(j))
            C.set_column(j, sparse_code_l0(b, params))
        trace.append(objective_l0(Y, D, C, params.lam))
        logger.debug("coding sweep %d: objective=%.6g", sweep + 1, trace[-1])
    return C, trace
