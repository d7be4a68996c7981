"""
SOUP Thresholding Module
Closed-form solutions of the l0 and l1 sparse coding subproblems
"""
import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import ParameterError
from .linalg import ArrayLike, SparseColumn, as_complex_vector, phase_unit

logger = logging.getLogger(__name__)


class L0CodeParams(BaseModel):
    """Penalty weight lambda (threshold, penalty lambda^2 ||c||_0) and l_inf cap L"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: Literal["l0"] = "l0"
    lam: float = Field(alias="lambda", ge=0)
    cap: float = Field(default=1e8, gt=0)

    @model_validator(mode="after")
    def _cap_above_threshold(self):
        if not self.cap > self.lam:
            raise ValueError(f"cap L={self.cap} must exceed lambda={self.lam}")
        return self


class L1CodeParams(BaseModel):
    """Penalty weight mu of the l1 term"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["l1"] = "l1"
    mu: float = Field(ge=0)


def hard_threshold(b: ArrayLike, lam: float) -> np.ndarray:
    """H_lambda: zero entries with |b_i| < lambda, keep the rest (ties are kept)"""
    if lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    b = as_complex_vector(b)
    return np.where(np.abs(b) < lam, 0, b)


def soft_threshold(b: ArrayLike, thresh: float) -> np.ndarray:
    """Complex soft thresholding: shrink magnitudes by `thresh`, keep phases"""
    b = as_complex_vector(b)
    return np.maximum(np.abs(b) - thresh, 0.0) * phase_unit(b)


def sparse_code_l0(b: ArrayLike, params: L0CodeParams) -> SparseColumn:
    """Truncated hard thresholding: min(|H_lambda(b)|, L) * e^{j angle b}"""
    if not params.cap > params.lam:
        raise ParameterError(f"cap L={params.cap} must exceed lambda={params.lam}")
    b = as_complex_vector(b)
    mag = np.abs(b)
    # entries below the cap are copied from b, so |c_i| = |b_i| >= lambda holds exactly
    c = np.where(mag < params.lam, 0, b)
    over = mag > params.cap
    if np.any(over):
        c[over] = _clip_magnitude(b[over] * (params.cap / mag[over]), params.cap)
    return SparseColumn.from_dense(c)


def _clip_magnitude(v: np.ndarray, bound: float) -> np.ndarray:
    """Shrink entries a few ulps at a time until the computed |v_i| <= bound"""
    v = v.copy()
    for _ in range(64):
        over = np.abs(v) > bound
        if not np.any(over):
            return v
        v[over] *= 1.0 - 4 * np.finfo(float).eps
    raise ParameterError(f"could not bring code magnitudes under the cap {bound}")


def sparse_code_l1(b: ArrayLike, params: L1CodeParams) -> SparseColumn:
    """max(|b| - mu/2, 0) * e^{j angle b}"""
    if params.mu < 0:
        raise ParameterError(f"mu must be nonnegative, got {params.mu}")
    return SparseColumn.from_dense(soft_threshold(b, params.mu / 2.0))


def threshold_ties(b: ArrayLike, lam: float) -> int:
    """Number of entries with |b_i| exactly equal to lambda"""
    return int(np.count_nonzero(np.abs(as_complex_vector(b)) == lam))


def is_unique_l0(b: ArrayLike, lam: float) -> bool:
    """The l0 sparse coding minimizer is unique iff no |b_i| equals lambda"""
    return threshold_ties(b, lam) == 0


def l0_code_objective(c: ArrayLike, b: ArrayLike, lam: float) -> float:
    """|c - b|^2 + lambda^2 ||c||_0, the per-column l0 subproblem up to a constant"""
    c = as_complex_vector(c)
    b = as_complex_vector(b)
    return float(np.sum(np.abs(c - b) ** 2) + lam ** 2 * np.count_nonzero(c))


def l1_code_objective(c: ArrayLike, b: ArrayLike, mu: float) -> float:
    """|c - b|^2 + mu ||c||_1"""
    c = as_complex_vector(c)
    b = as_complex_vector(b)
    return float(np.sum(np.abs(c - b) ** 2) + mu * np.sum(np.abs(c)))
