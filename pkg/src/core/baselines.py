"""
SOUP Baselines Module
Column-wise greedy sparse coding (OMP) and least-squares debiasing of codes
"""
import logging
from typing import Dict, List, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from .exceptions import DimensionError
from .linalg import ArrayLike, CoefMatrix, SparseColumn, as_complex_matrix, as_complex_vector

logger = logging.getLogger(__name__)


class OmpParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    sparsity: int = Field(ge=1)
    err_tol: float = Field(default=1e-6, ge=0)


def omp_code(D: ArrayLike, y: ArrayLike, params: OmpParams,
             return_info: bool = False) -> Union[SparseColumn, Tuple[SparseColumn, Dict]]:
    """Orthogonal matching pursuit for one signal.

    Picks the atom of largest |<r, d_j>| (lowest index on ties), refits all
    selected coefficients by least squares, and stops at `sparsity` atoms or
    once ||r||^2 <= err_tol. Rank-deficient refits use the minimum-norm
    solution and are flagged in the info dict.
    """
    D = as_complex_matrix(D)
    y = as_complex_vector(y)
    n, J = D.shape
    if y.shape[0] != n:
        raise DimensionError(f"signal of length {y.shape[0]} for atoms of length {n}")

    selected: List[int] = []
    coeffs = np.empty(0, dtype=np.complex128)
    residual = y.copy()
    rank_deficient = False
    while len(selected) < min(params.sparsity, J) and np.vdot(residual, residual).real > params.err_tol:
        corr = np.abs(np.conj(np.conj(residual) @ D))
        corr[selected] = -1.0
        selected.append(int(np.argmax(corr)))
        coeffs, _, rank, _ = scipy.linalg.lstsq(D[:, selected], y)
        if rank < len(selected):
            rank_deficient = True
        residual = y - D[:, selected] @ coeffs

    if rank_deficient:
        logger.warning("OMP refit on a rank-deficient subdictionary; used the minimum-norm solution")
    order = np.argsort(selected)
    support = np.asarray(selected, dtype=np.intp)[order]
    values = np.asarray(coeffs, dtype=np.complex128)[order]
    keep = values != 0
    code = SparseColumn(J, support[keep], values[keep])
    if return_info:
        return code, {
            "rank_deficient": rank_deficient,
            "residual_norm2": float(np.vdot(residual, residual).real),
            "steps": len(selected),
        }
    return code


def omp_code_all(D: ArrayLike, Y: ArrayLike, params: OmpParams) -> CoefMatrix:
    """OMP on every column of Y; returns C with row i = x_i^H"""
    D = as_complex_matrix(D)
    Y = as_complex_matrix(Y)
    codes = [omp_code(D, Y[:, i], params) for i in range(Y.shape[1])]
    return CoefMatrix.from_codes(codes, D.shape[1])


def debias_codes(Y: ArrayLike, D: ArrayLike, C: CoefMatrix) -> CoefMatrix:
    """Least-squares re-estimate of each signal's nonzero coefficients on its fixed support"""
    Y = as_complex_matrix(Y)
    D = as_complex_matrix(D)
    if C.shape != (Y.shape[1], D.shape[1]):
        raise DimensionError(f"coefficients {C.shape} do not match data {Y.shape} and dictionary {D.shape}")
    rows = C.to_sparse().tocsr()
    rows.sort_indices()
    values = np.zeros(rows.nnz, dtype=np.complex128)
    for i in range(Y.shape[1]):
        span = slice(rows.indptr[i], rows.indptr[i + 1])
        support = rows.indices[span]
        if not support.size:
            continue
        x, *_ = scipy.linalg.lstsq(D[:, support], Y[:, i])
        values[span] = np.conj(x)
    refit = scipy.sparse.csr_matrix((values, rows.indices, rows.indptr), shape=C.shape)
    return CoefMatrix.from_sparse(refit)
