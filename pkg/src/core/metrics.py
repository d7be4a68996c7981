"""
SOUP Metrics Module
Representation error, sparsity and reconstruction quality measures
"""
import math
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from .exceptions import DimensionError, UndefinedMetricError
from .linalg import ArrayLike, CoefMatrix, as_complex_matrix, residual_norm2

# reported in place of +inf when the reconstruction matches exactly
PSNR_CAP_DB = 300.0


class MetricReport(BaseModel):
    nsre_pct: float = Field(ge=0)
    sparsity_pct: float = Field(ge=0)
    psnr_db: Optional[float] = None
    objective: float


def nsre_from_fit(fit: float, data_norm2: float) -> float:
    """sqrt(||Y - D C^H||_F^2 / ||Y||_F^2)"""
    if data_norm2 <= 0:
        raise UndefinedMetricError("NSRE is undefined for all-zero data")
    return math.sqrt(max(fit, 0.0) / data_norm2)


def nsre(Y: ArrayLike, D: ArrayLike, C: Union[CoefMatrix, ArrayLike]) -> float:
    """||Y - D C^H||_F / ||Y||_F"""
    Y = as_complex_matrix(Y)
    return nsre_from_fit(residual_norm2(Y, D, C), float(np.vdot(Y, Y).real))


def nsre_db(value: float) -> float:
    return 20.0 * math.log10(value) if value > 0 else -math.inf


def sparsity_factor(C: Union[CoefMatrix, ArrayLike], n: int, N: int) -> float:
    """Total nonzeros / (n N)"""
    if n <= 0 or N <= 0:
        raise DimensionError(f"sparsity factor needs n, N > 0, got {n}, {N}")
    nnz = C.nnz if isinstance(C, CoefMatrix) else int(np.count_nonzero(np.asarray(C)))
    return nnz / (n * N)


def psnr(recon: ArrayLike, ref: ArrayLike) -> float:
    """20 log10(max|ref| / rms(|recon| - |ref|)), computed on magnitudes"""
    recon = np.abs(np.asarray(recon))
    ref = np.abs(np.asarray(ref))
    if recon.shape != ref.shape:
        raise DimensionError(f"psnr: shapes {recon.shape} and {ref.shape}")
    peak = float(ref.max(initial=0.0))
    if peak == 0:
        raise UndefinedMetricError("PSNR is undefined for an all-zero reference")
    rms = float(np.sqrt(np.mean((recon - ref) ** 2)))
    if rms == 0:
        return PSNR_CAP_DB
    return min(20.0 * math.log10(peak / rms), PSNR_CAP_DB)


def metric_report(Y: ArrayLike, D: ArrayLike, C: CoefMatrix, objective: float,
                  recon: Optional[ArrayLike] = None, ref: Optional[ArrayLike] = None) -> MetricReport:
    Y = as_complex_matrix(Y)
    n, N = Y.shape
    return MetricReport(
        nsre_pct=100.0 * nsre(Y, D, C),
        sparsity_pct=100.0 * sparsity_factor(C, n, N),
        psnr_db=psnr(recon, ref) if recon is not None and ref is not None else None,
        objective=objective,
    )
