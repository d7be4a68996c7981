"""
SOUP Reconstruction Module
Dictionary-blind image reconstruction (SOUP-DILLO MRI / SOUP-DILLI MRI):
alternate SOUP learning on the current patches with an exact image update
"""
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Union

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import ConvergenceError, DimensionError, ParameterError
from .learning import (
    DictionaryInit,
    Feasibility,
    LearnConfig,
    LearnState,
    initial_state,
    os_dl,
    feasibility,
    penalty_value,
    soup_dillo,
)
from .linalg import ArrayLike, CoefMatrix, as_complex_matrix, residual_norm2, synthesize
from .metrics import psnr
from .patches import PatchGeometry, aggregate_patches, extract_patches, overlap_weights
from .sensing import LinearOperator, MeasurementOperator, SamplingMask
from .thresholding import L0CodeParams, L1CodeParams

logger = logging.getLogger(__name__)

CodeMatrix = Union[np.ndarray, scipy.sparse.spmatrix]


class ReconConfig(BaseModel):
    """Parameters of one dictionary-blind reconstruction.

    `weight_schedule` holds lambda_t (penalty "l0") or mu_t (penalty "l1")
    for each outer iteration.
    """

    model_config = ConfigDict(frozen=True)

    nu: float = Field(gt=0)
    penalty: Literal["l0", "l1"] = "l0"
    weight_schedule: List[float]
    inner_learn_iters: int = Field(default=5, ge=1)
    outer_iters: int = Field(ge=0)
    geom: PatchGeometry
    num_atoms: int = Field(ge=1)
    cap: float = Field(default=1e8, gt=0)
    solver: Literal["fourier", "cg"] = "fourier"
    cg_tol: float = Field(default=1e-10, gt=0)
    cg_max_iters: int = Field(default=500, ge=1)
    atom_order: Literal["cyclic", "random"] = "cyclic"
    dict_init: DictionaryInit = "dct"
    seed: int = 0
    track_fixed_objective: bool = False

    @model_validator(mode="after")
    def _schedule_matches(self):
        if len(self.weight_schedule) != self.outer_iters:
            raise ValueError(
                f"schedule has {len(self.weight_schedule)} entries for {self.outer_iters} outer iterations"
            )
        if any(w <= 0 for w in self.weight_schedule):
            raise ValueError("schedule weights must be positive")
        return self

    def penalty_at(self, t: int) -> Union[L0CodeParams, L1CodeParams]:
        weight = self.weight_schedule[t]
        if self.penalty == "l0":
            return L0CodeParams(lam=weight, cap=self.cap)
        return L1CodeParams(mu=weight)

    def final_penalty(self) -> Union[L0CodeParams, L1CodeParams]:
        return self.penalty_at(self.outer_iters - 1)


@dataclass
class ReconState:
    image: np.ndarray
    learn: LearnState
    objective_trace: List[float] = field(default_factory=list)
    psnr_trace: List[float] = field(default_factory=list)
    image_diff_trace: List[float] = field(default_factory=list)
    fixed_objective_trace: List[float] = field(default_factory=list)
    feasibility_trace: List[Feasibility] = field(default_factory=list)

    def copy(self) -> "ReconState":
        return ReconState(
            image=np.array(self.image, copy=True),
            learn=self.learn.copy(),
            objective_trace=list(self.objective_trace),
            psnr_trace=list(self.psnr_trace),
            image_diff_trace=list(self.image_diff_trace),
            fixed_objective_trace=list(self.fixed_objective_trace),
            feasibility_trace=list(self.feasibility_trace),
        )


def linear_schedule(start: float, stop: float, count: int) -> List[float]:
    return [float(v) for v in np.linspace(start, stop, count)]


def geometric_schedule(start: float, stop: float, count: int) -> List[float]:
    return [float(v) for v in np.geomspace(start, stop, count)]


def default_nu(num_pixels: int) -> float:
    return 1e6 / num_pixels


def _patch_synthesis(D: ArrayLike, X: CodeMatrix) -> np.ndarray:
    """D X for dense or sparse X (J x N)"""
    D = as_complex_matrix(D)
    if scipy.sparse.issparse(X):
        return np.asarray((X.T @ D.T).T)
    return D @ as_complex_matrix(X)


def codes_as_x(C: CoefMatrix) -> scipy.sparse.spmatrix:
    """X = C^H as a sparse J x N matrix"""
    return C.to_sparse().conj().T


def image_update_fourier(D: ArrayLike, X: CodeMatrix, z: ArrayLike, mask: SamplingMask,
                         nu: float, geom: PatchGeometry) -> np.ndarray:
    """Exact minimizer over y, solved per frequency.

    Needs sum_i P_i^T P_i = n I (stride 1 with wrap-around).
    """
    if geom.stride != 1 or not geom.wrap:
        raise ParameterError("the closed-form image update needs stride 1 with wrap-around; use the cg solver")
    A = MeasurementOperator(mask)
    if A.image_shape != (geom.image_h, geom.image_w):
        raise DimensionError(f"mask {A.image_shape} does not match geometry {geom.image_h}x{geom.image_w}")
    beta = float(geom.n)
    S = A.fourier.forward(aggregate_patches(_patch_synthesis(D, X), geom))
    S0 = A.embed(z)
    spectrum = np.where(mask.kept, (S + nu * S0) / (beta + nu), S / beta)
    return A.fourier.adjoint(spectrum)


def _normal_operator(A: LinearOperator, nu: float, geom: PatchGeometry) -> scipy.sparse.linalg.LinearOperator:
    shape = (geom.image_h, geom.image_w)
    p = geom.num_pixels

    def apply(v: np.ndarray) -> np.ndarray:
        y = np.asarray(v, dtype=np.complex128).reshape(shape)
        out = aggregate_patches(extract_patches(y, geom), geom) + nu * A.adjoint(A.forward(y))
        return out.ravel()

    return scipy.sparse.linalg.LinearOperator((p, p), matvec=apply, dtype=np.complex128)


def normal_equation_rhs(D: ArrayLike, X: CodeMatrix, z: ArrayLike, A: LinearOperator,
                        nu: float, geom: PatchGeometry) -> np.ndarray:
    """sum_i P_i^T D x_i + nu A^H z"""
    return aggregate_patches(_patch_synthesis(D, X), geom) + nu * A.adjoint(z)


def normal_equation_residual(y: ArrayLike, D: ArrayLike, X: CodeMatrix, z: ArrayLike,
                             A: LinearOperator, nu: float, geom: PatchGeometry) -> float:
    """||(sum P_i^T P_i + nu A^H A) y - rhs|| / ||rhs||"""
    rhs = normal_equation_rhs(D, X, z, A, nu, geom)
    lhs = _normal_operator(A, nu, geom).matvec(np.asarray(y, dtype=np.complex128).ravel())
    scale = np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs.ravel()) / (scale if scale > 0 else 1.0))


def image_update_cg(D: ArrayLike, X: CodeMatrix, z: ArrayLike, A: LinearOperator, nu: float,
                    geom: PatchGeometry, tol: float = 1e-10, max_iters: int = 500) -> np.ndarray:
    """Conjugate gradients on the normal equation from a zero start"""
    rhs = normal_equation_rhs(D, X, z, A, nu, geom).ravel()
    if not np.any(rhs):
        return np.zeros((geom.image_h, geom.image_w), dtype=np.complex128)
    op = _normal_operator(A, nu, geom)
    y, info = scipy.sparse.linalg.cg(op, rhs, x0=np.zeros_like(rhs), rtol=tol, atol=0.0, maxiter=max_iters)
    if info != 0:
        residual = float(np.linalg.norm(op.matvec(y) - rhs) / np.linalg.norm(rhs))
        raise ConvergenceError(
            f"CG stopped after {max_iters} iterations with relative residual {residual:.3e}",
            residual=residual,
            iterations=max_iters,
        )
    return y.reshape(geom.image_h, geom.image_w)


def recon_objective(y: ArrayLike, learn: LearnState, z: ArrayLike, A: LinearOperator,
                    nu: float, geom: PatchGeometry, penalty: Union[L0CodeParams, L1CodeParams]) -> float:
    """nu ||A y - z||^2 + ||P y - D X||_F^2 + penalty(X)"""
    data = A.forward(y) - np.asarray(z, dtype=np.complex128)
    Y = extract_patches(y, geom)
    fit = residual_norm2(Y, learn.dictionary, learn.coefs)
    return float(nu * np.vdot(data, data).real + fit + penalty_value(learn.coefs, penalty))


def initial_recon_state(z: ArrayLike, mask: SamplingMask, cfg: ReconConfig) -> ReconState:
    """y0 = A-dagger z, C0 = 0, D0 analytical"""
    A = MeasurementOperator(mask)
    if A.image_shape != (cfg.geom.image_h, cfg.geom.image_w):
        raise DimensionError(f"mask {A.image_shape} does not match the patch geometry")
    learn = initial_state(cfg.geom.n, cfg.geom.num_patches, cfg.num_atoms, cfg.dict_init, cfg.seed)
    return ReconState(image=A.adjoint(z), learn=learn)


def _reconstruct(z: ArrayLike, mask: SamplingMask, init: ReconState, cfg: ReconConfig,
                 reference: Optional[np.ndarray]) -> ReconState:
    A = MeasurementOperator(mask)
    geom = cfg.geom
    if A.image_shape != (geom.image_h, geom.image_w):
        raise DimensionError(f"mask {A.image_shape} does not match geometry {geom.image_h}x{geom.image_w}")
    z = np.asarray(z, dtype=np.complex128)
    state = init.copy()
    if cfg.outer_iters > 0 and cfg.solver == "fourier" and (geom.stride != 1 or not geom.wrap):
        raise ParameterError("the closed-form image update needs stride 1 with wrap-around; use the cg solver")
    learner = soup_dillo if cfg.penalty == "l0" else os_dl

    for t in range(cfg.outer_iters):
        penalty = cfg.penalty_at(t)
        Y = extract_patches(state.image, geom)
        learn_cfg = LearnConfig(
            num_atoms=cfg.num_atoms,
            penalty=penalty,
            iterations=cfg.inner_learn_iters,
            atom_order=cfg.atom_order,
            seed=cfg.seed + t,
        )
        state.learn = learner(Y, state.learn, learn_cfg)
        X = codes_as_x(state.learn.coefs)
        if cfg.solver == "fourier":
            image = image_update_fourier(state.learn.dictionary, X, z, mask, cfg.nu, geom)
        else:
            image = image_update_cg(state.learn.dictionary, X, z, A, cfg.nu, geom,
                                    cfg.cg_tol, cfg.cg_max_iters)
        state.image_diff_trace.append(float(np.linalg.norm(image - state.image)))
        state.image = image
        state.objective_trace.append(recon_objective(image, state.learn, z, A, cfg.nu, geom, penalty))
        if cfg.track_fixed_objective:
            state.fixed_objective_trace.append(
                recon_objective(image, state.learn, z, A, cfg.nu, geom, cfg.final_penalty())
            )
        cap = penalty.cap if isinstance(penalty, L0CodeParams) else None
        state.feasibility_trace.append(feasibility(state.learn.dictionary, state.learn.coefs, cap))
        if reference is not None:
            state.psnr_trace.append(psnr(image, reference))
        logger.info(
            "outer iteration %d/%d: weight=%.4g objective=%.6g dy=%.3g%s",
            t + 1, cfg.outer_iters, cfg.weight_schedule[t], state.objective_trace[-1],
            state.image_diff_trace[-1],
            f" psnr={state.psnr_trace[-1]:.2f} dB" if reference is not None else "",
        )
    return state


def soup_dillo_mri(z: ArrayLike, mask: SamplingMask, init: Optional[ReconState], cfg: ReconConfig,
                   reference: Optional[np.ndarray] = None) -> ReconState:
    """Dictionary-blind reconstruction with an aggregate l0 penalty"""
    if cfg.penalty != "l0":
        raise ParameterError("soup_dillo_mri needs penalty 'l0'")
    if init is None:
        init = initial_recon_state(z, mask, cfg)
    return _reconstruct(z, mask, init, cfg, reference)


def soup_dilli_mri(z: ArrayLike, mask: SamplingMask, init: Optional[ReconState], cfg: ReconConfig,
                   reference: Optional[np.ndarray] = None) -> ReconState:
    """Dictionary-blind reconstruction with an aggregate l1 penalty"""
    if cfg.penalty != "l1":
        raise ParameterError("soup_dilli_mri needs penalty 'l1'")
    if init is None:
        init = initial_recon_state(z, mask, cfg)
    return _reconstruct(z, mask, init, cfg, reference)


def reconstruct(z: ArrayLike, mask: SamplingMask, init: Optional[ReconState], cfg: ReconConfig,
                reference: Optional[np.ndarray] = None) -> ReconState:
    if cfg.penalty == "l0":
        return soup_dillo_mri(z, mask, init, cfg, reference)
    return soup_dilli_mri(z, mask, init, cfg, reference)
