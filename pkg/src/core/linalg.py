"""
SOUP Linear Algebra Module
Complex dense/sparse primitives every other module builds on
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse

from .exceptions import DimensionError

ArrayLike = Union[np.ndarray, Sequence[complex]]


def as_complex_vector(v: ArrayLike) -> np.ndarray:
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {arr.shape}")
    return arr


def as_complex_matrix(M: ArrayLike) -> np.ndarray:
    arr = np.asarray(M, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {arr.shape}")
    return arr


def phase_unit(z: ArrayLike) -> np.ndarray:
    """Elementwise e^{j angle(z)}, with phase_unit(0) = 1"""
    z = np.asarray(z, dtype=np.complex128)
    mag = np.abs(z)
    out = np.ones_like(z)
    np.divide(z, mag, out=out, where=mag > 0)
    return out


def frobenius(M: ArrayLike) -> float:
    return float(np.linalg.norm(np.asarray(M)))


def matvec(M: ArrayLike, v: ArrayLike) -> np.ndarray:
    """M v, no conjugation"""
    M = as_complex_matrix(M)
    v = as_complex_vector(v)
    if M.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: {M.shape} matrix with length-{v.shape[0]} vector")
    return M @ v


def hermitian_matvec(M: ArrayLike, v: ArrayLike) -> np.ndarray:
    """M^H v, computed without materializing the conjugate transpose"""
    M = as_complex_matrix(M)
    v = as_complex_vector(v)
    if M.shape[0] != v.shape[0]:
        raise DimensionError(f"hermitian_matvec: {M.shape} matrix with length-{v.shape[0]} vector")
    return np.conj(np.conj(v) @ M)


@dataclass(frozen=True, eq=False)
class SparseColumn:
    """Sparse complex vector: sorted support plus aligned nonzero values"""

    length: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=np.intp).reshape(-1)
        values = np.array(self.values, dtype=np.complex128).reshape(-1)
        if support.shape != values.shape:
            raise DimensionError("support and values must have the same length")
        if support.size:
            if np.any(np.diff(support) <= 0):
                raise ValueError("support indices must be strictly increasing")
            if support[0] < 0 or support[-1] >= self.length:
                raise DimensionError(f"support index out of range for length {self.length}")
            if np.any(values == 0):
                raise ValueError("stored values must be nonzero")
        support.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls, length: int) -> "SparseColumn":
        return cls(length, np.empty(0, dtype=np.intp), np.empty(0, dtype=np.complex128))

    @classmethod
    def from_dense(cls, vec: ArrayLike) -> "SparseColumn":
        """Keep exactly-nonzero entries; small values are not dropped"""
        vec = as_complex_vector(vec)
        support = np.flatnonzero(vec)
        return cls(vec.shape[0], support, vec[support])

    @property
    def nnz(self) -> int:
        return int(self.support.size)

    def is_zero(self) -> bool:
        return self.support.size == 0

    def densify(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.complex128)
        out[self.support] = self.values
        return out


def sparse_axpy(alpha: complex, c: SparseColumn, acc: ArrayLike, inplace: bool = False) -> np.ndarray:
    """acc + alpha * c, touching only the support of c"""
    acc = np.asarray(acc, dtype=np.complex128)
    if acc.ndim != 1 or acc.shape[0] != c.length:
        raise DimensionError(f"sparse_axpy: column of length {c.length} with accumulator {acc.shape}")
    out = acc if inplace else acc.copy()
    if alpha != 0 and c.nnz:
        out[c.support] += alpha * c.values
    return out


def sparse_vdot(a: SparseColumn, b: SparseColumn) -> complex:
    """a^H b over the intersection of the two supports"""
    if a.length != b.length:
        raise DimensionError(f"sparse_vdot: lengths {a.length} and {b.length}")
    _, ia, ib = np.intersect1d(a.support, b.support, assume_unique=True, return_indices=True)
    return complex(np.vdot(a.values[ia], b.values[ib]))


class CoefMatrix:
    """N x J coefficient matrix C (row i is the conjugated code of signal i).

    Held column by column as SparseColumns. Products with C and C^H run over
    a flattened (signal, atom, value) view of the nonzeros that is rebuilt
    lazily after a column changes, so each costs O(nnz(C) + N + J).
    """

    def __init__(self, data: ArrayLike):
        data = as_complex_matrix(data)
        self._num_signals = data.shape[0]
        self._columns: List[SparseColumn] = [SparseColumn.from_dense(data[:, j]) for j in range(data.shape[1])]
        self._flat: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    @classmethod
    def _wrap(cls, num_signals: int, columns: Sequence[SparseColumn]) -> "CoefMatrix":
        out = cls.__new__(cls)
        out._num_signals = num_signals
        out._columns = list(columns)
        out._flat = None
        return out

    @classmethod
    def zeros(cls, num_signals: int, num_atoms: int) -> "CoefMatrix":
        return cls._wrap(num_signals, [SparseColumn.empty(num_signals)] * num_atoms)

    @classmethod
    def from_columns(cls, columns: Sequence[SparseColumn]) -> "CoefMatrix":
        if not columns:
            raise DimensionError("at least one column is required")
        N = columns[0].length
        if any(col.length != N for col in columns):
            raise DimensionError("columns must share a length")
        return cls._wrap(N, columns)

    @classmethod
    def from_sparse(cls, M: scipy.sparse.spmatrix) -> "CoefMatrix":
        M = scipy.sparse.csc_matrix(M, dtype=np.complex128)
        M.sum_duplicates()
        M.eliminate_zeros()
        M.sort_indices()
        columns = [
            SparseColumn(M.shape[0], M.indices[M.indptr[j]:M.indptr[j + 1]], M.data[M.indptr[j]:M.indptr[j + 1]])
            for j in range(M.shape[1])
        ]
        return cls._wrap(M.shape[0], columns)

    @classmethod
    def from_codes(cls, codes: Sequence[SparseColumn], num_atoms: int) -> "CoefMatrix":
        """Build C from per-signal codes x_i (length J), so that row i = x_i^H"""
        for i, code in enumerate(codes):
            if code.length != num_atoms:
                raise DimensionError(f"code {i} has length {code.length}, expected {num_atoms}")
        counts = [code.nnz for code in codes]
        if sum(counts):
            rows = np.repeat(np.arange(len(codes)), counts)
            atoms = np.concatenate([code.support for code in codes])
            values = np.conj(np.concatenate([code.values for code in codes]))
        else:
            rows = atoms = np.empty(0, dtype=np.intp)
            values = np.empty(0, dtype=np.complex128)
        return cls.from_sparse(scipy.sparse.coo_matrix((values, (rows, atoms)), shape=(len(codes), num_atoms)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self._num_signals, len(self._columns)

    @property
    def num_signals(self) -> int:
        return self._num_signals

    @property
    def num_atoms(self) -> int:
        return len(self._columns)

    @property
    def nnz(self) -> int:
        return int(sum(col.nnz for col in self._columns))

    def column(self, j: int) -> SparseColumn:
        return self._columns[j]

    def set_column(self, j: int, col: SparseColumn) -> None:
        if col.length != self._num_signals:
            raise DimensionError(f"column of length {col.length} for {self._num_signals} signals")
        self._columns[j] = col
        self._flat = None

    def _nonzeros(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(signal index, atom index, value) of every stored entry, atom-major"""
        if self._flat is None:
            counts = [col.nnz for col in self._columns]
            if sum(counts):
                rows = np.concatenate([col.support for col in self._columns])
                values = np.concatenate([col.values for col in self._columns])
            else:
                rows = np.empty(0, dtype=np.intp)
                values = np.empty(0, dtype=np.complex128)
            atoms = np.repeat(np.arange(self.num_atoms), counts)
            self._flat = (rows, atoms, values)
        return self._flat

    def combine(self, weights: ArrayLike) -> np.ndarray:
        """C w = sum_j w_j c_j"""
        w = as_complex_vector(weights)
        if w.shape[0] != self.num_atoms:
            raise DimensionError(f"combine: {self.num_atoms} atoms, {w.shape[0]} weights")
        rows, atoms, values = self._nonzeros()
        return _accumulate(rows, values * w[atoms], self._num_signals)

    def hermitian_product(self, col: SparseColumn) -> np.ndarray:
        """C^H c for a sparse c"""
        if col.length != self._num_signals:
            raise DimensionError(f"hermitian_product: column of length {col.length}")
        if col.is_zero():
            return np.zeros(self.num_atoms, dtype=np.complex128)
        rows, atoms, values = self._nonzeros()
        return _accumulate(atoms, np.conj(values) * col.densify()[rows], self.num_atoms)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.complex128)
        for j, col in enumerate(self._columns):
            out[col.support, j] = col.values
        return out

    def to_sparse(self) -> scipy.sparse.csc_matrix:
        rows, _, values = self._nonzeros()
        indptr = np.zeros(self.num_atoms + 1, dtype=np.intp)
        indptr[1:] = np.cumsum([col.nnz for col in self._columns])
        return scipy.sparse.csc_matrix((values, rows, indptr), shape=self.shape)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self._nonzeros()[2]), initial=0.0))

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self._nonzeros()[2])))

    def distance(self, other: "CoefMatrix") -> float:
        """||C - other||_F"""
        if other.shape != self.shape:
            raise DimensionError(f"distance: shapes {self.shape} and {other.shape}")
        diff = (self.to_sparse() - other.to_sparse()).tocsc()
        return float(np.linalg.norm(diff.data))

    def copy(self) -> "CoefMatrix":
        return CoefMatrix._wrap(self._num_signals, self._columns)


def _accumulate(index: np.ndarray, weights: np.ndarray, length: int) -> np.ndarray:
    """Complex scatter-add of `weights` into `length` bins"""
    return np.bincount(index, weights=weights.real, minlength=length) \
        + 1j * np.bincount(index, weights=weights.imag, minlength=length)


def synthesize(D: ArrayLike, C: Union[CoefMatrix, ArrayLike]) -> np.ndarray:
    """D C^H = sum_j d_j c_j^H, using the sparsity of C"""
    D = as_complex_matrix(D)
    if isinstance(C, CoefMatrix):
        if C.num_atoms != D.shape[1]:
            raise DimensionError(f"synthesize: D has {D.shape[1]} atoms, C has {C.num_atoms}")
        return np.asarray((C.to_sparse().conj() @ D.T).T)
    C = as_complex_matrix(C)
    if C.shape[1] != D.shape[1]:
        raise DimensionError(f"synthesize: D has {D.shape[1]} atoms, C has {C.shape[1]}")
    return D @ np.conj(C).T


def residual_norm2(Y: ArrayLike, D: ArrayLike, C: Union[CoefMatrix, ArrayLike]) -> float:
    """||Y - D C^H||_F^2"""
    Y = as_complex_matrix(Y)
    R = Y - synthesize(D, C)
    return float(np.vdot(R, R).real)


def unit_columns(M: ArrayLike, atol: float = 1e-10) -> bool:
    norms = np.linalg.norm(as_complex_matrix(M), axis=0)
    return bool(np.all(np.abs(norms - 1.0) <= atol))


def normalize_columns(M: ArrayLike, fallback: Optional[np.ndarray] = None) -> np.ndarray:
    """Scale columns to unit norm; zero columns become `fallback` (default e_1)"""
    M = np.array(as_complex_matrix(M), copy=True)
    norms = np.linalg.norm(M, axis=0)
    if fallback is None:
        fallback = np.zeros(M.shape[0], dtype=np.complex128)
        fallback[0] = 1.0
    for j in np.flatnonzero(norms == 0):
        M[:, j] = fallback
    nz = norms > 0
    M[:, nz] /= norms[nz]
    return M
