import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import complex_normal
from core.exceptions import DimensionError
from core.linalg import (
    CoefMatrix,
    SparseColumn,
    frobenius,
    hermitian_matvec,
    matvec,
    normalize_columns,
    phase_unit,
    residual_norm2,
    sparse_axpy,
    sparse_vdot,
    synthesize,
    unit_columns,
)


def test_matvec_examples():
    assert np.allclose(matvec(np.eye(2), [1 + 1j, 2]), [1 + 1j, 2])
    assert np.array_equal(matvec(np.zeros((3, 2)), [5, 7]), np.zeros(3))
    assert np.array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3, 7])


def test_matvec_dimension_mismatch():
    with pytest.raises(DimensionError):
        matvec(np.eye(2), [1, 2, 3])
    with pytest.raises(DimensionError):
        hermitian_matvec(np.eye(2), [1, 2, 3])


def test_hermitian_matvec_examples():
    assert np.allclose(hermitian_matvec(np.eye(2), [1 + 1j, 2]), [1 + 1j, 2])
    M = np.array([[1j, 0], [0, 1j]])
    assert np.allclose(hermitian_matvec(M, [1, 1]), [-1j, -1j])


@given(st.integers(0, 2**32 - 1))
@settings(deadline=None)
def test_hermitian_matvec_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    M = complex_normal(rng, 3, 2)
    v = complex_normal(rng, 3)
    assert np.allclose(hermitian_matvec(M, v), M.conj().T @ v, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(deadline=None)
def test_adjoint_consistency(seed):
    rng = np.random.default_rng(seed)
    M = complex_normal(rng, 5, 4)
    u = complex_normal(rng, 4)
    v = complex_normal(rng, 5)
    lhs = np.vdot(v, matvec(M, u))
    rhs = np.vdot(hermitian_matvec(M, v), u)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(st.integers(0, 2**32 - 1))
@settings(deadline=None)
def test_frobenius_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    A = complex_normal(rng, 4, 3)
    B = complex_normal(rng, 4, 3)
    assert frobenius(A + B) <= frobenius(A) + frobenius(B) + 1e-12
    assert frobenius(np.zeros((2, 2))) == 0


def test_phase_unit():
    z = np.array([0, 3 + 4j, -2, 1e-300j])
    p = phase_unit(z)
    assert p[0] == 1
    assert np.allclose(np.abs(p), 1.0, atol=1e-12)
    assert np.isclose(p[1], 0.6 + 0.8j)
    assert np.isclose(p[2], -1)


def test_sparse_column_invariants():
    with pytest.raises(ValueError):
        SparseColumn(4, [2, 1], [1, 1])
    with pytest.raises(DimensionError):
        SparseColumn(3, [0, 3], [1, 1])
    with pytest.raises(ValueError):
        SparseColumn(3, [0], [0])
    col = SparseColumn.from_dense([0, 2j, 0, -1])
    assert list(col.support) == [1, 3]
    assert col.nnz == 2
    assert np.array_equal(col.densify(), [0, 2j, 0, -1])
    assert SparseColumn.empty(5).is_zero()


def test_sparse_column_does_not_alias_caller_arrays():
    support = np.array([0, 2])
    values = np.array([1.0 + 0j, 2.0 + 0j])
    col = SparseColumn(3, support, values)
    values[0] = 9.0
    assert col.values[0] == 1.0
    assert support.flags.writeable


def test_sparse_axpy_examples():
    acc = np.ones(3, dtype=complex)
    assert np.array_equal(sparse_axpy(0, SparseColumn(3, [1], [3]), acc), acc)
    assert np.array_equal(sparse_axpy(2, SparseColumn.empty(3), acc), acc)
    assert np.array_equal(sparse_axpy(2, SparseColumn(3, [1], [3]), acc), [1, 7, 1])
    # not in place unless asked
    assert np.array_equal(acc, np.ones(3))


@given(st.integers(0, 2**32 - 1))
@settings(deadline=None)
def test_sparse_axpy_and_vdot_match_dense(seed):
    rng = np.random.default_rng(seed)
    a = complex_normal(rng, 8) * (rng.random(8) < 0.5)
    b = complex_normal(rng, 8) * (rng.random(8) < 0.5)
    acc = complex_normal(rng, 8)
    ca, cb = SparseColumn.from_dense(a), SparseColumn.from_dense(b)
    alpha = complex(rng.standard_normal(), rng.standard_normal())
    out = sparse_axpy(alpha, ca, acc)
    assert np.array_equal(out[ca.support], acc[ca.support] + alpha * a[ca.support])
    assert np.allclose(out, acc + alpha * a)
    assert np.isclose(sparse_vdot(ca, cb), np.vdot(a, b))


@given(st.integers(0, 2**32 - 1))
@settings(deadline=None)
def test_coef_matrix_products_match_dense(seed):
    rng = np.random.default_rng(seed)
    N, J = 7, 4
    dense = complex_normal(rng, N, J) * (rng.random((N, J)) < 0.4)
    C = CoefMatrix(dense)
    w = complex_normal(rng, J)
    c = SparseColumn.from_dense(complex_normal(rng, N) * (rng.random(N) < 0.5))
    assert C.nnz == np.count_nonzero(dense)
    assert np.allclose(C.combine(w), dense @ w)
    assert np.allclose(C.hermitian_product(c), dense.conj().T @ c.densify())
    assert np.allclose(C.to_sparse().toarray(), dense)
    assert np.array_equal(C.to_dense(), dense)
    assert np.isclose(C.max_abs(), np.abs(dense).max(initial=0.0))
    assert np.isclose(C.l1_norm(), np.abs(dense).sum())


def test_coef_matrix_set_column_and_copy():
    C = CoefMatrix.zeros(4, 2)
    snapshot = C.copy()
    C.set_column(1, SparseColumn(4, [0, 3], [1j, 2]))
    assert C.nnz == 2
    assert snapshot.nnz == 0
    assert np.allclose(C.combine([0, 1]), [1j, 0, 0, 2])
    assert np.isclose(C.distance(snapshot), np.sqrt(5))
    C.set_column(1, SparseColumn.empty(4))
    assert C.nnz == 0
    with pytest.raises(DimensionError):
        C.set_column(0, SparseColumn.empty(3))


def test_coef_matrix_from_codes_conjugates():
    codes = [SparseColumn(3, [2], [1j]), SparseColumn.empty(3)]
    C = CoefMatrix.from_codes(codes, 3)
    assert C.shape == (2, 3)
    assert C.to_dense()[0, 2] == -1j
    assert CoefMatrix.from_codes([SparseColumn.empty(3)], 3).nnz == 0


def test_synthesize_matches_outer_product_sum(rng):
    n, N, J = 4, 6, 3
    D = complex_normal(rng, n, J)
    dense = complex_normal(rng, N, J) * (rng.random((N, J)) < 0.5)
    expected = sum(np.outer(D[:, j], dense[:, j].conj()) for j in range(J))
    assert np.allclose(synthesize(D, CoefMatrix(dense)), expected)
    assert np.allclose(synthesize(D, dense), expected)
    Y = complex_normal(rng, n, N)
    assert np.isclose(residual_norm2(Y, D, CoefMatrix(dense)), np.linalg.norm(Y - expected) ** 2)


def test_normalize_columns_with_zero_column():
    M = np.array([[3.0, 0.0], [4.0, 0.0]])
    out = normalize_columns(M)
    assert np.allclose(out[:, 0], [0.6, 0.8])
    assert np.array_equal(out[:, 1], [1, 0])
    assert unit_columns(out)
    assert not unit_columns(M)
