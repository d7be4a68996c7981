import logging
from itertools import combinations

import numpy as np
import pytest

from conftest import complex_normal, random_dictionary
from core.baselines import OmpParams, debias_codes, omp_code, omp_code_all
from core.exceptions import DimensionError
from core.linalg import CoefMatrix
from core.metrics import nsre


def test_omp_recovers_single_atoms(rng):
    D = random_dictionary(rng, 4, 6)
    Y = D[:, [2, 4]] * np.array([3.0, -1j])
    C = omp_code_all(D, Y, OmpParams(sparsity=1))
    assert C.nnz == 2
    assert nsre(Y, D, C) == pytest.approx(0.0, abs=1e-12)
    assert np.isclose(C.to_dense()[0, 2], 3.0)
    # rows hold x_i^H
    assert np.isclose(C.to_dense()[1, 4], 1j)


def test_omp_error_decreases_with_sparsity(rng):
    D = random_dictionary(rng, 8, 20)
    Y = complex_normal(rng, 8, 15)
    errors = [nsre(Y, D, omp_code_all(D, Y, OmpParams(sparsity=s, err_tol=0.0))) for s in range(1, 9)]
    assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))
    assert errors[-1] == pytest.approx(0.0, abs=1e-10)


def test_omp_breaks_ties_towards_lowest_index():
    code = omp_code(np.eye(3), [1.0, 1.0, 0.0], OmpParams(sparsity=1))
    assert list(code.support) == [0]
    assert np.isclose(code.values[0], 1.0)


def test_omp_stops_at_error_tolerance(rng):
    D = random_dictionary(rng, 5, 7)
    code, info = omp_code(D, 2 * D[:, 3], OmpParams(sparsity=4), return_info=True)
    assert info["steps"] == 1
    assert list(code.support) == [3]
    assert not info["rank_deficient"]
    with pytest.raises(DimensionError):
        omp_code(D, np.ones(4), OmpParams(sparsity=1))
    with pytest.raises(ValueError):
        OmpParams(sparsity=0)


def test_omp_flags_rank_deficient_refits(caplog):
    D = np.array([[1.0, 1.0], [0.0, 0.0]])
    with caplog.at_level(logging.WARNING, logger="core.baselines"):
        code, info = omp_code(D, [1.0, 1.0], OmpParams(sparsity=2), return_info=True)
    assert info["rank_deficient"]
    assert "rank-deficient" in caplog.text
    assert np.allclose(code.densify(), [0.5, 0.5])


def test_debias_restores_least_squares_values(rng):
    D = random_dictionary(rng, 6, 8)
    Y = complex_normal(rng, 6, 10)
    C = omp_code_all(D, Y, OmpParams(sparsity=2, err_tol=0.0))
    shrunk = CoefMatrix(0.5 * C.to_dense())
    refit = debias_codes(Y, D, shrunk)
    assert np.allclose(refit.to_dense(), C.to_dense())
    assert nsre(Y, D, refit) <= nsre(Y, D, shrunk)
    with pytest.raises(DimensionError):
        debias_codes(Y[:, :5], D, C)


def test_debias_keeps_empty_rows():
    D = np.eye(2)
    Y = np.array([[1.0, 2.0], [0.0, 3.0]])
    C = CoefMatrix(np.array([[0.9, 0.0], [0.0, 0.0]]))
    refit = debias_codes(Y, D, C)
    assert np.allclose(refit.to_dense(), [[1.0, 0.0], [0.0, 0.0]])


def test_omp_residual_is_orthogonal_to_selected_atoms(rng):
    D = random_dictionary(rng, 8, 20)
    y = complex_normal(rng, 8)
    for s in range(1, 7):
        code = omp_code(D, y, OmpParams(sparsity=s, err_tol=0.0))
        assert code.nnz <= s
        residual = y - D @ code.densify()
        assert np.max(np.abs(D[:, code.support].conj().T @ residual)) <= 1e-8


def _best_subset_error(D, y, s):
    best = (np.inf, ())
    for subset in combinations(range(D.shape[1]), s):
        x, *_ = np.linalg.lstsq(D[:, subset], y, rcond=None)
        best = min(best, (float(np.linalg.norm(y - D[:, subset] @ x)), subset))
    return best


def test_omp_against_exhaustive_two_atom_search(rng):
    Q, _ = np.linalg.qr(complex_normal(rng, 4, 4))
    extra = np.stack([Q[:, 2] + Q[:, 3], Q[:, 0] - Q[:, 3]], axis=1) / np.sqrt(2)
    D = np.hstack([Q, extra])
    y = Q @ np.array([3.0, 2.0, 1.0, 0.0])
    code = omp_code(D, y, OmpParams(sparsity=2, err_tol=0.0))
    error = float(np.linalg.norm(y - D @ code.densify()))
    best_error, best_support = _best_subset_error(D, y, 2)
    assert best_error == pytest.approx(1.0)
    assert error <= 2 * best_error
    assert tuple(code.support) == best_support
