import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import complex_normal, random_dictionary
from core.exceptions import DegenerateAtomError, DimensionError, ParameterError
from core.learning import (
    LearnConfig,
    LearnState,
    atom_update,
    compute_b,
    compute_h,
    dct_plus_random,
    feasibility,
    initial_state,
    learn,
    objective_l0,
    objective_l1,
    os_dl,
    overcomplete_dct,
    soup_dillo,
    sparse_code_fixed_dictionary,
)
from core.linalg import CoefMatrix, SparseColumn, unit_columns
from core.thresholding import L0CodeParams, L1CodeParams


def _random_instance(rng, n, N, J, density=0.5):
    Y = complex_normal(rng, n, N)
    D = random_dictionary(rng, n, J)
    dense = complex_normal(rng, N, J) * (rng.random((N, J)) < density)
    return Y, D, CoefMatrix(dense), dense


def _naive_E(Y, D, dense, j):
    return Y - D @ dense.conj().T + np.outer(D[:, j], dense[:, j].conj())


def test_atom_update_examples():
    e1 = np.array([1, 0], dtype=complex)
    assert np.array_equal(atom_update([3, 4], False, e1), e1)
    assert np.allclose(atom_update([0, 5], True, e1), [0, 1])
    with pytest.raises(DegenerateAtomError):
        atom_update([0, 0], True, e1)


def test_atom_update_beats_random_unit_vectors():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(100):
        Ec = complex_normal(rng, 3)
        d = atom_update(Ec, True, np.array([1, 0, 0]))
        candidates = complex_normal(rng, 1000, 3)
        candidates /= np.linalg.norm(candidates, axis=1, keepdims=True)
        best = np.max(np.real(candidates.conj() @ Ec))
        assert np.real(np.vdot(d, Ec)) >= best - 1e-9
    assert time.perf_counter() - start < 5.0


def test_compute_b_examples(rng):
    Y = complex_normal(rng, 4, 6)
    d = random_dictionary(rng, 4, 1)
    C = CoefMatrix.zeros(6, 1)
    assert np.allclose(compute_b(Y, d, C, 0, d[:, 0], C.column(0)), Y.conj().T @ d[:, 0])

    # J = 1 with a nonzero code: the unit norm of d cancels the code
    c1 = SparseColumn.from_dense(complex_normal(rng, 6))
    C.set_column(0, c1)
    assert np.allclose(compute_b(Y, d, C, 0, d[:, 0], c1), Y.conj().T @ d[:, 0])


def test_compute_h_examples(rng):
    Y = complex_normal(rng, 4, 6)
    D = random_dictionary(rng, 4, 3)
    C = CoefMatrix.zeros(6, 3)
    empty = SparseColumn.empty(6)
    assert np.array_equal(compute_h(Y, D, C, 1, D[:, 1], empty, empty), np.zeros(4))
    one_hot = SparseColumn(6, [0], [1.0])
    assert np.allclose(compute_h(Y, D, C, 1, D[:, 1], empty, one_hot), Y[:, 0])


def test_compute_b_h_match_naive_residual():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n, N, J = (int(v) for v in (rng.integers(1, 9), rng.integers(1, 13), rng.integers(1, 7)))
        Y, D, C, dense = _random_instance(rng, n, N, J)
        j = int(rng.integers(J))
        E = _naive_E(Y, D, dense, j)
        b = compute_b(Y, D, C, j, D[:, j], C.column(j))
        assert np.linalg.norm(b - E.conj().T @ D[:, j]) <= 1e-10 * max(1.0, np.linalg.norm(b))
        c_new = SparseColumn.from_dense(complex_normal(rng, N) * (rng.random(N) < 0.5))
        h = compute_h(Y, D, C, j, D[:, j], C.column(j), c_new)
        expected = E @ c_new.densify()
        assert np.linalg.norm(h - expected) <= 1e-10 * max(1.0, np.linalg.norm(expected))


def test_compute_b_rejects_bad_shapes(rng):
    Y, D, C, _ = _random_instance(rng, 4, 6, 3)
    with pytest.raises(DimensionError):
        compute_b(Y[:3], D, C, 0, D[:, 0], C.column(0))
    with pytest.raises(DimensionError):
        compute_b(Y, D, C, 5, D[:, 0], C.column(0))


def test_objectives(rng):
    Y, D, C, dense = _random_instance(rng, 4, 6, 3)
    zero = CoefMatrix.zeros(6, 3)
    assert objective_l0(Y, D, zero, 2.0) == pytest.approx(np.linalg.norm(Y) ** 2)
    assert objective_l1(Y, D, zero, 2.0) == pytest.approx(np.linalg.norm(Y) ** 2)
    exact = D @ dense.conj().T
    assert objective_l0(exact, D, C, 0.0) == pytest.approx(0.0, abs=1e-20)

    outer = sum(np.outer(D[:, j], dense[:, j].conj()) for j in range(3))
    fit = np.linalg.norm(Y - outer) ** 2
    assert objective_l0(Y, D, C, 0.5) == pytest.approx(fit + 0.25 * np.count_nonzero(dense), rel=1e-10)
    assert objective_l1(Y, D, C, 0.5) == pytest.approx(fit + 0.5 * np.abs(dense).sum(), rel=1e-10)


def test_overcomplete_dct_shape_and_norms():
    D = overcomplete_dct(64, 256)
    assert D.shape == (64, 256)
    assert unit_columns(D)
    assert np.allclose(D[:, 0], 1 / 8)
    with pytest.raises(ParameterError):
        overcomplete_dct(10, 20)
    R = dct_plus_random(16, 40, seed=3)
    assert R.shape == (16, 40)
    assert unit_columns(R)
    assert np.array_equal(R[:, :16], overcomplete_dct(16, 16))


def test_learn_config_validation():
    with pytest.raises(ValueError):
        LearnConfig(num_atoms=0, penalty=L0CodeParams(lam=1.0), iterations=1)
    with pytest.raises(ValueError):
        LearnConfig(num_atoms=2, penalty=L0CodeParams(lam=1.0), iterations=1, fallback_atom=[1.0, 1.0])
    cfg = LearnConfig(num_atoms=2, penalty={"kind": "l1", "mu": 0.5}, iterations=1)
    assert isinstance(cfg.penalty, L1CodeParams)
    assert np.array_equal(cfg.fallback_for(3), [1, 0, 0])


def test_initial_state_rejects_empty_data():
    with pytest.raises(ParameterError):
        initial_state(4, 0, 3)
    with pytest.raises(ParameterError):
        LearnState(dictionary=np.zeros((0, 2)), coefs=CoefMatrix.zeros(3, 2))


def test_rank_one_data_is_recovered_in_one_iteration(rng):
    d = random_dictionary(rng, 5, 1)
    c = complex_normal(rng, 8)
    c *= 2.0 / np.abs(c).min()
    Y = np.outer(d[:, 0], c.conj())
    init = LearnState(dictionary=d, coefs=CoefMatrix.zeros(8, 1))
    cfg = LearnConfig(num_atoms=1, penalty=L0CodeParams(lam=1.0), iterations=1)
    state = soup_dillo(Y, init, cfg)
    assert state.fit_trace[0] == pytest.approx(0.0, abs=1e-12)
    assert state.nnz_trace[0] == 8


def test_huge_weights_shrink_everything(rng):
    Y = complex_normal(rng, 4, 10)
    init = initial_state(4, 10, 6)
    lam = 2 * np.linalg.norm(Y, axis=0).max()
    state = soup_dillo(Y, init, LearnConfig(num_atoms=6, penalty=L0CodeParams(lam=lam), iterations=2))
    assert state.coefs.nnz == 0
    assert state.objective_trace[-1] == pytest.approx(np.linalg.norm(Y) ** 2)
    assert np.allclose(state.dictionary, np.eye(4, 6)[:, [0] * 6])

    state = os_dl(Y, init, LearnConfig(num_atoms=6, penalty=L1CodeParams(mu=2 * lam), iterations=2))
    assert state.coefs.nnz == 0
    assert state.objective_trace[-1] == pytest.approx(np.linalg.norm(Y) ** 2)


def test_os_dl_orthonormal_least_squares_fixed_point(rng):
    n, N = 4, 9
    D, _ = np.linalg.qr(complex_normal(rng, n, n))
    Y = complex_normal(rng, n, N)
    C0 = CoefMatrix(Y.conj().T @ D)
    init = LearnState(dictionary=D, coefs=C0)
    state = os_dl(Y, init, LearnConfig(num_atoms=n, penalty=L1CodeParams(mu=0.0), iterations=1))
    assert np.allclose(state.dictionary, D, atol=1e-10)
    assert np.allclose(state.coefs.to_dense(), C0.to_dense(), atol=1e-10)
    assert state.fit_trace[0] == pytest.approx(0.0, abs=1e-18)


def test_penalty_kind_is_checked(rng):
    Y = complex_normal(rng, 4, 5)
    init = initial_state(4, 5, 4)
    with pytest.raises(ParameterError):
        soup_dillo(Y, init, LearnConfig(num_atoms=4, penalty=L1CodeParams(mu=1.0), iterations=1))
    with pytest.raises(ParameterError):
        os_dl(Y, init, LearnConfig(num_atoms=4, penalty=L0CodeParams(lam=1.0), iterations=1))
    with pytest.raises(DimensionError):
        soup_dillo(Y, init, LearnConfig(num_atoms=3, penalty=L0CodeParams(lam=1.0), iterations=1))


def test_soup_dillo_rejects_codes_above_cap(rng):
    Y = complex_normal(rng, 4, 5)
    init = initial_state(4, 5, 4)
    init.coefs.set_column(0, SparseColumn(5, [0], [10.0]))
    with pytest.raises(ParameterError):
        soup_dillo(Y, init, LearnConfig(num_atoms=4, penalty=L0CodeParams(lam=1.0, cap=5.0), iterations=1))


def test_capped_run_can_be_warm_started(rng):
    Y = 5 * complex_normal(rng, 4, 40)
    cfg = LearnConfig(num_atoms=4, penalty=L0CodeParams(lam=0.5, cap=2.0), iterations=3)
    first = soup_dillo(Y, initial_state(4, 40, 4), cfg)
    assert first.coefs.max_abs() <= 2.0
    assert feasibility(first.dictionary, first.coefs, cap=2.0).bounded_codes
    second = soup_dillo(Y, first, cfg)
    assert second.coefs.max_abs() <= 2.0
    assert len(second.objective_trace) == len(first.objective_trace) + 3


@given(st.integers(0, 2**32 - 1), st.sampled_from(["l0", "l1"]))
@settings(max_examples=10, deadline=None)
def test_every_block_step_descends(seed, kind):
    rng = np.random.default_rng(seed)
    Y = complex_normal(rng, 4, 12)
    penalty = L0CodeParams(lam=0.8) if kind == "l0" else L1CodeParams(mu=0.8)
    cfg = LearnConfig(num_atoms=6, penalty=penalty, iterations=3, record_steps=True)
    state = learn(Y, initial_state(4, 12, 6), cfg)
    steps = np.array(state.step_trace)
    assert steps.size == 2 * 6 * 3
    assert np.all(np.diff(steps) <= 1e-9 * np.maximum(1.0, steps[:-1]))


def test_monotone_learning_on_random_datasets():
    start = time.perf_counter()
    for seed in range(10):
        rng = np.random.default_rng(seed)
        Y = complex_normal(rng, 9, 40)
        for penalty in (L0CodeParams(lam=0.9), L1CodeParams(mu=0.9)):
            cfg = LearnConfig(num_atoms=12, penalty=penalty, iterations=50, seed=seed)
            state = learn(Y, initial_state(9, 40, 12), cfg)
            trace = np.array(state.objective_trace)
            assert np.all(np.diff(trace) <= 1e-9 * trace[:-1])
            assert feasibility(state.dictionary, state.coefs).unit_norm_atoms
    assert time.perf_counter() - start < 60.0


def test_random_atom_order_is_seeded(rng):
    Y = complex_normal(rng, 4, 15)
    cfg = LearnConfig(num_atoms=6, penalty=L0CodeParams(lam=0.7), iterations=4, atom_order="random", seed=5)
    a = soup_dillo(Y, initial_state(4, 15, 6), cfg)
    b = soup_dillo(Y, initial_state(4, 15, 6), cfg)
    assert a.objective_trace == b.objective_trace
    assert np.array_equal(a.dictionary, b.dictionary)
    trace = np.array(a.objective_trace)
    assert np.all(np.diff(trace) <= 1e-9 * trace[:-1])


def test_zero_codes_leave_fallback_atom(rng):
    Y = complex_normal(rng, 4, 10)
    fallback = np.array([0, 1j, 0, 0])
    cfg = LearnConfig(num_atoms=5, penalty=L0CodeParams(lam=1.3), iterations=3, fallback_atom=fallback)
    state = soup_dillo(Y, initial_state(4, 10, 5), cfg)
    for j in range(5):
        if state.coefs.column(j).is_zero():
            assert np.array_equal(state.dictionary[:, j], fallback)
    assert unit_columns(state.dictionary)


def test_input_state_is_not_mutated(rng):
    Y = complex_normal(rng, 4, 10)
    init = initial_state(4, 10, 5)
    before = init.dictionary.copy()
    soup_dillo(Y, init, LearnConfig(num_atoms=5, penalty=L0CodeParams(lam=0.5), iterations=2))
    assert np.array_equal(init.dictionary, before)
    assert init.coefs.nnz == 0
    assert init.objective_trace == []


def test_fixed_dictionary_coding_is_monotone(rng):
    Y = complex_normal(rng, 9, 30)
    D = overcomplete_dct(9, 16)
    C, trace = sparse_code_fixed_dictionary(Y, D, CoefMatrix.zeros(30, 16), L0CodeParams(lam=0.6), sweeps=60)
    assert len(trace) == 60
    assert np.all(np.diff(trace) <= 1e-9 * np.array(trace[:-1]))
    assert trace[-1] == pytest.approx(objective_l0(Y, D, C, 0.6))
    with pytest.raises(ParameterError):
        sparse_code_fixed_dictionary(Y, 2 * D, CoefMatrix.zeros(30, 16), L0CodeParams(lam=0.6), sweeps=1)


def _one_atom_per_signal(seed, n=9, per_atom=5):
    """Signals d_k x_i on an orthonormal basis, plus a slightly perturbed copy of the basis"""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(complex_normal(rng, n, n))
    owner = np.repeat(np.arange(n), per_atom)
    amplitude = rng.uniform(3.0, 5.0, owner.size) * np.exp(2j * np.pi * rng.random(owner.size))
    Y = basis[:, owner] * amplitude
    start = basis + 0.01 * complex_normal(rng, n, n)
    start /= np.linalg.norm(start, axis=0)
    return Y, start


@pytest.mark.slow
def test_iterate_differences_vanish():
    for seed in range(10):
        Y, start = _one_atom_per_signal(seed)
        n, N = Y.shape
        for penalty in (L0CodeParams(lam=1.5), L1CodeParams(mu=2.0)):
            init = LearnState(dictionary=start, coefs=CoefMatrix.zeros(N, n))
            state = learn(Y, init, LearnConfig(num_atoms=n, penalty=penalty, iterations=200))
            assert state.coef_diff_trace[-1] < 1e-4 * state.coef_diff_trace[0]
            assert state.dict_diff_trace[-1] < 1e-4 * state.dict_diff_trace[0]
