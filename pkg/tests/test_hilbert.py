from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density, random_hermitian
from vdpcollapse.hilbert import (
    DensityMatrix,
    DimensionError,
    HilbertSpec,
    SparseOperator,
    adjoint,
    annihilation,
    apply_to_matrix,
    coherent_ket,
    compose,
    creation,
    devectorize,
    fock_state,
    make_space,
    number,
    number_sector_labels,
    partial_trace,
    product_state,
    scale,
    vacuum,
    vectorize,
)


@pytest.mark.parametrize("n, d, D", [(1, 4, 4), (2, 10, 100), (7, 3, 2187)])
def test_make_space_dimensions(n, d, D):
    assert make_space(n, d).dim == D


@pytest.mark.parametrize("n, d", [(0, 3), (-1, 3), (2, 1), (1, 0)])
def test_make_space_rejects_bad_sizes(n, d):
    with pytest.raises(ValueError):
        make_space(n, d)


def test_make_space_memory_budget():
    with pytest.raises(MemoryError):
        make_space(4, 10, max_vec_dim=10**6)
    assert make_space(3, 10, max_vec_dim=10**6).vec_dim == 10**6


def test_annihilation_single_mode_entries():
    a = annihilation(make_space(1, 4), 1).toarray()
    expected = np.zeros((4, 4))
    expected[0, 1], expected[1, 2], expected[2, 3] = 1.0, np.sqrt(2), np.sqrt(3)
    np.testing.assert_allclose(a, expected, atol=0)
    assert np.count_nonzero(a) == 3


def test_number_is_diagonal():
    spec = make_space(1, 4)
    a = annihilation(spec, 1)
    np.testing.assert_allclose((a.dag() @ a).toarray(), np.diag([0, 1, 2, 3.0]))
    np.testing.assert_allclose(number(spec, 1).toarray(), np.diag([0, 1, 2, 3.0]))


def test_embedding_second_oscillator():
    a2 = annihilation(make_space(2, 2), 2).toarray()
    expected = np.zeros((4, 4))
    expected[0, 1] = expected[2, 3] = 1.0
    np.testing.assert_array_equal(a2, expected)


def test_annihilation_index_checked():
    spec = make_space(2, 3)
    for j in (0, 3):
        with pytest.raises(IndexError):
            annihilation(spec, j)


def test_algebra_helpers():
    spec = make_space(1, 3)
    a = annihilation(spec, 1)
    assert adjoint(adjoint(a)) == a
    np.testing.assert_allclose(compose(creation(spec, 1), a).toarray(), np.diag([0, 1, 2.0]))
    np.testing.assert_allclose(scale(a, 2.0).toarray(), 2 * a.toarray())
    two = make_space(2, 3)
    b = annihilation(two, 1) - annihilation(two, 2)
    M = (b.dag() @ b).toarray()
    np.testing.assert_allclose(M, M.conj().T)
    assert np.all(np.diag(M).real >= 0)


def test_dimension_mismatch_rejected():
    with pytest.raises(DimensionError):
        annihilation(make_space(1, 3), 1) @ annihilation(make_space(1, 4), 1)


def test_apply_to_matrix(rng):
    spec = make_space(1, 4)
    a = annihilation(spec, 1)
    rho = random_density(4, rng)
    np.testing.assert_allclose(apply_to_matrix(a, rho, a.dag()), a.toarray() @ rho @ a.toarray().conj().T)
    np.testing.assert_allclose(apply_to_matrix(a, rho), a.toarray() @ rho)


def test_vectorize_column_stacking():
    np.testing.assert_array_equal(vectorize(np.array([[1, 2], [3, 4]])), [1, 3, 2, 4])


def test_devectorize_round_trip(rng):
    M = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    np.testing.assert_array_equal(devectorize(vectorize(M)), M)
    with pytest.raises(ValueError):
        devectorize(np.ones(8))


@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**31))
def test_vectorization_identity(dim, seed):
    rng = np.random.default_rng(seed)
    A, rho, B = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)) for _ in range(3))
    lhs = vectorize(A @ rho @ B)
    rhs = np.kron(B.T, A) @ vectorize(rho)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
    np.testing.assert_allclose(vectorize(A @ rho), np.kron(np.eye(dim), A) @ vectorize(rho), atol=1e-10)


def test_partial_trace_examples(rng):
    spec = make_space(2, 3)
    s1, s2 = random_density(3, rng), random_density(3, rng)
    rho = product_state(spec, [s1, s2])
    np.testing.assert_allclose(partial_trace(rho, 1), s1, atol=1e-13)
    np.testing.assert_allclose(partial_trace(rho, 2), s2, atol=1e-13)

    mixed = DensityMatrix.from_matrix(make_space(2, 2), np.eye(4) / 4)
    np.testing.assert_allclose(partial_trace(mixed, 2), np.eye(2) / 2)

    psi = np.zeros(4)
    psi[0] = psi[3] = 1 / np.sqrt(2)
    bell = DensityMatrix.from_matrix(make_space(2, 2), np.outer(psi, psi))
    np.testing.assert_allclose(partial_trace(bell, 1), np.diag([0.5, 0.5]))
    with pytest.raises(IndexError):
        partial_trace(bell, 3)


@given(st.integers(min_value=1, max_value=3), st.integers(min_value=2, max_value=4), st.integers(0, 2**31))
def test_partial_trace_preserves_trace_and_hermiticity(n, d, seed):
    spec = make_space(n, d)
    rng = np.random.default_rng(seed)
    H = random_hermitian(spec.dim, rng)
    rho = DensityMatrix.from_matrix(spec, H)
    for j in range(1, n + 1):
        red = partial_trace(rho, j)
        assert abs(np.trace(red) - np.trace(H)) < 1e-12 * max(1, np.abs(H).sum())
        assert np.abs(red - red.conj().T).max() < 1e-12


@given(st.integers(min_value=1, max_value=3), st.integers(min_value=2, max_value=5))
def test_commutator_is_identity_below_top_level(n, d):
    spec = make_space(n, d)
    for j in range(1, n + 1):
        a = annihilation(spec, j)
        c = (a @ a.dag() - a.dag() @ a).toarray()
        top = spec.occupations()[:, j - 1] == d - 1
        np.testing.assert_allclose(np.diag(c)[~top], 1.0)
        for k in range(1, n + 1):
            if k != j:
                b = annihilation(spec, k)
                assert (a @ b) == (b @ a)


def test_states():
    spec = make_space(2, 3)
    v = vacuum(spec)
    assert v.trace() == pytest.approx(1)
    assert v.expect(number(spec, 1)) == 0
    f = fock_state(make_space(1, 4), [2])
    assert f.expect(number(f.spec, 1)).real == pytest.approx(2)
    ket = coherent_ket(30, 1.2 + 0.5j)
    assert np.vdot(ket, ket).real == pytest.approx(1)
    a = annihilation(make_space(1, 30), 1).toarray()
    assert np.vdot(ket, a @ ket) == pytest.approx(1.2 + 0.5j, abs=1e-8)


def test_sector_labels():
    spec = make_space(2, 2)
    labels = number_sector_labels(spec)
    n = spec.total_number()
    for col in range(spec.dim):
        for row in range(spec.dim):
            assert labels[row + spec.dim * col] == n[row] - n[col]


def test_sparse_operator_exact_zeros_dropped():
    op = SparseOperator(sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])))
    diff = op - op
    assert diff.matrix.nnz == 0


def test_spec_is_hashable_and_immutable():
    spec = HilbertSpec(2, 3)
    assert {spec: 1}[make_space(2, 3)] == 1
    with pytest.raises(Exception):
        spec.cutoff = 4
