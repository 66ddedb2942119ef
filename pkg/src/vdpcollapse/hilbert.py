"""Truncated Fock-space operator algebra.

All oscillators share one cutoff ``d`` (levels ``0..d-1``); the composite space
is the Kronecker product with oscillator 1 as the most significant factor.
Density matrices are vectorized by column stacking, so that

    vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)

which fixes every superoperator formula used downstream.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp

# Largest admissible D**2 (length of a vectorized density matrix).
DEFAULT_MAX_VEC_DIM = 2**24


class DimensionError(ValueError):
    """Operands live on spaces of different dimension."""


@dataclass(frozen=True)
class HilbertSpec:
    n_osc: int
    cutoff: int

    @property
    def dim(self) -> int:
        return self.cutoff**self.n_osc

    @property
    def vec_dim(self) -> int:
        return self.dim**2

    def check_index(self, j: int) -> None:
        if not 1 <= j <= self.n_osc:
            raise IndexError(f"oscillator index {j} outside 1..{self.n_osc}")

    def occupations(self) -> np.ndarray:
        """Integer array ``(D, n_osc)`` with the Fock numbers of every basis state."""
        grids = np.indices((self.cutoff,) * self.n_osc).reshape(self.n_osc, -1)
        return grids.T.copy()

    def total_number(self) -> np.ndarray:
        return self.occupations().sum(axis=1)


def make_space(n_osc: int, cutoff: int, max_vec_dim: int = DEFAULT_MAX_VEC_DIM) -> HilbertSpec:
    if n_osc < 1:
        raise ValueError(f"n_osc must be >= 1, got {n_osc}")
    if cutoff < 2:
        raise ValueError(f"cutoff must be >= 2, got {cutoff}")
    spec = HilbertSpec(int(n_osc), int(cutoff))
    if spec.vec_dim > max_vec_dim:
        raise MemoryError(
            f"D^2 = {spec.vec_dim} exceeds the memory budget {max_vec_dim} "
            f"(n_osc={n_osc}, cutoff={cutoff})"
        )
    return spec


class SparseOperator:
    """Immutable complex sparse matrix acting on a ``HilbertSpec`` of dimension ``dim``."""

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=complex)
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got {m.shape}")
        m.eliminate_zeros()
        m.sort_indices()
        self._m = m

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def toarray(self) -> np.ndarray:
        return self._m.toarray()

    def _check(self, other: "SparseOperator") -> None:
        if other.dim != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self._m + other._m)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self._m - other._m)

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(-self._m)

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        self._check(other)
        return SparseOperator(self._m @ other._m)

    def __mul__(self, c: complex) -> "SparseOperator":
        return SparseOperator(self._m * complex(c))

    __rmul__ = __mul__

    def dag(self) -> "SparseOperator":
        return SparseOperator(self._m.conj().T)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseOperator) or other.dim != self.dim:
            return False
        return (self._m != other._m).nnz == 0

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseOperator(dim={self.dim}, nnz={self._m.nnz})"


def compose(*ops: SparseOperator) -> SparseOperator:
    """Operator product ``ops[0] @ ops[1] @ ...``."""
    if not ops:
        raise ValueError("compose needs at least one operator")
    return reduce(lambda a, b: a @ b, ops)


def add(*ops: SparseOperator) -> SparseOperator:
    if not ops:
        raise ValueError("add needs at least one operator")
    return reduce(lambda a, b: a + b, ops)


def scale(op: SparseOperator, c: complex) -> SparseOperator:
    return op * c


def adjoint(op: SparseOperator) -> SparseOperator:
    return op.dag()


def apply_to_matrix(A: SparseOperator, rho: np.ndarray, B: SparseOperator | None = None) -> np.ndarray:
    """Dense ``A @ rho @ B`` (``B`` defaults to the identity)."""
    rho = np.asarray(rho)
    if rho.shape != (A.dim, A.dim):
        raise DimensionError(f"rho has shape {rho.shape}, operator dim {A.dim}")
    out = A.matrix @ rho
    if B is not None:
        A._check(B)
        out = (B.matrix.T @ out.T).T
    return np.asarray(out)


def identity(spec: HilbertSpec) -> SparseOperator:
    return SparseOperator(sp.identity(spec.dim, dtype=complex, format="csr"))


def _single_mode_lowering(cutoff: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, cutoff, dtype=float)), offsets=1, format="csr", dtype=complex)


def embed(spec: HilbertSpec, local: sp.spmatrix, j: int) -> SparseOperator:
    """Place a ``d x d`` one-body matrix in slot ``j`` (1-based) of the product space."""
    spec.check_index(j)
    d = spec.cutoff
    left = sp.identity(d ** (j - 1), dtype=complex, format="csr")
    right = sp.identity(d ** (spec.n_osc - j), dtype=complex, format="csr")
    return SparseOperator(sp.kron(sp.kron(left, local, format="csr"), right, format="csr"))


def annihilation(spec: HilbertSpec, j: int) -> SparseOperator:
    return embed(spec, _single_mode_lowering(spec.cutoff), j)


def creation(spec: HilbertSpec, j: int) -> SparseOperator:
    return annihilation(spec, j).dag()


def number(spec: HilbertSpec, j: int) -> SparseOperator:
    a = annihilation(spec, j)
    return a.dag() @ a


# --- vectorization -------------------------------------------------------


def vectorize(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F").copy()


def devectorize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec)
    n = int(round(np.sqrt(vec.size)))
    if n * n != vec.size:
        raise DimensionError(f"vector length {vec.size} is not a perfect square")
    return vec.reshape((n, n), order="F").copy()


def trace_vector(dim: int) -> np.ndarray:
    """Row functional ``t`` with ``t @ vec(rho) == Tr(rho)``."""
    t = np.zeros(dim * dim)
    t[:: dim + 1] = 1.0
    return t


def number_sector_labels(spec: HilbertSpec) -> np.ndarray:
    """``N(row) - N(col)`` for every entry of a vectorized density matrix.

    Phase-covariant generators never mix entries with different labels, so the
    label-0 block alone contains every steady state.
    """
    n = spec.total_number()
    return np.subtract.outer(n, n).reshape(-1, order="F")


# --- states --------------------------------------------------------------


@dataclass(frozen=True)
class DensityMatrix:
    spec: HilbertSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex).reshape(-1)
        if data.size != self.spec.vec_dim:
            raise DimensionError(f"data length {data.size} != D^2 = {self.spec.vec_dim}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_matrix(cls, spec: HilbertSpec, rho: np.ndarray) -> "DensityMatrix":
        return cls(spec, vectorize(rho))

    @property
    def matrix(self) -> np.ndarray:
        return devectorize(self.data)

    def trace(self) -> complex:
        return complex(self.data[:: self.spec.dim + 1].sum())

    def expect(self, op: SparseOperator) -> complex:
        """``Tr(op @ rho)``."""
        rho = self.matrix
        return complex((op.matrix.multiply(rho.T)).sum())


def fock_state(spec: HilbertSpec, levels) -> DensityMatrix:
    """Pure product Fock state ``|n_1, ..., n_N><n_1, ..., n_N|``."""
    levels = tuple(int(n) for n in np.atleast_1d(levels))
    if len(levels) != spec.n_osc or any(not 0 <= n < spec.cutoff for n in levels):
        raise ValueError(f"invalid Fock levels {levels} for {spec}")
    idx = int(np.ravel_multi_index(levels, (spec.cutoff,) * spec.n_osc))
    rho = np.zeros((spec.dim, spec.dim), dtype=complex)
    rho[idx, idx] = 1.0
    return DensityMatrix.from_matrix(spec, rho)


def vacuum(spec: HilbertSpec) -> DensityMatrix:
    return fock_state(spec, (0,) * spec.n_osc)


def coherent_ket(cutoff: int, alpha: complex) -> np.ndarray:
    """Truncated, renormalized coherent-state amplitudes."""
    n = np.arange(cutoff)
    logfact = np.cumsum(np.log(np.maximum(n, 1)))
    amp = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * logfact) * np.power(complex(alpha), n)
    return amp / np.linalg.norm(amp)


def product_state(spec: HilbertSpec, factors) -> DensityMatrix:
    """``rho_1 (x) rho_2 (x) ...`` from a list of ``d x d`` matrices."""
    factors = list(factors)
    if len(factors) != spec.n_osc:
        raise ValueError(f"need {spec.n_osc} factors, got {len(factors)}")
    return DensityMatrix.from_matrix(spec, reduce(np.kron, factors))


def coherent_state(spec: HilbertSpec, alphas) -> DensityMatrix:
    kets = [coherent_ket(spec.cutoff, a) for a in np.atleast_1d(alphas)]
    return product_state(spec, [np.outer(k, k.conj()) for k in kets])


def partial_trace(rho: DensityMatrix, keep: int) -> np.ndarray:
    """Reduced ``d x d`` matrix of oscillator ``keep`` (1-based)."""
    spec = rho.spec
    spec.check_index(keep)
    d, n = spec.cutoff, spec.n_osc
    t = rho.matrix.reshape((d,) * (2 * n))
    # move the kept row/col axes to the front and trace out the rest pairwise
    k = keep - 1
    perm = [k, n + k] + [i for i in range(n) if i != k] + [n + i for i in range(n) if i != k]
    t = np.transpose(t, perm).reshape(d, d, d ** (n - 1), d ** (n - 1))
    return np.trace(t, axis1=2, axis2=3)
