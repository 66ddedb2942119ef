"""Lindblad generators for pairs, globally coupled ensembles and mean-field oscillators.

Units: hbar = 1 and the linear gain ``G`` is the rate unit, so every parameter is
the ratio to ``G`` used on the figure axes (kappa/G, V/G, Delta/G).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    DimensionError,
    HilbertSpec,
    SparseOperator,
    annihilation,
    number,
    number_sector_labels,
)


@dataclass(frozen=True)
class SystemParams:
    kappa: float
    V: float = 0.0
    omegas: tuple[float, ...] = (0.0,)
    G: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "omegas", tuple(float(w) for w in np.atleast_1d(self.omegas)))
        if self.G <= 0:
            raise ValueError(f"gain G must be positive, got {self.G}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.V < 0:
            raise ValueError(f"coupling V must be non-negative, got {self.V}")

    @classmethod
    def pair(cls, kappa: float, V: float, delta: float, G: float = 1.0) -> "SystemParams":
        """Symmetric detuning ``omega_1 = -omega_2 = delta / 2``."""
        return cls(kappa=kappa, V=V, omegas=(delta / 2, -delta / 2), G=G)

    @property
    def n_osc(self) -> int:
        return len(self.omegas)

    @property
    def delta(self) -> float:
        return self.omegas[0] - self.omegas[-1] if self.n_osc > 1 else 0.0

    def scaled(self, factor: float) -> "SystemParams":
        return replace(
            self,
            kappa=self.kappa * factor,
            V=self.V * factor,
            G=self.G * factor,
            omegas=tuple(w * factor for w in self.omegas),
        )

    def check_spec(self, spec: HilbertSpec) -> None:
        if spec.n_osc != self.n_osc:
            raise DimensionError(f"{self.n_osc} frequencies for {spec.n_osc} oscillators")


@dataclass(frozen=True)
class Superoperator:
    """Sparse ``L`` with ``d vec(rho)/dt = L @ vec(rho)``.

    With ``index`` set, ``matrix`` is the restriction of the generator to those
    entries of ``vec(rho)`` (an invariant block such as the zero number-difference
    sector) and acts on reduced vectors.
    """

    matrix: sp.csr_matrix
    spec: HilbertSpec
    index: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        n = self.spec.vec_dim if self.index is None else len(self.index)
        if m.shape != (n, n):
            raise DimensionError(f"superoperator shape {m.shape} does not match {self.spec}")
        m.eliminate_zeros()
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_reduced(self) -> bool:
        return self.index is not None

    def _check_compatible(self, other: "Superoperator") -> None:
        if other.spec != self.spec:
            raise DimensionError("superoperators on different spaces")
        same = (self.index is None and other.index is None) or (
            self.index is not None and other.index is not None and np.array_equal(self.index, other.index)
        )
        if not same:
            raise DimensionError("superoperators restricted to different blocks")

    def __add__(self, other: "Superoperator") -> "Superoperator":
        self._check_compatible(other)
        return Superoperator(self.matrix + other.matrix, self.spec, self.index)

    def __mul__(self, c: complex) -> "Superoperator":
        return Superoperator(self.matrix * c, self.spec, self.index)

    __rmul__ = __mul__

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec


def _eye(op: SparseOperator) -> sp.csr_matrix:
    return sp.identity(op.dim, dtype=complex, format="csr")


def spre(A: SparseOperator) -> sp.csr_matrix:
    """``rho -> A rho``."""
    return sp.kron(_eye(A), A.matrix, format="csr")


def spost(B: SparseOperator) -> sp.csr_matrix:
    """``rho -> rho B``."""
    return sp.kron(B.matrix.T, _eye(B), format="csr")


def sprepost(A: SparseOperator, B: SparseOperator) -> sp.csr_matrix:
    """``rho -> A rho B``."""
    return sp.kron(B.matrix.T, A.matrix, format="csr")


def commutator_super(H: SparseOperator) -> sp.csr_matrix:
    """``rho -> [H, rho]``."""
    return spre(H) - spost(H)


def _dissipator_matrix(O: SparseOperator) -> sp.csr_matrix:
    OdO = O.dag() @ O
    return sprepost(O, O.dag()) - 0.5 * spre(OdO) - 0.5 * spost(OdO)


def dissipator(O: SparseOperator, spec: HilbertSpec | None = None) -> Superoperator:
    """``D[O] rho = O rho O^dag - (O^dag O rho + rho O^dag O) / 2``."""
    if spec is None:
        spec = HilbertSpec(1, O.dim)
    if O.dim != spec.dim:
        raise DimensionError(f"operator dim {O.dim} vs space dim {spec.dim}")
    return Superoperator(_dissipator_matrix(O), spec)


def sector_index(spec: HilbertSpec, label: int = 0) -> np.ndarray:
    """Positions in ``vec(rho)`` of entries ``|m><n|`` with ``N(m) - N(n) = label``."""
    return np.flatnonzero(number_sector_labels(spec) == label)


class _Accumulator:
    """Running sum of full-size terms, optionally restricted to an index block.

    Restricting term by term keeps peak memory at one full-size term, which is
    what makes the larger N-body sectors affordable.
    """

    def __init__(self, spec: HilbertSpec, index: np.ndarray | None = None):
        self.spec = spec
        self.index = index
        n = spec.vec_dim if index is None else len(index)
        self.total = sp.csr_matrix((n, n), dtype=complex)

    def add(self, term: sp.spmatrix, coef: complex = 1.0) -> None:
        term = sp.csr_matrix(term)
        if self.index is not None:
            term = term[self.index][:, self.index]
        self.total = self.total + coef * term

    def result(self) -> Superoperator:
        return Superoperator(self.total, self.spec, self.index)


def _local_terms(acc: _Accumulator, params: SystemParams) -> None:
    """Sum over oscillators of ``-i[w_j n_j, .] + G D[a_j^dag] + kappa D[a_j^2]``."""
    spec = acc.spec
    for j in range(1, spec.n_osc + 1):
        a = annihilation(spec, j)
        w = params.omegas[j - 1]
        if w != 0.0:
            acc.add(commutator_super(number(spec, j)), -1j * w)
        acc.add(_dissipator_matrix(a.dag()), params.G)
        acc.add(_dissipator_matrix(a @ a), params.kappa)


def _accumulator(spec: HilbertSpec, sector: bool) -> _Accumulator:
    return _Accumulator(spec, sector_index(spec) if sector else None)


def build_pair(spec: HilbertSpec, params: SystemParams, sector: bool = False) -> Superoperator:
    """Pair generator; ``sector=True`` returns only the zero number-difference block."""
    if spec.n_osc != 2:
        raise DimensionError(f"pair model needs 2 oscillators, got {spec.n_osc}")
    params.check_spec(spec)
    acc = _accumulator(spec, sector)
    _local_terms(acc, params)
    if params.V:
        acc.add(_dissipator_matrix(annihilation(spec, 1) - annihilation(spec, 2)), params.V)
    return acc.result()


def build_global(spec: HilbertSpec, params: SystemParams, sector: bool = False) -> Superoperator:
    """Global all-to-all dissipative coupling ``(V/N) sum_j sum_{j' != j} D[a_j - a_j']``.

    The double sum runs over ordered pairs, exactly as written. ``sector=True``
    returns only the zero number-difference block, where the steady state lives.
    """
    N = spec.n_osc
    if N < 2:
        raise DimensionError(f"global model needs N >= 2, got {N}")
    params.check_spec(spec)
    acc = _accumulator(spec, sector)
    _local_terms(acc, params)
    if params.V:
        a = [annihilation(spec, j) for j in range(1, N + 1)]
        for j, k in permutations(range(N), 2):
            acc.add(_dissipator_matrix(a[j] - a[k]), params.V / N)
    return acc.result()


def build_global_expanded(spec: HilbertSpec, params: SystemParams) -> Superoperator:
    """Same generator assembled from single-mode damping plus explicit cross terms.

    ``(2V(N-1)/N) sum_j D[a_j] - (2V/N) sum_j sum_{j'!=j} (a_j . a_j'^dag
    - a_j'^dag a_j . /2 - . a_j'^dag a_j /2)``
    """
    N = spec.n_osc
    if N < 2:
        raise DimensionError(f"global model needs N >= 2, got {N}")
    params.check_spec(spec)
    V = params.V
    acc = _Accumulator(spec)
    _local_terms(acc, params)
    a = [annihilation(spec, j) for j in range(1, N + 1)]
    for j in range(N):
        acc.add(_dissipator_matrix(a[j]), 2 * V * (N - 1) / N)
    for j, k in permutations(range(N), 2):
        hop = a[k].dag() @ a[j]
        acc.add(sprepost(a[j], a[k].dag()) - 0.5 * spre(hop) - 0.5 * spost(hop), -2 * V / N)
    return acc.result()


@dataclass(frozen=True)
class MeanFieldGenerator:
    """One-body generator split as ``L(A) = static + A * plus + conj(A) * minus``."""

    static: sp.csr_matrix
    plus: sp.csr_matrix
    minus: sp.csr_matrix
    spec: HilbertSpec
    number_part: sp.csr_matrix = field(repr=False, default=None)

    def at(self, A: complex) -> Superoperator:
        A = complex(A)
        return Superoperator(self.static + A * self.plus + A.conjugate() * self.minus, self.spec)


def meanfield_split(spec_1osc: HilbertSpec, omega_j: float, params: SystemParams, N: int) -> MeanFieldGenerator:
    """Split storage of the factorized one-body generator for oscillator ``j``.

    ``-i[w_j n, .] + G D[a^dag] + kappa D[a^2] + (2V(N-1)/N) D[a]
    + V (A [a^dag, .] - A* [a, .])``
    """
    if spec_1osc.n_osc != 1:
        raise DimensionError(f"one-body generator needs a single-oscillator space, got {spec_1osc}")
    if N < 2:
        raise ValueError(f"mean-field coupling needs N >= 2, got {N}")
    a = annihilation(spec_1osc, 1)
    n = number(spec_1osc, 1)
    H = -1j * commutator_super(n)
    static = (
        omega_j * H
        + params.G * _dissipator_matrix(a.dag())
        + params.kappa * _dissipator_matrix(a @ a)
        + (2 * params.V * (N - 1) / N) * _dissipator_matrix(a)
    )
    plus = params.V * commutator_super(a.dag())
    minus = -params.V * commutator_super(a)
    return MeanFieldGenerator(
        sp.csr_matrix(static), sp.csr_matrix(plus), sp.csr_matrix(minus), spec_1osc, sp.csr_matrix(H)
    )


def build_meanfield_onebody(
    spec_1osc: HilbertSpec, omega_j: float, params: SystemParams, N: int, A: complex
) -> Superoperator:
    return meanfield_split(spec_1osc, omega_j, params, N).at(A)


def build_single(spec_1osc: HilbertSpec, params: SystemParams, omega: float = 0.0) -> Superoperator:
    """Uncoupled oscillator ``-i[w n, .] + G D[a^dag] + kappa D[a^2]``."""
    if spec_1osc.n_osc != 1:
        raise DimensionError(f"single-oscillator generator needs n_osc = 1, got {spec_1osc.n_osc}")
    acc = _Accumulator(spec_1osc)
    _local_terms(acc, replace(params, omegas=(omega,)))
    return acc.result()


def hamiltonian_part(spec: HilbertSpec, op: SparseOperator) -> Superoperator:
    """``rho -> -i [op, rho]``."""
    return Superoperator(-1j * commutator_super(op), spec)


def zero_generator(spec: HilbertSpec) -> Superoperator:
    return Superoperator(sp.csr_matrix((spec.vec_dim, spec.vec_dim), dtype=complex), spec)

