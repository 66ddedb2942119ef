"""Time integration of vectorized master equations and steady-state extraction."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .hilbert import DensityMatrix, DimensionError, number_sector_labels, partial_trace, trace_vector
from .liouvillian import Superoperator

logger = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 40_000
TRACE_DRIFT_TOL = 1e-8
CLIP_TOL = 1e-10
CUTOFF_TAIL_TOL = 1e-4


class IntegrationError(RuntimeError):
    pass


class NotConvergedError(RuntimeError):
    def __init__(self, message: str, residual: float, state: DensityMatrix | None = None):
        super().__init__(message)
        self.residual = residual
        self.state = state


class DegenerateSteadyStateError(RuntimeError):
    pass


class NegativeStateError(ValueError):
    pass


@dataclass(frozen=True)
class EvolveConfig:
    dt: float = 0.01
    t_max: float = 2000.0
    ss_tol: float = 1e-10
    method: str = "rk4"  # "rk4" or "adaptive"
    check_interval: float = 1.0
    rtol: float = 1e-10
    atol: float = 1e-12

    def __post_init__(self):
        if self.dt <= 0 or self.ss_tol <= 0 or self.t_max <= 0 or self.check_interval <= 0:
            raise ValueError(f"invalid evolution config {self}")
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown method {self.method!r}")


def default_dt(kappa: float, G: float = 1.0) -> float:
    """``0.01/G`` for kappa <= G; shrinks with G/kappa in the stiff deep-quantum regime."""
    if kappa <= G:
        return 0.01 / G
    return 0.001 * (G / kappa) / G


def rk4_steps(L: sp.spmatrix, y: np.ndarray, h: float, n_steps: int) -> np.ndarray:
    for step in range(n_steps):
        k1 = L @ y
        k2 = L @ (y + 0.5 * h * k1)
        k3 = L @ (y + 0.5 * h * k2)
        k4 = L @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % 256 == 0 and not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state after {step} steps (dt={h}); step too large?")
    return y


def _advance(L: Superoperator, y: np.ndarray, T: float, cfg: EvolveConfig) -> np.ndarray:
    if T <= 0:
        return y
    if cfg.method == "rk4":
        n = max(1, math.ceil(T / cfg.dt - 1e-9))
        y = rk4_steps(L.matrix, y, T / n, n)
    else:
        M = L.matrix
        sol = solve_ivp(
            lambda t, v: M @ v, (0.0, T), y, method="RK45", rtol=cfg.rtol, atol=cfg.atol, first_step=cfg.dt
        )
        if sol.status != 0:
            raise IntegrationError(f"adaptive integration failed: {sol.message}")
        y = sol.y[:, -1]
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite state during integration")
    return y


def _renormalize(spec, y: np.ndarray) -> np.ndarray:
    tr = y[:: spec.dim + 1].sum()
    drift = abs(tr - 1.0)
    if drift > TRACE_DRIFT_TOL:
        warnings.warn(f"trace drifted by {drift:.2e}; renormalizing", RuntimeWarning, stacklevel=3)
        y = y / tr
    return y


def _check_full(L: Superoperator, rho0: DensityMatrix) -> None:
    if rho0.spec != L.spec:
        raise DimensionError(f"state on {rho0.spec}, generator on {L.spec}")
    if L.is_reduced:
        raise DimensionError("time evolution needs the full generator, not a restricted block")


def integrate(L: Superoperator, rho0: DensityMatrix, T: float, cfg: EvolveConfig = EvolveConfig()) -> DensityMatrix:
    """Evolve ``rho0`` for a duration ``T`` under ``L``."""
    _check_full(L, rho0)
    y = _advance(L, rho0.data.copy(), T, cfg)
    return DensityMatrix(L.spec, _renormalize(L.spec, y))


def residual(L: Superoperator, rho: DensityMatrix) -> float:
    """Relative generator residual ``||L vec rho||_1 / ||vec rho||_1``."""
    v = rho.data if L.index is None else rho.data[L.index]
    return float(np.abs(L.matrix @ v).sum() / np.abs(v).sum())


class EvolvedSteadyState(NamedTuple):
    state: DensityMatrix
    time: float
    residual: float


def steady_state_evolve(
    L: Superoperator, rho0: DensityMatrix, cfg: EvolveConfig = EvolveConfig()
) -> EvolvedSteadyState:
    """Evolve until the generator residual drops below ``cfg.ss_tol``."""
    _check_full(L, rho0)
    y = rho0.data.copy()
    t = 0.0
    while True:
        res = float(np.abs(L.matrix @ y).sum() / np.abs(y).sum())
        if res < cfg.ss_tol:
            y = _renormalize(L.spec, y)
            return EvolvedSteadyState(DensityMatrix(L.spec, y), t, res)
        if t >= cfg.t_max:
            raise NotConvergedError(
                f"no steady state within t_max={cfg.t_max} (residual {res:.3e})",
                res,
                DensityMatrix(L.spec, y),
            )
        chunk = min(cfg.check_interval, cfg.t_max - t)
        y = _advance(L, y, chunk, cfg)
        t += chunk


def _sector_indices(L: Superoperator) -> np.ndarray | None:
    """Indices of the zero number-difference block, if ``L`` never leaves it."""
    labels = number_sector_labels(L.spec)
    coo = L.matrix.tocoo()
    if np.any(labels[coo.row] != labels[coo.col]):
        return None
    return np.flatnonzero(labels == 0)


def physical_state(spec, vec: np.ndarray, clip_tol: float = CLIP_TOL) -> DensityMatrix:
    """Hermitize, clip eigenvalues in ``[-clip_tol, 0)`` and renormalize."""
    rho = DensityMatrix(spec, vec).matrix
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    w, U = np.linalg.eigh(rho)
    if w[0] < -clip_tol:
        raise NegativeStateError(f"steady state has eigenvalue {w[0]:.3e} < -{clip_tol:g}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        rho = (U * w) @ U.conj().T
        rho /= np.trace(rho).real
    return DensityMatrix.from_matrix(spec, rho)


def _reduced_system(L: Superoperator, use_sector: bool):
    """Block matrix, trace functional on it and the embedding index (or None)."""
    spec = L.spec
    t = trace_vector(spec.dim)
    if L.is_reduced:
        return L.matrix, t[L.index], L.index
    idx = _sector_indices(L) if use_sector else None
    if idx is None:
        return L.matrix, t, None
    return L.matrix[idx][:, idx], t[idx], idx


def _bordered(M: sp.spmatrix, t: np.ndarray) -> sp.csc_matrix:
    tcol = sp.csr_matrix(t.reshape(-1, 1))
    return sp.bmat([[M, tcol], [tcol.T, None]], format="csc", dtype=complex)


def _finish(L: Superoperator, M, sol: np.ndarray, idx, clip_tol: float, null_tol: float) -> DensityMatrix:
    n = M.shape[0]
    if not np.all(np.isfinite(sol)):
        raise DegenerateSteadyStateError("bordered system is singular (non-finite solution)")
    x = sol[:n]
    if np.abs(M @ x).sum() > null_tol * max(1.0, np.abs(x).sum()) or abs(sol[-1]) > null_tol:
        raise DegenerateSteadyStateError("bordered solve did not produce a null vector")
    if idx is not None:
        full = np.zeros(L.spec.vec_dim, dtype=complex)
        full[idx] = x
        x = full
    return physical_state(L.spec, x, clip_tol)


def steady_state_direct(
    L: Superoperator, max_dim: int = DIRECT_SOLVE_LIMIT, clip_tol: float = CLIP_TOL, use_sector: bool = True
) -> DensityMatrix:
    """Null vector of ``L`` with unit trace from the bordered system.

    ``[[L, t^T], [t, 0]] [x, s] = [0, 1]`` where ``t`` is the trace functional.
    Phase-covariant generators are restricted to their zero number-difference
    block first (generators built with ``sector=True`` already are); ``max_dim``
    bounds the size of the system actually factorized.
    """
    M, t, idx = _reduced_system(L, use_sector)
    n = M.shape[0]
    if n > max_dim:
        raise MemoryError(f"direct solve of size {n} exceeds limit {max_dim}")
    rhs = np.zeros(n + 1, dtype=complex)
    rhs[-1] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            sol = spla.spsolve(_bordered(M, t), rhs)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise DegenerateSteadyStateError(f"bordered system is singular: {exc}") from exc
    return _finish(L, M, sol, idx, clip_tol, 1e-8)


@dataclass(frozen=True)
class IterativeConfig:
    drop_tol: float = 1e-3
    fill_factor: float = 10.0
    rtol: float = 1e-13
    restart: int = 100
    maxiter: int = 50


def steady_state_iterative(
    L: Superoperator,
    cfg: IterativeConfig = IterativeConfig(),
    clip_tol: float = CLIP_TOL,
    use_sector: bool = True,
) -> DensityMatrix:
    """Same bordered system solved by ILU-preconditioned GMRES.

    For many-body generators the exact LU factor fills in almost completely,
    while an incomplete factor is a good enough preconditioner at a fraction
    of the memory.
    """
    M, t, idx = _reduced_system(L, use_sector)
    n = M.shape[0]
    B = _bordered(M, t)
    rhs = np.zeros(n + 1, dtype=complex)
    rhs[-1] = 1.0
    try:
        ilu = spla.spilu(B, drop_tol=cfg.drop_tol, fill_factor=cfg.fill_factor)
    except RuntimeError as exc:
        raise DegenerateSteadyStateError(f"incomplete factorization failed: {exc}") from exc
    P = spla.LinearOperator(B.shape, ilu.solve, dtype=complex)
    sol, info = spla.gmres(B, rhs, M=P, rtol=cfg.rtol, atol=0.0, restart=cfg.restart, maxiter=cfg.maxiter)
    if info != 0:
        res = float(np.linalg.norm(B @ sol - rhs))
        raise NotConvergedError(f"GMRES stopped with info={info} (residual {res:.3e})", res)
    return _finish(L, M, sol, idx, clip_tol, 1e-8)


def steady_state(L: Superoperator, max_direct: int = 2_000, clip_tol: float = CLIP_TOL) -> DensityMatrix:
    """Direct solve for small blocks and the iterative route beyond ``max_direct``."""
    if L.is_reduced:
        n = L.dim
    else:
        idx = _sector_indices(L)
        n = L.dim if idx is None else len(idx)
    if n <= max_direct:
        return steady_state_direct(L, max_dim=max(max_direct, n), clip_tol=clip_tol)
    return steady_state_iterative(L, clip_tol=clip_tol)


def top_level_population(rho: DensityMatrix) -> float:
    """Largest population of the highest retained Fock level over all oscillators."""
    spec = rho.spec
    return max(partial_trace(rho, j)[-1, -1].real for j in range(1, spec.n_osc + 1))


def cutoff_adequate(rho: DensityMatrix, tol: float = CUTOFF_TAIL_TOL) -> bool:
    return top_level_population(rho) < tol
