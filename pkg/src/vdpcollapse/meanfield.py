"""Self-consistent factorized (mean-field) description of N globally coupled oscillators.

The one-body states ``rho_j`` are co-evolved with their drives
``A_j = (1/N) sum_{k != j} <a>_k`` refreshed at every Runge-Kutta stage.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np
from scipy.optimize import brentq

from .classical import delta_c_meanfield_classical
from .evolve import steady_state_direct
from .hilbert import coherent_ket, make_space
from .liouvillian import SystemParams, meanfield_split

logger = logging.getLogger(__name__)

COLLAPSE_THRESHOLD = 1e-4


class MeanFieldNotConverged(RuntimeError):
    def __init__(self, message: str, state: "MeanFieldState", a_history: np.ndarray):
        super().__init__(message)
        self.state = state
        self.a_history = a_history


class NoTransitionInRange(RuntimeError):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    omegas: np.ndarray
    delta: float

    def __len__(self) -> int:
        return len(self.omegas)


def frequency_grid(delta: float, N: int, rng: Optional[np.random.Generator] = None) -> FrequencyGrid:
    """Equally spaced quadrature of the uniform distribution on ``[-delta/2, delta/2]``.

    With ``rng`` the frequencies are instead sampled from that distribution.
    """
    if N < 2:
        raise ValueError(f"frequency grid needs N >= 2, got {N}")
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if rng is None:
        omegas = -delta / 2 + delta * np.arange(N) / (N - 1)
    else:
        omegas = np.sort(rng.uniform(-delta / 2, delta / 2, N))
    return FrequencyGrid(omegas, float(delta))


@dataclass(frozen=True)
class MeanFieldConfig:
    dt: float = 0.01
    t_max: float = 2000.0
    tol: float = 1e-9
    check_interval: float = 2.0
    seed_amplitude: Optional[float] = None  # default sqrt(G/(2 kappa)) capped by the cutoff

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0 or self.tol <= 0 or self.check_interval <= 0:
            raise ValueError(f"invalid mean-field config {self}")


@dataclass
class MeanFieldState:
    rhos: np.ndarray  # (N, d, d)
    omegas: np.ndarray
    A: np.ndarray  # per-oscillator drive, self excluded
    n_mean: float
    residual: float
    rotation: float = 0.0
    converged: bool = True
    time: float = 0.0
    a_history: np.ndarray = field(default=None, repr=False)

    @property
    def order_parameter(self) -> complex:
        """Ensemble average ``(1/N) sum_j <a>_j`` (no exclusion)."""
        return complex(np.mean(_expect_a(np.ascontiguousarray(self.rhos))))

    @property
    def abs_A(self) -> float:
        return float(np.max(np.abs(self.A)))

    @property
    def phonons(self) -> np.ndarray:
        d = self.rhos.shape[1]
        return np.einsum("jnn,n->j", self.rhos, np.arange(d)).real


# --- one-body kernel -----------------------------------------------------


@numba.njit(cache=True)
def _expect_a(rho):
    N, d, _ = rho.shape
    out = np.zeros(N, dtype=np.complex128)
    for j in range(N):
        s = 0j
        for m in range(d - 1):
            s += math.sqrt(m + 1.0) * rho[j, m + 1, m]
        out[j] = s
    return out


@numba.njit(cache=True)
def _drives(rho):
    a = _expect_a(rho)
    N = a.shape[0]
    total = a.sum()
    A = np.empty(N, dtype=np.complex128)
    for j in range(N):
        A[j] = (total - a[j]) / N
    return A


@numba.njit(cache=True)
def _rhs(rho, omegas, A, G, kappa, gamma, V, out, sq, aad, a2d):
    """Truncated one-body generator applied entrywise.

    ``sq[k] = sqrt(k)``; ``aad``/``a2d`` are the diagonals of ``a a^dag`` and
    ``a^dag^2 a^2`` in the truncated space.
    """
    N, d, _ = rho.shape
    for j in range(N):
        w = omegas[j]
        Aj = A[j]
        Ac = Aj.conjugate()
        for m in range(d):
            for n in range(d):
                r = rho[j, m, n]
                v = complex(0.0, -w * (m - n)) * r
                # G D[a^dag]
                g = -0.5 * (aad[m] + aad[n]) * r
                if m >= 1 and n >= 1:
                    g += sq[m] * sq[n] * rho[j, m - 1, n - 1]
                v += G * g
                # kappa D[a^2]
                k2 = -0.5 * (a2d[m] + a2d[n]) * r
                if m + 2 < d and n + 2 < d:
                    k2 += sq[m + 1] * sq[m + 2] * sq[n + 1] * sq[n + 2] * rho[j, m + 2, n + 2]
                v += kappa * k2
                # gamma D[a]
                l1 = -0.5 * (m + n) * r
                if m + 1 < d and n + 1 < d:
                    l1 += sq[m + 1] * sq[n + 1] * rho[j, m + 1, n + 1]
                v += gamma * l1
                # V (A [a^dag, rho] - A* [a, rho])
                c = 0j
                if m >= 1:
                    c += sq[m] * rho[j, m - 1, n]
                if n + 1 < d:
                    c -= sq[n + 1] * rho[j, m, n + 1]
                e = 0j
                if m + 1 < d:
                    e += sq[m + 1] * rho[j, m + 1, n]
                if n >= 1:
                    e -= sq[n] * rho[j, m, n - 1]
                v += V * (Aj * c - Ac * e)
                out[j, m, n] = v


@numba.njit(cache=True)
def _rk4(rho, omegas, G, kappa, gamma, V, dt, n_steps, sq, aad, a2d):
    k1 = np.empty_like(rho)
    k2 = np.empty_like(rho)
    k3 = np.empty_like(rho)
    k4 = np.empty_like(rho)
    y = rho.copy()
    for _ in range(n_steps):
        _rhs(y, omegas, _drives(y), G, kappa, gamma, V, k1, sq, aad, a2d)
        t = y + 0.5 * dt * k1
        _rhs(t, omegas, _drives(t), G, kappa, gamma, V, k2, sq, aad, a2d)
        t = y + 0.5 * dt * k2
        _rhs(t, omegas, _drives(t), G, kappa, gamma, V, k3, sq, aad, a2d)
        t = y + dt * k3
        _rhs(t, omegas, _drives(t), G, kappa, gamma, V, k4, sq, aad, a2d)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


class _OneBody:
    """Constants of the truncated one-body generator for a given cutoff."""

    def __init__(self, params: SystemParams, N: int, cutoff: int):
        d = cutoff
        k = np.arange(d, dtype=float)
        self.sq = np.sqrt(np.arange(d + 1, dtype=float))
        self.aad = np.where(k < d - 1, k + 1, 0.0)
        self.a2d = k * (k - 1)
        self.G = float(params.G)
        self.kappa = float(params.kappa)
        self.V = float(params.V)
        self.gamma = 2 * self.V * (N - 1) / N
        self.d = d

    def rhs(self, rho, omegas, A=None):
        if A is None:
            A = _drives(rho)
        out = np.empty_like(rho)
        _rhs(rho, omegas, A, self.G, self.kappa, self.gamma, self.V, out, self.sq, self.aad, self.a2d)
        return out

    def advance(self, rho, omegas, dt, n_steps):
        return _rk4(rho, omegas, self.G, self.kappa, self.gamma, self.V, dt, n_steps, self.sq, self.aad, self.a2d)

    def number_commutator(self, rho):
        """``-i [n, rho]`` entrywise."""
        k = np.arange(self.d)
        return -1j * (k[:, None] - k[None, :]) * rho


def stable_dt(params: SystemParams, N: int, cutoff: int, max_omega: float, A_bound: float) -> float:
    """Explicit RK4 step bounded by the spectral radius of the frozen one-body generator."""
    spec = make_space(1, cutoff)
    split = meanfield_split(spec, max_omega, params, N)
    L = split.at(A_bound).matrix.toarray()
    lam = np.max(np.abs(np.linalg.eigvals(L)))
    return 2.0 / lam if lam > 0 else math.inf


def _seed_states(N: int, cutoff: int, amplitude: float) -> np.ndarray:
    ket = coherent_ket(cutoff, amplitude)
    rho = np.outer(ket, ket.conj())
    return np.repeat(rho[None, :, :], N, axis=0).astype(np.complex128)


def solve_selfconsistent(
    params: SystemParams,
    N: int,
    cutoff: int,
    cfg: MeanFieldConfig = MeanFieldConfig(),
    rho0: Optional[np.ndarray] = None,
    strict: bool = True,
) -> MeanFieldState:
    """Steady solution of the factorized one-body equations by forward co-evolution.

    ``params.omegas`` must hold the ``N`` frequencies. A synchronized solution
    may rotate uniformly; convergence is then judged in the co-rotating frame,
    with the rotation rate taken from the drift of ``arg A``.
    """
    if N < 2:
        raise ValueError(f"mean-field model needs N >= 2, got {N}")
    omegas = np.asarray(params.omegas, dtype=float)
    if omegas.size != N:
        raise ValueError(f"{omegas.size} frequencies for N = {N}")
    body = _OneBody(params, N, cutoff)
    if rho0 is None:
        amp = cfg.seed_amplitude
        if amp is None:
            amp = min(math.sqrt(params.G / (2 * params.kappa)), 0.5 * math.sqrt(cutoff))
        rho = _seed_states(N, cutoff, amp)
    else:
        rho = np.array(rho0, dtype=np.complex128)
    A_bound = float(np.sqrt(cutoff))
    dt = min(cfg.dt, 0.9 * stable_dt(params, N, cutoff, float(np.max(np.abs(omegas))), A_bound))
    n_chunk = max(1, int(math.ceil(cfg.check_interval / dt)))
    h = cfg.check_interval / n_chunk

    t = 0.0
    history = [complex(np.mean(_expect_a(rho)))]
    prev_A = _drives(rho)
    res = math.inf
    rotation = 0.0
    while t < cfg.t_max:
        rho = body.advance(rho, omegas, h, n_chunk)
        t += cfg.check_interval
        if not np.all(np.isfinite(rho)):
            raise FloatingPointError("mean-field co-evolution produced non-finite values")
        A = _drives(rho)
        history.append(complex(np.mean(_expect_a(rho))))
        big = np.abs(A) > 1e-12
        if np.any(big):
            dphi = np.angle(A[big] / prev_A[big]) if np.all(np.abs(prev_A[big]) > 0) else np.zeros(1)
            rotation = float(np.median(dphi)) / cfg.check_interval
        else:
            rotation = 0.0
        deriv = body.rhs(rho, omegas, A) - rotation * body.number_commutator(rho)
        res = float(np.max(np.abs(deriv).sum(axis=(1, 2))))
        dmod = float(np.max(np.abs(np.abs(A) - np.abs(prev_A)))) / cfg.check_interval
        prev_A = A
        if res < cfg.tol and dmod < cfg.tol:
            break
    converged = res < cfg.tol
    rho = 0.5 * (rho + np.conj(np.transpose(rho, (0, 2, 1))))
    rho /= np.trace(rho, axis1=1, axis2=2).real[:, None, None]
    A = _drives(rho)
    n_diag = np.einsum("jnn,n->j", rho, np.arange(cutoff)).real
    state = MeanFieldState(
        rhos=rho,
        omegas=omegas,
        A=A,
        n_mean=float(n_diag.mean()),
        residual=res,
        rotation=rotation,
        converged=converged,
        time=t,
        a_history=np.asarray(history),
    )
    if not converged and strict:
        raise MeanFieldNotConverged(
            f"mean-field co-evolution not converged by t_max={cfg.t_max} (residual {res:.3e})",
            state,
            state.a_history,
        )
    return state


def closure_residual(state: MeanFieldState, params: SystemParams) -> float:
    """``max_j ||L_j(A_j) vec rho_j||_1`` with the drives recomputed from the states,
    evaluated with the sparse one-body superoperators in the co-rotating frame."""
    N, d, _ = state.rhos.shape
    spec = make_space(1, d)
    A = _drives(np.ascontiguousarray(state.rhos))
    worst = 0.0
    for j in range(N):
        split = meanfield_split(spec, float(state.omegas[j]) - state.rotation, params, N)
        L = split.at(A[j]).matrix
        v = state.rhos[j].reshape(-1, order="F")
        worst = max(worst, float(np.abs(L @ v).sum()))
    return worst


def collapsed_state(params: SystemParams, N: int, cutoff: int) -> np.ndarray:
    """One-body steady state with zero drive; it is independent of the frequency."""
    spec = make_space(1, cutoff)
    L = meanfield_split(spec, 0.0, params, N).at(0.0)
    return steady_state_direct(L).matrix


def collapse_growth_rate(params: SystemParams, N: int, cutoff: int) -> float:
    """Largest growth rate of drive perturbations about the collapsed solution.

    Around ``A = 0`` the one-body states are number-diagonal, and the
    coherences ``rho[m+1, m]`` of all oscillators couple linearly through
    ``delta A_j = (1/N) sum_{k != j} Tr(a delta rho_k)``; a positive rate means
    the collapsed solution is unstable (synchronized phase).
    """
    d = cutoff
    rho0 = collapsed_state(params, N, cutoff)
    omegas = np.asarray(params.omegas, dtype=float)
    spec = make_space(1, d)
    sector = [(m + 1) + m * d for m in range(d - 1)]  # vec index of |m+1><m|
    split0 = meanfield_split(spec, 0.0, params, N)
    static = split0.static.toarray()[np.ix_(sector, sector)]
    H = split0.number_part.toarray()[np.ix_(sector, sector)]
    # V [a^dag, rho0] projected on the sector
    drive = (split0.plus @ rho0.reshape(-1, order="F"))[sector]
    readout = np.sqrt(np.arange(1, d))  # Tr(a rho) = sum sqrt(m+1) rho[m+1, m]
    n = d - 1
    M = np.zeros((N * n, N * n), dtype=complex)
    for j in range(N):
        blk = slice(j * n, (j + 1) * n)
        M[blk, blk] = static + omegas[j] * H
        for k in range(N):
            if k != j:
                M[blk, k * n : (k + 1) * n] += np.outer(drive, readout) / N
    return float(np.max(np.linalg.eigvals(M).real))


@dataclass
class CriticalScan:
    delta_c: float
    deltas: np.ndarray
    abs_A: np.ndarray
    n_mean: np.ndarray
    converged: np.ndarray


def _classify(params_at, N, cutoff, cfg, threshold) -> tuple[float, float, bool]:
    state = solve_selfconsistent(params_at, N, cutoff, cfg, strict=False)
    return state.abs_A, state.n_mean, state.converged


def critical_delta_mf(
    kappa: float,
    V: float,
    N: int,
    cutoff: int,
    deltas,
    G: float = 1.0,
    cfg: MeanFieldConfig = MeanFieldConfig(),
    threshold: float = COLLAPSE_THRESHOLD,
    resolution: Optional[float] = None,
) -> CriticalScan:
    """Smallest detuning of the scan where ``|A|`` falls below ``threshold``,
    refined by bisection between the bracketing scan points down to ``resolution``
    (default: a tenth of the scan spacing)."""
    deltas = np.asarray(sorted(deltas), dtype=float)

    def at(delta):
        p = SystemParams(kappa=kappa, V=V, omegas=frequency_grid(delta, N).omegas, G=G)
        return _classify(p, N, cutoff, cfg, threshold)

    absA, nbar, conv = [], [], []
    first = None
    for i, delta in enumerate(deltas):
        a, n, c = at(delta)
        absA.append(a)
        nbar.append(n)
        conv.append(c)
        if a < threshold and first is None:
            first = i
    if first is None or first == 0:
        raise NoTransitionInRange(f"|A| does not fall below {threshold} inside the scan (first={first})")
    lo, hi = deltas[first - 1], deltas[first]
    if resolution is None:
        resolution = (hi - lo) / 10
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if at(mid)[0] < threshold:
            hi = mid
        else:
            lo = mid
    return CriticalScan(0.5 * (lo + hi), deltas, np.asarray(absA), np.asarray(nbar), np.asarray(conv))


def critical_delta_linear(kappa: float, V: float, N: int, cutoff: int, lo: float, hi: float, G: float = 1.0,
                          xtol: float = 1e-6) -> float:
    """Detuning where the collapsed solution loses stability (sign change of the growth rate)."""
    def rate(delta):
        p = SystemParams(kappa=kappa, V=V, omegas=frequency_grid(delta, N).omegas, G=G)
        return collapse_growth_rate(p, N, cutoff)

    if rate(lo) <= 0 or rate(hi) >= 0:
        raise NoTransitionInRange(f"growth rate does not change sign on [{lo}, {hi}]")
    return brentq(rate, lo, hi, xtol=xtol)


def classical_gap(kappa: float, V: float, N: int, cutoff: int, deltas, G: float = 1.0,
                  cfg: MeanFieldConfig = MeanFieldConfig(), resolution: Optional[float] = None) -> float:
    """``delta_c(classical, collective) - delta_c(mean field)``."""
    scan = critical_delta_mf(kappa, V, N, cutoff, deltas, G=G, cfg=cfg, resolution=resolution)
    return delta_c_meanfield_classical(V, G) - scan.delta_c
