"""Noiseless amplitude equations and closed-form stability boundaries.

For all-to-all coupling the amplitude equation reads

    d(alpha_j)/dt = (-i w_j + G/2 - kappa |alpha_j|^2 - V (N-1)/N) alpha_j
                    + (V/N) sum_{k != j} alpha_k

which for N = 2 is exactly the dissipatively coupled pair.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy.optimize import bisect

from .liouvillian import SystemParams

DEAD_TOL = 1e-6
ALIVE_TOL = 1e-3
DEFAULT_DT = 1e-3
DEFAULT_T = 200.0


class ClassicalIntegrationError(RuntimeError):
    pass


class NoTransitionError(ValueError):
    pass


@numba.njit(cache=True)
def _rhs(alpha, omegas, G, kappa, V, out):
    N = alpha.shape[0]
    total = 0j
    for k in range(N):
        total += alpha[k]
    self_damp = V * (N - 1) / N
    for j in range(N):
        a = alpha[j]
        r2 = a.real * a.real + a.imag * a.imag
        out[j] = (complex(G / 2 - kappa * r2 - self_damp, -omegas[j])) * a + (V / N) * (total - a)


@numba.njit(cache=True)
def _rk4_run(alpha0, omegas, G, kappa, V, dt, n_steps, record_every):
    N = alpha0.shape[0]
    n_rec = n_steps // record_every + 1
    rec = np.empty((n_rec, N), dtype=np.complex128)
    y = alpha0.copy()
    k1 = np.empty(N, dtype=np.complex128)
    k2 = np.empty(N, dtype=np.complex128)
    k3 = np.empty(N, dtype=np.complex128)
    k4 = np.empty(N, dtype=np.complex128)
    tmp = np.empty(N, dtype=np.complex128)
    rec[0] = y
    ok = True
    for s in range(1, n_steps + 1):
        _rhs(y, omegas, G, kappa, V, k1)
        for j in range(N):
            tmp[j] = y[j] + 0.5 * dt * k1[j]
        _rhs(tmp, omegas, G, kappa, V, k2)
        for j in range(N):
            tmp[j] = y[j] + 0.5 * dt * k2[j]
        _rhs(tmp, omegas, G, kappa, V, k3)
        for j in range(N):
            tmp[j] = y[j] + dt * k3[j]
        _rhs(tmp, omegas, G, kappa, V, k4)
        for j in range(N):
            y[j] = y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not (np.isfinite(y[j].real) and np.isfinite(y[j].imag)):
                ok = False
        if not ok:
            break
        if s % record_every == 0:
            rec[s // record_every] = y
    return rec, y, ok


@dataclass
class Trajectory:
    times: np.ndarray
    alphas: np.ndarray  # (n_times, N)

    @property
    def final(self) -> np.ndarray:
        return self.alphas[-1]

    def to_csv(self, path) -> None:
        N = self.alphas.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["t"]
            for j in range(1, N + 1):
                header += [f"re_alpha{j}", f"im_alpha{j}"]
            w.writerow(header)
            for t, row in zip(self.times, self.alphas):
                vals = [f"{t:.6g}"]
                for a in row:
                    vals += [f"{a.real:.10e}", f"{a.imag:.10e}"]
                w.writerow(vals)


def _integrate(params: SystemParams, alpha0, T: float, dt: float, record_every: int) -> Trajectory:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    alpha0 = np.asarray(alpha0, dtype=np.complex128).copy()
    omegas = np.asarray(params.omegas, dtype=np.float64)
    if alpha0.shape != omegas.shape:
        raise ValueError(f"{alpha0.size} amplitudes for {omegas.size} oscillators")
    n_steps = max(1, int(round(T / dt)))
    record_every = max(1, min(int(record_every), n_steps))
    rec, _, ok = _rk4_run(alpha0, omegas, params.G, params.kappa, params.V, dt, n_steps, record_every)
    if not ok:
        raise ClassicalIntegrationError("amplitude integration produced non-finite values")
    times = np.arange(rec.shape[0]) * dt * record_every
    return Trajectory(times, rec)


def integrate_pair(
    params: SystemParams, alpha0, T: float = DEFAULT_T, dt: float = DEFAULT_DT, record_every: int = 100
) -> Trajectory:
    if params.n_osc != 2:
        raise ValueError(f"pair integration needs two frequencies, got {params.n_osc}")
    return _integrate(params, alpha0, T, dt, record_every)


def integrate_meanfield_classical(
    params: SystemParams, N: int, alpha0, T: float = DEFAULT_T, dt: float = DEFAULT_DT, record_every: int = 100
) -> Trajectory:
    """c-number limit of the factorized one-body equations, drive ``A_j=(1/N) sum' alpha``."""
    if N < 2:
        raise ValueError(f"mean-field model needs N >= 2, got {N}")
    if params.n_osc != N:
        raise ValueError(f"{params.n_osc} frequencies for N = {N}")
    return _integrate(params, alpha0, T, dt, record_every)


@dataclass
class AmplitudeSteadyState:
    mean_square: np.ndarray  # per oscillator, averaged over the final window
    status: str  # "dead" | "oscillating" | "undetermined"
    t_end: float


def steady_amplitude(
    params: SystemParams,
    alpha0=None,
    T: float = DEFAULT_T,
    dt: float = DEFAULT_DT,
    window: float = 0.25,
    max_extensions: int = 6,
) -> AmplitudeSteadyState:
    """Classify the long-time motion as dead or oscillating and report ``|alpha_j|^2``.

    Runs in the undetermined band ``DEAD_TOL <= max|alpha| <= ALIVE_TOL`` are
    continued (doubling the duration) before giving up. Oscillation is only
    declared once the windowed mean square has stopped drifting, which guards
    against slow decay near the critical detuning.
    """
    N = params.n_osc
    if alpha0 is None:
        r = math.sqrt(params.G / (2 * params.kappa))
        alpha0 = r * np.exp(1j * np.linspace(0.0, math.pi / 2, N))
    y = np.asarray(alpha0, dtype=complex)
    t_total = 0.0
    span = T
    for _ in range(max_extensions + 1):
        traj = _integrate(params, y, span, dt, record_every=max(1, int(round(span / dt / 2000))))
        t_total += span
        y = traj.final
        amp = float(np.max(np.abs(y)))
        n_win = max(1, int(window * len(traj.times)))
        sq = np.abs(traj.alphas) ** 2
        ms = np.mean(sq[-n_win:], axis=0)
        prev = np.mean(sq[-2 * n_win : -n_win], axis=0)
        if amp < DEAD_TOL:
            return AmplitudeSteadyState(np.zeros(N), "dead", t_total)
        drift = float(np.max(np.abs(ms - prev)) / max(float(np.max(ms)), 1e-300))
        if amp > ALIVE_TOL and drift < 1e-3:
            return AmplitudeSteadyState(ms, "oscillating", t_total)
        span *= 2
    return AmplitudeSteadyState(ms, "undetermined", t_total)


def origin_growth_rate(params: SystemParams) -> float:
    """Largest real part of the linearization at the rest state."""
    N = params.n_osc
    J = np.full((N, N), params.V / N, dtype=complex)
    np.fill_diagonal(J, params.G / 2 - params.V * (N - 1) / N - 1j * np.asarray(params.omegas))
    return float(np.max(np.linalg.eigvals(J).real))


# --- boundaries ----------------------------------------------------------


def death_low(G: float = 1.0) -> float:
    return G


def death_high(delta: float, G: float = 1.0) -> float:
    return (delta**2 + G**2) / (2 * G)


def arnold_boundary(delta: float) -> float:
    return abs(delta)


def death_region(V: float, delta: float, G: float = 1.0) -> bool:
    """Rest state of the pair is linearly stable: ``G < V < (delta^2 + G^2)/(2G)``."""
    if G <= 0:
        raise ValueError(f"G must be positive, got {G}")
    return G < V < death_high(delta, G)


def delta_c_pair(V: float, G: float = 1.0) -> Optional[float]:
    """Detuning ``sqrt(2VG - G^2)`` where the pair stops oscillating; ``None`` if ``V < G/2``."""
    arg = 2 * V * G - G * G
    if arg < 0:
        return None
    return math.sqrt(arg)


def meanfield_boundary_residual(delta: float, V: float, G: float = 1.0) -> float:
    """``(delta/2) cot(delta/(2V)) + G/2 - V``."""
    x = delta / (2 * V)
    return (delta / 2) * math.cos(x) / math.sin(x) + G / 2 - V


def delta_c_meanfield_seed(V: float, G: float = 1.0) -> float:
    """Small-argument estimate: ``cot x ~ 1/x - x/3`` turns the boundary into ``delta^2 = 6VG``."""
    return math.sqrt(6 * V * G)


def delta_c_meanfield_classical(V: float, G: float = 1.0, xtol: float = 1e-12) -> float:
    """Smallest positive root of the classical collective-death boundary.

    The cotangent argument ``delta/(2V)`` is confined to ``(0, pi)``.
    """
    if V <= G / 2:
        raise NoTransitionError(f"no collective death for V = {V} <= G/2")
    lo = 1e-9 * V
    hi = 2 * math.pi * V * (1 - 1e-12)
    f = lambda d: meanfield_boundary_residual(d, V, G)  # noqa: E731
    if f(lo) * f(hi) > 0:
        raise NoTransitionError(f"boundary residual has no sign change on ({lo}, {hi})")
    # a sign change exists in (0, 2 pi V); the seed narrows it when it brackets
    seed = delta_c_meanfield_seed(V, G)
    if lo < seed < hi:
        if f(seed) < 0:
            hi = seed
        else:
            lo = seed
    return bisect(f, lo, hi, xtol=xtol, maxiter=400)


@dataclass(frozen=True)
class Boundaries:
    G: float
    V: float

    @property
    def death_low(self) -> float:
        return death_low(self.G)

    def death_high(self, delta: float) -> float:
        return death_high(delta, self.G)

    def arnold(self, delta: float) -> float:
        return arnold_boundary(delta)

    @property
    def delta_c_pair(self) -> Optional[float]:
        return delta_c_pair(self.V, self.G)

    @property
    def delta_c_mf(self) -> float:
        return delta_c_meanfield_classical(self.V, self.G)
