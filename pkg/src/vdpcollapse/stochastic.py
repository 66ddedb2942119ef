"""Classical stochastic model of the dissipatively coupled pair.

Phase space is ``X = (x1, y1, x2, y2)`` with ``alpha_j = x_j + i y_j``; the
equation is ``dX = mu dt + sigma dW`` with ``sigma sigma^T = D``. Moments of
this process are symmetrically ordered, so ``<|alpha|^2>`` estimates
``<a^dag a> + 1/2`` of the matching quantum state.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .liouvillian import SystemParams

CLAMP_TOL = 1e-12
CLAMP_FLAG_FRACTION = 0.01
DEFAULT_DT = 1e-3


class DiffusionError(ValueError):
    """Diffusion matrix is not positive semidefinite at the given state."""


def _check_pair(params: SystemParams) -> None:
    if params.n_osc != 2:
        raise ValueError(f"stochastic model is defined for a pair, got {params.n_osc} oscillators")


def drift(X, params: SystemParams) -> np.ndarray:
    """Drift vector; ``X`` may carry leading batch axes."""
    _check_pair(params)
    X = np.asarray(X, dtype=float)
    w1, w2 = params.omegas
    G, k, V = params.G, params.kappa, params.V
    x1, y1, x2, y2 = X[..., 0], X[..., 1], X[..., 2], X[..., 3]
    g1 = G / 2 - k * (x1 * x1 + y1 * y1 - 1) - V / 2
    g2 = G / 2 - k * (x2 * x2 + y2 * y2 - 1) - V / 2
    return np.stack(
        [
            w1 * y1 + g1 * x1 + V / 2 * x2,
            -w1 * x1 + g1 * y1 + V / 2 * y2,
            w2 * y2 + g2 * x2 + V / 2 * x1,
            -w2 * x2 + g2 * y2 + V / 2 * y1,
        ],
        axis=-1,
    )


def drift_complex(alpha, params: SystemParams) -> np.ndarray:
    """``mu_j = (-i w_j + G/2 - kappa(|alpha_j|^2 - 1) - V/2) alpha_j + (V/2) alpha_j'``."""
    _check_pair(params)
    a = np.asarray(alpha, dtype=complex)
    w = np.asarray(params.omegas)
    g = -1j * w + params.G / 2 - params.kappa * (np.abs(a) ** 2 - 1) - params.V / 2
    return g * a + params.V / 2 * a[::-1]


def nu(X, params: SystemParams) -> tuple[float, float]:
    X = np.asarray(X, dtype=float)
    base = params.G / 2 - params.kappa + params.V / 2
    r1 = X[0] ** 2 + X[1] ** 2
    r2 = X[2] ** 2 + X[3] ** 2
    return base + 2 * params.kappa * r1, base + 2 * params.kappa * r2


def diffusion_matrix(X, params: SystemParams) -> np.ndarray:
    _check_pair(params)
    n1, n2 = nu(X, params)
    c = -params.V / 2
    return 0.5 * np.array(
        [
            [n1, 0.0, c, 0.0],
            [0.0, n1, 0.0, c],
            [c, 0.0, n2, 0.0],
            [0.0, c, 0.0, n2],
        ]
    )


@dataclass
class NoiseDecomposition:
    nu1: float
    nu2: float
    u_plus: float  # nan for V = 0
    u_minus: float
    lam_plus: float
    lam_minus: float
    sigma: np.ndarray
    D: np.ndarray
    clamped: bool = False


def _clamp(lam: float, tol: float) -> tuple[float, bool]:
    if lam >= 0:
        return lam, False
    if lam < -tol:
        raise DiffusionError(f"diffusion eigenvalue {lam:.3e} < 0; the classical model is invalid here")
    return 0.0, True


def noise_matrix(X, params: SystemParams, clamp_tol: float = CLAMP_TOL) -> NoiseDecomposition:
    """Closed-form symmetric square root of the diffusion matrix."""
    _check_pair(params)
    n1, n2 = nu(X, params)
    V = params.V
    D = diffusion_matrix(X, params)
    if V == 0:
        l1, c1 = _clamp(n1 / 2, clamp_tol)
        l2, c2 = _clamp(n2 / 2, clamp_tol)
        s1, s2 = math.sqrt(l1), math.sqrt(l2)
        sigma = np.diag([s1, s1, s2, s2])
        return NoiseDecomposition(n1, n2, math.nan, math.nan, max(l1, l2), min(l1, l2), sigma, D, c1 or c2)
    s = math.sqrt((n1 - n2) ** 2 + V * V)
    u_p = -(n1 - n2 + s) / V
    u_m = -(n1 - n2 - s) / V
    lam_p = (n1 + n2 + s) / 4
    lam_m = (n1 + n2 - s) / 4
    lam_p, cp = _clamp(lam_p, clamp_tol)
    lam_m, cm = _clamp(lam_m, clamp_tol)
    sp_, sm_ = math.sqrt(lam_p), math.sqrt(lam_m)
    inv = 1.0 / (u_p - u_m)
    a = (u_p * sp_ - u_m * sm_) * inv
    b = (sp_ - sm_) * inv
    c = (u_p * sm_ - u_m * sp_) * inv
    sigma = np.array(
        [
            [a, 0.0, b, 0.0],
            [0.0, a, 0.0, b],
            [b, 0.0, c, 0.0],
            [0.0, b, 0.0, c],
        ]
    )
    return NoiseDecomposition(n1, n2, u_p, u_m, lam_p, lam_m, sigma, D, cp or cm)


def euler_maruyama_step(
    X,
    params: SystemParams,
    dt: float,
    dW,
    drift_fn: Optional[Callable] = None,
    sigma: Optional[np.ndarray] = None,
) -> np.ndarray:
    """``X + mu(X) dt + sigma(X) dW`` with ``dW ~ Normal(0, dt I)``.

    ``drift_fn`` and a fixed ``sigma`` replace the model terms (e.g. a pure
    diffusion or a linear Ornstein-Uhlenbeck test); a fixed ``sigma`` allows
    batched ``X`` of shape ``(n, 4)``.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    X = np.asarray(X, dtype=float)
    dW = np.asarray(dW, dtype=float)
    mu = drift(X, params) if drift_fn is None else drift_fn(X)
    if sigma is None:
        if X.ndim != 1:
            raise ValueError("state-dependent noise needs a single 4-vector state")
        sigma = noise_matrix(X, params).sigma
    return X + mu * dt + dW @ np.asarray(sigma).T


# --- compiled path integration ----------------------------------------------


@numba.njit(cache=True)
def _sigma_entries(n1, n2, V, clamp_tol):
    """Returns (a, b, c, status, clamped); status 1 marks a hard PSD violation."""
    if V == 0.0:
        l1 = n1 / 2
        l2 = n2 / 2
        clamped = False
        if l1 < 0.0:
            if l1 < -clamp_tol:
                return 0.0, 0.0, 0.0, 1, False
            l1 = 0.0
            clamped = True
        if l2 < 0.0:
            if l2 < -clamp_tol:
                return 0.0, 0.0, 0.0, 1, False
            l2 = 0.0
            clamped = True
        return math.sqrt(l1), 0.0, math.sqrt(l2), 0, clamped
    s = math.sqrt((n1 - n2) ** 2 + V * V)
    u_p = -(n1 - n2 + s) / V
    u_m = -(n1 - n2 - s) / V
    lam_p = (n1 + n2 + s) / 4
    lam_m = (n1 + n2 - s) / 4
    clamped = False
    if lam_m < 0.0:
        if lam_m < -clamp_tol:
            return 0.0, 0.0, 0.0, 1, False
        lam_m = 0.0
        clamped = True
    if lam_p < 0.0:
        if lam_p < -clamp_tol:
            return 0.0, 0.0, 0.0, 1, False
        lam_p = 0.0
        clamped = True
    sp_ = math.sqrt(lam_p)
    sm_ = math.sqrt(lam_m)
    inv = 1.0 / (u_p - u_m)
    return (u_p * sp_ - u_m * sm_) * inv, (sp_ - sm_) * inv, (u_p * sm_ - u_m * sp_) * inv, 0, clamped


@numba.njit(cache=True)
def _em_chunk(X, w1, w2, G, kappa, V, dt, dW, accumulate, acc, clamp_tol):
    """Advance one path over ``dW.shape[0]`` steps in place.

    ``dW`` rows are Wiener increments (already scaled by sqrt(dt)). When
    ``accumulate`` is set, ``|alpha_1|^2`` and ``|alpha_2|^2`` after each step
    are added to ``acc``. Returns (status, clamp count); status 1 means the
    diffusion lost positivity, status 2 a non-finite state.
    """
    clamps = 0
    base = G / 2 - kappa + V / 2
    for s in range(dW.shape[0]):
        x1 = X[0]
        y1 = X[1]
        x2 = X[2]
        y2 = X[3]
        r1 = x1 * x1 + y1 * y1
        r2 = x2 * x2 + y2 * y2
        g1 = G / 2 - kappa * (r1 - 1) - V / 2
        g2 = G / 2 - kappa * (r2 - 1) - V / 2
        a, b, c, status, clamped = _sigma_entries(base + 2 * kappa * r1, base + 2 * kappa * r2, V, clamp_tol)
        if status != 0:
            return status, clamps
        if clamped:
            clamps += 1
        d0 = dW[s, 0]
        d1 = dW[s, 1]
        d2 = dW[s, 2]
        d3 = dW[s, 3]
        X[0] = x1 + (w1 * y1 + g1 * x1 + V / 2 * x2) * dt + a * d0 + b * d2
        X[1] = y1 + (-w1 * x1 + g1 * y1 + V / 2 * y2) * dt + a * d1 + b * d3
        X[2] = x2 + (w2 * y2 + g2 * x2 + V / 2 * x1) * dt + b * d0 + c * d2
        X[3] = y2 + (-w2 * x2 + g2 * y2 + V / 2 * y1) * dt + b * d1 + c * d3
        if not (np.isfinite(X[0]) and np.isfinite(X[1]) and np.isfinite(X[2]) and np.isfinite(X[3])):
            return 2, clamps
        if accumulate:
            acc[0] += X[0] * X[0] + X[1] * X[1]
            acc[1] += X[2] * X[2] + X[3] * X[3]
    return 0, clamps


def initial_radius(params: SystemParams) -> float:
    """Twice the noiseless limit-cycle radius; initial points are uniform in this disc."""
    return 2.0 * math.sqrt(params.G / (2 * params.kappa))


def _initial_point(rng: np.random.Generator, radius: float) -> np.ndarray:
    out = np.empty(4)
    for j in range(2):
        r = radius * math.sqrt(rng.random())
        t = 2 * math.pi * rng.random()
        out[2 * j] = r * math.cos(t)
        out[2 * j + 1] = r * math.sin(t)
    return out


@dataclass
class Path:
    times: np.ndarray
    X: np.ndarray  # (n_times, 4)
    clamps: int


def simulate_path(
    params: SystemParams,
    T: float,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    X0=None,
    record_every: int = 100,
    clamp_tol: float = CLAMP_TOL,
) -> Path:
    """One seeded trajectory with the compiled integrator."""
    _check_pair(params)
    rng = np.random.default_rng(seed)
    X = _initial_point(rng, initial_radius(params)) if X0 is None else np.array(X0, dtype=float)
    n_steps = max(1, int(round(T / dt)))
    record_every = max(1, min(record_every, n_steps))
    w1, w2 = params.omegas
    rec = [X.copy()]
    steps = [0]
    clamps = 0
    acc = np.zeros(2)
    sq = math.sqrt(dt)
    done = 0
    while done < n_steps:
        m = min(record_every, n_steps - done)
        dW = rng.standard_normal((m, 4)) * sq
        status, c = _em_chunk(X, w1, w2, params.G, params.kappa, params.V, dt, dW, False, acc, clamp_tol)
        _raise_status(status)
        clamps += c
        done += m
        rec.append(X.copy())
        steps.append(done)
    return Path(np.array(steps) * dt, np.array(rec), clamps)


def _raise_status(status: int) -> None:
    if status == 1:
        raise DiffusionError("diffusion matrix lost positivity along a trajectory")
    if status == 2:
        raise FloatingPointError("stochastic trajectory produced non-finite values")


@dataclass
class EnsembleStats:
    mean: np.ndarray  # per oscillator, mean of |alpha_j|^2
    stderr: np.ndarray
    n_traj: int
    clamp_fraction: float
    flagged: bool
    per_traj: np.ndarray  # (n_traj, 2) time averages

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
            "n_traj": self.n_traj,
            "clamp_fraction": self.clamp_fraction,
            "flagged": self.flagged,
        }


def ensemble_mean_square(
    params: SystemParams,
    n_traj: int = 1000,
    T_transient: float = 100.0,
    T_average: float = 100.0,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    chunk: int = 20_000,
    clamp_tol: float = CLAMP_TOL,
) -> EnsembleStats:
    """Ensemble and time average of ``|alpha_j|^2`` after a transient.

    Each trajectory draws its initial point and increments from its own
    stream spawned from ``seed``, so results do not depend on chunking.
    """
    _check_pair(params)
    if n_traj < 2:
        raise ValueError(f"need at least two trajectories, got {n_traj}")
    if dt <= 0 or T_average <= 0 or T_transient < 0:
        raise ValueError("dt and T_average must be positive, T_transient non-negative")
    n_tr = int(round(T_transient / dt))
    n_av = max(1, int(round(T_average / dt)))
    w1, w2 = params.omegas
    radius = initial_radius(params)
    sq = math.sqrt(dt)
    per_traj = np.empty((n_traj, 2))
    clamps = 0
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n_traj)):
        rng = np.random.default_rng(ss)
        X = _initial_point(rng, radius)
        acc = np.zeros(2)
        for n_steps, accumulate in ((n_tr, False), (n_av, True)):
            done = 0
            while done < n_steps:
                m = min(chunk, n_steps - done)
                dW = rng.standard_normal((m, 4)) * sq
                status, c = _em_chunk(X, w1, w2, params.G, params.kappa, params.V, dt, dW, accumulate, acc, clamp_tol)
                _raise_status(status)
                clamps += c
                done += m
        per_traj[i] = acc / n_av
    mean = per_traj.mean(axis=0)
    stderr = per_traj.std(axis=0, ddof=1) / math.sqrt(n_traj)
    frac = clamps / (n_traj * (n_tr + n_av))
    flagged = frac > CLAMP_FLAG_FRACTION
    if flagged:
        warnings.warn(f"{100 * frac:.2f}% of steps hit the diffusion clamp", RuntimeWarning, stacklevel=2)
    return EnsembleStats(mean, stderr, n_traj, frac, flagged, per_traj)


SUMMARY_COLUMNS = ["delta", "mean_abs2_1", "stderr_1", "mean_abs2_2", "stderr_2"]


def write_summary_csv(path, deltas, stats: list[EnsembleStats]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for d, s in zip(deltas, stats):
            w.writerow([f"{d:.6g}"] + [f"{v:.10e}" for v in (s.mean[0], s.stderr[0], s.mean[1], s.stderr[1])])
