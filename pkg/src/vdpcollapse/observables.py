"""Steady-state diagnostics: phonon number, Mandel Q, order parameter, Wigner function."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hilbert import DensityMatrix, annihilation, number

WIGNER_EXTENT = (-5.0, 5.0, -5.0, 5.0)
WIGNER_RESOLUTION = 101
_VACUUM_TOL = 1e-12


@dataclass
class ObservableRecord:
    mean_phonon: list[float]
    mandel_q: list[Optional[float]]
    order_param: complex = 0j
    params: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mean_phonon": list(self.mean_phonon),
            "mandel_q": list(self.mandel_q),
            "order_param": [self.order_param.real, self.order_param.imag],
            "params": self.params,
            "solver": self.solver,
        }


def mean_phonon(rho: DensityMatrix, j: int = 1) -> float:
    return rho.expect(number(rho.spec, j)).real


def mandel_q(rho: DensityMatrix, j: int = 1) -> Optional[float]:
    """``Var(n_j) / <n_j> - 1``; ``None`` for the vacuum, where it is undefined."""
    n = number(rho.spec, j)
    mean = rho.expect(n).real
    if mean < _VACUUM_TOL:
        return None
    second = rho.expect(n @ n).real
    return (second - mean * mean) / mean - 1.0


def expect_a(rho1: np.ndarray) -> complex:
    """``<a>`` of a one-body ``d x d`` density matrix."""
    d = rho1.shape[0]
    amp = np.sqrt(np.arange(1, d))
    # Tr(a rho) = sum_n sqrt(n) rho[n, n-1]
    return complex(np.sum(amp * np.diagonal(rho1, offset=-1)))


def order_param(states: Sequence[np.ndarray], exclude: int) -> complex:
    """``(1/N) sum_{j' != exclude} <a>_{j'}`` over one-body matrices (``exclude`` is 1-based)."""
    N = len(states)
    if N < 2:
        raise ValueError("order parameter needs at least two oscillators")
    if not 1 <= exclude <= N:
        raise IndexError(f"exclude index {exclude} outside 1..{N}")
    return sum(expect_a(r) for i, r in enumerate(states, start=1) if i != exclude) / N


def record_for(rho: DensityMatrix, params: dict | None = None, solver: dict | None = None) -> ObservableRecord:
    js = range(1, rho.spec.n_osc + 1)
    a1 = rho.expect(annihilation(rho.spec, 1)) if rho.spec.n_osc else 0j
    return ObservableRecord(
        mean_phonon=[mean_phonon(rho, j) for j in js],
        mandel_q=[mandel_q(rho, j) for j in js],
        order_param=a1,
        params=dict(params or {}),
        solver=dict(solver or {}),
    )


# --- Wigner function ------------------------------------------------------


@dataclass
class WignerGrid:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # values[iy, ix]
    support_warning: bool = False

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.x[0], self.x[-1], self.y[0], self.y[-1])

    def integral(self) -> float:
        dx = self.x[1] - self.x[0]
        dy = self.y[1] - self.y[0]
        return float(self.values.sum() * dx * dy)

    def radial_profile(self, n_bins: int = 40) -> tuple[np.ndarray, np.ndarray]:
        """Angle-averaged W(|alpha|) over the inscribed disc."""
        X, Y = np.meshgrid(self.x, self.y)
        R = np.hypot(X, Y)
        rmax = min(abs(self.x[0]), self.x[-1], abs(self.y[0]), self.y[-1])
        edges = np.linspace(0.0, rmax, n_bins + 1)
        which = np.digitize(R.ravel(), edges) - 1
        ok = (which >= 0) & (which < n_bins)
        sums = np.bincount(which[ok], weights=self.values.ravel()[ok], minlength=n_bins)
        counts = np.bincount(which[ok], minlength=n_bins)
        centers = 0.5 * (edges[1:] + edges[:-1])
        with np.errstate(invalid="ignore"):
            prof = sums / counts
        keep = counts > 0
        return centers[keep], prof[keep]

    def argmax(self) -> tuple[float, float]:
        iy, ix = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.x[ix]), float(self.y[iy])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "W"])
            for iy, yv in enumerate(self.y):
                for ix, xv in enumerate(self.x):
                    w.writerow([f"{xv:.6g}", f"{yv:.6g}", f"{self.values[iy, ix]:.10e}"])

    def to_dict(self) -> dict:
        return {
            "extent": list(map(float, self.extent)),
            "resolution": [len(self.x), len(self.y)],
            "integral": self.integral(),
            "support_warning": self.support_warning,
        }


def _displacement_basis(d: int, beta_max: float):
    """Eigen-decomposition of the truncated generator ``-i (a^dag - a)``.

    The working space is large enough that the low ``d x d`` block of
    ``exp(beta a^dag - beta* a)`` is converged for ``|beta| <= beta_max``.
    """
    M = max(d + 20, int(math.ceil((beta_max + math.sqrt(d) + 8.0) ** 2)))
    off = np.sqrt(np.arange(1, M))
    # H0 = -i (a^dag - a) is real antisymmetric times -i: Hermitian tridiagonal
    H0 = np.zeros((M, M), dtype=complex)
    H0[np.arange(1, M), np.arange(M - 1)] = -1j * off
    H0[np.arange(M - 1), np.arange(1, M)] = 1j * off
    e, U = np.linalg.eigh(H0)
    return e, U[:d, :]


def wigner(
    rho1: np.ndarray,
    extent: tuple[float, float, float, float] = WIGNER_EXTENT,
    resolution: int | tuple[int, int] = WIGNER_RESOLUTION,
    chunk: int = 512,
) -> WignerGrid:
    """Wigner function of a one-body state via displaced parity.

    ``W(alpha) = (2/pi) Tr[D(-alpha) rho D(alpha) P] = (2/pi) Tr[rho D(2 alpha) P]``
    with ``P`` the parity operator, normalized so that the phase-space integral
    is one. Only the ``d x d`` block of the displacement is needed, and the
    rotation ``D(r e^{i t}) = R(t) D(r) R(t)^dag`` with ``R = exp(i t n)`` reuses a
    single diagonalization for every grid point.
    """
    rho1 = np.asarray(rho1, dtype=complex)
    d = rho1.shape[0]
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    x = np.linspace(extent[0], extent[1], nx)
    y = np.linspace(extent[2], extent[3], ny)
    X, Y = np.meshgrid(x, y)
    beta = 2.0 * (X + 1j * Y).ravel()
    r = np.abs(beta)
    theta = np.angle(beta)

    e, Ud = _displacement_basis(d, float(r.max()))
    Udh = Ud.conj().T
    levels = np.arange(d)
    parity = (-1.0) ** levels
    # Tr[rho D P] = sum_{m,n} rho[n, m] D[m, n] (-1)^n
    weight = rho1.T * parity[None, :]
    out = np.empty(beta.size)
    for start in range(0, beta.size, chunk):
        sl = slice(start, start + chunk)
        phases = np.exp(1j * np.outer(r[sl], e))
        block = (Ud[None, :, :] * phases[:, None, :]) @ Udh  # D(r) low block, (p, d, d)
        rot = np.exp(1j * np.outer(theta[sl], levels))
        block = rot[:, :, None] * block * rot.conj()[:, None, :]
        out[sl] = np.einsum("pmn,mn->p", block, weight).real
    values = (2.0 / np.pi) * out.reshape(ny, nx)

    edge = np.concatenate([values[0], values[-1], values[:, 0], values[:, -1]])
    support_warning = bool(np.max(np.abs(edge)) > 1e-3 * np.max(np.abs(values)))
    return WignerGrid(x, y, values, support_warning)
