from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density
from vdpcollapse.evolve import steady_state_direct
from vdpcollapse.hilbert import (
    DensityMatrix,
    coherent_ket,
    fock_state,
    make_space,
    partial_trace,
    vacuum,
)
from vdpcollapse.liouvillian import SystemParams, build_pair, build_single
from vdpcollapse.observables import (
    ObservableRecord,
    WignerGrid,
    expect_a,
    mandel_q,
    mean_phonon,
    order_param,
    record_for,
    wigner,
)


def thermal(d: int, nbar: float) -> np.ndarray:
    p = (nbar / (1 + nbar)) ** np.arange(d)
    return np.diag(p / p.sum())


def test_mean_phonon_examples(reference):
    spec = make_space(1, 5)
    assert mean_phonon(vacuum(spec)) == 0
    assert mean_phonon(fock_state(spec, [2])) == pytest.approx(2)
    ref = reference["single_vdp"]
    rho = steady_state_direct(build_single(make_space(1, ref["cutoff"]), SystemParams(kappa=ref["kappa"])))
    assert mean_phonon(rho) >= 2.5


def test_mandel_q_examples():
    spec = make_space(1, 80)
    assert mandel_q(fock_state(spec, [1])) == pytest.approx(-1)
    th = DensityMatrix.from_matrix(spec, thermal(80, 1.0))
    assert mandel_q(th) == pytest.approx(1.0, abs=1e-9)
    assert mandel_q(vacuum(spec)) is None


@given(st.floats(0, 2 * np.pi), st.integers(0, 2**31))
def test_mandel_q_rotation_invariant(theta, seed):
    d = 6
    rng = np.random.default_rng(seed)
    spec = make_space(1, d)
    rho = random_density(d, rng)
    R = np.diag(np.exp(-1j * theta * np.arange(d)))
    a = DensityMatrix.from_matrix(spec, rho)
    b = DensityMatrix.from_matrix(spec, R @ rho @ R.conj().T)
    assert mandel_q(a) == pytest.approx(mandel_q(b), abs=1e-10)
    assert mandel_q(a) >= -1 - 1e-12
    assert mean_phonon(a) <= d - 1 + 1e-12


def test_order_param_examples():
    d = 8
    vac = np.zeros((d, d))
    vac[0, 0] = 1
    assert order_param([vac] * 4, exclude=1) == 0
    ket = coherent_ket(d, 0.3 + 0.1j)
    coh = np.outer(ket, ket.conj())
    c = expect_a(coh)
    N = 5
    # the per-j exclusion over N identical states gives c (N-1)/N
    assert order_param([coh] * N, exclude=2) == pytest.approx(c * (N - 1) / N)
    diag = np.diag(np.linspace(1, 2, d) / np.linspace(1, 2, d).sum())
    assert order_param([diag, diag, diag], exclude=3) == 0
    with pytest.raises(ValueError):
        order_param([vac], exclude=1)
    with pytest.raises(IndexError):
        order_param([vac, vac], exclude=3)


def test_record_for_pair():
    spec = make_space(2, 6)
    rho = steady_state_direct(build_pair(spec, SystemParams.pair(0.2, 3.0, 5.0)))
    rec = record_for(rho, params={"V": 3}, solver={"cutoff": 6})
    assert isinstance(rec, ObservableRecord)
    assert rec.mean_phonon[0] == pytest.approx(rec.mean_phonon[1], abs=1e-10)
    assert all(q > 0 for q in rec.mandel_q)
    d = rec.to_dict()
    assert d["solver"]["cutoff"] == 6 and len(d["order_param"]) == 2


def test_wigner_vacuum():
    d = 10
    vac = np.zeros((d, d))
    vac[0, 0] = 1
    g = wigner(vac, resolution=101)
    X, Y = np.meshgrid(g.x, g.y)
    exact = (2 / np.pi) * np.exp(-2 * (X**2 + Y**2))
    assert np.abs(g.values - exact).max() < 1e-10
    assert g.values[50, 50] == pytest.approx(2 / np.pi, abs=1e-12)
    assert g.integral() == pytest.approx(1, abs=1e-2)
    assert not g.support_warning


def test_wigner_coherent_peak_location():
    d = 30
    alpha = 1.5 - 1.0j
    ket = coherent_ket(d, alpha)
    g = wigner(np.outer(ket, ket.conj()), resolution=101)
    x, y = g.argmax()
    assert x == pytest.approx(alpha.real, abs=0.051)
    assert y == pytest.approx(alpha.imag, abs=0.051)
    assert g.integral() == pytest.approx(1, abs=1e-2)


def test_wigner_fock_negative_at_origin():
    rho = np.zeros((5, 5))
    rho[1, 1] = 1
    g = wigner(rho, extent=(-1, 1, -1, 1), resolution=(3, 3))
    assert g.values[1, 1] == pytest.approx(-2 / np.pi, abs=1e-12)


def test_wigner_support_warning():
    ket = coherent_ket(40, 3.5)
    g = wigner(np.outer(ket, ket.conj()), extent=(-2, 2, -2, 2), resolution=21)
    assert g.support_warning


@given(st.integers(2, 8), st.integers(0, 2**31))
def test_wigner_real_and_normalized(d, seed):
    rng = np.random.default_rng(seed)
    # low-occupation random state so the support sits inside [-5, 5]^2
    rho = random_density(d, rng)
    g = wigner(rho, resolution=61)
    assert np.all(np.isfinite(g.values))
    assert g.integral() == pytest.approx(1, abs=1e-2)


def test_pair_insets():
    spec = make_space(2, 12)
    death = steady_state_direct(build_pair(spec, SystemParams.pair(0.2, 3.0, 5.0)))
    g = wigner(partial_trace(death, 1), resolution=61)
    r, prof = g.radial_profile()
    assert g.argmax() == (0.0, 0.0)
    assert np.all(np.diff(prof) < 1e-12)

    spec16 = make_space(2, 16)
    sync = steady_state_direct(build_pair(spec16, SystemParams.pair(0.2, 8.0, 1.0)))
    g = wigner(partial_trace(sync, 1), resolution=61)
    r, prof = g.radial_profile()
    assert r[np.argmax(prof)] > 0.8
    assert prof[0] < prof.max()


def test_wigner_grid_csv(tmp_path):
    g = WignerGrid(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.arange(4.0).reshape(2, 2))
    g.to_csv(tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "x,y,W"
    assert len(lines) == 5
    assert g.to_dict()["resolution"] == [2, 2]
