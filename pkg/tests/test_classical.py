from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vdpcollapse.classical import (
    ALIVE_TOL,
    Boundaries,
    NoTransitionError,
    arnold_boundary,
    death_high,
    death_low,
    death_region,
    delta_c_meanfield_classical,
    delta_c_meanfield_seed,
    delta_c_pair,
    integrate_meanfield_classical,
    integrate_pair,
    meanfield_boundary_residual,
    origin_growth_rate,
    steady_amplitude,
)
from vdpcollapse.liouvillian import SystemParams
from vdpcollapse.meanfield import frequency_grid


def test_uncoupled_limit_cycle_radius():
    p = SystemParams.pair(0.2, 0.0, 1.0)
    traj = integrate_pair(p, [0.1, 0.2j], T=100)
    np.testing.assert_allclose(np.abs(traj.final), math.sqrt(2.5), rtol=1e-8)


def test_death_and_sync_points():
    dead = steady_amplitude(SystemParams.pair(0.2, 3.0, 5.0))
    assert dead.status == "dead"
    sync = steady_amplitude(SystemParams.pair(0.2, 8.0, 1.0))
    assert sync.status == "oscillating"
    assert np.all(sync.mean_square > ALIVE_TOL)


def test_pair_trajectory_matches_explicit_formula():
    p = SystemParams.pair(0.3, 2.0, 1.2)
    a = np.array([0.7 + 0.1j, -0.3 + 0.4j])
    w = np.array(p.omegas)
    rhs_ref = -1j * w * a + 0.5 * a - p.kappa * np.abs(a) ** 2 * a + (p.V / 2) * (a[::-1] - a)
    h = 1e-6
    traj = integrate_pair(p, a, T=h, dt=h, record_every=1)
    np.testing.assert_allclose((traj.final - a) / h, rhs_ref, rtol=1e-5)


def test_death_region_examples():
    assert death_region(3, 5, 1)
    assert not death_region(8, 1, 1)
    assert not death_region(0.5, 10, 1)
    with pytest.raises(ValueError):
        death_region(1, 1, 0)


@given(st.floats(1.01, 20), st.floats(0, 20), st.floats(0, 10))
def test_death_region_monotone_in_detuning(V, delta, extra):
    if death_region(V, delta):
        assert death_region(V, delta + extra)


def test_delta_c_pair_examples():
    assert delta_c_pair(10) == pytest.approx(math.sqrt(19))
    assert delta_c_pair(1) == pytest.approx(1)
    assert delta_c_pair(0.5) == 0
    assert delta_c_pair(0.4) is None


@given(st.floats(0.5, 100), st.floats(0.1, 5))
def test_delta_c_pair_identity(V, G):
    V = max(V, G / 2)
    dc = delta_c_pair(V, G)
    assert dc**2 + G**2 == pytest.approx(2 * V * G, rel=1e-12, abs=1e-12)


def test_boundaries_values():
    b = Boundaries(G=1.0, V=7.0)
    assert b.death_low == death_low() == 1
    assert b.death_high(3) == death_high(3) == 5
    assert b.arnold(-2) == arnold_boundary(-2) == 2
    assert b.delta_c_pair == pytest.approx(math.sqrt(13))
    assert b.delta_c_mf == pytest.approx(delta_c_meanfield_classical(7.0))
    for d in np.linspace(0, 10, 21):
        # AM-GM: the upper death boundary never dips below the Arnold line
        assert death_high(d) >= abs(d) - 1e-15
        assert (death_high(d) >= 1) == (abs(d) >= 1)
    assert death_high(1.0) == 1.0


@pytest.mark.parametrize("V", [5, 7, 10])
def test_collective_boundary_root(V, reference):
    root = delta_c_meanfield_classical(V)
    assert root == pytest.approx(reference["collective_boundary_roots"][str(V)], abs=1e-10)
    assert abs(meanfield_boundary_residual(root, V)) < 1e-9
    # dense scan oracle at step 1e-4 inside the principal branch
    grid = np.arange(1e-4, 2 * math.pi * V - 1e-3, 1e-4)
    vals = np.array([meanfield_boundary_residual(d, V) for d in grid[: int(1.5 * root / 1e-4)]])
    first = np.flatnonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]
    assert abs(grid[first] - root) <= 1e-4


@pytest.mark.parametrize("V", [3, 7, 20, 100])
def test_seed_is_within_five_percent(V):
    assert delta_c_meanfield_seed(V) == pytest.approx(delta_c_meanfield_classical(V), rel=0.05)


def test_collective_boundary_no_transition():
    with pytest.raises(NoTransitionError):
        delta_c_meanfield_classical(0.4)


def test_large_V_root_tracks_scan():
    V = 200.0
    root = delta_c_meanfield_classical(V)
    grid = np.linspace(0.5 * root, 1.5 * root, 20001)
    vals = np.array([meanfield_boundary_residual(d, V) for d in grid])
    cross = grid[np.flatnonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]]
    assert abs(cross - root) <= (grid[1] - grid[0]) * (1 + 1e-9)


def test_origin_rate_changes_sign_at_death_boundary():
    delta = 3.0
    hi = death_high(delta)
    for V, sign in ((1 - 1e-6 * 10, 1), (1 + 1e-5, -1), (hi - 1e-5, -1), (hi + 1e-5, 1)):
        rate = origin_growth_rate(SystemParams.pair(0.2, V, delta))
        assert np.sign(rate) == sign


def test_meanfield_classical_symmetry():
    p = SystemParams(kappa=0.2, V=2.0, omegas=np.zeros(5))
    a0 = np.full(5, 0.3 + 0.2j)
    traj = integrate_meanfield_classical(p, 5, a0, T=20)
    assert np.ptp(traj.alphas, axis=1).max() < 1e-12


def test_meanfield_classical_collapse_and_decoupling():
    V = 7.0
    dc = delta_c_meanfield_classical(V)
    N = 20
    p = SystemParams(kappa=0.2, V=V, omegas=frequency_grid(dc + 1.0, N).omegas)
    res = steady_amplitude(p)
    assert res.status == "dead"
    p0 = SystemParams(kappa=0.2, V=0.0, omegas=frequency_grid(3.0, N).omegas)
    traj = integrate_meanfield_classical(p0, N, np.full(N, 0.5), T=100)
    np.testing.assert_allclose(np.abs(traj.final), math.sqrt(2.5), rtol=1e-6)
    with pytest.raises(ValueError):
        integrate_meanfield_classical(p0, 1, [0.5], T=1)


def test_pair_noiseless_curve_dead_beyond_critical():
    V = 10.0
    dc = math.sqrt(19)
    for d in (dc + 0.1, 5.0, 6.0, 8.0):
        assert steady_amplitude(SystemParams.pair(0.05, V, d)).status == "dead"
    assert steady_amplitude(SystemParams.pair(0.05, V, 2.0)).status == "oscillating"


def test_trajectory_csv(tmp_path):
    traj = integrate_pair(SystemParams.pair(0.2, 1.0, 1.0), [1.0, 1.0j], T=0.1, dt=0.01, record_every=5)
    traj.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,re_alpha1,im_alpha1,re_alpha2,im_alpha2"
    assert len(lines) == 1 + len(traj.times)
