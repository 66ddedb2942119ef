from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from vdpcollapse.evolve import (
    DegenerateSteadyStateError,
    EvolveConfig,
    NegativeStateError,
    NotConvergedError,
    cutoff_adequate,
    default_dt,
    integrate,
    physical_state,
    residual,
    steady_state,
    steady_state_direct,
    steady_state_evolve,
    steady_state_iterative,
    top_level_population,
)
from vdpcollapse.hilbert import (
    DensityMatrix,
    DimensionError,
    annihilation,
    coherent_state,
    fock_state,
    make_space,
    number,
    vacuum,
)
from vdpcollapse.liouvillian import (
    SystemParams,
    build_global,
    build_pair,
    build_single,
    dissipator,
    zero_generator,
)
from vdpcollapse.meanfield import frequency_grid
from vdpcollapse.observables import mean_phonon


def test_config_validation():
    with pytest.raises(ValueError):
        EvolveConfig(dt=0)
    with pytest.raises(ValueError):
        EvolveConfig(method="euler")
    assert default_dt(0.2) == 0.01
    assert default_dt(100.0) == pytest.approx(1e-5)


def test_null_generator_keeps_state():
    spec = make_space(1, 4)
    rho0 = coherent_state(spec, [0.5])
    out = integrate(zero_generator(spec), rho0, 3.0)
    np.testing.assert_array_equal(out.data, rho0.data)


def test_two_phonon_decay_monotone():
    spec = make_space(1, 4)
    a = annihilation(spec, 1)
    L = dissipator(a @ a, spec) * 0.5
    rho = fock_state(spec, [2])
    p0 = [0.0]
    for _ in range(40):
        rho = integrate(L, rho, 0.25, EvolveConfig(dt=0.01))
        assert abs(rho.trace() - 1) < 1e-10
        p0.append(rho.matrix[0, 0].real)
    assert np.all(np.diff(p0) > 0)
    assert p0[-1] > 0.99
    assert abs(rho.matrix[1, 1]) < 1e-14


def test_single_vdp_evolution_matches_direct():
    spec = make_space(1, 20)
    L = build_single(spec, SystemParams(kappa=0.2))
    direct = mean_phonon(steady_state_direct(L))
    evolved = steady_state_evolve(L, vacuum(spec), EvolveConfig(dt=0.01, ss_tol=1e-10, check_interval=5.0))
    assert abs(mean_phonon(evolved.state) - direct) < 1e-6
    assert evolved.residual < 1e-10
    assert evolved.time > 0


def test_reference_value_direct(reference):
    ref = reference["single_vdp"]
    spec = make_space(1, ref["cutoff"])
    rho = steady_state_direct(build_single(spec, SystemParams(kappa=ref["kappa"])))
    assert mean_phonon(rho) == pytest.approx(ref["mean_phonon"], abs=1e-10)
    assert cutoff_adequate(rho)


def test_diagonal_fixed_point_residual():
    spec = make_space(1, 12)
    L = build_single(spec, SystemParams(kappa=1.0))
    rho = steady_state_direct(L)
    assert residual(L, rho) < 1e-8
    np.testing.assert_allclose(rho.matrix, np.diag(np.diag(rho.matrix)), atol=1e-14)


def test_linear_channels_detailed_balance():
    spec = make_space(1, 40)
    a = annihilation(spec, 1)
    G, k = 1.0, 3.0
    L = dissipator(a.dag(), spec) * G + dissipator(a, spec) * k
    rho = steady_state_direct(L)
    assert mean_phonon(rho) == pytest.approx(G / (k - G), rel=1e-10)


def test_death_region_pair_evolution():
    spec = make_space(2, 8)
    L = build_pair(spec, SystemParams.pair(0.2, 3.0, 5.0))
    cfg = EvolveConfig(dt=0.01, ss_tol=1e-11, check_interval=5.0)
    from_vac = steady_state_evolve(L, vacuum(spec), cfg).state
    from_coh = steady_state_evolve(L, coherent_state(spec, [1.0, -0.5j]), cfg).state
    direct = steady_state_direct(L)
    for j in (1, 2):
        nv, nc, nd = (mean_phonon(r, j) for r in (from_vac, from_coh, direct))
        assert nv < 0.5 * 2.5
        assert abs(nv - nc) < 1e-6
        assert abs(nv - nd) < 1e-7


def test_not_converged_error_carries_residual():
    spec = make_space(1, 8)
    L = build_single(spec, SystemParams(kappa=0.2))
    with pytest.raises(NotConvergedError) as info:
        steady_state_evolve(L, vacuum(spec), EvolveConfig(dt=0.01, t_max=0.5, check_interval=0.25))
    assert info.value.residual > 1e-10
    assert info.value.state is not None


def test_degenerate_generator_reported():
    spec = make_space(1, 3)
    with pytest.raises(DegenerateSteadyStateError):
        steady_state_direct(zero_generator(spec))


def test_direct_size_limit():
    spec = make_space(1, 30)
    with pytest.raises(MemoryError):
        steady_state_direct(build_single(spec, SystemParams(kappa=0.2)), max_dim=10, use_sector=False)


def test_physical_state_clipping():
    spec = make_space(1, 2)
    tiny = DensityMatrix.from_matrix(spec, np.diag([1 + 1e-12, -1e-12]))
    rho = physical_state(spec, tiny.data)
    assert np.linalg.eigvalsh(rho.matrix).min() >= 0
    assert rho.trace() == pytest.approx(1)
    bad = DensityMatrix.from_matrix(spec, np.diag([1.1, -0.1]))
    with pytest.raises(NegativeStateError):
        physical_state(spec, bad.data)


def test_rk4_convergence_order():
    spec = make_space(1, 10)
    L = build_single(spec, SystemParams(kappa=0.2), omega=1.0)
    rho0 = coherent_state(spec, [1.0])
    ref = integrate(L, rho0, 1.0, EvolveConfig(dt=0.1 / 16)).data
    errs = [np.abs(integrate(L, rho0, 1.0, EvolveConfig(dt=h)).data - ref).max() for h in (0.1, 0.05)]
    order = math.log2(errs[0] / errs[1])
    assert order >= 3.5


def test_adaptive_matches_rk4():
    spec = make_space(1, 8)
    L = build_single(spec, SystemParams(kappa=0.5), omega=0.3)
    rho0 = coherent_state(spec, [0.8])
    a = integrate(L, rho0, 2.0, EvolveConfig(dt=0.005))
    b = integrate(L, rho0, 2.0, EvolveConfig(dt=0.01, method="adaptive"))
    assert np.abs(a.data - b.data).max() < 1e-8


def test_trace_drift_warns_and_renormalizes():
    spec = make_space(1, 3)
    # a non-trace-preserving generator: pure loss of normalization
    from vdpcollapse.liouvillian import Superoperator
    import scipy.sparse as sp

    L = Superoperator(-0.01 * sp.identity(spec.vec_dim), spec)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        out = integrate(L, vacuum(spec), 1.0)
    assert any("trace drifted" in str(x.message) for x in w)
    assert out.trace() == pytest.approx(1)


def test_iterative_matches_direct():
    spec = make_space(3, 3)
    p = SystemParams(kappa=2.0, V=3.0, omegas=frequency_grid(4.0, 3).omegas)
    L = build_global(spec, p, sector=True)
    a = steady_state_direct(L)
    b = steady_state_iterative(L)
    assert np.abs(a.data - b.data).max() < 1e-10
    c = steady_state(L, max_direct=10)
    assert np.abs(a.data - c.data).max() < 1e-10


def test_reduced_generator_embeds_full_state():
    spec = make_space(2, 4)
    p = SystemParams.pair(0.2, 3.0, 5.0)
    full = steady_state_direct(build_pair(spec, p), use_sector=False)
    red = steady_state_direct(build_pair(spec, p, sector=True))
    assert np.abs(full.data - red.data).max() < 1e-10
    with pytest.raises(DimensionError):
        integrate(build_pair(spec, p, sector=True), vacuum(spec), 1.0)


def test_cutoff_tail_check():
    spec = make_space(1, 4)
    rho = steady_state_direct(build_single(spec, SystemParams(kappa=0.2)))
    assert top_level_population(rho) > 1e-4
    assert not cutoff_adequate(rho)


def test_positivity_before_clipping():
    spec = make_space(2, 6)
    L = build_pair(spec, SystemParams.pair(0.2, 8.0, 1.0))
    rho = steady_state_direct(L, clip_tol=1e-8)
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-8
    n = number(spec, 1)
    assert rho.expect(n).real > 0
