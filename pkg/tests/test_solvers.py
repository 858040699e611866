import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plapsim.function_space import lp_norm
from plapsim.initial_data import make_initial_data
from plapsim.mesh_basis import Domain, GridFunction, SpectralCoeffs, build_basis, synthesize
from plapsim.solvers import (
    EllipticStagnation,
    SolverConfig,
    SolverError,
    continuation,
    solve_dual,
    solve_elliptic,
    solve_parabolic,
)


@pytest.fixture(scope="module")
def b6():
    return build_basis(Domain.unit_square(), 6, 2)


@pytest.fixture(scope="module")
def smooth6(b6):
    return make_initial_data("smooth", b6)


@pytest.fixture(scope="module")
def primal15(b6, smooth6):
    return solve_parabolic(smooth6, b6, SolverConfig(p=1.5, mu=1e-3, t_end=0.1, dt_init=1e-3))


def test_config_validation():
    with pytest.raises(ValueError, match=r"\(1, 2\]"):
        SolverConfig(p=2.5)
    with pytest.raises(ValueError):
        SolverConfig(p=1.5, mu=-1)
    with pytest.raises(ValueError):
        SolverConfig(p=1.5, dt_policy="explicit")
    assert SolverConfig(p=1.5, snapshot_times=[0.3, 0.1]).snapshot_times == (0.1, 0.3)


@pytest.mark.parametrize("nu", [0.0, 0.5])
def test_heat_closed_form(b6, nu):
    u0 = SpectralCoeffs.unit(b6, 0)
    traj = solve_parabolic(u0, b6, SolverConfig(p=2.0, nu=nu, t_end=0.01, dt_init=1e-4))
    assert traj.times[-1] == pytest.approx(0.01, rel=1e-14)
    exact = math.exp(-(1 + nu) * 2 * math.pi**2 * 0.01)
    assert abs(traj.coeffs[-1, 0, 0] - exact) / exact < 1e-3
    assert np.all(traj.coeffs[-1, 1:, 0] == 0.0)


def test_l2_norm_nonincreasing(primal15):
    norms = primal15.l2_norms()
    assert np.all(np.diff(norms) < 0)


def test_trajectory_shape_and_diagnostics(primal15):
    assert len(primal15.diagnostics) == len(primal15) - 1
    assert np.all(np.diff(primal15.times) > 0)
    assert np.all(np.isfinite(primal15.coeffs))
    assert all(d.picard_iterations >= 1 for d in primal15.diagnostics)


def test_energy_identity_residual(b6, smooth6, primal15):
    assert max(d.energy_residual for d in primal15.diagnostics) <= 1e-8
    traj = solve_parabolic(smooth6, b6, SolverConfig(p=1.7, mu=1e-4, nu=0.2, t_end=0.05, dt_init=2e-3))
    assert max(d.energy_residual for d in traj.diagnostics) <= 1e-8


def test_snapshot_times_are_hit_exactly(b6, smooth6):
    marks = (0.0123, 0.031)
    traj = solve_parabolic(smooth6, b6, SolverConfig(p=1.6, mu=1e-3, t_end=0.04, dt_init=5e-3, snapshot_times=marks))
    for m in marks:
        assert np.any(traj.times == m)
    k = int(np.flatnonzero(traj.times == marks[0])[0])
    np.testing.assert_array_equal(traj.at(marks[0]).values, traj.coeffs[k])
    with pytest.raises(ValueError):
        traj.at(1.0)


@settings(max_examples=5)
@given(st.integers(0, 2**31 - 1))
def test_l2_contraction_between_solutions(seed):
    b = build_basis(Domain.unit_square(), 4, 2)
    rng = np.random.default_rng(seed)
    u0, w0 = (SpectralCoeffs(rng.standard_normal(b.size), b) for _ in range(2))
    cfg = SolverConfig(p=1.5, mu=1e-2, t_end=0.02, dt_init=2e-3)
    u, w = solve_parabolic(u0, b, cfg), solve_parabolic(w0, b, cfg)
    gaps = np.linalg.norm(u.coeffs - w.coeffs, axis=(1, 2))
    assert np.all(gaps <= gaps[0] * (1 + 1e-9))


def test_first_order_in_time(b6, smooth6):
    def run(dt):
        return solve_parabolic(smooth6, b6, SolverConfig(p=1.5, mu=1e-3, t_end=0.05, dt_init=dt)).coeffs[-1]

    # a reference 16x finer than the coarse run keeps its own error out of the ratio
    ref = run(2e-3 / 16)
    ratio = np.linalg.norm(run(2e-3) - ref) / np.linalg.norm(run(1e-3) - ref)
    assert 1.8 < ratio < 2.3


def test_adaptive_steps_grow(b6, smooth6):
    cfg = SolverConfig(p=1.5, mu=1e-4, t_end=0.2, dt_init=1e-5, dt_policy="adaptive", target_step_error=1e-3)
    traj = solve_parabolic(smooth6, b6, cfg)
    dts = np.diff(traj.times)
    assert dts[-1] > 10 * dts[0]
    assert traj.times[-1] == pytest.approx(0.2)


def test_picard_failure_reports_diagnostics(b6, smooth6):
    cfg = SolverConfig(p=1.3, mu=1e-8, t_end=0.01, dt_init=1e-3, picard_max=1, picard_tol=1e-14)
    with pytest.raises(SolverError) as info:
        solve_parabolic(smooth6, b6, cfg)
    err = info.value
    assert err.diagnostics["dt"] < cfg.dt_init * 2.0**-20
    assert err.partial is not None and len(err.partial) >= 1


def test_continuation_linear_case_has_zero_gaps(b6, smooth6):
    cfg = SolverConfig(p=2.0, t_end=0.02, dt_init=2e-3, snapshot_times=(0.01, 0.02))
    res = continuation(smooth6, b6, cfg, [1.0, 0.1, 0.0], [0.0])
    assert res.gaps == [0.0, 0.0]
    assert res.labels == [(0.0, 1.0), (0.0, 0.1), (0.0, 0.0)]


def test_continuation_gaps_shrink(b6, smooth6):
    cfg = SolverConfig(p=1.5, t_end=0.1, dt_init=2e-3, snapshot_times=tuple(np.linspace(0.01, 0.1, 10)))
    res = continuation(smooth6, b6, cfg, [1e-1, 1e-2, 1e-3], [0.0])
    assert len(res.mu_gaps) == 2
    assert res.mu_gaps[1] < res.mu_gaps[0]
    assert res.monotone
    u0_sup = lp_norm(synthesize(smooth6, b6), math.inf)
    for traj in res.trajectories:
        for k in range(len(traj)):
            assert lp_norm(synthesize(traj.snapshot(k), b6), math.inf) <= u0_sup + 1e-6


def test_continuation_orders_and_validation(b6, smooth6):
    cfg = SolverConfig(p=2.0, t_end=0.01, dt_init=5e-3)
    res = continuation(smooth6, b6, cfg, [1.0, 0.5], [0.2, 0.0])
    assert res.labels == [(0.2, 1.0), (0.0, 1.0), (0.0, 0.5)]
    res = continuation(smooth6, b6, cfg, [1.0, 0.5], [0.2, 0.0], reverse=True)
    assert res.labels == [(0.2, 1.0), (0.2, 0.5), (0.0, 0.5)]
    with pytest.raises(ValueError):
        continuation(smooth6, b6, cfg, [0.1, 1.0], [0.0])


def _lr(traj, r):
    b = traj.basis
    return np.array([lp_norm(synthesize(traj.snapshot(k), b), r) for k in range(len(traj))])


@pytest.mark.parametrize("r", [1.0, 1.5, 2.0])
def test_dual_contraction_without_correction(b6, primal15, r):
    phi0 = make_initial_data("rough_L2", b6, seed=7)
    dual = solve_dual(phi0, primal15, 0.1, 0.0, 0, steps=50)
    n = _lr(dual, r)
    assert np.all(np.diff(n) <= 1e-6)


@pytest.mark.parametrize("r", [1.8, 2.0])
def test_dual_contraction_with_correction(b6, primal15, r):
    phi0 = make_initial_data("rough_L2", b6, seed=7)
    dual = solve_dual(phi0, primal15, 0.1, 0.0, 1, steps=50)
    assert dual.b_flag == 1 and dual.frozen_source is primal15
    n = _lr(dual, r)
    assert np.all(np.diff(n) <= 1e-6)


def test_dual_linear_case_is_heat_flow(b6):
    u0 = SpectralCoeffs.unit(b6, 0)
    primal = solve_parabolic(u0, b6, SolverConfig(p=2.0, mu=1.0, t_end=0.01, dt_init=1e-3))
    phi0 = SpectralCoeffs.unit(b6, 3)
    nu, steps = 0.5, 20
    dual = solve_dual(phi0, primal, 0.01, nu, 0, steps=steps)
    lam = b6.eigenvalues[3]
    expected = (1 + (0.01 / steps) * (1 + nu) * lam) ** -steps
    assert dual.coeffs[-1, 3, 0] == pytest.approx(expected, rel=1e-10)


def test_dual_rejects_bad_anchor(b6, primal15, smooth6):
    with pytest.raises(ValueError):
        solve_dual(smooth6, primal15, 0.5, 0.0, 0)


def test_elliptic_zero_load(b6):
    u = solve_elliptic(GridFunction(np.zeros(b6.grid_shape), b6), b6, 1.5, [1e-2])
    assert not u.values.any()


def test_elliptic_homogeneity(b6):
    x, y = b6.mesh()
    f = GridFunction(np.sin(np.pi * x) * (1 + y), b6)
    p = 1.6
    ladder = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12]
    u1 = solve_elliptic(f, b6, p, ladder)
    s = 10.0
    us = solve_elliptic(GridFunction(s * f.values, b6), b6, p, ladder)
    np.testing.assert_allclose(us.values, s ** (1 / (p - 1)) * u1.values, rtol=1e-6, atol=1e-9 * np.abs(us.values).max())


def test_elliptic_stagnation_is_reported(b6):
    x, y = b6.mesh()
    f = GridFunction(np.sin(np.pi * x) * (1 + y), b6)
    with pytest.raises(EllipticStagnation) as info:
        solve_elliptic(f, b6, 1.3, [1e-8], tol=1e-14, picard_max=2)
    assert info.value.diagnostics["residual"] > 0
