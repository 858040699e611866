import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plapsim.mesh_basis import (
    BasisMismatchError,
    Domain,
    GridFunction,
    SpectralCoeffs,
    build_basis,
    mode_index,
    project,
    quadrature_inner,
    spectral_gradient,
    spectral_hessian,
    spectral_laplacian,
    synthesize,
)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain((1.0, -1.0))
    with pytest.raises(ValueError):
        Domain((1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        Domain((1.0, 1.0), convex=True, hessian_constant_H=2.0)
    d = Domain((2.0, 0.5), convex=False, hessian_constant_H=1.5)
    assert d.dim == 2 and d.volume == pytest.approx(1.0)


def test_build_basis_rejects_bad_arguments(square):
    with pytest.raises(ValueError):
        build_basis(square, 4, oversample=1)
    with pytest.raises(ValueError):
        build_basis(square, 0)


def test_analytic_eigenvalues(basis6):
    assert basis6.eigenvalues[mode_index(basis6, (1, 1))] == pytest.approx(2 * np.pi**2, rel=1e-15)
    assert basis6.eigenvalues[mode_index(basis6, (2, 1))] == pytest.approx(5 * np.pi**2, rel=1e-15)
    assert 2 * np.pi**2 == pytest.approx(19.7392, abs=1e-4)


def test_eigenvalues_sorted_with_lexicographic_ties(basis6):
    lam = basis6.eigenvalues
    assert np.all(lam > 0) and np.all(np.diff(lam) >= 0)
    # (1,2) and (2,1) share an eigenvalue; the smaller multi-index comes first
    assert mode_index(basis6, (1, 2)) < mode_index(basis6, (2, 1))


def test_rectangle_eigenvalues():
    b = build_basis(Domain((2.0, 0.5)), 3, 2)
    m = b.modes
    expected = np.pi**2 * ((m[:, 0] / 2.0) ** 2 + (m[:, 1] / 0.5) ** 2)
    np.testing.assert_allclose(b.eigenvalues, expected, rtol=1e-15)


@pytest.mark.parametrize("modes,oversample", [(4, 2), (6, 3), (16, 4), (5, 2)])
def test_discrete_orthonormality_and_node_count(square, modes, oversample):
    b = build_basis(square, modes, oversample)
    assert all(n >= 2 * modes + 1 for n in b.grid_shape)
    A = synthesize(SpectralCoeffs(np.eye(b.size), b), b).values.reshape(-1, b.size)
    gram = b.cell_volume * A.T @ A
    assert np.max(np.abs(gram - np.eye(b.size))) <= 1e-12


def test_one_dimensional_basis():
    b = build_basis(Domain((3.0,)), 7, 2)
    assert b.dim == 1 and b.size == 7
    np.testing.assert_allclose(b.eigenvalues, (np.pi * np.arange(1, 8) / 3.0) ** 2)
    A = synthesize(SpectralCoeffs(np.eye(7), b), b).values.reshape(-1, 7)
    np.testing.assert_allclose(b.cell_volume * A.T @ A, np.eye(7), atol=1e-12)


def test_first_mode_formula_and_norm(basis6):
    x, y = basis6.mesh()
    a = synthesize(SpectralCoeffs.unit(basis6, 0), basis6).values[..., 0]
    np.testing.assert_allclose(a, 2 * np.sin(np.pi * x) * np.sin(np.pi * y), atol=1e-14)
    assert quadrature_inner(GridFunction(a, basis6), GridFunction(a, basis6)) == pytest.approx(1.0, abs=1e-12)


def test_project_unit_and_linear_combination(basis6):
    a = [synthesize(SpectralCoeffs.unit(basis6, j), basis6).values for j in range(6)]
    c = project(GridFunction(a[0], basis6), basis6).values[:, 0]
    expected = np.zeros(basis6.size)
    expected[0] = 1
    np.testing.assert_allclose(c, expected, atol=1e-12)
    # f = 3 a_2 - a_5 in one-based numbering
    c = project(GridFunction(3 * a[1] - a[4], basis6), basis6).values[:, 0]
    expected = np.zeros(basis6.size)
    expected[1], expected[4] = 3.0, -1.0
    np.testing.assert_allclose(c, expected, atol=1e-12)


def test_synthesize_zero_and_round_trip(basis6, rng):
    assert not synthesize(SpectralCoeffs.zeros(basis6), basis6).values.any()
    a3 = synthesize(SpectralCoeffs.unit(basis6, 2), basis6)
    back = synthesize(project(a3, basis6), basis6)
    np.testing.assert_allclose(back.values, a3.values, atol=1e-12)
    c = rng.standard_normal((basis6.size, 2))
    f = synthesize(SpectralCoeffs(c, basis6), basis6)
    np.testing.assert_allclose(project(f, basis6).values, c, atol=1e-12)
    # Parseval on a band-limited field
    assert np.sum(c**2) == pytest.approx(quadrature_inner(f, f), rel=1e-12)


def test_gradient_of_first_mode(basis6):
    x, y = basis6.mesh()
    g = spectral_gradient(SpectralCoeffs.unit(basis6, 0), basis6).values
    assert g.shape == basis6.grid_shape + (1, 2)
    np.testing.assert_allclose(g[..., 0, 0], 2 * np.pi * np.cos(np.pi * x) * np.sin(np.pi * y), atol=1e-12)
    np.testing.assert_allclose(g[..., 0, 1], 2 * np.pi * np.sin(np.pi * x) * np.cos(np.pi * y), atol=1e-12)


def test_laplacian_eigen_relation(basis6):
    for j in (0, 3, 10):
        e = SpectralCoeffs.unit(basis6, j)
        lap = spectral_laplacian(e, basis6).values
        np.testing.assert_allclose(lap, -basis6.eigenvalues[j] * synthesize(e, basis6).values, atol=1e-10)


@given(st.integers(0, 2**31 - 1))
def test_hessian_trace_is_laplacian(seed):
    b = build_basis(Domain.unit_square(), 5, 2)
    c = SpectralCoeffs(np.random.default_rng(seed).standard_normal((b.size, 2)), b)
    H = spectral_hessian(c, b).values
    lap = spectral_laplacian(c, b).values
    scale = np.max(np.abs(lap))
    assert np.max(np.abs(np.trace(H, axis1=-2, axis2=-1) - lap)) <= 1e-12 * scale
    np.testing.assert_array_equal(H, np.swapaxes(H, -1, -2))


@given(st.integers(0, 2**31 - 1))
def test_projection_is_adjoint_of_synthesis(seed):
    b = build_basis(Domain((1.0, 2.0)), 4, 2)
    rng = np.random.default_rng(seed)
    c = SpectralCoeffs(rng.standard_normal(b.size), b)
    f = GridFunction(rng.standard_normal(b.grid_shape), b)
    lhs = quadrature_inner(GridFunction(synthesize(c, b).values[..., 0], b), f)
    rhs = float(np.sum(c.values[:, 0] * project(f, b).values[:, 0]))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_laplacian_matches_scaled_synthesis(basis6, rng):
    c = SpectralCoeffs(rng.standard_normal(basis6.size), basis6)
    direct = synthesize(SpectralCoeffs(-basis6.eigenvalues[:, None] * c.values, basis6), basis6).values
    lap = spectral_laplacian(c, basis6).values
    assert np.max(np.abs(lap - direct)) <= 1e-13 * np.max(np.abs(direct))


def test_basis_mismatch_is_rejected(basis6, basis8):
    c = SpectralCoeffs.unit(basis6, 0)
    with pytest.raises(BasisMismatchError):
        synthesize(SpectralCoeffs(c.values, basis6), basis8)
    with pytest.raises(BasisMismatchError):
        project(GridFunction(np.zeros(basis6.grid_shape), basis6), basis8)
    with pytest.raises(BasisMismatchError):
        GridFunction(np.zeros((3, 3)), basis6)


def test_nonfinite_values_rejected(basis6):
    v = np.zeros(basis6.size)
    v[0] = np.nan
    with pytest.raises(ValueError):
        SpectralCoeffs(v, basis6)


def test_basis_ids_are_deterministic(square):
    assert build_basis(square, 4, 2).basis_id == build_basis(square, 4, 2).basis_id
    assert build_basis(square, 4, 2).basis_id != build_basis(square, 4, 3).basis_id
