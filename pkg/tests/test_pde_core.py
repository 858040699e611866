import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plapsim.mesh_basis import Domain, GridFunction, SpectralCoeffs, build_basis, spectral_gradient
from plapsim.pde_core import (
    NonFiniteLoadError,
    b_budget,
    coeff_a,
    dual_tensor,
    flux,
    galerkin_operator,
    nonlinear_load,
)

seeds = st.integers(0, 2**31 - 1)
small = build_basis(Domain.unit_square(), 4, 2)


def _grad_field(basis, values):
    return GridFunction(np.broadcast_to(values, basis.grid_shape + (1, basis.dim)).copy(), basis)


def test_coeff_a_examples(basis6):
    zero = _grad_field(basis6, np.zeros(2))
    for p in (1.2, 1.5, 1.9):
        np.testing.assert_allclose(coeff_a(zero, 1.0, p).values, 1.0)
    rng = np.random.default_rng(0)
    g = GridFunction(rng.standard_normal(basis6.grid_shape + (1, 2)), basis6)
    assert np.all(coeff_a(g, 0.3, 2.0).values == 1.0)
    # |grad v|^2 = 0.75
    g = _grad_field(basis6, np.array([np.sqrt(0.75), 0.0]))
    np.testing.assert_allclose(coeff_a(g, 0.25, 1.5).values, 1.0, rtol=1e-15)


def test_coeff_a_rejects_bad_parameters(basis6):
    g = _grad_field(basis6, np.zeros(2))
    with pytest.raises(ValueError):
        coeff_a(g, -1.0, 1.5)
    with pytest.raises(ValueError):
        coeff_a(g, 1.0, 2.5)


def test_coeff_a_singular_nodes_at_zero_mu(basis6):
    d = coeff_a(_grad_field(basis6, np.zeros(2)), 0.0, 1.5)
    assert d.singular.all() and np.isinf(d.values).all()
    with pytest.raises(ValueError):
        d.field
    assert not flux(_grad_field(basis6, np.zeros(2)), 0.0, 1.5).any()


@given(seeds, st.floats(1.01, 1.99), st.floats(1e-6, 10.0))
def test_coeff_a_bounds(seed, p, mu):
    g = GridFunction(5 * np.random.default_rng(seed).standard_normal(small.grid_shape + (1, 2)), small)
    a = coeff_a(g, mu, p).values
    assert np.all(a > 0)
    assert np.all(a <= mu ** ((p - 2) / 2) * (1 + 1e-15))


def test_load_linear_case(basis6):
    e1 = SpectralCoeffs.unit(basis6, 0)
    d = nonlinear_load(e1, 0.7, 2.0, basis6)[:, 0]
    expected = np.zeros(basis6.size)
    expected[0] = basis6.eigenvalues[0]
    np.testing.assert_allclose(d, expected, atol=1e-10)
    assert not nonlinear_load(SpectralCoeffs.zeros(basis6), 0.0, 1.5, basis6).any()


@given(seeds, st.floats(1.05, 2.0), st.sampled_from([0.0, 1e-3, 1.0]))
def test_load_is_monotone(seed, p, mu):
    rng = np.random.default_rng(seed)
    c1, c2 = rng.standard_normal((2, small.size))
    d1 = nonlinear_load(SpectralCoeffs(c1, small), mu, p, small)[:, 0]
    d2 = nonlinear_load(SpectralCoeffs(c2, small), mu, p, small)[:, 0]
    assert np.dot(d1 - d2, c1 - c2) >= -1e-12 * np.linalg.norm(d1 - d2) * np.linalg.norm(c1 - c2)


@given(seeds, st.floats(1.05, 1.95), st.floats(0.01, 100.0))
def test_load_homogeneity_at_zero_mu(seed, p, s):
    c = np.random.default_rng(seed).standard_normal(small.size)
    d = nonlinear_load(SpectralCoeffs(c, small), 0.0, p, small)
    ds = nonlinear_load(SpectralCoeffs(s * c, small), 0.0, p, small)
    np.testing.assert_allclose(ds, s ** (p - 1) * d, rtol=1e-8, atol=1e-12 * np.abs(ds).max())


def test_load_reports_nonfinite_node(basis6):
    c = np.zeros(basis6.size)
    c[0] = 1e200
    with pytest.raises(NonFiniteLoadError) as info:
        nonlinear_load(SpectralCoeffs(c, basis6), 0.0, 1.5, basis6)
    assert len(info.value.node) == 2


def test_stiffness_diagonal_is_eigenvalues(basis6):
    op = galerkin_operator(basis6, 0.1, 1.5)
    np.testing.assert_allclose(np.diag(op.stiffness_b), basis6.eigenvalues, rtol=1e-12)
    np.testing.assert_allclose(op.stiffness_b, np.diag(basis6.eigenvalues), atol=1e-9)


def test_frozen_matrix_reproduces_load(basis6):
    c = SpectralCoeffs(np.random.default_rng(3).standard_normal(basis6.size), basis6)
    op = galerkin_operator(basis6, 1e-2, 1.6)
    np.testing.assert_allclose(op.frozen_matrix(c) @ c.values, op.nonlinear_load(c), rtol=1e-10, atol=1e-10)


@given(seeds, st.floats(1.01, 1.99), st.floats(1e-4, 10.0))
def test_dual_tensor_without_correction_is_scalar(seed, p, mu):
    rng = np.random.default_rng(seed)
    gv = GridFunction(rng.standard_normal(small.grid_shape + (1, 2)), small)
    gphi = GridFunction(rng.standard_normal(small.grid_shape + (1, 2)), small)
    B = dual_tensor(gv, mu, p, 0)
    a = coeff_a(gv, mu, p).values
    np.testing.assert_array_equal(B.apply(gphi), a[..., None, None] * gphi.values)


@given(seeds, st.floats(1.01, 1.99), st.floats(1e-4, 10.0), st.floats(0.01, 100))
def test_dual_tensor_bound_and_symmetry(seed, p, mu, scale):
    g = GridFunction(scale * np.random.default_rng(seed).standard_normal(small.grid_shape + (2, 2)), small)
    B = dual_tensor(g, mu, p, 1)
    assert B.max_abs() < B.bound()
    comps = B.components
    np.testing.assert_array_equal(comps, np.transpose(comps, (0, 1, 4, 5, 2, 3)))


@given(seeds)
def test_dual_tensor_ellipticity(seed):
    p, mu = 1.5, 1.0
    g = GridFunction(3 * np.random.default_rng(seed).standard_normal(small.grid_shape + (1, 2)), small)
    B = dual_tensor(g, mu, p, 1)
    forms = B.components.reshape(small.grid_shape + (2, 2))
    lowest = np.linalg.eigvalsh(forms)[..., 0]
    g2 = np.sum(g.values**2, axis=(-1, -2))
    floor = (p - 1) * (mu + g2) ** ((p - 2) / 2)
    assert np.all(lowest >= floor * (1 - 1e-12))


def test_dual_tensor_near_linear_limit(basis6):
    g = GridFunction(np.random.default_rng(1).standard_normal(basis6.grid_shape + (1, 2)), basis6)
    B = dual_tensor(g, 1.0, 2.0 - 1e-9, 1)
    eye = np.eye(2).reshape(1, 2, 1, 2)
    assert np.max(np.abs(B.components - eye)) < 1e-7


def test_dual_tensor_rejects_zero_mu(basis6):
    with pytest.raises(ValueError):
        dual_tensor(_grad_field(basis6, np.ones(2)), 0.0, 1.5, 1)


def test_dual_weak_matrix_without_correction(basis6):
    c = SpectralCoeffs(np.random.default_rng(2).standard_normal(basis6.size), basis6)
    g = spectral_gradient(c, basis6)
    B = dual_tensor(g, 0.05, 1.5, 0)
    op = galerkin_operator(basis6, 0.05, 1.5)
    np.testing.assert_allclose(B.weak_matrix(), op.frozen_matrix(c), rtol=1e-12, atol=1e-12)


def test_b_budget_examples():
    assert b_budget(0.0, 3.0, p=1.5) == 9.0
    assert b_budget(1.0, 0.0, 1.0, p=1.5) == 1.0
    first = b_budget(0.0, 2.0, p=1.5, c=0.7)
    assert b_budget(0.0, 4.0, p=1.5, c=0.7) == pytest.approx(4 * first)
    with pytest.raises(ValueError):
        b_budget(-1.0, 1.0, p=1.5)
