"""Discrete weak-form operators: regularized diffusivity, p-Laplacian load,
Galerkin matrices and the linearized (dual) coefficient tensor.

All integrals are midpoint quadratures on the basis grid.  Matrices of the form
K_jk = sum_x w * grad a_j(x)^T C(x) grad a_k(x) are assembled by contracting
one axis at a time, which costs O(G M^4) instead of O(G M^4 * G) for a dense
product of sampled gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh_basis import EigenBasis, GridFunction, SpectralCoeffs, spectral_gradient

# nodes with |grad v| below this are treated as flat when mu = 0
FLAT_GRADIENT = 1e-14


class NonFiniteLoadError(FloatingPointError):
    def __init__(self, node):
        super().__init__(f"non-finite flux at grid node {node}")
        self.node = node


def _check_p(p: float) -> None:
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")


@dataclass(frozen=True, eq=False)
class Diffusivity:
    """a(mu, v) = (mu + |grad v|^2)^((p-2)/2) sampled on the grid.

    With mu = 0, flat nodes carry +inf and are listed in ``singular``; only
    the product a * grad v is ever used there, and it is set to zero.
    """

    mu: float
    p: float
    values: np.ndarray
    singular: np.ndarray
    basis: EigenBasis

    @property
    def field(self) -> GridFunction:
        if self.singular.any():
            raise ValueError("diffusivity has singular (flat-gradient) nodes at mu = 0")
        return GridFunction(self.values, self.basis)


def _gradient_sq(grad: np.ndarray, dim: int) -> np.ndarray:
    g = grad.reshape(grad.shape[:dim] + (-1,))
    return np.einsum("...i,...i->...", g, g)


def coeff_a(grad_v: GridFunction, mu: float, p: float) -> Diffusivity:
    _check_p(p)
    if mu < 0:
        raise ValueError("mu must be >= 0")
    dim = grad_v.basis.dim
    g2 = _gradient_sq(grad_v.values, dim)
    if p == 2.0:
        return Diffusivity(mu, p, np.ones_like(g2), np.zeros(g2.shape, bool), grad_v.basis)
    if mu > 0:
        return Diffusivity(mu, p, (mu + g2) ** ((p - 2) / 2), np.zeros(g2.shape, bool), grad_v.basis)
    singular = np.sqrt(g2) < FLAT_GRADIENT
    with np.errstate(divide="ignore"):
        vals = np.where(singular, np.inf, g2 ** ((p - 2) / 2))
    return Diffusivity(mu, p, vals, singular, grad_v.basis)


def flux(grad_v: GridFunction, mu: float, p: float) -> np.ndarray:
    """a(mu, v) grad v with the flat-node convention at mu = 0."""
    diff = coeff_a(grad_v, mu, p)
    a = np.where(diff.singular, 0.0, diff.values)
    extra = grad_v.values.ndim - grad_v.basis.dim
    return a.reshape(a.shape + (1,) * extra) * grad_v.values


def _derivative_kinds(n: int, axis: int) -> tuple[str, ...]:
    return tuple("d" if d == axis else "s" for d in range(n))


def nonlinear_load(c: SpectralCoeffs, mu: float, p: float, basis: EigenBasis) -> np.ndarray:
    """d_j = (a(mu, v) grad v, grad a_j) for each component; shape (K, N)."""
    basis.check(c.basis)
    grad = spectral_gradient(c, basis)
    fl = flux(grad, mu, p)
    # an overflowing |grad v|^2 would silently zero the flux through a = inf^(p-2)/2
    with np.errstate(over="ignore"):
        bad = ~np.isfinite(fl).reshape(basis.grid_shape + (-1,)).all(axis=-1)
        bad |= ~np.isfinite(_gradient_sq(grad.values, basis.dim))
    if bad.any():
        raise NonFiniteLoadError(tuple(int(i) for i in np.argwhere(bad)[0]))
    n = basis.dim
    return sum(basis.integrate_against(fl[..., a], _derivative_kinds(n, a)) for a in range(n))


def _pair_factor(basis: EigenBasis, axis: int, alpha: int, beta: int) -> np.ndarray:
    """P[i, m, m'] = F_alpha(x_i, m) F_beta(x_i, m') along one axis."""
    left = basis.factors("d" if axis == alpha else "s", axis)
    right = basis.factors("d" if axis == beta else "s", axis)
    return left[:, :, None] * right[:, None, :]


def _assemble_pair(basis: EigenBasis, weight: np.ndarray, alpha: int, beta: int) -> np.ndarray:
    n = basis.dim
    if n == 1:
        k4 = np.tensordot(weight, _pair_factor(basis, 0, alpha, beta), axes=([0], [0]))
        t = basis.tensor_index[0]
        return k4[np.ix_(t, t)]
    p1 = _pair_factor(basis, 0, alpha, beta)
    p2 = _pair_factor(basis, 1, alpha, beta)
    tmp = np.tensordot(weight, p2, axes=([1], [0]))  # (i1, m2, m2')
    k4 = np.tensordot(p1, tmp, axes=([0], [0]))  # (m1, m1', m2, m2')
    t1, t2 = basis.tensor_index
    return k4[t1[:, None], t1[None, :], t2[:, None], t2[None, :]]


def weak_matrix(basis: EigenBasis, coef: np.ndarray) -> np.ndarray:
    """K_jk = sum_x w grad a_j . C grad a_k for a scalar (isotropic) or grid+(n,n) tensor C."""
    n = basis.dim
    coef = np.asarray(coef, dtype=float)
    if coef.shape == basis.grid_shape:
        mats = [_assemble_pair(basis, coef, a, a) for a in range(n)]
    elif coef.shape == basis.grid_shape + (n, n):
        mats = [_assemble_pair(basis, coef[..., a, b], a, b) for a in range(n) for b in range(n)]
    else:
        raise ValueError(f"coefficient shape {coef.shape} does not fit grid {basis.grid_shape}")
    return basis.cell_volume * sum(mats)


@dataclass(frozen=True, eq=False)
class GalerkinOperator:
    """Stiffness matrix b_ji = (grad a_i, grad a_j) and the nonlinear load procedure."""

    basis: EigenBasis
    mu: float
    p: float
    stiffness_b: np.ndarray

    def nonlinear_load(self, c: SpectralCoeffs) -> np.ndarray:
        return nonlinear_load(c, self.mu, self.p, self.basis)

    def frozen_matrix(self, c: SpectralCoeffs) -> np.ndarray:
        """Weak matrix of a(mu, v(c)); the lagged-diffusivity linearization."""
        diff = coeff_a(spectral_gradient(c, self.basis), self.mu, self.p)
        if diff.singular.any():
            raise NonFiniteLoadError(tuple(int(i) for i in np.argwhere(diff.singular)[0]))
        return weak_matrix(self.basis, diff.values)


def galerkin_operator(basis: EigenBasis, mu: float, p: float) -> GalerkinOperator:
    _check_p(p)
    return GalerkinOperator(basis, mu, p, weak_matrix(basis, np.ones(basis.grid_shape)))


@dataclass(frozen=True, eq=False)
class DualTensor:
    """B_{i alpha j beta} = a delta_ij delta_ab - b (2-p) g_{i alpha} g_{j beta} / (mu + |g|^2)^((4-p)/2).

    ``components`` has shape grid + (N, n, N, n).  The mollifier of the
    continuous construction is not applied; ``g`` is the supplied gradient field.
    """

    mu: float
    p: float
    b_flag: int
    components: np.ndarray
    basis: EigenBasis

    def apply(self, grad_phi: GridFunction) -> np.ndarray:
        """(B grad phi)_{i alpha} on the grid; grad_phi has shape grid + (N, n)."""
        return np.einsum("...iajb,...jb->...ia", self.components, grad_phi.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.components)))

    def bound(self) -> float:
        return (3 - self.p) * self.mu ** ((self.p - 2) / 2)

    def weak_matrix(self) -> np.ndarray:
        """Block matrix ordered component-major: rows (i, j_mode), columns (l, k_mode)."""
        N = self.components.shape[self.basis.dim]
        blocks = [
            [weak_matrix(self.basis, self.components[..., i, :, l, :]) for l in range(N)]
            for i in range(N)
        ]
        return np.block(blocks)


def dual_tensor(grad_v: GridFunction, mu: float, p: float, b_flag: int) -> DualTensor:
    if mu <= 0:
        raise ValueError("dual tensor needs mu > 0")
    if b_flag not in (0, 1):
        raise ValueError("b_flag must be 0 or 1")
    _check_p(p)
    basis = grad_v.basis
    g = grad_v.values
    N, n = g.shape[-2], g.shape[-1]
    g2 = _gradient_sq(g, basis.dim)
    a = (mu + g2) ** ((p - 2) / 2)
    eye = np.einsum("ij,ab->iajb", np.eye(N), np.eye(n))
    comps = a[..., None, None, None, None] * eye
    if b_flag:
        w = (2 - p) / (mu + g2) ** ((4 - p) / 2)
        comps = comps - w[..., None, None, None, None] * np.einsum("...ia,...jb->...iajb", g, g)
    return DualTensor(mu, p, b_flag, comps, basis)


def b_budget(mu: float, w_l2: float, domain_T_const: float = 1.0, *, p: float, c: float = 1.0) -> float:
    """B(mu, w) = c ||w||_2^2 + c(Omega, T) mu^(p/2); both constants are inputs."""
    if min(mu, w_l2, domain_T_const, c) < 0:
        raise ValueError("b_budget inputs must be nonnegative")
    return c * w_l2**2 + domain_T_const * mu ** (p / 2)
