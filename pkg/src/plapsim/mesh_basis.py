"""Rectangle domains and the analytic Dirichlet sine eigenbasis.

The trial space is spanned by the tensor sine family

    a_m(x) = prod_i sqrt(2/L_i) sin(m_i pi x_i / L_i),    -Lap a_m = lambda_m a_m,
    lambda_m = pi^2 sum_i (m_i / L_i)^2,

sampled on a uniform midpoint grid.  Midpoint sampling is exact for the
orthonormality of every listed mode as long as the node count per dimension
exceeds the largest mode index, so transforms are plain separable matrix
products.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np


class BasisMismatchError(ValueError):
    """Raised when a field is used with a basis it was not built on."""


@dataclass(frozen=True)
class Domain:
    side_lengths: tuple[float, ...]
    convex: bool = True
    hessian_constant_H: float = 1.0

    def __post_init__(self):
        sides = tuple(float(s) for s in self.side_lengths)
        object.__setattr__(self, "side_lengths", sides)
        if len(sides) not in (1, 2):
            raise ValueError(f"only dim 1 or 2 is discretized, got dim={len(sides)}")
        if any(not np.isfinite(s) or s <= 0 for s in sides):
            raise ValueError(f"side lengths must be positive, got {sides}")
        if self.hessian_constant_H < 1:
            raise ValueError("hessian_constant_H must be >= 1")
        if self.convex and self.hessian_constant_H != 1.0:
            raise ValueError("a convex domain has hessian_constant_H = 1")

    @property
    def dim(self) -> int:
        return len(self.side_lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    @classmethod
    def unit_square(cls) -> "Domain":
        return cls((1.0, 1.0))


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Immutable Galerkin trial space plus its quadrature grid.

    ``modes`` lists multi-indices in ascending eigenvalue order (ties broken
    lexicographically).  ``tensor_index`` maps each listed mode to its slot in
    the dense ``(M, ..., M)`` coefficient tensor used by the separable
    transforms.
    """

    domain: Domain
    modes_per_dim: int
    oversample: int
    modes: np.ndarray
    eigenvalues: np.ndarray
    nodes: tuple[np.ndarray, ...]
    cell_volume: float
    basis_id: str
    _sin: tuple[np.ndarray, ...] = field(repr=False)
    _dsin: tuple[np.ndarray, ...] = field(repr=False)
    _d2sin: tuple[np.ndarray, ...] = field(repr=False)
    _wavenumbers: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def size(self) -> int:
        return len(self.modes)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(len(x) for x in self.nodes)

    @property
    def tensor_index(self) -> tuple[np.ndarray, ...]:
        return tuple(self.modes[:, d] - 1 for d in range(self.dim))

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.nodes, indexing="ij"))

    def wavenumbers(self, axis: int) -> np.ndarray:
        """pi m / L for m = 1..M along ``axis``."""
        return self._wavenumbers[axis]

    def factors(self, kind: str, axis: int) -> np.ndarray:
        """1D sampled factor matrix (nodes x M) of sin, its first or second derivative."""
        return {"s": self._sin, "d": self._dsin, "dd": self._d2sin}[kind][axis]

    # -- coefficient layout -------------------------------------------------

    def to_tensor(self, flat: np.ndarray) -> np.ndarray:
        """Scatter (K, N) coefficients into a dense (M,..,M, N) tensor."""
        flat = np.asarray(flat, dtype=float)
        out = np.zeros((self.modes_per_dim,) * self.dim + flat.shape[1:])
        out[self.tensor_index] = flat
        return out

    def from_tensor(self, tensor: np.ndarray) -> np.ndarray:
        return tensor[self.tensor_index]

    def evaluate(self, flat: np.ndarray, kinds: tuple[str, ...]) -> np.ndarray:
        """Evaluate sum_j c_j prod_d F_d(x_d) on the grid for per-axis factor kinds."""
        t = self.to_tensor(flat)
        for axis, kind in enumerate(kinds):
            t = np.tensordot(self.factors(kind, axis), t, axes=([1], [axis]))
            t = np.moveaxis(t, 0, axis)
        return t

    def integrate_against(self, values: np.ndarray, kinds: tuple[str, ...]) -> np.ndarray:
        """Quadrature of values * prod_d F_d(x_d) for every listed mode; adjoint of ``evaluate``."""
        t = np.asarray(values, dtype=float)
        for axis, kind in enumerate(kinds):
            t = np.tensordot(self.factors(kind, axis).T, t, axes=([1], [axis]))
            t = np.moveaxis(t, 0, axis)
        return self.cell_volume * self.from_tensor(t)

    def check(self, other: "EigenBasis") -> None:
        if other is not self and other.basis_id != self.basis_id:
            raise BasisMismatchError(f"basis {other.basis_id} used where {self.basis_id} expected")


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Coefficients c[j, k] of v^k = sum_j c[j, k] a_j; rows follow ``basis.modes``."""

    values: np.ndarray
    basis: EigenBasis

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.basis.size:
            raise BasisMismatchError(
                f"coefficient array of shape {v.shape} does not fit {self.basis.size} modes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("spectral coefficients must be finite")
        object.__setattr__(self, "values", v)

    @property
    def basis_id(self) -> str:
        return self.basis.basis_id

    @property
    def ncomp(self) -> int:
        return self.values.shape[1]

    def __add__(self, other):
        self.basis.check(other.basis)
        return SpectralCoeffs(self.values + other.values, self.basis)

    def __sub__(self, other):
        self.basis.check(other.basis)
        return SpectralCoeffs(self.values - other.values, self.basis)

    def __mul__(self, s):
        return SpectralCoeffs(s * self.values, self.basis)

    __rmul__ = __mul__

    @classmethod
    def unit(cls, basis: EigenBasis, j: int, ncomp: int = 1, comp: int = 0) -> "SpectralCoeffs":
        v = np.zeros((basis.size, ncomp))
        v[j, comp] = 1.0
        return cls(v, basis)

    @classmethod
    def zeros(cls, basis: EigenBasis, ncomp: int = 1) -> "SpectralCoeffs":
        return cls(np.zeros((basis.size, ncomp)), basis)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nodal values on the quadrature grid; trailing axes are field components."""

    values: np.ndarray
    basis: EigenBasis

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        g = self.basis.grid_shape
        if v.shape[: len(g)] != g:
            raise BasisMismatchError(f"grid values of shape {v.shape} do not match grid {g}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def basis_id(self) -> str:
        return self.basis.basis_id

    @property
    def component_shape(self) -> tuple[int, ...]:
        return self.values.shape[self.basis.dim:]

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean (Frobenius) magnitude over the component axes."""
        v = self.values.reshape(self.basis.grid_shape + (-1,))
        return np.sqrt(np.einsum("...i,...i->...", v, v))

    @classmethod
    def from_callable(cls, basis: EigenBasis, fn) -> "GridFunction":
        return cls(np.asarray(fn(*basis.mesh()), dtype=float), basis)


def _nodes_per_dim(modes_per_dim: int, oversample: int) -> int:
    return max(oversample * modes_per_dim, 2 * modes_per_dim + 1)


def build_basis(domain: Domain, modes_per_dim: int, oversample: int = 2) -> EigenBasis:
    """Tensor sine basis with ``modes_per_dim`` modes per axis on an oversampled midpoint grid."""
    if domain.dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {domain.dim}")
    if int(oversample) != oversample or oversample < 2:
        raise ValueError(f"oversample must be an integer >= 2, got {oversample}")
    if int(modes_per_dim) != modes_per_dim or modes_per_dim < 1:
        raise ValueError(f"modes_per_dim must be >= 1, got {modes_per_dim}")
    M, n = int(modes_per_dim), domain.dim
    npts = _nodes_per_dim(M, int(oversample))

    idx = np.array(list(itertools.product(range(1, M + 1), repeat=n)), dtype=int)
    sides = np.array(domain.side_lengths)
    lam = np.pi**2 * np.sum((idx / sides) ** 2, axis=1)
    # np.lexsort sorts by the last key first: eigenvalue, then multi-index lexicographically
    order = np.lexsort(tuple(idx[:, d] for d in reversed(range(n))) + (lam,))
    idx, lam = idx[order], lam[order]

    nodes, s, ds, dds, ks = [], [], [], [], []
    for L in domain.side_lengths:
        x = (np.arange(npts) + 0.5) * (L / npts)
        k = np.pi * np.arange(1, M + 1) / L
        arg = np.outer(x, k)
        amp = np.sqrt(2.0 / L)
        nodes.append(x)
        s.append(amp * np.sin(arg))
        ds.append(amp * k * np.cos(arg))
        dds.append(-amp * k**2 * np.sin(arg))
        ks.append(k)

    key = f"{domain.side_lengths}|{domain.hessian_constant_H}|{M}|{oversample}|{npts}"
    basis_id = hashlib.sha1(key.encode()).hexdigest()[:12]
    return EigenBasis(
        domain=domain,
        modes_per_dim=M,
        oversample=int(oversample),
        modes=idx,
        eigenvalues=lam,
        nodes=tuple(nodes),
        cell_volume=float(np.prod([L / npts for L in domain.side_lengths])),
        basis_id=basis_id,
        _sin=tuple(s),
        _dsin=tuple(ds),
        _d2sin=tuple(dds),
        _wavenumbers=tuple(ks),
    )


def mode_index(basis: EigenBasis, multi_index) -> int:
    """Position of a multi-index in ``basis.modes``."""
    hit = np.flatnonzero(np.all(basis.modes == np.asarray(multi_index), axis=1))
    if hit.size == 0:
        raise KeyError(f"mode {tuple(multi_index)} is not in the basis")
    return int(hit[0])


def synthesize(c: SpectralCoeffs, basis: EigenBasis) -> GridFunction:
    basis.check(c.basis)
    return GridFunction(basis.evaluate(c.values, ("s",) * basis.dim), basis)


def project(f: GridFunction, basis: EigenBasis) -> SpectralCoeffs:
    """Quadrature inner products <f, a_j> for every listed mode."""
    basis.check(f.basis)
    vals = f.values
    scalar = vals.ndim == basis.dim
    if scalar:
        vals = vals[..., None]
    elif vals.ndim != basis.dim + 1:
        raise BasisMismatchError("project expects a scalar or vector-valued field")
    return SpectralCoeffs(basis.integrate_against(vals, ("s",) * basis.dim), basis)


def _kinds(n: int, first: int | None = None, second: int | None = None) -> tuple[str, ...]:
    kinds = ["s"] * n
    if first is not None:
        kinds[first] = "d"
    if second is not None:
        kinds[second] = "dd" if second == first else "d"
    return tuple(kinds)


def spectral_gradient(c: SpectralCoeffs, basis: EigenBasis) -> GridFunction:
    """Values shape grid + (N, n): d v^k / d x_alpha."""
    basis.check(c.basis)
    n = basis.dim
    parts = [basis.evaluate(c.values, _kinds(n, a)) for a in range(n)]
    return GridFunction(np.stack(parts, axis=-1), basis)


def spectral_hessian(c: SpectralCoeffs, basis: EigenBasis) -> GridFunction:
    """Values shape grid + (N, n, n)."""
    basis.check(c.basis)
    n = basis.dim
    out = np.empty(basis.grid_shape + (c.ncomp, n, n))
    for a in range(n):
        for b in range(a, n):
            v = basis.evaluate(c.values, _kinds(n, a, b))
            out[..., a, b] = v
            out[..., b, a] = v
    return GridFunction(out, basis)


def spectral_laplacian(c: SpectralCoeffs, basis: EigenBasis) -> GridFunction:
    basis.check(c.basis)
    return synthesize(SpectralCoeffs(-basis.eigenvalues[:, None] * c.values, basis), basis)


def quadrature_inner(f: GridFunction, g: GridFunction) -> float:
    f.basis.check(g.basis)
    return float(f.basis.cell_volume * np.sum(f.values * g.values))
