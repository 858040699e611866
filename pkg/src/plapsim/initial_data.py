"""Initial data families used by the scenarios."""

from __future__ import annotations

import numpy as np

from .mesh_basis import EigenBasis, GridFunction, SpectralCoeffs, mode_index, project

KINDS = ("smooth", "rough_L2", "W12_not_W22", "Linf_indicator", "eigenmode")
RANDOM_KINDS = ("rough_L2", "W12_not_W22")


def _power_law(basis: EigenBasis, s: float, seed: int, ncomp: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(basis.size, ncomp))
    return basis.eigenvalues[:, None] ** (-s) * signs


def sobolev_decay_power(kind: str, dim: int) -> float:
    """Eigenvalue power s in c_j ~ lambda_j^(-s).

    sum lambda^(k - 2s) diverges iff s <= k/2 + n/4, so n/4 + 0.05 is in L^2
    but not W^{1,2}, and n/4 + 0.55 is in W^{1,2} but not W^{2,2}.
    """
    return {"rough_L2": dim / 4 + 0.05, "W12_not_W22": dim / 4 + 0.55}[kind]


def make_initial_data(
    kind: str,
    basis: EigenBasis,
    *,
    seed: int | None = None,
    amplitude: float = 1.0,
    ncomp: int = 1,
    mode=None,
) -> SpectralCoeffs:
    """Projected initial datum.

    ``smooth`` and ``Linf_indicator`` are scaled to sup-norm ``amplitude``
    before projection; the random power-law families are scaled to L^2 norm
    ``amplitude``.  ``eigenmode`` is ``amplitude`` times the basis function with
    multi-index ``mode`` (default: the first mode) in every component.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown initial data kind {kind!r}; expected one of {KINDS}")
    if kind == "eigenmode":
        j = 0 if mode is None else mode_index(basis, mode)
        c = np.zeros((basis.size, ncomp))
        c[j] = amplitude
        return SpectralCoeffs(c, basis)
    if kind in RANDOM_KINDS:
        if seed is None:
            raise ValueError(f"initial data {kind!r} is random and needs a seed")
        c = _power_law(basis, sobolev_decay_power(kind, basis.dim), seed, ncomp)
        c *= amplitude / np.linalg.norm(c, axis=0)
        return SpectralCoeffs(c, basis)

    sides = basis.domain.side_lengths
    mesh = basis.mesh()
    if kind == "smooth":
        vals = np.ones(basis.grid_shape)
        for x, L in zip(mesh, sides):
            vals = vals * 4 * x * (L - x) / L**2
    else:
        vals = np.ones(basis.grid_shape)
        for x, L in zip(mesh, sides):
            vals = vals * ((x > L / 4) & (x < 3 * L / 4))
    vals = amplitude * np.repeat(vals[..., None], ncomp, axis=-1)
    return project(GridFunction(vals, basis), basis)
