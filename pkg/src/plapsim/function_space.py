"""Norms, seminorms and weighted time functionals of grid data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh_basis import EigenBasis, GridFunction, SpectralCoeffs, spectral_gradient, spectral_hessian, synthesize

# random far pairs are drawn in fixed-size blocks so a larger budget samples a superset
_PAIR_BLOCK = 1024


@dataclass(frozen=True, eq=False)
class NormSeries:
    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("norm values must be finite and nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.times)

    def window(self, t_lo: float, t_hi: float) -> "NormSeries":
        keep = (self.times >= t_lo) & (self.times <= t_hi)
        return NormSeries(self.times[keep], self.values[keep], self.label)


@dataclass(frozen=True)
class HolderSeminormResult:
    value: float
    lam: float
    argmax_pair: tuple
    space_part: float = 0.0
    time_part: float = 0.0


def _pointwise(f: GridFunction) -> np.ndarray:
    return f.magnitude() if f.values.ndim > f.basis.dim else np.abs(f.values)


def lp_norm(f: GridFunction, q: float) -> float:
    """Quadrature L^q norm of the pointwise Euclidean magnitude; q = inf is the grid max."""
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    m = _pointwise(f)
    if math.isinf(q):
        return float(m.max(initial=0.0))
    top = m.max(initial=0.0)
    if top == 0.0:
        return 0.0
    # scale first so large q does not overflow
    s = m / top
    return float(top * (f.basis.cell_volume * np.sum(s**q)) ** (1.0 / q))


def _sobolev(c: SpectralCoeffs, basis: EigenBasis, q: float) -> dict[str, float]:
    u = lp_norm(synthesize(c, basis), q)
    g = lp_norm(spectral_gradient(c, basis), q)
    h = lp_norm(spectral_hessian(c, basis), q)
    return {"W1p": u + g, "W2p": u + g + h}


def sobolev_norms(c: SpectralCoeffs, basis: EigenBasis, p: float) -> dict[str, float]:
    """W^{1,p} and W^{2,p} norms as sums of the L^p norms of u, grad u and D^2 u."""
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    return _sobolev(c, basis, p)


def w2_norm(c: SpectralCoeffs, basis: EigenBasis, q: float) -> float:
    """||u||_q + ||grad u||_q + ||D^2 u||_q for any q >= 1."""
    return _sobolev(c, basis, q)["W2p"]


def _flatten(snapshots, basis: EigenBasis) -> np.ndarray:
    """(S, G, N) values; scalar fields get one component."""
    n = basis.dim
    out = []
    for f in snapshots:
        v = f.values
        v = v.reshape(v.shape[:n] + (-1,)) if v.ndim > n else v[..., None]
        out.append(v.reshape(-1, v.shape[-1]))
    return np.stack(out)


def _block_pairs(seed: int, size: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    a_parts, b_parts = [], []
    drawn = 0
    while drawn < count:
        a_parts.append(rng.integers(0, size, _PAIR_BLOCK))
        b_parts.append(rng.integers(0, size, _PAIR_BLOCK))
        drawn += _PAIR_BLOCK
    if not a_parts:
        return np.zeros(0, int), np.zeros(0, int)
    return np.concatenate(a_parts)[:count], np.concatenate(b_parts)[:count]


def _axis_neighbor_pairs(shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    a, b = [], []
    for ax in range(len(shape)):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        a.append(idx[tuple(lo)].ravel())
        b.append(idx[tuple(hi)].ravel())
    return np.concatenate(a), np.concatenate(b)


def holder_seminorm(
    snapshots,
    times,
    lam: float,
    pair_budget: int = 4096,
    seed: int = 0,
    exhaustive: bool = False,
) -> HolderSeminormResult:
    """Parabolic Hoelder seminorm: space quotient with exponent lam plus time quotient with lam/2.

    Space pairs are all axis neighbours plus ``pair_budget`` seeded random pairs
    (all pairs when ``exhaustive``), evaluated at every snapshot.  Time pairs are
    all consecutive snapshot pairs plus ``pair_budget`` seeded random ones, taken
    at every node.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    snapshots = list(snapshots)
    times = np.asarray(times, dtype=float)
    if len(snapshots) < 2 or len(times) != len(snapshots):
        raise ValueError("need at least two snapshots with matching times")
    basis = snapshots[0].basis
    for f in snapshots[1:]:
        basis.check(f.basis)
    vals = _flatten(snapshots, basis)
    pts = np.stack([x.ravel() for x in basis.mesh()], axis=-1)
    G = pts.shape[0]

    if exhaustive:
        ia, ib = np.triu_indices(G, k=1)
    else:
        na, nb = _axis_neighbor_pairs(basis.grid_shape)
        ra, rb = _block_pairs(seed, G, pair_budget)
        ia, ib = np.concatenate([na, ra]), np.concatenate([nb, rb])
    keep = ia != ib
    ia, ib = ia[keep], ib[keep]
    dist = np.linalg.norm(pts[ia] - pts[ib], axis=-1) ** lam
    space_best, space_arg = 0.0, ()
    for s in range(len(snapshots)):
        diff = np.linalg.norm(vals[s, ia] - vals[s, ib], axis=-1) / dist
        k = int(np.argmax(diff)) if diff.size else 0
        if diff.size and diff[k] > space_best:
            space_best = float(diff[k])
            space_arg = ("space", float(times[s]), tuple(map(float, pts[ia[k]])), tuple(map(float, pts[ib[k]])))

    S = len(snapshots)
    if exhaustive:
        ta, tb = np.triu_indices(S, k=1)
    else:
        ca = np.arange(S - 1)
        ra, rb = _block_pairs(seed + 1, S, pair_budget)
        ta, tb = np.concatenate([ca, ra]), np.concatenate([ca + 1, rb])
    keep = times[ta] != times[tb]
    ta, tb = ta[keep], tb[keep]
    time_best, time_arg = 0.0, ()
    if ta.size:
        lag = np.abs(times[ta] - times[tb]) ** (lam / 2)
        diff = np.linalg.norm(vals[ta] - vals[tb], axis=-1) / lag[:, None]
        k = np.unravel_index(int(np.argmax(diff)), diff.shape)
        if diff[k] > 0:
            time_best = float(diff[k])
            time_arg = ("time", float(times[ta[k[0]]]), float(times[tb[k[0]]]), tuple(map(float, pts[k[1]])))

    arg = space_arg if space_best >= time_best else time_arg
    return HolderSeminormResult(space_best + time_best, lam, arg, space_best, time_best)


def weighted_sup(series: NormSeries, theta: float) -> dict[str, float]:
    """max over samples of t^theta * value(t)."""
    if len(series) == 0:
        raise ValueError("empty series")
    w = series.times**theta * series.values
    k = int(np.argmax(w))
    return {"sup": float(w[k]), "argmax_t": float(series.times[k])}
