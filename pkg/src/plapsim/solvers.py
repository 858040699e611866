"""Time integration of the regularized Galerkin system, continuation in (nu, mu),
the linear dual parabolic solve and the stationary p-Laplacian solve.

Every nonlinear step is backward Euler with lagged diffusivity (Kacanov):

    (I + dt nu Lambda + dt K[a(mu, v_prev)]) c_new = c_old,

iterated until the coefficient change is below ``picard_tol`` relative to
``|c_new|``.  The nu-term is diagonal in the eigenbasis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .mesh_basis import EigenBasis, GridFunction, SpectralCoeffs, project, spectral_gradient
from .pde_core import FLAT_GRADIENT, dual_tensor, nonlinear_load, weak_matrix

log = logging.getLogger(__name__)

DT_FLOOR_HALVINGS = 20


class SolverError(RuntimeError):
    """Raised when a solve cannot proceed; ``diagnostics`` holds what was gathered."""

    def __init__(self, message, diagnostics=None, partial=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.partial = partial


@dataclass(frozen=True)
class SolverConfig:
    p: float
    mu: float = 0.0
    nu: float = 0.0
    t_end: float = 1.0
    dt_init: float = 1e-4
    dt_policy: str = "fixed"
    target_step_error: float = 1e-3
    dt_max: float | None = None
    picard_tol: float = 1e-10
    picard_max: int = 200
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise ValueError(f"p = {self.p} is outside the admissible range (1, 2]")
        if self.mu < 0 or self.nu < 0:
            raise ValueError("mu and nu must be >= 0")
        if self.t_end <= 0 or self.dt_init <= 0:
            raise ValueError("t_end and dt_init must be > 0")
        if self.dt_policy not in ("fixed", "adaptive"):
            raise ValueError(f"dt_policy must be 'fixed' or 'adaptive', got {self.dt_policy!r}")
        if self.picard_tol <= 0 or self.target_step_error <= 0 or self.picard_max < 1:
            raise ValueError("tolerances must be > 0 and picard_max >= 1")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    picard_iterations: int
    energy_residual: float
    dissipation: float
    retries: int = 0


@dataclass(eq=False)
class Trajectory:
    """Coefficient history of one solve; ``coeffs[k]`` has shape (K, N) at ``times[k]``."""

    config: SolverConfig
    basis: EigenBasis
    times: np.ndarray
    coeffs: np.ndarray
    diagnostics: list[StepRecord] = field(default_factory=list)

    @property
    def snapshots(self) -> list[tuple[float, SpectralCoeffs]]:
        return [(float(t), SpectralCoeffs(c, self.basis)) for t, c in zip(self.times, self.coeffs)]

    def __len__(self):
        return len(self.times)

    def snapshot(self, k: int) -> SpectralCoeffs:
        return SpectralCoeffs(self.coeffs[k], self.basis)

    def at(self, t: float) -> SpectralCoeffs:
        """Coefficients at time t, linear in time between stored steps."""
        times = self.times
        if t < times[0] - 1e-14 or t > times[-1] + 1e-12 * max(1.0, times[-1]):
            raise ValueError(f"t = {t} outside trajectory range [{times[0]}, {times[-1]}]")
        k = int(np.searchsorted(times, t))
        if k < len(times) and math.isclose(times[k], t, rel_tol=1e-12, abs_tol=1e-15):
            return self.snapshot(k)
        k = min(max(k, 1), len(times) - 1)
        w = (t - times[k - 1]) / (times[k] - times[k - 1])
        return SpectralCoeffs((1 - w) * self.coeffs[k - 1] + w * self.coeffs[k], self.basis)

    def time_derivative(self, k: int) -> SpectralCoeffs:
        """Backward difference quotient at step k >= 1 (the scheme's own u_t)."""
        if k < 1:
            raise ValueError("u_t is defined from the first step on")
        dt = self.times[k] - self.times[k - 1]
        return SpectralCoeffs((self.coeffs[k] - self.coeffs[k - 1]) / dt, self.basis)

    def l2_norms(self) -> np.ndarray:
        return np.sqrt(np.einsum("skn,skn->s", self.coeffs, self.coeffs))


@dataclass(eq=False)
class DualTrajectory(Trajectory):
    frozen_source: Trajectory | None = None
    b_flag: int = 0
    t_anchor: float = 0.0


def _lagged_matrix(c: np.ndarray, basis: EigenBasis, mu: float, p: float) -> np.ndarray:
    if p == 2.0:
        return np.diag(basis.eigenvalues)
    grad = spectral_gradient(SpectralCoeffs(c, basis), basis).values
    g2 = np.einsum("...ka,...ka->...", grad, grad)
    if mu == 0.0:
        # flat nodes: a * grad v -> 0 there, so the cap only matters off the fixed point
        g2 = np.maximum(g2, FLAT_GRADIENT**2)
    return weak_matrix(basis, (mu + g2) ** ((p - 2) / 2))


def energy_balance(c0, c1, dt, basis, mu, p, nu):
    """Discrete energy identity of backward Euler.

    Testing the scheme with c1 gives exactly
        1/2|c1|^2 - 1/2|c0|^2 + 1/2|c1 - c0|^2 + dt (nu |grad v|^2 + |a^(1/2) grad v|^2) = 0;
    returns (relative residual, numerical dissipation 1/2|c1 - c0|^2).
    """
    d1 = nonlinear_load(SpectralCoeffs(c1, basis), mu, p, basis)
    visc = nu * float(np.sum(basis.eigenvalues[:, None] * c1**2))
    weighted = float(np.sum(c1 * d1))
    diss = 0.5 * float(np.sum((c1 - c0) ** 2))
    res = 0.5 * float(np.sum(c1**2)) - 0.5 * float(np.sum(c0**2)) + diss + dt * (visc + weighted)
    return abs(res) / max(1.0, float(np.sum(c1**2))), diss


def _kacanov_step(c0, dt, basis, cfg: SolverConfig):
    """One backward Euler step; returns (c1, iterations) or (None, iterations) on failure."""
    lam = basis.eigenvalues
    base = np.eye(basis.size) + np.diag(dt * cfg.nu * lam)
    c = c0
    for it in range(1, cfg.picard_max + 1):
        A = base + dt * _lagged_matrix(c, basis, cfg.mu, cfg.p)
        try:
            c_new = linalg.cho_solve(linalg.cho_factor(A), c0)
        except linalg.LinAlgError:
            return None, it
        if not np.all(np.isfinite(c_new)):
            return None, it
        change = np.linalg.norm(c_new - c)
        c = c_new
        if cfg.p == 2.0 or change <= cfg.picard_tol * np.linalg.norm(c):
            return c, it
    return None, cfg.picard_max


def solve_parabolic(u0: SpectralCoeffs, basis: EigenBasis, cfg: SolverConfig) -> Trajectory:
    basis.check(u0.basis)
    dt_min = cfg.dt_init * 2.0**-DT_FLOOR_HALVINGS
    dt_max = cfg.dt_max or cfg.t_end
    marks = [t for t in cfg.snapshot_times if 0 < t < cfg.t_end] + [cfg.t_end]
    times, coeffs, diags = [0.0], [u0.values.copy()], []
    t, dt, mark = 0.0, cfg.dt_init, 0
    scale0 = max(np.linalg.norm(u0.values), 1e-300)

    while t < cfg.t_end * (1 - 1e-14):
        while marks[mark] <= t * (1 + 1e-14):
            mark += 1
        step = min(dt, marks[mark] - t)
        if marks[mark] - (t + step) < 1e-9 * step:
            step = marks[mark] - t
        c0 = coeffs[-1]
        retries = 0
        while True:
            c1, iters = _kacanov_step(c0, step, basis, cfg)
            if c1 is not None:
                break
            retries += 1
            step *= 0.5
            dt = step
            if step < dt_min:
                diag = {"t": t, "dt": step, "picard_iterations": iters, "steps": len(diags)}
                partial = Trajectory(cfg, basis, np.array(times), np.array(coeffs), diags)
                raise SolverError(f"Picard iteration failed to converge at t={t:.6g}", diag, partial)
            log.debug("Picard failure at t=%g, retrying with dt=%g", t, step)
        res, diss = energy_balance(c0, c1, step, basis, cfg.mu, cfg.p, cfg.nu)
        diags.append(StepRecord(t + step, step, iters, res, diss, retries))
        t_new = marks[mark] if step == marks[mark] - t else t + step

        if cfg.dt_policy == "adaptive" and len(coeffs) >= 2:
            dt_prev = times[-1] - times[-2]
            curv = (c1 - c0) / step - (c0 - coeffs[-2]) / dt_prev
            err = step**2 / (step + dt_prev) * np.linalg.norm(curv)
            scale = max(np.linalg.norm(c1), 1e-12 * scale0)
            factor = 0.9 * math.sqrt(cfg.target_step_error * scale / max(err, 1e-300))
            dt = min(max(step * min(max(factor, 0.5), 2.0), dt_min), dt_max)
        elif cfg.dt_policy == "fixed":
            dt = cfg.dt_init if retries == 0 else step
        times.append(t_new)
        coeffs.append(c1)
        t = t_new
    return Trajectory(cfg, basis, np.array(times), np.array(coeffs), diags)


@dataclass(eq=False)
class ContinuationResult:
    trajectories: list[Trajectory]
    labels: list[tuple[float, float]]
    gaps: list[float]
    check_times: np.ndarray

    @property
    def mu_gaps(self) -> list[float]:
        """Gaps between consecutive entries of the mu leg only."""
        idx = [i for i in range(1, len(self.labels)) if self.labels[i][1] != self.labels[i - 1][1]]
        return [self.gaps[i - 1] for i in idx]

    @property
    def monotone(self) -> bool:
        g = self.gaps
        return all(b <= a * (1 + 1e-12) for a, b in zip(g, g[1:]))


def max_l2_gap(a: Trajectory, b: Trajectory, check_times) -> float:
    return max(float(np.linalg.norm(a.at(t).values - b.at(t).values)) for t in check_times)


def continuation(u0, basis, cfg: SolverConfig, mu_ladder, nu_ladder, *, reverse: bool = False):
    """Solve along nu_ladder at mu = mu_ladder[0], then along mu_ladder at nu = nu_ladder[-1].

    ``reverse=True`` runs the mu leg first; this ordering is exploratory only.
    """
    for name, ladder in (("mu", mu_ladder), ("nu", nu_ladder)):
        ladder = list(ladder)
        if not ladder or any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"{name} ladder must be nonempty and strictly descending")
        if ladder[-1] < 0 or any(x <= 0 for x in ladder[:-1]):
            raise ValueError(f"{name} ladder must be positive (only the last entry may be 0)")
    if reverse:
        labels = [(nu_ladder[0], m) for m in mu_ladder] + [(n, mu_ladder[-1]) for n in nu_ladder[1:]]
    else:
        labels = [(n, mu_ladder[0]) for n in nu_ladder] + [(nu_ladder[-1], m) for m in mu_ladder[1:]]
    check_times = np.array(cfg.snapshot_times or (cfg.t_end,))
    trajs = []
    for nu, mu in labels:
        try:
            trajs.append(solve_parabolic(u0, basis, replace(cfg, nu=nu, mu=mu)))
        except SolverError as exc:
            exc.partial = trajs
            raise
    gaps = [max_l2_gap(a, b, check_times) for a, b in zip(trajs, trajs[1:])]
    return ContinuationResult(trajs, labels, gaps, check_times)


def solve_dual(
    phi0: SpectralCoeffs,
    primal: Trajectory,
    t_anchor: float,
    nu: float,
    b_flag: int,
    cfg: SolverConfig | None = None,
    steps: int | None = None,
) -> DualTrajectory:
    """Backward Euler for phi_s - nu Lap phi - div(B(s) grad phi) = 0 on (0, t_anchor].

    B(s) is the dual tensor of the primal gradient at time t_anchor - s,
    interpolated linearly in time between primal steps.
    """
    basis = primal.basis
    basis.check(phi0.basis)
    mu, p = primal.config.mu, primal.config.p
    if mu <= 0:
        raise ValueError("the dual solve needs a primal run with mu > 0")
    if not primal.times[0] <= t_anchor <= primal.times[-1]:
        raise ValueError(f"t_anchor = {t_anchor} outside primal range [0, {primal.times[-1]}]")
    if steps is None:
        dt = cfg.dt_init if cfg is not None else t_anchor / 200
        steps = max(1, int(math.ceil(t_anchor / dt - 1e-9)))
    s_grid = np.linspace(0.0, t_anchor, steps + 1)
    N = phi0.ncomp
    K = basis.size
    visc = np.kron(np.eye(N), np.diag(basis.eigenvalues))
    phi = [phi0.values.copy()]
    for s in s_grid[1:]:
        ds = s - s_grid[len(phi) - 1]
        grad = spectral_gradient(primal.at(max(t_anchor - s, 0.0)), basis)
        if grad.values.shape[-2] != N:
            raise ValueError("dual data and primal field must have the same component count")
        B = dual_tensor(grad, mu, p, b_flag)
        A = np.eye(K * N) + ds * nu * visc + ds * B.weak_matrix()
        rhs = phi[-1].T.reshape(-1)
        sol = linalg.solve(A, rhs, assume_a="pos")
        phi.append(sol.reshape(N, K).T)
    dcfg = cfg or SolverConfig(p=p, mu=mu, nu=nu, t_end=t_anchor, dt_init=t_anchor / steps)
    return DualTrajectory(
        dcfg, basis, s_grid, np.array(phi), [], frozen_source=primal, b_flag=b_flag, t_anchor=t_anchor
    )


class EllipticStagnation(SolverError):
    pass


def solve_elliptic(
    f: GridFunction,
    basis: EigenBasis,
    p: float,
    mu_ladder,
    tol: float = 1e-10,
    picard_max: int = 500,
) -> SpectralCoeffs:
    """Solve -div((mu + |grad u|^2)^((p-2)/2) grad u) = f for each mu in turn.

    Each level starts from the previous solution and stops once the weak
    residual |d(c) - F| is below ``tol * |F|``.
    """
    if not 1.0 < p < 2.0:
        raise ValueError(f"p must lie in (1, 2), got {p}")
    basis.check(f.basis)
    F = project(f, basis).values
    norm_f = np.linalg.norm(F)
    c = np.zeros_like(F)
    if norm_f == 0.0:
        return SpectralCoeffs(c, basis)
    for mu in mu_ladder:
        if mu <= 0:
            raise ValueError("elliptic mu ladder entries must be > 0")
        for it in range(picard_max):
            if it == 0 and not c.any():
                K = mu ** ((p - 2) / 2) * np.diag(basis.eigenvalues)
            else:
                K = _lagged_matrix(c, basis, mu, p)
            c = linalg.cho_solve(linalg.cho_factor(K), F)
            res = np.linalg.norm(nonlinear_load(SpectralCoeffs(c, basis), mu, p, basis) - F)
            if res <= tol * norm_f:
                break
        else:
            raise EllipticStagnation(
                f"Kacanov iteration stalled at mu={mu:g}",
                {"mu": mu, "residual": res / norm_f},
                SpectralCoeffs(c, basis),
            )
    return SpectralCoeffs(c, basis)
