"""Exponent formulas, decay-rate fitting and the estimate audits.

Every audit returns an :class:`EstimateReport`.  Unknown multiplicative
constants are never asserted: claims are checked through fitted exponents,
boundedness of compensated quantities, or inequalities whose constants are
explicit.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .function_space import NormSeries, lp_norm, weighted_sup
from .mesh_basis import (
    Domain,
    EigenBasis,
    GridFunction,
    SpectralCoeffs,
    spectral_gradient,
    spectral_hessian,
    spectral_laplacian,
    synthesize,
)

EXTINCTION_LEVEL = 1e-10
MAX_MODULUS_SLACK = 1e-10


class DegenerateParameterError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


class AdmissibilityWarning(UserWarning):
    pass


# ---------------------------------------------------------------- exponents


def _conjugate(r: float) -> float:
    return math.inf if r == 1 else r / (r - 1)


@dataclass(frozen=True)
class ExponentSet:
    p: float
    n: int
    q: float
    H: float
    p0: float
    p_bar: float
    p1: float
    p2: float
    alpha1: float
    alpha2: float
    alpha: float
    beta1: float
    beta2: float
    beta: float
    q_hat: float
    q_bar: float
    q_upper: float
    r_min_b1: float
    lambda0: float
    gamma0: float
    lambda1: float
    gamma1: float
    admissible: dict = field(default_factory=dict)
    notes: tuple = ()

    def gamma_of_r(self, r: float) -> float:
        """Decay exponent n(2-r)/(2rp - 2nr + rnp) of the dual L^2 bound."""
        p, n = self.p, self.n
        return n * (2 - r) / (r * (p * (n + 2) - 2 * n))

    def gn_exponent(self, r: float) -> float:
        """Interpolation exponent a with 1/2 = a(1/p - 1/n) + (1-a)/r."""
        p, n = self.p, self.n
        return n * p * (2 - r) / (2 * (n * p + r * p - n * r))

    def q_hat_formula(self, q: float) -> float:
        """nq(p-1)/(n - q(2-p)), the sub-critical branch of the integrability gain."""
        p, n = self.p, self.n
        return n * q * (p - 1) / (n - q * (2 - p))

    def ut_blowup_exponent(self, q: float) -> float:
        """Predicted t -> 0 blow-up power of ||u_t||_q: 1 + gamma(q')."""
        return 1.0 + self.gamma_of_r(_conjugate(q))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d


def exponents(p: float, n: int, q: float = 2.0, H: float = 1.0) -> ExponentSet:
    """Evaluate every exponent and threshold for (p, n, q, H).

    p = 2 is accepted (the linear limit) so that reference heat runs can be
    audited with the same code path.
    """
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if not H >= 1:
        raise ValueError(f"H must be >= 1, got {H}")
    n = int(n)
    den = 2 * p - n * (2 - p)  # = p(n+2) - 2n
    if abs(den) < 1e-13:
        raise DegenerateParameterError(
            f"2p - n(2-p) vanishes at p = {p}, n = {n}; exponents are undefined"
        )
    notes = []
    alpha1 = 2 / den
    alpha2 = alpha1 + (2 - p) / (2 * p)
    alpha = 2 * alpha1
    beta1 = 0.5 * (alpha - n * (2 - p) ** 2 / (p * den))
    beta2 = 0.5 * (alpha + (2 - p) / p)
    beta = n / den
    p0 = max(1.5, 2 * n / (n + 2))
    p_bar = 2 - 1 / H
    p1 = math.nan if n == 2 else (7 * (n - 2) + 1 - math.sqrt(4 * (n - 1) ** 2 - 3)) / (3 * (n - 2))
    p2 = (2 * n + 7 - math.sqrt((2 * n - 7) ** 2 + 8 * n)) / 6
    q_bar = 2 * n / (n * (p - 1) + 2 * (2 - p))
    q_upper = math.inf if p == 2 else (7 - 3 * p) / (4 - 2 * p)
    r_min_b1 = (7 - 3 * p) / (3 - p)

    if n == 2 or q > n:
        q_hat = q
    elif q < n:
        q_hat = n * q * (p - 1) / (n - q * (2 - p))
    else:
        q_hat = math.nan
        notes.append("q = n: only q_hat < n is available, reported as nan")
    lambda0 = 2 - n / q_hat if q_hat == q_hat else math.nan
    gamma0 = n * (q - 2) / (q * den)
    lambda1 = 1 - n / q
    gamma1 = gamma0

    convex_ok = H == 1 or p > p_bar
    if n == 2:
        high_reg = p > 1.5 and 2 < q <= q_upper and convex_ok
    else:
        high_reg = p > max(p0, p1) and q_bar <= q <= q_upper and convex_ok
    ut_rate = 2 <= q <= q_upper and p > 2 * n / (n + 2)
    if q == q_upper:
        msg = f"q = {q} sits on the upper endpoint (7-3p)/(4-2p); treated as admissible"
        notes.append(msg)
        warnings.warn(msg, AdmissibilityWarning, stacklevel=2)
    admissible = {
        "p_above_p0": p > p0,
        "high_regularity": bool(high_reg),
        "ut_rate": bool(ut_rate),
        "linf_decay": p > 2 * n / (n + 2),
        "holder_gradient": bool(p > max(p0, (4 * n - 7) / (2 * n - 3)) and n < q <= q_upper),
        "nonconvex_ok": bool(convex_ok),
    }
    return ExponentSet(
        p, n, q, H, p0, p_bar, p1, p2, alpha1, alpha2, alpha, beta1, beta2, beta,
        q_hat, q_bar, q_upper, r_min_b1, lambda0, gamma0, lambda1, gamma1, admissible, tuple(notes),
    )


def _rel(x: float, y: float) -> float:
    return abs(x - y) / max(1.0, abs(y))


def exponent_identity_residuals(e: ExponentSet) -> dict[str, float]:
    """Residuals (relative once the target exceeds 1) of the identities tying the exponents together."""
    p, n = e.p, e.n
    out = {
        "alpha_is_2alpha1": _rel(e.alpha, 2 * e.alpha1),
        "beta2_is_alpha2": _rel(e.beta2, e.alpha2),
        "gamma_at_2": abs(e.gamma_of_r(2.0)),
        "beta_is_gamma_at_1": _rel(e.beta, e.gamma_of_r(1.0)),
        "q_hat_of_q_bar": _rel(e.q_hat_formula(e.q_bar), 2.0),
    }
    r = e.q if e.q > 1 else 2.0
    a = e.gn_exponent(r)
    out["gn_dimensional"] = abs(0.5 - (a * (1 / p - 1 / n) + (1 - a) / r))
    if n == 2 and e.q > 1:
        q = e.q
        out["gamma_conjugate_n2"] = _rel(e.gamma_of_r(_conjugate(q)), (q - 2) / (2 * q * (p - 1)))
    return out


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    samples: int = 0


def fit_decay(series: NormSeries, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares line through (log t, log value); the slope is the exponent."""
    s = series if window is None else series.window(*window)
    if len(s) < 5:
        raise InsufficientSamplesError(f"need at least 5 samples in the fit window, got {len(s)}")
    if np.any(s.values <= 0) or np.any(s.times <= 0):
        raise ValueError("fit_decay needs positive times and values")
    x, y = np.log(s.times), np.log(s.values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot <= 1e-300 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return DecayFit(float(slope), float(intercept), r2, (float(s.times[0]), float(s.times[-1])), len(s))


def log_spaced_subset(series: NormSeries, t_lo: float, t_hi: float, count: int = 24) -> NormSeries:
    """Samples nearest to ``count`` log-spaced targets in [t_lo, t_hi], duplicates removed."""
    inside = series.window(t_lo, t_hi)
    if len(inside) == 0:
        return inside
    targets = np.geomspace(max(t_lo, inside.times[0]), min(t_hi, inside.times[-1]), count)
    idx = np.unique(np.abs(np.log(inside.times)[None, :] - np.log(targets)[:, None]).argmin(axis=1))
    return NormSeries(inside.times[idx], inside.values[idx], series.label)


# ---------------------------------------------------------------- reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


@dataclass
class EstimateReport:
    claim: str
    anchor: str
    measured: object
    target: object
    tol: float
    verdict: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "n/a"):
            raise ValueError(f"verdict must be pass, fail or n/a, got {self.verdict!r}")

    @property
    def passed(self) -> bool:
        return self.verdict != "fail"

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "claim": self.claim,
                "anchor": self.anchor,
                "measured": self.measured,
                "target": self.target,
                "tol": self.tol,
                "verdict": self.verdict,
                "meta": self.meta,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True, allow_nan=False)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["claim", "anchor", "measured", "target", "tol", "verdict"])
    for r in reports:
        d = r.to_dict()
        w.writerow([d["claim"], d["anchor"], json.dumps(d["measured"]), json.dumps(d["target"]), d["tol"], d["verdict"]])
    return buf.getvalue()


# ---------------------------------------------------------------- inequality checks


def _weight(grad: GridFunction, mu: float, p: float) -> np.ndarray:
    """(mu + |grad v|^2)^((p-2)/4) on the grid."""
    return (mu + grad.magnitude() ** 2) ** ((p - 2) / 4)


def _weighted_l2(w: np.ndarray, f: GridFunction) -> float:
    m = f.magnitude() if f.values.ndim > f.basis.dim else np.abs(f.values)
    return float(np.sqrt(f.basis.cell_volume * np.sum((w * m) ** 2)))


def hessian_bound_terms(v: SpectralCoeffs, basis: EigenBasis, mu: float, p: float) -> tuple[float, float]:
    """(||a^(1/2) D^2 v||_2, ||a^(1/2) Lap v||_2) with a = (mu + |grad v|^2)^((p-2)/2)."""
    w = _weight(spectral_gradient(v, basis), mu, p)
    return _weighted_l2(w, spectral_hessian(v, basis)), _weighted_l2(w, spectral_laplacian(v, basis))


def check_weighted_hessian(
    v: SpectralCoeffs,
    basis: EigenBasis,
    mu: float,
    p: float,
    eta: float = 0.0,
    domain: Domain | None = None,
    C2: float = 1.0,
    slack: float = 1e-6,
) -> EstimateReport:
    """Weighted Hessian bound ||a^(1/2) D^2 v||_2 <= C1 ||a^(1/2) Lap v||_2 (+ lower-order term).

    C1 = (p / (p(p-1)^2 - eta))^(1/2), which is 1/(p-1) on convex domains
    where eta = 0 and the lower-order term vanishes.
    """
    if mu <= 0:
        raise ValueError("mu must be > 0")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    if eta < 0 or eta >= p * (p - 1) ** 2:
        raise ValueError(f"eta must lie in [0, p(p-1)^2) = [0, {p * (p - 1) ** 2:.6g}), got {eta}")
    domain = domain or basis.domain
    if not domain.convex and eta == 0:
        raise ValueError("non-convex domains need eta > 0")
    C1 = math.sqrt(p / (p * (p - 1) ** 2 - eta))
    lhs, lap = hessian_bound_terms(v, basis, mu, p)
    rhs = C1 * lap
    if eta > 0:
        grad_p = lp_norm(spectral_gradient(v, basis), p)
        rhs += C2 / eta * math.sqrt(grad_p**p + mu ** (p / 2) * domain.volume)
    ok = lhs <= rhs * (1 + slack) + 1e-300
    return EstimateReport(
        "weighted_hessian_bound",
        "Lemma2.1",
        {"lhs": lhs, "laplacian_term": lap, "ratio": lhs / lap if lap > 0 else 0.0},
        {"rhs": rhs, "C1": C1},
        slack,
        _verdict(ok),
        {"mu": mu, "p": p, "eta": eta},
    )


def random_trial_fields(basis: EigenBasis, count: int, seed: int) -> list[SpectralCoeffs]:
    """Seeded random trial-space elements with algebraically decaying spectra and log-uniform scale."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        decay = rng.uniform(0.5, 1.5)
        scale = 10 ** rng.uniform(-2, 1)
        c = rng.standard_normal(basis.size) * basis.eigenvalues ** (-decay)
        c *= scale / np.linalg.norm(c)
        out.append(SpectralCoeffs(c, basis))
    return out


def audit_weighted_hessian(basis: EigenBasis, p_values, mu_values, count: int = 200, seed: int = 0,
                           slack: float = 1e-6) -> EstimateReport:
    fields = random_trial_fields(basis, count, seed)
    worst, violations, checked = 0.0, 0, 0
    for p in p_values:
        for mu in mu_values:
            for v in fields:
                r = check_weighted_hessian(v, basis, mu, p, slack=slack)
                worst = max(worst, r.measured["ratio"] * (p - 1))
                violations += r.verdict == "fail"
                checked += 1
    return EstimateReport(
        "weighted_hessian_random_audit",
        "Lemma2.1",
        {"violations": violations, "max_ratio_times_p_minus_1": worst},
        {"violations": 0, "max_ratio_times_p_minus_1": 1.0},
        slack,
        _verdict(violations == 0),
        {"fields": count, "checked": checked, "seed": seed, "p": list(p_values), "mu": list(mu_values)},
    )


def _power_gap(mu, p, xi, eta):
    """|(mu+xi)^(p-2) - (mu+eta)^(p-2)| without cancellation when xi, eta << mu."""
    base = mu + eta
    return np.abs(base ** (p - 2) * np.expm1((p - 2) * np.log1p((xi - eta) / base)))


def check_power_difference(mu: float, p: float, xi, eta_val, rel_slack: float = 1e-12) -> EstimateReport:
    """|(mu+xi)^-(2-p) - (mu+eta)^-(2-p)| <= (2-p) mu^-(3-p) |xi - eta|, vectorized over xi, eta."""
    if mu <= 0:
        raise ValueError("mu must be > 0")
    if not 1.0 < p < 2.0:
        raise ValueError(f"p must lie in (1, 2), got {p}")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta_val = np.atleast_1d(np.asarray(eta_val, dtype=float))
    if np.any(xi < 0) or np.any(eta_val < 0):
        raise ValueError("xi and eta must be nonnegative")
    lhs = _power_gap(mu, p, xi, eta_val)
    rhs = (2 - p) * mu ** (p - 3) * np.abs(xi - eta_val)
    bad = lhs > rhs * (1 + rel_slack) + 1e-300
    violations = int(np.count_nonzero(bad))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, 0.0)
    return EstimateReport(
        "power_difference_bound",
        "Lemma2.7",
        {"violations": violations, "max_ratio": float(ratio.max(initial=0.0)), "max_lhs": float(lhs.max(initial=0.0))},
        {"violations": 0, "max_ratio": 1.0},
        rel_slack,
        _verdict(violations == 0),
        {"samples": int(lhs.size), "mu": mu, "p": p},
    )


def audit_power_difference(samples: int = 100_000, seed: int = 0) -> EstimateReport:
    """Randomized sweep over (mu, p, xi, eta) with log-uniform magnitudes."""
    rng = np.random.default_rng(seed)
    mu = 10 ** rng.uniform(-4, 2, samples)
    p = rng.uniform(1.0 + 1e-6, 2.0 - 1e-6, samples)
    xi = 10 ** rng.uniform(-6, 3, samples) * rng.integers(0, 2, samples)
    eta = 10 ** rng.uniform(-6, 3, samples)
    lhs = _power_gap(mu, p, xi, eta)
    rhs = (2 - p) * mu ** (p - 3) * np.abs(xi - eta)
    violations = int(np.count_nonzero(lhs > rhs * (1 + 1e-12)))
    return EstimateReport(
        "power_difference_random_audit",
        "Lemma2.7",
        {"violations": violations, "max_ratio": float(np.max(lhs / rhs))},
        {"violations": 0},
        1e-12,
        _verdict(violations == 0),
        {"samples": samples, "seed": seed},
    )


def _interval_weights(times: np.ndarray) -> np.ndarray:
    """Right-endpoint weights: sample k stands for (t_{k-1}, t_k]."""
    w = np.empty_like(times)
    w[0] = times[0]
    w[1:] = np.diff(times)
    return w


def check_time_interpolation(times, g_series, F_series, mu: float, p: float, delta1: float, delta2: float,
                             slack: float = 1e-8) -> EstimateReport:
    """||t^delta g||^2_{L^2(L^p)} <= K1^(2-p) K2 with delta = (2-p)/2 delta1 + delta2.

    K1 = sup t^delta1 ||(mu+|F|^2)^(1/2)||_p and K2 = int t^(2 delta2) ||(mu+|F|^2)^((p-2)/4) g||_2^2.
    Time integrals use right-endpoint weights; the bound holds at each instant,
    so it survives any quadrature with nonnegative weights.
    """
    times = np.asarray(times, dtype=float)
    g_series, F_series = list(g_series), list(F_series)
    if not (len(times) == len(g_series) == len(F_series)) or len(times) == 0:
        raise ValueError("g, F and times must be aligned and nonempty")
    if np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise ValueError("times must be positive and strictly increasing")
    if min(delta1, delta2, mu) < 0 or not 1.0 < p <= 2.0:
        raise ValueError("need delta1, delta2, mu >= 0 and p in (1, 2]")
    delta = (2 - p) / 2 * delta1 + delta2
    w = _interval_weights(times)
    k1, k2, lhs = 0.0, 0.0, 0.0
    for t, wt, g, F in zip(times, w, g_series, F_series):
        F.basis.check(g.basis)
        lift = mu + F.magnitude() ** 2
        k1 = max(k1, t**delta1 * lp_norm(GridFunction(np.sqrt(lift), F.basis), p))
        gm = g.magnitude() if g.values.ndim > g.basis.dim else np.abs(g.values)
        k2 += wt * t ** (2 * delta2) * g.basis.cell_volume * np.sum(lift ** ((p - 2) / 2) * gm**2)
        lhs += wt * t ** (2 * delta) * lp_norm(g, p) ** 2
    rhs = k1 ** (2 - p) * k2
    ok = lhs <= rhs + slack * max(1.0, rhs)
    return EstimateReport(
        "time_weighted_interpolation",
        "LemmaA.1",
        {"lhs": lhs, "margin": 1 - lhs / rhs if rhs > 0 else 0.0},
        {"rhs": rhs, "K1": k1, "K2": k2, "delta": delta},
        slack,
        _verdict(ok),
        {"mu": mu, "p": p, "delta1": delta1, "delta2": delta2, "samples": len(times)},
    )


# short aliases used by the anchor registry and config audits
check_lemma21 = check_weighted_hessian
check_lemma27 = check_power_difference
check_lemmaA1 = check_time_interpolation


# ---------------------------------------------------------------- trajectory audit


def trajectory_norms(traj, q_list=(2.0,), p: float | None = None) -> dict[str, NormSeries]:
    """Norm traces at every stored time t > 0.

    Labels: L2, Linf, grad_Lp, hessian_Lp, ut_L2 and ut_L{q} for q in q_list.
    u_t at step k is the backward difference quotient.
    """
    basis = traj.basis
    p = traj.config.p if p is None else p
    times = traj.times[1:]
    cols: dict[str, list[float]] = {"L2": [], "Linf": [], "grad_Lp": [], "hessian_Lp": [], "ut_L2": []}
    qs = [q for q in q_list if q != 2]
    for q in qs:
        cols[f"ut_L{q:g}"] = []
    for k in range(1, len(traj.times)):
        c = traj.snapshot(k)
        u = synthesize(c, basis)
        cols["L2"].append(lp_norm(u, 2))
        cols["Linf"].append(lp_norm(u, math.inf))
        cols["grad_Lp"].append(lp_norm(spectral_gradient(c, basis), p))
        cols["hessian_Lp"].append(lp_norm(spectral_hessian(c, basis), p))
        ut = synthesize(traj.time_derivative(k), basis)
        cols["ut_L2"].append(lp_norm(ut, 2))
        for q in qs:
            cols[f"ut_L{q:g}"].append(lp_norm(ut, q))
    return {k: NormSeries(times, np.array(v), k) for k, v in cols.items()}


def default_fit_window(traj) -> tuple[float, float]:
    """[t1, 100 t1] with t1 = 5 dt of the smallest step; below that u_t is integrator noise."""
    dt = float(np.min(np.diff(traj.times)))
    t1 = 5 * dt
    return t1, 100 * t1


def extinction_time(traj, level: float = EXTINCTION_LEVEL) -> float:
    norms = traj.l2_norms()
    hit = np.nonzero(norms < level)[0]
    return float(traj.times[hit[0]]) if hit.size else math.inf


def _fit(series: NormSeries, window, min_samples: int = 20) -> DecayFit:
    sub = log_spaced_subset(series, *window)
    if len(sub) < min_samples:
        raise InsufficientSamplesError(
            f"only {len(sub)} distinct samples of {series.label} in fit window {window}; need {min_samples}"
        )
    return fit_decay(sub)


def audit_trajectory(
    traj,
    exps: ExponentSet,
    q_list=(2.0,),
    *,
    q_data: float = 2.0,
    refined=None,
    tol: float = 0.15,
    window: tuple[float, float] | None = None,
    u0_linf: float | None = None,
    claims=None,
    linf_slack: float = MAX_MODULUS_SLACK,
) -> list[EstimateReport]:
    """Audit one trajectory against the regularity, decay and extinction claims.

    Claims: (a) t^(1/p) ||grad u||_p bounded and stable under refinement,
    (b) t ||u_t||_2 bounded, plus the largest step-to-step L^2 jump as a
    continuity proxy that must shrink under refinement, (c) early-time blow-up power of ||u_t||_q at most
    1 + gamma(q') + tol, (d) max modulus, (e) L^inf decay power no worse than
    -2 beta / q_data - tol, (f) finite extinction for p < 2.  ``claims`` keeps
    only reports whose claim name starts with one of the given prefixes.
    """
    p = traj.config.p
    window = window or default_fit_window(traj)
    norms = trajectory_norms(traj, q_list, p)
    meta = {"p": p, "mu": traj.config.mu, "nu": traj.config.nu, "window": list(window)}
    reports = []
    refined_norms = trajectory_norms(refined, (), p) if refined is not None else None

    def want(claim: str) -> bool:
        return claims is None or any(claim.startswith(c) for c in claims)

    def _sup_claim(claim, anchor, label, theta):
        s = weighted_sup(norms[label], theta)
        target = {"finite": True}
        ok = math.isfinite(s["sup"])
        if refined is not None:
            s_ref = weighted_sup(refined_norms[label], theta)
            rel = abs(s_ref["sup"] - s["sup"]) / max(s["sup"], 1e-300)
            s["refined_sup"], s["relative_change"] = s_ref["sup"], rel
            target["relative_change_max"] = tol
            ok = ok and rel <= tol
        reports.append(EstimateReport(claim, anchor, s, target, tol, _verdict(ok), dict(meta, theta=theta)))

    if want("weighted_gradient_sup"):
        _sup_claim("weighted_gradient_sup", "Def1.1", "grad_Lp", 1 / p)
    if want("weighted_ut_sup"):
        _sup_claim("weighted_ut_sup", "Def1.1", "ut_L2", 1.0)

    for q in q_list if want("ut_blowup_rate") else ():
        label = "ut_L2" if q == 2 else f"ut_L{q:g}"
        fit = _fit(norms[label], window)
        blowup = -fit.exponent
        target = exps.ut_blowup_exponent(q)
        reports.append(
            EstimateReport(
                f"ut_blowup_rate_q{q:g}",
                "Prop5.1",
                {"blowup_exponent": blowup, "r_squared": fit.r_squared, "samples": fit.samples},
                {"max_exponent": target},
                tol,
                _verdict(blowup <= target + tol),
                dict(meta, q=q, gamma=target - 1),
            )
        )

    if want("l2_continuity"):
        reports.append(_continuity_report(traj, refined, meta))
    if want("max_modulus"):
        reports.append(_max_modulus_report(traj, norms, u0_linf, linf_slack, meta))
    if want("linf_decay_rate"):
        reports.append(_linf_decay_report(traj, exps, norms, window, q_data, tol, meta))
    if want("finite_extinction"):
        reports.append(_extinction_report(traj, meta))
    return reports


def max_l2_jump(traj) -> float:
    """Largest L^2 distance between consecutive stored states."""
    return float(np.max(np.linalg.norm(np.diff(traj.coeffs, axis=0), axis=(1, 2)), initial=0.0))


def _continuity_report(traj, refined, meta) -> EstimateReport:
    # discrete stand-in for continuity in time with values in L^2: the largest
    # step-to-step jump, which must shrink when the time grid is refined
    jump = max_l2_jump(traj)
    measured = {"max_jump": jump, "relative_to_u0": jump / max(float(np.linalg.norm(traj.coeffs[0])), 1e-300)}
    ok = math.isfinite(jump)
    target = {"finite": True}
    if refined is not None:
        measured["refined_max_jump"] = max_l2_jump(refined)
        target["refined_smaller"] = True
        ok = ok and measured["refined_max_jump"] < jump
    return EstimateReport("l2_continuity_proxy", "Def1.1", measured, target, 0.0, _verdict(ok), dict(meta, proxy=True))


def _max_modulus_report(traj, norms, u0_linf, linf_slack, meta) -> EstimateReport:
    linf = np.concatenate([[lp_norm(synthesize(traj.snapshot(0), traj.basis), math.inf)], norms["Linf"].values])
    ref = linf[0] if u0_linf is None else u0_linf
    excess = linf - ref
    violations = int(np.count_nonzero(excess > linf_slack))
    return EstimateReport(
        "max_modulus",
        "Thm1.7",
        {"violations": violations, "max_excess": float(excess[1:].max(initial=-math.inf)), "u0_linf": float(ref)},
        {"violations": 0},
        linf_slack,
        _verdict(violations == 0),
        dict(meta, nonincreasing=bool(np.all(np.diff(linf) <= linf_slack))),
    )


def _linf_decay_report(traj, exps, norms, window, q_data, tol, meta) -> EstimateReport:
    p = traj.config.p
    if not (p < 2 and exps.admissible.get("linf_decay", False)):
        return EstimateReport(
            "linf_decay_rate", "LinfDecay", None, None, tol, "n/a", dict(meta, reason="p = 2 or p <= 2n/(n+2)")
        )
    target = -2 * exps.beta / q_data
    fit = _fit(norms["Linf"], window)
    comp = weighted_sup(norms["Linf"].window(*window), 2 * exps.beta / q_data)
    ok = fit.exponent >= target - tol and math.isfinite(comp["sup"])
    return EstimateReport(
        "linf_decay_rate",
        "LinfDecay",
        {"exponent": fit.exponent, "compensated_sup": comp["sup"], "r_squared": fit.r_squared},
        {"min_exponent": target},
        tol,
        _verdict(ok),
        dict(meta, q_data=q_data, beta=exps.beta),
    )


def _extinction_report(traj, meta) -> EstimateReport:
    t_ext = extinction_time(traj)
    if traj.config.p < 2:
        return EstimateReport(
            "finite_extinction",
            "Extinction",
            {"t_ext": t_ext},
            {"t_ext_below": float(traj.times[-1])},
            0.0,
            _verdict(math.isfinite(t_ext)),
            dict(meta, level=EXTINCTION_LEVEL),
        )
    norms2 = traj.l2_norms()
    keep = norms2 > 0
    rate = float(np.polyfit(traj.times[keep], np.log(norms2[keep]), 1)[0]) if keep.sum() >= 2 else math.nan
    return EstimateReport(
        "finite_extinction",
        "Extinction",
        {"t_ext": t_ext, "exponential_rate": rate},
        None,
        0.0,
        "n/a",
        dict(meta, reason="linear diffusion has no finite extinction", level=EXTINCTION_LEVEL),
    )


# ---------------------------------------------------------------- scenario-level checks


def check_heat_oracle(traj, tol: float = 1e-3) -> EstimateReport:
    """p = 2: every coefficient must follow exp(-(1+nu) lambda_j t) c_j(0)."""
    cfg = traj.config
    if cfg.p != 2.0:
        return EstimateReport("heat_oracle", "HeatOracle", None, None, tol, "n/a", {"reason": "needs p = 2"})
    lam = traj.basis.eigenvalues[:, None]
    errs = []
    for t, c in zip(traj.times[1:], traj.coeffs[1:]):
        exact = np.exp(-(1 + cfg.nu) * lam * t) * traj.coeffs[0]
        errs.append(np.linalg.norm(c - exact) / max(np.linalg.norm(exact), 1e-300))
    final = float(errs[-1]) if errs else 0.0
    worst = float(max(errs, default=0.0))
    return EstimateReport(
        "heat_oracle",
        "HeatOracle",
        {"final_relative_error": final, "max_relative_error": worst},
        {"max_relative_error": tol},
        tol,
        _verdict(final <= tol),
        {"nu": cfg.nu, "t_end": float(traj.times[-1]), "dt": cfg.dt_init},
    )


def check_energy_identity(traj, tol: float = 1e-8) -> EstimateReport:
    """Largest per-step residual of the discrete energy balance (already relative)."""
    res = [d.energy_residual for d in traj.diagnostics]
    worst = float(max(res, default=0.0))
    return EstimateReport(
        "energy_identity",
        "EnergyIdentity",
        {"max_residual": worst, "steps": len(res)},
        {"max_residual": tol},
        tol,
        _verdict(worst <= tol),
        {"p": traj.config.p, "mu": traj.config.mu, "nu": traj.config.nu},
    )


def lr_history(traj, r: float) -> np.ndarray:
    """||phi(s)||_r at every stored step."""
    return np.array([lp_norm(synthesize(traj.snapshot(k), traj.basis), r) for k in range(len(traj.times))])


def check_dual_contraction(primal, phi0: SpectralCoeffs, t_anchor: float, nu: float, b_flag: int, r_values,
                           steps: int = 100, tol: float = 1e-6) -> EstimateReport:
    """||phi(s)||_r must never grow by more than tol * ||phi0||_r from one step to the next."""
    from .solvers import solve_dual

    dual = solve_dual(phi0, primal, t_anchor, nu, b_flag, steps=steps)
    growth = {}
    for r in r_values:
        h = lr_history(dual, r)
        growth[f"r={r:g}"] = float(np.max(np.diff(h)) / max(h[0], 1e-300))
    worst = max(growth.values())
    return EstimateReport(
        f"dual_contraction_b{b_flag}",
        "Lemma2.3",
        {"max_relative_growth": growth},
        {"max_relative_growth": tol},
        tol,
        _verdict(worst <= tol),
        {"b_flag": b_flag, "t_anchor": t_anchor, "steps": steps, "nu": nu, "r": list(r_values)},
    )


def check_elliptic_scaling(f: GridFunction, basis: EigenBasis, p: float, q: float, mu_ladder,
                           scales=(0.1, 1.0, 10.0), tol: float = 0.01, solver_tol: float = 1e-10) -> EstimateReport:
    """||u||_{2,q_hat} / ||f||_q^(1/(p-1)) must not vary by more than tol across f -> s f."""
    from .function_space import w2_norm
    from .solvers import solve_elliptic

    q_hat = exponents(p, max(basis.dim, 2), q).q_hat
    ratios = []
    for s in scales:
        fs = GridFunction(s * f.values, basis)
        u = solve_elliptic(fs, basis, p, mu_ladder, tol=solver_tol)
        ratios.append(w2_norm(u, basis, q_hat) / lp_norm(fs, q) ** (1 / (p - 1)))
    spread = max(ratios) / min(ratios) - 1
    return EstimateReport(
        "elliptic_scaling",
        "Thm6.1-scaling",
        {"ratios": ratios, "spread": spread},
        {"spread": tol},
        tol,
        _verdict(spread <= tol),
        {"p": p, "q": q, "q_hat": q_hat, "scales": list(scales), "mu_ladder": list(mu_ladder)},
    )


def exponent_sweep(points: int = 1000, seed: int = 0) -> list[ExponentSet]:
    """Seeded admissible parameter draws: n in 2..6, p above 2n/(n+2), q in [1, 8], H in [1, 3]."""
    rng = np.random.default_rng(seed)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        for _ in range(points):
            n = int(rng.integers(2, 7))
            lo = 2 * n / (n + 2)
            p = float(rng.uniform(lo + 1e-3 * (2 - lo), 2.0))
            out.append(exponents(p, n, float(rng.uniform(1.0, 8.0)), float(rng.uniform(1.0, 3.0))))
    return out


def audit_exponent_identities(points: int = 1000, seed: int = 0, tol: float = 1e-12) -> EstimateReport:
    worst: dict[str, float] = {}
    for e in exponent_sweep(points, seed):
        for k, v in exponent_identity_residuals(e).items():
            worst[k] = max(worst.get(k, 0.0), v)
    ok = all(v <= tol for v in worst.values())
    return EstimateReport(
        "exponent_identities", "ExponentIdentities", {"max_residual": worst}, {"max_residual": tol}, tol,
        _verdict(ok), {"points": points, "seed": seed},
    )


def check_continuation(result) -> EstimateReport:
    """Successive L^2 gaps along the mu leg must be nonincreasing."""
    gaps = result.mu_gaps
    ok = all(b <= a * (1 + 1e-12) for a, b in zip(gaps, gaps[1:]))
    return EstimateReport(
        "continuation_gaps",
        "Continuation",
        {"mu_gaps": gaps, "all_gaps": result.gaps},
        {"nonincreasing": True},
        0.0,
        _verdict(ok),
        {"labels": [list(l) for l in result.labels]},
    )
