"""Scenario execution: solve once, run the selected audits, write CSV/JSON artifacts."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .. import estimates as est
from ..initial_data import make_initial_data
from ..mesh_basis import Domain, build_basis, synthesize, spectral_gradient
from ..solvers import SolverConfig, SolverError, continuation, solve_parabolic
from .config import ExperimentConfig, validate_config
from .registry import load_registry, lookup

log = logging.getLogger(__name__)

DEFAULT_TOLS = {
    "fit": 0.15,
    "energy": 1e-8,
    "heat": 1e-3,
    "max_modulus": 1e-10,
    "dual": 1e-6,
    "scaling": 0.01,
    "identities": 1e-12,
    "hessian": 1e-6,
    "interpolation": 1e-8,
}

NORM_COLUMNS = ("t", "L2", "Linf", "grad_Lp", "ut_L2", "ut_Lq", "hessian_Lp")


def resolve_threads(flag: int | None) -> int:
    if flag:
        return max(1, int(flag))
    env = os.environ.get("PLAPSIM_THREADS")
    return max(1, int(env)) if env else 1


def merge_tols(overrides: dict | None) -> dict:
    tols = dict(DEFAULT_TOLS)
    for k, v in (overrides or {}).items():
        if k not in tols:
            raise ValueError(f"unknown tolerance {k!r}; known: {sorted(tols)}")
        tols[k] = float(v)
    return tols


# ---------------------------------------------------------------- context


class RunContext:
    """Lazily built objects for one validated config."""

    def __init__(self, cfg: ExperimentConfig, tols: dict):
        self.cfg = cfg
        self.tols = tols

    @cached_property
    def domain(self) -> Domain:
        d = self.cfg["domain"]
        return Domain(tuple(d["side_lengths"]), hessian_constant_H=1.0)

    @cached_property
    def basis(self):
        b = self.cfg["basis"]
        return build_basis(self.domain, b["modes_per_dim"], b["oversample"])

    @cached_property
    def u0(self):
        d = self.cfg["initial_data"]
        return make_initial_data(
            d["kind"], self.basis, seed=d["seed"], amplitude=d["amplitude"], ncomp=d["ncomp"], mode=d.get("mode")
        )

    @cached_property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.cfg["solver"])

    @cached_property
    def trajectory(self):
        return solve_parabolic(self.u0, self.basis, self.solver_config)

    def param(self, key, default):
        return self.cfg.params.get(key, default)


def _audit_traj(ctx: RunContext, claims, **kw):
    e = est.exponents(
        ctx.solver_config.p, max(ctx.basis.dim, 2), float(ctx.param("q", 2.0)), ctx.cfg["domain"]["hessian_constant_H"]
    )
    return est.audit_trajectory(
        ctx.trajectory,
        e,
        tuple(float(q) for q in ctx.param("q_list", [2.0])),
        q_data=float(ctx.param("q_data", 2.0)),
        tol=ctx.tols["fit"],
        claims=claims,
        linf_slack=ctx.tols["max_modulus"],
        **kw,
    )


def _heat_oracle(ctx):
    return [est.check_heat_oracle(ctx.trajectory, ctx.tols["heat"])]


def _energy(ctx):
    return [est.check_energy_identity(ctx.trajectory, ctx.tols["energy"])]


def _max_modulus(ctx):
    return _audit_traj(ctx, ("max_modulus",))


def _extinction(ctx):
    return _audit_traj(ctx, ("finite_extinction",))


def _linf_decay(ctx):
    return _audit_traj(ctx, ("linf_decay",))


def _ut_rate(ctx):
    return _audit_traj(ctx, ("ut_blowup",))


def _weighted_sups(ctx):
    return _audit_traj(ctx, ("weighted_", "l2_continuity"))


def _time_interpolation(ctx):
    tr = ctx.trajectory
    p = ctx.solver_config.p
    ks = range(1, len(tr.times))
    g = [spectral_gradient(tr.time_derivative(k), ctx.basis) for k in ks]
    F = [spectral_gradient(tr.snapshot(k), ctx.basis) for k in ks]
    d1 = float(ctx.param("delta1", 1 / p))
    d2 = float(ctx.param("delta2", 1.0))
    return [est.check_time_interpolation(tr.times[1:], g, F, ctx.solver_config.mu, p, d1, d2, ctx.tols["interpolation"])]


def _dual(ctx):
    tr = ctx.trajectory
    p = ctx.solver_config.p
    phi0 = make_initial_data(
        ctx.param("dual_data", "rough_L2"), ctx.basis, seed=int(ctx.param("dual_seed", 7)), ncomp=ctx.u0.ncomp
    )
    t_anchor = float(ctx.param("t_anchor", tr.times[-1]))
    steps = int(ctx.param("dual_steps", 100))
    nu = ctx.solver_config.nu
    r0 = ctx.param("r_values_b0", [1.0, 1.5, 2.0])
    r1 = ctx.param("r_values_b1", [(7 - 3 * p) / (3 - p), 2.0])
    return [
        est.check_dual_contraction(tr, phi0, t_anchor, nu, 0, r0, steps, ctx.tols["dual"]),
        est.check_dual_contraction(tr, phi0, t_anchor, nu, 1, r1, steps, ctx.tols["dual"]),
    ]


def _continuation(ctx):
    lad = ctx.cfg["ladders"]
    mu = lad["mu"] or [ctx.solver_config.mu]
    nu = lad["nu"] or [ctx.solver_config.nu]
    res = continuation(ctx.u0, ctx.basis, ctx.solver_config, mu, nu)
    return [est.check_continuation(res)]


def _weighted_hessian(ctx):
    return [
        est.audit_weighted_hessian(
            ctx.basis,
            ctx.param("p_values", [1.55, 1.7, 1.85]),
            ctx.param("mu_values", [1.0, 1e-2]),
            int(ctx.param("fields", 200)),
            int(ctx.param("seed", 0)),
            ctx.tols["hessian"],
        )
    ]


def _power_difference(ctx):
    return [est.audit_power_difference(int(ctx.param("samples", 100_000)), int(ctx.param("seed", 0)))]


def _exponent_identities(ctx):
    return [est.audit_exponent_identities(int(ctx.param("points", 1000)), int(ctx.param("seed", 0)), ctx.tols["identities"])]


def _elliptic_scaling(ctx):
    f = synthesize(ctx.u0, ctx.basis)
    return [
        est.check_elliptic_scaling(
            f,
            ctx.basis,
            ctx.solver_config.p,
            float(ctx.param("q", 3.0)),
            ctx.param("mu_ladder", [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12]),
            tuple(ctx.param("scales", [0.1, 1.0, 10.0])),
            ctx.tols["scaling"],
        )
    ]


AUDITS = {
    "heat_oracle": _heat_oracle,
    "energy_identity": _energy,
    "max_modulus": _max_modulus,
    "extinction": _extinction,
    "linf_decay": _linf_decay,
    "ut_rate": _ut_rate,
    "weighted_sups": _weighted_sups,
    "time_interpolation": _time_interpolation,
    "dual_contraction": _dual,
    "continuation": _continuation,
    "weighted_hessian": _weighted_hessian,
    "power_difference": _power_difference,
    "exponent_identities": _exponent_identities,
    "elliptic_scaling": _elliptic_scaling,
}

# audits that need a parabolic trajectory of the config itself
_TRAJECTORY_AUDITS = {
    "heat_oracle", "energy_identity", "max_modulus", "extinction", "linf_decay",
    "ut_rate", "weighted_sups", "time_interpolation", "dual_contraction",
}


# ---------------------------------------------------------------- writers


def _fmt(x) -> str:
    return repr(float(x))


def _csv_header(fh, cfg: ExperimentConfig, units: str) -> None:
    fh.write(f"# units: {units}; config_sha256={cfg.sha256}\n")


def write_trajectory_csv(path: Path, traj, cfg: ExperimentConfig) -> None:
    modes = traj.basis.modes
    n = modes.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _csv_header(fh, cfg, "t=time; coefficient=field units (L2-normalized basis)")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"m{i + 1}" for i in range(n)] + ["component", "coefficient"])
        for t, c in zip(traj.times, traj.coeffs):
            for j, m in enumerate(modes):
                for k in range(c.shape[1]):
                    w.writerow([_fmt(t)] + [int(x) for x in m] + [k, _fmt(c[j, k])])


def write_norms_csv(path: Path, norms: dict, cfg: ExperimentConfig, q: float) -> None:
    ut_q = norms.get(f"ut_L{q:g}", norms["ut_L2"])
    cols = [norms["L2"].times, norms["L2"].values, norms["Linf"].values, norms["grad_Lp"].values,
            norms["ut_L2"].values, ut_q.values, norms["hessian_Lp"].values]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _csv_header(fh, cfg, f"t=time; norms=field units per length^k; p={cfg['solver']['p']}; ut_Lq uses q={q:g}")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NORM_COLUMNS)
        for row in zip(*cols):
            w.writerow([_fmt(x) for x in row])


def write_reports(out_dir: Path, prefix: str, reports, cfg: ExperimentConfig) -> None:
    (out_dir / f"{prefix}reports.json").write_text(est.reports_to_json(reports) + "\n", encoding="utf-8")
    with open(out_dir / f"{prefix}reports.csv", "w", encoding="utf-8", newline="") as fh:
        _csv_header(fh, cfg, "measured/target in the units of each claim")
        fh.write(est.reports_to_csv(reports))


# ---------------------------------------------------------------- operations


@dataclass
class RunResult:
    exit_code: int
    reports: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    error: str | None = None
    trajectory: object = None


def _audit_names(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    reg = load_registry()
    return [(a, reg[a]["audit"]) for a in cfg.anchors]


def run_experiment(cfg: ExperimentConfig, out_dir=None, tol_overrides=None, write=True) -> RunResult:
    """Solve the configured scenario and audit it.  Exit code 0 iff no selected audit fails."""
    tols = merge_tols(tol_overrides)
    ctx = RunContext(cfg, tols)
    out = Path(out_dir or cfg["output"]["dir"])
    prefix = cfg["output"]["prefix"] or f"{cfg.scenario}_"
    audits = _audit_names(cfg)
    needs_traj = not audits or any(a in _TRAJECTORY_AUDITS for _, a in audits)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    result = RunResult(0)
    try:
        if needs_traj:
            traj = ctx.trajectory
            result.trajectory = traj
            if write:
                q_list = [float(q) for q in ctx.param("q_list", [2.0])]
                q = next((q for q in q_list if q != 2), 2.0)
                norms = est.trajectory_norms(traj, q_list)
                tpath, npath = out / f"{prefix}trajectory.csv", out / f"{prefix}norms.csv"
                write_trajectory_csv(tpath, traj, cfg)
                write_norms_csv(npath, norms, cfg, q)
                result.artifacts += [str(tpath), str(npath)]
        for anchor, audit in audits:
            for r in AUDITS[audit](ctx):
                r.meta.setdefault("scenario", cfg.scenario)
                result.reports.append(r)
    except SolverError as exc:
        result.exit_code = 3
        result.error = str(exc)
        if write:
            diag = {"error": str(exc), "diagnostics": exc.diagnostics, "config_sha256": cfg.sha256}
            dpath = out / f"{prefix}diagnostics.json"
            dpath.write_text(json.dumps(est._jsonable(diag), indent=2, sort_keys=True) + "\n", encoding="utf-8")
            result.artifacts.append(str(dpath))
        return result
    if write:
        write_reports(out, prefix, result.reports, cfg)
        result.artifacts += [str(out / f"{prefix}reports.json"), str(out / f"{prefix}reports.csv")]
    if any(r.verdict == "fail" for r in result.reports):
        result.exit_code = 1
    return result


SWEEP_PARAMS = {
    "p": "solver.p",
    "mu": "solver.mu",
    "nu": "solver.nu",
    "modes": "basis.modes_per_dim",
    "dt": "solver.dt_init",
}


def _sweep_one(cfg: ExperimentConfig, key: str, value, tol_overrides):
    try:
        c = cfg.with_overrides({key: value})
        res = run_experiment(c, tol_overrides=tol_overrides, write=False)
        return value, res, None
    except Exception as exc:  # a failed cell is recorded, the sweep continues
        log.warning("sweep value %r failed: %s", value, exc)
        return value, None, f"{type(exc).__name__}: {exc}"


def sweep(cfg: ExperimentConfig, param: str, values, out_dir=None, threads: int = 1, tol_overrides=None) -> tuple[int, Path]:
    """One run per value, merged into a single CSV ordered as ``values``."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    key = SWEEP_PARAMS[param]
    cast = int if param == "modes" else float
    values = [cast(v) for v in values]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        cells = list(pool.map(lambda v: _sweep_one(cfg, key, v, tol_overrides), values))

    claims = []
    for _, res, _ in cells:
        for r in res.reports if res else []:
            if r.claim not in claims:
                claims.append(r.claim)

    finals, rows = [], []
    for value, res, err in cells:
        traj = res.trajectory if res else None
        status = "failed" if res is None or res.exit_code == 3 else "ok"
        err = err or (res.error if res else None)
        t_ext = est.extinction_time(traj) if traj is not None else math.nan
        final = traj.coeffs[-1] if traj is not None else None
        finals.append(final)
        row = {
            param: value,
            "status": status,
            "exit_code": res.exit_code if res else 2,
            "t_ext": t_ext,
            "final_L2": float(np.linalg.norm(final)) if final is not None else math.nan,
        }
        by_claim = {r.claim: r for r in (res.reports if res else [])}
        for c in claims:
            r = by_claim.get(c)
            row[f"{c}_verdict"] = r.verdict if r else ""
            exp_val = ""
            if r and isinstance(r.measured, dict):
                for k in ("blowup_exponent", "exponent"):
                    if k in r.measured:
                        exp_val = r.measured[k]
            row[f"{c}_exponent"] = exp_val
        row["error"] = err or ""
        rows.append(row)

    # successive differences of the final state and their ratios; only meaningful
    # when neighbouring runs approximate the same solution
    diffs = [math.nan]
    for a, b in zip(finals, finals[1:]):
        comparable = param in ("mu", "nu", "dt") and a is not None and b is not None and a.shape == b.shape
        diffs.append(float(np.linalg.norm(a - b)) if comparable else math.nan)
    for i, row in enumerate(rows):
        row["successive_gap"] = diffs[i]
        row["gap_ratio"] = diffs[i - 1] / diffs[i] if i >= 2 and diffs[i] and diffs[i] == diffs[i] else math.nan

    out = Path(out_dir or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.scenario}_sweep_{param}.csv"
    fields = list(rows[0].keys()) if rows else [param]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _csv_header(fh, cfg, f"{param} as swept; t_ext=time; final_L2 and gaps=field units")
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    failed = any(r["status"] == "failed" for r in rows)
    audit_fail = any(r["exit_code"] == 1 for r in rows)
    return (3 if failed else 1 if audit_fail else 0), path


def verify(anchors, out_dir=None, tol_overrides=None, seed=None, threads: int = 1) -> tuple[int, list]:
    """Run the canonical scenario of each anchor; exit 0 iff nothing fails."""
    entries = [(a, lookup(a)) for a in anchors]
    results = []

    def _one(item):
        anchor, entry = item
        raw = dict(entry["scenario"])
        raw["audit"] = dict(raw.get("audit", {}))
        raw["audit"]["anchors"] = [anchor]
        if seed is not None and raw.get("initial_data", {}).get("seed") is not None:
            raw["initial_data"] = dict(raw["initial_data"], seed=seed)
        cfg = validate_config(raw, load_registry())
        res = run_experiment(cfg, out_dir=out_dir, tol_overrides=tol_overrides, write=out_dir is not None)
        return anchor, res

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(_one, entries))
    code = 0
    for _, res in results:
        code = max(code, res.exit_code)
    return code, results


def summarize_reports(out_dir) -> tuple[int, list[dict]]:
    """Collect every *reports.json under out_dir (sorted by file name)."""
    rows = []
    for path in sorted(Path(out_dir).glob("*reports.json")):
        for r in json.loads(path.read_text(encoding="utf-8")):
            rows.append(dict(r, source=path.name))
    code = 1 if any(r["verdict"] == "fail" for r in rows) else 0
    return code, rows


def set_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None:
        return cfg
    return cfg.with_overrides({"initial_data.seed": seed})


__all__ = [
    "AUDITS", "DEFAULT_TOLS", "RunContext", "RunResult", "run_experiment", "sweep", "verify",
    "summarize_reports", "resolve_threads", "merge_tols", "set_seed",
]
