"""Benchmark harness: method x problem x seed grids, aggregation, profiles.

Produces per-run records with the three comparison criteria (final KKT
residual, objective/constraint evaluations, gradient/Jacobian evaluations)
plus a flop count, performance-profile curves over flops, error trajectories
against a high-accuracy reference solution, and the four-parameter
sensitivity sweep.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .baselines import (
    AuglagConfig,
    ByrdAdaptiveConfig,
    ByrdConfig,
    solve_auglag,
    solve_byrd,
    solve_byrd_adaptive,
)
from .problems import Dataset, Iterate, ProblemOracle, make_logreg_problem, make_pde_problem, make_qp_problem
from .sketch import GAUSSIAN_VECTOR, RANDOMIZED_KACZMARZ
from .solver import SolverConfig, Status, estimate_solution, solve

RANDOMIZED_METHODS = ("adasketch-gv", "adasketch-rk")
DETERMINISTIC_METHODS = ("byrd", "byrd-adaptive", "auglag")
ALL_METHODS = RANDOMIZED_METHODS + DETERMINISTIC_METHODS


@dataclass
class RunRecord:
    problem_id: str
    method_id: str
    seed: Optional[int]
    status: str
    final_kkt: float
    obj_cons_evals: int
    grad_jac_evals: int
    total_flops: int
    wall_time: float
    trajectory: list[tuple[int, float, Optional[float]]] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED.value


@dataclass
class ProfileCurve:
    method_id: str
    points: list[tuple[float, float]]


def build_problem(spec: dict) -> tuple[ProblemOracle, Iterate]:
    """Instantiate a problem plus its starting point from a manifest entry."""
    kind = spec["kind"]
    if kind == "qp":
        if "Q" in spec:
            prob = make_qp_problem(
                np.asarray(spec["Q"], dtype=float),
                np.asarray(spec["g"], dtype=float),
                np.asarray(spec["A"], dtype=float),
                np.asarray(spec["b"], dtype=float),
            )
        else:
            prob = random_qp(
                int(spec.get("n", 6)), int(spec.get("m", 2)), int(spec.get("seed", 0))
            )
        x0 = np.asarray(spec.get("x0", np.zeros(prob.n)), dtype=float)
        lam0 = np.asarray(spec.get("lam0", np.zeros(prob.m)), dtype=float)
        return prob, Iterate(x0, lam0)
    if kind == "pde":
        prob = make_pde_problem(
            int(spec.get("N", 3)),
            float(spec.get("zeta", 0.1)),
            float(spec.get("eps_n", 0.1)),
            float(spec.get("eps_s", np.sqrt(15.0))),
        )
        return prob, Iterate(np.ones(prob.n), np.ones(prob.m))
    if kind == "logreg":
        data = synthetic_dataset(
            int(spec.get("n_samples", 40)),
            int(spec.get("n_features", 12)),
            int(spec.get("data_seed", 0)),
        )
        prob = make_logreg_problem(data, int(spec.get("m_lin", 3)), int(spec.get("seed", 0)))
        x0 = np.ones(prob.n) / np.sqrt(prob.n)
        return prob, Iterate(x0, np.zeros(prob.m))
    raise ValueError(f"unknown problem kind {kind!r}")


def random_qp(n: int, m: int, seed: int) -> ProblemOracle:
    """Well-conditioned random QP: unit-spectrum-plus Hessian, orthonormal
    constraint rows."""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    Qmat, _ = np.linalg.qr(M)
    Q = np.eye(n) + Qmat @ np.diag(rng.uniform(0.0, 1.0, n)) @ Qmat.T
    Q = 0.5 * (Q + Q.T)
    A = np.linalg.qr(rng.standard_normal((n, m)))[0][:, :m].T
    g = rng.standard_normal(n)
    b = 0.5 * rng.standard_normal(m)
    return make_qp_problem(Q, g, A, b)


def synthetic_dataset(n_samples: int, n_features: int, seed: int) -> Dataset:
    """Sparse random binary classification data for the logistic problem."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n_features)
    rows = []
    labels = []
    for _ in range(n_samples):
        mask = rng.random(n_features) < 0.5
        if not mask.any():
            mask[int(rng.integers(0, n_features))] = True
        vals = rng.standard_normal(int(mask.sum()))
        row = {int(i): float(v) for i, v in zip(np.flatnonzero(mask), vals)}
        margin = sum(w[i] * v for i, v in row.items())
        labels.append(1.0 if margin + 0.3 * rng.standard_normal() > 0 else -1.0)
        rows.append(row)
    return Dataset(np.array(labels), rows, n_features)


def solver_config_from(manifest: dict, method_id: str, seed: int) -> SolverConfig:
    opts = dict(manifest.get("solver", {}))
    sketch = RANDOMIZED_KACZMARZ if method_id.endswith("-rk") else GAUSSIAN_VECTOR
    return SolverConfig(
        eta1_0=float(opts.get("eta1_0", 1.0)),
        eta2_0=float(opts.get("eta2_0", 0.1)),
        delta_0=float(opts.get("delta_0", 0.1)),
        xi_B=float(opts.get("xi_B", 0.1)),
        beta=float(opts.get("beta", 0.1)),
        nu=float(opts.get("nu", 1.5)),
        sketch=sketch,
        kkt_tol=float(opts.get("kkt_tol", 1e-4)),
        max_outer=int(opts.get("max_outer", 10_000)),
        inner_cap=opts.get("inner_cap"),
        seed=seed,
    )


def _run_method(problem: ProblemOracle, z0: Iterate, method_id: str, manifest: dict, seed: int):
    if method_id in RANDOMIZED_METHODS:
        return solve(problem, z0, solver_config_from(manifest, method_id, seed))
    opts = dict(manifest.get("solver", {}))
    common = dict(
        kkt_tol=float(opts.get("kkt_tol", 1e-4)),
        max_outer=int(opts.get("max_outer", 10_000)),
    )
    if method_id == "byrd":
        return solve_byrd(problem, z0, ByrdConfig(**common))
    if method_id == "byrd-adaptive":
        return solve_byrd_adaptive(problem, z0, ByrdAdaptiveConfig(**common))
    if method_id == "auglag":
        return solve_auglag(problem, z0, AuglagConfig(**common))
    raise ValueError(f"unknown method {method_id!r}")


def run_suite(manifest: dict) -> list[RunRecord]:
    """Run every problem x method cell; randomized methods repeat per seed.

    Individual failures are recorded in the run status and never abort the
    suite.  A reference solution per problem (when obtainable) adds the
    log10 error trajectory to each record.
    """
    seeds = [int(s) for s in manifest.get("seeds", [0])]
    records: list[RunRecord] = []
    for pspec in manifest.get("problems", []):
        pid = pspec.get("id", pspec["kind"])
        try:
            prob0, z0 = build_problem(pspec)
            ref = estimate_solution(prob0, z0).stacked()
        except Exception:
            ref = None  # trajectories then omit the error-to-reference field
        for method_id in manifest.get("methods", []):
            run_seeds = seeds if method_id in RANDOMIZED_METHODS else [None]
            for seed in run_seeds:
                problem, z0 = build_problem(pspec)
                t0 = time.perf_counter()
                report = _run_method(problem, z0, method_id, manifest, seed if seed is not None else 0)
                wall = time.perf_counter() - t0
                trajectory = []
                for rec, zk in zip(report.iterations, report.z_history):
                    log_err = None
                    if ref is not None:
                        err = float(np.linalg.norm(zk - ref))
                        log_err = float(np.log10(err)) if err > 0 else None
                    trajectory.append((rec.k, rec.kkt_norm, log_err))
                records.append(
                    RunRecord(
                        problem_id=pid,
                        method_id=method_id,
                        seed=seed,
                        status=report.status.value,
                        final_kkt=report.final_kkt,
                        obj_cons_evals=report.obj_cons_evals,
                        grad_jac_evals=report.grad_jac_evals,
                        total_flops=report.total_flops,
                        wall_time=wall,
                        trajectory=trajectory,
                    )
                )
    return records


def aggregate_over_seeds(records: Iterable[RunRecord]) -> dict[tuple[str, str], dict]:
    """Seed means per (problem, method): converged iff every seed converged."""
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.problem_id, rec.method_id), []).append(rec)
    out = {}
    for key, group in groups.items():
        out[key] = {
            "converged": all(r.converged for r in group),
            "mean_obj_cons": float(np.mean([r.obj_cons_evals for r in group])),
            "mean_grad_jac": float(np.mean([r.grad_jac_evals for r in group])),
            "mean_flops": float(np.mean([r.total_flops for r in group])),
            "per_seed": [r.obj_cons_evals for r in group],
            "n_runs": len(group),
        }
    return out


def performance_profile(records: Iterable[RunRecord]) -> list[ProfileCurve]:
    """Dolan-More curves over mean flops; failed runs never count as solved.

    A (problem, method) cell counts as solved only when every seed of it
    converged; unsolved cells contribute rho = 0 at every finite tau.
    """
    agg = aggregate_over_seeds(records)
    problems = sorted({p for (p, _) in agg})
    methods = sorted({m for (_, m) in agg})
    usable = []
    for p in problems:
        best = min(
            (agg[(p, m)]["mean_flops"] for m in methods if (p, m) in agg and agg[(p, m)]["converged"]),
            default=None,
        )
        if best is None:
            warnings.warn(f"no method converged on problem {p!r}; excluded from profile")
            continue
        usable.append((p, best))
    ratios_by_method: dict[str, list[float]] = {m: [] for m in methods}
    for m in methods:
        for p, best in usable:
            entry = agg.get((p, m))
            if entry is not None and entry["converged"]:
                ratios_by_method[m].append(entry["mean_flops"] / best)
    taus = sorted({1.0, *(r for rs in ratios_by_method.values() for r in rs)})
    n = len(usable)
    curves = []
    for m in methods:
        pts = [
            (float(t), float(sum(1 for r in ratios_by_method[m] if r <= t) / n) if n else 0.0)
            for t in taus
        ]
        curves.append(ProfileCurve(m, pts))
    return curves


SWEEP_GRID = {
    "eta1_0": (0.1, 1.0, 10.0),
    "eta2_0": (0.01, 0.1, 1.0),
    "delta_0": (0.01, 0.1, 0.9),
    "beta": (1e-7, 1e-3, 0.1),
}


def sensitivity_sweep(problem_set: list[dict], base_cfg: dict | None = None) -> list[dict]:
    """Vary each tuning parameter over its range with the others at default.

    Returns one group dict per (parameter, value) cell with the underlying
    records, 12 cells in total; the defaults appear in every parameter group.
    """
    base_cfg = base_cfg or {}
    groups = []
    for param, values in SWEEP_GRID.items():
        for value in values:
            sub = json.loads(json.dumps({k: v for k, v in base_cfg.items() if k != "problems"}))
            sub["problems"] = problem_set
            solver_opts = dict(sub.get("solver", {}))
            solver_opts[param] = value
            sub["solver"] = solver_opts
            sub["methods"] = base_cfg.get("methods", ["adasketch-gv"])
            recs = run_suite(sub)
            groups.append(
                {
                    "param": param,
                    "value": value,
                    "records": recs,
                    "mean_obj_cons": float(np.mean([r.obj_cons_evals for r in recs])) if recs else 0.0,
                    "all_converged": all(r.converged for r in recs),
                }
            )
    return groups


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


RECORD_COLUMNS = (
    "problem_id",
    "method_id",
    "seed",
    "status",
    "final_kkt",
    "obj_cons_evals",
    "grad_jac_evals",
    "total_flops",
)


def emit_records_csv(records: Iterable[RunRecord]) -> str:
    """Stable-column CSV; wall time and trajectories live in the JSON form
    so repeated runs are byte-identical."""
    lines = [",".join(RECORD_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.problem_id,
                    r.method_id,
                    r.seed,
                    r.status,
                    r.final_kkt,
                    r.obj_cons_evals,
                    r.grad_jac_evals,
                    r.total_flops,
                )
            )
        )
    return "\n".join(lines) + "\n"


def emit_records_json(records: Iterable[RunRecord]) -> str:
    payload = []
    for r in records:
        payload.append(
            {
                "problem_id": r.problem_id,
                "method_id": r.method_id,
                "seed": r.seed,
                "status": r.status,
                "final_kkt": r.final_kkt,
                "obj_cons_evals": r.obj_cons_evals,
                "grad_jac_evals": r.grad_jac_evals,
                "total_flops": r.total_flops,
                "wall_time": r.wall_time,
                "trajectory": [[k, kkt, le] for (k, kkt, le) in r.trajectory],
            }
        )
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def parse_records_json(text: str) -> list[RunRecord]:
    out = []
    for item in json.loads(text):
        out.append(
            RunRecord(
                problem_id=item["problem_id"],
                method_id=item["method_id"],
                seed=item["seed"],
                status=item["status"],
                final_kkt=item["final_kkt"],
                obj_cons_evals=item["obj_cons_evals"],
                grad_jac_evals=item["grad_jac_evals"],
                total_flops=item["total_flops"],
                wall_time=item.get("wall_time", 0.0),
                trajectory=[(k, kkt, le) for k, kkt, le in item.get("trajectory", [])],
            )
        )
    return out


def emit_profile_csv(curves: Iterable[ProfileCurve]) -> str:
    lines = ["method,tau,rho"]
    for curve in curves:
        for tau, rho in curve.points:
            lines.append(f"{curve.method_id},{_fmt(tau)},{_fmt(rho)}")
    return "\n".join(lines) + "\n"


def emit_profile_json(curves: Iterable[ProfileCurve]) -> str:
    payload = [
        {"method": c.method_id, "points": [[t, r] for (t, r) in c.points]} for c in curves
    ]
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def emit_trace_csv(records: Iterable[RunRecord]) -> str:
    lines = ["problem_id,method_id,seed,k,kkt_norm,log_err"]
    for r in records:
        for k, kkt, log_err in r.trajectory:
            lines.append(
                f"{r.problem_id},{r.method_id},{_fmt(r.seed)},{k},{_fmt(kkt)},{_fmt(log_err)}"
            )
    return "\n".join(lines) + "\n"


def emit(records_or_curves, format: str = "csv") -> str:
    """Serialize records or profile curves; format is "csv" or "json"."""
    items = list(records_or_curves)
    is_profile = bool(items) and isinstance(items[0], ProfileCurve)
    if format == "csv":
        return emit_profile_csv(items) if is_profile else emit_records_csv(items)
    if format == "json":
        return emit_profile_json(items) if is_profile else emit_records_json(items)
    raise ValueError(f"unknown format {format!r}")
