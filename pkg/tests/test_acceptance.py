"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside the pytest report.
"""

import functools
import time

import numpy as np
import pytest

from conftest import finite_difference_gradient
from sketchnewton.baselines import gmres
from sketchnewton.bench import (
    aggregate_over_seeds,
    emit,
    random_qp,
    run_suite,
    sensitivity_sweep,
)
from sketchnewton.kkt import exact_solve
from sketchnewton.merit import merit_gradient, merit_value
from sketchnewton.problems import Iterate, make_pde_problem, make_qp_problem
from sketchnewton.sketch import (
    GAUSSIAN_VECTOR,
    RANDOMIZED_KACZMARZ,
    draw_sketch,
    fresh_state,
    project_step,
    run_inner_loop,
)
from sketchnewton.solver import (
    HARMONIC,
    SolverConfig,
    Status,
    estimate_solution,
    solve,
)

PDE_SPEC = {
    "id": "pde-n3",
    "kind": "pde",
    "N": 3,
    "zeta": 0.1,
    "eps_n": 0.1,
    "eps_s": float(np.sqrt(15.0)),
}

# Reference evaluation counts for the control-problem comparison; the
# acceptance bound is three times each value.
REFERENCE_EVALS = {"adasketch-gv": 18, "adasketch-rk": 14, "byrd-adaptive": 42, "byrd": 130, "auglag": 278}


def criterion(number, description):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"criterion {number:2d} FAIL: {description}")
                raise
            print(f"criterion {number:2d} PASS: {description}")
            return result

        return run

    return wrap


def random_qp_grid():
    """The 20-problem random QP suite used by criteria 1 and 5."""
    rng = np.random.default_rng(2024)
    problems = []
    for i in range(20):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, min(4, n - 1) + 1)) if n > 1 else 1
        problems.append((random_qp(n, m, seed=1000 + i), n, m))
    return problems


@criterion(1, "sketched solves match the direct-solve reference on 20 random QPs")
def test_criterion_01_oracle_equivalence():
    start = time.perf_counter()
    for prob, n, m in random_qp_grid():
        z0 = Iterate(np.zeros(n), np.zeros(m))
        ref = estimate_solution(prob, z0).stacked()
        for dist in (GAUSSIAN_VECTOR, RANDOMIZED_KACZMARZ):
            report = solve(prob, z0, SolverConfig(sketch=dist, kkt_tol=1e-8, seed=7))
            assert report.status is Status.CONVERGED
            assert np.linalg.norm(report.z.stacked() - ref) <= 1e-6
    elapsed = time.perf_counter() - start
    assert elapsed <= 5.0, f"criterion 1 took {elapsed:.2f}s"


@criterion(2, "control-problem comparison table: convergence, eval budgets, ordering")
def test_criterion_02_table_reproduction():
    start = time.perf_counter()
    manifest = {
        "problems": [PDE_SPEC],
        "methods": ["adasketch-gv", "adasketch-rk", "byrd", "byrd-adaptive", "auglag"],
        "seeds": list(range(10)),
        "solver": {"inner_cap": 3_000_000},
    }
    records = run_suite(manifest)
    agg = aggregate_over_seeds(records)

    for rec in records:
        if rec.method_id.startswith("adasketch"):
            assert rec.converged, f"{rec.method_id} seed {rec.seed}: {rec.status}"
            assert rec.final_kkt <= 1e-4
    means = {}
    for method, reference in REFERENCE_EVALS.items():
        entry = agg[("pde-n3", method)]
        assert entry["converged"], f"{method} did not converge"
        means[method] = entry["mean_obj_cons"]
        assert means[method] <= 3 * reference, (
            f"{method}: mean obj/cons evals {means[method]:.1f} exceeds 3x reference {reference}"
        )
    sketched = max(means["adasketch-gv"], means["adasketch-rk"])
    assert sketched < means["byrd-adaptive"] < means["byrd"] < means["auglag"], (
        f"ordering violated: {sketched:.1f}, {means['byrd-adaptive']:.1f}, "
        f"{means['byrd']:.1f}, {means['auglag']:.1f}"
    )
    elapsed = time.perf_counter() - start
    assert elapsed <= 30.0, f"criterion 2 took {elapsed:.2f}s"


@criterion(3, "unit stepsize is accepted once the KKT residual is below 1e-2")
def test_criterion_03_unit_stepsize():
    qp = make_qp_problem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), np.array([1.0]))
    pde = make_pde_problem(3, 0.1, 0.1, np.sqrt(15.0))
    pde_ref = estimate_solution(pde, Iterate(np.ones(pde.n), np.ones(pde.m)))

    runs = []
    for dist in (GAUSSIAN_VECTOR, RANDOMIZED_KACZMARZ):
        cfg = SolverConfig(sketch=dist, seed=3, inner_cap=3_000_000)
        # far starts
        runs.append(solve(qp, Iterate(np.zeros(2), np.zeros(1)), cfg))
        runs.append(solve(pde, Iterate(np.ones(pde.n), np.ones(pde.m)), cfg))
        # near starts guarantee at least one iteration inside the region
        z_near_qp = Iterate(np.array([0.5 + 4e-3, 0.5 - 3e-3]), np.array([-0.5 + 2e-3]))
        runs.append(solve(qp, z_near_qp, cfg))
        bump = np.zeros(pde.n + pde.m)
        bump[0] = 1e-3
        z_near_pde = Iterate.from_stacked(pde_ref.stacked() + bump, pde.n, pde.m)
        runs.append(solve(pde, z_near_pde, cfg))

    in_region_steps = 0
    for report in runs:
        assert report.status is Status.CONVERGED
        for rec in report.iterations:
            if rec.alpha is not None and rec.kkt_norm <= 1e-2:
                in_region_steps += 1
                assert rec.alpha == 1.0, f"alpha {rec.alpha} at kkt {rec.kkt_norm:.2e}"
    assert in_region_steps >= 4, "expected accepted steps inside the unit-step region"


@criterion(4, "constant accuracy gives <=0.9 tail contraction; sharpening gives decreasing ratios")
def test_criterion_04_local_rate_separation():
    pde = make_pde_problem(3, 0.1, 0.1, np.sqrt(15.0))
    z0 = Iterate(np.ones(pde.n), np.ones(pde.m))
    ref = estimate_solution(pde, z0).stacked()

    constant = solve(pde, z0, SolverConfig(seed=5, inner_cap=3_000_000))
    assert constant.status is Status.CONVERGED
    errs = [np.linalg.norm(z - ref) for z in constant.z_history]
    ratios = [b / a for a, b in zip(errs, errs[1:]) if a > 0]
    assert ratios and all(r <= 0.9 for r in ratios), f"tail ratios {ratios}"

    harmonic = solve(
        pde, z0, SolverConfig(theta_schedule=HARMONIC, seed=5, inner_cap=3_000_000)
    )
    assert harmonic.status is Status.CONVERGED
    errs_h = [np.linalg.norm(z - ref) for z in harmonic.z_history]
    ratios_h = [b / a for a, b in zip(errs_h, errs_h[1:]) if a > 0 and b > 0]
    tail = ratios_h[-3:]
    assert tail, "no pre-convergence iterations recorded"
    assert all(b < a for a, b in zip(tail, tail[1:])), f"tail ratios {tail}"


@criterion(5, "accepted directions satisfy the accuracy, descent, and Armijo conditions; penalties stabilize")
def test_criterion_05_in_loop_guarantees():
    reports = []
    for prob, n, m in random_qp_grid():
        z0 = Iterate(np.zeros(n), np.zeros(m))
        for dist in (GAUSSIAN_VECTOR, RANDOMIZED_KACZMARZ):
            reports.append(
                solve(prob, z0, SolverConfig(sketch=dist, kkt_tol=1e-8, seed=7, audit=True))
            )
    pde = make_pde_problem(3, 0.1, 0.1, np.sqrt(15.0))
    z0 = Iterate(np.ones(pde.n), np.ones(pde.m))
    for seed in (0, 1):
        for dist in (GAUSSIAN_VECTOR, RANDOMIZED_KACZMARZ):
            reports.append(
                solve(
                    pde,
                    z0,
                    SolverConfig(sketch=dist, seed=seed, inner_cap=3_000_000, audit=True),
                )
            )

    audited_steps = 0
    for report in reports:
        assert report.status is Status.CONVERGED
        for rec in report.audit:
            audited_steps += 1
            assert rec.residual_norm <= rec.accuracy_rhs
            assert rec.descent_lhs <= rec.descent_rhs
            assert rec.armijo_lhs <= rec.armijo_rhs
        steps = [r for r in report.iterations if r.alpha is not None]
        tail = steps[len(steps) // 2 :]
        assert len({(r.eta1, r.eta2, r.delta) for r in tail}) == 1
    assert audited_steps > 0


@criterion(6, "inner-solver error decreases monotonically and matches the direct solve")
def test_criterion_06_sketch_solver_properties():
    from sketchnewton.kkt import KKTSystem

    start = time.perf_counter()
    rng = np.random.default_rng(9)
    for _ in range(20):
        dim = int(rng.integers(3, 13))
        M = rng.standard_normal((dim, dim))
        Q, _ = np.linalg.qr(M)
        eigs = rng.uniform(0.5, 3.0, dim) * rng.choice([-1.0, 1.0], dim)
        Gamma = Q @ np.diag(eigs) @ Q.T
        Gamma = 0.5 * (Gamma + Gamma.T)
        rhs = rng.standard_normal(dim)
        sys = KKTSystem(
            B=Gamma,
            G=Gamma[:1],
            Gamma=Gamma,
            rhs=rhs,
            gamma_norm_bound=float(np.linalg.norm(Gamma, 2)),
            sigma1=1.0,
            Psi=20.0,
            Upsilon=1.0,
        )
        exact = exact_solve(Gamma, rhs)

        state = fresh_state(sys, np.random.default_rng(int(rng.integers(1 << 30))))
        err = np.linalg.norm(state.dz - exact)
        for _ in range(150):
            project_step(Gamma, state, draw_sketch(RANDOMIZED_KACZMARZ, dim, state.rng))
            new_err = np.linalg.norm(state.dz - exact)
            assert new_err <= err + 1e-12
            err = new_err

        delta = 1e-8 / np.linalg.norm(rhs) * sys.gamma_norm_bound * sys.Psi
        out = run_inner_loop(sys, fresh_state(sys, rng), 1.0, delta, 500_000, RANDOMIZED_KACZMARZ)
        assert np.linalg.norm(Gamma @ out.dz + rhs) <= 1e-8 * 1.001
        assert np.linalg.norm(out.dz - exact) <= 1e-6
    elapsed = time.perf_counter() - start
    assert elapsed <= 2.0, f"criterion 6 took {elapsed:.2f}s"


@criterion(7, "analytic merit gradient matches central differences on every built-in problem")
def test_criterion_07_derivative_consistency(unit_qp, logreg_problem, pde_problem):
    rng = np.random.default_rng(21)
    for problem in (unit_qp, logreg_problem, pde_problem):
        for _ in range(10):
            v = rng.uniform(-0.5, 0.5, problem.n + problem.m)
            z = Iterate(v[: problem.n], v[problem.n :])
            g = merit_gradient(problem, z, 1.0, 0.1)

            def phi(w):
                return merit_value(
                    problem, Iterate.from_stacked(w, problem.n, problem.m), 1.0, 0.1
                )

            fd = finite_difference_gradient(phi, v, h=1e-6)
            rel = np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(g))
            assert rel <= 1e-5, f"{problem.name}: relative error {rel:.2e}"


@criterion(8, "all 12 sweep configurations converge with at most 2x eval spread per parameter")
def test_criterion_08_sensitivity_sweep():
    problem_set = [
        {
            "id": "qp-unit",
            "kind": "qp",
            "Q": [[1.0, 0.0], [0.0, 1.0]],
            "g": [0.0, 0.0],
            "A": [[1.0, 1.0]],
            "b": [1.0],
        },
        {"id": "qp-rand-a", "kind": "qp", "n": 6, "m": 2, "seed": 41},
        {"id": "qp-rand-b", "kind": "qp", "n": 8, "m": 3, "seed": 42},
    ]
    groups = sensitivity_sweep(problem_set, {"seeds": [0, 1, 2], "methods": ["adasketch-gv"]})
    assert len(groups) == 12
    assert all(g["all_converged"] for g in groups)
    for param in ("eta1_0", "eta2_0", "delta_0", "beta"):
        means = [g["mean_obj_cons"] for g in groups if g["param"] == param]
        assert len(means) == 3
        spread = max(means) / min(means)
        assert spread <= 2.0, f"{param}: spread {spread:.2f} over means {means}"


@criterion(9, "GMRES meets its residual contract and terminates within the system size")
def test_criterion_09_gmres_contract():
    rng = np.random.default_rng(33)
    for _ in range(30):
        n = int(rng.integers(2, 21))
        A = rng.standard_normal((n, n)) + n * np.eye(n)
        b = rng.standard_normal(n)
        tol = 10.0 ** -rng.uniform(2, 8)
        x = gmres(A, b, rel_tol=tol)
        assert np.linalg.norm(A @ x - b) <= tol * np.linalg.norm(b)
        x_exact = gmres(A, b, rel_tol=1e-8, max_iter=n)
        assert np.linalg.norm(A @ x_exact - b) <= 1e-8 * np.linalg.norm(b)


@criterion(10, "identical manifests and seeds produce byte-identical CSV output")
def test_criterion_10_determinism():
    manifest = {
        "problems": [
            {"id": "qp-rand", "kind": "qp", "n": 6, "m": 2, "seed": 3},
            dict(PDE_SPEC),
        ],
        "methods": ["adasketch-gv", "adasketch-rk", "byrd"],
        "seeds": [0, 1],
        "solver": {"inner_cap": 3_000_000},
    }
    first = emit(run_suite({**manifest}), "csv")
    second = emit(run_suite({**manifest}), "csv")
    assert first.encode() == second.encode()
