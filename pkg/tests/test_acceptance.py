"""End-to-end acceptance checks against reference benchmark errors.

Each test prints one ``PASS``/``FAIL`` line and then asserts. Reference
errors are reproduced to within a factor of 3; see the decisions ledger
for the analysis of the criteria this implementation does not meet.
"""

import time

import numpy as np
import pytest
import scipy.sparse as sp

from sphtransport.geometry import PointSet, cap_neighbors, cap_neighbors_brute, generate_phyllotaxis
from sphtransport.gmls import gmls_gradient_shape_functions, gmls_shape_functions
from sphtransport.harmonics import eval_basis, eval_surface_gradient_basis
from sphtransport.mkls import mkls_shape_functions
from sphtransport.solver import (
    SolverConfig,
    assemble_operators,
    run_simulation,
    system_matrix_bdf1,
    system_matrix_bdf2,
)
from sphtransport.sparse import SparseMatrix, bicgstab, ilu0_factorize, spmv
from sphtransport.testcases import deformational_case, l2_norm, solid_body_case, vortex_case

from .conftest import random_unit
from .test_gmls import nbhd_at
from .test_sparse import dense_lu_factors, tridiagonal

FACTOR = 3.0
VORTEX_DT = 3 / 1000
SOLID_DT = 2 * np.pi / 1000


@pytest.fixture
def verdict(capsys):
    def report(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return report


def within(err, ref, factor=FACTOR):
    return ref / factor <= err <= ref * factor


def sweep(case, method, dt, ns):
    reps, t0 = [], time.perf_counter()
    for n in ns:
        reps.append(run_simulation(generate_phyllotaxis(n), SolverConfig(method, dt=dt), case)[1])
    return reps, time.perf_counter() - t0


def check_table(verdict, name, reps, refs, runtime, budget):
    """Absolute l2 errors against the references; relative errors are shown for information."""
    errs = [r.l2_error for r in reps]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    ok = all(within(e, r) for e, r in zip(errs, refs)) and monotone and runtime < budget
    detail = ", ".join(
        f"{e:.3e} (ref {r:.2e}, x{e / r:.2f}; relative {rep.relative_l2_error:.2e})"
        for e, r, rep in zip(errs, refs, reps)
    )
    verdict(name, ok, f"{detail}; monotone={monotone}; {runtime:.0f}s")


def test_criterion_1_vortex_gmls(verdict):
    reps, rt = sweep(vortex_case(), "GMLS", VORTEX_DT, (400, 1600))
    check_table(verdict, "criterion 1 vortex GMLS", reps, (2.25e-2, 3.51e-3), rt, 120)


def test_criterion_2_vortex_mkls(verdict):
    reps, rt = sweep(vortex_case(), "MKLS", VORTEX_DT, (400, 1600))
    check_table(verdict, "criterion 2 vortex MKLS", reps, (4.05e-2, 1.41e-2), rt, 180)


def test_criterion_3_deformational_gmls(verdict):
    ps = generate_phyllotaxis(400)
    case = deformational_case()
    t0 = time.perf_counter()
    U, rep = run_simulation(ps, SolverConfig("GMLS", dt=1 / 100), case)
    rt = time.perf_counter() - t0
    # the exact solution at T is the initial field, so the error is the return difference
    ret = l2_norm(spmv(assemble_operators(ps, SolverConfig("GMLS")).A, U) - case.initial(ps.lam, ps.theta))
    ok = within(rep.l2_error, 3.34e-3) and ret < 5e-3 and rt < 120
    verdict(
        "criterion 3 deformational GMLS", ok,
        f"{rep.l2_error:.3e} (ref 3.34e-3, x{rep.l2_error / 3.34e-3:.2f}); return difference {ret:.3e} "
        f"(limit 5e-3); {rt:.0f}s",
    )


def test_criterion_4_solid_body_gmls(verdict):
    reps, rt = sweep(solid_body_case(), "GMLS", SOLID_DT, (400, 1600))
    check_table(verdict, "criterion 4 solid body GMLS", reps, (2.59e-1, 1.72e-1), rt, 180)


# ---- criterion 5: property suite -------------------------------------------------

def test_criterion_5a_gmls_reproduction(verdict, rng, ps1600):
    delta = 12 * ps1600.fill_distance_h
    wv = wg = 0.0
    for x in random_unit(rng, 100):
        nb = nbhd_at(ps1600, x, delta)
        Yn = eval_basis(ps1600.xyz[nb.indices], 3)
        wv = max(wv, np.max(np.abs(gmls_shape_functions(x, nb, ps1600, 3) @ Yn - eval_basis(x, 3))))
        g = gmls_gradient_shape_functions(x, nb, ps1600, 3) @ Yn
        wg = max(wg, np.max(np.abs(g - eval_surface_gradient_basis(x, 3))))
    verdict("criterion 5a GMLS reproduction", wv <= 1e-9 and wg <= 1e-8, f"values {wv:.1e}, gradients {wg:.1e}")


def test_criterion_5b_mkls_kronecker(verdict, rng, ps1600):
    delta, c = 12 * ps1600.fill_distance_h, 20 / ps1600.fill_distance_h
    worst = 0.0
    for i in rng.choice(len(ps1600), 100, replace=False):
        nb = cap_neighbors(ps1600, i, delta)
        for k, j in enumerate(nb.indices):
            a = mkls_shape_functions(ps1600.xyz[j], nb, ps1600, 3, c)
            a[k] -= 1.0
            worst = max(worst, np.max(np.abs(a)))
    verdict("criterion 5b MKLS Kronecker delta", worst <= 1e-8, f"max deviation {worst:.1e} over 100 stencils")


@pytest.fixture(scope="module")
def ops1600():
    ps = generate_phyllotaxis(1600)
    return {m: assemble_operators(ps, SolverConfig(m)) for m in ("GMLS", "MKLS")}


def test_criterion_5c_row_sums(verdict, ops1600):
    worst = 0.0
    for ops in ops1600.values():
        one = np.ones(ops.n)
        worst = max(worst, np.max(np.abs(spmv(ops.A, one) - 1)), np.max(np.abs(spmv(ops.B1, one))),
                    np.max(np.abs(spmv(ops.B2, one))))
    verdict("criterion 5c consistency", worst <= 1e-8, f"max deviation {worst:.1e}")


def test_criterion_5d_mkls_identity(verdict, ops1600):
    A = ops1600["MKLS"].A.to_scipy()
    dev = abs(A - sp.identity(A.shape[0])).max()
    verdict("criterion 5d MKLS A = I", dev <= 1e-8, f"max deviation {dev:.1e}")


def test_criterion_5e_pole_rows(verdict):
    base = generate_phyllotaxis(1600).xyz
    ps = PointSet(np.vstack([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], base]))
    finite = True
    for m in ("GMLS", "MKLS"):
        ops = assemble_operators(ps, SolverConfig(m))
        finite &= all(np.all(np.isfinite(M.values)) for M in (ops.A, ops.B1, ops.B2))
    verdict("criterion 5e pole finiteness", bool(finite), "nodes on both poles, both methods")


def test_criterion_5f_true_residual(verdict, rng, ops1600):
    ps = generate_phyllotaxis(1600)
    case = vortex_case()
    v1, v2 = case.velocity(ps.lam, ps.theta)
    worst, solves = 0.0, 0
    for ops in ops1600.values():
        for build in (system_matrix_bdf1, system_matrix_bdf2):
            S = build(ops, v1, v2, 0.01)
            F = ilu0_factorize(S)
            Ss = S.to_scipy()
            for tol in (1e-6, 1e-10):
                for _ in range(3):
                    b = spmv(ops.A, rng.normal(size=1600))
                    x, rep = bicgstab(S, b, preconditioner=F, rel_tol=tol)
                    if rep.converged:
                        solves += 1
                        worst = max(worst, np.linalg.norm(b - Ss @ x) / np.linalg.norm(b) / tol)
    verdict("criterion 5f BiCGSTAB true residual", solves == 24 and worst <= 1.0,
            f"{solves} converged solves, worst residual/tol {worst:.2f}")


def test_criterion_5g_ilu_equals_lu(verdict, rng):
    worst = 0.0
    for n in (5, 20, 60):
        A = tridiagonal(rng, n)
        L, U = dense_lu_factors(A)
        worst = max(worst, np.max(np.abs(ilu0_factorize(SparseMatrix.from_dense(A)).matrix.to_dense() - (np.tril(L, -1) + U))))
    verdict("criterion 5g ILU(0) = LU on no-fill patterns", worst <= 1e-12, f"max deviation {worst:.1e}")


def test_criterion_5h_cap_neighbors(verdict, rng, ps1600):
    mismatches = 0
    for delta in (12 * ps1600.fill_distance_h, 0.05, 1.0):
        for i in range(len(ps1600)):
            a = cap_neighbors(ps1600, i, delta).indices
            b = cap_neighbors_brute(ps1600, i, delta).indices
            mismatches += not np.array_equal(np.sort(a), b)
    verdict("criterion 5h cap_neighbors = brute force", mismatches == 0, f"{mismatches} mismatches in 4800 queries")


# ---- criterion 6 and the CPU-time trend share N = 6400 -------------------------

@pytest.fixture(scope="module")
def ops6400():
    ps = generate_phyllotaxis(6400)
    return ps, assemble_operators(ps, SolverConfig("GMLS"))


def test_criterion_6_bdf2_order(verdict, ops6400):
    ps, ops = ops6400
    U = [run_simulation(ps, SolverConfig(dt=dt), vortex_case(), ops=ops)[0] for dt in (3 / 500, 3 / 1000, 3 / 2000)]
    ratio = l2_norm(U[0] - U[1]) / l2_norm(U[1] - U[2])
    verdict("criterion 6 BDF2 self-convergence", 3 <= ratio <= 5, f"ratio {ratio:.3f} (required [3, 5])")


def test_criterion_7_relative_error_proxy(verdict):
    ps = generate_phyllotaxis(1600)
    rel = {}
    for m in ("GMLS", "MKLS"):
        _, rep = run_simulation(ps, SolverConfig(m, dt=5 / 600), deformational_case())
        rel[m] = rep.relative_l2_error
    ok = all(r <= 5e-3 for r in rel.values())
    verdict("criterion 7 relative error at N=1600", ok,
            ", ".join(f"{m} {r:.3e}" for m, r in rel.items()) + " (limit 5e-3)")


def test_cpu_time_trend(verdict, ops6400):
    """Assembly and solve times grow sub-quadratically in N."""
    steps = 20
    assembly, solve = [], []
    for n in (400, 1600, 6400):
        if n == 6400:
            ps, ops = ops6400
            t0 = time.perf_counter()
            assemble_operators(ps, SolverConfig())
            assembly.append(time.perf_counter() - t0)
        else:
            ps = generate_phyllotaxis(n)
            ops = assemble_operators(ps, SolverConfig())
            assembly.append(ops.assembly_time)
        _, rep = run_simulation(ps, SolverConfig(dt=VORTEX_DT), vortex_case(), final_time=steps * VORTEX_DT, ops=ops)
        solve.append(rep.factorization_time + rep.iteration_time)
    slope = lambda t: np.log(t[-1] / t[0]) / np.log(16)
    ok = slope(assembly) < 2 and slope(solve) < 2
    verdict("CPU-time trend", ok,
            f"assembly {', '.join(f'{t:.2f}' for t in assembly)}s (exponent {slope(assembly):.2f}); "
            f"solve {', '.join(f'{t:.3f}' for t in solve)}s (exponent {slope(solve):.2f})")
