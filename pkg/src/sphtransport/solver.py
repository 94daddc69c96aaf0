"""Operator assembly and BDF1/BDF2 time stepping for ``u_t + v . grad u = 0``.

At every node ``x_i`` the unknowns ``U`` satisfy::

    first step:  (A + dt (v1 B1 + v2 B2)) U^1 = A U^0
    later steps: (3A + 2dt (v1 B1 + v2 B2)) U^{n+1} = 4 A U^n - A U^{n-1}

where ``A`` holds the shape-function values ``a_j(x_i)`` and ``B1``/``B2``
the weights of ``(1/cos theta) d/dlam`` and ``d/dtheta``. Velocities are
evaluated at the new time level and scale the rows of ``B1``/``B2``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConditioningError, ConfigError, StencilError, StepError
from .geometry import Neighborhood
from .gmls import gmls_advection_row, gmls_shape_functions
from .harmonics import basis_dim
from .mkls import CHORDAL, GEODESIC, mkls_advection_row, mkls_shape_functions
from .testcases import l2_norm
from .sparse import DEFAULT_MAX_ITER, DEFAULT_REL_TOL, SparseMatrix, bicgstab, ilu0_factorize, spmv

log = logging.getLogger(__name__)

METHODS = ("GMLS", "MKLS")


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and linear-solver settings.

    ``delta = delta_multiplier * h`` and ``c = c_multiplier / h`` with
    ``h = N**-0.5``. Every node needs at least
    ``stencil_safety * (m + 1)**2`` neighbors.
    """

    method: str = "GMLS"
    m: int = 3
    delta_multiplier: float = 12.0
    c_multiplier: float = 20.0
    dt: float = 1e-3
    rel_tol: float = DEFAULT_REL_TOL
    max_iter: int = DEFAULT_MAX_ITER
    correlation_distance: str = CHORDAL
    stencil_safety: float = 2.0
    basis: str = "local"
    precondition: bool = True

    def __post_init__(self):
        method = str(self.method).upper()
        if method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}", "method")
        object.__setattr__(self, "method", method)
        if int(self.m) != self.m or self.m < 0:
            raise ConfigError("harmonic degree must be a non-negative integer", "m")
        object.__setattr__(self, "m", int(self.m))
        for key in ("delta_multiplier", "c_multiplier", "dt", "rel_tol", "stencil_safety"):
            if not getattr(self, key) > 0:
                raise ConfigError("must be positive", key)
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError("must be a positive integer", "max_iter")
        if self.correlation_distance not in (CHORDAL, GEODESIC):
            raise ConfigError(f"must be {CHORDAL!r} or {GEODESIC!r}", "correlation_distance")
        if self.basis not in ("local", "harmonic"):
            raise ConfigError("must be 'local' or 'harmonic'", "basis")

    def delta(self, n):
        return self.delta_multiplier / np.sqrt(n)

    def c(self, n):
        return self.c_multiplier * np.sqrt(n)

    def min_stencil(self):
        return int(np.ceil(self.stencil_safety * basis_dim(self.m)))


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Global value and derivative matrices sharing one sparsity pattern."""

    A: SparseMatrix
    B1: SparseMatrix
    B2: SparseMatrix
    assembly_time: float = 0.0

    @property
    def n(self):
        return self.A.n_rows


def _row(ps, i, cfg, delta, c):
    nbhd_idx = ps.cap_indices(ps.xyz[i], delta)
    nbhd = Neighborhood(i, nbhd_idx, delta)
    if cfg.method == "GMLS":
        return gmls_advection_row(ps.xyz[i], nbhd, ps, cfg.m, center=i, min_size=cfg.min_stencil(), basis=cfg.basis)
    return mkls_advection_row(
        ps.xyz[i], nbhd, ps, cfg.m, c, cfg.correlation_distance, center=i,
        min_size=cfg.min_stencil(), basis=cfg.basis,
    )


def assemble_operators(ps, cfg):
    """Build ``A``, ``B1``, ``B2`` row by row from the local stencils.

    Every node is visited; if any fail, the worst offender (fewest
    neighbors, else largest condition number) is raised.
    """
    t0 = time.perf_counter()
    n = len(ps)
    delta, c = cfg.delta(n), cfg.c(n)
    counts = np.zeros(n, dtype=np.int64)
    cols, a, g1, g2 = [], [], [], []
    worst = None
    failures = 0
    for i in range(n):
        try:
            row = _row(ps, i, cfg, delta, c)
        except StencilError as exc:
            failures += 1
            if worst is None or isinstance(worst, ConditioningError) or exc.count < worst.count:
                worst = exc
            continue
        except ConditioningError as exc:
            failures += 1
            if worst is None or (isinstance(worst, ConditioningError) and exc.condition > worst.condition):
                worst = exc
            continue
        counts[i] = len(row.indices)
        cols.append(row.indices)
        a.append(row.a)
        g1.append(row.g_lambda)
        g2.append(row.g_theta)
    if worst is not None:
        msg = f"assembly failed at {failures} of {n} nodes; worst: {worst}"
        raise type(worst)(msg, center=worst.center, **(
            {"count": worst.count, "required": worst.required} if isinstance(worst, StencilError)
            else {"condition": worst.condition}
        ))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    cols = np.concatenate(cols).astype(np.int64)

    def mat(vals):
        return SparseMatrix(n, n, offsets, cols, np.concatenate(vals))

    ops = DiscreteOperators(mat(a), mat(g1), mat(g2), time.perf_counter() - t0)
    log.info("assembled %s operators for N=%d (nnz=%d) in %.2fs", cfg.method, n, ops.A.nnz, ops.assembly_time)
    return ops


def _advective(ops, v1, v2):
    rows = ops.A.row_ids()
    return np.asarray(v1)[rows] * ops.B1.values + np.asarray(v2)[rows] * ops.B2.values


def system_matrix_bdf1(ops, v1, v2, dt):
    """``A + dt (diag(v1) B1 + diag(v2) B2)``."""
    return ops.A.with_values(ops.A.values + dt * _advective(ops, v1, v2))


def system_matrix_bdf2(ops, v1, v2, dt):
    """``3A + 2 dt (diag(v1) B1 + diag(v2) B2)``."""
    return ops.A.with_values(3.0 * ops.A.values + 2.0 * dt * _advective(ops, v1, v2))


@dataclass
class SimulationState:
    """Nodal unknowns at two consecutive time levels."""

    u_prev: np.ndarray | None
    u_curr: np.ndarray
    step_index: int
    dt: float

    @property
    def time(self):
        return self.step_index * self.dt


@dataclass
class StepRecord:
    step: int
    time: float
    iterations: int
    residual: float
    factor_time: float
    solve_time: float


@dataclass
class RunReport:
    """Summary of one simulation; see :meth:`as_dict`."""

    test: str
    method: str
    n: int
    dt: float
    final_time: float
    n_steps: int
    assembly_time: float = 0.0
    factorization_time: float = 0.0
    iteration_time: float = 0.0
    total_iterations: int = 0
    max_iterations: int = 0
    converged: bool = True
    steps: list = field(default_factory=list, repr=False)
    max_abs_initial: float = 0.0
    max_abs_final: float = 0.0
    growth: float = 1.0  # max|U| final / max|U| initial
    l2_error: float | None = None
    relative_l2_error: float | None = None
    l2_error_of_coefficients: float | None = None
    wall_time: float = 0.0

    def as_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "steps"}
        d["iterations_per_step"] = [s.iterations for s in self.steps]
        return d

    def as_text(self):
        lines = []
        for k, v in self.as_dict().items():
            if k == "iterations_per_step":
                continue
            lines.append(f"{k}: {v}")
        return "\n".join(lines) + "\n"


def step_count(final_time, dt, what="final_time"):
    """Number of steps ``k`` with ``k * dt == final_time`` (to rounding)."""
    k = int(round(final_time / dt))
    if k < 0 or abs(k * dt - final_time) > 1e-9 * max(abs(final_time), dt):
        raise ConfigError(f"{final_time!r} is not an integer multiple of dt={dt!r}", what)
    return k


class TransportSimulation:
    """Drives the BDF1 start-up step and the BDF2 steps on a fixed node set.

    For steady velocity fields the system matrices and their ILU(0) factors
    are built once; time-dependent fields rebuild them every step.
    """

    def __init__(self, ps, cfg, testcase, ops=None):
        self.ps = ps
        self.cfg = cfg
        self.case = testcase
        self.ops = assemble_operators(ps, cfg) if ops is None else ops
        self._cache = {}
        self.records = []

    def velocity_at(self, t):
        v1, v2 = self.case.velocity(self.ps.lam, self.ps.theta, t)
        return np.broadcast_to(v1, (len(self.ps),)), np.broadcast_to(v2, (len(self.ps),))

    def initial_state(self):
        u0 = np.asarray(self.case.initial(self.ps.lam, self.ps.theta), dtype=float)
        return SimulationState(None, u0, 0, self.cfg.dt)

    def _system(self, kind, t, rebuild=False):
        key = kind
        steady = not self.case.time_dependent_velocity
        if steady and not rebuild and key in self._cache:
            return self._cache[key] + (0.0,)
        t0 = time.perf_counter()
        v1, v2 = self.velocity_at(t)
        build = system_matrix_bdf1 if kind == "bdf1" else system_matrix_bdf2
        S = build(self.ops, v1, v2, self.cfg.dt)
        F = ilu0_factorize(S) if self.cfg.precondition else None
        elapsed = time.perf_counter() - t0
        if steady:
            self._cache[key] = (S, F)
        return S, F, elapsed

    def _solve(self, S, F, rhs, guess, step):
        t0 = time.perf_counter()
        x, rep = bicgstab(S, rhs, guess, F, self.cfg.rel_tol, self.cfg.max_iter)
        elapsed = time.perf_counter() - t0
        if not rep.converged:
            raise StepError(
                f"BiCGSTAB did not converge at step {step}: {rep.iterations} iterations, "
                f"relative residual {rep.final_relative_residual:.3e}",
                report=rep, step=step,
            )
        return x, rep, elapsed

    def step_first(self, state):
        """BDF1 step from ``t = 0`` to ``t = dt``."""
        dt = self.cfg.dt
        S, F, tf = self._system("bdf1", dt)
        rhs = spmv(self.ops.A, state.u_curr)
        u1, rep, ts = self._solve(S, F, rhs, state.u_curr, 1)
        self.records.append(StepRecord(1, dt, rep.iterations, rep.final_relative_residual, tf, ts))
        return SimulationState(state.u_curr, u1, 1, dt)

    def step_bdf2(self, state, rebuild=False):
        """BDF2 step from ``t_n`` to ``t_{n+1}`` (needs ``n >= 1``)."""
        if state.step_index < 1 or state.u_prev is None:
            raise ValueError("BDF2 needs two time levels; call step_first first")
        n1 = state.step_index + 1
        t = n1 * self.cfg.dt
        S, F, tf = self._system("bdf2", t, rebuild)
        rhs = spmv(self.ops.A, 4.0 * state.u_curr - state.u_prev)
        guess = 2.0 * state.u_curr - state.u_prev
        u, rep, ts = self._solve(S, F, rhs, guess, n1)
        self.records.append(StepRecord(n1, t, rep.iterations, rep.final_relative_residual, tf, ts))
        return SimulationState(state.u_curr, u, n1, self.cfg.dt)

    def advance(self, state, rebuild=False):
        if state.step_index == 0:
            return self.step_first(state)
        return self.step_bdf2(state, rebuild)

    def evaluate(self, U, points):
        """Approximant ``sum_j a_j(y) U_j`` at arbitrary points ``y``."""
        return evaluate_at(self.ps, self.cfg, U, points)


def evaluate_at(ps, cfg, U, points):
    """Evaluate the discrete field with coefficients ``U`` at ``points``."""
    pts = np.asarray(getattr(points, "xyz", points), dtype=float).reshape(-1, 3)
    n = len(ps)
    delta, c = cfg.delta(n), cfg.c(n)
    out = np.empty(len(pts))
    for k, y in enumerate(pts):
        nbhd = Neighborhood(-1, ps.cap_indices(y, delta), delta)
        if cfg.method == "GMLS":
            a = gmls_shape_functions(y, nbhd, ps, cfg.m, basis=cfg.basis)
        else:
            a = mkls_shape_functions(y, nbhd, ps, cfg.m, c, cfg.correlation_distance, basis=cfg.basis)
        out[k] = a @ U[nbhd.indices]
    return out


def run_simulation(ps, cfg, testcase, sink=None, snapshot_times=(), final_time=None, eval_set=None, ops=None):
    """Integrate ``testcase`` from 0 to ``final_time`` (default ``testcase.T``).

    ``sink(state, ps)`` is called at every requested snapshot time. When
    the test case has an exact solution at the final time, the report
    carries the l2 error of ``U`` (and of ``A U``) measured at the nodes,
    or at ``eval_set`` through the shape functions if one is given.

    Returns ``(U_final, report)``.
    """
    wall0 = time.perf_counter()
    T = testcase.T if final_time is None else final_time
    n_steps = step_count(T, cfg.dt)
    snap_steps = {step_count(t, cfg.dt, "snapshot_times") for t in snapshot_times}
    if any(s > n_steps for s in snap_steps):
        raise ConfigError("snapshot time beyond the final time", "snapshot_times")

    sim = TransportSimulation(ps, cfg, testcase, ops)
    report = RunReport(testcase.name, cfg.method, len(ps), cfg.dt, T, n_steps, assembly_time=sim.ops.assembly_time)
    state = sim.initial_state()
    report.max_abs_initial = float(np.max(np.abs(state.u_curr)))
    if sink is not None and 0 in snap_steps:
        sink(state, ps)
    try:
        while state.step_index < n_steps:
            state = sim.advance(state)
            if sink is not None and state.step_index in snap_steps:
                sink(state, ps)
    except StepError:
        report.converged = False
        raise
    finally:
        report.steps = sim.records
        report.factorization_time = sum(r.factor_time for r in sim.records)
        report.iteration_time = sum(r.solve_time for r in sim.records)
        its = [r.iterations for r in sim.records]
        report.total_iterations = int(sum(its))
        report.max_iterations = int(max(its)) if its else 0
        report.wall_time = time.perf_counter() - wall0

    U = state.u_curr
    report.max_abs_final = float(np.max(np.abs(U)))
    if report.max_abs_initial > 0:
        report.growth = report.max_abs_final / report.max_abs_initial
    if testcase.exact is not None:
        if eval_set is None:
            exact = np.asarray(testcase.exact(ps.lam, ps.theta, T), dtype=float)
            approx = spmv(sim.ops.A, U)
        else:
            exact = np.asarray(testcase.exact(eval_set.lam, eval_set.theta, T), dtype=float)
            approx = sim.evaluate(U, eval_set)
        if np.all(np.isfinite(exact)):
            report.l2_error = l2_norm(approx - exact)
            scale = l2_norm(exact)
            report.relative_l2_error = report.l2_error / scale if scale > 0 else float("nan")
            if eval_set is None:
                report.l2_error_of_coefficients = l2_norm(U - exact)
    return U, report


def with_dt(cfg, dt):
    return replace(cfg, dt=dt)
