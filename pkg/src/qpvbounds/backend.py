"""Conic solve of a MomentProblem: interior-point for small Gram blocks,
first-order splitting for large ones.

The moment problem

    maximize   f . y
    s.t.       E y  = e          (equalities, incl. the <1> = 1 pin)
               L y <= u          (inequalities)
               G(y) >= 0         (Gram matrix, PSD)

is passed to the solver as  min -f.y  over the zero cone, the nonnegative
orthant, and one PSD-triangle cone.  The PSD slack is the scaled triangle
svec(G(y)) with off-diagonal entries multiplied by sqrt(2) (clarabel wants
the upper triangle, scs the lower; same scaling).

Solver choice: clarabel factorizes a KKT system containing a dense block of
size dim*(dim+1)/2, so its per-iteration cost explodes around dim ~ 150
(hours per solve at dim ~ 250 on one core).  scs only eigendecomposes the
dim x dim Gram per iteration, which stays cheap, at the price of ~1e-5
accuracy instead of ~1e-8.  "auto" picks clarabel up to _AUTO_DIM_CUTOFF
and scs beyond; every published tolerance downstream is far looser than
either accuracy.

Certification: both solvers report primal and dual objectives.  For the
maximization the negated dual objective is a weak-duality upper bound up to
the residual infeasibility of the returned iterate; `certified_upper` takes
the larger of primal/dual value and adds a pad that dominates the residual
slop (1e-6 for clarabel tolerances, 1e-4 for scs at eps 1e-5).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import clarabel
import scs

from qpvbounds.npa import MomentProblem

_SQRT2 = math.sqrt(2.0)

_AUTO_DIM_CUTOFF = 64  # largest Gram dim still sent to the interior-point path

_CERTIFICATION_PADS = {"clarabel": 1e-6, "scs": 1e-4}


@dataclass
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 200
    pad: float | None = None  # None: per-solver default from _CERTIFICATION_PADS
    verbose: bool = False
    solver: str = "auto"  # "auto" | "clarabel" | "scs"
    # The moment matrix of these games is structurally singular (measurement
    # completeness holds as an operator identity), so the KKT system is
    # degenerate; clarabel's default 1e-8 static regularization is too weak
    # at levels >= 1+ab and the factorization stalls.  1e-7 is robust across
    # every game configuration exercised here and the returned residuals are
    # still checked against `tol`.
    static_reg: float = 1e-7
    threads: int = 0  # 0 = let the linear algebra backend decide
    scs_eps: float = 1e-5
    scs_max_iters: int = 200_000

    def resolve_solver(self, dim: int) -> str:
        if self.solver != "auto":
            if self.solver not in ("clarabel", "scs"):
                raise ValueError(f"unknown solver {self.solver!r}")
            return self.solver
        return "clarabel" if dim <= _AUTO_DIM_CUTOFF else "scs"


@dataclass
class SolveReport:
    value: float
    dual_value: float
    status: str  # "optimal" | "near_optimal" | "failed:<detail>"
    iterations: int
    solve_time: float
    moments: np.ndarray = field(repr=False)
    solver: str = "clarabel"

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")


def cone_data(problem: MomentProblem):
    """Assemble (A, b, cones, q) in clarabel's Ax + s = b convention."""
    n = problem.nvars
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b: list[float] = []
    r = 0
    for eq in problem.equalities:
        for k, v in eq.coeffs.items():
            rows.append(r)
            cols.append(k)
            vals.append(v)
        b.append(eq.const)
        r += 1
    n_eq = r
    for ineq in problem.inequalities:
        for k, v in ineq.coeffs.items():
            rows.append(r)
            cols.append(k)
            vals.append(v)
        b.append(ineq.const)
        r += 1
    n_ineq = r - n_eq

    # PSD block: s = svec(G(y)), i.e. A entries are -svec coefficients.
    d = problem.dim
    base = r
    for i, j, var in problem.gram:
        rows.append(base + j * (j + 1) // 2 + i)
        cols.append(var)
        vals.append(-1.0 if i == j else -_SQRT2)
    tri = d * (d + 1) // 2
    b.extend([0.0] * tri)
    r = base + tri

    A = sp.csc_matrix(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))), shape=(r, n)
    )
    bvec = np.asarray(b)
    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))
    cones.append(clarabel.PSDTriangleConeT(d))

    q = np.zeros(n)
    for k, v in problem.objective.items():
        q[k] -= v  # clarabel minimizes
    return A, bvec, cones, q


def solve(problem: MomentProblem, settings: SolverSettings | None = None) -> SolveReport:
    settings = settings or SolverSettings()
    if settings.resolve_solver(problem.dim) == "scs":
        return _solve_scs(problem, settings)
    return _solve_clarabel(problem, settings)


def _solve_clarabel(problem: MomentProblem, settings: SolverSettings) -> SolveReport:
    A, b, cones, q = cone_data(problem)
    P = sp.csc_matrix((problem.nvars, problem.nvars))

    cfg = clarabel.DefaultSettings()
    cfg.verbose = settings.verbose
    cfg.max_iter = settings.max_iter
    cfg.tol_gap_abs = settings.tol
    cfg.tol_gap_rel = settings.tol
    cfg.tol_feas = settings.tol
    cfg.static_regularization_constant = settings.static_reg
    if settings.threads:
        cfg.max_threads = settings.threads

    t0 = time.perf_counter()
    solution = clarabel.DefaultSolver(P, q, A, b, cones, cfg).solve()
    elapsed = time.perf_counter() - t0

    status = str(solution.status)
    if status == "Solved":
        label = "optimal"
    elif status == "AlmostSolved":
        label = "near_optimal"
    else:
        label = f"failed:{status}"

    y = np.asarray(solution.x)
    value = float(sum(v * y[k] for k, v in problem.objective.items()))
    dual = float(-solution.obj_val_dual)
    return SolveReport(
        value=value,
        dual_value=dual,
        status=label,
        iterations=solution.iterations,
        solve_time=elapsed,
        moments=y,
        solver="clarabel",
    )


def _scs_row_permutation(n_lin: int, d: int) -> np.ndarray:
    """Row map sending clarabel's upper-triangle svec layout to scs's lower.

    Linear rows keep their position; PSD entry (i, j), i <= j, moves from
    column-major upper position j(j+1)/2 + i to column-major lower position
    i*d - i(i-1)/2 + (j - i).
    """
    perm = np.arange(n_lin + d * (d + 1) // 2)
    for j in range(d):
        for i in range(j + 1):
            up = j * (j + 1) // 2 + i
            lo = i * d - i * (i - 1) // 2 + (j - i)
            perm[n_lin + up] = n_lin + lo
    return perm


def _solve_scs(problem: MomentProblem, settings: SolverSettings) -> SolveReport:
    A, b, _, q = cone_data(problem)
    n_eq = len(problem.equalities)
    n_ineq = len(problem.inequalities)
    perm = _scs_row_permutation(n_eq + n_ineq, problem.dim)
    coo = A.tocoo()
    A2 = sp.csc_matrix((coo.data, (perm[coo.row], coo.col)), shape=A.shape)
    b2 = np.empty_like(b)
    b2[perm] = b
    cone: dict = {"s": [problem.dim]}
    if n_eq:
        cone["z"] = n_eq
    if n_ineq:
        cone["l"] = n_ineq

    t0 = time.perf_counter()
    solution = scs.SCS(
        {"A": A2, "b": b2, "c": q},
        cone,
        eps_abs=settings.scs_eps,
        eps_rel=settings.scs_eps,
        max_iters=settings.scs_max_iters,
        verbose=settings.verbose,
    ).solve()
    elapsed = time.perf_counter() - t0

    info = solution["info"]
    status_val = int(info["status_val"])
    if status_val == 1:
        label = "optimal"
    elif status_val == 2:
        label = "near_optimal"
    else:
        label = f"failed:{info['status']}"

    y = np.asarray(solution["x"])
    value = float(sum(v * y[k] for k, v in problem.objective.items()))
    dual = float(-info["dobj"])
    return SolveReport(
        value=value,
        dual_value=dual,
        status=label,
        iterations=int(info["iter"]),
        solve_time=elapsed,
        moments=y,
        solver="scs",
    )


def certified_upper(report: SolveReport, pad: float | None = None) -> float:
    """Upper bound usable in security statements: solver value plus padding.

    Refuses reports that did not converge; the pad must dominate the
    residual infeasibility of the returned iterate.  The per-solver defaults
    sit an order of magnitude above each solver's feasibility tolerance.
    """
    if not report.ok:
        raise ValueError(f"cannot certify a bound from a solve with status {report.status!r}")
    if pad is None:
        pad = _CERTIFICATION_PADS[report.solver]
    return max(report.value, report.dual_value) + pad
