"""Solver contract for ``min c'x s.t. Ax = b, x in K`` and an interior-point backend.

The backend is Clarabel.  Our problem is mapped to its form
``A_c x + s = b_c, s in K_c`` by stacking the equalities (zero cone) on top
of ``-x_block + s = 0`` rows for each nonnegative or PSD block.  Both use
the same scaled lower-triangular PSD vectorization, so no reordering is
needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sosprog import ConicProblem, smat

__all__ = ["SolverSettings", "ConicSolution", "SolverError", "solve", "verify_solution", "ResidualReport"]

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL_ERROR = "numerical_error"

STATUSES = (OPTIMAL, NEAR_OPTIMAL, PRIMAL_INFEASIBLE, DUAL_INFEASIBLE, ITERATION_LIMIT, NUMERICAL_ERROR)


class SolverError(RuntimeError):
    """Raised by callers that need an optimal (or near-optimal) solution."""

    def __init__(self, status: str, message: str = ""):
        super().__init__(message or f"solver finished with status {status!r}")
        self.status = status


@dataclass
class SolverSettings:
    max_iterations: int = 200
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    verbosity: int = 0

    def __post_init__(self):
        for name in ("feas_tol", "gap_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    y: np.ndarray
    objective_value: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    solve_time: float = 0.0

    @property
    def usable(self) -> bool:
        return self.status in (OPTIMAL, NEAR_OPTIMAL)


_STATUS_MAP = {
    "Solved": OPTIMAL,
    "AlmostSolved": NEAR_OPTIMAL,
    "PrimalInfeasible": PRIMAL_INFEASIBLE,
    "AlmostPrimalInfeasible": PRIMAL_INFEASIBLE,
    "DualInfeasible": DUAL_INFEASIBLE,
    "AlmostDualInfeasible": DUAL_INFEASIBLE,
    "MaxIterations": ITERATION_LIMIT,
    "MaxTime": ITERATION_LIMIT,
}


def _clarabel_data(problem: ConicProblem):
    import clarabel

    n, m = problem.n, problem.m
    blocks_A = [problem.A.tocsc() if m else sp.csc_matrix((0, n))]
    cones = []
    if m:
        cones.append(clarabel.ZeroConeT(m))
    for kind, dim, sl in problem.blocks():
        if kind == "free":
            continue
        size = sl.stop - sl.start
        sel = sp.csc_matrix((-np.ones(size), (np.arange(size), np.arange(sl.start, sl.stop))), shape=(size, n))
        blocks_A.append(sel)
        cones.append(clarabel.NonnegativeConeT(size) if kind == "nonneg" else clarabel.PSDTriangleConeT(dim))
    A = sp.vstack(blocks_A, format="csc")
    b = np.concatenate([problem.b, np.zeros(A.shape[0] - m)])
    return A, b, cones


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve with Clarabel; failures come back as a status, never an exception."""
    import clarabel

    settings = settings or SolverSettings()
    n, m = problem.n, problem.m
    if n == 0:
        if m and np.any(problem.b != 0):
            return ConicSolution(PRIMAL_INFEASIBLE, np.zeros(0), np.zeros(m), float("nan"))
        return ConicSolution(OPTIMAL, np.zeros(0), np.zeros(m), 0.0, {"primal": 0.0, "dual": 0.0, "gap": 0.0})

    A, b, cones = _clarabel_data(problem)
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbosity > 0
    opts.max_iter = settings.max_iterations
    opts.tol_feas = settings.feas_tol
    opts.tol_gap_abs = settings.gap_tol
    opts.tol_gap_rel = settings.gap_tol
    opts.presolve_enable = False
    P = sp.csc_matrix((n, n))
    try:
        solver = clarabel.DefaultSolver(P, np.asarray(problem.c, dtype=float), A, b, cones, opts)
        sol = solver.solve()
    except Exception as exc:  # backend failures must not escape
        log.warning("conic backend raised %r", exc)
        return ConicSolution(NUMERICAL_ERROR, np.full(n, np.nan), np.full(m, np.nan), float("nan"))
    status = _STATUS_MAP.get(str(sol.status).split(".")[-1], NUMERICAL_ERROR)
    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    # dual of the equalities in the convention  c - A'y in K*
    y = -z[:m]
    obj = float(problem.c @ x)
    res = {"primal": float(sol.r_prim), "dual": float(sol.r_dual),
           "gap": abs(float(sol.obj_val) - float(sol.obj_val_dual)) / max(1.0, abs(float(sol.obj_val)))}
    return ConicSolution(status, x, y, obj, res, int(sol.iterations), float(sol.solve_time))


@dataclass
class ResidualReport:
    equality: float
    cone: float  # most negative eigenvalue / entry over constrained blocks (0 if none)
    gap: float
    min_eigenvalues: list

    def within(self, feas_tol: float, gap_tol: float, factor: float = 10.0) -> bool:
        return self.equality <= factor * feas_tol and -self.cone <= factor * feas_tol and self.gap <= factor * gap_tol


def verify_solution(problem: ConicProblem, solution: ConicSolution) -> ResidualReport:
    """Recompute residuals from the raw data, independently of the backend.

    ``equality`` is ``|Ax - b| / (1 + |b|)``; ``cone`` is the smallest
    entry of nonnegative blocks and smallest eigenvalue of PSD blocks
    (clipped at 0 from above); ``gap`` is ``|c'x - b'y| / (1 + |c'x| + |b'y|)``.
    """
    x = np.asarray(solution.x, dtype=float)
    y = np.asarray(solution.y, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"primal vector has shape {x.shape}, expected ({problem.n},)")
    if y.shape != (problem.m,):
        raise ValueError(f"dual vector has shape {y.shape}, expected ({problem.m},)")
    if problem.m:
        eq = float(np.linalg.norm(problem.A @ x - problem.b) / (1 + np.linalg.norm(problem.b)))
    else:
        eq = 0.0
    cone = 0.0
    eigs = []
    for kind, dim, sl in problem.blocks():
        if kind == "nonneg" and dim:
            cone = min(cone, float(x[sl].min()))
        elif kind == "psd":
            lam = float(np.linalg.eigvalsh(smat(x[sl]))[0])
            eigs.append(lam)
            cone = min(cone, lam)
    pobj = float(problem.c @ x)
    dobj = float(problem.b @ y) if problem.m else 0.0
    gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
    return ResidualReport(eq, cone, gap, eigs)
