"""Dense convex QP kernel.

    minimize    1/2 x'Hx + f'x
    subject to  A_eq x  = b_eq
                A_in x >= b_in
                lb <= x <= ub

Equalities are eliminated through an orthonormal nullspace basis (which also
absorbs redundant rows, as produced by the priority cascade); the reduced
inequality-constrained problem is handed to the Goldfarb-Idnani dual
active-set method from ``quadprog``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import quadprog

from .errors import DimensionError

FEAS_TOL = 1e-8
KKT_TOL = 1e-6
RANK_TOL = 1e-10
DEFAULT_MAX_ITER = 4000
DEFAULT_EPS = 1e-9


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    MAX_ITERATIONS = "MaxIterations"


def _as_matrix(a: Any, n: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, n))
    if a.shape[1] != n:
        raise DimensionError(f"{name} has {a.shape[1]} columns, expected {n}")
    return a


def _as_vector(v: Any, m: int, name: str, fill: float = 0.0) -> np.ndarray:
    if v is None:
        return np.full(m, fill)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (m,):
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {m}")
    return v


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise DimensionError(f"H must be square, got {H.shape}")
        if not np.allclose(H, H.T, rtol=0.0, atol=1e-10):
            raise ValueError("H must be symmetric")
        self.H = H
        self.f = _as_vector(self.f, n, "f")
        self.A_eq = _as_matrix(self.A_eq, n, "A_eq")
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0], "b_eq")
        self.A_in = _as_matrix(self.A_in, n, "A_in")
        self.b_in = _as_vector(self.b_in, self.A_in.shape[0], "b_in")
        self.lb = _as_vector(self.lb, n, "lb", -np.inf)
        self.ub = _as_vector(self.ub, n, "ub", np.inf)
        if np.any(self.lb > self.ub):
            raise ValueError("box bounds must satisfy lb <= ub")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        parts = [0.0]
        if self.A_eq.shape[0]:
            parts.append(np.max(np.abs(self.A_eq @ x - self.b_eq)))
        if self.A_in.shape[0]:
            parts.append(np.max(self.b_in - self.A_in @ x))
        parts.append(np.max(self.lb - x))
        parts.append(np.max(x - self.ub))
        return float(max(parts))

    def to_json(self) -> dict:
        def enc(a: np.ndarray) -> Any:
            # JSON has no infinity literal
            return [None if not np.isfinite(v) else float(v) for v in a.ravel()] if a.ndim == 1 else a.tolist()

        return {
            "H": self.H.tolist(),
            "f": self.f.tolist(),
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "A_in": self.A_in.tolist(),
            "b_in": self.b_in.tolist(),
            "lb": enc(self.lb),
            "ub": enc(self.ub),
        }


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    objective: float
    iterations: int
    kkt_residual: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def _nullspace_split(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Particular solution, orthonormal nullspace basis, and consistency residual."""
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.zeros(n), np.eye(n), 0.0
    U, s, Vt = np.linalg.svd(A)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > RANK_TOL * max(smax, 1.0)))
    x0 = Vt[:rank].T @ ((U[:, :rank].T @ b) / s[:rank])
    Z = Vt[rank:].T
    resid = float(np.max(np.abs(A @ x0 - b)))
    return x0, Z, resid


def _inequality_rows(problem: QpProblem) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(problem.n)
    lo = np.isfinite(problem.lb)
    hi = np.isfinite(problem.ub)
    C = np.vstack([problem.A_in, eye[lo], -eye[hi]])
    d = np.concatenate([problem.b_in, problem.lb[lo], -problem.ub[hi]])
    return C, d


def _polish(Hr: np.ndarray, fr: np.ndarray, Cr: np.ndarray, dr: np.ndarray, y: np.ndarray,
            lagr: np.ndarray) -> np.ndarray:
    """Re-solve the KKT system on the reported active set.

    With a nearly singular Hessian the dual iterates can leave the active rows
    off by more than the feasibility tolerance; an exact solve on the active
    set restores them. The polished point is kept only if it is no worse.
    """
    active = np.flatnonzero(lagr > 0)
    if active.size == 0:
        return y
    A = Cr[active]
    k, m = Hr.shape[0], active.size
    K = np.zeros((k + m, k + m))
    K[:k, :k] = Hr
    K[:k, k:] = -A.T
    K[k:, :k] = A
    rhs = np.concatenate([-fr, dr[active]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return y
    y_new = sol[:k]
    if not np.all(np.isfinite(y_new)):
        return y
    viol_old = float(np.max(dr - Cr @ y, initial=0.0))
    viol_new = float(np.max(dr - Cr @ y_new, initial=0.0))
    return y_new if viol_new <= viol_old else y


def solve_qp(problem: QpProblem, max_iter: int = DEFAULT_MAX_ITER, eps: float = DEFAULT_EPS) -> QpSolution:
    """Solve ``problem``; returns a :class:`QpSolution` and never raises on infeasibility.

    A singular reduced Hessian gets ``eps * scale * I`` added, where ``scale``
    is its mean diagonal.
    """
    x0, Z, eq_resid = _nullspace_split(problem.A_eq, problem.b_eq)
    scale_b = 1.0 + (float(np.max(np.abs(problem.b_eq))) if problem.b_eq.size else 0.0)
    if eq_resid > FEAS_TOL * scale_b:
        return QpSolution(x0, QpStatus.PRIMAL_INFEASIBLE, problem.objective(x0), 0)

    C, d = _inequality_rows(problem)
    k = Z.shape[1]
    if k == 0:
        # fully determined by the equalities
        viol = float(np.max(d - C @ x0)) if d.size else 0.0
        status = QpStatus.OPTIMAL if viol <= FEAS_TOL else QpStatus.PRIMAL_INFEASIBLE
        return QpSolution(x0, status, problem.objective(x0), 0, 0.0)

    Hr = Z.T @ problem.H @ Z
    Hr = 0.5 * (Hr + Hr.T)
    fr = Z.T @ (problem.H @ x0 + problem.f)
    Cr = C @ Z
    dr = d - C @ x0

    # drop rows that vanish on the reduced space; they are either satisfied or infeasible
    row_norm = np.linalg.norm(Cr, axis=1) if Cr.size else np.zeros(0)
    zero_rows = row_norm <= RANK_TOL * (1.0 + np.linalg.norm(C, axis=1))
    if np.any(dr[zero_rows] > FEAS_TOL):
        return QpSolution(x0, QpStatus.PRIMAL_INFEASIBLE, problem.objective(x0), 0)
    Cr, dr = Cr[~zero_rows], dr[~zero_rows]

    try:
        np.linalg.cholesky(Hr)
    except np.linalg.LinAlgError:
        scale = float(np.mean(np.diag(Hr)))
        Hr = Hr + eps * (scale if scale > 0 else 1.0) * np.eye(k)

    if Cr.shape[0] == 0:
        y = np.linalg.solve(Hr, -fr)
        x = x0 + Z @ y
        kkt = float(np.max(np.abs(Hr @ y + fr)))
        return QpSolution(x, QpStatus.OPTIMAL, problem.objective(x), 0, kkt)

    try:
        y, _, _, iters, lagr, _ = quadprog.solve_qp(Hr, -fr, Cr.T.copy(), dr, 0)
    except ValueError as exc:
        msg = str(exc)
        if "positive definite" in msg:
            Hr = Hr + eps * max(1.0, float(np.max(np.abs(np.diag(Hr))))) * np.eye(k)
            try:
                y, _, _, iters, lagr, _ = quadprog.solve_qp(Hr, -fr, Cr.T.copy(), dr, 0)
            except ValueError:
                return QpSolution(x0, QpStatus.PRIMAL_INFEASIBLE, problem.objective(x0), 0)
        else:
            return QpSolution(x0, QpStatus.PRIMAL_INFEASIBLE, problem.objective(x0), 0)

    y = _polish(Hr, fr, Cr, dr, y, lagr)
    x = x0 + Z @ y
    iterations = int(iters[0])
    grad = Hr @ y + fr - (Cr.T @ lagr if Cr.size else 0.0)
    kkt = float(np.max(np.abs(grad))) if grad.size else 0.0
    if iterations > max_iter:
        return QpSolution(x, QpStatus.MAX_ITERATIONS, problem.objective(x), iterations, kkt)
    return QpSolution(x, QpStatus.OPTIMAL, problem.objective(x), iterations, kkt)


class QpDumper:
    """Writes every QP it sees to ``directory`` as numbered JSON files."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.count = 0

    def __call__(self, problem: QpProblem, solution: QpSolution, tag: str = "") -> None:
        record = problem.to_json()
        record.update(
            tag=tag,
            status=solution.status.value,
            x=solution.x.tolist(),
            objective=solution.objective,
            iterations=solution.iterations,
        )
        path = self.directory / f"qp_{self.count:06d}.json"
        path.write_text(json.dumps(record))
        self.count += 1
