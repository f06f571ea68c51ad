"""Independent oracles and random generators shared by the test modules.

Nothing here calls into the solver code paths under test except for chain
construction; the oracles use scipy directly.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import lsq_linear
from scipy.spatial.transform import Rotation

from sprayctl.kinematics import FrameSpec, JointLimits, JointSpec, KinematicChain
from sprayctl.ptsc import PrioritizedProblem, PriorityLevel


# --- chains -----------------------------------------------------------------------


def planar_arm(n_links: int = 2, length: float = 1.0) -> KinematicChain:
    """Planar arm with +z axes and links along x; frame "tip" at the last link's end."""
    joints = [JointSpec(axis=[0, 0, 1], origin_xyz=[0, 0, 0] if i == 0 else [length, 0, 0]) for i in range(n_links)]
    return KinematicChain(joints, {"tip": FrameSpec(n_links - 1, [length, 0, 0])})


def random_unit(rng: np.random.Generator, n: int = 3) -> np.ndarray:
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_chain(rng: np.random.Generator, dof: int | None = None) -> KinematicChain:
    """Random revolute chain with a "tip" frame on the last joint and a "mid" frame halfway."""
    dof = int(rng.integers(1, 8)) if dof is None else dof
    joints = []
    for _ in range(dof):
        joints.append(JointSpec(
            axis=random_unit(rng),
            origin_xyz=rng.uniform(-0.4, 0.4, 3),
            origin_quat=Rotation.random(random_state=rng.integers(2**32)).as_quat(),
            limits=JointLimits(pos=(-np.pi, np.pi), vel=(-2.0, 2.0), acc=(-10.0, 10.0)),
        ))
    frames = {
        "tip": FrameSpec(dof - 1, rng.uniform(-0.3, 0.3, 3), Rotation.random(random_state=rng.integers(2**32)).as_quat()),
        "mid": FrameSpec(dof // 2, rng.uniform(-0.3, 0.3, 3), Rotation.random(random_state=rng.integers(2**32)).as_quat()),
    }
    return KinematicChain(joints, frames)


def homogeneous_fk(chain: KinematicChain, q, frame: str) -> np.ndarray:
    """4x4 pose of ``frame`` from an explicit product of homogeneous matrices."""

    def hom(R=np.eye(3), p=np.zeros(3)):
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = p
        return T

    spec = chain.frames[frame]
    T = np.eye(4)
    for i, joint in enumerate(chain.joints):
        T = T @ hom(p=joint.origin_xyz) @ hom(R=Rotation.from_quat(joint.origin_quat).as_matrix())
        T = T @ hom(R=Rotation.from_rotvec(joint.axis * q[i]).as_matrix())
        if i == spec.parent_joint:
            return T @ hom(p=spec.xyz) @ hom(R=Rotation.from_quat(spec.quat).as_matrix())
    raise AssertionError("frame parent beyond chain")


def angular_fd(rot_plus: np.ndarray, rot_minus: np.ndarray, h: float) -> np.ndarray:
    """Base-frame angular velocity from the quaternion log of R+ R-^T over a 2h step."""
    return Rotation.from_matrix(rot_plus @ rot_minus.T).as_rotvec() / (2 * h)


# --- QP oracles -------------------------------------------------------------------


def constructed_qp(rng: np.random.Generator, n: int, m_in: int, m_eq: int = 0):
    """Random strictly convex QP with a known optimum built from KKT conditions.

    Returns (H, f, A_eq, b_eq, A_in, b_in, x_star, active_mask).
    """
    Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
    H = Q @ np.diag(rng.uniform(0.5, 2.0, n)) @ Q.T
    x_star = rng.normal(size=n)
    A_eq = rng.normal(size=(m_eq, n))
    b_eq = A_eq @ x_star
    A_in = rng.normal(size=(m_in, n))
    active = rng.random(m_in) < 0.5
    # keep the active rows plus equalities linearly independent
    while active.sum() + m_eq > n:
        active[np.flatnonzero(active)[0]] = False
    slack = np.where(active, 0.0, rng.uniform(0.1, 1.0, m_in))
    b_in = A_in @ x_star - slack
    lam = np.where(active, rng.uniform(0.1, 2.0, m_in), 0.0)
    nu = rng.normal(size=m_eq)
    # stationarity: H x + f = A_in' lam + A_eq' nu
    f = -H @ x_star + A_in.T @ lam + A_eq.T @ nu
    return H, f, A_eq, b_eq, A_in, b_in, x_star, active


def dual_projected_gradient(H, f, A_eq, b_eq, A_in, b_in, iters: int = 200000, tol: float = 1e-13) -> np.ndarray:
    """Accelerated projected gradient on the dual of a strictly convex QP.

    Multipliers of the inequalities are projected onto the nonnegative
    orthant; equality multipliers are free.
    """
    n = H.shape[0]
    M = np.vstack([A_eq.reshape(-1, n), A_in.reshape(-1, n)])
    d = np.concatenate([b_eq, b_in])
    m_eq = A_eq.shape[0]
    Hinv = np.linalg.inv(H)
    G = M @ Hinv @ M.T
    L = max(np.linalg.eigvalsh(G).max(), 1e-12)
    c = d + M @ Hinv @ f

    def project(lam):
        lam = lam.copy()
        lam[m_eq:] = np.maximum(lam[m_eq:], 0.0)
        return lam

    lam = np.zeros(M.shape[0])
    y = lam.copy()
    t = 1.0
    for _ in range(iters):
        # maximize -1/2 lam' G lam + c' lam
        new = project(y + (c - G @ y) / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = new + ((t - 1) / t_new) * (new - lam)
        if np.max(np.abs(new - lam)) < tol:
            lam = new
            break
        lam, t = new, t_new
    return Hinv @ (M.T @ lam - f)


# --- prioritized problems -----------------------------------------------------------


def random_prioritized(rng: np.random.Generator, n: int | None = None, n_levels: int = 3,
                       with_ineq: bool = False, full_rank_last: bool = True) -> PrioritizedProblem:
    n = int(rng.integers(2, 5)) if n is None else n
    levels = []
    for k in range(n_levels):
        last = k == n_levels - 1
        m = n if (last and full_rank_last) else int(rng.integers(1, n))
        levels.append(PriorityLevel(rng.normal(size=(m, n)), rng.normal(scale=2.0, size=m), name=f"L{k + 1}"))
    u = rng.uniform(0.2, 2.0, n)
    A_in = b_in = None
    if with_ineq:
        m_in = int(rng.integers(1, 3))
        A_in = rng.normal(size=(m_in, n))
        # the origin is strictly feasible, so the shared set is never empty
        b_in = -rng.uniform(0.05, 0.5, m_in)
    return PrioritizedProblem(levels, A_in=A_in, b_in=b_in, lb=-u, ub=u)


def weighted_oracle(problem: PrioritizedProblem, weights=(1e12, 1e6, 1.0)) -> np.ndarray:
    """Descending-weights least squares over the box (no general inequalities).

    Every assignment of the variables to {free, at lower, at upper} is tried;
    the free part is an unconstrained weighted least-squares solve (SVD), and
    the feasible candidate with the lowest weighted cost wins. Exact for
    convex problems and immune to the ill-conditioning the 1e12 weight causes
    in iterative bounded solvers. Only meant for n <= 5.
    """
    rows, rhs = [], []
    for level, w in zip(problem.levels, weights):
        J, b = level.stacked()
        rows.append(np.sqrt(w) * J)
        rhs.append(np.sqrt(w) * b)
    A, y = np.vstack(rows), np.concatenate(rhs)
    lb, ub = problem.lb, problem.ub
    n = A.shape[1]
    best, best_cost = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        x = np.where(pattern == 1, lb, np.where(pattern == 2, ub, 0.0))
        free = pattern == 0
        if free.any():
            x[free] = np.linalg.lstsq(A[:, free], y - A[:, ~free] @ x[~free], rcond=None)[0]
        if np.any(x < lb - 1e-12) or np.any(x > ub + 1e-12):
            continue
        cost = float(np.sum((y - A @ x) ** 2))
        if cost < best_cost:
            best, best_cost = x, cost
    return best


STRONG_WEIGHTS = (1e20, 1e10, 1.0)


def oracle_resolved(problem: PrioritizedProblem, x_oracle: np.ndarray, tol: float = 1e-5) -> bool:
    """Whether the (1e12, 1e6, 1) oracle is within ``tol`` of its own strong-weight limit.

    The penalty bias shrinks linearly with the weight ratio; on badly
    conditioned draws it exceeds the comparison tolerance regardless of the
    solver under test. Uses only the oracle, never the solver.
    """
    return bool(np.max(np.abs(x_oracle - weighted_oracle(problem, STRONG_WEIGHTS))) <= tol)


def level_cost(level: PriorityLevel, x: np.ndarray) -> float:
    J, b = level.stacked()
    r = b - J @ x
    return float(r @ r)


def single_level_oracle(level: PriorityLevel, lb: np.ndarray, ub: np.ndarray) -> float:
    """Optimal value of one bounded least-squares level."""
    J, b = level.stacked()
    x = lsq_linear(J, b, bounds=(lb, ub), method="bvls", tol=1e-15).x
    return float(np.sum((b - J @ x) ** 2))
