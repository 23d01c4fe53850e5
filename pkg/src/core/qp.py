"""
Dense strictly convex QP: minimise 1/2 x'Hx + f'x subject to Ax <= b.

Dual active-set method in the Goldfarb-Idnani form. The solver starts from
the unconstrained minimiser and adds the most violated row each outer
iteration, keeping the factorisation J'N = [R; 0] (J = L^-T, H = LL') up to
date with Givens rotations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from core.config import Config
from core.errors import DimensionError
from core.schemas import QpStatus

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        f = np.asarray(self.f, dtype=float).reshape(-1)
        n = f.shape[0]
        if H.shape != (n, n):
            raise DimensionError(f"H has shape {H.shape}, expected ({n}, {n})")
        if not np.allclose(H, H.T, atol=1e-10 * max(1.0, np.abs(H).max())):
            raise ValueError("H must be symmetric")
        A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)

    def residuals(self, x: np.ndarray, mu: np.ndarray) -> dict[str, float]:
        """KKT residuals: primal violation, stationarity, complementarity."""
        slack = self.b - self.A @ x
        return {
            "primal": float(max(0.0, -slack.min())) if slack.size else 0.0,
            "stationarity": float(np.linalg.norm(self.H @ x + self.f + self.A.T @ mu)),
            "complementarity": float(np.abs(mu * slack).max()) if slack.size else 0.0,
        }


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    active_set: tuple[int, ...] = ()
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == QpStatus.OPTIMAL


class GoldfarbIdnaniSolver:
    """Stateless between solves; the iteration count travels on QpSolution."""

    def __init__(self, max_iter: int | None = None):
        self.max_iter = max_iter

    def solve(self, problem: QpProblem) -> QpSolution:
        H, f, A, b = problem.H, problem.f, problem.A, problem.b
        n, n_rows = problem.n, problem.n_rows
        cap = self.max_iter if self.max_iter is not None else Config.QP_ITER_FACTOR * (n + n_rows)

        L = cholesky(H + Config.QP_REGULARIZATION_FLOOR * np.eye(n), lower=True)
        J = solve_triangular(L, np.eye(n), lower=True).T
        R = np.zeros((n, n))
        x = -J @ (J.T @ f)

        # Rows as n_i' x >= c_i with n_i = -A_i, c_i = -b_i.
        normals = -A
        bounds = -b
        tol = Config.QP_FEASIBILITY_TOL
        dep_tol = Config.QP_DEPENDENCE_TOL

        active: list[int] = []
        u: list[float] = []
        iterations = 0

        while True:
            if n_rows == 0:
                break
            slack = normals @ x - bounds
            scale = 1.0 + np.abs(bounds)
            p = int(np.argmin(slack / scale))
            if slack[p] >= -tol * scale[p]:
                break

            u_p = 0.0
            while True:
                iterations += 1
                if iterations > cap:
                    logger.warning(f"[QP] iteration cap {cap} reached")
                    return self._finish(problem, x, active, u, QpStatus.MAX_ITER, iterations)

                q = len(active)
                n_p = normals[p]
                d = J.T @ n_p
                z = J[:, q:] @ d[q:]
                r = solve_triangular(R[:q, :q], d[:q]) if q else np.zeros(0)

                # Partial (dual) step length.
                t1, drop = np.inf, -1
                for k in range(q):
                    if r[k] > dep_tol and u[k] / r[k] < t1:
                        t1, drop = u[k] / r[k], k

                # Full (primal) step length.
                zn = float(z @ n_p)
                s_p = float(n_p @ x - bounds[p])
                t2 = -s_p / zn if np.linalg.norm(d[q:]) > dep_tol * (1.0 + np.linalg.norm(n_p)) else np.inf

                t = min(t1, t2)
                if not np.isfinite(t):
                    return self._finish(problem, x, active, u, QpStatus.INFEASIBLE, iterations)

                if np.isfinite(t2):
                    x = x + t * z
                for k in range(q):
                    u[k] -= t * r[k]
                u_p += t

                if t == t2:
                    self._add(J, R, d, q)
                    active.append(p)
                    u.append(u_p)
                    break
                self._drop(J, R, drop, q)
                del active[drop]
                del u[drop]

        return self._finish(problem, x, active, u, QpStatus.OPTIMAL, iterations)

    # ---------------------------------------------------------------------

    @staticmethod
    def _givens(a: float, b: float) -> tuple[float, float, float]:
        h = float(np.hypot(a, b))
        if h == 0.0:
            return 1.0, 0.0, 0.0
        return a / h, b / h, h

    def _add(self, J: np.ndarray, R: np.ndarray, d: np.ndarray, q: int) -> None:
        """Rotate d[q:] onto d[q] and append it as column q of R."""
        for j in range(len(d) - 1, q, -1):
            c, s, h = self._givens(d[j - 1], d[j])
            d[j - 1], d[j] = h, 0.0
            left, right = J[:, j - 1].copy(), J[:, j].copy()
            J[:, j - 1] = c * left + s * right
            J[:, j] = -s * left + c * right
        R[: q + 1, q] = d[: q + 1]

    def _drop(self, J: np.ndarray, R: np.ndarray, k: int, q: int) -> None:
        """Delete column k of R and restore the triangle."""
        R[:, k:q - 1] = R[:, k + 1:q].copy()
        R[:, q - 1] = 0.0
        for j in range(k, q - 1):
            c, s, h = self._givens(R[j, j], R[j + 1, j])
            top, bottom = R[j].copy(), R[j + 1].copy()
            R[j] = c * top + s * bottom
            R[j + 1] = -s * top + c * bottom
            R[j + 1, j] = 0.0
            left, right = J[:, j].copy(), J[:, j + 1].copy()
            J[:, j] = c * left + s * right
            J[:, j + 1] = -s * left + c * right

    def _finish(
        self,
        problem: QpProblem,
        x: np.ndarray,
        active: list[int],
        u: list[float],
        status: QpStatus,
        iterations: int,
    ) -> QpSolution:
        mu = np.zeros(problem.n_rows)
        for idx, val in zip(active, u):
            mu[idx] = max(val, 0.0)
        return QpSolution(
            x=x,
            status=status,
            active_set=tuple(sorted(active)),
            multipliers=mu,
            residuals=problem.residuals(x, mu),
            iterations=iterations,
        )
