"""Dense two-phase simplex for LPs with few variables and many constraints.

Problems have the form::

    minimize    c @ x
    subject to  A[k] @ x >= b[k]   (inequality rows)
                A[k] @ x == b[k]   (equality rows)
                lower <= x <= upper (optional, per variable)

with ``x`` otherwise free.  Least-core programs have up to ``2**16`` rows but
at most ~25 columns, so instead of a tableau with one row per constraint we
run the simplex method on the dual::

    maximize b @ y  subject to  A.T @ y == c,  y[ineq] >= 0,  y[eq] free

whose tableau has only ``d + 1`` rows.  The primal point is recovered from the
final basis as the negated simplex multipliers and then re-checked against
every input row.

Pivoting follows Bland's rule throughout, so the pivot sequence (and therefore
the returned vertex) is a deterministic function of the input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GE",
    "EQ",
    "LpError",
    "LpInfeasible",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "MAX_CONSTRAINTS",
    "NumericalBreakdown",
    "solve",
]

GE = ">="
EQ = "=="

MAX_CONSTRAINTS = 2**16 + 8
FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
BREAKDOWN_TOL = 1e-12
OPT_TOL = 1e-10


class LpError(RuntimeError):
    pass


class NumericalBreakdown(LpError):
    """A pivot element vanished or the recovered point failed certification."""


class LpInfeasible(LpError):
    pass


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpProblem:
    """A minimization problem over free variables with ``>=``/``==`` rows."""

    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray
    equality: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.equality = np.asarray(self.equality, dtype=bool).ravel()
        d = self.objective.size
        m = self.A.shape[0]
        if m == 0:
            raise ValueError("an LP needs at least one constraint")
        if self.A.shape[1] != d:
            raise ValueError(f"constraint rows have {self.A.shape[1]} coefficients, objective has {d}")
        if self.b.size != m or self.equality.size != m:
            raise ValueError("b and equality must have one entry per constraint row")
        if m > MAX_CONSTRAINTS:
            raise ValueError(f"{m} constraints exceeds the dense solver limit of {MAX_CONSTRAINTS}")
        for name in ("lower", "upper"):
            bound = getattr(self, name)
            if bound is not None:
                bound = np.asarray(bound, dtype=float).ravel()
                if bound.size != d:
                    raise ValueError(f"{name} bounds must have length {d}")
                setattr(self, name, bound)
        if not (np.all(np.isfinite(self.objective)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP coefficients must be finite")

    @classmethod
    def from_rows(
        cls,
        objective: Sequence[float],
        rows: Iterable[tuple[Sequence[float], str, float]],
        lower: Sequence[float | None] | None = None,
        upper: Sequence[float | None] | None = None,
    ) -> "LpProblem":
        """Build a problem from ``(coefficients, relation, rhs)`` triples.

        ``None`` entries in ``lower``/``upper`` mean "unbounded on that side".
        """
        coeffs, rel, rhs = [], [], []
        for a, r, v in rows:
            if r not in (GE, EQ):
                raise ValueError(f"unsupported relation {r!r}; use '>=' or '=='")
            coeffs.append(a)
            rel.append(r == EQ)
            rhs.append(v)
        lo = None if lower is None else np.array([-np.inf if v is None else v for v in lower], float)
        hi = None if upper is None else np.array([np.inf if v is None else v for v in upper], float)
        return cls(objective, np.asarray(coeffs, float), np.asarray(rhs, float), np.asarray(rel), lo, hi)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_constraints(self) -> int:
        return self.A.shape[0]

    def _with_bounds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constraint rows with finite variable bounds appended as ``>=`` rows."""
        A, b, eq = [self.A], [self.b], [self.equality]
        d = self.num_vars
        eye = np.eye(d)
        if self.lower is not None:
            idx = np.flatnonzero(np.isfinite(self.lower))
            A.append(eye[idx])
            b.append(self.lower[idx])
            eq.append(np.zeros(idx.size, bool))
        if self.upper is not None:
            idx = np.flatnonzero(np.isfinite(self.upper))
            A.append(-eye[idx])
            b.append(-self.upper[idx])
            eq.append(np.zeros(idx.size, bool))
        return np.vstack(A), np.concatenate(b), np.concatenate(eq)


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective_value: float = float("nan")
    tight_constraints: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    duals: np.ndarray | None = None
    slacks: np.ndarray | None = None
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Minimization tableau ``M y = r, y >= 0`` with an objective row appended."""

    def __init__(self, M: np.ndarray, r: np.ndarray):
        d, k = M.shape
        self.k = k  # structural columns; artificials follow
        T = np.zeros((d + 1, k + d + 1))
        T[:d, :k] = M
        T[:d, k : k + d] = np.eye(d)
        T[:d, -1] = r
        self.T = T
        self.basis = list(range(k, k + d))
        self.pivots = 0

    @property
    def rows(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        p = T[r, c]
        if abs(p) < BREAKDOWN_TOL:
            raise NumericalBreakdown(f"pivot magnitude {abs(p):.3e} below {BREAKDOWN_TOL}")
        T[r] /= p
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, c] = 0.0
        T[r, c] = 1.0
        self.basis[r] = c
        self.pivots += 1

    def set_costs(self, costs: np.ndarray) -> None:
        """Install a cost vector (one per column) as reduced costs of the current basis."""
        T = self.T
        d = self.rows
        cb = costs[self.basis]
        T[d, :-1] = costs - cb @ T[:d, :-1]
        T[d, -1] = -cb @ T[:d, -1]

    def run(self, allowed: int) -> str:
        """Bland's-rule iterations over columns ``< allowed``.

        Returns ``"optimal"`` or ``"unbounded"``.
        """
        T = self.T
        d = self.rows
        while True:
            red = T[d, :allowed]
            scale = 1.0 + np.abs(T[d, -1])
            neg = np.flatnonzero(red < -OPT_TOL * scale)
            if neg.size == 0:
                return "optimal"
            c = int(neg[0])
            col = T[:d, c]
            cand = np.flatnonzero(col > PIVOT_TOL)
            if cand.size == 0:
                return "unbounded"
            ratios = T[cand, -1] / col[cand]
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12 * (1.0 + abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, c)


def _dual_simplex_core(A: np.ndarray, b: np.ndarray, eq: np.ndarray, c: np.ndarray):
    """Run phase 1/2 on the dual of ``min c x, A x (>=|==) b``.

    Returns ``(status, pi, y_columns, column_rows, column_signs, pivots)`` where
    ``status`` describes the *dual* problem: "optimal", "infeasible" or
    "unbounded".
    """
    d = c.size
    # Dual columns: one per >= row (y >= 0), two per == row (y+ - y-).
    ge_rows = np.flatnonzero(~eq)
    eq_rows = np.flatnonzero(eq)
    col_rows = np.concatenate([ge_rows, eq_rows, eq_rows])
    col_sign = np.concatenate([np.ones(ge_rows.size), np.ones(eq_rows.size), -np.ones(eq_rows.size)])
    order = np.lexsort((col_sign < 0, col_rows))  # constraint order, + before -
    col_rows, col_sign = col_rows[order], col_sign[order]
    M = (A[col_rows] * col_sign[:, None]).T  # d x k
    f = -b[col_rows] * col_sign  # minimize -b y
    k = M.shape[1]

    flip = np.where(c < 0, -1.0, 1.0)
    tab = _Tableau(M * flip[:, None], c * flip)

    # Phase 1: minimize the sum of artificials.
    costs = np.zeros(k + d)
    costs[k:] = 1.0
    tab.set_costs(costs)
    tab.run(allowed=k)
    infeas = -tab.T[-1, -1]
    if infeas > FEAS_TOL * (1.0 + np.abs(c).sum()):
        return "infeasible", None, None, col_rows, col_sign, tab.pivots

    # Drive remaining artificials out of the basis; drop rows that are redundant.
    keep = np.ones(d, bool)
    for r in range(d):
        if tab.basis[r] < k:
            continue
        row = tab.T[r, :k]
        nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
        if nz.size:
            tab.pivot(r, int(nz[0]))
        else:
            keep[r] = False
    if not keep.all():
        idx = np.flatnonzero(keep)
        T = tab.T
        tab.T = np.vstack([T[idx], T[-1:]])
        tab.basis = [tab.basis[i] for i in idx]

    costs = np.zeros(k + d)
    costs[:k] = f
    tab.set_costs(costs)
    state = tab.run(allowed=k)
    if state == "unbounded":
        return "unbounded", None, None, col_rows, col_sign, tab.pivots

    basis = np.asarray(tab.basis)
    y = np.zeros(k)
    y[basis] = tab.T[:-1, -1]
    y[y < 0] = 0.0  # roundoff on degenerate rows
    kept = np.flatnonzero(keep)
    B = M[np.ix_(kept, basis)]
    pi = np.zeros(d)
    try:
        pi[kept] = np.linalg.solve(B.T, f[basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown("final dual basis is singular") from exc
    return "optimal", pi, y, col_rows, col_sign, tab.pivots


def solve(problem: LpProblem) -> LpSolution:
    """Solve ``problem`` to optimality, or report infeasibility/unboundedness.

    The returned point is certified against every input row (and bound) at
    absolute tolerance ``1e-7``; a point that fails certification raises
    :class:`NumericalBreakdown` rather than being returned.
    """
    A, b, eq = problem._with_bounds()
    c = problem.objective
    m = problem.num_constraints
    status, pi, y, col_rows, col_sign, pivots = _dual_simplex_core(A, b, eq, c)

    if status == "infeasible":
        # Dual infeasible: primal is unbounded if feasible at all. Decide by
        # solving the zero-objective problem, whose dual is always feasible.
        st0, *_ = _dual_simplex_core(A, b, eq, np.zeros_like(c))
        return LpSolution(LpStatus.INFEASIBLE if st0 == "unbounded" else LpStatus.UNBOUNDED, pivots=pivots)
    if status == "unbounded":
        return LpSolution(LpStatus.INFEASIBLE, pivots=pivots)

    x = -pi
    slack = A @ x - b
    bad_ge = (~eq) & (slack < -FEAS_TOL)
    bad_eq = eq & (np.abs(slack) > FEAS_TOL)
    if bad_ge.any() or bad_eq.any():
        worst = float(np.max(np.where(eq, np.abs(slack), -slack)))
        raise NumericalBreakdown(f"recovered point violates a constraint by {worst:.3e}")

    duals_all = np.zeros(A.shape[0])
    np.add.at(duals_all, col_rows, y * col_sign)
    tight = np.flatnonzero(np.abs(slack[:m]) < FEAS_TOL)
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=x,
        objective_value=float(c @ x),
        tight_constraints=tight,
        duals=duals_all[:m],
        slacks=slack[:m],
        pivots=pivots,
    )
