"""Core-family solution concepts: core membership, least core, nucleolus."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import lp as lpmod
from .coalition import Coalition, grand
from .game import Game, incidence, require_players

CORE_PLAYER_CAP = 20
LEAST_CORE_PLAYER_CAP = 16
NUCLEOLUS_PLAYER_CAP = 10
TIGHT_TOL = 1e-7


class DegenerateTightSet(RuntimeError):
    """The nucleolus could not identify which coalitions to fix at a stage."""


def coalition_sums(x: np.ndarray) -> np.ndarray:
    """``x(S)`` for every mask ``S`` in ``range(2**n)``."""
    x = np.asarray(x, dtype=float)
    sums = np.zeros(1 << x.size)
    for i, xi in enumerate(x):
        lo = 1 << i
        sums[lo : 2 * lo] = sums[:lo] + xi
    return sums


@dataclass
class CoreCheck:
    member: bool
    worst: Coalition | None
    worst_deficit: float
    efficient: bool

    def __bool__(self) -> bool:
        return self.member


def core_membership(
    game: Game, x: np.ndarray, epsilon: float = 0.0, tol: float = 1e-9, cap: int = CORE_PLAYER_CAP
) -> CoreCheck:
    """Is ``x`` in the epsilon-core of ``game``?

    Also reports the coalition with the largest deficit ``v(S) - x(S)`` over
    nonempty proper coalitions (``None`` when ``n == 1``).
    """
    n = game.n
    require_players(n, cap, "core membership")
    x = np.asarray(x, dtype=float)
    if x.size != n:
        raise ValueError(f"payoff has length {x.size}, game has {n} players")
    v = game.table()
    sums = coalition_sums(x)
    vN = v[grand(n)]
    efficient = bool(abs(sums[-1] - vN) <= tol * (1.0 + abs(vN)))
    deficits = v - sums
    if n == 1:
        return CoreCheck(efficient, None, 0.0, efficient)
    proper = deficits[1:-1]
    k = int(np.argmax(proper))
    worst = float(proper[k])
    member = efficient and bool(worst <= epsilon + tol)
    return CoreCheck(member, Coalition(k + 1, n), worst, efficient)


@dataclass
class LeastCoreSolution:
    payoff: np.ndarray
    epsilon_star: float
    coalitions: np.ndarray  # constrained masks
    deficits: np.ndarray  # v(S) - x(S), aligned with ``coalitions``
    lp: lpmod.LpSolution | None = None
    violation_fraction: float | None = None  # Monte Carlo audit, when computed

    @property
    def core_nonempty(self) -> bool:
        return self.epsilon_star <= TIGHT_TOL

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.payoff >= -TIGHT_TOL))

    def deficit_map(self, n: int) -> dict[Coalition, float]:
        return {Coalition(int(m), n): float(d) for m, d in zip(self.coalitions, self.deficits)}


def _least_core_lp(n: int, masks: np.ndarray, values: np.ndarray, vN: float) -> lpmod.LpProblem:
    """``min eps  s.t.  x(N) = v(N),  x(S) + eps >= v(S)`` for each listed ``S``."""
    rows = np.zeros((masks.size + 1, n + 1))
    rows[0, :n] = 1.0
    rows[1:, :n] = incidence(masks, n)
    rows[1:, n] = 1.0
    b = np.concatenate([[vN], values])
    eq = np.zeros(masks.size + 1, bool)
    eq[0] = True
    objective = np.zeros(n + 1)
    objective[n] = 1.0
    return lpmod.LpProblem(objective, rows, b, eq)


def _solve_least_core(n: int, masks: np.ndarray, values: np.ndarray, vN: float) -> LeastCoreSolution:
    if n == 1:
        return LeastCoreSolution(np.array([vN]), 0.0, masks, np.zeros(0))
    sol = lpmod.solve(_least_core_lp(n, masks, values, vN))
    if not sol.optimal:
        raise lpmod.LpInfeasible(f"least-core LP returned {sol.status.value}")
    payoff = sol.x[:n]
    eps = float(sol.x[n])
    deficits = values - coalition_sums(payoff)[masks]
    return LeastCoreSolution(payoff, eps, masks, deficits, lp=sol)


def least_core(game: Game, cap: int = LEAST_CORE_PLAYER_CAP) -> LeastCoreSolution:
    """Least core over all nonempty proper coalitions.

    The returned payoff is the vertex the deterministic simplex reaches first.
    """
    n = game.n
    require_players(n, cap, "least core")
    v = game.table()
    masks = np.arange(1, (1 << n) - 1, dtype=np.int64)
    return _solve_least_core(n, masks, v[masks], v[-1])


@dataclass
class McLeastCoreParams:
    e: float
    delta: float
    Delta: float
    tau: float
    sample_count: int | None = None

    def __post_init__(self):
        if not self.e > 0:
            raise ValueError("e must be positive")
        if not 0 < self.delta < 1 or not 0 < self.Delta < 1:
            raise ValueError("delta and Delta must lie in (0, 1)")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.sample_count is not None and self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    def required_samples(self, n: int) -> int:
        """``ceil(tau^2 (ln n + ln 1/Delta) / (e^2 delta^2))``, at least 1."""
        k = self.tau**2 * (math.log(n) + math.log(1.0 / self.Delta)) / (self.e**2 * self.delta**2)
        return max(1, math.ceil(k))

    def samples(self, n: int) -> int:
        return self.sample_count if self.sample_count is not None else self.required_samples(n)


def least_core_monte_carlo(
    game: Game,
    params: McLeastCoreParams,
    seed: int | np.random.Generator | None = 0,
    audit: bool = True,
    cap: int = 24,
) -> LeastCoreSolution:
    """Least core LP restricted to uniformly sampled nonempty proper coalitions.

    Duplicate draws add no constraints and are removed before solving. When
    ``audit`` is set and ``n <= 16`` the result carries the fraction of *all*
    nonempty proper coalitions with ``x(S) + eps* + e < v(S)``.
    """
    n = game.n
    require_players(n, cap, "Monte Carlo least core")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n == 1:
        vN = game(1)
        return LeastCoreSolution(np.array([vN]), 0.0, np.zeros(0, np.int64), np.zeros(0), violation_fraction=0.0)
    draws = rng.integers(1, (1 << n) - 1, size=params.samples(n), dtype=np.int64)
    masks = np.unique(draws)
    values = game.utility.evaluate_many(masks)
    sol = _solve_least_core(n, masks, values, game(grand(n)))
    if audit and n <= LEAST_CORE_PLAYER_CAP:
        v = game.table()
        sums = coalition_sums(sol.payoff)
        excess = v[1:-1] - sums[1:-1] - sol.epsilon_star - params.e
        sol.violation_fraction = float(np.mean(excess > 1e-12))
    return sol


def nucleolus(game: Game, cap: int = NUCLEOLUS_PLAYER_CAP) -> np.ndarray:
    """Nucleolus by the sequential LP procedure.

    Each stage minimizes the largest free excess. Coalitions whose constraint
    carries a positive dual multiplier are tight in every optimal solution and
    get fixed at that stage's level; coalitions whose incidence vector falls in
    the span of fixed ones drop out. Stops once the fixed rows pin down ``x``.
    """
    n = game.n
    require_players(n, cap, "nucleolus")
    v = game.table()
    vN = v[-1]
    if n == 1:
        return np.array([vN])
    masks = np.arange(1, (1 << n) - 1, dtype=np.int64)
    inc = incidence(masks, n)
    fixed_A = [np.ones(n)]
    fixed_b = [vN]
    free = np.ones(masks.size, bool)

    while np.linalg.matrix_rank(np.array(fixed_A)) < n:
        idx = np.flatnonzero(free)
        if idx.size == 0:
            raise DegenerateTightSet("no free coalitions left but the payoff is not determined")
        nf = len(fixed_A)
        A = np.zeros((nf + idx.size, n + 1))
        A[:nf, :n] = fixed_A
        A[nf:, :n] = inc[idx]
        A[nf:, n] = 1.0
        b = np.concatenate([fixed_b, v[masks[idx]]])
        eq = np.zeros(A.shape[0], bool)
        eq[:nf] = True
        objective = np.zeros(n + 1)
        objective[n] = 1.0
        sol = lpmod.solve(lpmod.LpProblem(objective, A, b, eq))
        if not sol.optimal:
            raise lpmod.LpInfeasible(f"nucleolus stage LP returned {sol.status.value}")
        eps = sol.x[n]
        duals = sol.duals[nf:]
        binding = np.flatnonzero(duals > 1e-9)
        if binding.size == 0:
            raise DegenerateTightSet("no coalition carries a positive dual multiplier")
        if np.any(np.abs(sol.slacks[nf:][binding]) > TIGHT_TOL):
            raise DegenerateTightSet("a coalition with positive dual is not tight at tolerance 1e-7")
        for j in idx[binding]:
            fixed_A.append(inc[j])
            fixed_b.append(v[masks[j]] - eps)
            free[j] = False
        F = np.array(fixed_A)
        rest = np.flatnonzero(free)
        if rest.size:
            coef, *_ = np.linalg.lstsq(F.T, inc[rest].T, rcond=None)
            resid = np.abs(F.T @ coef - inc[rest].T).max(axis=0)
            free[rest[resid < 1e-9]] = False

    F = np.array(fixed_A)
    x, *_ = np.linalg.lstsq(F, np.array(fixed_b), rcond=None)
    return x
