"""Exact and permutation-sampling Shapley values."""

from __future__ import annotations

from math import factorial, fsum

import numpy as np

from .game import Game, coalition_sizes, require_players

EXACT_PLAYER_CAP = 20


def shapley_weights(n: int) -> np.ndarray:
    """``|S|! (n-|S|-1)! / n!`` for ``|S| = 0..n-1``."""
    nf = factorial(n)
    return np.array([factorial(s) * factorial(n - s - 1) / nf for s in range(n)])


def shapley_from_table(values: np.ndarray, n: int) -> np.ndarray:
    """Shapley values of the game whose coalition values are ``values[mask]``."""
    values = np.asarray(values, dtype=float)
    w = shapley_weights(n)
    sizes = coalition_sizes(n)
    masks = np.arange(1 << n)
    phi = np.empty(n)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        marg = values[without | bit] - values[without]
        # exactly rounded sum: relabelling players only reorders the terms,
        # so symmetric players get bit-identical values
        phi[i] = fsum(w[sizes[without]] * marg)
    return phi


def shapley_exact(game: Game, cap: int = EXACT_PLAYER_CAP) -> np.ndarray:
    """Shapley value by full enumeration; evaluates each of the ``2**n`` coalitions once."""
    require_players(game.n, cap, "exact Shapley")
    return shapley_from_table(game.table(), game.n)


class PermutationSampler:
    """Seeded stream of uniform random permutations of ``range(n)``."""

    def __init__(self, n: int, seed: int | None = 0):
        self.n = n
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def draw(self) -> np.ndarray:
        return self._rng.permutation(self.n)

    def __iter__(self):
        while True:
            yield self.draw()


def shapley_monte_carlo(
    game: Game,
    sampler: PermutationSampler,
    iterations: int,
    early_stop: float | None = None,
    check_every: int = 100,
) -> np.ndarray:
    """Average marginal contributions over sampled permutations.

    If ``early_stop`` is given, sampling halts once the running mean moves by
    less than that amount (max norm) over ``check_every`` permutations.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if sampler.n != game.n:
        raise ValueError(f"sampler is for {sampler.n} players, game has {game.n}")
    n = game.n
    total = np.zeros(n)
    snapshot = None
    for it in range(1, iterations + 1):
        perm = sampler.draw()
        mask = 0
        prev = game(0)
        for i in perm:
            mask |= 1 << int(i)
            cur = game(mask)
            total[i] += cur - prev
            prev = cur
        if early_stop is not None and it % check_every == 0:
            mean = total / it
            if snapshot is not None and np.max(np.abs(mean - snapshot)) < early_stop:
                return mean
            snapshot = mean
    return total / iterations
