"""Small textbook games used by tests, docs and the CLI."""

from __future__ import annotations

import numpy as np

from .coalition import popcount
from .game import Game


def additive_game(weights) -> Game:
    w = np.asarray(weights, dtype=float)
    n = w.size
    return Game(n, lambda m: float(sum(w[i] for i in range(n) if m >> i & 1)))


def glove_game() -> Game:
    """Player 0 holds a left glove, players 1 and 2 hold right gloves."""
    return Game(3, lambda m: 1.0 if (m & 1) and (m & 0b110) else 0.0)


def majority_game(n: int = 3) -> Game:
    return Game(n, lambda m: 1.0 if 2 * popcount(m) > n else 0.0)


def bargaining_game(a: float, b: float, c: float) -> Game:
    return Game.from_table([0.0, a, b, c])


def random_game(n: int, rng: np.random.Generator, low: float = 0.0, high: float = 1.0) -> Game:
    """Utilities uniform in ``[low, high)`` with ``v(empty) = 0``."""
    table = rng.uniform(low, high, size=1 << n)
    table[0] = 0.0
    return Game.from_table(table)


def supermodular_game(n: int, rng: np.random.Generator) -> Game:
    """``v(S) = (sum of weights in S)**2`` with nonnegative weights (convex game)."""
    w = rng.uniform(0.0, 1.0, size=n)
    return Game(n, lambda m: float(sum(w[i] for i in range(n) if m >> i & 1)) ** 2)
