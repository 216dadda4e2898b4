"""Characteristic-function games with a memoizing, thread-safe utility oracle."""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

from .coalition import check_players, grand, popcount


class PlayerCountExceeded(ValueError):
    """The requested computation is capped below the game's player count."""


def require_players(n: int, cap: int, what: str) -> None:
    if n > cap:
        raise PlayerCountExceeded(f"{what} is capped at {cap} players, game has {n}")


class UtilityOracle:
    """Wraps ``evaluator(mask) -> float`` with a cache and a call counter.

    Each coalition is evaluated at most once; concurrent callers asking for the
    same mask block on the lock instead of racing, so a key can never map to
    two different values.
    """

    def __init__(self, evaluator: Callable[[int], float]):
        self._evaluator = evaluator
        self._cache: dict[int, float] = {}
        self._lock = threading.Lock()
        self._key_locks: dict[int, threading.Lock] = {}
        self.calls = 0

    def __call__(self, mask: int) -> float:
        mask = int(mask)
        try:
            return self._cache[mask]
        except KeyError:
            pass
        with self._lock:
            if mask in self._cache:
                return self._cache[mask]
            key_lock = self._key_locks.setdefault(mask, threading.Lock())
        with key_lock:
            if mask in self._cache:
                return self._cache[mask]
            value = float(self._evaluator(mask))
            with self._lock:
                self._cache[mask] = value
                self.calls += 1
                self._key_locks.pop(mask, None)
            return value

    def evaluate_many(self, masks: Iterable[int], workers: int | None = None) -> np.ndarray:
        """Evaluate ``masks`` (optionally on a thread pool); output order follows input."""
        masks = [int(m) for m in masks]
        if workers is None or workers <= 1:
            return np.array([self(m) for m in masks], dtype=float)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(self, masks)), dtype=float)

    @property
    def cache(self) -> dict[int, float]:
        return dict(self._cache)


class Game:
    """A TU game on players ``0..n-1``."""

    def __init__(self, n: int, utility: UtilityOracle | Callable[[int], float]):
        self.n = check_players(n)
        self.utility = utility if isinstance(utility, UtilityOracle) else UtilityOracle(utility)

    def __call__(self, mask: int) -> float:
        return self.utility(mask)

    @property
    def grand(self) -> int:
        return grand(self.n)

    @property
    def calls(self) -> int:
        return self.utility.calls

    def table(self, workers: int | None = None) -> np.ndarray:
        """All ``2**n`` coalition values indexed by bitmask."""
        return self.utility.evaluate_many(range(1 << self.n), workers=workers)

    @classmethod
    def from_table(cls, values: Sequence[float] | np.ndarray) -> "Game":
        values = np.asarray(values, dtype=float)
        n = int(values.size).bit_length() - 1
        if values.size != 1 << n:
            raise ValueError(f"table length {values.size} is not a power of two")
        return cls(n, lambda m: values[m])

    def normalized(self) -> "Game":
        """The game shifted so that the empty coalition is worth 0."""
        base = self(0)
        if base == 0.0:
            return self
        return Game(self.n, lambda m: self(m) - base if m else 0.0)

    def __add__(self, other: "Game") -> "Game":
        if other.n != self.n:
            raise ValueError("games must have the same player count")
        return Game(self.n, lambda m: self(m) + other(m))


def coalition_sizes(n: int) -> np.ndarray:
    """Popcount of every mask in ``range(2**n)``."""
    sizes = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        sizes[1 << i : 1 << (i + 1)] = sizes[: 1 << i] + 1
    return sizes


def incidence(masks: Sequence[int] | np.ndarray, n: int) -> np.ndarray:
    """Rows of 0/1 membership indicators, one per mask."""
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(float)


__all__ = [
    "Game",
    "PlayerCountExceeded",
    "UtilityOracle",
    "coalition_sizes",
    "incidence",
    "popcount",
    "require_players",
]
