"""Coalitions of players encoded as integer bitmasks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

MAX_PLAYERS = 24


def check_players(n: int) -> int:
    if not 1 <= n <= MAX_PLAYERS:
        raise ValueError(f"player count must be in [1, {MAX_PLAYERS}], got {n}")
    return n


def grand(n: int) -> int:
    return (1 << n) - 1


def mask_of(members: Iterable[int]) -> int:
    mask = 0
    for i in members:
        if i < 0:
            raise ValueError(f"negative player index {i}")
        mask |= 1 << i
    return mask


def members(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass(frozen=True, order=True)
class Coalition:
    """A subset of ``range(n)``; ``int(c)`` is its bitmask."""

    mask: int
    n: int

    def __post_init__(self):
        check_players(self.n)
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(f"mask {self.mask:#x} has members outside range({self.n})")

    @classmethod
    def of(cls, players: Iterable[int], n: int) -> "Coalition":
        return cls(mask_of(players), n)

    @classmethod
    def grand(cls, n: int) -> "Coalition":
        return cls(grand(n), n)

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(0, n)

    def __int__(self) -> int:
        return self.mask

    def __index__(self) -> int:
        return self.mask

    def __iter__(self) -> Iterator[int]:
        return iter(members(self.mask))

    def __len__(self) -> int:
        return popcount(self.mask)

    def __contains__(self, i: object) -> bool:
        return isinstance(i, int) and 0 <= i < self.n and bool(self.mask >> i & 1)

    def with_player(self, i: int) -> "Coalition":
        return Coalition(self.mask | 1 << i, self.n)

    def without(self, i: int) -> "Coalition":
        return Coalition(self.mask & ~(1 << i), self.n)

    @property
    def is_grand(self) -> bool:
        return self.mask == grand(self.n)

    def __repr__(self) -> str:
        return f"Coalition({members(self.mask)}, n={self.n})"
