"""Plain-text game files.

Format: the first non-comment line is the player count ``n``; each further
line is ``<coalition bitmask in hex> <utility>``. Coalitions not listed are
worth 0. ``#`` starts a comment.
"""

from __future__ import annotations

import os

import numpy as np

from .game import Game


class GameFileError(ValueError):
    pass


def parse_game(text: str) -> Game:
    n = None
    values = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if n is None:
            try:
                n = int(line)
            except ValueError:
                raise GameFileError(f"line {lineno}: expected player count, got {line!r}") from None
            if not 1 <= n <= 24:
                raise GameFileError(f"line {lineno}: player count {n} out of range [1, 24]")
            values = np.zeros(1 << n)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GameFileError(f"line {lineno}: expected '<hex mask> <value>', got {line!r}")
        try:
            mask = int(parts[0], 16)
            val = float(parts[1])
        except ValueError:
            raise GameFileError(f"line {lineno}: cannot parse {line!r}") from None
        if mask >> n:
            raise GameFileError(f"line {lineno}: mask {parts[0]} has bits beyond player {n - 1}")
        values[mask] = val
    if n is None:
        raise GameFileError("empty game file")
    return Game.from_table(values)


def read_game(path: str | os.PathLike) -> Game:
    with open(path, encoding="utf-8") as fh:
        return parse_game(fh.read())


def format_game(game: Game, skip_zeros: bool = True) -> str:
    lines = [str(game.n)]
    for mask, val in enumerate(game.table()):
        if skip_zeros and val == 0.0:
            continue
        lines.append(f"{mask:x} {float(val)!r}")
    return "\n".join(lines) + "\n"


def write_game(path: str | os.PathLike, game: Game) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_game(game))
