"""Characteristic-function games and their solution concepts."""

from .coalition import Coalition, grand, mask_of, members, popcount
from .game import Game, PlayerCountExceeded, UtilityOracle
from .gamefile import GameFileError, parse_game, read_game, write_game
from .shapley import PermutationSampler, shapley_exact, shapley_from_table, shapley_monte_carlo
from .solutions import (
    CoreCheck,
    DegenerateTightSet,
    LeastCoreSolution,
    McLeastCoreParams,
    coalition_sums,
    core_membership,
    least_core,
    least_core_monte_carlo,
    nucleolus,
)

__all__ = [
    "Coalition",
    "CoreCheck",
    "DegenerateTightSet",
    "Game",
    "GameFileError",
    "LeastCoreSolution",
    "McLeastCoreParams",
    "PermutationSampler",
    "PlayerCountExceeded",
    "UtilityOracle",
    "coalition_sums",
    "core_membership",
    "grand",
    "least_core",
    "least_core_monte_carlo",
    "mask_of",
    "members",
    "nucleolus",
    "parse_game",
    "popcount",
    "read_game",
    "shapley_exact",
    "shapley_from_table",
    "shapley_monte_carlo",
    "write_game",
]
