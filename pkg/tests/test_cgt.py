import itertools
import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedce.cgt import (
    Coalition,
    Game,
    McLeastCoreParams,
    PermutationSampler,
    PlayerCountExceeded,
    UtilityOracle,
    core_membership,
    least_core,
    least_core_monte_carlo,
    mask_of,
    members,
    nucleolus,
    shapley_exact,
    shapley_monte_carlo,
)
from fedce.cgt.catalog import (
    additive_game,
    bargaining_game,
    glove_game,
    majority_game,
    random_game,
    supermodular_game,
)
from fedce.cgt.gamefile import GameFileError, format_game, parse_game, read_game, write_game
from fedce.cgt.solutions import coalition_sums


def brute_shapley(game: Game) -> np.ndarray:
    """Average marginal contribution over all n! orderings."""
    n = game.n
    phi = np.zeros(n)
    for perm in itertools.permutations(range(n)):
        mask = 0
        for i in perm:
            phi[i] += game(mask | 1 << i) - game(mask)
            mask |= 1 << i
    return phi / math.factorial(n)


def tables(n_min=1, n_max=6):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.lists(
            st.floats(-5, 5, allow_nan=False, allow_infinity=False), min_size=(1 << n) - 1, max_size=(1 << n) - 1
        ).map(lambda vals: np.concatenate([[0.0], vals]))
    )


# coalitions ---------------------------------------------------------------


def test_coalition_roundtrip():
    c = Coalition.of([0, 2, 5], 6)
    assert int(c) == 0b100101
    assert list(c) == [0, 2, 5]
    assert len(c) == 3 and 2 in c and 1 not in c
    assert c.with_player(1).without(0) == Coalition.of([1, 2, 5], 6)
    assert Coalition.grand(3).is_grand and not Coalition.empty(3).is_grand
    assert members(mask_of([3, 1])) == [1, 3]


def test_coalition_rejects_foreign_bits():
    with pytest.raises(ValueError):
        Coalition(0b1000, 3)


# Shapley ------------------------------------------------------------------


def test_shapley_examples():
    np.testing.assert_allclose(shapley_exact(additive_game([1, 1, 1])), [1, 1, 1], atol=1e-12)
    np.testing.assert_allclose(shapley_exact(glove_game()), [2 / 3, 1 / 6, 1 / 6], atol=1e-12)


def test_null_player_gets_zero():
    base = random_game(3, np.random.default_rng(0))
    # player 2 is null: v(S + {2}) = v(S)
    g = Game(3, lambda m: base(m & 0b011))
    assert shapley_exact(g)[2] == 0.0


@settings(max_examples=60, deadline=None)
@given(tables(1, 6))
def test_exact_matches_permutation_average(values):
    g = Game.from_table(values)
    np.testing.assert_allclose(shapley_exact(g), brute_shapley(g), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(tables(1, 8))
def test_efficiency(values):
    phi = shapley_exact(Game.from_table(values))
    vN = values[-1]
    assert abs(phi.sum() - vN) <= 1e-9 * max(1.0, abs(vN))


@settings(max_examples=40, deadline=None)
@given(tables(2, 6), st.data())
def test_symmetry_under_player_swap(values, data):
    n = int(values.size).bit_length() - 1
    i, j = data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))

    def swap(m):
        bi, bj = m >> i & 1, m >> j & 1
        m &= ~((1 << i) | (1 << j))
        return m | bi << j | bj << i

    phi = shapley_exact(Game.from_table(values))
    swapped = shapley_exact(Game(n, lambda m: values[swap(m)]))
    assert swapped[i] == pytest.approx(phi[j], abs=1e-12)
    assert swapped[j] == pytest.approx(phi[i], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_additivity(n, seed):
    rng = np.random.default_rng(seed)
    u, v = random_game(n, rng), random_game(n, rng)
    np.testing.assert_allclose(shapley_exact(u + v), shapley_exact(u) + shapley_exact(v), atol=1e-12)


def test_exact_oracle_calls_every_subset_once():
    for n in (1, 4, 8):
        g = random_game(n, np.random.default_rng(n))
        shapley_exact(g)
        assert g.calls == 1 << n
        shapley_exact(g)
        assert g.calls == 1 << n


def test_exact_cap():
    with pytest.raises(PlayerCountExceeded):
        shapley_exact(additive_game(np.ones(5)), cap=4)


def test_monte_carlo_additive_is_exact_after_one_permutation():
    w = [0.3, -1.0, 2.5, 0.0]
    phi = shapley_monte_carlo(additive_game(w), PermutationSampler(4, seed=9), 1)
    np.testing.assert_allclose(phi, w, atol=1e-12)


def test_monte_carlo_glove():
    phi = shapley_monte_carlo(glove_game(), PermutationSampler(3, seed=1), 20_000)
    np.testing.assert_allclose(phi, [2 / 3, 1 / 6, 1 / 6], atol=0.02)


def test_monte_carlo_null_player_identically_zero():
    base = random_game(4, np.random.default_rng(5))
    g = Game(4, lambda m: base(m & 0b0111))
    for iters in (1, 7, 200):
        assert shapley_monte_carlo(g, PermutationSampler(4, seed=iters), iters)[3] == 0.0


def test_monte_carlo_deterministic_given_seed():
    g = random_game(5, np.random.default_rng(2))
    a = shapley_monte_carlo(g, PermutationSampler(5, seed=3), 300)
    b = shapley_monte_carlo(g, PermutationSampler(5, seed=3), 300)
    assert a.tobytes() == b.tobytes()


@pytest.mark.slow
def test_monte_carlo_error_shrinks():
    for n in (3, 5, 6):
        g = random_game(n, np.random.default_rng(100 + n))
        exact = shapley_exact(g)
        v = g.table()
        errs = []
        for iters in (1_000, 100_000):
            runs = [np.max(np.abs(shapley_monte_carlo(g, PermutationSampler(n, seed=s), iters) - exact)) for s in range(3)]
            errs.append(np.mean(runs))
        assert errs[1] < errs[0]
        assert errs[1] < 0.01 * np.ptp(v)


def test_monte_carlo_early_stop():
    g = additive_game([1.0, 2.0])
    phi = shapley_monte_carlo(g, PermutationSampler(2, seed=0), 10_000, early_stop=1e-6, check_every=10)
    np.testing.assert_allclose(phi, [1, 2])
    assert g.calls <= 4


# core ---------------------------------------------------------------------


def test_core_examples():
    w = [0.5, 1.5, 2.0]
    assert core_membership(additive_game(w), w)
    assert core_membership(glove_game(), [1, 0, 0])
    chk = core_membership(majority_game(), [1 / 3] * 3)
    assert not chk
    assert chk.worst_deficit == pytest.approx(1 / 3)
    assert len(chk.worst) == 2


def test_core_detects_inefficiency():
    chk = core_membership(additive_game([1, 1]), [1, 2])
    assert not chk and not chk.efficient


def test_epsilon_core_relaxation():
    assert core_membership(majority_game(), [1 / 3] * 3, epsilon=1 / 3 + 1e-12)


def test_coalition_sums_matches_incidence():
    x = np.random.default_rng(0).normal(size=6)
    sums = coalition_sums(x)
    for m in range(64):
        assert sums[m] == pytest.approx(sum(x[i] for i in members(m)))


# least core ---------------------------------------------------------------


def test_least_core_examples():
    w = [0.2, 0.3, 0.5]
    lc = least_core(additive_game(w))
    assert lc.epsilon_star == pytest.approx(0.0, abs=1e-9)
    assert core_membership(additive_game(w), lc.payoff, tol=1e-7)

    lc = least_core(majority_game())
    assert lc.epsilon_star == pytest.approx(1 / 3, abs=1e-9)
    np.testing.assert_allclose(lc.payoff, [1 / 3] * 3, atol=1e-9)
    assert not lc.core_nonempty

    lc = least_core(glove_game())
    assert lc.epsilon_star <= 1e-9 and lc.core_nonempty
    assert core_membership(glove_game(), lc.payoff, tol=1e-7)


@settings(max_examples=40, deadline=None)
@given(tables(2, 6))
def test_least_core_certificate(values):
    g = Game.from_table(values)
    lc = least_core(g)
    assert lc.payoff.sum() == pytest.approx(values[-1], abs=1e-7)
    # feasible at eps*, and some constraint is tight (otherwise eps could shrink)
    assert np.all(lc.deficits <= lc.epsilon_star + 1e-7)
    assert np.any(np.abs(lc.deficits - lc.epsilon_star) <= 1e-7)
    assert core_membership(g, lc.payoff, lc.epsilon_star, tol=1e-7)
    if lc.epsilon_star <= 0:
        assert core_membership(g, lc.payoff, 0.0, tol=1e-7)


def test_least_core_cap():
    with pytest.raises(PlayerCountExceeded):
        least_core(additive_game(np.ones(17)))


def test_least_core_single_player():
    lc = least_core(Game.from_table([0.0, 2.5]))
    assert lc.payoff.tolist() == [2.5] and lc.epsilon_star == 0.0


# Monte Carlo least core ---------------------------------------------------


def test_sample_bound_formula():
    p = McLeastCoreParams(e=0.05, delta=0.1, Delta=0.05, tau=1.0)
    expected = math.ceil((math.log(3) + math.log(20)) / (0.05**2 * 0.1**2))
    assert p.required_samples(3) == expected


def test_mc_least_core_with_all_coalitions_equals_exact():
    g = random_game(5, np.random.default_rng(4))
    mc = least_core_monte_carlo(g, McLeastCoreParams(0.05, 0.1, 0.05, 1.0, sample_count=5000), seed=0)
    assert len(mc.coalitions) == 30
    assert mc.epsilon_star == pytest.approx(least_core(g).epsilon_star, abs=1e-9)


def test_mc_least_core_majority_audit():
    params = McLeastCoreParams(e=0.05, delta=0.1, Delta=0.05, tau=1.0)
    for seed in range(50):
        mc = least_core_monte_carlo(majority_game(), params, seed=seed)
        assert mc.violation_fraction <= 0.1


def test_mc_least_core_relaxation_bound():
    g = supermodular_game(10, np.random.default_rng(8))
    exact = least_core(g).epsilon_star
    for seed in range(3):
        mc = least_core_monte_carlo(g, McLeastCoreParams(0.05, 0.1, 0.05, 1.0, sample_count=500), seed=seed)
        assert mc.epsilon_star <= exact + 1e-9


def test_mc_least_core_deterministic():
    g = random_game(6, np.random.default_rng(1))
    p = McLeastCoreParams(0.1, 0.1, 0.1, 1.0, sample_count=20)
    a = least_core_monte_carlo(g, p, seed=5)
    b = least_core_monte_carlo(g, p, seed=5)
    assert a.payoff.tobytes() == b.payoff.tobytes()
    assert a.coalitions.tolist() == b.coalitions.tolist()


def test_mc_params_validation():
    with pytest.raises(ValueError):
        McLeastCoreParams(0.0, 0.1, 0.1, 1.0)
    with pytest.raises(ValueError):
        McLeastCoreParams(0.1, 1.5, 0.1, 1.0)


# nucleolus ----------------------------------------------------------------


def _sorted_excesses(values, x):
    sums = coalition_sums(np.asarray(x))
    return np.sort(values[1:-1] - sums[1:-1])[::-1]


def _grid_lexmin(values, step=0.01):
    """Lexicographically smallest sorted-excess vector over an efficient grid (n=3)."""
    vN = values[-1]
    best, best_x = None, None
    grid = np.arange(-1.0, 2.0 + step / 2, step)
    for a in grid:
        for b in grid:
            x = (a, b, vN - a - b)
            e = np.round(_sorted_excesses(values, x), 9)
            if best is None or tuple(e) < tuple(best):
                best, best_x = e, x
    return np.array(best_x)


def test_nucleolus_examples():
    np.testing.assert_allclose(nucleolus(majority_game()), [1 / 3] * 3, atol=1e-9)
    np.testing.assert_allclose(nucleolus(additive_game([0.4, 1.1, 0.5])), [0.4, 1.1, 0.5], atol=1e-9)
    a, b, c = 0.2, 0.5, 1.5
    np.testing.assert_allclose(nucleolus(bargaining_game(a, b, c)), [(c + a - b) / 2, (c + b - a) / 2], atol=1e-9)
    np.testing.assert_allclose(nucleolus(glove_game()), [1, 0, 0], atol=1e-9)


def test_nucleolus_matches_grid_search():
    for g in (majority_game(), additive_game([0.4, 0.1, 0.5]), glove_game()):
        values = g.table()
        np.testing.assert_allclose(nucleolus(g), _grid_lexmin(values), atol=0.011)


@settings(max_examples=30, deadline=None)
@given(tables(2, 5))
def test_nucleolus_in_least_core(values):
    g = Game.from_table(values)
    x = nucleolus(g)
    lc = least_core(g)
    assert core_membership(g, x, lc.epsilon_star + 1e-7, tol=1e-7)


def test_nucleolus_cap():
    with pytest.raises(PlayerCountExceeded):
        nucleolus(additive_game(np.ones(11)))


# oracle -------------------------------------------------------------------


def test_oracle_memoizes_under_concurrency():
    seen = []
    lock = threading.Lock()

    def slow(mask):
        with lock:
            seen.append(mask)
        return float(mask) * 0.5

    oracle = UtilityOracle(slow)
    masks = [m % 16 for m in range(400)]
    out = oracle.evaluate_many(masks, workers=8)
    np.testing.assert_array_equal(out, np.array(masks) * 0.5)
    assert sorted(seen) == list(range(16))
    assert oracle.calls == 16


# game files ---------------------------------------------------------------


def test_game_file_roundtrip(tmp_path):
    g = random_game(4, np.random.default_rng(3))
    path = tmp_path / "g.txt"
    write_game(path, g)
    np.testing.assert_array_equal(read_game(path).table(), g.table())


def test_game_file_parsing():
    g = parse_game("# glove\n3\n3 1\n5 1.0  # left+right\n7 1\n")
    np.testing.assert_allclose(shapley_exact(g), [2 / 3, 1 / 6, 1 / 6])
    assert format_game(g).splitlines()[0] == "3"


@pytest.mark.parametrize("text", ["", "x\n", "2\n4 1.0\n", "2\n1\n", "2\nzz 1\n", "30\n"])
def test_game_file_errors(text):
    with pytest.raises(GameFileError):
        parse_game(text)
