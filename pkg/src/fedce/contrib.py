"""Contribution evaluation on top of FedAvg round logs.

Everything here reuses the updates that clients already sent while training
the grand-coalition model; no coalition is ever retrained. Coalition models
("pseudo-models") are rebuilt by size-weighted averaging of the members'
updates:

    model(S) <- base(S) + sum_{i in S} n_i / n_S * delta_i

One-round methods (OR-Shapley, OR-LC) keep a bank of pseudo-models that each
accumulate their own updates over all rounds and value clients once, at the
end. Multi-round methods compute a per-round Shapley value ("round-CI") on
models built from the previous round's global model, then aggregate rounds.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cgt.game import Game
from .cgt.shapley import shapley_from_table
from .cgt.solutions import LeastCoreSolution, least_core
from .fedsim import RoundLog
from .learn import EvalSet, ParamVector, predict

DEFAULT_MEMORY_CAP = 2 * 1024**3
ROUND_SUM_GUARD = 1e-9


class MemoryBudgetExceeded(MemoryError):
    pass


class RoundOrderViolation(ValueError):
    pass


def memory_cap_from_env(default: int = DEFAULT_MEMORY_CAP) -> int:
    raw = os.environ.get("FEDCE_MEMORY_CAP")
    return int(float(raw)) if raw else default


def check_memory(n: int, num_params: int, cap: int) -> None:
    need = (1 << n) * num_params * 8
    if need > cap:
        raise MemoryBudgetExceeded(
            f"memory budget: {1 << n} pseudo-models of {num_params} parameters need {need} bytes, cap is {cap}"
        )


def coalition_weights(sizes: Sequence[float]) -> np.ndarray:
    """``W[S, i] = n_i / sum_{j in S} n_j`` for ``i in S``; row 0 (empty) is zero."""
    sizes = np.asarray(sizes, dtype=float)
    n = sizes.size
    masks = np.arange(1 << n)
    inc = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    tot = inc @ sizes
    tot[0] = 1.0
    return inc * sizes / tot[:, None]


def evaluate_models(models: np.ndarray, spec, test: EvalSet, workers: int | None = None) -> np.ndarray:
    """Test accuracy of every row of ``models``; row order is preserved under threading."""

    def acc(row):
        return float(np.mean(predict(ParamVector(row, spec), test.X) == test.y))

    if workers is None or workers <= 1:
        return np.array([acc(r) for r in models])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(acc, models)))


class PseudoModelBank:
    """Pseudo-models for every coalition, each accumulating its own updates."""

    def __init__(self, init: ParamVector, sizes: Sequence[float], memory_cap: int = DEFAULT_MEMORY_CAP):
        self.spec = init.spec
        self.n = len(sizes)
        check_memory(self.n, init.values.size, memory_cap)
        self.init = init.values.copy()
        self.models = np.tile(init.values, (1 << self.n, 1))
        self.sizes = np.asarray(sizes, dtype=float)
        self._weights = coalition_weights(self.sizes)
        self.round = 0

    @classmethod
    def from_logs(cls, logs: Sequence[RoundLog], memory_cap: int = DEFAULT_MEMORY_CAP) -> "PseudoModelBank":
        return cls(logs[0].global_before, logs[0].size_vector(), memory_cap)

    def update(self, log: RoundLog) -> "PseudoModelBank":
        if log.t != self.round + 1:
            raise RoundOrderViolation(f"bank is at round {self.round}, got log for round {log.t}")
        sizes = log.size_vector()
        if not np.array_equal(sizes, self.sizes):
            self.sizes = sizes
            self._weights = coalition_weights(sizes)
        self.models += self._weights @ log.delta_matrix()
        self.round = log.t
        return self

    def __getitem__(self, mask: int) -> ParamVector:
        return ParamVector(self.models[int(mask)], self.spec)

    def utilities(self, test: EvalSet, workers: int | None = None) -> np.ndarray:
        """``acc(model(S)) - acc(init)`` for every mask; index 0 is exactly 0."""
        acc = evaluate_models(self.models, self.spec, test, workers)
        return acc - acc[0]


def bank_update(bank: PseudoModelBank, log: RoundLog) -> PseudoModelBank:
    return bank.update(log)


def or_utilities(logs: Sequence[RoundLog], test: EvalSet, memory_cap: int = DEFAULT_MEMORY_CAP, workers=None) -> np.ndarray:
    """Normalized utilities of the final one-round pseudo-models."""
    if not logs:
        raise ValueError("need at least one round")
    bank = PseudoModelBank.from_logs(logs, memory_cap)
    for log in logs:
        bank.update(log)
    return bank.utilities(test, workers)


def or_shapley(logs: Sequence[RoundLog], test: EvalSet, memory_cap: int = DEFAULT_MEMORY_CAP, workers=None) -> np.ndarray:
    v = or_utilities(logs, test, memory_cap, workers)
    return shapley_from_table(v, int(v.size).bit_length() - 1)


def or_least_core(logs: Sequence[RoundLog], test: EvalSet, memory_cap: int = DEFAULT_MEMORY_CAP, workers=None) -> LeastCoreSolution:
    """Least core of the one-round pseudo-model game (the simplex's first vertex)."""
    v = or_utilities(logs, test, memory_cap, workers)
    return least_core(Game.from_table(v))


@dataclass
class RoundContribution:
    t: int
    values: np.ndarray


@dataclass(frozen=True)
class MrConfig:
    lam: float = 0.8
    truncation_threshold: float | None = None
    accuracy_weighting: bool = False

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1]")
        if self.truncation_threshold is not None and self.truncation_threshold <= 0:
            raise ValueError("truncation threshold must be positive")

    def active(self, t: int) -> bool:
        return self.truncation_threshold is None or self.lam ** (t - 1) >= self.truncation_threshold


def round_utilities(log: RoundLog, test: EvalSet, memory_cap: int = DEFAULT_MEMORY_CAP, workers=None) -> np.ndarray:
    """``acc(global_before + round-t update of S) - acc(global_before)`` over the round's participants.

    Indexed by masks over the participants in client-id order.
    """
    D = log.delta_matrix()
    n = D.shape[0]
    check_memory(n, D.shape[1], memory_cap)
    models = log.global_before.values + coalition_weights(log.size_vector()) @ D
    acc = evaluate_models(models, log.global_before.spec, test, workers)
    return acc - acc[0]


def round_contributions(
    logs: Sequence[RoundLog],
    test: EvalSet,
    cfg: MrConfig | None = None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
    workers=None,
) -> list[RoundContribution]:
    """Per-round Shapley values (round-CIs); clients absent from a round get 0.

    Rounds switched off by ``cfg``'s truncation threshold are not evaluated
    and contribute zero vectors.
    """
    if not logs:
        raise ValueError("need at least one round")
    everyone = sorted({cid for log in logs for cid in log.local_updates})
    pos = {cid: k for k, cid in enumerate(everyone)}
    out = []
    for log in logs:
        values = np.zeros(len(everyone))
        if cfg is None or cfg.active(log.t):
            ids = log.client_ids
            v = round_utilities(log, test, memory_cap, workers)
            phi = shapley_from_table(v, len(ids))
            for k, cid in enumerate(ids):
                values[pos[cid]] = phi[k]
        out.append(RoundContribution(log.t, values))
    return out


def federated_shapley(
    logs: Sequence[RoundLog], test: EvalSet, memory_cap: int = DEFAULT_MEMORY_CAP, workers=None
) -> tuple[np.ndarray, list[RoundContribution]]:
    """Sum over rounds of the per-round Shapley values, plus the per-round breakdown."""
    rounds = round_contributions(logs, test, None, memory_cap, workers)
    return np.sum([r.values for r in rounds], axis=0), rounds


def aggregate_round_cis(rounds: Sequence[RoundContribution], cfg: MrConfig, accuracies: Sequence[float] | None = None) -> np.ndarray:
    """``sum_t lam^(t-1) [acc_t] r_t / sum_j r_t(j)``; rounds whose CI sum is <= 1e-9 count zero."""
    total = np.zeros_like(rounds[0].values)
    for k, r in enumerate(rounds):
        if not cfg.active(r.t):
            continue
        s = r.values.sum()
        if s <= ROUND_SUM_GUARD:
            continue
        w = cfg.lam ** (r.t - 1)
        if cfg.accuracy_weighting:
            w *= accuracies[k]
        total += w * r.values / s
    return total


def lambda_mr(logs: Sequence[RoundLog], test: EvalSet, cfg: MrConfig = MrConfig(), memory_cap=DEFAULT_MEMORY_CAP, workers=None) -> np.ndarray:
    rounds = round_contributions(logs, test, cfg, memory_cap, workers)
    return aggregate_round_cis(rounds, cfg, [log.test_acc_after for log in logs])


def truncated_mr(
    logs: Sequence[RoundLog],
    test: EvalSet,
    cfg: MrConfig = MrConfig(truncation_threshold=0.5, accuracy_weighting=True),
    memory_cap=DEFAULT_MEMORY_CAP,
    workers=None,
) -> np.ndarray:
    """λ-MR that stops evaluating once ``lam**(t-1)`` drops below the threshold, weighting rounds by test accuracy."""
    if cfg.truncation_threshold is None:
        raise ValueError("truncated MR needs a truncation threshold")
    return lambda_mr(logs, test, cfg, memory_cap, workers)


def loo_matrix(logs: Sequence[RoundLog], test: EvalSet) -> np.ndarray:
    """``loo[t, i] = acc(global_after_t) - acc(aggregate of the others at round t)``.

    The others' updates are re-weighted by their own sizes. With a single
    client, the aggregate without it is the round's starting model.
    """
    out = []
    for log in logs:
        ids = log.client_ids
        D = log.delta_matrix()
        sizes = log.size_vector()
        spec = log.global_before.spec
        full = float(np.mean(predict(log.global_after, test.X) == test.y))
        row = np.empty(len(ids))
        for k in range(len(ids)):
            keep = np.arange(len(ids)) != k
            if keep.any():
                w = sizes[keep] / sizes[keep].sum()
                model = log.global_before.values + w @ D[keep]
            else:
                model = log.global_before.values
            row[k] = full - float(np.mean(predict(ParamVector(model, spec), test.X) == test.y))
        out.append(row)
    return np.array(out)


def round_loo(logs: Sequence[RoundLog], test: EvalSet, weighting: str = "none", loo: np.ndarray | None = None) -> np.ndarray:
    """Per-round leave-one-out summed over rounds, optionally weighted by round index."""
    if weighting not in ("none", "linear"):
        raise ValueError("weighting must be 'none' or 'linear'")
    loo = loo_matrix(logs, test) if loo is None else loo
    w = np.ones(loo.shape[0]) if weighting == "none" else np.arange(1, loo.shape[0] + 1, dtype=float)
    return w @ loo


def reputation(logs: Sequence[RoundLog], test: EvalSet, loo: np.ndarray | None = None) -> np.ndarray:
    """Fraction of rounds in which a client's leave-one-out is strictly positive."""
    loo = loo_matrix(logs, test) if loo is None else loo
    return np.mean(loo > 0, axis=0)
