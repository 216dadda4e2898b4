"""Synchronous FedAvg with full participation and per-round logs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .cgt.coalition import grand, members
from .learn import EvalSet, ModelSpec, OptimizerConfig, ParamVector, SgdConfig, evaluate, init_params, train_local

MANIFEST = "manifest.json"


class EmptyCoalition(ValueError):
    pass


@dataclass
class ClientState:
    id: int
    dataset: EvalSet
    noise_rate: float = 0.0
    seed_key: int | None = None  # overrides ``id`` when deriving training seeds

    def __post_init__(self):
        if len(self.dataset) == 0:
            raise ValueError(f"client {self.id} has an empty dataset")

    @property
    def size(self) -> int:
        return len(self.dataset)


@dataclass(frozen=True)
class FederationConfig:
    model: ModelSpec
    num_rounds: int = 5
    local_epochs: int = 10
    optimizer: OptimizerConfig = field(default_factory=SgdConfig)
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.num_rounds < 1:
            raise ValueError("num_rounds must be >= 1")

    @property
    def local_optimizer(self) -> OptimizerConfig:
        return replace(self.optimizer, epochs=self.local_epochs)


@dataclass
class RoundLog:
    t: int
    global_before: ParamVector
    local_updates: dict[int, np.ndarray]  # client id -> trained - global_before
    participants: int  # bitmask over client positions
    sizes: dict[int, int]
    global_after: ParamVector
    test_acc_after: float

    @property
    def client_ids(self) -> list[int]:
        return sorted(self.local_updates)

    def delta_matrix(self) -> np.ndarray:
        """Updates stacked in client-id order, shape ``(n, P)``."""
        return np.stack([self.local_updates[i] for i in self.client_ids])

    def size_vector(self) -> np.ndarray:
        return np.array([self.sizes[i] for i in self.client_ids], dtype=float)


def client_seed(seed: int, round_index: int, key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, round_index, key])


def aggregate(before: np.ndarray, deltas: Sequence[np.ndarray], sizes: Sequence[float]) -> np.ndarray:
    """``before + sum_i (n_i / sum n) delta_i``, reduced in the given order."""
    total = float(sum(sizes))
    out = before.copy()
    for d, s in zip(deltas, sizes):
        out += (s / total) * d
    return out


def run_federation(clients: Sequence[ClientState], cfg: FederationConfig, test: EvalSet) -> list[RoundLog]:
    if not clients:
        raise ValueError("a federation needs at least one client")
    clients = sorted(clients, key=lambda c: c.id)
    params = init_params(cfg.model, cfg.seed)
    opt = cfg.local_optimizer
    logs = []
    for t in range(1, cfg.num_rounds + 1):
        updates = {}
        for c in clients:
            key = c.id if c.seed_key is None else c.seed_key
            trained = train_local(params, c.dataset, opt, client_seed(cfg.seed, t, key), dtype=np.dtype(cfg.dtype))
            updates[c.id] = trained.values - params.values
        sizes = {c.id: c.size for c in clients}
        after = ParamVector(
            aggregate(params.values, [updates[c.id] for c in clients], [c.size for c in clients]), cfg.model
        )
        logs.append(
            RoundLog(
                t=t,
                global_before=params,
                local_updates=updates,
                participants=grand(len(clients)),
                sizes=sizes,
                global_after=after,
                test_acc_after=evaluate(after, test),
            )
        )
        params = after
    return logs


def retrain_coalition(mask: int, clients: Sequence[ClientState], cfg: FederationConfig, test: EvalSet) -> float:
    """Final test accuracy of a fresh federation among the clients in ``mask``.

    ``mask`` indexes positions in ``clients`` sorted by id. Clients keep their
    own seed keys, so a client trains with the same randomness in every
    coalition it belongs to.
    """
    if mask == 0:
        raise EmptyCoalition("the empty coalition has no model; its utility is 0 by normalization")
    ordered = sorted(clients, key=lambda c: c.id)
    chosen = [ordered[i] for i in members(mask)]
    return run_federation(chosen, cfg, test)[-1].test_acc_after


def dump_round_logs(logs: Sequence[RoundLog], directory) -> None:
    """One parameter file per (round, client) plus the global models and a JSON manifest."""
    os.makedirs(directory, exist_ok=True)
    rounds = []
    for log in logs:
        before = f"round{log.t:03d}_global_before.fpv"
        after = f"round{log.t:03d}_global_after.fpv"
        log.global_before.save(os.path.join(directory, before))
        log.global_after.save(os.path.join(directory, after))
        files = {}
        for cid, delta in log.local_updates.items():
            name = f"round{log.t:03d}_client{cid:03d}.fpv"
            ParamVector(delta, log.global_before.spec).save(os.path.join(directory, name))
            files[str(cid)] = name
        rounds.append(
            {
                "t": log.t,
                "global_before": before,
                "global_after": after,
                "updates": files,
                "sizes": {str(k): v for k, v in log.sizes.items()},
                "participants": log.participants,
                "test_acc_after": log.test_acc_after,
            }
        )
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump({"format": 1, "rounds": rounds}, fh, indent=2, sort_keys=True)


def load_round_logs(directory) -> list[RoundLog]:
    with open(os.path.join(directory, MANIFEST), encoding="utf-8") as fh:
        manifest = json.load(fh)
    logs = []
    for r in manifest["rounds"]:
        before = ParamVector.load(os.path.join(directory, r["global_before"]))
        after = ParamVector.load(os.path.join(directory, r["global_after"]))
        updates = {int(k): ParamVector.load(os.path.join(directory, v)).values for k, v in r["updates"].items()}
        logs.append(
            RoundLog(
                t=r["t"],
                global_before=before,
                local_updates=updates,
                participants=r["participants"],
                sizes={int(k): v for k, v in r["sizes"].items()},
                global_after=after,
                test_acc_after=r["test_acc_after"],
            )
        )
    return logs
