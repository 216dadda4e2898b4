"""Run a label-noise benchmark: one federation per seed, every method on its logs."""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import contrib
from ..cgt.game import Game, PlayerCountExceeded
from ..cgt.gamefile import read_game
from ..cgt.shapley import shapley_exact
from ..cgt.solutions import least_core
from ..data import NoisePlan, inject_noise, load_mnist, partition_iid, synth_dataset
from ..fedsim import ClientState, FederationConfig, retrain_coalition, run_federation
from ..learn import AdamConfig, EvalSet, LogRegSpec, MlpSpec, SgdConfig, evaluate, init_params
from .config import ExperimentConfig
from .metrics import degenerate, dist_to_uniform, max_dif, normalize_payoffs, spearman

log = logging.getLogger(__name__)

PAYOFF_FIELDS = ["method", "seed", "client", "noise_rate", "raw_payoff", "normalized_payoff", "degenerate"]
ROUND_FIELDS = ["seed", "round", "test_acc"]
METHOD_FIELDS = ["method", "seed", "status", "acc", "max_dif", "dist", "B", "spearman", "t_method", "t_train"]
METRIC_FIELDS = [
    "method", "n", "seeds_ok", "status", "acc", "acc_std", "max_dif", "max_dif_std",
    "dist", "dist_std", "t", "t_std", "B", "B_std", "spearman_median", "t_train",
]
CURVE_FIELDS = ["method", "client", "noise_rate", "normalized_payoff", "normalized_payoff_std"]


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "nan" if np.isnan(x) else repr(float(x))
    return str(x)


@dataclass
class MethodOutcome:
    method: str
    status: str
    seconds: float
    raw: np.ndarray | None = None


@dataclass
class SeedResult:
    seed: int
    n: int
    noise_rates: np.ndarray
    round_accs: list[float]
    train_seconds: float
    outcomes: list[MethodOutcome] = field(default_factory=list)

    @property
    def final_acc(self) -> float:
        return self.round_accs[-1] if self.round_accs else float("nan")


def _seq(*keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(k) for k in keys])


def federation_config(cfg: ExperimentConfig, input_dim: int, num_classes: int, seed: int) -> FederationConfig:
    if cfg.model == "mlp":
        model = MlpSpec(input_dim, num_classes, cfg.hidden_units, cfg.dropout)
    else:
        model = LogRegSpec(input_dim, num_classes)
    if cfg.optimizer == "sgd":
        opt = SgdConfig(lr=cfg.lr, momentum=cfg.momentum, batch_size=cfg.batch_size, epochs=cfg.local_epochs)
    else:
        opt = AdamConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.local_epochs)
    return FederationConfig(model, cfg.rounds, cfg.local_epochs, opt, seed)


def load_dataset(cfg: ExperimentConfig, n: int, seed: int) -> tuple[EvalSet, EvalSet]:
    if cfg.dataset == "mnist":
        train, test = load_mnist(cfg.mnist_dir)
        if cfg.shard_size:
            if cfg.shard_size * n > len(train):
                raise ValueError(f"{n} shards of {cfg.shard_size} exceed the {len(train)} training samples")
            pick = np.random.default_rng(_seq(seed, 11)).permutation(len(train))[: cfg.shard_size * n]
            train = train.subset(np.sort(pick))
        if cfg.test_size:
            test = test.subset(np.arange(min(cfg.test_size, len(test))))
        return train, test
    k = cfg.synth_classes
    per = cfg.synth_train_per_class * n + cfg.synth_test_per_class
    full = synth_dataset(k, cfg.synth_dim, per, cfg.synth_separation, _seq(seed, 13))
    # per-class split so the test set stays balanced
    train_idx, test_idx = [], []
    for c in range(k):
        idx = np.flatnonzero(full.y == c)
        test_idx.append(idx[: cfg.synth_test_per_class])
        train_idx.append(idx[cfg.synth_test_per_class :])
    return full.subset(np.sort(np.concatenate(train_idx))), full.subset(np.sort(np.concatenate(test_idx)))


def build_clients(cfg: ExperimentConfig, n: int, seed: int) -> tuple[list[ClientState], EvalSet]:
    train, test = load_dataset(cfg, n, seed)
    shards = partition_iid(train, n, _seq(seed, 17))
    rates = NoisePlan(n).rates
    clients = [
        ClientState(k, inject_noise(shard, float(rates[k]), train.num_classes, _seq(seed, 19, k)), float(rates[k]))
        for k, shard in enumerate(shards)
    ]
    return clients, test


class _ExactGame:
    """Retrained-coalition utilities, shared by exact-shapley and exact-lc within a seed."""

    def __init__(self, clients, fcfg, test, final_acc):
        self.base = evaluate(init_params(fcfg.model, fcfg.seed), test)
        n = len(clients)
        full = (1 << n) - 1

        def v(mask):
            if mask == 0:
                return 0.0
            if mask == full:
                return final_acc - self.base
            return retrain_coalition(mask, clients, fcfg, test) - self.base

        self.game = Game(n, v)


def _compute(method: str, logs, test, cfg: ExperimentConfig, exact: dict) -> np.ndarray:
    cap = cfg.memory_cap
    workers = cfg.workers
    mr = contrib.MrConfig(lam=cfg.lam)
    if method == "or-shapley":
        return contrib.or_shapley(logs, test, cap, workers)
    if method == "or-lc":
        return contrib.or_least_core(logs, test, cap, workers).payoff
    if method == "loo":
        return contrib.round_loo(logs, test, "none")
    if method == "loo-linear":
        return contrib.round_loo(logs, test, "linear")
    if method == "reputation":
        return contrib.reputation(logs, test)
    if method == "lambda-mr":
        return contrib.lambda_mr(logs, test, mr, cap, workers)
    if method == "fed-shapley":
        return contrib.federated_shapley(logs, test, cap, workers)[0]
    if method == "truncated-mr":
        tcfg = contrib.MrConfig(lam=cfg.lam, truncation_threshold=cfg.truncation_threshold, accuracy_weighting=True)
        return contrib.truncated_mr(logs, test, tcfg, cap, workers)
    if method in ("exact-shapley", "exact-lc"):
        n = exact["n"]
        if n > cfg.exact_max_clients:
            raise PlayerCountExceeded(f"player cap: exact methods retrain 2^{n} coalitions, cap is {cfg.exact_max_clients}")
        if "game" not in exact:
            exact["game"] = _ExactGame(exact["clients"], exact["fcfg"], test, logs[-1].test_acc_after).game
        if method == "exact-shapley":
            return shapley_exact(exact["game"])
        return least_core(exact["game"]).payoff
    raise ValueError(f"unknown method {method!r}")


def run_seed(cfg: ExperimentConfig, n: int, seed: int) -> SeedResult:
    clients, test = build_clients(cfg, n, seed)
    fcfg = federation_config(cfg, test.dim, test.num_classes, seed)
    t0 = time.perf_counter()
    logs = run_federation(clients, fcfg, test)
    train_s = time.perf_counter() - t0
    res = SeedResult(seed, n, NoisePlan(n).rates, [lg.test_acc_after for lg in logs], train_s)
    exact = {"n": n, "clients": clients, "fcfg": fcfg}
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            raw = np.asarray(_compute(method, logs, test, cfg, exact), dtype=float)
            res.outcomes.append(MethodOutcome(method, "ok", time.perf_counter() - t0, raw))
        except contrib.MemoryBudgetExceeded:
            res.outcomes.append(MethodOutcome(method, "skipped: memory budget", time.perf_counter() - t0))
        except PlayerCountExceeded:
            res.outcomes.append(MethodOutcome(method, "skipped: player cap", time.perf_counter() - t0))
        log.info("n=%d seed=%d %s: %s", n, seed, method, res.outcomes[-1].status)
    return res


def run_game_file(cfg: ExperimentConfig) -> SeedResult:
    game = read_game(cfg.game_file).normalized()
    res = SeedResult(0, game.n, np.full(game.n, np.nan), [], 0.0)
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            if method == "exact-shapley":
                raw = shapley_exact(game)
            elif method == "exact-lc":
                raw = least_core(game).payoff
            else:
                res.outcomes.append(MethodOutcome(method, "skipped: needs federation logs", 0.0))
                continue
            res.outcomes.append(MethodOutcome(method, "ok", time.perf_counter() - t0, raw))
        except PlayerCountExceeded:
            res.outcomes.append(MethodOutcome(method, "skipped: player cap", time.perf_counter() - t0))
    return res


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_results(directory: Path, cfg: ExperimentConfig, results: list[SeedResult]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    results = sorted(results, key=lambda r: r.seed)
    n = results[0].n

    payoff_rows, method_rows, round_rows = [], [], []
    for r in results:
        round_rows += [(r.seed, t + 1, a) for t, a in enumerate(r.round_accs)]
    for method in cfg.methods:
        for r in results:
            out = next(o for o in r.outcomes if o.method == method)
            if out.raw is None:
                method_rows.append((method, r.seed, out.status, r.final_acc, np.nan, np.nan, np.nan, np.nan, out.seconds, r.train_seconds))
                continue
            x = normalize_payoffs(out.raw)
            deg = int(degenerate(out.raw))
            for k in range(n):
                payoff_rows.append((method, r.seed, k, r.noise_rates[k], out.raw[k], x[k], deg))
            method_rows.append(
                (method, r.seed, out.status, r.final_acc, max_dif(x), dist_to_uniform(x), float(np.sum(out.raw)),
                 spearman(r.noise_rates, x), out.seconds, r.train_seconds)
            )
    _write_csv(directory / "payoffs.csv", PAYOFF_FIELDS, payoff_rows)
    _write_csv(directory / "rounds.csv", ROUND_FIELDS, round_rows)
    _write_csv(directory / "methods.csv", METHOD_FIELDS, method_rows)
    _write_csv(directory / "metrics.csv", METRIC_FIELDS, summarize(method_rows, cfg.methods, n))
    _write_csv(directory / "curve.csv", CURVE_FIELDS, curve_rows(payoff_rows, cfg.methods, n))


def summarize(method_rows, methods, n):
    """Mean (and std) over seeds of each method's metrics."""
    out = []
    for method in methods:
        rows = [r for r in method_rows if r[0] == method]
        ok = [r for r in rows if r[2] == "ok"]
        status = "ok" if ok else rows[0][2]

        def col(j):
            return np.array([r[j] for r in ok], dtype=float)

        stat = []
        for j in (3, 4, 5, 8, 6):  # acc, max_dif, dist, t_method, B
            v = col(j)
            stat += [v.mean(), v.std()] if v.size else [np.nan, np.nan]
        acc, acc_sd, md, md_sd, ds, ds_sd, t, t_sd, B, B_sd = stat
        sp = col(7)
        sp_med = float(np.median(np.where(np.isnan(sp), 0.0, sp))) if sp.size else np.nan
        t_train = float(np.mean([r[9] for r in rows]))
        out.append((method, n, len(ok), status, acc, acc_sd, md, md_sd, ds, ds_sd, t, t_sd, B, B_sd, sp_med, t_train))
    return out


def curve_rows(payoff_rows, methods, n):
    out = []
    for method in methods:
        for k in range(n):
            vals = np.array([r[5] for r in payoff_rows if r[0] == method and r[2] == k], dtype=float)
            rates = [r[3] for r in payoff_rows if r[0] == method and r[2] == k]
            if vals.size:
                out.append((method, k, rates[0], vals.mean(), vals.std()))
    return out


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every (client count, seed) and write one results subdirectory per client count."""
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    if cfg.dataset == "game-file":
        res = run_game_file(cfg)
        write_results(root / f"n{res.n}", cfg, [res])
        return root
    for n in cfg.num_clients:
        if cfg.parallel_seeds and len(cfg.seeds) > 1:
            with ProcessPoolExecutor(max_workers=min(len(cfg.seeds), os.cpu_count() or 1)) as pool:
                results = list(pool.map(run_seed, [cfg] * len(cfg.seeds), [n] * len(cfg.seeds), cfg.seeds))
        else:
            results = [run_seed(cfg, n, s) for s in cfg.seeds]
        write_results(root / f"n{n}", cfg, results)
    return root
