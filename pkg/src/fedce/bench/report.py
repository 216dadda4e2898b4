"""Collect a results directory into per-client-count tables and plot data."""

from __future__ import annotations

import csv
import math
from pathlib import Path

REPORT_METRIC_FIELDS = [
    "method", "n", "status", "seeds_ok", "acc", "max_dif", "dist", "t", "B", "spearman_median",
    "acc_std", "max_dif_std", "dist_std", "t_std", "B_std", "t_train",
]
REPORT_CURVE_FIELDS = ["noise_rate", "normalized_payoff", "method", "n", "client", "seed"]


class MissingResults(FileNotFoundError):
    pass


def _read(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, header, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def result_dirs(results: Path) -> list[tuple[int, Path]]:
    """``(n, path)`` for every ``n<k>`` subdirectory holding a payoff table, sorted by ``n``."""
    found = []
    for p in Path(results).glob("n*"):
        if p.is_dir() and p.name[1:].isdigit() and (p / "payoffs.csv").exists():
            found.append((int(p.name[1:]), p))
    return sorted(found)


def _cell(x: str, width: int = 8) -> str:
    try:
        v = float(x)
    except ValueError:
        return x.rjust(width)
    return "nan".rjust(width) if math.isnan(v) else f"{v:{width}.3f}"


def emit_report(results, out: str | Path | None = None) -> Path:
    """Write ``metrics_n<k>.csv``, ``curves.csv`` and ``summary.txt`` into ``out``.

    ``out`` defaults to ``<results>/report``. Raises :class:`MissingResults`
    when no client count produced a single payoff.
    """
    results = Path(results)
    dirs = result_dirs(results)
    payoffs = {n: _read(d / "payoffs.csv") for n, d in dirs}
    if not any(payoffs.values()):
        raise MissingResults(f"no payoffs under {results}")
    out = results / "report" if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)

    curves = []
    lines = []
    total_t = 0.0
    for n, d in dirs:
        metrics = _read(d / "metrics.csv")
        _write(out / f"metrics_n{n}.csv", REPORT_METRIC_FIELDS, metrics)
        curves += [
            {"noise_rate": r["noise_rate"], "normalized_payoff": r["normalized_payoff"], "method": r["method"],
             "n": n, "client": r["client"], "seed": r["seed"]}
            for r in payoffs[n]
        ]
        method_t = sum(float(r["t_method"]) for r in _read(d / "methods.csv"))
        total_t += method_t

        lines.append(f"n = {n}")
        lines.append(f"{'method':<14}{'acc':>8}{'max_dif':>8}{'dist':>8}{'t':>8}{'B':>8}{'rho':>8}  status")
        for r in metrics:
            cells = "".join(_cell(r[k]) for k in ("acc", "max_dif", "dist", "t", "B", "spearman_median"))
            lines.append(f"{r['method']:<14}{cells}  {r['status']}")
        lines.append(f"method time total: {method_t:.3f} s")
        lines.append("")
    lines.append(f"all method time: {total_t:.3f} s")
    _write(out / "curves.csv", REPORT_CURVE_FIELDS, curves)
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
