"""Timing harness: factor and solve across thread counts and policies."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .numeric import parallel_factor, solve
from .sparse import load_matrix_market, residual_norm
from .symbolic import analyze

RESIDUAL_LIMIT = 1e-10


@dataclass(frozen=True)
class BenchRow:
    matrix: str
    threads: int
    policy: str
    factor_time_s: float
    solve_time_s: float
    residual: float
    speedup_vs_serial: float
    peak_bytes: int
    valid: bool


@dataclass
class BenchReport:
    rows: list

    @property
    def ok(self) -> bool:
        return all(r.valid for r in self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f.name for f in fields(BenchRow)])
            for r in self.rows:
                w.writerow(astuple(r))

    def table(self) -> str:
        head = ["matrix", "threads", "policy", "factor_s", "solve_s", "residual", "speedup",
                "peak_bytes", "valid"]
        body = [[r.matrix, str(r.threads), r.policy, f"{r.factor_time_s:.4f}",
                 f"{r.solve_time_s:.4f}", f"{r.residual:.2e}", f"{r.speedup_vs_serial:.2f}",
                 str(r.peak_bytes), "yes" if r.valid else "NO"] for r in self.rows]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        return "\n".join(fmt.format(*line) for line in [head, *body])


def _measure(a, an, policy, threads: int, repeats: int, b: np.ndarray):
    ft, st = [], []
    res = 0.0
    peak = 0
    for _ in range(repeats):
        t0 = time.perf_counter()
        lu, trace = parallel_factor(a, an, policy, threads)
        t1 = time.perf_counter()
        x = solve(lu, b, threads)
        t2 = time.perf_counter()
        ft.append(t1 - t0)
        st.append(t2 - t1)
        res = max(res, residual_norm(a, x, b))
        peak = max(peak, trace.peak_bytes)
    return statistics.median(ft), statistics.median(st), res, peak


def bench(corpus, threads, policies, repeats: int = 3, qtable=None, seed: int = 0) -> BenchReport:
    """Median-of-repeats timings per (matrix, threads, policy).

    ``corpus`` is a directory of ``.mtx`` files or a list of (name, matrix).
    Speedups are relative to the serial policy on one thread, measured in
    the same run.  A row whose residual exceeds the limit is invalid.
    """
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    if isinstance(corpus, (str, Path)):
        files = sorted(Path(corpus).glob("*.mtx"))
        corpus = [(f.stem, load_matrix_market(f)) for f in files]
    if not corpus:
        raise ValueError("corpus is empty")
    pols = {}
    for p in policies:
        if p == "qtable":
            if qtable is None:
                raise ValueError("policy 'qtable' needs a Q-table")
            pols[p] = qtable
        elif p in ("serial", "static"):
            pols[p] = p
        else:
            raise ValueError(f"unknown policy {p!r}")
    rows = []
    for name, a in corpus:
        an = analyze(a)
        b = np.random.default_rng(seed).standard_normal(a.n)
        measured = {}
        for t in threads:
            for p in policies:
                measured[(t, p)] = _measure(a, an, pols[p], t, repeats, b)
        ref = measured.get((1, "serial")) or _measure(a, an, "serial", 1, repeats, b)
        for t in threads:
            for p in policies:
                ft, st, res, peak = measured[(t, p)]
                rows.append(BenchRow(name, t, p, ft, st, res, ref[0] / ft, peak,
                                     bool(res <= RESIDUAL_LIMIT)))
    return BenchReport(rows)
