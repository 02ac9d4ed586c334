"""Multifrontal LU over the task tree, plus task-parallel triangular solves.

Each frontal is a dense square block over a row index list and a column
index list.  Its leading ``nfs`` rows/columns are fully summed and are
eliminated with threshold partial pivoting restricted to those rows; any
column that finds no acceptable pivot is delayed into the parent frontal.
Children are always assembled in ascending id order, so the factor values
do not depend on how tasks were spread over cores.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .runtime import MAX_ACTIONS, ScheduleRun, ScheduleTrace, SerialPolicy, StaticPolicy
from .sched import RewardWeights, TaskTree
from .sparse import CscMatrix, Permutation
from .symbolic import NONE, SymbolicAnalysis, analyze

PIVOT_FLOOR = 1e-14


class SingularMatrixError(ArithmeticError):
    def __init__(self, column: int, msg: str | None = None):
        super().__init__(msg or f"matrix is singular at column {column}")
        self.column = column


class PatternMismatchError(ValueError):
    def __init__(self, column: int):
        super().__init__(f"sparsity pattern differs from the analyzed matrix at column {column}")
        self.column = column


@dataclass
class FrontalResult:
    e: int
    rows: np.ndarray
    cols: np.ndarray
    L: np.ndarray        # m x e, unit lower part in the first e rows
    U: np.ndarray        # e x m
    update: np.ndarray   # (m-e) x (m-e) Schur complement for the parent


def factor_frontal(front, pivot_tol: float = 1e-3, nfs: int | None = None, rows=None, cols=None,
                   floor: float = PIVOT_FLOOR, allow_delay: bool = False) -> FrontalResult:
    """Partially factor an assembled dense frontal.

    ``front`` is not modified.  Without ``allow_delay`` a column that finds
    no pivot raises SingularMatrixError naming its column id.
    """
    F = np.array(front, dtype=float, order="C", copy=True)
    m = F.shape[0]
    if F.shape != (m, m):
        raise ValueError("frontal must be square")
    nfs = m if nfs is None else nfs
    rows = np.arange(m, dtype=np.int64) if rows is None else np.array(rows, dtype=np.int64)
    cols = np.arange(m, dtype=np.int64) if cols is None else np.array(cols, dtype=np.int64)
    e = kernels.dense_lu(F, rows, cols, nfs, pivot_tol, floor)
    if e < nfs and not allow_delay:
        raise SingularMatrixError(int(cols[e]))
    return FrontalResult(e, rows, cols, F[:, :e].copy(), F[:e, :].copy(), F[e:, e:].copy())


@dataclass
class FrontFactor:
    rows: np.ndarray
    cols: np.ndarray
    e: int
    L: np.ndarray
    U: np.ndarray


@dataclass
class LUFactors:
    """Factors of P A Q^T = L U, stored frontal by frontal in permuted space."""

    n: int
    analysis: SymbolicAnalysis
    fronts: list
    cut: frozenset
    policy: object
    cores: int
    pivot_tol: float
    delayed: int = 0
    pattern: tuple = field(default=None, repr=False)

    @property
    def col_perm(self) -> Permutation:
        """Original column placed at each pivot position."""
        inv = self.analysis.order.inverse
        return Permutation.from_order(inv[np.concatenate([f.cols[:f.e] for f in self.fronts])])

    @property
    def row_perm(self) -> Permutation:
        inv = self.analysis.order.inverse
        return Permutation.from_order(inv[np.concatenate([f.rows[:f.e] for f in self.fronts])])

    def dense_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (L, U) with ``A[row_order][:, col_order] = L @ U``."""
        n = self.n
        prow = np.concatenate([f.rows[:f.e] for f in self.fronts])
        pcol = np.concatenate([f.cols[:f.e] for f in self.fronts])
        rpos = np.empty(n, dtype=np.int64)
        cpos = np.empty(n, dtype=np.int64)
        rpos[prow] = np.arange(n)
        cpos[pcol] = np.arange(n)
        L = np.eye(n)
        U = np.zeros((n, n))
        g = 0
        for f in self.fronts:
            e = f.e
            if e == 0:
                continue
            gr = rpos[f.rows]
            gc = cpos[f.cols]
            for k in range(e):
                L[gr[k + 1:], g + k] = f.L[k + 1:, k]
                U[g + k, gc[k:]] = f.U[k, k:]
            g += e
        return L, U

    def values_digest(self) -> bytes:
        """Raw bytes of all factor values and pivot sequences, for determinism checks."""
        parts = []
        for f in self.fronts:
            parts += [f.rows[:f.e].tobytes(), f.cols[:f.e].tobytes(), f.L.tobytes(), f.U.tobytes()]
        return b"".join(parts)


class _Factorizer:
    """Numeric state shared by worker threads.

    Contribution buffers are handed from a child frontal to its parent: the
    child's owner writes one entry, the parent's owner pops it after the
    coordinator has seen the child's task finish.
    """

    def __init__(self, an: SymbolicAnalysis, values: np.ndarray, pivot_tol: float,
                 floor: float = PIVOT_FLOOR):
        self.an = an
        self.values = np.ascontiguousarray(values, dtype=float)
        self.tol = pivot_tol
        self.floor = floor
        self.parent = an.tree.shape.parent
        self.children = an.tree.shape.children
        self.fronts: list = [None] * an.n_frontals
        self.contrib: dict = {}
        self.delayed = 0
        self._tls = threading.local()
        self._lock = threading.Lock()
        self._live = 0
        self._peak = 0

    def _scratch(self):
        tls = self._tls
        if not hasattr(tls, "rpos"):
            tls.rpos = np.zeros(self.an.n, dtype=np.int64)
            tls.cpos = np.zeros(self.an.n, dtype=np.int64)
        return tls.rpos, tls.cpos

    def _account(self, delta: int) -> None:
        with self._lock:
            self._live += delta
            if self._live > self._peak:
                self._peak = self._live

    def live_bytes(self) -> int:
        return self._live

    def take_peak(self) -> int:
        with self._lock:
            p, self._peak = self._peak, self._live
        return p

    def frontal(self, f: int) -> None:
        an = self.an
        own = an.partition.frontals[f]
        rest = an.front_rows[f][own.size:]
        kids = self.children[f]
        got = [self.contrib.pop(c) for c in kids]
        d_rows = [g[0][:g[3]] for g in got]
        d_cols = [g[1][:g[3]] for g in got]
        rows = np.concatenate(d_rows + [own, rest])
        cols = np.concatenate(d_cols + [own, rest])
        m = rows.size
        nfs = m - rest.size
        rpos, cpos = self._scratch()
        ar = np.arange(m, dtype=np.int64)
        rpos[rows] = ar
        cpos[cols] = ar
        F = np.zeros((m, m))
        ei, ej, src = an.front_entries[f]
        kernels.scatter_entries(F, rpos[ei], cpos[ej], self.values[src])
        freed = 0
        for crow, ccol, C, _ in got:
            rm, cm = rpos[crow], cpos[ccol]
            if not (np.array_equal(rows[rm], crow) and np.array_equal(cols[cm], ccol)):
                raise RuntimeError(f"frontal {f}: child update outside frontal structure")
            kernels.scatter_add(F, rm, cm, C)
            freed += C.nbytes
        self._account(F.nbytes - freed)
        e = kernels.dense_lu(F, rows, cols, nfs, self.tol, self.floor)
        if e < nfs:
            if self.parent[f] == NONE:
                col = int(an.order.inverse[cols[e]])
                raise SingularMatrixError(col)
            self.delayed += nfs - e
        self.fronts[f] = FrontFactor(rows, cols, e, F[:, :e].copy(), F[:e, :].copy())
        out = 0
        if self.parent[f] != NONE:
            upd = F[e:, e:].copy()
            self.contrib[f] = (rows[e:].copy(), cols[e:].copy(), upd, nfs - e)
            out = upd.nbytes
        self._account(out - F.nbytes)

    def task(self, frontals) -> tuple:
        t0 = time.perf_counter()
        for f in frontals:
            self.frontal(f)
        return t0, time.perf_counter(), self._peak


class ThreadBackend:
    """Runs tasks on a worker pool; times are wall-clock seconds."""

    def __init__(self, fz: _Factorizer, pool: ThreadPoolExecutor):
        self.fz = fz
        self.pool = pool
        self._futs: dict = {}

    def reset(self, tree) -> None:
        self._t0 = time.perf_counter()

    def now(self) -> float:
        return time.perf_counter() - self._t0

    def live_bytes(self) -> int:
        return self.fz.live_bytes()

    def take_peak(self) -> int:
        return self.fz.take_peak()

    def launch(self, task_id, frontals, cut_children, core) -> None:
        self._futs[self.pool.submit(self.fz.task, tuple(frontals))] = task_id

    def wait(self) -> list:
        done, _ = wait(list(self._futs), return_when=FIRST_COMPLETED)
        out = []
        for fut in done:
            tid = self._futs.pop(fut)
            try:
                t0, t1, peak = fut.result()
            except BaseException:
                for other in self._futs:
                    other.cancel()
                wait(list(self._futs))
                raise
            out.append((tid, t0 - self._t0, t1 - self._t0, peak))
        return out


def resolve_policy(policy):
    if policy is None or policy == "static":
        return StaticPolicy()
    if policy == "serial":
        return SerialPolicy()
    if hasattr(policy, "decide"):
        return policy
    from .qlearn import QPolicy, QTable
    if isinstance(policy, QTable):
        return QPolicy(policy)
    raise ValueError(f"unknown policy {policy!r}")


def parallel_factor(a: CscMatrix, analysis: SymbolicAnalysis | None = None, policy="static",
                    cores: int = 1, pivot_tol: float = 1e-3, weights: RewardWeights | None = None,
                    order="amd", relax: int = 4, max_actions: int = MAX_ACTIONS
                    ) -> tuple[LUFactors, ScheduleTrace]:
    """Factor ``a`` on ``cores`` worker threads under a scheduling policy."""
    if cores < 1:
        raise ValueError("cores must be >= 1")
    an = analysis if analysis is not None else analyze(a, order=order, relax=relax)
    if an.n != a.n:
        raise ValueError("analysis does not match matrix")
    pol = resolve_policy(policy)
    fz = _Factorizer(an, a.values, pivot_tol)
    with ThreadPoolExecutor(max_workers=cores) as pool:
        run = ScheduleRun(an.tree, cores, ThreadBackend(fz, pool), weights,
                          max_actions=max_actions)
        while not run.terminal:
            run.step(pol.decide(run.state, run.cores, run.idle))
    lu = LUFactors(a.n, an, fz.fronts, run.state.cut, policy, cores, pivot_tol, fz.delayed,
                   (a.col_ptr, a.row_idx))
    return lu, run.trace


def refactor_same_pattern(lu: LUFactors, a2: CscMatrix) -> LUFactors:
    """Numeric refactorization reusing the analysis, task tree and policy."""
    cp, ri = lu.pattern
    if a2.n != lu.n:
        raise PatternMismatchError(0)
    if not (np.array_equal(cp, a2.col_ptr) and np.array_equal(ri, a2.row_idx)):
        for j in range(lu.n):
            if (cp[j + 1] - cp[j] != a2.col_ptr[j + 1] - a2.col_ptr[j] or cp[j] != a2.col_ptr[j]
                    or not np.array_equal(ri[cp[j]:cp[j + 1]],
                                          a2.row_idx[a2.col_ptr[j]:a2.col_ptr[j + 1]])):
                raise PatternMismatchError(j)
    out, _ = parallel_factor(a2, lu.analysis, lu.policy, lu.cores, lu.pivot_tol)
    return out


# -- solve --------------------------------------------------------------------

def _run_dag(jobs: dict, deps: dict, workers: int) -> None:
    """Run ``jobs[id]()`` once every id in ``deps[id]`` has finished."""
    if workers <= 1:
        pending = dict(deps)
        finished: set = set()
        while pending:
            for t in sorted(pending):
                if all(d in finished for d in pending[t]):
                    jobs[t]()
                    finished.add(t)
                    del pending[t]
                    break
        return
    waiting = {t: set(d) for t, d in deps.items()}
    dependents: dict = {t: [] for t in deps}
    for t, ds in deps.items():
        for d in ds:
            dependents[d].append(t)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = {pool.submit(jobs[t]): t for t in sorted(t for t, d in waiting.items() if not d)}
        while futs:
            done, _ = wait(list(futs), return_when=FIRST_COMPLETED)
            for fut in done:
                t = futs.pop(fut)
                fut.result()
                for s in dependents[t]:
                    waiting[s].discard(t)
                    if not waiting[s]:
                        futs[pool.submit(jobs[s])] = s


def solve(lu: LUFactors, b, cores: int | None = None) -> np.ndarray:
    """Forward then backward substitution over the frontal tasks."""
    b = np.asarray(b, dtype=float)
    if b.shape != (lu.n,):
        raise ValueError("right-hand side length does not match matrix")
    an = lu.analysis
    cores = lu.cores if cores is None else cores
    parent = an.tree.shape.parent
    children = an.tree.shape.children
    own = an.partition.frontals
    bp = np.empty(lu.n)
    bp[an.order.perm] = b
    xp = np.empty(lu.n)
    y: list = [None] * len(lu.fronts)
    wc: dict = {}
    tls = threading.local()

    def scratch():
        if not hasattr(tls, "pos"):
            tls.pos = np.zeros(lu.n, dtype=np.int64)
        return tls.pos

    def forward(f):
        ff = lu.fronts[f]
        pos = scratch()
        m = ff.rows.size
        pos[ff.rows] = np.arange(m)
        w = np.zeros(m)
        w[pos[own[f]]] += bp[own[f]]
        for c in children[f]:
            crow, cw = wc.pop(c)
            w[pos[crow]] += cw
        kernels.front_forward(ff.L, w)
        y[f] = w[:ff.e].copy()
        if parent[f] != NONE:
            wc[f] = (ff.rows[ff.e:], w[ff.e:].copy())

    def backward(f):
        ff = lu.fronts[f]
        x = np.empty(ff.cols.size)
        x[:ff.e] = y[f]
        x[ff.e:] = xp[ff.cols[ff.e:]]
        kernels.front_backward(ff.U, x)
        xp[ff.cols[:ff.e]] = x[:ff.e]

    state = TaskTree(an.tree.shape, lu.cut)
    tasks = state.tasks
    root = state.task_root
    fdeps = {r: [c for c in state.child_tasks[r]] for r in tasks}
    bdeps = {r: ([root[parent[r]]] if parent[r] != NONE else []) for r in tasks}

    def fjob(r):
        return lambda: [forward(f) for f in tasks[r]]

    def bjob(r):
        return lambda: [backward(f) for f in reversed(tasks[r])]

    _run_dag({r: fjob(r) for r in tasks}, fdeps, cores)
    _run_dag({r: bjob(r) for r in tasks}, bdeps, cores)
    return xp[an.order.perm]
