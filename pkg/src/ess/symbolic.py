"""Ordering, elimination tree, fill pattern and frontal detection.

All routines work on the structurally symmetrized pattern (A + A^T).
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .sparse import CscMatrix, Permutation, permute_with_map

NONE = -1

# Instrumentation: how many local symbolic analyses each code path ran.
COUNTERS: Counter = Counter()


@dataclass(frozen=True)
class EliminationTree:
    parent: np.ndarray

    @property
    def n(self) -> int:
        return int(self.parent.size)

    def children(self) -> list[list[int]]:
        ch = [[] for _ in range(self.n)]
        for j, p in enumerate(self.parent.tolist()):
            if p != NONE:
                ch[p].append(j)
        return ch

    def height(self) -> int:
        depth = np.zeros(self.n, dtype=np.int64)
        for j in range(self.n - 1, -1, -1):
            p = self.parent[j]
            if p != NONE:
                depth[j] = depth[p] + 1
        return int(depth.max()) + 1 if self.n else 0


@dataclass(frozen=True)
class FillPattern:
    """Sorted row structure of every column of L, diagonal first."""

    cols: list

    @property
    def nnz(self) -> int:
        return sum(c.size for c in self.cols)

    def fill_count(self, a: CscMatrix) -> int:
        """Entries of L absent from the lower triangle of sym(A)."""
        s = a.symmetric_pattern()
        lower = int(np.count_nonzero(s.row_idx >= s.col_indices()))
        return self.nnz - lower


@dataclass(frozen=True)
class FrontalPartition:
    frontals: list
    frontal_of: np.ndarray

    def __len__(self):
        return len(self.frontals)


# -- ordering -----------------------------------------------------------------

def _adjacency(a: CscMatrix) -> list[set]:
    s = a.symmetric_pattern()
    adj = []
    for j in range(s.n):
        rows = s.row_idx[s.col_ptr[j]:s.col_ptr[j + 1]].tolist()
        st = set(rows)
        st.discard(j)
        adj.append(st)
    return adj


def min_degree_order(a: CscMatrix) -> Permutation:
    """Minimum degree ordering on the pattern of A + A^T.

    Vertices with identical closed neighbourhoods are compressed into
    supervariables first, then eliminated by exact (weighted) degree with
    ties broken on the smallest original index.
    """
    n = a.n
    adj = _adjacency(a)
    groups: dict = {}
    for v in range(n):
        key = tuple(sorted(adj[v] | {v}))
        groups.setdefault(key, []).append(v)
    sv_of = np.empty(n, dtype=np.int64)
    members = []
    for mem in sorted(groups.values(), key=lambda m: m[0]):
        sv_of[mem] = len(members)
        members.append(mem)
    ns = len(members)
    weight = [len(m) for m in members]
    sadj = []
    for s, mem in enumerate(members):
        nb = {int(sv_of[u]) for u in adj[mem[0]]}
        nb.discard(s)
        sadj.append(nb)

    def degree(s):
        return weight[s] - 1 + sum(weight[t] for t in sadj[s])

    deg = [degree(s) for s in range(ns)]
    heap = [(deg[s], members[s][0], s) for s in range(ns)]
    heapq.heapify(heap)
    alive = [True] * ns
    order = []
    while heap:
        d, _, s = heapq.heappop(heap)
        if not alive[s] or d != deg[s]:
            continue
        alive[s] = False
        order.extend(members[s])
        nb = sadj[s]
        for t in nb:
            at = sadj[t]
            at.discard(s)
            at |= nb
            at.discard(t)
        for t in nb:
            deg[t] = degree(t)
            heapq.heappush(heap, (deg[t], members[t][0], t))
        sadj[s] = set()
    return Permutation.from_order(order)


def order_for(a: CscMatrix, order) -> Permutation:
    if isinstance(order, Permutation):
        if len(order) != a.n:
            raise ValueError("ordering length does not match matrix")
        return order
    if order in ("amd", "md", "mindeg"):
        return min_degree_order(a)
    if order == "natural":
        return Permutation.identity(a.n)
    raise ValueError(f"unknown ordering {order!r}")


# -- tree and fill ------------------------------------------------------------

def elimination_tree(a: CscMatrix) -> EliminationTree:
    """Elimination tree of the symmetrized pattern (Liu's algorithm)."""
    s = a.symmetric_pattern()
    n = s.n
    parent = [NONE] * n
    ancestor = [NONE] * n
    cp, ri = s.col_ptr.tolist(), s.row_idx.tolist()
    for k in range(n):
        for i in ri[cp[k]:cp[k + 1]]:
            while i != NONE and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == NONE:
                    parent[i] = k
                i = nxt
    return EliminationTree(np.array(parent, dtype=np.int64))


def _column_structs(s: CscMatrix, cols, struct: list, children: list) -> None:
    """Column recurrence struct(j) = {j} + adj_>(j) + union of child structs.

    ``children`` lists are extended as parents are discovered.
    """
    cp, ri = s.col_ptr, s.row_idx
    for j in cols:
        rows = ri[cp[j]:cp[j + 1]]
        parts = [rows[rows >= j]]
        for c in children[j]:
            parts.append(struct[c][1:])
        st = np.unique(np.concatenate(parts)) if len(parts) > 1 else parts[0]
        if st.size == 0 or st[0] != j:
            st = np.union1d(st, [j])
        struct[j] = st.astype(np.int64)
        if st.size > 1:
            children[int(st[1])].append(j)


def symbolic_fill(a: CscMatrix, t: EliminationTree) -> FillPattern:
    """Exact structure of L (no numerical cancellation)."""
    if t.n != a.n:
        raise ValueError("elimination tree does not match matrix")
    s = a.symmetric_pattern()
    n = a.n
    struct: list = [None] * n
    children: list = [[] for _ in range(n)]
    _column_structs(s, range(n), struct, children)
    for j in range(n):
        expect = int(struct[j][1]) if struct[j].size > 1 else NONE
        if expect != t.parent[j]:
            raise ValueError(f"elimination tree inconsistent with matrix at column {j}")
    return FillPattern(struct)


def tree_from_fill(f: FillPattern) -> EliminationTree:
    return EliminationTree(np.array([int(c[1]) if c.size > 1 else NONE for c in f.cols],
                                    dtype=np.int64))


# -- frontals -----------------------------------------------------------------

def detect_frontals(f: FillPattern, t: EliminationTree, relax: int = 4) -> FrontalPartition:
    """Greedily merge column j+1 into j's frontal when j+1 is j's parent and
    merging adds at most ``relax`` explicit zeros to column j."""
    if relax < 0:
        raise ValueError("relax must be >= 0")
    n = t.n
    frontals = []
    frontal_of = np.empty(n, dtype=np.int64)
    j = 0
    while j < n:
        start = j
        while (j + 1 < n and t.parent[j] == j + 1
               and np.setdiff1d(f.cols[j + 1], f.cols[j], assume_unique=True).size <= relax):
            j += 1
        frontal_of[start:j + 1] = len(frontals)
        frontals.append(np.arange(start, j + 1, dtype=np.int64))
        j += 1
    return FrontalPartition(frontals, frontal_of)


def frontal_parents(p: FrontalPartition, t: EliminationTree) -> np.ndarray:
    parents = np.full(len(p), NONE, dtype=np.int64)
    for k, cols in enumerate(p.frontals):
        for c in cols.tolist():
            q = t.parent[c]
            if q != NONE and p.frontal_of[q] != k:
                if parents[k] not in (NONE, p.frontal_of[q]):
                    raise ValueError(f"frontal {k} has columns with different parents")
                parents[k] = p.frontal_of[q]
    return parents


def column_workload(f: FillPattern) -> np.ndarray:
    return np.array([c.size ** 2 for c in f.cols], dtype=np.int64)


def build_task_tree(p: FrontalPartition, t: EliminationTree, f: FillPattern):
    """Frontal-level elimination tree T0 with an empty cut set."""
    from .sched import TaskTree

    if t.n != len(f.cols) or p.frontal_of.size != t.n:
        raise ValueError("inconsistent symbolic inputs")
    cw = column_workload(f)
    work = np.array([int(cw[cols].sum()) for cols in p.frontals], dtype=np.int64)
    return TaskTree.initial(frontal_parents(p, t), work)


def frontal_flops(m: int, e: int) -> int:
    """Multiply-adds plus divisions for eliminating e pivots of an m x m frontal."""
    k = np.arange(e)
    r = m - k - 1
    return int(np.sum(r + 2 * r * r))


# -- full analysis ------------------------------------------------------------

@dataclass
class SymbolicAnalysis:
    """Everything the numeric phase needs, in the permuted index space."""

    n: int
    order: Permutation
    pattern: CscMatrix          # permuted matrix (values of the analyzed input)
    src: np.ndarray             # pattern.values == a.values[src]
    etree: EliminationTree
    fill: FillPattern
    partition: FrontalPartition
    tree: object                # TaskTree T0
    front_rows: list            # sorted structure rows per frontal (own columns first)
    front_entries: list         # per frontal: (rows, cols, index into a.values)
    relax: int
    stats: dict = field(default_factory=dict)

    @property
    def n_frontals(self) -> int:
        return len(self.partition)


def analyze(a: CscMatrix, order="amd", relax: int = 4, blocks=None, reuse: bool = True
            ) -> SymbolicAnalysis:
    """Order, build the elimination tree and fill, detect frontals and T0.

    With ``blocks`` (a BlockMap) the block-diagonal region is analyzed once
    per distinct block structure (or once per block when ``reuse`` is off).
    """
    if blocks is not None:
        from .blocks import block_symbolic, reuse_plan
        plan = reuse_plan(a, blocks) if reuse else None
        perm, etree, fill = block_symbolic(a, blocks, plan)
        ap, src = permute_with_map(a, perm, perm)
    else:
        perm = order_for(a, order)
        ap, src = permute_with_map(a, perm, perm)
        etree = elimination_tree(ap)
        fill = symbolic_fill(ap, etree)
    part = detect_frontals(fill, etree, relax)
    tree = build_task_tree(part, etree, fill)

    front_rows = []
    for cols in part.frontals:
        rows = np.unique(np.concatenate([fill.cols[c] for c in cols.tolist()]))
        rest = rows[rows > cols[-1]]
        front_rows.append(np.concatenate([cols, rest]))

    prow, pcol = ap.row_idx, ap.col_indices()
    owner = part.frontal_of[np.minimum(prow, pcol)]
    by_front = np.argsort(owner, kind="stable")
    bounds = np.searchsorted(owner[by_front], np.arange(len(part) + 1))
    front_entries = []
    for k in range(len(part)):
        sel = by_front[bounds[k]:bounds[k + 1]]
        front_entries.append((prow[sel], pcol[sel], src[sel]))

    stats = {
        "flops": int(sum(frontal_flops(len(r), len(c)) for r, c in zip(front_rows, part.frontals))),
        "n": a.n,
        "nnz": a.nnz,
        "fill": fill.fill_count(ap),
        "nnz_l": fill.nnz,
        "frontals": len(part),
        "tree_height": tree.height(),
        "workloads": tree.work.tolist(),
    }
    return SymbolicAnalysis(a.n, perm, ap, src, etree, fill, part, tree, front_rows,
                            front_entries, relax, stats)
