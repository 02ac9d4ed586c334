"""Independent diagonal blocks of the equipment region and symbolic reuse.

Blocks are the connected components of the symmetrized pattern restricted
to the leading ``n - border`` columns; the trailing columns (network and
coupling equations) form the border.  Blocks whose local patterns coincide
after shifting to a common origin share one symbolic analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import CscMatrix, Permutation, from_coo
from .symbolic import (COUNTERS, NONE, EliminationTree, FillPattern, _column_structs,
                       elimination_tree, min_degree_order, symbolic_fill)

_MASK = (1 << 64) - 1
_BASE = 1_000_003


@dataclass(frozen=True)
class BlockMap:
    blocks: list          # sorted column arrays, one per block
    coupling: np.ndarray  # border columns

    def to_dict(self) -> dict:
        return {"blocks": [b.tolist() for b in self.blocks], "coupling": self.coupling.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> BlockMap:
        return cls([np.asarray(b, dtype=np.int64) for b in d["blocks"]],
                   np.asarray(d["coupling"], dtype=np.int64))

    def check_independent(self, a: CscMatrix) -> bool:
        owner = np.full(a.n, -1, dtype=np.int64)
        for k, b in enumerate(self.blocks):
            owner[b] = k
        ro, co = owner[a.row_idx], owner[a.col_indices()]
        both = (ro >= 0) & (co >= 0)
        return bool(np.all(ro[both] == co[both]))


@dataclass(frozen=True)
class ReusePlan:
    representative: list   # block index -> structure id
    groups: dict           # structure id -> member block indices (first one is analyzed)
    hashes: dict           # structure id -> 64-bit digest

    @property
    def n_groups(self) -> int:
        return len(self.groups)


def find_diagonal_blocks(a: CscMatrix, border_hint: int = 0) -> BlockMap:
    n = a.n
    if not 0 <= border_hint < n:
        raise ValueError("border_hint must satisfy 0 <= border_hint < n")
    m = n - border_hint
    rows, cols = a.row_idx, a.col_indices()
    inside = (rows < m) & (cols < m)
    # union-find over the leading block region
    par = np.arange(m)

    def find(x):
        while par[x] != x:
            par[x] = par[par[x]]
            x = par[x]
        return x

    for i, j in zip(rows[inside].tolist(), cols[inside].tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            if ri < rj:
                par[rj] = ri
            else:
                par[ri] = rj
    roots = np.array([find(x) for x in range(m)], dtype=np.int64)
    blocks = []
    for r in np.unique(roots):
        blocks.append(np.flatnonzero(roots == r).astype(np.int64))
    blocks.sort(key=lambda b: b[0])
    return BlockMap(blocks, np.arange(m, n, dtype=np.int64))


def _local_pattern(a: CscMatrix, block) -> tuple:
    """Block-internal pattern as (col, row) pairs in local coordinates."""
    block = np.asarray(block, dtype=np.int64)
    local = np.full(a.n, -1, dtype=np.int64)
    local[block] = np.arange(block.size)
    out = []
    for lc, c in enumerate(block.tolist()):
        r = a.row_idx[a.col_ptr[c]:a.col_ptr[c + 1]]
        lr = local[r]
        out.extend((lc, int(x)) for x in lr[lr >= 0].tolist())
    return (block.size, tuple(out))


def structure_hash(a: CscMatrix, block) -> int:
    """64-bit polynomial digest of the block-local pattern."""
    size, pairs = _local_pattern(a, block)
    h = size & _MASK
    for c, r in pairs:
        h = (h * _BASE + c + 1) & _MASK
        h = (h * _BASE + r + 1) & _MASK
    return h


def reuse_plan(a: CscMatrix, m: BlockMap) -> ReusePlan:
    buckets: dict = {}      # digest -> list of (structure id, pattern)
    rep: list = []
    groups: dict = {}
    hashes: dict = {}
    for k, b in enumerate(m.blocks):
        pat = _local_pattern(a, b)
        h = structure_hash(a, b)
        sid = None
        for cand_id, cand_pat in buckets.get(h, []):
            if cand_pat == pat:
                sid = cand_id
                break
        if sid is None:
            sid = len(groups)
            buckets.setdefault(h, []).append((sid, pat))
            groups[sid] = []
            hashes[sid] = h
        groups[sid].append(k)
        rep.append(sid)
    return ReusePlan(rep, groups, hashes)


def _submatrix(a: CscMatrix, idx) -> CscMatrix:
    idx = np.asarray(idx, dtype=np.int64)
    local = np.full(a.n, -1, dtype=np.int64)
    local[idx] = np.arange(idx.size)
    r, c = local[a.row_idx], local[a.col_indices()]
    keep = (r >= 0) & (c >= 0)
    return from_coo(idx.size, r[keep], c[keep], a.values[keep])


def _local_symbolic(sym: CscMatrix, block) -> tuple:
    """Ordering, tree and fill of one block in local coordinates."""
    COUNTERS["block_region"] += 1
    sub = _submatrix(sym, block)
    order = min_degree_order(sub)
    lp = from_coo(sub.n, order.perm[sub.row_idx], order.perm[sub.col_indices()], sub.values)
    t = elimination_tree(lp)
    f = symbolic_fill(lp, t)
    return order.inverse, t, f


def block_symbolic(a: CscMatrix, m: BlockMap, plan: ReusePlan | None = None):
    """Global (ordering, tree, fill) with blocks first, then the border.

    Each block's local analysis comes from its group representative when a
    plan is given, otherwise every block is analyzed on its own.  Border
    columns are ordered by minimum degree on their pattern plus the clique
    each eliminated block leaves behind.
    """
    if not m.check_independent(a):
        raise ValueError("block map violates independence")
    n = a.n
    sym = a.symmetric_pattern()
    local = []
    if plan is None:
        local = [_local_symbolic(sym, b) for b in m.blocks]
    else:
        done = {sid: _local_symbolic(sym, m.blocks[mem[0]]) for sid, mem in plan.groups.items()}
        local = [done[plan.representative[k]] for k in range(len(m.blocks))]

    # border ordering
    border = m.coupling
    bpos = np.full(n, -1, dtype=np.int64)
    bpos[border] = np.arange(border.size)
    rr, cc = sym.row_idx, sym.col_indices()
    sel = (bpos[rr] >= 0) & (bpos[cc] >= 0)
    er, ec = [bpos[rr[sel]]], [bpos[cc[sel]]]
    owner = np.full(n, -1, dtype=np.int64)
    for k, b in enumerate(m.blocks):
        owner[b] = k
    link = (owner[cc] >= 0) & (bpos[rr] >= 0)
    pairs = np.unique(np.stack([owner[cc[link]], bpos[rr[link]]], axis=1), axis=0)
    if pairs.size:
        splits = np.flatnonzero(np.diff(pairs[:, 0])) + 1
        for lb in np.split(pairs[:, 1], splits):
            if lb.size > 1:
                er.append(np.repeat(lb, lb.size))
                ec.append(np.tile(lb, lb.size))
    if border.size:
        er_, ec_ = np.concatenate(er), np.concatenate(ec)
        red = from_coo(border.size, er_, ec_, np.ones(er_.size))
        border_order = border[min_degree_order(red).inverse]
    else:
        border_order = border

    order = np.concatenate([b[lo] for b, (lo, _, _) in zip(m.blocks, local)] + [border_order])
    perm = Permutation.from_order(order)
    ap = from_coo(n, perm.perm[sym.row_idx], perm.perm[sym.col_indices()], sym.values)

    struct: list = [None] * n
    children: list = [[] for _ in range(n)]
    nblock = n - border.size
    off = 0
    for b, (_, t, f) in zip(m.blocks, local):
        size = b.size
        kids = t.children()
        for j in range(size):
            g = off + j
            rows = ap.row_idx[ap.col_ptr[g]:ap.col_ptr[g + 1]]
            outer = [rows[rows >= nblock]]
            for c in kids[j]:
                outer.append(struct[off + c][struct[off + c] >= nblock])
            cpl = np.unique(np.concatenate(outer)) if len(outer) > 1 else outer[0]
            st = np.concatenate([f.cols[j] + off, cpl]).astype(np.int64)
            struct[g] = st
            if st.size > 1:
                children[int(st[1])].append(g)
        off += size
    _column_structs(ap, range(nblock, n), struct, children)
    fill = FillPattern(struct)
    parent = np.array([int(s[1]) if s.size > 1 else NONE for s in struct], dtype=np.int64)
    return perm, EliminationTree(parent), fill
