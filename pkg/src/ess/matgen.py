"""Synthetic matrices with the layout of a unified dynamic-simulation Jacobian.

Columns ``[0, nA)`` hold independent equipment blocks (sub-matrix A), the
trailing ``network_size`` columns hold the network (sub-matrix D), and a few
coupling entries per block link equipment variables to buses (B and C).
Values are random with each diagonal set to twice its row's off-diagonal
magnitude sum, so every generated matrix is strictly diagonally dominant.

Spec file (JSON)::

    {"templates": [{"size": 4, "pattern": "dense", "values": [0.5, 2.0]}, ...],
     "counts": [50, ...],
     "network_size": 100,
     "coupling_density": 0.1,
     "seed": 0,
     "ratio": [3, 5]}            # optional nA / network_size bounds

``pattern`` is one of ``dense``, ``tridiag``, ``arrow`` or an explicit list
of ``[i, j]`` local pairs (symmetrized; must be connected).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockMap
from .sparse import CscMatrix, from_coo

NAMED_PATTERNS = ("dense", "tridiag", "arrow")


@dataclass(frozen=True)
class BlockTemplate:
    size: int
    pattern: object = "dense"
    values: tuple = (0.5, 2.0)

    def pairs(self) -> list:
        s = self.size
        if self.pattern == "dense":
            pr = [(i, j) for i in range(s) for j in range(s) if i != j]
        elif self.pattern == "tridiag":
            pr = [(i, i + 1) for i in range(s - 1)]
        elif self.pattern == "arrow":
            pr = [(0, i) for i in range(1, s)]
        elif isinstance(self.pattern, str):
            raise ValueError(f"unknown pattern {self.pattern!r}")
        else:
            pr = [(int(i), int(j)) for i, j in self.pattern if i != j]
            if any(not (0 <= i < s and 0 <= j < s) for i, j in pr):
                raise ValueError("template pair outside block")
        sym = sorted({(i, j) for i, j in pr} | {(j, i) for i, j in pr})
        if not _connected(s, sym):
            raise ValueError(f"template pattern of size {s} is not connected")
        return sym


def _connected(size: int, pairs) -> bool:
    adj = [[] for _ in range(size)]
    for i, j in pairs:
        adj[i].append(j)
    seen = {0}
    stack = [0]
    while stack:
        for u in adj[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == size


@dataclass(frozen=True)
class GenSpec:
    block_templates: list
    block_counts: list
    network_size: int = 0
    coupling_density: float = 0.1
    seed: int = 0
    ratio: tuple | None = None
    network_values: tuple = (0.5, 2.0)
    extra: dict = field(default_factory=dict)

    @property
    def block_rank(self) -> int:
        return sum(t.size * c for t, c in zip(self.block_templates, self.block_counts))

    def validate(self) -> None:
        if len(self.block_templates) != len(self.block_counts):
            raise ValueError("one count per template required")
        if any(t.size < 1 for t in self.block_templates):
            raise ValueError("template sizes must be >= 1")
        if any(c < 0 for c in self.block_counts) or self.network_size < 0:
            raise ValueError("counts and network size must be non-negative")
        if not 0.0 < self.coupling_density <= 1.0:
            raise ValueError("coupling_density must lie in (0, 1]")
        if self.block_rank + self.network_size < 1:
            raise ValueError("empty matrix")
        if self.ratio is not None and self.network_size > 0:
            r = self.block_rank / self.network_size
            lo, hi = self.ratio
            if not lo <= r <= hi:
                raise ValueError(f"block/network rank ratio {r:.2f} outside [{lo}, {hi}]")

    @classmethod
    def from_dict(cls, d: dict) -> GenSpec:
        temps = [BlockTemplate(int(t["size"]), t.get("pattern", "dense"),
                               tuple(t.get("values", (0.5, 2.0)))) for t in d["templates"]]
        ratio = tuple(d["ratio"]) if d.get("ratio") is not None else None
        return cls(temps, [int(c) for c in d["counts"]], int(d.get("network_size", 0)),
                   float(d.get("coupling_density", 0.1)), int(d.get("seed", 0)), ratio)

    @classmethod
    def load(cls, path) -> GenSpec:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _network_edges(nd: int, rng: np.random.Generator) -> list:
    """Grid with random vertical links and a few chords (mean degree 2-4)."""
    if nd < 2:
        return []
    w = max(1, math.ceil(math.sqrt(nd)))
    edges = set()
    for i in range(nd):
        r, c = divmod(i, w)
        if c + 1 < w and i + 1 < nd:
            edges.add((i, i + 1))
        if i + w < nd and (c == 0 or rng.random() < 0.5):
            edges.add((i, i + w))
    for _ in range(max(1, nd // 10)):
        i, j = (int(x) for x in rng.integers(nd, size=2))
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return sorted(edges)


def generate(spec: GenSpec) -> tuple[CscMatrix, BlockMap]:
    """Return the matrix and its ground-truth block map."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    kinds = np.repeat(np.arange(len(spec.block_templates)), spec.block_counts)
    kinds = kinds[rng.permutation(kinds.size)]
    na = spec.block_rank
    nd = spec.network_size
    n = na + nd

    rows, cols, mags = [], [], []

    def link(i, j, lo, hi):
        rows.append(i)
        cols.append(j)
        mags.append(rng.uniform(lo, hi))

    blocks = []
    off = 0
    for k in kinds.tolist():
        t = spec.block_templates[k]
        lo, hi = t.values
        for i, j in t.pairs():
            link(off + i, off + j, lo, hi)
        if nd:
            nlinks = max(1, round(spec.coupling_density * t.size))
            vars_ = rng.choice(t.size, size=nlinks, replace=False)
            for v in sorted(vars_.tolist()):
                bus = na + int(rng.integers(nd))
                link(off + v, bus, lo, hi)
                link(bus, off + v, lo, hi)
        blocks.append(np.arange(off, off + t.size, dtype=np.int64))
        off += t.size
    lo, hi = spec.network_values
    for i, j in _network_edges(nd, rng):
        link(na + i, na + j, lo, hi)
        link(na + j, na + i, lo, hi)

    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(mags) * rng.choice([-1.0, 1.0], size=len(mags))
    a = from_coo(n, rows, cols, vals)
    rowsum = np.bincount(a.row_idx, weights=np.abs(a.values), minlength=n)
    diag = np.where(rowsum > 0, 2.0 * rowsum, rng.uniform(lo, hi, size=n))
    a = from_coo(n, np.concatenate([a.row_idx, np.arange(n)]),
                 np.concatenate([a.col_indices(), np.arange(n)]),
                 np.concatenate([a.values, diag]))
    return a, BlockMap(blocks, np.arange(na, n, dtype=np.int64))


def revalue(a: CscMatrix, seed: int) -> CscMatrix:
    """Same pattern, fresh off-diagonal values, diagonal dominance restored."""
    rng = np.random.default_rng(seed)
    cols = a.col_indices()
    off = a.row_idx != cols
    vals = a.values.copy()
    vals[off] *= rng.uniform(0.5, 1.5, size=int(off.sum()))
    rowsum = np.bincount(a.row_idx[off], weights=np.abs(vals[off]), minlength=a.n)
    d = ~off
    vals[d] = np.where(rowsum[a.row_idx[d]] > 0, 2.0 * rowsum[a.row_idx[d]], vals[d])
    return a.with_values(vals)


def power_system_spec(n_target: int, seed: int = 0, n_templates: int = 3) -> GenSpec:
    """A mixed-template spec whose dimension is close to ``n_target``.

    Equipment blocks take four fifths of the dimension (a 4:1 block/network
    rank ratio).
    """
    rng = np.random.default_rng(seed)
    sizes = sorted(rng.choice(np.arange(3, 9), size=n_templates, replace=False).tolist())
    pats = ["dense", "tridiag", "arrow"]
    temps = [BlockTemplate(s, pats[i % 3]) for i, s in enumerate(sizes)]
    nd = max(1, n_target // 5)
    na = n_target - nd
    share = rng.dirichlet(np.ones(n_templates))
    counts = [max(1, int(round(na * w / t.size))) for w, t in zip(share, temps)]
    return GenSpec(temps, counts, nd, 0.15, seed)
