"""Compressed sparse column storage, permutations and Matrix Market I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MatrixMarketError(ValueError):
    pass


@dataclass(frozen=True)
class CscMatrix:
    """Square matrix in compressed sparse column form.

    Row indices inside every column are strictly increasing; ``col_ptr``
    has ``n + 1`` entries with ``col_ptr[n] == nnz``.
    """

    n: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.col_ptr[-1])

    def validate(self) -> None:
        n = self.n
        cp, ri = self.col_ptr, self.row_idx
        if cp.shape != (n + 1,) or cp[0] != 0:
            raise ValueError("col_ptr must have length n+1 and start at 0")
        if np.any(np.diff(cp) < 0):
            raise ValueError("col_ptr must be nondecreasing")
        if ri.shape != (cp[-1],) or self.values.shape != (cp[-1],):
            raise ValueError("row_idx/values length must equal nnz")
        if ri.size and (ri.min() < 0 or ri.max() >= n):
            raise ValueError("row index out of range")
        for j in range(n):
            seg = ri[cp[j]:cp[j + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise ValueError(f"column {j}: row indices not strictly increasing")

    def col_indices(self) -> np.ndarray:
        """Column index of every stored entry."""
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.col_ptr))

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.row_idx[lo:hi], self.values[lo:hi]

    def to_dense(self) -> np.ndarray:
        d = np.zeros((self.n, self.n))
        d[self.row_idx, self.col_indices()] = self.values
        return d

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.bincount(self.row_idx, weights=self.values * x[self.col_indices()],
                           minlength=self.n)

    def transpose(self) -> CscMatrix:
        return from_coo(self.n, self.col_indices(), self.row_idx, self.values)

    def same_pattern(self, other: CscMatrix) -> bool:
        return (self.n == other.n and np.array_equal(self.col_ptr, other.col_ptr)
                and np.array_equal(self.row_idx, other.row_idx))

    def with_values(self, values: np.ndarray) -> CscMatrix:
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError("values length must equal nnz")
        return CscMatrix(self.n, self.col_ptr, self.row_idx, values)

    def symmetric_pattern(self) -> CscMatrix:
        """Pattern of A + A^T (values are all ones, diagonal always present)."""
        n = self.n
        cols = self.col_indices()
        rows = np.concatenate([self.row_idx, cols, np.arange(n)])
        cs = np.concatenate([cols, self.row_idx, np.arange(n)])
        return from_coo(n, rows, cs, np.ones(rows.size))


def from_coo(n: int, rows, cols, values) -> CscMatrix:
    """Build a CscMatrix from coordinates, summing duplicates."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if not (rows.shape == cols.shape == values.shape):
        raise ValueError("coordinate arrays must have equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise ValueError("coordinate out of bounds")
    key = cols * n + rows
    order = np.argsort(key, kind="stable")
    key = key[order]
    uniq, start = np.unique(key, return_index=True)
    summed = np.add.reduceat(values[order], start) if key.size else np.zeros(0)
    ucols = uniq // n if n else uniq
    urows = uniq % n if n else uniq
    col_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(col_ptr, ucols + 1, 1)
    np.cumsum(col_ptr, out=col_ptr)
    return CscMatrix(n, col_ptr, urows.astype(np.int64), summed.astype(float))


def from_dense(d: np.ndarray) -> CscMatrix:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("matrix must be square")
    r, c = np.nonzero(d)
    return from_coo(d.shape[0], r, c, d[r, c])


@dataclass(frozen=True)
class Permutation:
    """Bijection on [0, n): ``perm[old] = new`` and ``inverse[new] = old``."""

    perm: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        n = self.perm.size
        if self.inverse.size != n or not np.array_equal(self.inverse[self.perm], np.arange(n)):
            raise ValueError("not a bijection")

    @classmethod
    def from_perm(cls, perm) -> Permutation:
        perm = np.asarray(perm, dtype=np.int64)
        n = perm.size
        if n and (perm.min() < 0 or perm.max() >= n or np.unique(perm).size != n):
            raise ValueError("not a bijection")
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n)
        return cls(perm, inv)

    @classmethod
    def from_order(cls, order) -> Permutation:
        """``order[k]`` is the old index placed at position k."""
        order = np.asarray(order, dtype=np.int64)
        p = cls.from_perm(order)
        return cls(p.inverse, p.perm)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        a = np.arange(n, dtype=np.int64)
        return cls(a, a.copy())

    def __len__(self):
        return int(self.perm.size)

    def invert(self) -> Permutation:
        return Permutation(self.inverse, self.perm)


def permute(a: CscMatrix, p: Permutation, q: Permutation) -> CscMatrix:
    """Return B with ``B[p[i], q[j]] = A[i, j]``."""
    if len(p) != a.n or len(q) != a.n:
        raise ValueError("permutation length does not match matrix")
    return from_coo(a.n, p.perm[a.row_idx], q.perm[a.col_indices()], a.values)


def permute_with_map(a: CscMatrix, p: Permutation, q: Permutation) -> tuple[CscMatrix, np.ndarray]:
    """Like permute, also returning ``src`` so that ``B.values == A.values[src]``."""
    b = permute(a, p, q)
    rows, cols = p.perm[a.row_idx], q.perm[a.col_indices()]
    key = cols * a.n + rows
    src = np.argsort(key, kind="stable")
    return b, src


def residual_norm(a: CscMatrix, x, b) -> float:
    """Scaled residual ||Ax-b||_inf / (||A||_inf ||x||_inf + ||b||_inf)."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if x.shape != (a.n,) or b.shape != (a.n,):
        raise ValueError("vector length does not match matrix")
    r = a.matvec(x) - b
    num = np.abs(r).max() if a.n else 0.0
    if num == 0.0:
        return 0.0
    a_inf = np.bincount(a.row_idx, weights=np.abs(a.values), minlength=a.n).max()
    return float(num / (a_inf * np.abs(x).max() + np.abs(b).max()))


# -- Matrix Market -----------------------------------------------------------

def _header(lines, path):
    try:
        head = next(lines)
    except StopIteration:
        raise MatrixMarketError(f"{path}: empty file") from None
    tok = head.strip().split()
    if len(tok) != 5 or tok[0].lower() != "%%matrixmarket" or tok[1].lower() != "matrix":
        raise MatrixMarketError(f"{path}: malformed header {head.strip()!r}")
    fmt, field, sym = (t.lower() for t in tok[2:])
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"{path}: unsupported format {fmt!r}")
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"{path}: unsupported field {field!r}")
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(f"{path}: unsupported symmetry {sym!r}")
    return fmt, sym


def _data_lines(lines):
    for ln in lines:
        s = ln.strip()
        if s and not s.startswith("%"):
            yield s


def load_matrix_market(path) -> CscMatrix:
    """Read a square real coordinate Matrix Market file."""
    path = Path(path)
    with open(path) as fh:
        lines = iter(fh)
        fmt, sym = _header(lines, path)
        if fmt != "coordinate":
            raise MatrixMarketError(f"{path}: expected coordinate format")
        body = _data_lines(lines)
        try:
            m, n, nnz = (int(t) for t in next(body).split())
        except (StopIteration, ValueError):
            raise MatrixMarketError(f"{path}: malformed size line") from None
        if m != n:
            raise MatrixMarketError(f"{path}: matrix is not square ({m}x{n})")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        k = 0
        for s in body:
            if k >= nnz:
                raise MatrixMarketError(f"{path}: more entries than declared")
            tok = s.split()
            try:
                i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
            except (IndexError, ValueError):
                raise MatrixMarketError(f"{path}: malformed entry {s!r}") from None
            if not (1 <= i <= n and 1 <= j <= n):
                raise MatrixMarketError(f"{path}: entry ({i},{j}) out of bounds")
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"{path}: expected {nnz} entries, found {k}")
    if sym == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return from_coo(n, rows, cols, vals)


def save_matrix_market(a: CscMatrix, path) -> None:
    cols = a.col_indices()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{a.n} {a.n} {a.nnz}\n")
        for i, j, v in zip(a.row_idx.tolist(), cols.tolist(), a.values.tolist()):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def load_vector(path) -> np.ndarray:
    """Read a dense vector stored as an ``array`` file or an n x 1 coordinate file."""
    path = Path(path)
    with open(path) as fh:
        lines = iter(fh)
        fmt, _ = _header(lines, path)
        body = _data_lines(lines)
        try:
            size = [int(t) for t in next(body).split()]
        except (StopIteration, ValueError):
            raise MatrixMarketError(f"{path}: malformed size line") from None
        if size[1] != 1:
            raise MatrixMarketError(f"{path}: expected a single column")
        x = np.zeros(size[0])
        if fmt == "array":
            vals = [float(s.split()[0]) for s in body]
            if len(vals) != size[0]:
                raise MatrixMarketError(f"{path}: expected {size[0]} values")
            x[:] = vals
        else:
            for s in body:
                i, _, v = s.split()[:3]
                x[int(i) - 1] += float(v)
    return x


def save_vector(x, path) -> None:
    x = np.asarray(x, dtype=float)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{x.size} 1\n")
        for v in x.tolist():
            fh.write(f"{v:.17g}\n")
