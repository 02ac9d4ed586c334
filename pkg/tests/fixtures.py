"""Shared small matrices for the test suite."""

import numpy as np

from ess.sparse import Permutation, from_coo

# Elimination order of the 11-column example (1-based labels).  Position p of
# the permuted matrix holds label ELEVEN_ORDER[p].
ELEVEN_ORDER = (2, 3, 5, 8, 1, 4, 6, 7, 9, 10, 11)
# Strictly lower entries (row, col) in permuted positions.
ELEVEN_LOWER = ((1, 0), (3, 0), (3, 2), (9, 3), (6, 4), (6, 5), (7, 6), (8, 7), (9, 7), (10, 9))


def eleven():
    """The 11x11 symmetric-pattern example and its elimination order."""
    lab = np.array(ELEVEN_ORDER) - 1
    rows, cols, vals = [], [], []
    for i, j in ELEVEN_LOWER:
        rows += [lab[i], lab[j]]
        cols += [lab[j], lab[i]]
        vals += [-1.0, -1.0]
    deg = np.bincount(rows, minlength=11)
    rows += list(range(11))
    cols += list(range(11))
    vals += (2.0 * deg + 1.0).tolist()
    return from_coo(11, rows, cols, vals), Permutation.from_order(lab)


def frontal_labels(an):
    """Frontals as sorted sets of 1-based original labels."""
    inv = an.order.inverse
    return [sorted((inv[f] + 1).tolist()) for f in an.partition.frontals]


def random_pattern(rng, n, density):
    """Random symmetric pattern with a full diagonal, diagonally dominant values."""
    m = rng.random((n, n)) < density
    m = m | m.T
    np.fill_diagonal(m, False)
    r, c = np.nonzero(m)
    v = -rng.uniform(0.5, 1.5, size=r.size)
    d = np.bincount(r, weights=np.abs(v), minlength=n) * 2.0 + 1.0
    return from_coo(n, np.concatenate([r, np.arange(n)]), np.concatenate([c, np.arange(n)]),
                    np.concatenate([v, d]))
