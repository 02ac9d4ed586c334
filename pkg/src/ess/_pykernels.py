"""Pure numpy versions of the compiled frontal kernels."""

import numpy as np

NAME = "python"


def dense_lu(F, rows, cols, nfs, tol, floor):
    m = F.shape[0]
    k = 0
    while k < nfs:
        piv_r = piv_c = -1
        for c in range(k, nfs):
            colmax = np.abs(F[k:, c]).max()
            cand = np.abs(F[k:nfs, c])
            best = -1
            diag = np.flatnonzero(rows[k:nfs] == cols[c])
            if diag.size:
                v = cand[diag[0]]
                if v >= tol * colmax and v > floor:
                    best = k + int(diag[0])
            if best < 0:
                r = int(np.argmax(cand))
                if cand[r] >= tol * colmax and cand[r] > floor and cand[r] > 0.0:
                    best = k + r
            if best >= 0:
                piv_r, piv_c = best, c
                break
        if piv_r < 0:
            break
        if piv_r != k:
            F[[k, piv_r], :] = F[[piv_r, k], :]
            rows[[k, piv_r]] = rows[[piv_r, k]]
        if piv_c != k:
            F[:, [k, piv_c]] = F[:, [piv_c, k]]
            cols[[k, piv_c]] = cols[[piv_c, k]]
        if k + 1 < m:
            F[k + 1:, k] /= F[k, k]
            F[k + 1:, k + 1:] -= np.outer(F[k + 1:, k], F[k, k + 1:])
        k += 1
    return k


def scatter_add(F, rmap, cmap, C):
    F[np.ix_(rmap, cmap)] += C


def scatter_entries(F, ri, ci, vals):
    np.add.at(F, (ri, ci), vals)


def front_forward(Lp, w):
    m, e = Lp.shape
    for k in range(e):
        if k + 1 < m:
            w[k + 1:] -= Lp[k + 1:, k] * w[k]


def front_backward(Up, x):
    e = Up.shape[0]
    for i in range(e - 1, -1, -1):
        x[i] = (x[i] - Up[i, i + 1:] @ x[i + 1:]) / Up[i, i]
