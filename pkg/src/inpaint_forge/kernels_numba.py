"""Numba-jitted implementations of the hot kernels.

Same contracts as kernels_numpy; see there for layout documentation.
Compiled objects are cached on disk, so the jit cost is paid once per
machine, not per process.
"""

import numpy as np
from numba import njit

IS_NUMBA = True


@njit(cache=True)
def im2col(xp, k, s, oh, ow):
    n, c, hp, wp = xp.shape
    cols = np.empty((n, c * k * k, oh * ow), dtype=xp.dtype)
    for ni in range(n):
        for ci in range(c):
            base = ci * k * k
            for ki in range(k):
                for kj in range(k):
                    row = base + ki * k + kj
                    for io in range(oh):
                        si = io * s + ki
                        p0 = io * ow
                        for jo in range(ow):
                            cols[ni, row, p0 + jo] = xp[ni, ci, si, jo * s + kj]
    return cols


@njit(cache=True)
def col2im(cols, c, hp, wp, k, s, oh, ow):
    n = cols.shape[0]
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for ni in range(n):
        for ci in range(c):
            base = ci * k * k
            for ki in range(k):
                for kj in range(k):
                    row = base + ki * k + kj
                    for io in range(oh):
                        si = io * s + ki
                        p0 = io * ow
                        for jo in range(ow):
                            xp[ni, ci, si, jo * s + kj] += cols[ni, row, p0 + jo]
    return xp


@njit(cache=True)
def window_sums(a, b, win):
    h, w = a.shape
    oh = h - win + 1
    ow = w - win + 1
    sa = np.empty((oh, ow), np.float64)
    sb = np.empty((oh, ow), np.float64)
    saa = np.empty((oh, ow), np.float64)
    sbb = np.empty((oh, ow), np.float64)
    sab = np.empty((oh, ow), np.float64)
    sdd = np.empty((oh, ow), np.float64)
    for i in range(oh):
        for j in range(ow):
            ta = 0.0
            tb = 0.0
            taa = 0.0
            tbb = 0.0
            tab = 0.0
            tdd = 0.0
            for u in range(win):
                for v in range(win):
                    x = a[i + u, j + v]
                    y = b[i + u, j + v]
                    ta += x
                    tb += y
                    taa += x * x
                    tbb += y * y
                    tab += x * y
                    tdd += (x - y) * (x - y)
            sa[i, j] = ta
            sb[i, j] = tb
            saa[i, j] = taa
            sbb[i, j] = tbb
            sab[i, j] = tab
            sdd[i, j] = tdd
    return sa, sb, saa, sbb, sab, sdd
