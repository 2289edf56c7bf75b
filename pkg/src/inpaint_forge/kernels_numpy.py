"""Pure-numpy implementations of the hot kernels.

im2col/col2im do the patch gather/scatter for the convolution layers (the
GEMM itself is np.matmul in both backends). window_sums feeds the
sliding-window image metrics.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

IS_NUMBA = False


def im2col(xp, k, s, oh, ow):
    """Gather k*k patches of the padded input xp (n,c,hp,wp) into columns.

    Returns (n, c*k*k, oh*ow); column index c*(k*k) + ki*k + kj matches the
    layout of weight.reshape(cout, cin*k*k).
    """
    n, c = xp.shape[:2]
    cols = np.empty((n, c, k, k, oh, ow), dtype=xp.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + s * oh : s, kj : kj + s * ow : s]
    return cols.reshape(n, c * k * k, oh * ow)


def col2im(cols, c, hp, wp, k, s, oh, ow):
    """Adjoint of im2col: scatter-add columns back onto the padded grid."""
    n = cols.shape[0]
    cols6 = cols.reshape(n, c, k, k, oh, ow)
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            xp[:, :, ki : ki + s * oh : s, kj : kj + s * ow : s] += cols6[:, :, ki, kj]
    return xp


def window_sums(a, b, win):
    """Per-window sums for the sliding-window metrics.

    a, b: float64 2D images. Returns six (oh, ow) maps: sum a, sum b,
    sum a^2, sum b^2, sum a*b, sum (a-b)^2 over each win*win window
    (stride 1).
    """
    wa = sliding_window_view(a, (win, win))
    wb = sliding_window_view(b, (win, win))
    sa = wa.sum(axis=(-2, -1))
    sb = wb.sum(axis=(-2, -1))
    saa = (wa * wa).sum(axis=(-2, -1))
    sbb = (wb * wb).sum(axis=(-2, -1))
    sab = (wa * wb).sum(axis=(-2, -1))
    d = a - b
    sdd = (sliding_window_view(d, (win, win)) ** 2).sum(axis=(-2, -1))
    return sa, sb, saa, sbb, sab, sdd
