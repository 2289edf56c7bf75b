"""Reverse-mode autodiff over numpy arrays.

Just enough machinery for this project: elementwise ops, reductions,
channel concat, conv/conv-transpose (via the backend im2col/col2im
kernels), batch norm, 2x2 max pool, Gram products, and the region
paste/extract ops the inpainting pipeline needs. Image tensors are NCHW.
Gradients accumulate into `.grad`; `backward()` starts from a scalar.
"""

import numpy as np

from . import backend

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    # -- basics ---------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, s):
        return mul(self, 1.0 / float(s))

    def __pow__(self, p):
        return power(self, p)

    # -- backprop ---------------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if g.base is not None or g.flags.writeable is False else g
    else:
        t.grad = t.grad + g


def _make(data, parents, bw_fn):
    """Wire up an op result; drops the graph when grads are off/unneeded."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = bw_fn
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bw)


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    out_data = a.data**p

    def bw(g):
        _accum(a, g * (p * a.data ** (p - 1.0)))

    return _make(out_data, (a,), bw)


def log(a):
    a = as_tensor(a)
    out_data = np.log(a.data)

    def bw(g):
        _accum(a, g / a.data)

    return _make(out_data, (a,), bw)


def absolute(a):
    a = as_tensor(a)
    out_data = np.abs(a.data)

    def bw(g):
        _accum(a, g * np.sign(a.data))

    return _make(out_data, (a,), bw)


def clip(a, lo, hi):
    """Clamp; gradient passes only through the unclipped interior."""
    a = as_tensor(a)
    out_data = np.clip(a.data, lo, hi)

    def bw(g):
        mask = (a.data > lo) & (a.data < hi)
        _accum(a, g * mask)

    return _make(out_data, (a,), bw)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - y * y))

    return _make(y, (a,), bw)


def sigmoid(a):
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        _accum(a, g * (y * (1.0 - y)))

    return _make(y, (a,), bw)


def relu(a):
    a = as_tensor(a)
    y = np.maximum(a.data, 0)

    def bw(g):
        _accum(a, g * (a.data > 0))

    return _make(y, (a,), bw)


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    y = np.where(a.data > 0, a.data, a.data * slope)

    def bw(g):
        _accum(a, g * np.where(a.data > 0, 1.0, slope).astype(g.dtype))

    return _make(y, (a,), bw)


def tsum(a):
    a = as_tensor(a)
    out_data = np.asarray(a.data.sum())

    def bw(g):
        _accum(a, np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True))

    return _make(out_data, (a,), bw)


def tmean(a):
    a = as_tensor(a)
    out_data = np.asarray(a.data.mean())
    inv = 1.0 / a.data.size

    def bw(g):
        _accum(a, np.full(a.data.shape, float(g) * inv, dtype=a.data.dtype))

    return _make(out_data, (a,), bw)


def concat(parts, axis=1):
    parts = [as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def bw(g):
        ofs = 0
        for p, s in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(ofs, ofs + s)
            _accum(p, g[tuple(sl)])
            ofs += s

    return _make(out_data, tuple(parts), bw)


def reshape(a, shape):
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(out_data, (a,), bw)


# -- convolution -----------------------------------------------------------


def conv2d(x, w, b=None, stride=1, padding=0):
    """NCHW convolution; w is (cout, cin, k, k)."""
    x, w = as_tensor(x), as_tensor(w)
    K = backend.active()
    xd, wd = x.data, w.data
    n, cin, h, wdt = xd.shape
    cout, cin2, k, _ = wd.shape
    if cin != cin2:
        raise ValueError(f"conv2d channel mismatch: input {cin}, weight {cin2}")
    s, p = int(stride), int(padding)
    oh = (h + 2 * p - k) // s + 1
    ow = (wdt + 2 * p - k) // s + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d output would be empty for input {h}x{wdt}")
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    cols = K.im2col(xp, k, s, oh, ow)
    wm = wd.reshape(cout, -1)
    out = np.matmul(wm, cols).reshape(n, cout, oh, ow)
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        gm = g.reshape(n, cout, oh * ow)
        if w.requires_grad:
            # recompute the gather instead of keeping cols alive
            c2 = K.im2col(xp, k, s, oh, ow)
            gw = np.matmul(gm, c2.transpose(0, 2, 1)).sum(axis=0)
            _accum(w, gw.reshape(wd.shape))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(wm.T, gm)
            gxp = K.col2im(
                np.ascontiguousarray(gcols), cin, h + 2 * p, wdt + 2 * p, k, s, oh, ow
            )
            _accum(x, gxp[:, :, p : p + h, p : p + wdt] if p else gxp)

    return _make(out, parents, bw)


def conv_transpose2d(x, w, b=None, stride=1, padding=0):
    """NCHW transposed convolution; w is (cin, cout, k, k)."""
    x, w = as_tensor(x), as_tensor(w)
    K = backend.active()
    xd, wd = x.data, w.data
    n, cin, h, w_in = xd.shape
    cin2, cout, k, _ = wd.shape
    if cin != cin2:
        raise ValueError(
            f"conv_transpose2d channel mismatch: input {cin}, weight {cin2}"
        )
    s, p = int(stride), int(padding)
    oh = (h - 1) * s - 2 * p + k
    ow = (w_in - 1) * s - 2 * p + k
    hp, wp = oh + 2 * p, ow + 2 * p
    wm = wd.reshape(cin, cout * k * k)
    xm = xd.reshape(n, cin, h * w_in)
    cols = np.matmul(wm.T, xm)
    outp = K.col2im(np.ascontiguousarray(cols), cout, hp, wp, k, s, h, w_in)
    out = outp[:, :, p : p + oh, p : p + ow] if p else outp
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
        gcols = K.im2col(np.ascontiguousarray(gp), k, s, h, w_in)
        if w.requires_grad:
            gw = np.matmul(xm, gcols.transpose(0, 2, 1)).sum(axis=0)
            _accum(w, gw.reshape(wd.shape))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gx = np.matmul(wm, gcols).reshape(n, cin, h, w_in)
            _accum(x, gx)

    return _make(np.ascontiguousarray(out), parents, bw)


# -- normalization / pooling ------------------------------------------------


def batchnorm_train(x, gamma, beta, eps=1e-5):
    """Batch norm over (N,H,W) per channel. Returns (y, batch_mean, batch_var)."""
    x = as_tensor(x)
    xd = x.data
    ax = (0, 2, 3)
    m = xd.shape[0] * xd.shape[2] * xd.shape[3]
    mu = xd.mean(axis=ax)
    var = xd.var(axis=ax)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu.reshape(1, -1, 1, 1)) * inv.reshape(1, -1, 1, 1)
    y = gamma.data.reshape(1, -1, 1, 1) * xhat + beta.data.reshape(1, -1, 1, 1)

    def bw(g):
        dbeta = g.sum(axis=ax)
        dgamma = (g * xhat).sum(axis=ax)
        if gamma.requires_grad:
            _accum(gamma, dgamma)
        if beta.requires_grad:
            _accum(beta, dbeta)
        if x.requires_grad:
            t = (gamma.data * inv).reshape(1, -1, 1, 1)
            gx = t * (
                g
                - dbeta.reshape(1, -1, 1, 1) / m
                - xhat * dgamma.reshape(1, -1, 1, 1) / m
            )
            _accum(x, gx.astype(xd.dtype, copy=False))

    return _make(y, (x, gamma, beta), bw), mu, var


def batchnorm_eval(x, gamma, beta, running_mean, running_var, eps=1e-5):
    x = as_tensor(x)
    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean.reshape(1, -1, 1, 1)) * inv.reshape(1, -1, 1, 1)
    y = gamma.data.reshape(1, -1, 1, 1) * xhat + beta.data.reshape(1, -1, 1, 1)

    def bw(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            _accum(x, g * (gamma.data * inv).reshape(1, -1, 1, 1))

    return _make(y, (x, gamma, beta), bw)


def maxpool2x2(x):
    x = as_tensor(x)
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError("maxpool2x2 needs even spatial dims")
    h2, w2 = h // 2, w // 2
    xr = (
        x.data.reshape(n, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2, w2, 4)
    )
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gr = np.zeros((n, c, h2, w2, 4), dtype=g.dtype)
        np.put_along_axis(gr, idx[..., None], g[..., None], axis=-1)
        gx = (
            gr.reshape(n, c, h2, w2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        _accum(x, gx)

    return _make(y, (x,), bw)


# -- feature statistics ------------------------------------------------------


def gram(x):
    """Batched channel Gram products: (n,c,h,w) -> (n,c,c), unnormalized."""
    x = as_tensor(x)
    n, c, h, w = x.data.shape
    v = x.data.reshape(n, c, h * w)
    out = np.matmul(v, v.transpose(0, 2, 1))

    def bw(g):
        gv = np.matmul(g + g.transpose(0, 2, 1), v)
        _accum(x, gv.reshape(n, c, h, w))

    return _make(out, (x,), bw)


# -- region ops ---------------------------------------------------------------


def extract_regions(x, regions):
    """Crop one square region per batch item; regions share a size."""
    x = as_tensor(x)
    n = x.data.shape[0]
    if len(regions) != n:
        raise ValueError("one region per batch item required")
    size = regions[0].size
    out = np.stack(
        [
            x.data[i, :, r.top : r.top + size, r.left : r.left + size]
            for i, r in enumerate(regions)
        ]
    )

    def bw(g):
        gx = np.zeros_like(x.data)
        for i, r in enumerate(regions):
            gx[i, :, r.top : r.top + size, r.left : r.left + size] = g[i]
        _accum(x, gx)

    return _make(out, (x,), bw)


def compose_regions(context, generated, regions):
    """Paste the region pixels of `generated` onto `context`, per item."""
    context, generated = as_tensor(context), as_tensor(generated)
    if context.data.shape != generated.data.shape:
        raise ValueError("compose: context and generated shapes differ")
    out = context.data.copy()
    for i, r in enumerate(regions):
        out[i, :, r.top : r.top + r.size, r.left : r.left + r.size] = generated.data[
            i, :, r.top : r.top + r.size, r.left : r.left + r.size
        ]

    def bw(g):
        if generated.requires_grad:
            gg = np.zeros_like(g)
            for i, r in enumerate(regions):
                sl = np.s_[i, :, r.top : r.top + r.size, r.left : r.left + r.size]
                gg[sl] = g[sl]
            _accum(generated, gg)
        if context.requires_grad:
            gc = g.copy()
            for i, r in enumerate(regions):
                gc[i, :, r.top : r.top + r.size, r.left : r.left + r.size] = 0
            _accum(context, gc)

    return _make(out, (context, generated), bw)
