"""Small module/parameter layer over the autograd tensors."""

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


class Module:
    """Base class with attribute-hung parameter/buffer/child registration."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = np.asarray(array)
        object.__setattr__(self, name, self._buffers[name])

    def _set_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    # -- traversal -----------------------------------------------------
    def named_parameters(self, prefix=""):
        for n, p in self._params.items():
            yield prefix + n, p
        for cn, child in self._children.items():
            yield from child.named_parameters(prefix + cn + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for n, b in self._buffers.items():
            yield prefix + n, b
        for cn, child in self._children.items():
            yield from child.named_buffers(prefix + cn + ".")

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    # -- state ----------------------------------------------------------
    def state_dict(self):
        out = {}
        for n, p in self.named_parameters():
            out[n] = p.data
        for n, b in self.named_buffers():
            out["buffer:" + n] = b
        return out

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        expected = set(params) | {"buffer:" + n for n, _ in self.named_buffers()}
        got = set(state)
        if expected != got:
            missing = sorted(expected - got)[:4]
            extra = sorted(got - expected)[:4]
            raise ValueError(f"state mismatch: missing={missing} unexpected={extra}")
        for n, p in params.items():
            arr = np.asarray(state[n])
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {n}: {arr.shape} vs {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype, copy=True)
        self._load_buffers(state, "")

    def _load_buffers(self, state, prefix):
        for n in list(self._buffers):
            arr = np.asarray(state["buffer:" + prefix + n])
            self._set_buffer(n, arr.astype(self._buffers[n].dtype, copy=True))
        for cn, child in self._children.items():
            child._load_buffers(state, prefix + cn + ".")

    def train(self, flag=True):
        for m in self.modules():
            object.__setattr__(m, "training", bool(flag))
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kw):
        return self.forward(*args, **kw)


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._list = []
        for m in mods:
            self.append(m)

    def append(self, m):
        self._children[str(len(self._list))] = m
        self._list.append(m)

    def __iter__(self):
        return iter(self._list)

    def __len__(self):
        return len(self._list)

    def __getitem__(self, i):
        return self._list[i]


class Conv2d(Module):
    def __init__(self, cin, cout, k, stride=1, padding=0, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        self.stride, self.padding = stride, padding
        w = _init_normal(rng, (cout, cin, k, k), 0.0, 0.02, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(cout, dtype=dtype)) if bias else None

    def forward(self, x):
        return ag.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, k, stride=1, padding=0, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        self.stride, self.padding = stride, padding
        w = _init_normal(rng, (cin, cout, k, k), 0.0, 0.02, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(cout, dtype=dtype)) if bias else None

    def forward(self, x):
        return ag.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    """Per-channel batch norm; running stats track the biased batch moments."""

    def __init__(self, c, eps=1e-5, momentum=0.1, rng=None, dtype=np.float32):
        super().__init__()
        self.eps, self.momentum = eps, momentum
        self.weight = Parameter(_init_normal(rng, (c,), 1.0, 0.02, dtype))
        self.bias = Parameter(np.zeros(c, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(c, dtype=dtype))
        self.register_buffer("running_var", np.ones(c, dtype=dtype))

    def forward(self, x):
        if self.training:
            y, mu, var = ag.batchnorm_train(x, self.weight, self.bias, self.eps)
            m = self.momentum
            self._set_buffer(
                "running_mean",
                ((1 - m) * self.running_mean + m * mu).astype(self.running_mean.dtype),
            )
            self._set_buffer(
                "running_var",
                ((1 - m) * self.running_var + m * var).astype(self.running_var.dtype),
            )
            return y
        return ag.batchnorm_eval(
            x, self.weight, self.bias, self.running_mean, self.running_var, self.eps
        )


def _init_normal(rng, shape, loc, scale, dtype):
    if rng is None:
        rng = np.random.default_rng()
    return rng.normal(loc, scale, size=shape).astype(dtype)
