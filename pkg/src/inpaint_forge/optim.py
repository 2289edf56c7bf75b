"""Adam optimizer over Parameter lists."""

import numpy as np


class Adam:
    def __init__(self, params, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.b1, self.b2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            g = g.astype(p.data.dtype, copy=False)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            mhat = self.m[i] / c1
            vhat = self.v[i] / c2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self):
        """Flat name->array map of the moment buffers plus the step count."""
        out = {"t": np.asarray(self.t, dtype=np.int64)}
        for i in range(len(self.params)):
            out[f"m{i}"] = self.m[i]
            out[f"v{i}"] = self.v[i]
        return out

    def load_state_arrays(self, state):
        self.t = int(state["t"])
        for i, p in enumerate(self.params):
            m, v = np.asarray(state[f"m{i}"]), np.asarray(state[f"v{i}"])
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise ValueError(f"optimizer state shape mismatch at index {i}")
            self.m[i] = m.astype(p.data.dtype, copy=True)
            self.v[i] = v.astype(p.data.dtype, copy=True)
