"""In-place optimizers over dicts of parameter arrays."""
import numpy as np

from . import kernels


class SGD:
    def __init__(self, params: dict, lr: float):
        self.params = params
        self.lr = float(lr)

    def reset(self):
        pass

    def step(self, grads: dict):
        if self.lr == 0.0:
            return
        for k, g in grads.items():
            self.params[k] -= self.lr * g


class Adam:
    """Adam with bias correction; ``reset`` clears the moment estimates."""

    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.reset()

    def reset(self):
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.t = 0

    def step(self, grads: dict):
        if self.lr == 0.0:
            return
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        compiled = kernels.BACKEND == "cython"
        for k, g in grads.items():
            p, m, v = self.params[k], self.m[k], self.v[k]
            if compiled:
                kernels._cdan.adam_update(
                    p.reshape(-1), np.ascontiguousarray(g).reshape(-1), m.reshape(-1), v.reshape(-1),
                    self.lr, self.beta1, self.beta2, self.eps, c1, c2,
                )
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


OPTIMIZERS = {"sgd": SGD, "adam": Adam}


def make(name: str, params: dict, lr: float):
    try:
        return OPTIMIZERS[name](params, lr)
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}") from None
