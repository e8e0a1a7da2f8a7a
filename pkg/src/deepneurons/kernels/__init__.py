"""Hot-path kernels for the network of DANs.

Two interchangeable backends implement the same functions:

``_cdan``   compiled Cython core (built by ``pip install``/``setup.py build_ext``)
``_numpy``  pure numpy fallback

The compiled core is used when importable unless ``DEEPNEURONS_KERNEL=numpy``.
It only handles single-sample calls; batched calls always go to numpy, where
BLAS-backed matrix products win.
"""
import os

import numpy as np

from . import _numpy

try:
    from . import _cdan
except ImportError:  # extension not built
    _cdan = None

BACKEND = "numpy"
if _cdan is not None and os.environ.get("DEEPNEURONS_KERNEL", "").lower() != "numpy":
    BACKEND = "cython"


def available_backends() -> list[str]:
    return ["numpy"] + (["cython"] if _cdan is not None else [])


def set_backend(name: str) -> None:
    global BACKEND
    if name not in available_backends():
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}")
    BACKEND = name


def _use_c(X) -> bool:
    return BACKEND == "cython" and X.shape[0] == 1


def forward(net, X):
    if _use_c(X):
        return _cdan.forward(net, X)
    return _numpy.forward(net, X)


def dan_layer(net, k, z):
    return _numpy.dan_layer(net, k, z)


def loss_and_grad(net, X, Y, want_theta=True, want_phi=True):
    if _use_c(X):
        return _cdan.loss_and_grad(net, X, Y, want_theta, want_phi)
    return _numpy.loss_and_grad(net, X, Y, want_theta, want_phi)


def sgd_step(net, X, Y, alpha, gamma, update_phi=True):
    """One SGD step in place; returns the pre-step loss.

    With ``update_phi=False`` the phenotype arrays are never written.
    """
    if _use_c(X):
        return _cdan.sgd_step(net, X, Y, alpha, gamma, update_phi)
    loss, gt, gp = _numpy.loss_and_grad(net, X, Y, True, update_phi)
    _check_finite(loss, gt, gp)
    for k, g in gt.items():
        net.theta[k] -= alpha * g
    if update_phi:
        for k, g in gp.items():
            net.phi[k] -= gamma * g
    return loss


def _check_finite(loss, *grads):
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    for g in grads:
        if g is None:
            continue
        for k, v in g.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite gradient in {k}")
