"""Network-of-DANs forward pass expressed on the autodiff tape.

One sample at a time, using only the primitive ops (matmul, add, tanh, slice,
concat). Slow, but every intermediate is an explicit graph node, which makes
it the reference for the fused kernels.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .model import PHI_KEYS, NetworkOfDANs


def parameter_leaves(net: NetworkOfDANs, tape: ad.Tape) -> dict[str, ad.Tensor]:
    leaves = {k: tape.leaf(v, name=k) for k, v in net.theta.items()}
    leaves.update({f"phi.{k}": tape.leaf(v, name=f"phi.{k}") for k, v in net.phi.items()})
    return leaves


def _phenotype(leaves, cache, p):
    if p not in cache:
        cache[p] = [ad.take(leaves[f"phi.{k}"], p) for k in PHI_KEYS]
    return cache[p]


def dan(params, s: ad.Tensor) -> ad.Tensor:
    w1, b1, w2, b2, w3, b3 = params
    h1 = ad.tanh(ad.matmul(s, w1) + b1)
    h2 = ad.tanh(ad.matmul(h1, w2) + b2)
    return ad.tanh(ad.matmul(h2, w3) + b3)


def sample_forward(net: NetworkOfDANs, leaves, x, phen_cache=None) -> ad.Tensor:
    """Output-layer activations (a vector) for one input vector ``x``."""
    topo = net.topology
    tape = next(iter(leaves.values())).tape
    C = topo.n_channels
    phen_cache = {} if phen_cache is None else phen_cache
    acts = [tape.constant(np.atleast_1d(np.asarray(x, dtype=np.float64)))]
    for k in range(1, topo.n_layers):
        z = ad.matmul(acts[k - 1], leaves[f"W{k - 1}"]) + leaves[f"b{k - 1}"]
        for j in topo.skips_into(k):
            z = z + ad.matmul(acts[j], leaves[f"S{j}_{k}"])
        outs = []
        for i in range(topo.layer_sizes[k]):
            params = _phenotype(leaves, phen_cache, net.phenotype_index(k, i))
            outs.append(dan(params, ad.slice(z, i * C, C)))
        acts.append(ad.concat(outs))
    return acts[-1]


def batch_loss(net: NetworkOfDANs, X, Y, tape: ad.Tape | None = None):
    """Build the MSE loss over a batch; returns ``(tape, leaves, preds, loss)``."""
    tape = ad.Tape() if tape is None else tape
    leaves = parameter_leaves(net, tape)
    X = np.asarray(X, dtype=np.float64).reshape(-1, net.topology.layer_sizes[0])
    Y = np.asarray(Y, dtype=np.float64).reshape(len(X), -1)
    cache = {}
    outs = [sample_forward(net, leaves, x, cache) for x in X]
    preds = ad.concat(outs)
    loss = ad.mse_loss(preds, tape.constant(Y.reshape(-1)))
    return tape, leaves, preds, loss


def loss_and_grad(net: NetworkOfDANs, X, Y, subset: str = "both"):
    """Loss and gradients restricted to ``subset`` via the tape."""
    tape, leaves, _, loss = batch_loss(net, X, Y)
    keys = net.parameters(subset).keys()
    grads = tape.backward(loss, {k: leaves[k] for k in keys})
    return float(loss.data), grads
