import os
import subprocess
import sys

import numpy as np
import pytest

from deepneurons import graph, kernels
from deepneurons.gradcheck import random_case
from deepneurons.model import SharingMode, Topology, init_network
from conftest import jitter
from oracles import network_loops

needs_c = pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")


def _grads(net, X, Y):
    loss, gt, gp = net.loss_and_grad(X, Y)
    return loss, {**gt, **{f"phi.{k}": v for k, v in gp.items()}}


@pytest.mark.parametrize("mode", [m.value for m in SharingMode])
def test_kernel_gradients_match_tape(mode, backend, rng):
    topo = Topology((1, 4, 3, 1), 3, ((0, 2), (1, 3)))
    net = jitter(init_network(topo, mode, 5), rng)
    for X in (rng.uniform(-5, 5, (1, 1)), rng.uniform(-5, 5, (7, 1))):
        Y = rng.uniform(-0.8, 0.8, (len(X), 1))
        loss_k, gk = _grads(net, X, Y)
        loss_t, gtape = graph.loss_and_grad(net, X, Y, "both")
        assert loss_k == pytest.approx(loss_t, rel=1e-12, abs=1e-15)
        for k in gtape:
            np.testing.assert_allclose(gk[k], gtape[k], rtol=1e-10, atol=1e-13, err_msg=k)


def test_forward_matches_loops_random(backend):
    rng = np.random.default_rng(3)
    for _ in range(30):
        net, X, _ = random_case(rng)
        for x in X:
            assert abs(net.forward(x[0]) - network_loops(net, x)[0]) <= 1e-12


@needs_c
@pytest.mark.parametrize("mode", [m.value for m in SharingMode])
def test_cython_matches_numpy(mode, rng):
    from deepneurons.kernels import _cdan, _numpy

    net = jitter(init_network(Topology.reference(), mode, 1), rng, 0.05)
    X, Y = np.array([[1.3]]), np.array([[0.2]])
    lc, tc, pc = _cdan.loss_and_grad(net, X, Y, True, True)
    ln, tn, pn = _numpy.loss_and_grad(net, X, Y, True, True)
    assert lc == pytest.approx(ln, rel=1e-12)
    for k in tn:
        np.testing.assert_allclose(tc[k], tn[k], rtol=1e-9, atol=1e-14)
    for k in pn:
        np.testing.assert_allclose(pc[k], pn[k], rtol=1e-9, atol=1e-14)


@needs_c
@pytest.mark.parametrize("update_phi", [True, False])
def test_fused_sgd_step_matches_numpy(update_phi, rng):
    net = jitter(init_network(Topology((1, 5, 4, 1), 3, ((0, 2), (1, 3))), "per_node", 2), rng)
    other = net.copy()
    X, Y = np.array([[0.7]]), np.array([[-0.3]])
    kernels.set_backend("cython")
    try:
        kernels.sgd_step(net, X, Y, 0.01, 0.002, update_phi)
    finally:
        kernels.set_backend("numpy")
    try:
        kernels.sgd_step(other, X, Y, 0.01, 0.002, update_phi)
    finally:
        kernels.set_backend(kernels.available_backends()[-1])
    for k in net.theta:
        np.testing.assert_allclose(net.theta[k], other.theta[k], rtol=1e-12, atol=1e-15)
    for k in net.phi:
        np.testing.assert_allclose(net.phi[k], other.phi[k], rtol=1e-12, atol=1e-15)


def test_sgd_step_frozen_phi_untouched(backend, small_net):
    before = small_net.checksum("phi")
    kernels.sgd_step(small_net, np.array([[1.0]]), np.array([[0.5]]), 0.1, 0.1, update_phi=False)
    assert small_net.checksum("phi") == before


def test_sgd_step_rejects_nan(backend, small_net):
    with pytest.raises(FloatingPointError):
        kernels.sgd_step(small_net, np.array([[1.0]]), np.array([[np.nan]]), 0.1, 0.1)


@needs_c
def test_adam_kernel_matches_numpy(rng):
    from deepneurons import optim

    p1 = {"a": rng.normal(size=(4, 6))}
    p2 = {"a": p1["a"].copy()}
    o1, o2 = optim.Adam(p1, 0.01), optim.Adam(p2, 0.01)
    prev = kernels.BACKEND
    try:
        for _ in range(5):
            g = {"a": rng.normal(size=(4, 6))}
            kernels.set_backend("cython")
            o1.step(g)
            kernels.set_backend("numpy")
            o2.step(g)
    finally:
        kernels.set_backend(prev)
    np.testing.assert_allclose(p1["a"], p2["a"], rtol=1e-14, atol=1e-15)


def test_backend_selection_env():
    code = "from deepneurons import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, DEEPNEURONS_KERNEL="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_set_backend_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")
