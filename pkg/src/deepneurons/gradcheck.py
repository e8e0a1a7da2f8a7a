"""Central finite-difference checks of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import graph
from .kernels import _numpy
from .model import SharingMode, Topology, init_network

STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


@dataclass
class TensorReport:
    name: str
    size: int
    max_rel_err: float
    max_abs_err: float
    worst_index: int
    passed: bool


@dataclass
class GradcheckReport:
    label: str
    tensors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tensors)


def _loss(net, X, Y) -> float:
    pred = _numpy.forward(net, X)
    return float(np.mean((pred - Y) ** 2))


def numeric_gradient(net, X, Y, array: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of the batch MSE w.r.t. every entry of ``array`` (a live parameter)."""
    grad = np.empty_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = _loss(net, X, Y)
        flat[i] = orig - step
        down = _loss(net, X, Y)
        flat[i] = orig
        out[i] = (up - down) / (2 * step)
    return grad


def compare(name, analytic, numeric, rel_tol=REL_TOL, abs_floor=ABS_FLOOR) -> TensorReport:
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    abs_err = np.abs(a - n)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-300)
    rel_err = np.where(abs_err == 0.0, 0.0, abs_err / scale)
    ok = (abs_err <= abs_floor) | (rel_err <= rel_tol)
    # worst = largest relative error among entries that are above the floor, else overall
    graded = np.where(abs_err <= abs_floor, -1.0, rel_err)
    worst = int(np.argmax(graded)) if a.size else -1
    return TensorReport(
        name,
        a.size,
        float(rel_err[worst]) if a.size else 0.0,
        float(abs_err.max()) if a.size else 0.0,
        worst,
        bool(np.all(ok)),
    )


def check_network(net, X, Y, label="", source="tape") -> GradcheckReport:
    """Compare tape (or fused-kernel) gradients with central differences for all parameters."""
    if source == "tape":
        _, grads = graph.loss_and_grad(net, X, Y, "both")
    else:
        _, gt, gp = net.loss_and_grad(X, Y)
        grads = {**gt, **{f"phi.{k}": v for k, v in gp.items()}}
    report = GradcheckReport(label)
    for name, arr in net.parameters("both").items():
        numeric = numeric_gradient(net, X, Y, arr)
        report.tensors.append(compare(name, grads[name], numeric))
    return report


def random_case(rng: np.random.Generator, max_sizes=(1, 5, 4, 1), max_channels=4):
    """A random small network (random topology, mode, skips) plus a batch."""
    n_hidden = int(rng.integers(1, len(max_sizes) - 1)) if len(max_sizes) > 3 else 1
    hidden = [int(rng.integers(1, max_sizes[1 + i] + 1)) for i in range(n_hidden)]
    sizes = (1, *hidden, 1)
    skips = tuple((j, j + 2) for j in range(len(sizes) - 2) if rng.random() < 0.5)
    topo = Topology(sizes, int(rng.integers(1, max_channels + 1)), skips)
    mode = rng.choice([m.value for m in SharingMode])
    net = init_network(topo, mode, int(rng.integers(2**31)))
    # move biases off zero so their gradients are exercised
    for d in (net.theta, net.phi):
        for k, v in d.items():
            v += rng.normal(scale=0.3, size=v.shape)
    X = rng.uniform(-5, 5, size=(int(rng.integers(1, 4)), 1))
    Y = rng.uniform(-0.8, 0.8, size=(len(X), 1))
    return net, X, Y


def run_suite(n_networks: int = 50, seed: int = 0, source="tape") -> list[GradcheckReport]:
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(n_networks):
        net, X, Y = random_case(rng)
        label = f"net{i} sizes={list(net.topology.layer_sizes)} C={net.topology.n_channels} mode={net.mode.value}"
        reports.append(check_network(net, X, Y, label, source))
    return reports
