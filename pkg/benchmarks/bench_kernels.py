"""Compare the compiled and numpy kernel backends on the hot paths.

    python3 benchmarks/bench_kernels.py [--repeat N] [--epochs E]

Times single-sample loss+gradient, the fused SGD step, one Adam update over
every parameter, and whole meta-epochs, at the reference topology.
"""
import argparse
import timeit

import numpy as np

from deepneurons import kernels, optim
from deepneurons.model import Topology, init_network
from deepneurons.training import TrainConfig, meta_train


def _time(fn, repeat):
    fn()  # warm-up
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e6


def bench(backend, repeat, epochs):
    kernels.set_backend(backend)
    net = init_network(Topology.reference(), "shared", 0)
    X, Y = np.array([[0.7]]), np.array([[0.2]])
    grads = {**net.theta}
    adam = optim.Adam(net.theta, 1e-12)
    out = {
        "loss_and_grad_us": _time(lambda: net.loss_and_grad(X, Y), repeat),
        "sgd_step_us": _time(lambda: kernels.sgd_step(net, X, Y, 1e-12, 1e-12), repeat),
        "adam_update_us": _time(lambda: adam.step(grads), repeat),
    }
    for opt in ("sgd", "adam"):
        cfg = TrainConfig(meta_epochs=epochs, optimizer=opt)
        out[f"meta_epoch_{opt}_s"] = _time(lambda: meta_train(cfg), 1) / 1e6 / epochs
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--epochs", type=int, default=3)
    args = p.parse_args()
    rows = {b: bench(b, args.repeat, args.epochs) for b in kernels.available_backends()}
    keys = list(next(iter(rows.values())))
    print(f"{'metric':<22s}" + "".join(f"{b:>12s}" for b in rows) + ("     speedup" if len(rows) > 1 else ""))
    for k in keys:
        line = f"{k:<22s}" + "".join(f"{rows[b][k]:12.2f}" for b in rows)
        if "cython" in rows:
            line += f"{rows['numpy'][k] / rows['cython'][k]:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
