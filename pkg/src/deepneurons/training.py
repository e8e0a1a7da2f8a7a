"""Inner-loop updates, phenotype meta-updates, meta-training and deployment."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from . import kernels, optim
from .model import NetworkOfDANs, SharingMode, Topology, init_network
from .rng import spawn_streams
from .tasks import (
    SAMPLES_PER_SUBTASK,
    SUBTASKS,
    TargetFunction,
    TrajectoryHistory,
    full_function_grid,
    sample_batch,
    sample_target_function,
)

log = logging.getLogger(__name__)

META_TRAIN = "meta-train"
DEPLOY = "deploy"
TOTAL_LOSS_GRID = 500


class DivergenceError(FloatingPointError):
    def __init__(self, message, step=None, epoch=None):
        super().__init__(message)
        self.step = step
        self.epoch = epoch


@dataclass
class TrainConfig:
    alpha: float = 1e-3
    gamma: float = 1e-4
    inner_steps: int = SAMPLES_PER_SUBTASK
    meta_epochs: int = 300
    seed: int = 0
    mode: str = "shared"
    layer_sizes: tuple = (1, 40, 40, 1)
    n_channels: int = 40
    skip_pairs: tuple = ((0, 2), (1, 3))
    dan_hidden: tuple = (15, 8)
    optimizer: str = "adam"

    def __post_init__(self):
        self.layer_sizes = tuple(self.layer_sizes)
        self.skip_pairs = tuple(tuple(p) for p in self.skip_pairs)
        self.dan_hidden = tuple(self.dan_hidden)
        self.mode = SharingMode(self.mode).value
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.inner_steps < 1:
            raise ValueError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if self.meta_epochs < 0:
            raise ValueError(f"meta_epochs must be >= 0, got {self.meta_epochs}")
        if self.optimizer not in optim.OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {sorted(optim.OPTIMIZERS)}")

    @property
    def topology(self) -> Topology:
        return Topology(self.layer_sizes, self.n_channels, self.skip_pairs, self.dan_hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        d["skip_pairs"] = [list(p) for p in self.skip_pairs]
        d["dan_hidden"] = list(self.dan_hidden)
        return d


class ModelState:
    """A network, its frozen VEC initialization and the optimizer states.

    The phenotype has two optimizers: one driven by task-loss gradients in the
    inner loop and one driven by memory-loss gradients in the meta-update.
    """

    def __init__(self, net: NetworkOfDANs, alpha=1e-3, gamma=1e-4, optimizer="adam"):
        self.net = net
        self.theta0 = {k: v.copy() for k, v in net.theta.items()}
        for v in self.theta0.values():
            v.flags.writeable = False
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.optimizer = optimizer
        self.theta_opt = optim.make(optimizer, net.theta, alpha)
        self.phi_opt = optim.make(optimizer, net.phi, gamma)
        self.meta_opt = optim.make(optimizer, net.phi, gamma)
        self.step = 0

    @classmethod
    def from_config(cls, config: TrainConfig, net: NetworkOfDANs | None = None) -> "ModelState":
        if net is None:
            net = init_network(config.topology, config.mode, config.seed)
        return cls(net, config.alpha, config.gamma, config.optimizer)

    def reset_theta(self):
        for k, v in self.theta0.items():
            self.net.theta[k][...] = v
        self.theta_opt.reset()


def _xy(net, x, y):
    X = np.asarray(x, dtype=np.float64).reshape(-1, net.topology.layer_sizes[0])
    Y = np.asarray(y, dtype=np.float64).reshape(len(X), -1)
    return X, Y


def _finite_or_raise(state, loss, *grads):
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss at step {state.step}", step=state.step)
    for g in grads:
        if g is not None and not all(np.all(np.isfinite(v)) for v in g.values()):
            raise DivergenceError(f"non-finite gradient at step {state.step}", step=state.step)


def inner_update(state: ModelState, x, y, phase: str = META_TRAIN) -> float:
    """One task-loss update on a single sample; returns the pre-update loss.

    ``meta-train`` steps theta (rate alpha) and phi (rate gamma). ``deploy``
    steps theta only and never writes to phi.
    """
    if phase not in (META_TRAIN, DEPLOY):
        raise ValueError(f"unknown phase {phase!r}")
    net = state.net
    X, Y = _xy(net, x, y)
    update_phi = phase == META_TRAIN
    if state.optimizer == "sgd" and kernels.BACKEND == "cython" and len(X) == 1:
        try:
            loss = kernels.sgd_step(net, X, Y, state.alpha, state.gamma, update_phi)
        except FloatingPointError as exc:
            raise DivergenceError(f"{exc} at step {state.step}", step=state.step) from exc
    else:
        loss, gt, gp = net.loss_and_grad(X, Y, True, update_phi)
        _finite_or_raise(state, loss, gt, gp)
        state.theta_opt.step(gt)
        if update_phi:
            state.phi_opt.step(gp)
    state.step += 1
    return loss


def memory_loss(state: ModelState, history: TrajectoryHistory) -> float:
    if len(history) == 0:
        raise ValueError("memory loss needs a non-empty history")
    xs, ys = history.arrays()
    pred = state.net.predict(xs)
    return float(np.mean((pred - ys) ** 2))


def meta_update(state: ModelState, history: TrajectoryHistory) -> float:
    """Step phi along the memory-loss gradient at the current state; theta untouched."""
    if len(history) == 0:
        raise ValueError("meta update needs a non-empty history")
    xs, ys = history.arrays()
    loss, _, gp = state.net.loss_and_grad(xs, ys, want_theta=False, want_phi=True)
    _finite_or_raise(state, loss, gp)
    state.meta_opt.step(gp)
    return loss


def total_loss(net: NetworkOfDANs, f: TargetFunction, grid_n: int = TOTAL_LOSS_GRID) -> float:
    xs, ys = full_function_grid(f, grid_n)
    return float(np.mean((net.predict(xs) - ys) ** 2))


@dataclass
class EpochRecord:
    epoch: int
    memory_loss: float
    total_loss: float
    stage_memory_losses: list
    wall_ms: float


@dataclass
class MetaTrainResult:
    state: ModelState
    records: list = field(default_factory=list)
    functions: list = field(default_factory=list)

    @property
    def curve(self) -> list[float]:
        return [r.memory_loss for r in self.records]


def target_stream(rng: np.random.Generator) -> Iterator[TargetFunction]:
    while True:
        yield sample_target_function(rng)


def meta_train(
    config: TrainConfig,
    task_stream: Iterable[TargetFunction] | None = None,
    state: ModelState | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> MetaTrainResult:
    """Meta-learn the phenotype.

    Per target function: five sub-tasks of ``inner_steps`` single-sample
    updates (theta and phi), each followed by one phenotype update on the
    memory loss over everything seen so far; then theta returns to its
    initialization.
    """
    streams = spawn_streams(config.seed)
    if state is None:
        state = ModelState.from_config(config)
    if task_stream is None:
        task_stream = target_stream(streams["task_sampling"])
    data_rng = streams["data_sampling"]
    result = MetaTrainResult(state)
    tasks_iter = iter(task_stream)
    for epoch in range(config.meta_epochs):
        t0 = time.perf_counter()
        f = next(tasks_iter)
        result.functions.append(f)
        history = TrajectoryHistory()
        stage_losses = []
        try:
            for st in SUBTASKS:
                xs, ys = sample_batch(f, st, config.inner_steps, data_rng)
                for x, y in zip(xs, ys):
                    inner_update(state, x, y, META_TRAIN)
                history.extend(xs, ys)
                stage_losses.append(meta_update(state, history))
        except DivergenceError as exc:
            exc.epoch = epoch
            raise DivergenceError(f"{exc} (meta-epoch {epoch})", exc.step, epoch) from exc
        tot = total_loss(state.net, f)
        state.reset_theta()
        rec = EpochRecord(
            epoch, stage_losses[-1], tot, stage_losses, (time.perf_counter() - t0) * 1e3
        )
        result.records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.debug("meta-epoch %d memory loss %.5f", epoch, rec.memory_loss)
    return result


@dataclass
class DeployResult:
    total_losses: list  # stage 0 (before learning) .. stage 5
    memory_losses: list  # after stages 1..5
    samples_per_stage: list
    phi_checksum_before: int
    phi_checksum_after: int
    snapshots: list = field(default_factory=list)  # per stage: (xs, y_true, y_pred)


def deploy(
    state: ModelState,
    f: TargetFunction,
    data_rng: np.random.Generator | None = None,
    batches=None,
    inner_steps: int = SAMPLES_PER_SUBTASK,
    plastic_phi: bool = False,
    grid_n: int = TOTAL_LOSS_GRID,
    snapshots: bool = False,
) -> DeployResult:
    """Learn the five sub-tasks of ``f`` in sequence starting from theta0.

    ``batches`` (five ``(xs, ys)`` pairs) overrides sampling from ``data_rng``
    so that paired baselines can consume identical data. With
    ``plastic_phi=False`` the phenotype is frozen.
    """
    from .evaluation import prediction_snapshot

    state.reset_theta()
    phase = META_TRAIN if plastic_phi else DEPLOY
    before = state.net.checksum("phi")
    if batches is None:
        batches = [sample_batch(f, st, inner_steps, data_rng) for st in SUBTASKS]
    history = TrajectoryHistory()
    totals = [total_loss(state.net, f, grid_n)]
    mems, counts, snaps = [], [], []
    if snapshots:
        snaps.append(prediction_snapshot(state, f, grid_n))
    for xs, ys in batches:
        for x, y in zip(xs, ys):
            inner_update(state, x, y, phase)
        history.extend(xs, ys)
        counts.append(len(xs))
        totals.append(total_loss(state.net, f, grid_n))
        mems.append(memory_loss(state, history))
        if snapshots:
            snaps.append(prediction_snapshot(state, f, grid_n))
    after = state.net.checksum("phi")
    if not plastic_phi and before != after:
        raise AssertionError("phenotype changed during a frozen deployment")
    return DeployResult(totals, mems, counts, before, after, snaps)
