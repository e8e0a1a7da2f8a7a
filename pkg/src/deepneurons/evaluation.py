"""Deployment baselines, the channel-count ablation and summary statistics."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .model import NetworkOfDANs, SharingMode, init_network, init_phi
from .rng import spawn_streams
from .tasks import SUBTASKS, TargetFunction, full_function_grid, sample_batch, sample_target_function
from .training import DivergenceError, ModelState, TrainConfig, deploy, meta_train

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class BaselineSpec:
    id: str
    phenotype: str  # "meta-learned" | "random"
    sharing: str  # "single" | "per-layer" | "per-node"
    plastic: bool

    def __post_init__(self):
        if self.phenotype not in ("meta-learned", "random"):
            raise ValueError(f"unknown phenotype source {self.phenotype!r}")
        if self.sharing not in ("single", "per-layer", "per-node"):
            raise ValueError(f"unknown sharing {self.sharing!r}")
        if self.phenotype == "meta-learned" and self.sharing != "single":
            raise ValueError("a meta-learned phenotype is a single shared phenotype")


DEPLOYMENT_SUITE = (
    BaselineSpec("net0", "meta-learned", "single", False),
    BaselineSpec("net1", "meta-learned", "single", True),
    BaselineSpec("net2", "random", "single", False),
    BaselineSpec("net3", "random", "single", True),
    BaselineSpec("net4", "random", "per-node", False),
    BaselineSpec("net5", "random", "per-node", True),
)

_SHARING_MODE = {
    "single": SharingMode.SHARED,
    "per-layer": SharingMode.PER_LAYER,
    "per-node": SharingMode.PER_NODE,
}


def prediction_snapshot(state: ModelState, f: TargetFunction, grid_n: int = 500):
    """``(xs, y_true, y_pred)`` over an even grid on the whole domain."""
    xs, ys = full_function_grid(f, grid_n)
    return xs, ys, state.net.predict(xs)


def build_baseline(
    spec: BaselineSpec, trained: NetworkOfDANs, phi_rng: np.random.Generator, config: TrainConfig
) -> ModelState:
    """Network for ``spec`` that starts from the trained network's VEC initialization.

    ``phi_rng`` must be a fresh generator per (trial, spec) pair so that
    fixed/plastic twins see the same random phenotype.
    """
    theta = {k: v.copy() for k, v in trained.theta.items()}
    mode = _SHARING_MODE[spec.sharing]
    if spec.phenotype == "meta-learned":
        if trained.mode is not SharingMode.SHARED:
            raise ConfigurationError("meta-learned baselines need a single-phenotype checkpoint")
        phi = {k: v.copy() for k, v in trained.phi.items()}
    else:
        count = {
            SharingMode.SHARED: 1,
            SharingMode.PER_LAYER: trained.topology.n_layers - 1,
            SharingMode.PER_NODE: trained.topology.n_dans,
        }[mode]
        phi = init_phi(trained.topology, count, phi_rng)
    net = NetworkOfDANs(trained.topology, mode, theta, phi, trained.seed)
    return ModelState(net, config.alpha, config.gamma, config.optimizer)


def _trial_inputs(seed: int, n_functions: int, inner_steps: int):
    streams = spawn_streams(seed)
    out = []
    for trial in range(n_functions):
        f = sample_target_function(streams["task_sampling"])
        data_rng = spawn_streams((seed, trial))["data_sampling"]
        batches = [sample_batch(f, st, inner_steps, data_rng) for st in SUBTASKS]
        out.append((f, batches))
    return out


def _run_cell(args):
    spec, trained, config, seed, trial, f, batches = args
    phi_seed = (seed, trial, 1 if spec.sharing == "per-node" else 0)
    state = build_baseline(spec, trained, spawn_streams(phi_seed)["phi_init"], config)
    res = deploy(state, f, batches=batches, plastic_phi=spec.plastic)
    rows = []
    for stage, tot in enumerate(res.total_losses):
        rows.append({
            "baseline": spec.id,
            "seed": seed,
            "trial": trial,
            "stage": stage,
            "total_loss": tot,
            "memory_loss": res.memory_losses[stage - 1] if stage > 0 else None,
        })
    return rows


def run_baseline_suite(
    trained: NetworkOfDANs | None,
    specs=DEPLOYMENT_SUITE,
    n_functions: int = 20,
    seeds=(0, 1, 2),
    config: TrainConfig | None = None,
    workers: int = 1,
) -> list[dict]:
    """Deploy every spec on identical functions and data; one row per (spec, seed, trial, stage)."""
    config = config or TrainConfig()
    if trained is None and any(s.phenotype == "meta-learned" for s in specs):
        raise ConfigurationError("meta-learned baselines need a phenotype checkpoint")
    if trained is None:
        # random-phenotype baselines only: VEC initialization comes from the config
        trained = init_network(config.topology, SharingMode.SHARED, config.seed)
    cells = []
    for seed in seeds:
        for trial, (f, batches) in enumerate(_trial_inputs(seed, n_functions, config.inner_steps)):
            for spec in specs:
                cells.append((spec, trained, config, seed, trial, f, batches))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    return [row for rows in results for row in rows]


def summarize(records: list[dict], key: str = "baseline") -> list[dict]:
    """Mean and sample sd of total and memory loss per (``key``, stage)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r[key], r["stage"]), []).append(r)
    table = []
    for (name, stage), rows in sorted(groups.items()):
        tot = np.array([r["total_loss"] for r in rows])
        mem = np.array([r["memory_loss"] for r in rows if r["memory_loss"] is not None])
        table.append({
            key: name,
            "stage": stage,
            "n": len(rows),
            "total_loss_mean": float(tot.mean()),
            "total_loss_sd": float(tot.std(ddof=1)) if len(tot) > 1 else 0.0,
            "memory_loss_mean": float(mem.mean()) if len(mem) else None,
            "memory_loss_sd": float(mem.std(ddof=1)) if len(mem) > 1 else (0.0 if len(mem) else None),
        })
    return table


def win_rates(records: list[dict], reference: str = "net0", stage: int = 5) -> dict[str, float]:
    """Fraction of paired trials where ``reference`` has lower memory loss at ``stage``."""
    by_trial: dict = {}
    for r in records:
        if r["stage"] == stage:
            by_trial.setdefault((r["seed"], r["trial"]), {})[r["baseline"]] = r["memory_loss"]
    others = sorted({b for d in by_trial.values() for b in d} - {reference})
    rates = {}
    for other in others:
        pairs = [(d[reference], d[other]) for d in by_trial.values() if reference in d and other in d]
        rates[other] = float(np.mean([a < b for a, b in pairs])) if pairs else float("nan")
    return rates


@dataclass(frozen=True)
class AblationSpec:
    channel_counts: tuple = (1, 5, 10, 20, 40)
    meta_epochs: int = 150
    seeds: tuple = (0, 1, 2)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.channel_counts)
        object.__setattr__(self, "channel_counts", counts)
        if not counts or min(counts) < 1 or any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError(f"channel counts must be strictly increasing and >= 1, got {counts}")


def curve_auc(curve) -> float:
    """Area under a per-epoch loss curve, normalised by its length."""
    curve = np.asarray(curve, dtype=np.float64)
    if len(curve) < 2:
        return float(curve.mean()) if len(curve) else float("nan")
    return float(np.trapezoid(curve) / (len(curve) - 1))


def _ablation_cell(args):
    n_channels, seed, base = args
    cfg = replace(base, n_channels=n_channels, seed=seed)
    try:
        curve = meta_train(cfg).curve
        err = None
    except DivergenceError as exc:
        curve, err = [], str(exc)
    return {"n_channels": n_channels, "seed": seed, "curve": curve, "error": err}


def run_channel_ablation(
    spec: AblationSpec, base: TrainConfig | None = None, workers: int = 1
) -> dict:
    """Meta-train once per (channel count, seed) with equal budgets.

    Returns the raw curves plus per-count mean AUC and the Spearman rank
    correlation between channel count and AUC.
    """
    base = replace(base or TrainConfig(), meta_epochs=spec.meta_epochs)
    cells = [(c, s, base) for c in spec.channel_counts for s in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_ablation_cell, cells))
    else:
        runs = [_ablation_cell(c) for c in cells]
    for r in runs:
        r["auc"] = curve_auc(r["curve"]) if r["curve"] else float("nan")
    mean_auc = {}
    for c in spec.channel_counts:
        aucs = [r["auc"] for r in runs if r["n_channels"] == c and np.isfinite(r["auc"])]
        mean_auc[c] = float(np.mean(aucs)) if aucs else float("nan")
    counts = [c for c in spec.channel_counts if np.isfinite(mean_auc[c])]
    rho = float(stats.spearmanr(counts, [mean_auc[c] for c in counts]).statistic) if len(counts) > 1 else float("nan")
    return {"runs": runs, "mean_auc": mean_auc, "spearman": rho}
