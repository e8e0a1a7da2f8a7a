"""Command-line entry point: ``deepneurons <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checkpoint, config, gradcheck, kernels
from .evaluation import (
    AblationSpec,
    DEPLOYMENT_SUITE,
    run_baseline_suite,
    run_channel_ablation,
    summarize,
    win_rates,
)
from .rng import STREAMS, spawn_streams
from .tasks import SUBTASKS, sample_batch, sample_target_function
from .training import DivergenceError, ModelState, deploy, meta_train

log = logging.getLogger("deepneurons")

MANIFEST_VERSION = 1
# outputs that must be byte-identical on replay
DETERMINISTIC_OUTPUTS = {
    "meta-train": ["metrics.jsonl", "phenotype.ckpt"],
    "deploy": ["metrics.jsonl", "predictions.csv", "summary.json"],
    "baselines": ["records.csv", "table.csv", "win_rates.json"],
    "ablate-channels": ["curves.csv", "summary.json"],
}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _run_id(command: str, cfg: dict, extra: str = "") -> str:
    blob = json.dumps({"command": command, "config": cfg, "extra": extra}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


class _Run:
    """Collects manifest fields and writes metrics for one CLI invocation."""

    def __init__(self, command, cfg, out, input_ckpt=None):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.input_ckpt = input_ckpt
        extra = _sha256(input_ckpt) if input_ckpt else ""
        self.run_id = _run_id(command, cfg, extra)
        self.started = _now()
        self.functions: list = []
        self._metrics = (self.out / "metrics.jsonl").open("w")
        self._timings = (self.out / "timings.jsonl").open("w")

    def metric(self, record: dict, wall_ms: float):
        rec = {"run_id": self.run_id, **record}
        rec["wall_ms"] = round(wall_ms, 3) if self.cfg["output"]["record_wall_ms"] else None
        self._metrics.write(json.dumps(rec) + "\n")
        self._timings.write(json.dumps({**{k: record[k] for k in record if k in ("epoch", "stage", "function")}, "wall_ms": wall_ms}) + "\n")

    def finish(self, output_ckpt=None) -> Path:
        self._metrics.close()
        self._timings.close()
        (self.out / "config.yaml").write_text(config.dump(self.cfg))
        outputs = {}
        for name in DETERMINISTIC_OUTPUTS.get(self.command, []):
            p = self.out / name
            if p.exists():
                outputs[name] = _sha256(p)
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "command": self.command,
            "run_id": self.run_id,
            "config": self.cfg,
            "seed_lineage": {
                "root_seed": self.cfg["seed"],
                "streams": list(STREAMS),
                "derivation": "numpy SeedSequence(root).spawn(len(streams)); trials use SeedSequence([root, trial])",
            },
            "code_version": {
                "package": __version__,
                "kernel_backend": kernels.BACKEND,
                "numpy": np.__version__,
            },
            "target_functions": self.functions,
            "checkpoints": {
                "input": {"path": str(self.input_ckpt), "sha256": _sha256(self.input_ckpt)} if self.input_ckpt else None,
                "output": {"path": str(output_ckpt), "sha256": _sha256(output_ckpt)} if output_ckpt else None,
            },
            "outputs": outputs,
            "started": self.started,
            "finished": _now(),
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def _load_cfg(args) -> dict:
    cfg = config.load(args.config) if args.config else config.validate({})
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def cmd_meta_train(args) -> int:
    cfg = _load_cfg(args)
    tc = config.train_config(cfg)
    run = _Run("meta-train", cfg, args.out)

    def on_epoch(rec):
        run.metric(
            {"phase": "meta-train", "epoch": rec.epoch, "memory_loss": rec.memory_loss,
             "total_loss": rec.total_loss, "stage_memory_losses": rec.stage_memory_losses},
            rec.wall_ms,
        )
        if rec.epoch % 10 == 0:
            log.info("meta-epoch %d  memory loss %.5f", rec.epoch, rec.memory_loss)

    try:
        result = meta_train(tc, on_epoch=on_epoch)
    except DivergenceError as exc:
        run.finish()
        print(f"diverged: {exc} (step {exc.step}, meta-epoch {exc.epoch})", file=sys.stderr)
        return 2
    run.functions = [f.to_dict() for f in result.functions]
    ckpt = run.out / "phenotype.ckpt"
    checkpoint.save(ckpt, result.state.net, {"meta_epochs": tc.meta_epochs, "run_id": run.run_id})
    manifest = run.finish(ckpt)
    curve = result.curve
    if curve:
        tail = curve[-min(100, len(curve)):]
        print(f"final memory loss (mean of last {len(tail)} epochs): {np.mean(tail):.5f}")
    print(f"checkpoint: {ckpt}\nmanifest: {manifest}")
    return 0


def _load_state(path, cfg):
    net, _ = checkpoint.load(path)
    t = cfg["train"]
    return ModelState(net, t["alpha"], t["gamma"], t["optimizer"])


def cmd_deploy(args) -> int:
    cfg = _load_cfg(args)
    try:
        state = _load_state(args.checkpoint, cfg)
    except checkpoint.CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    dcfg = cfg["deploy"]
    run = _Run("deploy", cfg, args.out, args.checkpoint)
    task_rng = spawn_streams(dcfg["seed"])["task_sampling"]
    summary = []
    with (run.out / "predictions.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["function", "stage", "x", "y_true", "y_pred"])
        for i in range(dcfg["n_functions"]):
            t0 = time.perf_counter()
            f = sample_target_function(task_rng)
            run.functions.append(f.to_dict())
            data_rng = spawn_streams((dcfg["seed"], i))["data_sampling"]
            try:
                res = deploy(state, f, data_rng, inner_steps=cfg["train"]["inner_steps"],
                             plastic_phi=dcfg["plastic_phi"], grid_n=dcfg["grid_n"], snapshots=True)
            except DivergenceError as exc:
                run.finish()
                print(f"diverged on function {i}: {exc}", file=sys.stderr)
                return 2
            wall = (time.perf_counter() - t0) * 1e3
            for stage, tot in enumerate(res.total_losses):
                run.metric(
                    {"phase": "deploy", "function": i, "stage": stage, "total_loss": tot,
                     "memory_loss": res.memory_losses[stage - 1] if stage else None,
                     "samples": res.samples_per_stage[stage - 1] if stage else 0},
                    wall / len(res.total_losses),
                )
            for stage, (xs, yt, yp) in enumerate(res.snapshots):
                for x, a, b in zip(xs, yt, yp):
                    writer.writerow([i, stage, repr(float(x)), repr(float(a)), repr(float(b))])
            summary.append({
                "function": i,
                "phi_checksum_before": res.phi_checksum_before,
                "phi_checksum_after": res.phi_checksum_after,
                "phi_unchanged": res.phi_checksum_before == res.phi_checksum_after,
                "total_samples": sum(res.samples_per_stage),
                "final_memory_loss": res.memory_losses[-1],
            })
            if not dcfg["plastic_phi"] and not summary[-1]["phi_unchanged"]:
                print("error: phenotype changed during frozen deployment", file=sys.stderr)
                return 4
    (run.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    manifest = run.finish()
    mean = np.mean([s["final_memory_loss"] for s in summary])
    print(f"mean stage-5 memory loss over {len(summary)} functions: {mean:.5f}\nmanifest: {manifest}")
    return 0


def _write_csv(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k]) for k in fields})


def cmd_baselines(args) -> int:
    cfg = _load_cfg(args)
    bcfg = cfg["baselines"]
    try:
        trained, _ = checkpoint.load(args.checkpoint)
    except checkpoint.CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    run = _Run("baselines", cfg, args.out, args.checkpoint)
    records = run_baseline_suite(
        trained, DEPLOYMENT_SUITE, bcfg["n_functions"], tuple(bcfg["seeds"]),
        config.train_config(cfg), workers=args.workers,
    )
    _write_csv(run.out / "records.csv", records,
               ["baseline", "seed", "trial", "stage", "total_loss", "memory_loss"])
    table = summarize(records)
    _write_csv(run.out / "table.csv", table,
               ["baseline", "stage", "n", "total_loss_mean", "total_loss_sd",
                "memory_loss_mean", "memory_loss_sd"])
    rates = win_rates(records)
    (run.out / "win_rates.json").write_text(json.dumps(rates, indent=2, sort_keys=True) + "\n")
    for seed in bcfg["seeds"]:
        rng = spawn_streams(seed)["task_sampling"]
        run.functions.extend(sample_target_function(rng).to_dict() for _ in range(bcfg["n_functions"]))
    manifest = run.finish()
    for row in table:
        if row["stage"] == 5:
            print(f"{row['baseline']}  stage-5 memory loss {row['memory_loss_mean']:.5f} ± {row['memory_loss_sd']:.5f}")
    print("net0 win rate vs: " + ", ".join(f"{k}={v:.2f}" for k, v in rates.items()))
    print(f"manifest: {manifest}")
    return 0


def cmd_ablate_channels(args) -> int:
    cfg = _load_cfg(args)
    acfg = cfg["ablation"]
    spec = AblationSpec(tuple(acfg["channel_counts"]), acfg["meta_epochs"], tuple(acfg["seeds"]))
    run = _Run("ablate-channels", cfg, args.out)
    result = run_channel_ablation(spec, config.train_config(cfg), workers=args.workers)
    with (run.out / "curves.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_channels", "seed", "epoch", "memory_loss"])
        for r in result["runs"]:
            for e, v in enumerate(r["curve"]):
                w.writerow([r["n_channels"], r["seed"], e, repr(float(v))])
    summary = {
        "mean_auc": {str(k): v for k, v in result["mean_auc"].items()},
        "runs": [{k: r[k] for k in ("n_channels", "seed", "auc", "error")} for r in result["runs"]],
        "spearman_rho": result["spearman"],
    }
    (run.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest = run.finish()
    for c, auc in result["mean_auc"].items():
        print(f"n_channels={c:<3d} mean AUC {auc:.5f}")
    print(f"spearman_rho={result['spearman']:.3f}")
    print(f"manifest: {manifest}")
    return 0


def cmd_gradcheck(args) -> int:
    failed = 0
    for source in ("tape", "kernel"):
        reports = gradcheck.run_suite(args.n_nets, args.seed, source)
        for rep in reports:
            status = "PASS" if rep.passed else "FAIL"
            print(f"[{source}] {status} {rep.label}")
            for t in rep.tensors:
                line = f"    {t.name:<8s} n={t.size:<5d} max_rel_err={t.max_rel_err:.2e} max_abs_err={t.max_abs_err:.2e}"
                if not t.passed:
                    line += f"  <- component {t.worst_index}"
                print(line)
            failed += not rep.passed
    print(f"gradcheck: {failed} failing network(s)")
    return 1 if failed else 0


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("manifest_version", 0) > MANIFEST_VERSION:
        print("error: manifest is newer than this build", file=sys.stderr)
        return 3
    backend = manifest["code_version"]["kernel_backend"]
    if backend in kernels.available_backends():
        kernels.set_backend(backend)
    cfg_path = Path(args.out) / "replay_config.yaml"
    Path(args.out).mkdir(parents=True, exist_ok=True)
    cfg_path.write_text(config.dump(manifest["config"]))
    ns = argparse.Namespace(config=str(cfg_path), out=args.out, seed=None, workers=args.workers)
    src = manifest["checkpoints"]["input"]
    if src:
        if _sha256(src["path"]) != src["sha256"]:
            print(f"error: input checkpoint {src['path']} changed since the run", file=sys.stderr)
            return 3
        ns.checkpoint = src["path"]
    code = COMMANDS[manifest["command"]](ns)
    if code:
        return code
    mismatched = [
        name for name, digest in manifest["outputs"].items()
        if _sha256(Path(args.out) / name) != digest
    ]
    for name in manifest["outputs"]:
        print(f"{'MISMATCH' if name in mismatched else 'identical'}  {name}")
    return 1 if mismatched else 0


COMMANDS = {
    "meta-train": cmd_meta_train,
    "deploy": cmd_deploy,
    "baselines": cmd_baselines,
    "ablate-channels": cmd_ablate_channels,
    "gradcheck": cmd_gradcheck,
    "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deepneurons", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--kernel", choices=["numpy", "cython"], help="force a kernel backend")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint_arg=False):
        sp.add_argument("--config", help="YAML config (or a run manifest)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override the root seed")
        sp.add_argument("--workers", type=int, default=1, help="parallel suite cells")
        if checkpoint_arg:
            sp.add_argument("--checkpoint", required=True, help="phenotype checkpoint")

    common(sub.add_parser("meta-train", help="meta-learn a phenotype"))
    common(sub.add_parser("deploy", help="continual learning with a frozen phenotype"), True)
    common(sub.add_parser("baselines", help="net0..net5 deployment comparison"), True)
    common(sub.add_parser("ablate-channels", help="n_channels ablation of meta-training"))
    g = sub.add_parser("gradcheck", help="finite-difference gradient check")
    g.add_argument("--n-nets", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    r = sub.add_parser("replay", help="rerun a manifest and compare outputs byte for byte")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    if args.kernel:
        kernels.set_backend(args.kernel)
    try:
        return COMMANDS[args.command](args)
    except config.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
