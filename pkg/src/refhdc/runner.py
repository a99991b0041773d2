"""Experiment execution and report files.

A run directory holds ``records.csv`` (one row per global epoch),
``summary.json``, ``effective-config.json``, ``model.json`` and
``accuracy.png``.  ``records.csv`` is byte-for-byte reproducible from the
config: its ``seconds`` column stays empty unless wall-clock timing is
requested, because timings differ between otherwise identical runs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import costs
from .config import KNOWN_SHAPES, RunConfig
from .datasets import Dataset, load_from_manifest, subsample_train
from .errors import ConfigError
from .features import make_rffm, preprocess
from .fedsim import (
    STREAM_BASIS,
    STREAM_PARTITION,
    STREAM_RFFM,
    STREAM_SUBSAMPLE,
    FederatedRun,
    RoundRecord,
    derive_seed,
)
from .hdspace import GENERATOR
from .plotting import plot_trajectories
from .prototype import save_model

log = logging.getLogger(__name__)

RECORD_FIELDS = ("round", "stage", "accuracy", "uplink_bytes", "cum_uplink_bytes", "cum_flops", "seconds")

NOTES = {
    "encoding": "h = cos(xW + phi) * sin(xW), elementwise product",
    "retraining": "sequential per-row updates; true class += alpha*(1-dist_true)*h, "
                  "predicted class -= alpha*(1-dist_pred)*h",
    "pipeline": "normalize -> rffm -> encode",
    "rffm": "sqrt(2/F) * cos(x @ Omega / sigma + b); replaces the raw features",
    "refining_positions": "one subset per global epoch, drawn by the server and shared by all clients",
    "stage1_evaluation": "concatenation of the sub-models trained so far, untrained blocks zero",
    "non_iid": "each client takes the k classes with the most unassigned slots (random tie-break); rows of a class split evenly among its holders",
    "generator": GENERATOR,
}


def records_to_csv(records: Sequence[RoundRecord], wall_clock: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    for r in records:
        writer.writerow([
            r.round, r.stage, repr(r.accuracy), r.uplink_bytes, r.cum_uplink_bytes,
            r.cum_flops, f"{r.seconds:.6f}" if wall_clock else "",
        ])
    return buf.getvalue()


def read_records(path) -> List[RoundRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append(RoundRecord(
                int(row["round"]), row["stage"], float(row["accuracy"]), int(row["uplink_bytes"]),
                int(row["cum_uplink_bytes"]), int(row["cum_flops"]),
                float(row["seconds"]) if row["seconds"] else float("nan"),
            ))
    return out


def closed_form_flops(cfg: RunConfig, n: int, C: int, d: int) -> int:
    fed = cfg.effective_federation
    if cfg.method == "baseline":
        return costs.cost_baseline(n, C, fed.dim, d, fed.local_epochs, fed.global_epochs)
    return costs.cost_refhdc(
        n, C, fed.dim, d, fed.num_submodels, fed.local_epochs, fed.G_T, fed.G_R, fed.D0,
    )


def prepare_dataset(cfg: RunConfig, dataset: Optional[Dataset] = None) -> Dataset:
    """Load (unless given), subsample and preprocess the dataset for ``cfg``."""
    if dataset is None:
        if cfg.manifest is None:
            raise ConfigError({"manifest": "a dataset manifest is required to run"})
        dataset = load_from_manifest(cfg.manifest, cfg.dataset)
    seed = cfg.federation.master_seed
    if cfg.train_limit is not None:
        dataset = subsample_train(dataset, cfg.train_limit, derive_seed(seed, STREAM_SUBSAMPLE))
    rffm = None
    if cfg.rffm.enabled:
        rffm = make_rffm(derive_seed(seed, STREAM_RFFM), dataset.feature_dim, cfg.rffm.features, cfg.rffm.sigma)
    return preprocess(dataset, cfg.normalization, rffm)


def execute(cfg: RunConfig, dataset: Optional[Dataset] = None, threads: int = 1):
    """Run ``cfg``; returns the finished :class:`FederatedRun` and wall seconds."""
    started = time.perf_counter()
    data = prepare_dataset(cfg, dataset)

    def progress(rec):
        log.info("round %d %s accuracy=%.4f", rec.round, rec.stage, rec.accuracy)

    run = FederatedRun(cfg.effective_federation, data, threads=threads, on_round=progress)
    run.run()
    return run, time.perf_counter() - started


def summarize(cfg: RunConfig, run: FederatedRun, wall_seconds: float) -> dict:
    fed = cfg.effective_federation
    recs = run.records
    data = run.dataset
    accs = [r.accuracy for r in recs]
    best = max(range(len(accs)), key=lambda i: accs[i]) if accs else None
    n = sum(c.labels.size for c in run.clients)
    summary = {
        "name": cfg.name,
        "method": cfg.method,
        "dataset": cfg.dataset,
        "rounds": len(recs),
        "max_accuracy": accs[best] if accs else None,
        "max_accuracy_round": recs[best].round if accs else None,
        "final_accuracy": accs[-1] if accs else None,
        "pre_refine_accuracy": (
            accs[fed.G_T - 1] if cfg.method == "refhdc" and fed.G_T and len(accs) >= fed.G_T else None
        ),
        "total_uplink_bytes": recs[-1].cum_uplink_bytes if recs else 0,
        "total_flops": recs[-1].cum_flops if recs else 0,
        "closed_form_flops": closed_form_flops(cfg, n, data.num_classes, data.feature_dim),
        "model_size_bytes": costs.model_size(data.num_classes, fed.dim, fed.storage_bytes_per_element),
        "train_size": n,
        "test_size": int(data.test_y.size),
        "num_classes": data.num_classes,
        "encoder_input_dim": data.feature_dim,
        "wall_seconds": round(wall_seconds, 3),
    }
    return summary


def effective_config(cfg: RunConfig, threads: int) -> dict:
    seed = cfg.federation.master_seed
    doc = cfg.to_dict()
    doc["threads"] = threads
    doc["derived_seeds"] = {
        "basis": derive_seed(seed, STREAM_BASIS),
        "rffm": derive_seed(seed, STREAM_RFFM),
        "partition": derive_seed(seed, STREAM_PARTITION),
        "train_subsample": derive_seed(seed, STREAM_SUBSAMPLE),
    }
    doc["notes"] = NOTES
    return doc


def write_run(out_dir, cfg: RunConfig, run: FederatedRun, wall_seconds: float,
              threads: int = 1, wall_clock: bool = False, plot: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(cfg, run, wall_seconds)
    (out / "records.csv").write_bytes(records_to_csv(run.records, wall_clock).encode("utf-8"))
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "effective-config.json").write_text(json.dumps(effective_config(cfg, threads), indent=2) + "\n")
    if run.model is not None:
        save_model(out / "model.json", run.model, cfg.federation.alpha, run.basis.seed)
    if plot and run.records:
        label = cfg.name or cfg.method
        plot_trajectories(
            {label: ([r.round for r in run.records], [r.accuracy for r in run.records])},
            out / "accuracy.png", title=cfg.dataset,
        )
    return summary


def _format_mb(n_bytes: int) -> str:
    return f"{n_bytes / 1e6:g}"


def compare_runs(run_dirs: Sequence, reference=None) -> List[Dict]:
    """Rows of max accuracy, rounds to reach the reference's max accuracy and
    uplink traffic spent until then, with deltas against the reference run."""
    run_dirs = [Path(p) for p in run_dirs]
    reference = Path(reference) if reference is not None else run_dirs[0]
    loaded = {}
    for p in dict.fromkeys(run_dirs + [reference]):
        recs = read_records(p / "records.csv")
        meta = {}
        if (p / "summary.json").exists():
            meta = json.loads((p / "summary.json").read_text())
        loaded[p] = (recs, meta)
    ref_recs = loaded[reference][0]
    target = max(r.accuracy for r in ref_recs)
    ref_round = costs.rounds_to_target([r.accuracy for r in ref_recs], target)
    ref_bytes = ref_recs[ref_round - 1].cum_uplink_bytes

    rows = []
    for p in run_dirs:
        recs, meta = loaded[p]
        accs = [r.accuracy for r in recs]
        hit = costs.rounds_to_target(accs, target)
        if hit is None:
            rounds = f"{len(recs)}+"
            spent = recs[-1].cum_uplink_bytes if recs else 0
            traffic = f"{_format_mb(spent)}+"
        else:
            rounds = str(hit)
            spent = recs[hit - 1].cum_uplink_bytes
            traffic = _format_mb(spent)
        rows.append({
            "run": meta.get("name") or p.name,
            "method": meta.get("method", ""),
            "max_accuracy": max(accs) if accs else None,
            "target_accuracy": target,
            "rounds_to_target": rounds,
            "uplink_mb": traffic,
            "uplink_bytes": spent,
            "uplink_delta": costs.percent_delta(spent, ref_bytes),
        })
    return rows


def rows_to_csv(rows: Sequence[Dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def cost_rows(configs: Sequence[RunConfig], rounds: Optional[Sequence[Optional[int]]] = None) -> List[Dict]:
    """Closed-form cost and traffic per config, without training.

    ``rounds[i]`` limits config ``i``'s traffic to its first rounds (default:
    all ``G``); deltas are against the first config.
    """
    rows = []
    ref_bytes = None
    rounds = list(rounds or [])
    for i, cfg in enumerate(configs):
        fed = cfg.effective_federation
        known = KNOWN_SHAPES.get(cfg.dataset, {})
        n = cfg.train_limit or cfg.train_size or known.get("train_size")
        C = cfg.num_classes or known.get("num_classes")
        d_raw = cfg.input_dim or known.get("input_dim")
        if None in (n, C, d_raw):
            raise ConfigError({"dataset": f"unknown shape for {cfg.dataset!r}; set train_size, num_classes, input_dim"})
        d = cfg.rffm.features if cfg.rffm.enabled else d_raw
        R = rounds[i] if i < len(rounds) and rounds[i] is not None else fed.global_epochs
        if not 0 <= R <= fed.global_epochs:
            raise ConfigError({"rounds": f"{R} outside [0, G={fed.global_epochs}]"})
        train_round = costs.round_traffic(fed.num_clients, C, fed.submodel_dim, fed.traffic_bytes_per_element)
        refine_round = costs.round_traffic(fed.num_clients, C, fed.D0, fed.traffic_bytes_per_element)
        in_training = min(R, fed.G_T)
        uplink = in_training * train_round + (R - in_training) * refine_round
        if ref_bytes is None:
            ref_bytes = uplink
        size = costs.model_size(C, fed.dim, fed.storage_bytes_per_element)
        rows.append({
            "config": cfg.name or f"config{i + 1}",
            "method": cfg.method,
            "N": fed.num_clients,
            "C": C,
            "D": fed.dim,
            "D_hat": fed.submodel_dim,
            "D0": fed.D0,
            "G": fed.global_epochs,
            "G_T": fed.G_T,
            "G_R": fed.G_R,
            "L": fed.local_epochs,
            "train_size": n,
            "encoder_input_dim": d,
            "c1": costs.c1(n, fed.dim, d),
            "c2": costs.c2(n, fed.dim),
            "flops": closed_form_flops(cfg, n, C, d),
            "baseline_flops": costs.cost_baseline(n, C, fed.dim, d, fed.local_epochs, fed.global_epochs),
            "train_round_bytes": train_round,
            "refine_round_bytes": refine_round,
            "rounds": R,
            "uplink_bytes": uplink,
            "uplink_mb": _format_mb(uplink),
            "uplink_delta": costs.percent_delta(uplink, ref_bytes),
            "model_bytes": size,
            "model_kb": f"{size / 1e3:g}",
        })
    return rows

