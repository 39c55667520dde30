"""Dataset generation, single training runs, missing-rate sweeps and reports."""
from __future__ import annotations

import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig
from .graph import assign_weights_and_project, sample_erdos_renyi, shd
from .kernels import BACKEND
from .missingness import McarConfig, apply_mcar
from .sem import GroundTruthSEM, InterventionalDataset, make_single_node_plan, simulate_plan
from .trainer import TrainConfig, config_dict, fit

log = logging.getLogger(__name__)

SUMMARY_HEADER = ["missing_rate", "method", "seed", "shd", "nll_test", "wall_time_s", "status"]
AGG_HEADER = ["missing_rate", "method", "n", "shd_mean", "shd_stderr",
              "nll_test_mean", "nll_test_stderr", "wall_time_s_mean"]
RUN_FILES = ("metrics.csv", "checkpoint.csv", "adjacency_est.csv", "edges_est.csv", "run_meta.csv")


@dataclass
class GeneratedData:
    truth: np.ndarray                 # weighted ground-truth adjacency
    complete: InterventionalDataset   # fully observed training samples
    test: InterventionalDataset | None


def generate(cfg: ExperimentConfig, seed: int) -> GeneratedData:
    """Draw a graph, its weights and complete train/test samples for one seed.

    Each seed owns independent streams for the graph, the training samples
    and the test samples, so the result does not depend on the missing rate.
    """
    dc = cfg.data
    g_rng = np.random.default_rng([seed, 0])
    G = sample_erdos_renyi(dc.d, dc.density, g_rng)
    B = assign_weights_and_project(G, dc.weight_low, dc.weight_high, dc.lipschitz, g_rng)
    sem = GroundTruthSEM(dc.sem, B, dc.sigma, dc.lipschitz)
    meta = {"d": dc.d, "sem": dc.sem, "sigma": dc.sigma, "seed": seed,
            "density": dc.density, "lipschitz": dc.lipschitz,
            "n_per_intervention": dc.n_per_intervention}
    data = simulate_plan(sem, make_single_node_plan(dc.d, dc.n_per_intervention),
                         np.random.default_rng([seed, 1]))
    data.meta = dict(meta)
    test = None
    if dc.n_test_per_intervention > 0:
        test = simulate_plan(sem, make_single_node_plan(dc.d, dc.n_test_per_intervention),
                             np.random.default_rng([seed, 2]))
        test.meta = dict(meta, split="test")
    return GeneratedData(B, data, test)


def mask_data(data: InterventionalDataset, rate: float, seed: int) -> InterventionalDataset:
    """MCAR-mask ``data`` with a stream owned by ``(seed, rate)``."""
    rng = np.random.default_rng([seed, 3, int(round(rate * 1e6))])
    out = apply_mcar(data, McarConfig(rate, seed), rng)
    out.meta = dict(data.meta, missing_rate=rate)
    return out


def write_generated(out_dir, gen: GeneratedData, rate: float, seed: int) -> InterventionalDataset:
    masked = mask_data(gen.complete, rate, seed)
    io.save_dataset(out_dir, masked, truth=gen.truth)
    if gen.test is not None:
        io.save_dataset(Path(out_dir) / "test", gen.test)
    return masked


def train_run(data: InterventionalDataset, train_cfg: TrainConfig, method: str, out_dir,
              truth: np.ndarray | None = None, test: InterventionalDataset | None = None) -> dict:
    """Train once and write the run artifacts; returns the run summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    structure_truth = (np.abs(truth) > 0).astype(int) if truth is not None else None
    model, metrics = fit(data, train_cfg, truth=structure_truth, method=method, test=test)
    est = metrics.structure
    W = model.adjacency() * est

    io.write_metrics(out_dir / "metrics.csv", metrics.records)
    io.save_checkpoint(out_dir / "checkpoint.csv", model)
    io.write_matrix(out_dir / "adjacency_est.csv", W)
    io.write_table(out_dir / "edges_est.csv", ["src", "dst", "weight"],
                   [[str(j), str(i), float(W[j, i])] for j, i in zip(*np.nonzero(est))])
    last = metrics.records[-1] if metrics.records else None
    summary = {
        "method": method,
        "seed": train_cfg.seed,
        "missing_rate": float(data.meta.get("missing_rate", data.missing_rate)),
        "shd": float(shd(est, structure_truth)) if structure_truth is not None else math.nan,
        "nll_test": metrics.test_nll,
        "wall_time_s": last.wall_time_s if last else 0.0,
        "final_observed_loglik": last.observed_loglik if last else math.nan,
        "max_lipschitz": float(np.max(metrics.column("max_lipschitz"))) if last else math.nan,
        "n_edges": int(est.sum()),
        "backend": BACKEND,
        "status": "ok",
    }
    settings = config_dict(train_cfg)
    flat = {f"train.{k}": v for k, v in settings.items() if k != "logdet"}
    flat.update({f"train.logdet.{k}": v for k, v in settings["logdet"].items()})
    flat = {k: str(v) if v is None or isinstance(v, bool) else v for k, v in flat.items()}
    io.write_key_values(out_dir / "run_meta.csv", {**summary, **flat})
    return summary


def _cell(args) -> list[list]:
    """One grid cell; returns summary rows (several for a reused clean run)."""
    cfg, seed, rates, method, out_root = args
    gen = generate(cfg, seed)
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    if method == "clean":
        run_dir = Path(out_root) / f"seed_{seed}" / "clean"
        data = gen.complete
        data.meta = dict(data.meta, missing_rate=0.0)
    else:
        run_dir = Path(out_root) / f"seed_{seed}" / f"rate_{rates[0]:g}" / method
        data = mask_data(gen.complete, rates[0], seed)
    try:
        s = train_run(data, train_cfg, method, run_dir, gen.truth, gen.test)
        vals, status = (s["shd"], s["nll_test"], s["wall_time_s"]), "ok"
    except Exception as exc:  # recorded per row; the grid continues
        log.warning("cell seed=%s method=%s rates=%s failed: %s", seed, method, rates, exc)
        vals, status = (math.nan, math.nan, math.nan), f"error: {type(exc).__name__}: {exc}"
    return [[float(r), method, seed, *vals, status] for r in rates]


def sweep(cfg: ExperimentConfig, out_dir, jobs: int | None = None) -> list[list]:
    """Run the (rate, method, seed) grid and write ``summary.csv`` and ``summary_agg.csv``.

    ``clean`` does not depend on the rate, so it is trained once per seed and
    its result is repeated on every rate row.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rates = [float(r) for r in cfg.missing.rates]
    cells = []
    for seed in range(cfg.sweep.seeds):
        for method in cfg.sweep.methods:
            if method == "clean":
                cells.append((cfg, seed, rates, method, out_dir / "runs"))
            else:
                cells.extend((cfg, seed, [r], method, out_dir / "runs") for r in rates)
    jobs = jobs or cfg.sweep.jobs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
            chunks = list(pool.map(_cell, cells))
    else:
        chunks = [_cell(c) for c in cells]
    rows = sorted((row for chunk in chunks for row in chunk),
                  key=lambda r: (r[0], r[1], r[2]))
    io.write_table(out_dir / "summary.csv", SUMMARY_HEADER, rows)
    io.write_table(out_dir / "summary_agg.csv", AGG_HEADER, aggregate(rows))
    return rows


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def aggregate(rows) -> list[list]:
    """Mean and standard error per (rate, method) over successful rows.

    ``rows`` follow :data:`SUMMARY_HEADER`. The result is sorted by rate and
    then method name, whatever the input order.
    """
    groups: dict[tuple[float, str], list] = {}
    for r in rows:
        if r[6] != "ok":
            continue
        groups.setdefault((float(r[0]), r[1]), []).append(r)
    out = []
    for (rate, method) in sorted(groups):
        g = groups[(rate, method)]
        shd_m, shd_se = _mean_se([x[3] for x in g])
        nll_m, nll_se = _mean_se([x[4] for x in g])
        out.append([rate, method, len(g), shd_m, shd_se, nll_m, nll_se,
                    float(np.mean([x[5] for x in g]))])
    return out


def collect_rows(runs_dir) -> list[list]:
    """Summary rows from every ``summary.csv`` under ``runs_dir``.

    Falls back to the ``run_meta.csv`` of individual ``train`` runs when no
    sweep summary exists.
    """
    runs_dir = Path(runs_dir)
    summaries = sorted(runs_dir.rglob("summary.csv")) if runs_dir.is_dir() else []
    rows = []
    if summaries:
        for path in summaries:
            header, body = io.read_table(path)
            if header[:len(SUMMARY_HEADER) - 1] != SUMMARY_HEADER[:-1]:
                raise io.ManifestError(f"{path}: unexpected header {header}")
            for b in body:
                status = b[6] if len(b) > 6 else "ok"
                rows.append([float(b[0]), b[1], int(b[2]), float(b[3]), float(b[4]), float(b[5]), status])
        return rows
    metas = sorted(runs_dir.rglob("run_meta.csv")) if runs_dir.is_dir() else []
    for path in metas:
        m = io.read_key_values(path)
        rows.append([float(m["missing_rate"]), m["method"], int(m["seed"]), float(m["shd"]),
                     float(m["nll_test"]), float(m["wall_time_s"]), m.get("status", "ok")])
    return rows


def report(runs_dir, out_path) -> list[list]:
    rows = collect_rows(runs_dir)
    if not rows:
        raise io.ManifestError(f"no runs found under {runs_dir}")
    agg = aggregate(rows)
    io.write_table(out_path, AGG_HEADER, agg)
    return agg
