"""CSV serialization of datasets, graphs, checkpoints and run metrics.

Every real number is written with 17 significant digits, so a value read
back is bit-identical to the one written. Missing sample entries are written
as the literal ``NaN``.

Dataset manifest layout (one directory)::

    samples.csv           x_0,...,x_{d-1}; NaN where unobserved
    mask.csv              same shape; 1 = observed, 0 = missing
    regimes.csv           header ``targets``; semicolon-separated intervened nodes
    meta.csv              key,value
    samples_complete.csv  optional; true values of simulated data
    adjacency.csv         optional; ground-truth weighted adjacency
    edges.csv             optional; ground-truth edge list ``src,dst,weight``
    test/                 optional held-out manifest with the same layout
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .functions import LinearFunction, MaskDistribution, MaskedMlpFunction, NoisePrecision
from .graph import edge_list
from .model import CausalModel
from .sem import InterventionalDataset


class ManifestError(ValueError):
    """A data directory or checkpoint is incomplete or inconsistent."""


def fmt(value) -> str:
    """Lossless text form of a number (``NaN``/``inf`` spelled out)."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        w.writerows(rows)


def _read_rows(path: Path) -> list[list[str]]:
    if not path.exists():
        raise ManifestError(f"missing file {path}")
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_matrix(path, A: np.ndarray, header=None) -> None:
    _write_rows(Path(path), header, ([fmt(v) for v in row] for row in np.atleast_2d(A)))


def read_matrix(path, header: bool = False) -> np.ndarray:
    rows = _read_rows(Path(path))
    if header:
        rows = rows[1:]
    try:
        return np.array([[float(v) for v in row] for row in rows if row], dtype=float)
    except ValueError as exc:
        raise ManifestError(f"{path}: non-numeric entry ({exc})") from exc


def write_key_values(path, items: dict) -> None:
    rows = [[k, fmt(v) if isinstance(v, (int, float, np.number)) else str(v)]
            for k, v in items.items()]
    _write_rows(Path(path), ["key", "value"], rows)


def read_key_values(path) -> dict[str, str]:
    rows = _read_rows(Path(path))
    if not rows or rows[0] != ["key", "value"]:
        raise ManifestError(f"{path}: expected header key,value")
    return {r[0]: r[1] for r in rows[1:] if r}


# -- graphs -----------------------------------------------------------------

def write_graph(directory, B: np.ndarray, stem: str = "") -> None:
    """Write ``adjacency{stem}.csv`` and ``edges{stem}.csv``."""
    directory = Path(directory)
    write_matrix(directory / f"adjacency{stem}.csv", B)
    _write_rows(directory / f"edges{stem}.csv", ["src", "dst", "weight"],
                ([str(j), str(i), fmt(w)] for j, i, w in edge_list(B)))


def read_edges(path, d: int) -> np.ndarray:
    rows = _read_rows(Path(path))
    if rows[:1] != [["src", "dst", "weight"]]:
        raise ManifestError(f"{path}: expected header src,dst,weight")
    B = np.zeros((d, d))
    for r in rows[1:]:
        if r:
            B[int(r[0]), int(r[1])] = float(r[2])
    return B


# -- datasets ---------------------------------------------------------------

def save_dataset(directory, data: InterventionalDataset, meta: dict | None = None,
                 truth: np.ndarray | None = None, write_complete: bool = True) -> None:
    """Write a dataset manifest; ``data.x`` at hidden entries goes to ``samples_complete.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    d = data.d
    header = [f"x_{i}" for i in range(d)]
    write_matrix(directory / "samples.csv", data.observed_values(), header)
    _write_rows(directory / "mask.csv", header,
                ([str(int(v)) for v in row] for row in data.mask))
    _write_rows(directory / "regimes.csv", ["targets"],
                ([";".join(str(i) for i in np.flatnonzero(row))] for row in data.intervened))
    meta = dict(data.meta if meta is None else meta)
    meta["d"] = d
    write_key_values(directory / "meta.csv", meta)
    if write_complete and not np.isnan(data.x).any():
        write_matrix(directory / "samples_complete.csv", data.x, header)
    if truth is not None:
        write_graph(directory, truth)


def load_dataset(directory) -> InterventionalDataset:
    """Read a manifest written by :func:`save_dataset` (or by hand in the same layout).

    When ``samples_complete.csv`` is present its values fill ``x`` at the
    missing entries, so ``clean`` training can use them.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ManifestError(f"data directory {directory} does not exist")
    meta = read_key_values(directory / "meta.csv")
    rows = _read_rows(directory / "samples.csv")
    if not rows:
        raise ManifestError(f"{directory}/samples.csv is empty")
    d = len(rows[0])
    if rows[0] != [f"x_{i}" for i in range(d)]:
        raise ManifestError(f"{directory}/samples.csv: header must be x_0..x_{{d-1}}")
    if "d" in meta and int(meta["d"]) != d:
        raise ManifestError(f"meta.csv says d={meta['d']} but samples.csv has {d} columns")
    x = read_matrix(directory / "samples.csv", header=True).reshape(-1, d)
    mask = read_matrix(directory / "mask.csv", header=True).reshape(-1, d)
    if mask.shape != x.shape:
        raise ManifestError("mask.csv and samples.csv differ in shape")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ManifestError("mask.csv entries must be 0 or 1")
    mask = mask.astype(bool)
    if np.isnan(x[mask]).any():
        raise ManifestError("samples.csv has NaN at an entry marked observed")
    reg = _read_rows(directory / "regimes.csv")
    if reg[:1] != [["targets"]]:
        raise ManifestError("regimes.csv: expected header targets")
    body = reg[1:]
    if len(body) != x.shape[0]:
        raise ManifestError(f"regimes.csv has {len(body)} rows, samples.csv has {x.shape[0]}")
    intervened = np.zeros_like(mask)
    for k, r in enumerate(body):
        text = r[0] if r else ""
        for tok in filter(None, text.split(";")):
            i = int(tok)
            if not 0 <= i < d:
                raise ManifestError(f"regimes.csv row {k + 1}: target {i} out of range")
            intervened[k, i] = True
    complete_path = directory / "samples_complete.csv"
    if complete_path.exists():
        complete = read_matrix(complete_path, header=True).reshape(-1, d)
        if complete.shape != x.shape or not np.array_equal(complete[mask], x[mask]):
            raise ManifestError("samples_complete.csv disagrees with samples.csv")
        x = complete
    try:
        return InterventionalDataset(x, mask, intervened, meta)
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc


def load_truth(directory) -> np.ndarray | None:
    path = Path(directory) / "adjacency.csv"
    return read_matrix(path) if path.exists() else None


# -- model checkpoints ------------------------------------------------------

def save_checkpoint(path, model: CausalModel) -> None:
    """Key-value header followed by one ``[name]`` section per parameter array."""
    header = {"kind": model.kind, "d": model.d, "h": model.f.hidden,
              "temperature": model.mask.temperature, "budget": model.budget}
    lines = [f"{k},{fmt(v) if not isinstance(v, str) else v}" for k, v in header.items()]
    for name, arr in model.params().items():
        lines.append(f"[{name}]")
        for row in np.atleast_2d(arr):
            lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> CausalModel:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"missing checkpoint {path}")
    header: dict[str, str] = {}
    arrays: dict[str, list] = {}
    current = None
    for line in path.read_text().splitlines():
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            arrays[current] = []
        elif current is None:
            k, v = line.split(",", 1)
            header[k] = v
        else:
            arrays[current].append([float(t) for t in line.split(",")])
    try:
        d = int(header["d"])
        kind = header["kind"]
        params = {k: np.array(v, dtype=float) for k, v in arrays.items()}
        params["log_var"] = params["log_var"].reshape(d)
        f = LinearFunction(params["B"]) if kind == "linear" else \
            MaskedMlpFunction(params["W1"], params["W2"])
    except (KeyError, ValueError) as exc:
        raise ManifestError(f"{path}: malformed checkpoint ({exc})") from exc
    model = CausalModel(f, MaskDistribution(np.zeros((d, d)), float(header["temperature"])),
                        NoisePrecision(np.zeros(d)), float(header["budget"]))
    model.set_params(params)
    return model


# -- metrics ----------------------------------------------------------------

METRICS_HEADER = ["epoch", "observed_loglik", "q_value", "shd", "wall_time_s"]


def write_metrics(path, records) -> None:
    _write_rows(Path(path), METRICS_HEADER,
                ([fmt(r.epoch)] + [fmt(getattr(r, k)) for k in METRICS_HEADER[1:]]
                 for r in records))


def write_table(path, header, rows) -> None:
    """CSV with numbers formatted losslessly and strings passed through."""
    _write_rows(Path(path), header,
                ([v if isinstance(v, str) else fmt(v) for v in row] for row in rows))


def read_table(path) -> tuple[list[str], list[list[str]]]:
    rows = _read_rows(Path(path))
    if not rows:
        raise ManifestError(f"{path} is empty")
    return rows[0], [r for r in rows[1:] if r]
