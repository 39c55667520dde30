"""Command-line entry point: ``missnodags {generate,train,sweep,report}``.

Exit codes: 0 on success, 1 on usage or validation errors, 2 on numerical
failure (non-finite training state, singular factorizations, divergent
simulation).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, io
from .config import ConfigError, ExperimentConfig, load_config
from .graph import ParameterError
from .kernels import FactorizationError
from .likelihood import DensityError
from .sem import SimulationError
from .trainer import METHODS, NumericalError

log = logging.getLogger("missnodags")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (NumericalError, DensityError, SimulationError, FloatingPointError) + FactorizationError


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this CLI reserves 2 for numerics."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="missnodags", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a dataset manifest")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train one model on a dataset manifest")
    t.add_argument("--data", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--method", required=True, choices=METHODS)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None, help="override train.seed")

    s = sub.add_parser("sweep", help="run the missing-rate x method x seed grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=None)

    r = sub.add_parser("report", help="aggregate sweep or train outputs into one CSV")
    r.add_argument("--runs", required=True)
    r.add_argument("--out", required=True)
    return p


def _ensure_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    _ensure_writable(out)
    gen = harness.generate(cfg, args.seed)
    data = harness.write_generated(out, gen, cfg.missing.generate_rate, args.seed)
    log.info("wrote %d samples (d=%d, missing %.3f) to %s", data.n, data.d, data.missing_rate, out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
    data = io.load_dataset(args.data)
    truth = io.load_truth(args.data)
    if truth is not None and truth.shape != (data.d, data.d):
        raise io.ManifestError(f"adjacency.csv is {truth.shape}, data has d={data.d}")
    test_dir = Path(args.data) / "test"
    test = io.load_dataset(test_dir) if test_dir.is_dir() else None
    if test is not None and test.d != data.d:
        raise io.ManifestError("test manifest has a different d")
    out = Path(args.out)
    _ensure_writable(out)
    summary = harness.train_run(data, cfg.train, args.method, out, truth, test)
    log.info("finished: shd=%s nll_test=%s", summary["shd"], summary["nll_test"])
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg: ExperimentConfig = load_config(args.config)
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError("--jobs must be positive")
    out = Path(args.out)
    _ensure_writable(out)
    rows = harness.sweep(cfg, out, args.jobs)
    failed = [r for r in rows if r[6] != "ok"]
    if failed:
        log.error("%d of %d summary rows failed; see the status column", len(failed), len(rows))
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_report(args) -> int:
    agg = harness.report(args.runs, args.out)
    log.info("wrote %d aggregated rows to %s", len(agg), args.out)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NUMERIC_ERRORS as exc:
        print(f"missnodags: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, io.ManifestError, ParameterError, ValueError, OSError) as exc:
        print(f"missnodags: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
