"""Command-line entry point: ``efcnet synth | efc | nfc | train | cv | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import errors, io
from .config import RunConfig, config_from_dict, load_config
from .connectivity import edge_fc, edge_fc_blocked, node_fc
from .evaluation import MetricsReport, cross_validate
from .graph import build_graph
from .model import GraphBatch, train
from .synth import generate_timeseries
from .timeseries import as_timeseries, edge_time_series, zscore

logger = logging.getLogger("efcnet")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_FORMAT = 5
EXIT_DEGENERATE = 6
EXIT_BUDGET = 7
EXIT_CHECKPOINT = 8
EXIT_DATASET = 9

# most specific first
_EXIT_CODES = [
    (errors.ConfigError, EXIT_CONFIG),
    (errors.CheckpointVersionError, EXIT_CHECKPOINT),
    (errors.BudgetTooSmall, EXIT_BUDGET),
    ((errors.DegenerateSeries, errors.DegenerateEdge), EXIT_DEGENERATE),
    ((errors.EmptyDataset, errors.SingleClass, errors.TooFewSamples), EXIT_DATASET),
    ((errors.FormatError, errors.InvalidInput, errors.ShapeMismatch, errors.LengthMismatch), EXIT_FORMAT),
    (OSError, EXIT_IO),
]


class InputFailure(Exception):
    """Wraps an error together with the input that triggered it."""

    def __init__(self, source, cause: BaseException):
        self.source = str(source)
        self.cause = cause
        super().__init__(f"{self.source}: {cause}")


@contextmanager
def _reading(source):
    try:
        yield
    except InputFailure:
        raise
    except (errors.EfcnetError, OSError) as exc:
        raise InputFailure(source, exc) from exc


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, InputFailure):
        exc = exc.cause
    for kinds, code in _EXIT_CODES:
        if isinstance(exc, kinds):
            return code
    return EXIT_INTERNAL


def _describe(exc: BaseException) -> str:
    if isinstance(exc, InputFailure):
        return _describe_inner(exc.source, exc.cause)
    return _describe_inner(None, exc)


def _describe_inner(source, exc: BaseException) -> str:
    if isinstance(exc, OSError) and exc.strerror:
        where = exc.filename or source
        return f"{where}: {exc.strerror}"
    text = str(exc)
    if source is None or text.startswith(f"{source}:"):
        return text
    return f"{source}: {text}"


# ---------------------------------------------------------------- inputs


def read_series(path: str | Path) -> np.ndarray:
    """Load a ``T x N`` time series from CSV or the binary matrix format."""
    with _reading(path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
        if magic == io.MATRIX_MAGIC:
            values = io.read_matrix(path)
        else:
            values, _ = io.read_timeseries_csv(path)
        return as_timeseries(values, name=str(path))


def load_dataset(directory: str | Path) -> tuple[list, list[str]]:
    """Graphs and subject ids for a dataset directory with a ``labels.csv`` manifest."""
    directory = Path(directory)
    manifest = directory / "labels.csv"
    with _reading(manifest):
        entries = io.read_labels(manifest)
        if not entries:
            raise errors.EmptyDataset("labels manifest lists no subjects")
    graphs = []
    for subject, label in entries:
        path = directory / f"{subject}.csv"
        ts = read_series(path)
        with _reading(path):
            graphs.append(build_graph(ts, label))
    return graphs, [s for s, _ in entries]


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir
    if out is None:
        raise errors.ConfigError("no output directory: pass --out or set 'output_dir'", "output_dir")
    path = Path(out)
    with _reading(path):
        path.mkdir(parents=True, exist_ok=True)
    return path


def _in_dir(args, cfg: RunConfig) -> Path:
    src = args.dataset or cfg.input_dir
    if src is None:
        raise errors.ConfigError("no dataset directory: pass it as an argument or set 'input_dir'", "input_dir")
    return Path(src)


def _write_text(path: Path, text: str) -> None:
    with _reading(path):
        path.write_text(text)


# ---------------------------------------------------------------- commands


def cmd_synth(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    series = generate_timeseries(cfg.synth_config(), cfg.n_per_class)
    width = len(str(len(series) - 1))
    entries = []
    for k, (ts, label) in enumerate(series):
        subject = f"sub-{k:0{width}d}"
        names = [f"r{i}" for i in range(ts.shape[1])]
        path = out / f"{subject}.csv"
        with _reading(path):
            io.write_timeseries_csv(path, ts, names)
        entries.append((subject, label))
    with _reading(out / "labels.csv"):
        io.write_labels(out / "labels.csv", entries)
    _write_text(out / "config.json", cfg.to_json())
    print(f"wrote {len(entries)} subjects to {out}")
    return EXIT_OK


def _write_matrix_output(path: Path, matrix: np.ndarray, as_csv: bool) -> None:
    with _reading(path):
        if as_csv:
            io.write_timeseries_csv(path, matrix)
        else:
            io.write_matrix(path, matrix)


def cmd_efc(args, cfg: RunConfig) -> int:
    ts = read_series(args.input)
    with _reading(args.input):
        ets = edge_time_series(zscore(ts))
        if args.blocked:
            efc = edge_fc_blocked(ets, block=cfg.block_size, memory_budget=cfg.memory_budget, threads=cfg.threads)
        else:
            efc = edge_fc(ets)
    _write_matrix_output(Path(args.out), efc, args.csv)
    print(f"eFC {efc.shape[0]}x{efc.shape[1]} written to {args.out}")
    return EXIT_OK


def cmd_nfc(args, cfg: RunConfig) -> int:
    ts = read_series(args.input)
    with _reading(args.input):
        nfc = node_fc(ts)
    _write_matrix_output(Path(args.out), nfc, args.csv)
    print(f"nFC {nfc.shape[0]}x{nfc.shape[1]} written to {args.out}")
    return EXIT_OK


def _train_configs(args, cfg: RunConfig):
    configs = [cfg.train_config()]
    if args.baseline == "gcn":
        configs.append(cfg.baseline_config())
    return configs


def cmd_train(args, cfg: RunConfig) -> int:
    graphs, _ = load_dataset(_in_dir(args, cfg))
    out = _out_dir(args, cfg)
    batch = GraphBatch.from_graphs(graphs)
    tcfg = cfg.baseline_config() if args.baseline == "gcn" else cfg.train_config()
    params, history = train(batch, tcfg)
    header = {"model": tcfg.model, "n_regions": batch.n_regions, "train_config": tcfg.__dict__}
    ckpt = out / f"{tcfg.model}.ckpt"
    with _reading(ckpt):
        io.write_checkpoint(ckpt, params, header)
    with _reading(out / "history.csv"):
        io.write_history(out / "history.csv", history)
    print(f"{tcfg.model}: final train loss {history.loss[-1]:.6f}, accuracy {history.accuracy[-1]:.4f}")
    print(f"checkpoint written to {ckpt}")
    return EXIT_OK


def cmd_cv(args, cfg: RunConfig) -> int:
    graphs, _ = load_dataset(_in_dir(args, cfg))
    out = _out_dir(args, cfg)
    batch = GraphBatch.from_graphs(graphs)
    for tcfg in _train_configs(args, cfg):
        start = time.perf_counter()
        report = cross_validate(batch, tcfg, k=cfg.k_folds, seed=cfg.seed)
        logger.info("%s cross-validation took %.1f s", tcfg.model, time.perf_counter() - start)
        _write_text(out / f"report_{tcfg.model}.json", report.to_json())
        print(report.format_table())
        print()
    return EXIT_OK


def _load_report(path) -> MetricsReport:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise errors.FormatError(f"invalid JSON report: {exc}") from None
    try:
        return MetricsReport.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise errors.FormatError(f"not a metrics report ({exc!r})") from None


def _checkpoint_table(path) -> str:
    params, header = io.read_checkpoint(path)
    lines = [f"checkpoint: {header['model']}  ({header.get('n_regions', '?')} regions)"]
    for name, value in params.named().items():
        lines.append(f"  {name:<16} {'x'.join(map(str, value.shape)):>12}  |w|={np.linalg.norm(value):.6g}")
    return "\n".join(lines)


def cmd_report(args, cfg: RunConfig) -> int:
    """JSON reports render as fold tables; anything else is read as a checkpoint."""
    for path in args.reports:
        with _reading(path):
            if str(path).endswith(".json"):
                text = _load_report(path).format_table()
            else:
                text = _checkpoint_table(path)
        print(text)
        print()
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="cap on worker threads (default 1)")

    parser = argparse.ArgumentParser(prog="efcnet", description="Edge-centric connectivity graph classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic labelled dataset")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_synth)

    for name, func, what in (("efc", cmd_efc, "edge"), ("nfc", cmd_nfc, "node")):
        p = sub.add_parser(name, parents=[common], help=f"compute the {what} functional connectivity of one subject")
        p.add_argument("input", help="time series as CSV or binary matrix")
        p.add_argument("--out", required=True, help="output matrix file")
        p.add_argument("--csv", action="store_true", help="write CSV instead of the binary format")
        if name == "efc":
            p.add_argument("--blocked", action="store_true", help="use the tiled kernel")
            p.add_argument("--block-size", type=int, help="tile width in columns")
            p.add_argument("--memory-budget", type=int, help="byte budget for the tiled kernel")
        p.set_defaults(func=func)

    for name, func, what in (("train", cmd_train, "train one model on a dataset"),
                             ("cv", cmd_cv, "k-fold cross-validation")):
        p = sub.add_parser(name, parents=[common], help=what)
        p.add_argument("dataset", nargs="?", help="dataset directory (default: config input_dir)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--baseline", choices=["gcn"], help="also (cv) or instead (train) run the plain GCN")
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="render stored JSON reports or checkpoints")
    p.add_argument("reports", nargs="+", help="report JSON files or checkpoint files")
    p.set_defaults(func=cmd_report)
    return parser


def resolve_config(args) -> RunConfig:
    with _reading(args.config or "<defaults>"):
        cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if getattr(args, "block_size", None) is not None:
        overrides["block_size"] = args.block_size
    if getattr(args, "memory_budget", None) is not None:
        overrides["memory_budget"] = args.memory_budget
    if not overrides:
        return cfg
    return config_from_dict(overrides, base=cfg)


def _configure_logging() -> None:
    level = os.environ.get("EFCNET_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise errors.ConfigError(f"EFCNET_LOG: unknown log level {level!r}", "EFCNET_LOG")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _limit_threads(n: int):
    # the numba kernels are sequential, so only the BLAS pools need a cap
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_logging()
        cfg = resolve_config(args)
        with _limit_threads(cfg.threads):
            return args.func(args, cfg)
    except Exception as exc:  # mapped to exit codes below
        code = exit_code_for(exc)
        if code == EXIT_INTERNAL:
            logger.exception("unexpected failure")
        print(f"efcnet {args.command}: error: {_describe(exc)}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
