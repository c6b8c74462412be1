"""Command line: ``hierfolio {validate,cluster,train,backtest,report} --config run.ini``.

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .backtest import HRL, read_series, run_strategies, write_outputs
from .clustering import cluster_epoch
from .config import load_config, validate
from .errors import ConfigError, DataError, DegenerateFeatures, HierfolioError
from .market_data import load_prices
from .metrics import performance_report, write_reports

log = logging.getLogger("hierfolio")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _load(args):
    cfg = load_config(args.config)
    strategies = None
    if args.strategies:
        strategies = [s.strip().lower() for s in args.strategies.split(",") if s.strip()]
    cfg = cfg.with_overrides(seed=args.seed, out=args.out, strategies=strategies,
                             parallel=True if args.parallel else None)
    schema = cfg.get("data", "schema") or None
    if schema and not Path(schema).is_absolute():
        schema = str(cfg.base_dir / schema)
    q = load_prices(cfg.data_path, schema)
    return cfg, q


def _span(cfg, q, which):
    d = cfg.values["data"]
    start, stop = q.index_of(d[f"{which}_start"]), q.index_of(d[f"{which}_end"])
    if stop - start < 2:
        raise DataError(f"{which} range holds {max(stop - start, 0)} price columns; need at least 2")
    return start, stop


def _out(cfg) -> Path:
    out = Path(cfg.get("run", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg, out: Path, command: str, files):
    man = {"command": command, "version": __version__, "config": cfg.source, "config_hash": cfg.digest(),
           "seed": cfg.seed, "strategies": cfg.strategies, "files": sorted(Path(f).name for f in files)}
    (out / f"manifest_{command}.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")


def cmd_validate(args) -> int:
    diags = validate(args.config)
    for d in diags:
        print(d)
    if diags:
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg, q = _load(args)
    start, stop = _span(cfg, q, "test")
    out = _out(cfg)
    cadence, window = cfg.get("clustering", "cadence"), cfg.get("clustering", "sortino_window")
    path = out / "clusters.jsonl"
    with path.open("w") as fh:
        for t in range(start, stop - 1, cadence):
            try:
                assignment, masks = cluster_epoch(q.columns(0, t + 1), window, cfg.r_A, seed=cfg.seed, epoch_start=t)
            except DegenerateFeatures as exc:
                rec = {"epoch_start": t, "degenerate": True, "reason": str(exc)}
            else:
                rec = assignment.to_record() | masks.to_record()
                g1 = [a for a, b in zip(q.assets, masks.m1) if b]
                g2 = [a for a, b in zip(q.assets, masks.m2) if b]
                print(f"{q.dates[t]}  group 1: {' '.join(g1)}  |  group 2: {' '.join(g2)}")
            rec["date"] = str(q.dates[t])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _manifest(cfg, out, "cluster", [path])
    return EXIT_OK


def _train(cfg, q, out: Path):
    from .agents.trainer import save_checkpoint, train_staged

    d = cfg.values["data"]
    data = q.between(d["train_start"], d["train_end"])
    result = train_staged(cfg.train_config(), data, seed=cfg.seed, log_path=out / "train_log.jsonl")
    save_checkpoint(result, out / "checkpoint")
    return result


def cmd_train(args) -> int:
    cfg, q = _load(args)
    out = _out(cfg)
    _train(cfg, q, out)
    _manifest(cfg, out, "train", [out / "train_log.jsonl", out / "checkpoint"])
    print(f"checkpoint written to {out / 'checkpoint'}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg, q = _load(args)
    start, stop = _span(cfg, q, "test")
    out = _out(cfg)
    policy = None
    if HRL in cfg.strategies:
        from .agents.trainer import load_checkpoint

        ckpt = out / "checkpoint"
        manifest = ckpt / "manifest.json"
        if manifest.exists() and json.loads(manifest.read_text())["config_hash"] == cfg.train_config().digest():
            result = load_checkpoint(ckpt)
        else:
            result = _train(cfg, q, out)
        policy = result.policy()
    results = run_strategies(q, start, stop, cfg.strategies, cfg.backtest_config(), policy,
                             parallel=cfg.get("run", "parallel"))
    files = write_outputs(results, out)
    _manifest(cfg, out, "backtest", files)
    for name, r in results.items():
        rep = r.report
        print(f"{name:6s} Return {rep.cumulative_return: .4f}  Sharpe {rep.sharpe: .4f}  "
              f"Sortino {rep.sortino: .4g}  Omega {rep.omega: .4g}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_config(args.config).with_overrides(out=args.out)
    out = Path(cfg.get("run", "out"))
    series = read_series(out / "returns.csv")
    reports = {name: performance_report(phis, cfg.r_A) for name, phis in series.items()}
    write_reports(reports, out / "reports.csv")
    for name, rep in reports.items():
        print(name, rep.row())
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "cluster": cmd_cluster, "train": cmd_train,
            "backtest": cmd_backtest, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierfolio", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI run configuration")
        if name != "validate":
            p.add_argument("--out", help="output directory (overrides [run] out)")
        if name not in ("validate", "report"):
            p.add_argument("--seed", type=int, help="overrides [run] seed")
            p.add_argument("--strategies", help="comma-separated strategy ids (overrides [run] strategies)")
            p.add_argument("--parallel", action="store_true", help="evaluate baselines in worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (HierfolioError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
