"""Command-line front end.

Exit status: 0 on success, 1 when a simulation fails (divergence, generator
failure), 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, config, experiment, mrr, sweep, tasks
from .errors import ConfigError, IntegrationDiverged, NoOptimum, WdmrcError
from .params import GHZ

EXIT_OK, EXIT_SIM, EXIT_USAGE = 0, 1, 2


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def _load_config(args) -> config.RunConfig:
    cfg = config.load(args.config)
    if getattr(args, "tasks", None):
        cfg = cfg.subset(args.tasks)
    return cfg


def _out_dir(args, cfg: config.RunConfig) -> Path:
    out = Path(args.out if getattr(args, "out", None) else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary_lines(rows) -> list[str]:
    lines = [f"{'task':<16}{'metric':<10}{'mean':>14}{'std':>14}{'seeds':>7}"]
    for task, kind, mean, std, n in rows:
        lines.append(f"{task:<16}{kind:<10}{mean:>14.6g}{std:>14.6g}{n:>7d}")
    return lines


def write_metric_csv(path: Path, results: list[experiment.SeedResult], task: str) -> None:
    """Columns seed, subset, metric, value: one row per test subset of each seed."""
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "subset", "metric", "value"])
        for res in results:
            rep = res.reports[task]
            for k, v in enumerate(rep.values):
                w.writerow([res.seed, k, rep.kind, _fmt(v)])


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    threads = args.threads or experiment.default_threads()
    t0 = time.perf_counter()
    try:
        results = experiment.run_experiment(cfg, threads=threads)
    except IntegrationDiverged as exc:
        for task in cfg.task_ids:
            _log(f"{task}: simulation diverged: {exc}")
        (out / "summary.txt").write_text("\n".join(f"{t} diverged: {exc}" for t in cfg.task_ids) + "\n")
        return EXIT_SIM

    rows, summary = [], {"config_hash": cfg.digest(), "code_version": __version__,
                         "virtual_nodes": cfg.readout.virtual_nodes,
                         "symbol_rate_baud": cfg.readout.symbol_rate_baud,
                         "channels": [c.__dict__ for c in cfg.channels], "tasks": {}}
    for task in cfg.task_ids:
        write_metric_csv(out / f"{task}_metrics.csv", results, task)
        agg = experiment.aggregate(results, task)
        rows.append((task, agg.kind, agg.mean, agg.std, len(results)))
        summary["tasks"][task] = {"kind": agg.kind, "mean": agg.mean, "std": agg.std,
                                  "seed_means": agg.values}
    text = "\n".join(_summary_lines(rows)) + "\n"
    (out / "summary.txt").write_text(text)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(text, end="")

    if args.dump_states:
        first = experiment.run_seed(cfg, cfg.data.seeds[0], keep_states=True)
        for mat in first.states:
            mat.to_csv(out / f"{mat.task_id}_states_seed{first.seed}.csv")
            first.weights[mat.task_id].to_csv(out / f"{mat.task_id}_weights_seed{first.seed}.csv")
    _log(f"run finished in {time.perf_counter() - t0:.1f} s, outputs in {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    plan = sweep.load_plan(args.plan)
    grid = plan.grid(len(cfg.channels))
    data = plan.data or cfg.data
    if args.dry_run:
        units = len(grid) * len(plan.seeds)
        symbols = cfg.readout.warmup_symbols + data.symbols_after_warmup()
        print(f"grid points: {len(grid)}")
        print(f"seeds per point: {len(plan.seeds)}")
        print(f"work units (point x seed): {units}")
        print(f"symbols per unit: {symbols} "
              f"({symbols * cfg.readout.virtual_nodes * cfg.readout.steps_per_node} solver steps)")
        return EXIT_OK

    out = _out_dir(args, cfg)
    ckpt = out / "sweep_checkpoint.jsonl"
    threads = args.threads or experiment.default_threads()

    def progress(res, done, total):
        state = res.status if res.diverged else "ok"
        _log(f"[{done}/{total}] point {res.point.index} {state}")

    result = sweep.run_sweep(plan, cfg, threads=threads, checkpoint=ckpt,
                             overwrite=args.overwrite, max_points=args.max_points,
                             progress=progress)
    if not result.metadata["complete"]:
        _log(f"sweep incomplete: {result.metadata['points_done']}/{result.metadata['points_total']}"
             " points; rerun to resume")
    lines = []
    for task in result.task_ids:
        sweep.export_heatmap_csv(result, task, out / f"{task}_heatmap.csv")
        try:
            point, rep = sweep.find_best(result, task)
        except NoOptimum:
            lines.append(f"{task}: no optimum (all points diverged)")
            continue
        ch = result.channel_of(task)
        p, d = point.coords(ch)
        lines.append(f"{task}: best {rep.kind} {rep.mean:.6g} +- {rep.std:.3g} "
                     f"at power {p:g} dBm, detuning {d:g} GHz (point {point.index})")
    text = "\n".join(lines) + "\n"
    (out / "best_points.txt").write_text(text)
    meta = dict(result.metadata)
    (out / "sweep_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(text, end="")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = config.load(args.config)
    lo, hi = args.range
    if not hi > lo or args.points < 2:
        raise ConfigError("spectrum range must be increasing with at least 2 points")
    det_ghz = np.linspace(lo, hi, args.points)
    through, drop = mrr.linear_transmission_spectrum(cfg.physical, det_ghz * GHZ)
    path = Path(args.out)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detuning_ghz", "through_power", "drop_power"])
        for d, t, p in zip(det_ghz, through, drop):
            w.writerow([_fmt(d), _fmt(t), _fmt(p)])
    fwhm = 2.0 * cfg.physical.linear_loss_rate / GHZ
    _log(f"wrote {path}; drop-port FWHM {fwhm:.4g} GHz")
    return EXIT_OK


def cmd_gen_task(args) -> int:
    if args.task == tasks.CLASSIFICATION and args.length % tasks.PERIOD:
        raise ConfigError(f"classification length must be a multiple of {tasks.PERIOD}")
    ds = tasks.generate(args.task, args.length, args.seed, args.snr_db)
    tasks.write_dataset_csv(ds, args.out)
    return EXIT_OK


def _report_from_run(summary: dict) -> list[str]:
    lines = ["# Joint operating point", ""]
    for task in [c["task"] for c in summary["channels"]]:
        rec = summary["tasks"][task]
        lines += _table(task, rec["kind"], rec["mean"], rec["std"], summary)
    return lines


def _table(task, kind, mean, std, summary, where: str = "") -> list[str]:
    header = {"nmse": "NMSE", "accuracy": "Accuracy", "ser": "SER"}[kind]
    if kind == "accuracy":
        value = f"{100 * mean:.2f} % +- {100 * std:.2g} %"
    else:
        value = f"{mean:.4g} +- {std:.2g}"
    rate = summary.get("symbol_rate_baud", 1e9) / 1e9
    nodes = summary.get("virtual_nodes", 50)
    out = [f"## {task}", "",
           f"| Reservoir | {header} | Virtual nodes | Symbol rate |" + (" Operating point |" if where else ""),
           "|---|---|---|---|" + ("---|" if where else ""),
           f"| add-drop MRR, WDM multi-task (simulation) | {value} | {nodes} | {rate:g} GBd |"
           + (f" {where} |" if where else ""), ""]
    return out


def cmd_report(args) -> int:
    src = Path(args.source)
    if src.is_dir():
        path = src / "summary.json"
        if path.exists():
            lines = _report_from_run(json.loads(path.read_text()))
        elif (src / "sweep_checkpoint.jsonl").exists():
            lines = _report_from_sweep(src / "sweep_checkpoint.jsonl")
        else:
            raise ConfigError(f"{src}: no summary.json or sweep_checkpoint.jsonl found")
    elif src.exists():
        lines = _report_from_sweep(src)
    else:
        raise ConfigError(f"report source not found: {src}")
    text = "\n".join(lines).rstrip() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def _report_from_sweep(path: Path) -> list[str]:
    result = sweep.result_from_checkpoint(path)
    meta = result.metadata
    lines = ["# Sweep optima", "",
             f"{meta['points_done']} of {meta['points_total']} grid points, "
             f"{len(result.plan.seeds)} seeds each", ""]
    for task in result.task_ids:
        try:
            point, rep = sweep.find_best(result, task)
        except NoOptimum:
            lines += [f"## {task}", "", "all grid points diverged", ""]
            continue
        p, d = point.coords(result.channel_of(task))
        lines += _table(task, rep.kind, rep.mean, rep.std, {}, f"{p:g} dBm, {d:g} GHz")
    return lines


def cmd_calibrate(args) -> int:
    """Scan the input bias and record every task's metric per value."""
    cfg = config.load(args.config)
    if args.seeds:
        cfg = replace(cfg, data=replace(cfg.data, seeds=tuple(args.seeds)))
    lengths = {k: v for k, v in (("train_symbols", args.train_symbols),
                                  ("test_symbols", args.test_symbols),
                                  ("test_subsets", args.test_subsets)) if v}
    if lengths:
        cfg = replace(cfg, data=replace(cfg.data, **lengths))
    out = _out_dir(args, cfg)
    threads = args.threads or experiment.default_threads()
    trace = out / "calibration_trace.csv"
    rows = []
    for bias in args.biases:
        run_cfg = replace(cfg, readout=replace(cfg.readout, bias=float(bias)))
        try:
            results = experiment.run_experiment(run_cfg, threads=threads)
            aggs = {t: experiment.aggregate(results, t) for t in cfg.task_ids}
            row = [bias] + [v for t in cfg.task_ids for v in (aggs[t].mean, aggs[t].std)]
        except IntegrationDiverged:
            row = [bias] + [float("nan")] * (2 * len(cfg.task_ids))
        rows.append(row)
        _log("bias " + " ".join(_fmt(v) for v in row))
    with trace.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bias"] + [f"{t}_{s}" for t in cfg.task_ids for s in ("mean", "std")])
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    target = args.target if args.target in cfg.task_ids else cfg.task_ids[0]
    col = 1 + 2 * cfg.task_ids.index(target)
    lower = tasks.METRIC_KIND[target] != "accuracy"
    finite = [r for r in rows if math.isfinite(r[col])]
    if not finite:
        _log("every bias value diverged")
        return EXIT_SIM
    candidates = finite
    if not args.unconstrained:
        # the bias is shared by all tasks: only accept values at which the
        # other tasks still meet their targets, when any such value exists
        ok = [r for r in finite if all(_meets_target(t, r[1 + 2 * k])
                                       for k, t in enumerate(cfg.task_ids) if t != target)]
        if ok:
            candidates = ok
        else:
            _log("no bias meets the other tasks' targets; choosing on the target task alone")
    best = (min if lower else max)(candidates, key=lambda r: r[col])
    print(f"best bias for {target}: {best[0]:g} ({tasks.METRIC_KIND[target]} {best[col]:.6g})")
    if args.write_config:
        config.save(replace(cfg, readout=replace(cfg.readout, bias=float(best[0]))), args.write_config)
    return EXIT_OK


CALIBRATION_TARGETS = {"nmse": 0.10, "accuracy": 0.98, "ser": 5e-3}


def _meets_target(task: str, value: float) -> bool:
    kind = tasks.METRIC_KIND[task]
    if not math.isfinite(value):
        return False
    if kind == "accuracy":
        return value >= CALIBRATION_TARGETS[kind]
    return value <= CALIBRATION_TARGETS[kind]


def cmd_init_config(args) -> int:
    text = config.dumps(config.RunConfig())
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wdmrc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    threads_help = f"worker processes (default: ${experiment.THREADS_ENV} or core count)"

    p = sub.add_parser("run", help="run one multi-task experiment")
    p.add_argument("config")
    p.add_argument("--tasks", nargs="+", choices=tasks.TASK_IDS,
                   help="keep only these channels; the others stay dark")
    p.add_argument("--threads", type=int, default=0, help=threads_help)
    p.add_argument("--out", help="output directory (default: [output] directory)")
    p.add_argument("--dump-states", action="store_true",
                   help="also write state matrices and readout weights of the first seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="power x detuning sweep with checkpointing")
    p.add_argument("config")
    p.add_argument("plan")
    p.add_argument("--threads", type=int, default=0, help=threads_help)
    p.add_argument("--out")
    p.add_argument("--overwrite", action="store_true", help="discard an existing checkpoint")
    p.add_argument("--dry-run", action="store_true", help="print the amount of work and exit")
    p.add_argument("--max-points", type=int, help="evaluate at most this many new points")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrum", help="linear through/drop transmission")
    p.add_argument("config")
    p.add_argument("--range", nargs=2, type=float, default=(-100.0, 100.0),
                   metavar=("LO_GHZ", "HI_GHZ"))
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--out", default="spectrum.csv")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("gen-task", help="export a task dataset as CSV")
    p.add_argument("task", choices=tasks.TASK_IDS)
    p.add_argument("--length", type=int, default=10_008)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-db", type=float, default=32.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_task)

    p = sub.add_parser("report", help="tables from a run directory or sweep checkpoint")
    p.add_argument("source")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("calibrate", help="scan the input bias")
    p.add_argument("config")
    p.add_argument("--biases", nargs="+", type=float,
                   default=[round(0.1 * k, 1) for k in range(1, 11)])
    p.add_argument("--target", default=tasks.NARMA10, choices=tasks.TASK_IDS)
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--train-symbols", type=int)
    p.add_argument("--test-symbols", type=int)
    p.add_argument("--test-subsets", type=int)
    p.add_argument("--threads", type=int, default=0, help=threads_help)
    p.add_argument("--out")
    p.add_argument("--write-config", help="save the config with the best bias here")
    p.add_argument("--unconstrained", action="store_true",
                   help="pick the best target metric even if another task misses its target")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("init-config", help="print the default config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_init_config)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "threads", 0) and args.threads < 0:
        ap.error("--threads must be positive")
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (IntegrationDiverged, WdmrcError) as exc:
        _log(f"simulation failed: {exc}")
        return EXIT_SIM
    except (OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
