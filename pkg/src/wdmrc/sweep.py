"""Power x detuning sweeps with checkpoint/resume and a bounded process pool.

Checkpoint format (newline-delimited JSON, ``schema`` = 1): the first line is
a header with the config and plan digests, then one record per completed
grid point::

    {"schema": 1, "type": "point", "index": 7, "powers_dbm": [...],
     "detunings_ghz": [...], "status": "ok" | "diverged" | "failed",
     "message": "", "metrics": {"narma10": {"kind": "nmse", "mean": ...,
     "std": ..., "values": [per-seed means]}, ...}}

Records may appear in any order; results are always reduced in grid order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import tomli

from . import __version__
from .config import DataConfig, RunConfig
from .errors import ConfigError, IntegrationDiverged, NoOptimum, WdmrcError
from .experiment import run_seed
from .tasks import METRIC_KIND
from .training import LOWER_IS_BETTER, MetricReport

SCHEMA = 1
LOCKED = "locked"
PER_CHANNEL = "per-channel"


def frange(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive grid start, start+step, ..., stop (stop kept if on the grid)."""
    if not step > 0:
        raise ConfigError("grid step must be positive")
    if stop < start:
        raise ConfigError("grid stop must not be below start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + k * step, 10) for k in range(count))


DEFAULT_POWERS_DBM = frange(-20.0, 25.0, 2.5)
DEFAULT_DETUNINGS_GHZ = frange(-100.0, 100.0, 5.0)


@dataclass(frozen=True)
class GridPoint:
    index: int
    powers_dbm: tuple[float, ...]
    detunings_ghz: tuple[float, ...]
    # coordinates shown on heatmaps: total power and common detuning when
    # locked, otherwise those of the task's own channel
    total_power_dbm: float | None = None

    def coords(self, channel: int) -> tuple[float, float]:
        if self.total_power_dbm is not None:
            return self.total_power_dbm, self.detunings_ghz[channel]
        return self.powers_dbm[channel], self.detunings_ghz[channel]


@dataclass(frozen=True)
class SweepPlan:
    """Grid definition.

    In ``locked`` mode every channel shares the detuning and gets one third
    (one M-th) of the total power. In ``per-channel`` mode each entry of
    ``points`` is an explicit ``(powers_dbm, detunings_ghz)`` pair.
    ``data`` overrides the run config's lengths; the plan's seeds always win.
    """

    mode: str = LOCKED
    powers_dbm: tuple[float, ...] = DEFAULT_POWERS_DBM
    detunings_ghz: tuple[float, ...] = DEFAULT_DETUNINGS_GHZ
    seeds: tuple[int, ...] = tuple(range(10))
    points: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...] = ()
    data: DataConfig | None = None

    def __post_init__(self) -> None:
        if self.mode not in (LOCKED, PER_CHANNEL):
            raise ConfigError(f"sweep mode must be {LOCKED!r} or {PER_CHANNEL!r}")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")
        if self.mode == LOCKED and (not self.powers_dbm or not self.detunings_ghz):
            raise ConfigError("power and detuning grids must not be empty")
        if self.mode == PER_CHANNEL and not self.points:
            raise ConfigError("per-channel mode needs explicit points")

    def grid(self, channels: int) -> list[GridPoint]:
        if self.mode == LOCKED:
            split = 10.0 * math.log10(channels)
            return [GridPoint(i * len(self.detunings_ghz) + j, (p - split,) * channels,
                              (d,) * channels, p)
                    for i, p in enumerate(self.powers_dbm)
                    for j, d in enumerate(self.detunings_ghz)]
        out = []
        for k, (pw, dt) in enumerate(self.points):
            if len(pw) != channels or len(dt) != channels:
                raise ConfigError(f"sweep point {k} must give {channels} powers and detunings")
            out.append(GridPoint(k, tuple(map(float, pw)), tuple(map(float, dt))))
        return out

    def run_config(self, cfg: RunConfig, point: GridPoint) -> RunConfig:
        data = replace(self.data or cfg.data, seeds=tuple(self.seeds))
        chans = [replace(c, power_dbm=p, detuning_ghz=d)
                 for c, p, d in zip(cfg.channels, point.powers_dbm, point.detunings_ghz)]
        return replace(cfg, data=data, channels=tuple(chans))

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "seeds": list(self.seeds)}
        if self.mode == LOCKED:
            d["powers_dbm"] = list(self.powers_dbm)
            d["detunings_ghz"] = list(self.detunings_ghz)
        else:
            d["points"] = [{"powers_dbm": list(p), "detunings_ghz": list(t)} for p, t in self.points]
        if self.data is not None:
            d["data"] = {k: v for k, v in asdict(self.data).items() if k != "seeds"}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _axis(value, name: str) -> tuple[float, ...]:
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "step"}
        if unknown or len(value) != 3:
            raise ConfigError(f"{name} range needs exactly start, stop and step")
        return frange(float(value["start"]), float(value["stop"]), float(value["step"]))
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    raise ConfigError(f"{name} must be a list or a {{start, stop, step}} table")


def plan_from_dict(raw: dict) -> SweepPlan:
    allowed = {"mode", "powers_dbm", "detunings_ghz", "seeds", "points", "data"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"sweep plan: unknown key(s): {', '.join(unknown)}")
    kw = {}
    if "mode" in raw:
        kw["mode"] = str(raw["mode"])
    for name in ("powers_dbm", "detunings_ghz"):
        if name in raw:
            kw[name] = _axis(raw[name], name)
    if "seeds" in raw:
        kw["seeds"] = tuple(int(s) for s in raw["seeds"])
    if "points" in raw:
        pts = []
        for k, p in enumerate(raw["points"]):
            if set(p) != {"powers_dbm", "detunings_ghz"}:
                raise ConfigError(f"sweep point {k} needs exactly powers_dbm and detunings_ghz")
            pts.append((tuple(map(float, p["powers_dbm"])), tuple(map(float, p["detunings_ghz"]))))
        kw["points"] = tuple(pts)
    if "data" in raw:
        d = dict(raw["data"])
        bad = sorted(set(d) - {"train_symbols", "test_subsets", "test_symbols", "snr_db"})
        if bad:
            raise ConfigError(f"sweep plan [data]: unknown key(s): {', '.join(bad)}")
        if "snr_db" in d:
            d["snr_db"] = float(d["snr_db"])
        kw["data"] = DataConfig(**d)
    return SweepPlan(**kw)


def load_plan(path: str | Path) -> SweepPlan:
    path = Path(path)
    try:
        raw = tomli.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"sweep plan not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    try:
        return plan_from_dict(raw)
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class PointResult:
    point: GridPoint
    status: str
    reports: dict[str, MetricReport]
    message: str = ""

    @property
    def diverged(self) -> bool:
        return self.status != "ok"


@dataclass
class SweepResult:
    plan: SweepPlan
    task_ids: tuple[str, ...]
    points: list[PointResult]
    metadata: dict = field(default_factory=dict)

    def channel_of(self, task: str) -> int:
        if task not in self.task_ids:
            raise ValueError(f"task {task!r} is not part of this sweep")
        return self.task_ids.index(task)


def evaluate_point(cfg: RunConfig, plan: SweepPlan, point: GridPoint) -> PointResult:
    """All seeds of one grid point; divergence is recorded, not raised."""
    run_cfg = plan.run_config(cfg, point)
    per_task = {t: [] for t in run_cfg.task_ids}
    try:
        for seed in plan.seeds:
            res = run_seed(run_cfg, seed)
            for t in per_task:
                per_task[t].append(res.reports[t].mean)
    except IntegrationDiverged as exc:
        return _failed(point, run_cfg.task_ids, "diverged", str(exc))
    except WdmrcError as exc:
        return _failed(point, run_cfg.task_ids, "failed", f"{type(exc).__name__}: {exc}")
    reports = {t: MetricReport.from_values(METRIC_KIND[t], v) for t, v in per_task.items()}
    return PointResult(point, "ok", reports)


def _failed(point, task_ids, status, message):
    nan = float("nan")
    return PointResult(point, status,
                       {t: MetricReport(METRIC_KIND[t], nan, nan, []) for t in task_ids}, message)


def _job(args):
    cfg, plan, point = args
    return evaluate_point(cfg, plan, point)


def _record(res: PointResult) -> dict:
    return {
        "schema": SCHEMA, "type": "point", "index": res.point.index,
        "powers_dbm": list(res.point.powers_dbm), "detunings_ghz": list(res.point.detunings_ghz),
        "status": res.status, "message": res.message,
        "metrics": {t: {"kind": r.kind, "mean": r.mean, "std": r.std, "values": r.values}
                    for t, r in res.reports.items()},
    }


def _header(cfg: RunConfig, plan: SweepPlan) -> dict:
    return {"schema": SCHEMA, "type": "header", "config_hash": cfg.digest(),
            "plan_hash": plan.digest(), "task_ids": list(cfg.task_ids), "mode": plan.mode,
            "plan": plan.to_dict(), "code_version": __version__}


def read_checkpoint(path: str | Path) -> tuple[dict | None, dict[int, dict]]:
    """Header and point records; a truncated trailing line is ignored."""
    header, records = None, {}
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break
            if rec.get("schema") != SCHEMA:
                raise ConfigError(f"{path}: unsupported checkpoint schema {rec.get('schema')!r}")
            if rec.get("type") == "header":
                header = rec
            elif rec.get("type") == "point":
                records[int(rec["index"])] = rec
    return header, records


def _from_record(point: GridPoint, rec: dict) -> PointResult:
    reports = {t: MetricReport(m["kind"], float(m["mean"]), float(m["std"]),
                               [float(v) for v in m["values"]])
               for t, m in rec["metrics"].items()}
    return PointResult(point, rec["status"], reports, rec.get("message", ""))


def _write_line(fh, obj) -> None:
    fh.write(json.dumps(obj) + "\n")
    fh.flush()


def run_sweep(plan: SweepPlan, cfg: RunConfig, threads: int = 1,
              checkpoint: str | Path | None = None, overwrite: bool = False,
              max_points: int | None = None,
              progress: Callable[[PointResult, int, int], None] | None = None) -> SweepResult:
    """Evaluate every grid point, resuming from ``checkpoint`` when it matches.

    A checkpoint written for a different config or plan is an error unless
    ``overwrite`` is set. ``max_points`` bounds how many new points are
    evaluated in this call, which allows splitting a long sweep into chunks.
    """
    start = time.perf_counter()
    grid = plan.grid(len(cfg.channels))
    done: dict[int, PointResult] = {}
    header = _header(cfg, plan)
    fh = None
    if checkpoint is not None:
        path = Path(checkpoint)
        if path.exists() and not overwrite:
            old_header, records = read_checkpoint(path)
            if old_header is None or old_header["config_hash"] != header["config_hash"] \
                    or old_header["plan_hash"] != header["plan_hash"]:
                raise ConfigError(f"checkpoint {path} was written for a different config or plan; "
                                  "use overwrite to start over")
            by_index = {p.index: p for p in grid}
            done = {i: _from_record(by_index[i], r) for i, r in records.items() if i in by_index}
            # rewrite so a truncated trailing record cannot corrupt later appends
            with path.open("w") as out:
                _write_line(out, old_header)
                for i in sorted(records):
                    _write_line(out, records[i])
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w") as out:
                _write_line(out, header)
        fh = path.open("a")

    pending = [p for p in grid if p.index not in done]
    if max_points is not None:
        pending = pending[:max(0, max_points)]
    total = len(grid)

    def finish(res: PointResult) -> None:
        done[res.point.index] = res
        if fh is not None:
            _write_line(fh, _record(res))
        if progress is not None:
            progress(res, len(done), total)

    try:
        if threads <= 1 or len(pending) <= 1:
            for p in pending:
                finish(evaluate_point(cfg, plan, p))
        else:
            with ProcessPoolExecutor(max_workers=min(threads, len(pending))) as pool:
                futures = {pool.submit(_job, (cfg, plan, p)) for p in pending}
                while futures:
                    finished, futures = wait(futures, return_when=FIRST_COMPLETED)
                    for fut in sorted(finished, key=lambda f: f.result().point.index):
                        finish(fut.result())
    finally:
        if fh is not None:
            fh.close()

    meta = {"config_hash": header["config_hash"], "plan_hash": header["plan_hash"],
            "code_version": __version__, "wall_time_s": time.perf_counter() - start,
            "complete": len(done) == total, "points_done": len(done), "points_total": total}
    return SweepResult(plan, tuple(cfg.task_ids), [done[i] for i in sorted(done)], meta)


def result_from_checkpoint(path: str | Path) -> SweepResult:
    """Rebuild a (possibly partial) sweep result from its checkpoint alone."""
    header, records = read_checkpoint(path)
    if header is None:
        raise ConfigError(f"{path}: checkpoint has no header")
    plan = plan_from_dict(header["plan"])
    grid = {p.index: p for p in plan.grid(len(header["task_ids"]))}
    points = [_from_record(grid[i], records[i]) for i in sorted(records) if i in grid]
    meta = {"config_hash": header["config_hash"], "plan_hash": header["plan_hash"],
            "code_version": header.get("code_version", ""),
            "complete": len(points) == len(grid), "points_done": len(points),
            "points_total": len(grid)}
    return SweepResult(plan, tuple(header["task_ids"]), points, meta)


def find_best(result: SweepResult, task: str) -> tuple[GridPoint, MetricReport]:
    """Best grid point for ``task``.

    Ties on the metric go to the lower power, then to the smaller absolute
    detuning (heatmap coordinates), then to the lower grid index.
    """
    ch = result.channel_of(task)
    sign = 1.0 if LOWER_IS_BETTER[METRIC_KIND[task]] else -1.0
    best = None
    for pr in result.points:
        rep = pr.reports[task]
        if pr.diverged or not rep.is_finite():
            continue
        power, det = pr.point.coords(ch)
        key = (sign * rep.mean, power, abs(det), pr.point.index)
        if best is None or key < best[0]:
            best = (key, pr.point, rep)
    if best is None:
        raise NoOptimum(f"no finite {task} result in the sweep")
    return best[1], best[2]


HEATMAP_COLUMNS = ("power_dbm", "detuning_ghz", "metric_mean", "metric_std", "n_seeds", "diverged")


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def heatmap_rows(result: SweepResult, task: str) -> list[tuple]:
    """Rows sorted power-major (ascending power, then ascending detuning)."""
    ch = result.channel_of(task)
    rows = []
    for pr in result.points:
        rep = pr.reports[task]
        power, det = pr.point.coords(ch)
        rows.append((power, det, rep.mean, rep.std, len(rep.values), int(pr.diverged)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def export_heatmap_csv(result: SweepResult, task: str, path: str | Path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEATMAP_COLUMNS)
            for p, d, m, s, n, flag in heatmap_rows(result, task):
                w.writerow([_fmt(p), _fmt(d), _fmt(m), _fmt(s), n, flag])
    except OSError as exc:
        raise OSError(f"cannot write heatmap {path}: {exc}") from exc
    return path


def metric_grid(result: SweepResult, task: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(powers, detunings, means) arrays, means shaped (powers, detunings)."""
    rows = heatmap_rows(result, task)
    powers = np.array(sorted({r[0] for r in rows}))
    dets = np.array(sorted({r[1] for r in rows}))
    grid = np.full((len(powers), len(dets)), np.nan)
    for p, d, m, *_ in rows:
        grid[np.searchsorted(powers, p), np.searchsorted(dets, d)] = m
    return powers, dets, grid


def good_region(result: SweepResult, task: str, fraction: float = 0.25) -> list[GridPoint]:
    """Points whose metric is at least as good as the best ``fraction`` quantile.

    Points tied with the quantile value are all included, so plateaus (for
    instance many points at 100 % accuracy) are kept whole.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    lower = LOWER_IS_BETTER[METRIC_KIND[task]]
    pts = [(pr.point, pr.reports[task].mean) for pr in result.points
           if not pr.diverged and pr.reports[task].is_finite()]
    if not pts:
        raise NoOptimum(f"no finite {task} result in the sweep")
    vals = np.array([m for _, m in pts])
    if lower:
        cut = np.quantile(vals, fraction, method="lower")
        return [p for p, m in pts if m <= cut]
    cut = np.quantile(vals, 1.0 - fraction, method="higher")
    return [p for p, m in pts if m >= cut]


def region_centroid(result: SweepResult, task: str, fraction: float = 0.25) -> tuple[float, float]:
    """Mean heatmap coordinates (power_dbm, detuning_ghz) of the good region."""
    ch = result.channel_of(task)
    coords = np.array([p.coords(ch) for p in good_region(result, task, fraction)])
    return float(coords[:, 0].mean()), float(coords[:, 1].mean())
