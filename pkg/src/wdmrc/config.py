"""TOML run configuration.

A config file has one table per component; every key is optional and
defaults to the values of :class:`~wdmrc.params.PhysicalParams`,
:class:`~wdmrc.reservoir.ReadoutConfig` and :class:`DataConfig`::

    [physical]            # any PhysicalParams field
    [flags]               # ModelFlags switches
    [readout]             # ReadoutConfig fields
    [data]                # lengths, seeds, SNR
    [output]
    directory = "results"

    [[channels]]          # one table per WDM channel, in ring-mode order
    task = "narma10"
    power_dbm = 0.0
    detuning_ghz = -60.0
    mask_seed = 1

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigError
from .params import GHZ, ChannelConfig, ModelFlags, PhysicalParams, adjacent_resonances, dbm_to_watt
from .reservoir import ReadoutConfig
from .tasks import TASK_IDS


@dataclass(frozen=True)
class ChannelSpec:
    """Task binding and operating point of one channel."""

    task: str
    power_dbm: float
    detuning_ghz: float
    mask_seed: int
    resonance_freq_rad_s: float | None = None

    def __post_init__(self) -> None:
        if self.task not in TASK_IDS:
            raise ConfigError(f"channels.task: unknown task {self.task!r}, expected one of {TASK_IDS}")
        for name in ("power_dbm", "detuning_ghz"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"channels.{name} must be finite")


DEFAULT_CHANNELS = (
    ChannelSpec("narma10", 0.0, -60.0, 1),
    ChannelSpec("classification", -10.0, -45.0, 2),
    ChannelSpec("equalization", 15.0, -20.0, 3),
)


@dataclass(frozen=True)
class DataConfig:
    """Dataset lengths and seeds.

    Every seed yields ``warmup + train_symbols + test_subsets * test_symbols``
    symbols per task.
    """

    train_symbols: int = 10_000
    test_subsets: int = 10
    test_symbols: int = 10_000
    seeds: tuple[int, ...] = tuple(range(10))
    snr_db: float = 32.0

    def __post_init__(self) -> None:
        if self.train_symbols < 1 or self.test_subsets < 1 or self.test_symbols < 1:
            raise ConfigError("data: symbol counts and test_subsets must be positive")
        if not self.seeds:
            raise ConfigError("data.seeds must not be empty")
        if not math.isfinite(self.snr_db):
            raise ConfigError("data.snr_db must be finite")

    def symbols_after_warmup(self) -> int:
        return self.train_symbols + self.test_subsets * self.test_symbols


@dataclass(frozen=True)
class RunConfig:
    physical: PhysicalParams = field(default_factory=PhysicalParams)
    flags: ModelFlags = field(default_factory=ModelFlags)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    data: DataConfig = field(default_factory=DataConfig)
    channels: tuple[ChannelSpec, ...] = DEFAULT_CHANNELS
    output_dir: str = "results"

    def __post_init__(self) -> None:
        if not self.channels:
            raise ConfigError("at least one channel is required")

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(ch.task for ch in self.channels)

    def channel_configs(self) -> tuple[ChannelConfig, ...]:
        """Physical channels; modes are consecutive ring resonances by default."""
        res = adjacent_resonances(self.physical, len(self.channels))
        out = []
        for i, spec in enumerate(self.channels):
            freq = spec.resonance_freq_rad_s if spec.resonance_freq_rad_s is not None else float(res[i])
            out.append(ChannelConfig(i, freq, spec.detuning_ghz * GHZ,
                                     float(dbm_to_watt(spec.power_dbm)), spec.task))
        if len({c.resonance_freq_rad_s for c in out}) != len(out):
            raise ConfigError("channel resonance frequencies must be pairwise distinct")
        return tuple(out)

    def with_channels(self, channels) -> "RunConfig":
        return replace(self, channels=tuple(channels))

    def subset(self, tasks) -> "RunConfig":
        """Keep only the channels bound to ``tasks``; their ring modes are preserved."""
        wanted = list(tasks)
        unknown = set(wanted) - set(self.task_ids)
        if unknown:
            raise ConfigError(f"tasks not bound to any channel: {sorted(unknown)}")
        res = adjacent_resonances(self.physical, len(self.channels))
        kept = []
        for i, spec in enumerate(self.channels):
            if spec.task in wanted:
                freq = spec.resonance_freq_rad_s
                kept.append(replace(spec, resonance_freq_rad_s=float(res[i]) if freq is None else freq))
        return self.with_channels(kept)

    def to_dict(self) -> dict:
        phys = {k: v for k, v in asdict(self.physical).items() if v is not None}
        data = asdict(self.data)
        data["seeds"] = list(self.data.seeds)
        chans = []
        for ch in self.channels:
            d = asdict(ch)
            if d["resonance_freq_rad_s"] is None:
                del d["resonance_freq_rad_s"]
            chans.append(d)
        return {
            "physical": phys,
            "flags": asdict(self.flags),
            "readout": asdict(self.readout),
            "data": data,
            "channels": chans,
            "output": {"directory": self.output_dir},
        }

    def digest(self) -> str:
        """Stable hash of every setting, used to tag checkpoints."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {"physical", "flags", "readout", "data", "channels", "output"}


def _build(cls, section: str, table, convert=None):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in table.items():
        default = getattr(cls(), key) if cls is not ChannelSpec else None
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be a boolean")
        if (isinstance(default, float) or default is None) and isinstance(value, int) \
                and not isinstance(value, bool):
            value = float(value)
        if isinstance(default, int) and not isinstance(default, bool) and not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer")
        kwargs[key] = value
    if convert:
        kwargs = convert(kwargs)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _channel(table: dict, index: int) -> ChannelSpec:
    section = f"channels[{index}]"
    if not isinstance(table, dict):
        raise ConfigError(f"{section} must be a table")
    required = {"task", "power_dbm", "detuning_ghz", "mask_seed"}
    missing = sorted(required - set(table))
    if missing:
        raise ConfigError(f"{section} missing key(s): {', '.join(missing)}")
    known = {f.name for f in fields(ChannelSpec)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"{section} unknown key(s): {', '.join(unknown)}")
    try:
        return ChannelSpec(
            task=str(table["task"]),
            power_dbm=float(table["power_dbm"]),
            detuning_ghz=float(table["detuning_ghz"]),
            mask_seed=int(table["mask_seed"]),
            resonance_freq_rad_s=(float(table["resonance_freq_rad_s"])
                                  if "resonance_freq_rad_s" in table else None),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    unknown = sorted(set(raw) - _SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    physical = _build(PhysicalParams, "physical", raw.get("physical", {}))
    flags = _build(ModelFlags, "flags", raw.get("flags", {}))
    readout = _build(ReadoutConfig, "readout", raw.get("readout", {}))

    def seeds_tuple(kw):
        if "seeds" in kw:
            kw["seeds"] = tuple(int(s) for s in kw["seeds"])
        return kw

    data = _build(DataConfig, "data", raw.get("data", {}), seeds_tuple)
    chans_raw = raw.get("channels")
    channels = DEFAULT_CHANNELS if chans_raw is None else tuple(
        _channel(c, i) for i, c in enumerate(chans_raw))
    output = raw.get("output", {})
    bad = sorted(set(output) - {"directory"})
    if bad:
        raise ConfigError(f"[output] unknown key(s): {', '.join(bad)}")
    return RunConfig(physical, flags, readout, data, channels,
                     str(output.get("directory", "results")))


def loads(text: str) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return config_from_dict(raw)


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))
