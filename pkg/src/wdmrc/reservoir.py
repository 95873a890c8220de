"""Time-delay reservoir pipeline: masking, modulation, integration, photodetection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernel, mrr
from .errors import ConfigError, IntegrationDiverged
from .params import ChannelConfig, ModelFlags, PhysicalParams
from .tasks import MASK_INTERVAL

_MASK_KEY = 7919
NORMALIZATIONS = ("minmax", "none")


def _integer_ratio(num: float, den: float, what: str) -> int:
    ratio = num / den
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * ratio:
        raise ConfigError(f"{what} must be an integer, got {ratio!r}")
    return k


@dataclass(frozen=True)
class ReadoutConfig:
    """Time-multiplexing, bias and readout settings.

    ``input_normalization="minmax"`` rescales each task's masked signal
    u(n)*m(j) to [0, 1] over the whole stream before the bias is added, so
    inputs of any sign give a non-negative optical power. ``"none"`` uses the
    raw u(n)*m(j) + bias.
    """

    virtual_nodes: int = 50
    symbol_rate_baud: float = 1e9
    step_s: float = 2e-12
    bias: float = 0.5
    regularization: float = 0.5e-10
    input_normalization: str = "minmax"
    warmup_symbols: int = 1000

    def __post_init__(self) -> None:
        if self.virtual_nodes <= 0:
            raise ConfigError("virtual_nodes must be positive")
        if not self.step_s > 0 or not self.symbol_rate_baud > 0:
            raise ConfigError("step_s and symbol_rate_baud must be positive")
        if self.regularization < 0:
            raise ConfigError("regularization must be non-negative")
        if self.warmup_symbols < 0:
            raise ConfigError("warmup_symbols must be non-negative")
        if self.input_normalization not in NORMALIZATIONS:
            raise ConfigError(f"input_normalization must be one of {NORMALIZATIONS}")
        _integer_ratio(self.node_duration_s, self.step_s, "node duration / solver step")

    @property
    def symbol_period_s(self) -> float:
        return 1.0 / self.symbol_rate_baud

    @property
    def node_duration_s(self) -> float:
        return self.symbol_period_s / self.virtual_nodes

    @property
    def steps_per_node(self) -> int:
        return _integer_ratio(self.node_duration_s, self.step_s, "node duration / solver step")


def build_mask(task_id: str, node_count: int, rng_seed: int) -> np.ndarray:
    """Uniform i.i.d. mask over the task's interval."""
    if task_id not in MASK_INTERVAL:
        raise ValueError(f"unknown task id {task_id!r}")
    if node_count < 1:
        raise ValueError("node_count must be at least 1")
    lo, hi = MASK_INTERVAL[task_id]
    rng = np.random.default_rng(np.random.SeedSequence(int(rng_seed), spawn_key=(_MASK_KEY,)))
    return rng.uniform(lo, hi, node_count)


@dataclass
class MaskedStream:
    """Optical drive of one channel, one power value per virtual node.

    Each node power is held for ``steps_per_node`` solver steps.
    """

    node_power_W: np.ndarray
    mask: np.ndarray
    bias: float
    steps_per_node: int

    @property
    def symbols(self) -> int:
        return len(self.node_power_W) // len(self.mask)

    @property
    def step_power_W(self) -> np.ndarray:
        return np.repeat(self.node_power_W, self.steps_per_node)

    @property
    def node_field(self) -> np.ndarray:
        """sqrt(W) input field, zero phase."""
        return np.sqrt(self.node_power_W)

    def __len__(self) -> int:
        return len(self.node_power_W) * self.steps_per_node


def node_levels(u, mask, bias: float, normalization: str = "none") -> np.ndarray:
    """Per-node drive levels, flattened symbol-major: level[n*N + j]."""
    u = np.asarray(u, dtype=float)
    mask = np.asarray(mask, dtype=float)
    masked = (u[:, None] * mask[None, :]).ravel()
    if normalization == "minmax":
        lo, hi = masked.min(), masked.max()
        masked = (masked - lo) / (hi - lo) if hi > lo else np.zeros_like(masked)
    elif normalization != "none":
        raise ConfigError(f"unknown input normalization {normalization!r}")
    return masked + bias


def mask_and_upsample(u, mask, cfg: ReadoutConfig, channel: ChannelConfig,
                      normalization: str | None = None) -> MaskedStream:
    """Mask, bias and scale a symbol sequence into a channel drive.

    The drive is scaled so its time-averaged power equals the channel's
    average power. An all-zero level stream yields zero power.
    """
    norm = cfg.input_normalization if normalization is None else normalization
    levels = node_levels(u, mask, cfg.bias, norm)
    neg = np.flatnonzero(levels < 0)
    if neg.size:
        n = int(neg[0] // len(mask))
        raise ConfigError(f"channel {channel.index}: negative drive power at symbol {n} "
                          f"(level {levels[neg[0]]:.4g}); increase the bias")
    mean = levels.mean()
    scale = channel.avg_power_W / mean if mean > 0 else 0.0
    return MaskedStream(levels * scale, np.asarray(mask, float), cfg.bias, cfg.steps_per_node)


@dataclass
class StateMatrix:
    """Photodetected node responses (mW) of one channel, plus a constant column."""

    values: np.ndarray
    channel: int
    task_id: str = ""

    @property
    def features(self) -> np.ndarray:
        return self.values[:, :-1]

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path: str | Path) -> None:
        n = self.values.shape[1] - 1
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j}" for j in range(n)] + ["bias"])
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])


def _drop_chunks(streams, params, channels, cfg, flags, initial_state, chunk_symbols):
    if len(streams) != len(channels):
        raise ValueError("one stream per channel expected")
    lengths = {len(s.node_power_W) for s in streams}
    if len(lengths) != 1:
        raise ValueError("all streams must have the same length")
    total = lengths.pop()
    drive = np.vstack([s.node_field for s in streams])
    state = initial_state
    step = chunk_symbols * cfg.virtual_nodes
    for start in range(0, total, step):
        stop = min(total, start + step)
        out, state, bad = kernel.run_nodes(drive[:, start:stop], params, list(channels),
                                           cfg.steps_per_node, cfg.step_s, flags, state)
        if bad >= 0:
            t = (start + bad + 1) * cfg.node_duration_s
            raise IntegrationDiverged(t, _bad_component(state))
        yield out, state


def simulate_drop(streams: Sequence[MaskedStream], params: PhysicalParams,
                  channels: Sequence[ChannelConfig], cfg: ReadoutConfig,
                  flags: ModelFlags = ModelFlags(),
                  initial_state: mrr.ReservoirState | None = None,
                  chunk_symbols: int = 4000):
    """Node-averaged drop fields (channels x nodes) over the full streams.

    Returns ``(fields, final_state)``. Raises IntegrationDiverged with the
    time of the offending node.
    """
    parts = []
    state = initial_state
    for out, state in _drop_chunks(streams, params, channels, cfg, flags,
                                   initial_state, chunk_symbols):
        parts.append(out)
    return np.hstack(parts), state


def _bad_component(state: mrr.ReservoirState) -> str:
    for i, a in enumerate(state.modal_amplitudes):
        if not np.isfinite(a):
            return f"modal amplitude of channel {i}"
    if not math.isfinite(state.excess_carriers_m3):
        return "excess carrier density"
    return "excess temperature"


def photodetect(fields: np.ndarray, virtual_nodes: int, skip_symbols: int = 0) -> list[np.ndarray]:
    """Square-law detection; returns one (symbols x (N+1)) matrix per channel.

    Powers are expressed in mW, the integrator's power scale, so the ridge
    regularization acts on order-one features.
    """
    out = []
    for row in fields:
        x = (np.abs(row) ** 2 / kernel.POWER_SCALE_W).reshape(-1, virtual_nodes)[skip_symbols:]
        out.append(np.hstack([x, np.ones((x.shape[0], 1))]))
    return out


def run_reservoir(streams: Sequence[MaskedStream], params: PhysicalParams,
                  channels: Sequence[ChannelConfig], cfg: ReadoutConfig,
                  flags: ModelFlags = ModelFlags(),
                  initial_state: mrr.ReservoirState | None = None,
                  warmup_symbols: int | None = None,
                  task_ids: Sequence[str] | None = None) -> list[StateMatrix]:
    """Drive the WDM ring and return one state matrix per channel.

    Warmup symbols (``cfg.warmup_symbols`` by default) are dropped.
    """
    warm = cfg.warmup_symbols if warmup_symbols is None else warmup_symbols
    N = cfg.virtual_nodes
    parts = [[] for _ in channels]
    # detect chunk by chunk so the complex field record is never held whole
    for out, _ in _drop_chunks(streams, params, channels, cfg, flags, initial_state, 4000):
        for i, row in enumerate(out):
            parts[i].append((np.abs(row) ** 2 / kernel.POWER_SCALE_W).reshape(-1, N))
    ids = list(task_ids) if task_ids is not None else [ch.task_id for ch in channels]
    mats = []
    for i, (ch, t) in enumerate(zip(channels, ids)):
        x = np.vstack(parts[i])[warm:]
        parts[i] = []
        mats.append(StateMatrix(np.hstack([x, np.ones((x.shape[0], 1))]), ch.index, t))
    return mats
