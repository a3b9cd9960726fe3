"""Power traces, five-stage segmentation and execution-stage features.

A test case's power trace is split into PRE-OFF, IDLE, EXECUTION,
BACKGROUND and SCREEN-OFF stages. BACKGROUND is missing for
Non-background cases. All functions here are pure; traces are immutable.

Trace files are plain text::

    # sample_period_ms 10
    # stage PRE-OFF 0
    # stage IDLE 10000
    ...
    0,301.25
    10,298.7

Power values are written with ``repr`` so a write/read round trip is
bit-exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundsError, DegenerateBaseline, OrderError, StageMissing

MIN_STAGE_SAMPLES = 10
DEFAULT_SAMPLE_PERIOD_MS = 10


class Stage(str, enum.Enum):
    PRE_OFF = "PRE-OFF"
    IDLE = "IDLE"
    EXECUTION = "EXECUTION"
    BACKGROUND = "BACKGROUND"
    SCREEN_OFF = "SCREEN-OFF"

    def __str__(self) -> str:
        return self.value


CANONICAL_ORDER: tuple[Stage, ...] = tuple(Stage)
NON_BACKGROUND_ORDER: tuple[Stage, ...] = tuple(s for s in Stage if s is not Stage.BACKGROUND)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PowerTrace:
    """Uniformly sampled power in mW, timestamps in ms since case start."""

    t_ms: np.ndarray
    p_mw: np.ndarray
    sample_period_ms: int = DEFAULT_SAMPLE_PERIOD_MS

    def __post_init__(self):
        t = np.array(self.t_ms, dtype=np.int64)
        p = np.array(self.p_mw, dtype=np.float64)
        if t.ndim != 1 or p.ndim != 1 or len(t) != len(p):
            raise ValueError("timestamps and powers must be 1-d and of equal length")
        if len(t) == 0:
            raise ValueError("power trace must be nonempty")
        if self.sample_period_ms <= 0:
            raise ValueError("sample_period_ms must be positive")
        if len(t) > 1 and not np.all(np.diff(t) == self.sample_period_ms):
            raise ValueError(f"timestamps must be uniformly spaced by {self.sample_period_ms} ms")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("power samples must be finite and >= 0")
        object.__setattr__(self, "t_ms", _freeze(t))
        object.__setattr__(self, "p_mw", _freeze(p))

    @classmethod
    def from_power(cls, p_mw: Iterable[float], sample_period_ms: int = DEFAULT_SAMPLE_PERIOD_MS,
                   t0_ms: int = 0) -> "PowerTrace":
        p = np.asarray(list(p_mw) if not isinstance(p_mw, np.ndarray) else p_mw, dtype=np.float64)
        t = t0_ms + sample_period_ms * np.arange(len(p), dtype=np.int64)
        return cls(t, p, sample_period_ms)

    @property
    def samples(self) -> list[tuple[int, float]]:
        return list(zip(self.t_ms.tolist(), self.p_mw.tolist()))

    @property
    def last_ms(self) -> int:
        return int(self.t_ms[-1])

    def __len__(self) -> int:
        return len(self.t_ms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return (self.sample_period_ms == other.sample_period_ms
                and np.array_equal(self.t_ms, other.t_ms)
                and np.array_equal(self.p_mw, other.p_mw))


@dataclass(frozen=True)
class StageMarkers:
    boundaries: tuple[tuple[int, Stage], ...]

    def __post_init__(self):
        b = tuple((int(start), Stage(label)) for start, label in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        labels = tuple(label for _, label in b)
        if labels not in (CANONICAL_ORDER, NON_BACKGROUND_ORDER):
            raise OrderError(f"stage labels must follow {[s.value for s in CANONICAL_ORDER]} "
                             f"(BACKGROUND optional), got {[s.value for s in labels]}")
        starts = [start for start, _ in b]
        if starts[0] != 0:
            raise OrderError("first stage must start at 0 ms")
        if any(b2 <= b1 for b1, b2 in zip(starts, starts[1:])):
            raise OrderError(f"stage starts must be strictly increasing, got {starts}")

    @classmethod
    def from_durations(cls, durations: Sequence[tuple[Stage, int]]) -> "StageMarkers":
        out, t = [], 0
        for label, dur in durations:
            out.append((t, Stage(label)))
            t += int(dur)
        return cls(tuple(out))

    @property
    def labels(self) -> tuple[Stage, ...]:
        return tuple(label for _, label in self.boundaries)

    @property
    def has_background(self) -> bool:
        return Stage.BACKGROUND in self.labels


@dataclass(frozen=True, eq=False)
class StagedTrace:
    trace: PowerTrace
    markers: StageMarkers
    ranges: dict[Stage, tuple[int, int]] = field(repr=False)

    @property
    def labels(self) -> tuple[Stage, ...]:
        return self.markers.labels

    def has(self, stage: Stage | str) -> bool:
        return Stage(stage) in self.ranges

    def stage_power(self, stage: Stage | str) -> np.ndarray:
        lo, hi = self._range(stage)
        return self.trace.p_mw[lo:hi]

    def stage_times(self, stage: Stage | str) -> np.ndarray:
        lo, hi = self._range(stage)
        return self.trace.t_ms[lo:hi]

    def _range(self, stage: Stage | str) -> tuple[int, int]:
        stage = Stage(stage)
        try:
            return self.ranges[stage]
        except KeyError:
            raise StageMissing(f"trace has no {stage.value} stage") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StagedTrace):
            return NotImplemented
        return self.trace == other.trace and self.markers == other.markers


@dataclass(frozen=True)
class ChppConfig:
    power_threshold_mw: float
    min_duration_ms: float = 2000.0

    def __post_init__(self):
        if not self.power_threshold_mw > 0 or not self.min_duration_ms > 0:
            raise ValueError("CHPP threshold and minimum duration must be positive")

    @classmethod
    def relative_to_idle(cls, staged: StagedTrace, factor: float = 2.5,
                         min_duration_ms: float = 2000.0) -> "ChppConfig":
        """Threshold at ``factor`` times the case's own mean IDLE power."""
        return cls(factor * mean_power(staged, Stage.IDLE), min_duration_ms)


@dataclass(frozen=True)
class FeatureVector:
    l_chpp: float
    n_chpp: int
    mu_chpp: float
    mu_exe: float

    def as_array(self) -> np.ndarray:
        return np.array([self.l_chpp, self.n_chpp, self.mu_chpp, self.mu_exe], dtype=np.float64)

    def to_dict(self) -> dict:
        return {"l_chpp": self.l_chpp, "n_chpp": self.n_chpp,
                "mu_chpp": self.mu_chpp, "mu_exe": self.mu_exe}


def segment(trace: PowerTrace, markers: StageMarkers) -> StagedTrace:
    """Split ``trace`` at the marker starts. Stage i covers ``[start_i, start_i+1)``."""
    starts = [start for start, _ in markers.boundaries]
    t0, t_last = int(trace.t_ms[0]), trace.last_ms
    for start in starts:
        if start < t0 or start > t_last:
            raise BoundsError(f"stage start {start} ms outside trace extent [{t0}, {t_last}] ms")
    idx = np.searchsorted(trace.t_ms, starts, side="left").tolist() + [len(trace)]
    ranges = {}
    for (_, label), lo, hi in zip(markers.boundaries, idx, idx[1:]):
        if hi - lo < MIN_STAGE_SAMPLES:
            raise BoundsError(f"stage {label.value} has {hi - lo} samples, "
                              f"need at least {MIN_STAGE_SAMPLES}")
        ranges[label] = (lo, hi)
    return StagedTrace(trace, markers, ranges)


def mean_power(staged: StagedTrace, stage: Stage | str) -> float:
    return float(np.mean(staged.stage_power(stage)))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges of consecutive True values."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[0::2].tolist(), edges[1::2].tolist()))


def _chpp_index_runs(staged: StagedTrace, cfg: ChppConfig) -> list[tuple[int, int]]:
    p = staged.stage_power(Stage.EXECUTION)
    period = staged.trace.sample_period_ms
    return [(lo, hi) for lo, hi in _runs(p > cfg.power_threshold_mw)
            if (hi - lo) * period >= cfg.min_duration_ms]


def find_chpp(staged: StagedTrace, cfg: ChppConfig) -> list[tuple[int, int]]:
    """Continuous-high-power periods in the EXECUTION stage.

    Each period is ``(start_ms, end_ms)`` with an exclusive end, so its
    length is the number of samples above threshold times the sample period.
    """
    t = staged.stage_times(Stage.EXECUTION)
    period = staged.trace.sample_period_ms
    return [(int(t[lo]), int(t[hi - 1]) + period) for lo, hi in _chpp_index_runs(staged, cfg)]


def features(staged: StagedTrace, cfg: ChppConfig) -> FeatureVector:
    p = staged.stage_power(Stage.EXECUTION)
    runs = _chpp_index_runs(staged, cfg)
    period = staged.trace.sample_period_ms
    n_inside = sum(hi - lo for lo, hi in runs)
    if runs:
        mu_chpp = float(np.concatenate([p[lo:hi] for lo, hi in runs]).mean())
    else:
        mu_chpp = 0.0
    return FeatureVector(l_chpp=float(n_inside * period), n_chpp=len(runs),
                         mu_chpp=mu_chpp, mu_exe=float(p.mean()))


def dissimilarity(staged: StagedTrace, stage_a: Stage | str, stage_b: Stage | str) -> float:
    """One-sided relative increase of ``stage_a``'s mean power over baseline ``stage_b``."""
    return relative_increase(mean_power(staged, stage_a), mean_power(staged, stage_b))


def relative_increase(mu_a: float, mu_b: float) -> float:
    if not mu_b > 0:
        raise DegenerateBaseline(f"baseline mean power is {mu_b} mW")
    return max(0.0, (mu_a - mu_b) / mu_b)


def energy_waste(e_x: float, e_n: float) -> float:
    """Relative excess of ``e_x`` over the normal cost ``e_n``, in percent."""
    if not e_n > 0:
        raise DegenerateBaseline(f"normal energy cost must be positive, got {e_n}")
    return (e_x / e_n - 1.0) * 100.0


def write_trace(path: str | Path, staged: StagedTrace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# sample_period_ms {staged.trace.sample_period_ms}"]
    lines += [f"# stage {label.value} {start}" for start, label in staged.markers.boundaries]
    lines += [f"{t},{p!r}" for t, p in zip(staged.trace.t_ms.tolist(), staged.trace.p_mw.tolist())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_trace(path: str | Path) -> StagedTrace:
    period = None
    boundaries, t, p = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["stage"] and len(parts) == 3:
                    boundaries.append((int(parts[2]), Stage(parts[1])))
                elif parts[:1] == ["sample_period_ms"] and len(parts) == 2:
                    period = int(parts[1])
                continue
            try:
                ts, ps = line.split(",")
                t.append(int(ts))
                p.append(float(ps))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed sample line {line!r}") from None
    if not boundaries:
        raise ValueError(f"{path}: no stage headers")
    if period is None:
        period = t[1] - t[0] if len(t) > 1 else DEFAULT_SAMPLE_PERIOD_MS
    return segment(PowerTrace(np.array(t), np.array(p), period), StageMarkers(tuple(boundaries)))


def downsample(staged: StagedTrace, bin_ms: int = 1000) -> dict:
    """Bin-averaged series for plotting."""
    period = staged.trace.sample_period_ms
    per_bin = max(1, int(math.ceil(bin_ms / period)))
    p = staged.trace.p_mw
    n_bins = int(math.ceil(len(p) / per_bin))
    t_out, p_out = [], []
    for i in range(n_bins):
        chunk = p[i * per_bin:(i + 1) * per_bin]
        t_out.append(int(staged.trace.t_ms[i * per_bin]))
        p_out.append(float(chunk.mean()))
    return {"bin_ms": per_bin * period, "t_ms": t_out, "p_mw": p_out,
            "stages": [[label.value, start] for start, label in staged.markers.boundaries]}
