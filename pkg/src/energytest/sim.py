"""Synthetic device: runs an app model under an input sequence and a
running context and produces a staged power trace.

Apps carry seeded ground-truth defects. A triggered defect multiplies the
mean power of the stage it affects by ``1 + magnitude``; defects compose
multiplicatively. Excessively-frequent-operation defects keep that stage
mean but concentrate the extra power into periodic bursts.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import yaml

from .efg import (EventFlowGraph, RandomSequence, SequenceStats, Walk, WeightedSequence, WeightConfig,
                  build_pool, load_efg, next_weighted, path_walk, replay, save_efg,
                  DEFAULT_RANDOM_LENGTH)
from .errors import ConfigError, PathError
from .trace import (DEFAULT_SAMPLE_PERIOD_MS, PowerTrace, Stage, StageMarkers, StagedTrace,
                    segment)

log = logging.getLogger(__name__)


class ContextKind(str, enum.Enum):
    NORMAL = "Normal"
    NETWORK_FAIL = "NetworkFail"
    FLIGHT_MODE = "FlightMode"
    NON_BACKGROUND = "NonBackground"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RunningContext:
    kind: ContextKind
    delay_ms: float | None
    bandwidth_kbps: float | None
    network: bool = True
    gps: str = "normal"

    @property
    def has_background(self) -> bool:
        return self.kind is not ContextKind.NON_BACKGROUND

    @classmethod
    def of(cls, kind: ContextKind | str) -> "RunningContext":
        return _CONTEXTS[ContextKind(kind)]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "delay_ms": self.delay_ms,
                "bandwidth_kbps": self.bandwidth_kbps, "network": self.network, "gps": self.gps}


NORMAL = RunningContext(ContextKind.NORMAL, delay_ms=36.0, bandwidth_kbps=3200.0)
NETWORK_FAIL = RunningContext(ContextKind.NETWORK_FAIL, delay_ms=451.0, bandwidth_kbps=12.0, gps="weak")
FLIGHT_MODE = RunningContext(ContextKind.FLIGHT_MODE, delay_ms=None, bandwidth_kbps=0.0, network=False)
NON_BACKGROUND = RunningContext(ContextKind.NON_BACKGROUND, delay_ms=36.0, bandwidth_kbps=3200.0)
CONTEXTS: tuple[RunningContext, ...] = (NORMAL, NETWORK_FAIL, FLIGHT_MODE, NON_BACKGROUND)
_CONTEXTS = {c.kind: c for c in CONTEXTS}


# ---------------------------------------------------------------- triggers

class Trigger:
    def holds(self, walk: Walk, ctx: RunningContext) -> bool:
        raise NotImplementedError

    def to_spec(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Always(Trigger):
    def holds(self, walk, ctx):
        return True

    def to_spec(self):
        return {"always": True}


@dataclass(frozen=True)
class ContextIs(Trigger):
    kinds: tuple[ContextKind, ...]

    def holds(self, walk, ctx):
        return ctx.kind in self.kinds

    def to_spec(self):
        if len(self.kinds) == 1:
            return {"context": self.kinds[0].value}
        return {"context": [k.value for k in self.kinds]}


@dataclass(frozen=True)
class Visits(Trigger):
    node: str

    def holds(self, walk, ctx):
        return self.node in walk.nodes

    def to_spec(self):
        return {"visits": self.node}


@dataclass(frozen=True)
class Traverses(Trigger):
    edge: tuple[str, str]

    def holds(self, walk, ctx):
        return self.edge in walk.edges

    def to_spec(self):
        return {"edge": list(self.edge)}


@dataclass(frozen=True)
class AllOf(Trigger):
    parts: tuple[Trigger, ...]

    def holds(self, walk, ctx):
        return all(p.holds(walk, ctx) for p in self.parts)

    def to_spec(self):
        return {"all": [p.to_spec() for p in self.parts]}


@dataclass(frozen=True)
class AnyOf(Trigger):
    parts: tuple[Trigger, ...]

    def holds(self, walk, ctx):
        return any(p.holds(walk, ctx) for p in self.parts)

    def to_spec(self):
        return {"any": [p.to_spec() for p in self.parts]}


def parse_trigger(spec) -> Trigger:
    if isinstance(spec, Trigger):
        return spec
    if spec in (None, "always") or spec == {"always": True}:
        return Always()
    if not isinstance(spec, Mapping) or len(spec) != 1:
        raise ConfigError(f"trigger must be a single-key mapping, got {spec!r}")
    (key, value), = spec.items()
    if key == "context":
        values = [value] if isinstance(value, str) else list(value)
        try:
            return ContextIs(tuple(ContextKind(v) for v in values))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if key == "visits":
        return Visits(str(value))
    if key == "edge":
        u, v = value
        return Traverses((str(u), str(v)))
    if key in ("all", "any"):
        parts = tuple(parse_trigger(p) for p in value)
        return AllOf(parts) if key == "all" else AnyOf(parts)
    raise ConfigError(f"unknown trigger {key!r}")


# ---------------------------------------------------------------- app model

class DefectKind(str, enum.Enum):
    UNNECESSARY_WORKLOAD = "UnnecessaryWorkload"
    EXCESSIVELY_FREQUENT_OPS = "ExcessivelyFrequentOps"
    BACKGROUND = "Background"
    NO_SLEEP = "NoSleep"

    @property
    def stage(self) -> Stage:
        return _DEFECT_STAGE[self]

    def __str__(self) -> str:
        return self.value


_DEFECT_STAGE = {
    DefectKind.UNNECESSARY_WORKLOAD: Stage.EXECUTION,
    DefectKind.EXCESSIVELY_FREQUENT_OPS: Stage.EXECUTION,
    DefectKind.BACKGROUND: Stage.BACKGROUND,
    DefectKind.NO_SLEEP: Stage.SCREEN_OFF,
}


@dataclass(frozen=True)
class DefectSpec:
    kind: DefectKind
    trigger: Trigger
    magnitude: float
    name: str = ""
    # a sticky defect leaves a held wake lock that survives into the next case unless reset
    sticky: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", DefectKind(self.kind))
        if not self.magnitude > 0:
            raise ConfigError(f"defect magnitude must be positive, got {self.magnitude}")

    @property
    def stage(self) -> Stage:
        return self.kind.stage

    def fires(self, walk: Walk, ctx: RunningContext) -> bool:
        if self.stage is Stage.BACKGROUND and not ctx.has_background:
            return False
        return self.trigger.holds(walk, ctx)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind.value, "magnitude": self.magnitude,
                "trigger": self.trigger.to_spec(), "sticky": self.sticky}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DefectSpec":
        try:
            kind = DefectKind(d["kind"])
        except (KeyError, ValueError):
            raise ConfigError(f"bad defect kind in {dict(d)!r}") from None
        return cls(kind, parse_trigger(d.get("trigger")), float(d["magnitude"]),
                   str(d.get("name", "")), bool(d.get("sticky", False)))


DEFAULT_BASELINES = {
    Stage.PRE_OFF: 300.0,
    Stage.IDLE: 1000.0,
    Stage.EXECUTION: 1500.0,
    Stage.BACKGROUND: 1000.0,
    Stage.SCREEN_OFF: 300.0,
}

DEFAULT_DURATIONS_MS = {
    Stage.PRE_OFF: 10_000,
    Stage.IDLE: 10_000,
    Stage.EXECUTION: 60_000,
    Stage.BACKGROUND: 30_000,
    Stage.SCREEN_OFF: 30_000,
}


@dataclass
class AppModel:
    name: str
    category: str
    efg: EventFlowGraph
    baselines: dict[Stage, float] = field(default_factory=lambda: dict(DEFAULT_BASELINES))
    defects: tuple[DefectSpec, ...] = ()
    noise_sd: float = 30.0
    # mean number of OS power excursions (GC, downloads) per case; 0 is the clean-noise mode
    os_noise_rate: float = 0.0

    def __post_init__(self):
        self.baselines = {Stage(k): float(v) for k, v in self.baselines.items()}
        missing = set(Stage) - set(self.baselines)
        if missing:
            raise ConfigError(f"{self.name}: missing baselines for {sorted(s.value for s in missing)}")
        if any(v <= 0 for v in self.baselines.values()):
            raise ConfigError(f"{self.name}: baseline powers must be positive")
        if not self.baselines[Stage.PRE_OFF] < self.baselines[Stage.IDLE]:
            raise ConfigError(f"{self.name}: PRE-OFF baseline must be below IDLE baseline")
        if self.noise_sd < 0 or self.os_noise_rate < 0:
            raise ConfigError(f"{self.name}: noise parameters must be nonnegative")
        self.defects = tuple(self.defects)

    @property
    def defective(self) -> bool:
        return bool(self.defects)

    def to_dict(self, efg_ref=None) -> dict:
        return {
            "name": self.name,
            "category": self.category,
            "efg": efg_ref if efg_ref is not None else self.efg.to_dict(),
            "baselines": {s.value: v for s, v in self.baselines.items()},
            "noise_sd": self.noise_sd,
            "os_noise_rate": self.os_noise_rate,
            "defects": [d.to_dict() for d in self.defects],
        }

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> "AppModel":
        efg = d.get("efg")
        if isinstance(efg, str):
            p = Path(efg)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            efg = load_efg(p)
        elif isinstance(efg, Mapping):
            efg = EventFlowGraph.from_dict(efg)
        else:
            raise ConfigError(f"app {d.get('name')!r} needs an efg (path or inline mapping)")
        baselines = dict(DEFAULT_BASELINES)
        baselines.update({Stage(k): float(v) for k, v in (d.get("baselines") or {}).items()})
        return cls(
            name=str(d["name"]),
            category=str(d.get("category", "default")),
            efg=efg,
            baselines=baselines,
            defects=tuple(DefectSpec.from_dict(x) for x in d.get("defects") or ()),
            noise_sd=float(d.get("noise_sd", 30.0)),
            os_noise_rate=float(d.get("os_noise_rate", 0.0)),
        )


InputSequence = Union[WeightedSequence, RandomSequence]


def sequence_walk(efg: EventFlowGraph, seq: InputSequence) -> Walk:
    if isinstance(seq, RandomSequence):
        return replay(efg, seq.events)
    return path_walk(efg, seq.path)


@dataclass
class TestCase:
    app: str
    category: str
    sequence: InputSequence
    context: RunningContext
    seed: int
    staged: StagedTrace
    triggered_defects: tuple[DefectSpec, ...]
    walk: Walk

    __test__ = False  # not a pytest class

    @property
    def input_type(self) -> str:
        return "random" if isinstance(self.sequence, RandomSequence) else "weighted"


# ---------------------------------------------------------------- simulator

EFO_PERIOD_MS = 12_000
EFO_BURST_MS = 3_000


def _efo_mask(n: int, period_ms: int) -> np.ndarray:
    t = np.arange(n) * period_ms
    return (t % EFO_PERIOD_MS) < EFO_BURST_MS


class Simulator:
    """Device simulator with carry-over state between cases.

    ``run`` is deterministic in its arguments as long as ``reset`` is called
    between cases. A sticky defect leaves its wake lock held, which raises the
    next case's PRE-OFF power until ``reset``.
    """

    def __init__(self, durations_ms: Mapping[Stage, int] | None = None,
                 sample_period_ms: int = DEFAULT_SAMPLE_PERIOD_MS):
        self.durations_ms = {Stage(k): int(v) for k, v in (durations_ms or DEFAULT_DURATIONS_MS).items()}
        self.sample_period_ms = sample_period_ms
        for stage in Stage:
            dur = self.durations_ms.get(stage, 0)
            if dur % sample_period_ms or dur // sample_period_ms < 10:
                raise ConfigError(f"stage {stage.value} duration {dur} ms must be a multiple of "
                                  f"{sample_period_ms} ms covering at least 10 samples")
        self._held_wakelock = 1.0

    def reset(self) -> None:
        self._held_wakelock = 1.0

    @property
    def dirty(self) -> bool:
        return self._held_wakelock != 1.0

    def run(self, app: AppModel, seq: InputSequence, ctx: RunningContext, seed: int) -> TestCase:
        try:
            walk = sequence_walk(app.efg, seq)
        except PathError as exc:
            raise PathError(f"{app.name}: {exc}") from None
        triggered = tuple(d for d in app.defects if d.fires(walk, ctx))
        stages = [s for s in Stage if ctx.has_background or s is not Stage.BACKGROUND]
        rng = np.random.default_rng(seed)
        period = self.sample_period_ms

        chunks = []
        for stage in stages:
            n = self.durations_ms[stage] // period
            level = app.baselines[stage]
            for d in triggered:
                if d.stage is stage and d.kind is not DefectKind.EXCESSIVELY_FREQUENT_OPS:
                    level *= 1.0 + d.magnitude
            if stage is Stage.PRE_OFF:
                level *= self._held_wakelock
            chunk = np.full(n, level)
            bursty = [d for d in triggered if d.kind is DefectKind.EXCESSIVELY_FREQUENT_OPS and d.stage is stage]
            if bursty:
                factor = math.prod(1.0 + d.magnitude for d in bursty)
                mask = _efo_mask(n, period)
                high = 1.0 + (factor - 1.0) / mask.mean()
                chunk = np.where(mask, level * high, level)
            chunks.append(chunk)
        p = np.concatenate(chunks)
        if app.noise_sd > 0:
            p = p + rng.normal(0.0, app.noise_sd, size=len(p))
        if app.os_noise_rate > 0:
            for _ in range(rng.poisson(app.os_noise_rate)):
                start = int(rng.integers(len(p)))
                length = int(rng.uniform(100, 1500) // period)
                p[start:start + length] += rng.uniform(200.0, 1000.0)
        np.maximum(p, 0.0, out=p)

        markers = StageMarkers.from_durations([(s, self.durations_ms[s]) for s in stages])
        staged = segment(PowerTrace.from_power(p, period), markers)

        sticky = [d for d in triggered if d.sticky]
        self._held_wakelock = math.prod(1.0 + d.magnitude for d in sticky) if sticky else 1.0
        return TestCase(app.name, app.category, seq, ctx, seed, staged, triggered, walk)


def run_test_case(app: AppModel, seq: InputSequence, ctx: RunningContext, seed: int,
                  durations_ms: Mapping[Stage, int] | None = None) -> TestCase:
    return Simulator(durations_ms).run(app, seq, ctx, seed)


# ---------------------------------------------------------------- fleets

_KIND_CYCLE = (DefectKind.UNNECESSARY_WORKLOAD, DefectKind.NO_SLEEP,
               DefectKind.EXCESSIVELY_FREQUENT_OPS, DefectKind.BACKGROUND)


@dataclass
class FleetSpec:
    """Parameters for a synthetic evaluation corpus.

    Magnitude ranges default to the per-type waste ranges the detector is
    meant to catch: execution issues from +25%, background and no-sleep
    issues comfortably above their 40% / 50% dissimilarity thresholds.
    """

    n_apps: int = 20
    categories: tuple[str, ...] = ("News", "Tools", "Travel", "Multimedia", "Communication")
    prevalence: float = 0.3
    kind_cycle: tuple[DefectKind, ...] = _KIND_CYCLE
    second_defect_prob: float = 0.3
    magnitude_ranges: dict = field(default_factory=lambda: {
        DefectKind.UNNECESSARY_WORKLOAD: (0.25, 1.0),
        DefectKind.EXCESSIVELY_FREQUENT_OPS: (0.25, 1.0),
        DefectKind.BACKGROUND: (0.5, 1.9),
        DefectKind.NO_SLEEP: (0.6, 4.0),
    })
    # target per-case hit rate for execution defects; they must stay rare to show up as outliers
    exec_hit_rate: float = 0.03
    max_exec_hits: float = 3.0
    cases_per_app_hint: int = 100
    # random walks sampled per defective app to calibrate trigger rates
    calibration_walks: int = 1000
    n_nodes: tuple[int, int] = (14, 26)
    extra_edge_prob: float = 0.12
    noise_sd: float = 30.0
    os_noise_rate: float = 0.3
    exec_baseline_range: tuple[float, float] = (1200.0, 1800.0)
    app_jitter: float = 0.03
    only_context: ContextKind | None = None

    def __post_init__(self):
        self.categories = tuple(self.categories)
        self.kind_cycle = tuple(DefectKind(k) for k in self.kind_cycle)
        self.magnitude_ranges = {DefectKind(k): tuple(v) for k, v in self.magnitude_ranges.items()}
        if self.only_context is not None:
            self.only_context = ContextKind(self.only_context)
        if self.n_apps < 1 or not self.categories:
            raise ConfigError("fleet needs at least one app and one category")
        if not 0 <= self.prevalence <= 1:
            raise ConfigError("prevalence must lie in [0, 1]")
        if not self.kind_cycle:
            raise ConfigError("kind_cycle must name at least one defect kind")

    @classmethod
    def from_dict(cls, d: Mapping) -> "FleetSpec":
        if not d:
            raise ConfigError("empty fleet spec")
        d = dict(d)
        for key in ("categories", "kind_cycle", "n_nodes", "exec_baseline_range"):
            if key in d:
                d[key] = tuple(d[key])
        if "magnitude_ranges" in d:
            ranges = cls().magnitude_ranges
            ranges.update({DefectKind(k): tuple(v) for k, v in d["magnitude_ranges"].items()})
            d["magnitude_ranges"] = ranges
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad fleet spec: {exc}") from None


def random_efg(rng: np.random.Generator, n_nodes: int, extra_edge_prob: float) -> EventFlowGraph:
    """Tree-shaped UI with extra forward and back links. Node ids sort numerically."""
    names = [f"n{i:02d}" for i in range(n_nodes)]
    edges = {}

    def stats():
        return SequenceStats(int(rng.integers(0, 6)), int(rng.integers(1, 31)))

    for i in range(1, n_nodes):
        parent = int(rng.integers(0, i))
        edges[(names[parent], names[i])] = stats()
    for i in range(n_nodes):
        for j in range(1, n_nodes):
            if i != j and (names[i], names[j]) not in edges and rng.random() < extra_edge_prob / 2:
                edges[(names[i], names[j])] = stats()
    return EventFlowGraph(names[0], edges)


def _sample_walks(efg: EventFlowGraph, rng: np.random.Generator, n_weighted: int,
                  n_random: int = 1000) -> tuple[list[Walk], list[Walk]]:
    """The first ``n_weighted`` pool sequences in test order, plus sampled random walks."""
    pool = build_pool(efg, WeightConfig())
    weighted = []
    for _ in range(n_weighted):
        seq = next_weighted(pool)
        if seq is None:
            break
        weighted.append(path_walk(efg, seq.path))
    randoms = [replay(efg, RandomSequence(int(rng.integers(2**63)), DEFAULT_RANDOM_LENGTH).events)
               for _ in range(n_random)]
    return weighted, randoms


def _estimated_rate(trigger: Trigger, weighted: Sequence[Walk], randoms: Sequence[Walk],
                    contexts: Sequence[RunningContext] = CONTEXTS) -> float:
    """Hit rate for a 50/50 weighted/random mix with uniform contexts."""
    total = 0.0
    for ctx in contexts:
        fw = sum(trigger.holds(w, ctx) for w in weighted) / max(1, len(weighted))
        fr = sum(trigger.holds(w, ctx) for w in randoms) / max(1, len(randoms))
        total += 0.5 * fw + 0.5 * fr
    return total / len(contexts)


# steering can lift one context to about cxt_up_threshold + delta_context
_MAX_CONTEXT_SHARE = 0.66


def _rare_trigger(efg, rng, spec: FleetSpec, weighted, randoms, contexts) -> Trigger:
    """Pick a node/edge trigger, optionally tied to one context, with few expected hits.

    Repeated hits of one defect are near-identical points, and ``min_pts`` of
    them form a dense cluster of their own. The bound used here is
    pessimistic: every weighted sequence the app could get, plus a full
    budget of random walks at an upper-confidence rate, with the context at
    its steered maximum.
    """
    n = spec.cases_per_app_hint
    target = spec.exec_hit_rate * n
    base: list[Trigger] = [Visits(v) for v in efg.nodes if v != efg.root]
    base += [Traverses(e) for e in efg.edges]

    def bound(t: Trigger) -> float:
        w_hits = sum(t.holds(w, NORMAL) for w in weighted)
        r_hits = sum(t.holds(w, NORMAL) for w in randoms)
        if r_hits == 0 and w_hits == 0:
            return 0.0
        # upper confidence bound on the random-walk rate, about two standard errors
        r_rate = (r_hits + 2.0 * math.sqrt(r_hits) + 1.0) / max(1, len(randoms))
        return w_hits + n * r_rate

    bounds = [(bound(b), b) for b in base]
    if not any(0 < h * _MAX_CONTEXT_SHARE <= spec.max_exec_hits for h, _ in bounds):
        # small graphs: every component is busy, so require two of them together
        busy = sorted((h, i) for i, (h, _) in enumerate(bounds) if h > 0)[:12]
        pairs = [AllOf((bounds[i][1], bounds[j][1])) for _, i in busy for _, j in busy if i < j]
        bounds += [(bound(t), t) for t in pairs]
    scored = []
    for h, b in bounds:
        if h <= 0:
            continue
        if spec.only_context is None:
            scored.append((h, b))
        for k in contexts:
            scored.append((h * _MAX_CONTEXT_SHARE, AllOf((b, ContextIs((k,))))))
    if not scored:
        return AllOf((Visits(efg.nodes[-1]), ContextIs(tuple(contexts))))
    rarest = min(h for h, _ in scored)
    cap = max(spec.max_exec_hits, rarest)
    scored = [(abs(math.log(h / target)), c) for h, c in scored if h <= cap]
    scored.sort(key=lambda x: x[0])
    best = [c for d, c in scored if d <= scored[0][0] + 0.1][:5]
    return best[int(rng.integers(len(best)))]


def _common_trigger(efg, rng, kind: DefectKind, spec: FleetSpec, weighted, randoms) -> Trigger:
    if spec.only_context is not None:
        return ContextIs((spec.only_context,))
    options: list[Trigger] = [Always(), ContextIs((ContextKind.NETWORK_FAIL,)),
                              ContextIs((ContextKind.FLIGHT_MODE,))]
    if kind is DefectKind.NO_SLEEP:
        options.append(ContextIs((ContextKind.NON_BACKGROUND,)))
    common = [n for n in efg.nodes[1:] if _estimated_rate(Visits(n), weighted, randoms, (NORMAL,)) >= 0.2]
    if common:
        options.append(Visits(common[int(rng.integers(len(common)))]))
    return options[int(rng.integers(len(options)))]


def generate_fleet(spec: FleetSpec | Mapping, seed: int) -> list[AppModel]:
    """Build a reproducible synthetic fleet.

    Exactly ``round(prevalence * n_apps)`` apps carry defects. Each defective
    app gets one defect whose kind cycles through ``kind_cycle`` and, with
    probability ``second_defect_prob``, a second one.
    """
    if not isinstance(spec, FleetSpec):
        spec = FleetSpec.from_dict(spec)
    rng = np.random.default_rng([int(seed) & (2**64 - 1), 0xF1EE7])
    n_defective = int(round(spec.prevalence * spec.n_apps))
    defective = set(rng.choice(spec.n_apps, size=n_defective, replace=False).tolist())
    cat_exec = {c: float(rng.uniform(*spec.exec_baseline_range)) for c in spec.categories}
    contexts = [spec.only_context] if spec.only_context is not None else list(ContextKind)

    apps = []
    n_seen_defective = 0
    for i in range(spec.n_apps):
        category = spec.categories[i % len(spec.categories)]
        efg = random_efg(rng, int(rng.integers(spec.n_nodes[0], spec.n_nodes[1] + 1)),
                         spec.extra_edge_prob)

        def j():
            return 1.0 + float(rng.uniform(-spec.app_jitter, spec.app_jitter))

        idle = DEFAULT_BASELINES[Stage.IDLE] * j()
        pre_off = DEFAULT_BASELINES[Stage.PRE_OFF] * j()
        baselines = {
            Stage.PRE_OFF: pre_off,
            Stage.IDLE: idle,
            Stage.EXECUTION: cat_exec[category] * j(),
            Stage.BACKGROUND: idle * (1.0 + float(rng.uniform(-0.02, 0.02))),
            Stage.SCREEN_OFF: pre_off * (1.0 + float(rng.uniform(-0.02, 0.02))),
        }
        defects = []
        if i in defective:
            kinds = [spec.kind_cycle[n_seen_defective % len(spec.kind_cycle)]]
            n_seen_defective += 1
            if rng.random() < spec.second_defect_prob:
                kinds.append(spec.kind_cycle[int(rng.integers(len(spec.kind_cycle)))])
            weighted, randoms = _sample_walks(efg, rng, spec.cases_per_app_hint, spec.calibration_walks)
            for k, kind in enumerate(kinds):
                lo, hi = spec.magnitude_ranges[kind]
                if kind.stage is Stage.EXECUTION:
                    trig = _rare_trigger(efg, rng, spec, weighted, randoms, contexts)
                else:
                    trig = _common_trigger(efg, rng, kind, spec, weighted, randoms)
                defects.append(DefectSpec(kind, trig, round(float(rng.uniform(lo, hi)), 4),
                                          name=f"app{i:03d}-{kind.value}-{k}"))
        apps.append(AppModel(
            name=f"app{i:03d}", category=category, efg=efg,
            baselines={s: round(v, 3) for s, v in baselines.items()},
            defects=tuple(defects), noise_sd=spec.noise_sd, os_noise_rate=spec.os_noise_rate,
        ))
    return apps


def load_fleet(path: str | Path, seed: int | None = None) -> list[AppModel]:
    """Load a fleet file: either explicit ``apps`` or a ``generate`` block."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read fleet file {path}: {exc}") from None
    if not isinstance(data, Mapping) or not data:
        raise ConfigError(f"{path}: empty fleet spec")
    if "apps" in data:
        apps = [AppModel.from_dict(a, base_dir=path.parent) for a in data["apps"]]
        if not apps:
            raise ConfigError(f"{path}: no apps listed")
        names = [a.name for a in apps]
        if len(set(names)) != len(names):
            raise ConfigError(f"{path}: duplicate app names")
        return apps
    if "generate" in data:
        fleet_seed = data.get("seed", seed if seed is not None else 0)
        return generate_fleet(FleetSpec.from_dict(data["generate"]), int(fleet_seed))
    raise ConfigError(f"{path}: fleet file needs 'apps' or 'generate'")


def dump_fleet(apps: Iterable[AppModel], path: str | Path) -> Path:
    """Write an explicit fleet file, with each EFG in ``efg/<app>.json`` beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    for app in apps:
        ref = f"efg/{app.name}.json"
        save_efg(app.efg, path.parent / ref)
        entries.append(app.to_dict(efg_ref=ref))
    path.write_text(yaml.safe_dump({"apps": entries}, sort_keys=False), encoding="utf-8")
    return path
