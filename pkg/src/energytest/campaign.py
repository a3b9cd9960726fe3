"""Campaign loop: reset, choose, run, detect, steer, persist.

Background and no-sleep issues are judged per case as soon as it finishes.
Execution issues need a corpus: each category is clustered once it holds
``min_pts`` cases and again every ``exec_batch`` cases after that, then a
final pass over every category's full corpus decides which execution
records stand. Records the final pass no longer supports are retracted
(the database itself is append-only).

In single-worker mode a campaign is a pure function of its config and
seed. With k workers, k cases are planned from the same steering state and
run concurrently, then processed in case order, so results are still
reproducible for a given k but differ from the single-worker trajectory.
"""

from __future__ import annotations

import json
import logging
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from . import steer
from .detect import (CaseEvidence, CaseRef, DbscanParams, DetectionThresholds, EnergyIssueRecord,
                     GroundTruth, IssueKind, detect_background, detect_execution, detect_nosleep,
                     issue_kind_of, observe)
from .efg import (DEFAULT_MAX_LEN, DEFAULT_MAX_PATHS, DEFAULT_RANDOM_LENGTH, RandomSequence,
                  WeightConfig, WeightedSequence, build_pool, next_weighted, path_walk, replay)
from .errors import ConfigError
from .sim import (CONTEXTS, DEFAULT_DURATIONS_MS, AppModel, RunningContext, Simulator, TestCase,
                  load_fleet, run_test_case)
from .trace import Stage, write_trace

log = logging.getLogger(__name__)

ISSUES_FILE = "issues.jsonl"
RETRACTIONS_FILE = "retractions.jsonl"
STEERING_FILE = "steering.jsonl"
CASES_FILE = "cases.jsonl"
SUMMARY_FILE = "summary.json"
CAMPAIGN_FILE = "campaign.json"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class CampaignConfig:
    fleet: str | None = None
    budget: float = 200
    budget_mode: str = "cases"
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1
    thresholds: DetectionThresholds = field(default_factory=DetectionThresholds)
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    steering: steer.SteeringConfig = field(default_factory=steer.SteeringConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)
    max_len: int = DEFAULT_MAX_LEN
    max_paths: int = DEFAULT_MAX_PATHS
    random_length: int = DEFAULT_RANDOM_LENGTH
    stage_durations_ms: dict = field(default_factory=lambda: dict(DEFAULT_DURATIONS_MS))
    exec_batch: int = 25
    final_exec_pass: bool = True
    emit_plots: bool = False

    def __post_init__(self):
        if self.budget_mode not in ("cases", "seconds"):
            raise ConfigError(f"budget_mode must be 'cases' or 'seconds', got {self.budget_mode!r}")
        if self.budget < 0:
            raise ConfigError("budget must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.stage_durations_ms = {Stage(k): int(v) for k, v in self.stage_durations_ms.items()}

    def to_dict(self) -> dict:
        return {
            "fleet": self.fleet, "budget": self.budget, "budget_mode": self.budget_mode,
            "seed": self.seed, "workers": self.workers,
            "thresholds": dict(self.thresholds.__dict__), "dbscan": dict(self.dbscan.__dict__),
            "steering": self.steering.to_dict(), "weights": dict(self.weights.__dict__),
            "max_len": self.max_len, "max_paths": self.max_paths, "random_length": self.random_length,
            "stage_durations_ms": {s.value: v for s, v in self.stage_durations_ms.items()},
            "exec_batch": self.exec_batch, "final_exec_pass": self.final_exec_pass,
        }


_SECTIONS = {"thresholds": DetectionThresholds, "dbscan": DbscanParams,
             "steering": steer.SteeringConfig, "weights": WeightConfig}


def load_campaign_config(path: str | Path, **overrides) -> CampaignConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read campaign config {path}: {exc}") from None
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: campaign config must be a mapping")
    data = dict(data)
    try:
        for key, cls in _SECTIONS.items():
            if key in data:
                data[key] = cls(**(data[key] or {}))
        seqs = data.pop("sequences", None) or {}
        data.update(seqs)
        if "out" in data:
            data["out_dir"] = data.pop("out")
        data.update({k: v for k, v in overrides.items() if v is not None})
        cfg = CampaignConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg.fleet is None:
        raise ConfigError(f"{path}: no fleet given")
    fleet = Path(cfg.fleet)
    if not fleet.is_absolute():
        cfg.fleet = str(path.parent / fleet)
    return cfg


@dataclass(frozen=True)
class IssueEntry:
    seq: int
    sim_time_ms: int
    record: EnergyIssueRecord

    def to_dict(self) -> dict:
        return {"seq": self.seq, "sim_time_ms": self.sim_time_ms, "record": self.record.to_dict()}


class IssueDatabase:
    """Append-only issue log. Retractions are appended too, never deletions."""

    def __init__(self):
        self.entries: list[IssueEntry] = []
        self.retractions: list[dict] = []
        self._retracted: set[int] = set()

    def append(self, record: EnergyIssueRecord, sim_time_ms: int) -> IssueEntry:
        entry = IssueEntry(len(self.entries), int(sim_time_ms), record)
        self.entries.append(entry)
        return entry

    def retract(self, seq: int, sim_time_ms: int, reason: str) -> None:
        if seq in self._retracted:
            return
        self._retracted.add(seq)
        self.retractions.append({"seq": seq, "sim_time_ms": int(sim_time_ms), "reason": reason})

    def active(self) -> list[IssueEntry]:
        return [e for e in self.entries if e.seq not in self._retracted]

    @property
    def records(self) -> list[EnergyIssueRecord]:
        return [e.record for e in self.active()]

    def __len__(self) -> int:
        return len(self.active())

    def save(self, out_dir: Path) -> None:
        (out_dir / ISSUES_FILE).write_text("".join(_dumps(e.to_dict()) + "\n" for e in self.entries))
        (out_dir / RETRACTIONS_FILE).write_text("".join(_dumps(r) + "\n" for r in self.retractions))

    @classmethod
    def load(cls, out_dir: str | Path) -> "IssueDatabase":
        out_dir = Path(out_dir)
        db = cls()
        for line in _read_lines(out_dir / ISSUES_FILE):
            d = json.loads(line)
            db.entries.append(IssueEntry(d["seq"], d["sim_time_ms"], EnergyIssueRecord.from_dict(d["record"])))
        for line in _read_lines(out_dir / RETRACTIONS_FILE):
            r = json.loads(line)
            db.retract(r["seq"], r["sim_time_ms"], r["reason"])
        return db


def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        return []
    return [line for line in path.read_text().splitlines() if line.strip()]


@dataclass
class PlannedCase:
    case_id: int
    app: AppModel
    sequence: WeightedSequence | RandomSequence
    context: RunningContext
    context_index: int
    seed: int
    requested_type: str

    @property
    def input_type(self) -> str:
        return steer.RANDOM if isinstance(self.sequence, RandomSequence) else steer.WEIGHTED

    def ref(self) -> CaseRef:
        return CaseRef(self.case_id, self.app.name, self.app.category, self.input_type,
                       self.sequence.descriptor, self.context.kind, self.seed)


@dataclass
class CampaignResult:
    db: IssueDatabase
    summary: dict
    cases: list[dict]
    steering_log: list[dict]
    state: steer.SteeringState
    out_dir: Path | None = None


def case_seed(campaign_seed: int, case_id: int) -> int:
    ss = np.random.SeedSequence([int(campaign_seed) & (2**64 - 1), int(case_id)])
    return int(ss.generate_state(1, np.uint64)[0])


class Campaign:
    def __init__(self, config: CampaignConfig, apps: Sequence[AppModel] | None = None):
        self.config = config
        if apps is None:
            if config.fleet is None:
                raise ConfigError("campaign needs a fleet file or an app list")
            apps = load_fleet(config.fleet, seed=config.seed)
        if not apps:
            raise ConfigError("campaign fleet is empty")
        self.apps = list(apps)
        self.pools = {a.name: build_pool(a.efg, config.weights, config.max_len, config.max_paths)
                      for a in self.apps}
        self.sim = Simulator(config.stage_durations_ms)
        self.case_ms = sum(self.config.stage_durations_ms.values())
        self.rng = np.random.default_rng([int(config.seed) & (2**64 - 1), 0x5EED])
        self.state = steer.init(config.steering, len(CONTEXTS))
        self.db = IssueDatabase()
        self.steering_log: list[dict] = []
        self.cases: list[dict] = []
        self.planned: list[PlannedCase] = []
        self.evidence: dict[str, list[CaseEvidence]] = defaultdict(list)
        self.exec_active: dict[int, int] = {}  # case_id -> db seq of its live Execution record
        self.out_dir = Path(config.out_dir) if config.out_dir else None

    # -- selection

    def plan_next(self) -> PlannedCase:
        case_id = len(self.planned)
        app = self.apps[case_id % len(self.apps)]
        requested, k = steer.choose(self.state, self.rng)
        seq = next_weighted(self.pools[app.name]) if requested == steer.WEIGHTED else None
        if seq is None:
            # weighted pool drained (or random requested): fall back to a Monkey-style seed
            seq = RandomSequence(int(self.rng.integers(0, 2**63)), self.config.random_length)
        plan = PlannedCase(case_id, app, seq, CONTEXTS[k], k, case_seed(self.config.seed, case_id),
                           requested)
        self.planned.append(plan)
        return plan

    def execute(self, plan: PlannedCase) -> TestCase:
        self.sim.reset()
        return self.sim.run(plan.app, plan.sequence, plan.context, plan.seed)

    @staticmethod
    def rerun(plan: PlannedCase, durations) -> TestCase:
        return run_test_case(plan.app, plan.sequence, plan.context, plan.seed, durations)

    # -- bookkeeping

    def _trace_path(self, case_id: int) -> str:
        return f"traces/case_{case_id:06d}.csv"

    def _store_trace(self, case_id: int, case: TestCase | None = None) -> str | None:
        if self.out_dir is None:
            return None
        rel = self._trace_path(case_id)
        target = self.out_dir / rel
        if not target.exists():
            if case is None:
                case = self.rerun(self.planned[case_id], self.config.stage_durations_ms)
            write_trace(target, case.staged)
        return rel

    def _record(self, record: EnergyIssueRecord, sim_time_ms: int, steer_now: bool,
                case: TestCase | None = None) -> IssueEntry:
        record = replace(record, trace_path=self._store_trace(record.case.case_id, case))
        entry = self.db.append(record, sim_time_ms)
        plan = self.planned[record.case.case_id]
        if steer_now:
            self.state = steer.update_on_issue(self.state, plan.input_type, plan.context_index,
                                               self.config.steering)
        self.steering_log.append({"seq": entry.seq, "case_id": plan.case_id, "kind": record.kind.value,
                                  "input_type": plan.input_type, "context": plan.context.kind.value,
                                  "updated": steer_now, **self.state.to_dict()})
        return entry

    def process(self, plan: PlannedCase, case: TestCase) -> None:
        ref = plan.ref()
        ev = observe(case, ref=ref)
        now = (plan.case_id + 1) * self.case_ms
        self.cases.append({
            **ref.to_dict(),
            "requested_type": plan.requested_type,
            "triggered": sorted({issue_kind_of(d.kind).value for d in case.triggered_defects}),
            "defects": [d.name for d in case.triggered_defects],
            "stage_means": {s.value: m for s, m in ev.stage_means.items()},
            "features": ev.features.to_dict(),
        })
        for rec in (detect_background(ev, self.config.thresholds),
                    detect_nosleep(ev, self.config.thresholds)):
            if rec is not None:
                self._record(rec, now, steer_now=True, case=case)
        corpus = self.evidence[plan.app.category]
        corpus.append(ev)
        min_pts = self.config.dbscan.min_pts
        batch = self.config.exec_batch
        if batch and len(corpus) >= min_pts and (len(corpus) - min_pts) % batch == 0:
            for rec in detect_execution(corpus, params=self.config.dbscan,
                                        thresholds=self.config.thresholds):
                cid = rec.case.case_id
                if cid not in self.exec_active:
                    self.exec_active[cid] = self._record(rec, now, steer_now=True).seq

    def final_pass(self) -> None:
        now = len(self.planned) * self.case_ms
        final: dict[int, EnergyIssueRecord] = {}
        for category in sorted(self.evidence):
            corpus = self.evidence[category]
            if len(corpus) < self.config.dbscan.min_pts:
                continue
            for rec in detect_execution(corpus, params=self.config.dbscan,
                                        thresholds=self.config.thresholds):
                final[rec.case.case_id] = rec
        by_seq = {e.seq: e for e in self.db.entries}
        for cid in sorted(self.exec_active):
            old = by_seq[self.exec_active[cid]].record
            new = final.get(cid)
            if new is None or (new.waste, new.e_n) != (old.waste, old.e_n):
                self.db.retract(self.exec_active.pop(cid), now,
                                "not an outlier in final pass" if new is None else "restated by final pass")
        for cid in sorted(final):
            if cid not in self.exec_active:
                self.exec_active[cid] = self._record(final[cid], now, steer_now=False).seq

    # -- driver

    def budget_left(self, started: float) -> int:
        if self.config.budget_mode == "cases":
            return int(self.config.budget) - len(self.planned)
        return self.config.workers if time.monotonic() - started < self.config.budget else 0

    def run(self) -> CampaignResult:
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        started = time.monotonic()
        pool = ThreadPoolExecutor(self.config.workers) if self.config.workers > 1 else None
        try:
            while (left := self.budget_left(started)) > 0:
                plans = [self.plan_next() for _ in range(min(left, self.config.workers))]
                if pool is None:
                    results = [self.execute(p) for p in plans]
                else:
                    durations = self.config.stage_durations_ms
                    results = list(pool.map(lambda p: self.rerun(p, durations), plans))
                for plan, case in zip(plans, results):
                    self.process(plan, case)
        finally:
            if pool is not None:
                pool.shutdown()
        if self.config.final_exec_pass:
            self.final_pass()
        summary = summarize(self.db, self.cases, self.state, self.steering_log)
        if self.out_dir is not None:
            self.save(summary)
        return CampaignResult(self.db, summary, self.cases, self.steering_log, self.state, self.out_dir)

    def save(self, summary: dict) -> None:
        out = self.out_dir
        self.db.save(out)
        (out / STEERING_FILE).write_text("".join(_dumps(s) + "\n" for s in self.steering_log))
        (out / CASES_FILE).write_text("".join(_dumps(c) + "\n" for c in self.cases))
        (out / SUMMARY_FILE).write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
        (out / CAMPAIGN_FILE).write_text(json.dumps(self.config.to_dict(), sort_keys=True, indent=1) + "\n")


def run_campaign(config: CampaignConfig, apps: Sequence[AppModel] | None = None) -> CampaignResult:
    return Campaign(config, apps).run()


def summarize(db: IssueDatabase, cases: Sequence[Mapping], state: steer.SteeringState | None = None,
              steering_log: Sequence[Mapping] = ()) -> dict:
    """Per-kind counts and waste stats, plus deduplicated issues with hit counts."""
    active = db.records
    per_kind = {}
    for kind in IssueKind:
        wastes = [r.waste for r in active if r.kind is kind]
        per_kind[kind.value] = {
            "count": len(wastes),
            "waste_mean": float(np.mean(wastes)) if wastes else None,
            "waste_max": max(wastes) if wastes else None,
        }
    cases_per_app = Counter(c["app"] for c in cases)
    groups: dict[tuple, list[EnergyIssueRecord]] = defaultdict(list)
    for r in active:
        groups[r.identity].append(r)
    issues = []
    for (app, kind, stage, ctx), recs in sorted(groups.items()):
        issues.append({
            "app": app, "kind": kind, "stage": stage, "context": ctx, "hits": len(recs),
            "hit_rate": len(recs) / cases_per_app[app] if cases_per_app[app] else None,
            "waste_mean": float(np.mean([r.waste for r in recs])),
            "first_case": min(r.case.case_id for r in recs),
        })
    return {
        "cases": len(cases),
        "records": len(active),
        "retracted": len(db.retractions),
        "per_kind": per_kind,
        "issues": issues,
        "cases_per_context": dict(sorted(Counter(c["context"] for c in cases).items())),
        "cases_per_input_type": dict(sorted(Counter(c["input_type"] for c in cases).items())),
        "steering": {**(state.to_dict() if state else {}),
                     "updates": sum(1 for s in steering_log if s.get("updated"))},
    }


# ---------------------------------------------------------------- reading campaigns back

def load_cases(out_dir: str | Path) -> list[dict]:
    return [json.loads(line) for line in _read_lines(Path(out_dir) / CASES_FILE)]


def load_steering_log(out_dir: str | Path) -> list[dict]:
    return [json.loads(line) for line in _read_lines(Path(out_dir) / STEERING_FILE)]


def ground_truth_from_log(apps: Sequence[AppModel], cases: Sequence[Mapping]) -> list[GroundTruth]:
    """Re-evaluate each logged case's defect triggers against a fleet description."""
    by_name = {a.name: a for a in apps}
    out = []
    for c in cases:
        app = by_name.get(c["app"])
        if app is None:
            raise ConfigError(f"case {c['case_id']} references unknown app {c['app']!r}")
        desc = c["sequence"]
        if desc["type"] == "random":
            walk = replay(app.efg, RandomSequence(int(desc["seed"]), int(desc["length"])).events)
        else:
            walk = path_walk(app.efg, desc["path"])
        ctx = RunningContext.of(c["context"])
        kinds = frozenset(issue_kind_of(d.kind) for d in app.defects if d.fires(walk, ctx))
        out.append(GroundTruth(int(c["case_id"]), kinds))
    return out
