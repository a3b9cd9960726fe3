"""Energy-issue identification from staged traces.

Execution issues: test cases of one app category are clustered with
DBSCAN over their EXECUTION-stage feature vectors and high-power outliers
become suspects. Background and no-sleep issues: the suspect stage's mean
power is compared against its baseline stage (BACKGROUND vs IDLE,
SCREEN-OFF vs PRE-OFF).

DBSCAN labelling used here:

* core: at least ``min_pts`` points within ``eps`` (the point itself included);
* border: not core, but linked to a core point through a chain of
  neighbouring non-core points;
* outlier: everything else.

Cluster ids count up in order of each cluster's lowest-index core point.
A border point reachable from several clusters joins the lowest id.
"""

from __future__ import annotations

import enum
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InsufficientCorpus
from .sim import ContextKind, DefectKind, TestCase
from .trace import (ChppConfig, FeatureVector, Stage, StagedTrace, dissimilarity, energy_waste,
                    features, mean_power, relative_increase)


class DegenerateFeatureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 1.5
    min_pts: int = 5

    def __post_init__(self):
        if not self.eps > 0 or self.min_pts < 1:
            raise ValueError("eps must be positive and min_pts >= 1")


class LabelKind(str, enum.Enum):
    CORE = "core"
    BORDER = "border"
    OUTLIER = "outlier"


@dataclass(frozen=True)
class PointLabel:
    kind: LabelKind
    cluster: int | None = None

    @property
    def is_outlier(self) -> bool:
        return self.kind is LabelKind.OUTLIER


OUTLIER = PointLabel(LabelKind.OUTLIER)


@dataclass(frozen=True)
class DetectionThresholds:
    background: float = 0.40
    nosleep: float = 0.50
    min_waste_report: float = 10.0

    def __post_init__(self):
        if min(self.background, self.nosleep, self.min_waste_report) <= 0:
            raise ValueError("detection thresholds must be positive")


class IssueKind(str, enum.Enum):
    EXECUTION = "Execution"
    BACKGROUND = "Background"
    NO_SLEEP = "NoSleep"

    @property
    def stage(self) -> Stage:
        return {IssueKind.EXECUTION: Stage.EXECUTION, IssueKind.BACKGROUND: Stage.BACKGROUND,
                IssueKind.NO_SLEEP: Stage.SCREEN_OFF}[self]

    def __str__(self) -> str:
        return self.value


def issue_kind_of(defect: DefectKind) -> IssueKind:
    return {Stage.EXECUTION: IssueKind.EXECUTION, Stage.BACKGROUND: IssueKind.BACKGROUND,
            Stage.SCREEN_OFF: IssueKind.NO_SLEEP}[defect.stage]


@dataclass(frozen=True)
class CaseRef:
    """Where a test case came from; enough to rerun it."""

    case_id: int
    app: str
    category: str
    input_type: str
    sequence: Mapping
    context: ContextKind
    seed: int

    def to_dict(self) -> dict:
        return {"case_id": self.case_id, "app": self.app, "category": self.category,
                "input_type": self.input_type, "sequence": dict(self.sequence),
                "context": self.context.value, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CaseRef":
        return cls(int(d["case_id"]), d["app"], d["category"], d["input_type"], d["sequence"],
                   ContextKind(d["context"]), int(d["seed"]))


@dataclass(frozen=True)
class CaseEvidence:
    """Per-case numbers the detectors need, so full traces need not be kept."""

    ref: CaseRef
    features: FeatureVector
    stage_means: Mapping[Stage, float]

    def has(self, stage: Stage) -> bool:
        return stage in self.stage_means


def observe(case: TestCase | StagedTrace, ref: CaseRef | None = None,
            chpp: ChppConfig | None = None) -> CaseEvidence:
    """Summarize a case. Without an explicit ``chpp`` the threshold is 2.5x the case's IDLE mean."""
    staged = case.staged if isinstance(case, TestCase) else case
    if ref is None:
        if isinstance(case, TestCase):
            ref = CaseRef(-1, case.app, case.category, case.input_type, case.sequence.descriptor,
                          case.context.kind, case.seed)
        else:
            ref = CaseRef(-1, "", "", "", {}, ContextKind.NORMAL, 0)
    cfg = chpp if chpp is not None else ChppConfig.relative_to_idle(staged)
    means = {s: mean_power(staged, s) for s in staged.labels}
    return CaseEvidence(ref, features(staged, cfg), means)


@dataclass(frozen=True)
class EnergyIssueRecord:
    kind: IssueKind
    case: CaseRef
    waste: float
    e_x: float
    e_n: float
    features: FeatureVector | None = None
    dissimilarity: float | None = None
    trace_path: str | None = None

    @property
    def stage(self) -> Stage:
        return self.kind.stage

    @property
    def identity(self) -> tuple[str, str, str, str]:
        return (self.case.app, self.kind.value, self.stage.value, self.case.context.value)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "stage": self.stage.value,
            "case": self.case.to_dict(),
            "waste": self.waste,
            "e_x": self.e_x,
            "e_n": self.e_n,
            "features": self.features.to_dict() if self.features else None,
            "dissimilarity": self.dissimilarity,
            "trace_path": self.trace_path,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EnergyIssueRecord":
        fv = d.get("features")
        return cls(IssueKind(d["kind"]), CaseRef.from_dict(d["case"]), float(d["waste"]),
                   float(d["e_x"]), float(d["e_n"]),
                   FeatureVector(**fv) if fv else None, d.get("dissimilarity"), d.get("trace_path"))


# ---------------------------------------------------------------- DBSCAN

def zscore(points: np.ndarray) -> np.ndarray:
    """Per-dimension z-scores; zero-variance dimensions are dropped with a warning."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("points must be a 2-d array")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    keep = sd > 1e-12 * np.maximum(1.0, np.abs(mu))
    if not keep.all():
        warnings.warn(f"dropping zero-variance feature dimensions {np.flatnonzero(~keep).tolist()}",
                      DegenerateFeatureWarning, stacklevel=3)
    return (x[:, keep] - mu[keep]) / sd[keep]


def neighbourhoods(z: np.ndarray, eps: float) -> list[np.ndarray]:
    sq = np.einsum("ij,ij->i", z, z)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    # the expansion is only a prefilter: its rounding error scales with the norms
    close = d2 <= eps * eps + 1e-9 * (sq[:, None] + sq[None, :] + eps * eps)
    out = []
    for i in range(len(z)):
        cand = np.flatnonzero(close[i])
        diff = z[cand] - z[i]
        out.append(cand[np.sqrt(np.einsum("ij,ij->i", diff, diff)) <= eps])
    return out


def dbscan(points: Sequence[Sequence[float]] | np.ndarray, params: DbscanParams = DbscanParams(),
           normalize: bool = True) -> list[PointLabel]:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("dbscan needs a nonempty 2-d point set")
    z = zscore(x) if normalize else x
    nbrs = neighbourhoods(z, params.eps)
    core = np.array([len(nb) >= params.min_pts for nb in nbrs])
    cluster = np.full(len(x), -1)
    next_id = 0
    for i in range(len(x)):
        if not core[i] or cluster[i] >= 0:
            continue
        cluster[i] = next_id
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for k in nbrs[j]:
                if cluster[k] >= 0:
                    continue
                # a border point may extend the cluster only into other non-core points
                if core[k] and not core[j]:
                    continue
                cluster[k] = next_id
                queue.append(k)
        next_id += 1
    labels = []
    for i in range(len(x)):
        if cluster[i] < 0:
            labels.append(OUTLIER)
        else:
            labels.append(PointLabel(LabelKind.CORE if core[i] else LabelKind.BORDER, int(cluster[i])))
    return labels


# ---------------------------------------------------------------- detectors

def _as_evidence(cases: Iterable[TestCase | CaseEvidence], chpp: ChppConfig | None) -> list[CaseEvidence]:
    return [c if isinstance(c, CaseEvidence) else observe(c, chpp=chpp) for c in cases]


def detect_execution(cases: Sequence[TestCase | CaseEvidence], chpp: ChppConfig | None = None,
                     params: DbscanParams = DbscanParams(),
                     thresholds: DetectionThresholds = DetectionThresholds()) -> list[EnergyIssueRecord]:
    """Execution issues among test cases of one app category."""
    ev = _as_evidence(cases, chpp)
    if len(ev) < params.min_pts:
        raise InsufficientCorpus(f"{len(ev)} cases, need at least min_pts={params.min_pts}")
    x = np.array([e.features.as_array() for e in ev])
    with warnings.catch_warnings():
        # identical feature columns are routine here (no CHPP anywhere in the category)
        warnings.simplefilter("ignore", DegenerateFeatureWarning)
        labels = dbscan(x, params)
    mu_exe = x[:, 3]
    normal = np.array([not lab.is_outlier for lab in labels])
    if not normal.any():
        return []
    category_mean = float(mu_exe.mean())
    e_n = float(mu_exe[normal].mean())
    records = []
    for e, lab in zip(ev, labels):
        if not lab.is_outlier or not e.features.mu_exe > category_mean:
            continue
        w = energy_waste(e.features.mu_exe, e_n)
        if w < thresholds.min_waste_report:
            continue
        records.append(EnergyIssueRecord(IssueKind.EXECUTION, e.ref, w, e.features.mu_exe, e_n,
                                         features=e.features))
    return records


def _stage_rule(e: CaseEvidence, kind: IssueKind, suspect: Stage, baseline: Stage,
                threshold: float, thresholds: DetectionThresholds) -> EnergyIssueRecord | None:
    if not (e.has(suspect) and e.has(baseline)):
        return None
    mu_s, mu_b = e.stage_means[suspect], e.stage_means[baseline]
    d = relative_increase(mu_s, mu_b)
    if not d > threshold:
        return None
    w = energy_waste(mu_s, mu_b)
    if w < thresholds.min_waste_report:
        return None
    return EnergyIssueRecord(kind, e.ref, w, mu_s, mu_b, dissimilarity=d)


def detect_background(case: TestCase | CaseEvidence,
                      thresholds: DetectionThresholds = DetectionThresholds()) -> EnergyIssueRecord | None:
    e = _as_evidence([case], None)[0]
    return _stage_rule(e, IssueKind.BACKGROUND, Stage.BACKGROUND, Stage.IDLE,
                       thresholds.background, thresholds)


def detect_nosleep(case: TestCase | CaseEvidence,
                   thresholds: DetectionThresholds = DetectionThresholds()) -> EnergyIssueRecord | None:
    e = _as_evidence([case], None)[0]
    return _stage_rule(e, IssueKind.NO_SLEEP, Stage.SCREEN_OFF, Stage.PRE_OFF,
                       thresholds.nosleep, thresholds)


def stage_dissimilarity(staged: StagedTrace, kind: IssueKind) -> float:
    suspect, baseline = {IssueKind.BACKGROUND: (Stage.BACKGROUND, Stage.IDLE),
                         IssueKind.NO_SLEEP: (Stage.SCREEN_OFF, Stage.PRE_OFF)}[kind]
    return dissimilarity(staged, suspect, baseline)


# ---------------------------------------------------------------- scoring

@dataclass
class KindScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 1.0
    recall: float = 1.0
    precision_vacuous: bool = False
    recall_vacuous: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class GroundTruth:
    case_id: int
    kinds: frozenset[IssueKind] = field(default_factory=frozenset)


def ground_truth(case_id: int, case: TestCase) -> GroundTruth:
    return GroundTruth(case_id, frozenset(issue_kind_of(d.kind) for d in case.triggered_defects))


def score_against_ground_truth(records: Iterable[EnergyIssueRecord],
                               truths: Iterable[GroundTruth]) -> dict[IssueKind, KindScore]:
    """Case-level precision and recall per issue kind.

    With no records of a kind, precision is reported as 1.0 and flagged
    vacuous; likewise recall when no case carries that kind.
    """
    truth = {t.case_id: t.kinds for t in truths}
    flagged: dict[IssueKind, set[int]] = {k: set() for k in IssueKind}
    for r in records:
        flagged[r.kind].add(r.case.case_id)
    out = {}
    for kind in IssueKind:
        positives = {cid for cid, ks in truth.items() if kind in ks}
        hits = flagged[kind]
        s = KindScore(tp=len(hits & positives), fp=len(hits - positives), fn=len(positives - hits))
        if hits:
            s.precision = s.tp / len(hits)
        else:
            s.precision_vacuous = True
        if positives:
            s.recall = s.tp / len(positives)
        else:
            s.recall_vacuous = True
        out[kind] = s
    return out
