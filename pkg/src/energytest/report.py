"""Human-readable report bundle for a finished campaign.

The bundle lives in ``<db>/report/``: ``index.json`` with the campaign
summary and one entry per active record, and ``issues/issue_<seq>.json``
with the full evidence for each record. PNG plots are optional and need
matplotlib.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .campaign import SUMMARY_FILE, IssueDatabase, IssueEntry, load_cases, summarize
from .detect import IssueKind
from .trace import downsample, energy_waste, mean_power, read_trace

log = logging.getLogger(__name__)

REPORT_DIR = "report"

RATIONALE = {
    IssueKind.EXECUTION: (
        "The case's CHPP features (length, count, mean CHPP power, mean execution power) were "
        "clustered with DBSCAN against every case of the same app category. This case was a "
        "density outlier and its execution-stage power sits above the category mean, so the "
        "extra power is attributed to work that similar apps do not need. Waste compares its "
        "execution mean with the mean of the non-outlier cases."
    ),
    IssueKind.BACKGROUND: (
        "After the app was sent to the background the device should draw about what it drew "
        "while idle before the test. BACKGROUND-stage mean power exceeded the IDLE mean by more "
        "than the background threshold, so the app kept working after leaving the foreground."
    ),
    IssueKind.NO_SLEEP: (
        "With the screen off the device should return to its pre-test sleep level. SCREEN-OFF "
        "mean power exceeded the PRE-OFF mean by more than the no-sleep threshold, which points "
        "at a resource such as a wake lock that was never released."
    ),
}

_STAGE_PAIRS = {
    IssueKind.EXECUTION: None,
    IssueKind.BACKGROUND: ("BACKGROUND", "IDLE"),
    IssueKind.NO_SLEEP: ("SCREEN-OFF", "PRE-OFF"),
}


def issue_report(entry: IssueEntry, db_dir: Path, bin_ms: int = 1000) -> dict:
    rec = entry.record
    case = rec.case
    evidence: dict = {"waste_percent": rec.waste, "e_x": rec.e_x, "e_n": rec.e_n}
    pair = _STAGE_PAIRS[rec.kind]
    if pair is None:
        evidence["features"] = rec.features.to_dict() if rec.features else None
        evidence["e_x_is"] = "EXECUTION mean of this case"
        evidence["e_n_is"] = "EXECUTION mean over non-outlier cases of the category"
    else:
        evidence["dissimilarity"] = rec.dissimilarity
        evidence["stage_means"] = {pair[0]: rec.e_x, pair[1]: rec.e_n}
        evidence["e_x_is"] = f"{pair[0]} mean"
        evidence["e_n_is"] = f"{pair[1]} mean"

    trace_block: dict = {"path": rec.trace_path, "series": None}
    if rec.trace_path:
        staged = read_trace(db_dir / rec.trace_path)
        trace_block["series"] = downsample(staged, bin_ms)
        stage_means = {s.value: mean_power(staged, s) for s in staged.labels}
        trace_block["stage_means"] = stage_means
        trace_block["recomputed_waste"] = energy_waste(stage_means[rec.stage.value], rec.e_n)

    return {
        "seq": entry.seq,
        "detected_at_ms": entry.sim_time_ms,
        "kind": rec.kind.value,
        "stage": rec.stage.value,
        "app": case.app,
        "category": case.category,
        "input": {"case_id": case.case_id, "input_type": case.input_type,
                  "sequence": case.sequence, "seed": case.seed},
        "context": {"kind": case.context.value},
        "trace": trace_block,
        "evidence": evidence,
        "rationale": RATIONALE[rec.kind],
    }


def _plot(report: dict, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = report["trace"]["series"]
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot([t / 1000 for t in series["t_ms"]], series["p_mw"], lw=1)
    for label, start in series["stages"]:
        ax.axvline(start / 1000, color="grey", lw=0.5, ls="--")
        ax.text(start / 1000, ax.get_ylim()[1], label, fontsize=7, va="top")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("power (mW)")
    ax.set_title(f"{report['app']} {report['kind']} ({report['context']['kind']}), "
                 f"waste {report['evidence']['waste_percent']:.1f}%")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def generate_report(db_dir: str | Path, emit_plots: bool = False, bin_ms: int = 1000) -> Path:
    """Write the report bundle for the campaign stored in ``db_dir``; returns the index path."""
    db_dir = Path(db_dir)
    db = IssueDatabase.load(db_dir)
    summary_file = db_dir / SUMMARY_FILE
    if summary_file.exists():
        summary = json.loads(summary_file.read_text())
    else:
        summary = summarize(db, load_cases(db_dir))

    out = db_dir / REPORT_DIR
    (out / "issues").mkdir(parents=True, exist_ok=True)
    index = {"summary": summary, "issues": []}
    for entry in db.active():
        rep = issue_report(entry, db_dir, bin_ms)
        name = f"issues/issue_{entry.seq:06d}.json"
        (out / name).write_text(json.dumps(rep, sort_keys=True, indent=1) + "\n")
        item = {"seq": entry.seq, "kind": rep["kind"], "app": rep["app"],
                "context": rep["context"]["kind"], "waste_percent": rep["evidence"]["waste_percent"],
                "file": name}
        if emit_plots and rep["trace"]["series"] is not None:
            png = f"issues/issue_{entry.seq:06d}.png"
            try:
                _plot(rep, out / png)
                item["plot"] = png
            except ImportError:
                log.warning("matplotlib not installed; skipping plots")
                emit_plots = False
        index["issues"].append(item)
    path = out / "index.json"
    path.write_text(json.dumps(index, sort_keys=True, indent=1) + "\n")
    return path
