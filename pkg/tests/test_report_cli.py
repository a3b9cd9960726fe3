import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from energytest.campaign import CampaignConfig, run_campaign
from energytest.cli import EXIT_CONFIG, main
from energytest.report import RATIONALE, generate_report
from energytest.sim import Always, ContextIs, ContextKind, DefectKind, DefectSpec, dump_fleet

from helpers import make_app

SHORT = {"PRE-OFF": 500, "IDLE": 500, "EXECUTION": 6000, "BACKGROUND": 500, "SCREEN-OFF": 500}
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def campaign(out, apps, budget=20, **kw):
    cfg = CampaignConfig(out_dir=str(out), budget=budget, seed=4, stage_durations_ms=SHORT, **kw)
    return run_campaign(cfg, apps)


def test_empty_database_gives_summary_only_bundle(tmp_path):
    campaign(tmp_path, [make_app()], budget=0)
    index = json.loads(generate_report(tmp_path).read_text())
    assert index["issues"] == []
    assert index["summary"]["records"] == 0


def test_wakelock_report_shows_stage_means_and_waste(tmp_path):
    # SCREEN-OFF at 3.428x the sleep level, as in a wake lock that is never released
    app = make_app([DefectSpec(DefectKind.NO_SLEEP, Always(), 2.428, "wakelock")], name="vanilla")
    campaign(tmp_path, [app], budget=3)
    index = json.loads(generate_report(tmp_path).read_text())
    assert len(index["issues"]) == 3
    rep = json.loads((tmp_path / "report" / index["issues"][0]["file"]).read_text())
    assert rep["kind"] == "NoSleep" and rep["stage"] == "SCREEN-OFF"
    means = rep["evidence"]["stage_means"]
    assert means["PRE-OFF"] == pytest.approx(300.0)
    assert means["SCREEN-OFF"] == pytest.approx(1028.4)
    assert rep["evidence"]["waste_percent"] == pytest.approx(242.8, abs=1e-9)
    assert rep["rationale"] == RATIONALE[rep["kind"]]


def test_every_report_recomputes_its_waste(tmp_path):
    apps = [make_app([DefectSpec(DefectKind.BACKGROUND, ContextIs((ContextKind.NORMAL,)), 0.9)],
                     name="bg", noise_sd=25.0),
            make_app([DefectSpec(DefectKind.NO_SLEEP, Always(), 0.7)], name="ns", noise_sd=25.0)]
    campaign(tmp_path, apps, budget=40)
    index = json.loads(generate_report(tmp_path).read_text())
    assert index["issues"]
    for item in index["issues"]:
        rep = json.loads((tmp_path / "report" / item["file"]).read_text())
        assert math.isclose(rep["trace"]["recomputed_waste"], rep["evidence"]["waste_percent"], rel_tol=1e-9)
        assert rep["input"]["sequence"]["type"] in ("weighted", "random")
        series = rep["trace"]["series"]
        assert len(series["t_ms"]) == len(series["p_mw"]) > 0


def test_plots_are_optional(tmp_path):
    pytest.importorskip("matplotlib")
    app = make_app([DefectSpec(DefectKind.NO_SLEEP, Always(), 1.0)])
    campaign(tmp_path, [app], budget=1)
    index = json.loads(generate_report(tmp_path, emit_plots=True).read_text())
    assert (tmp_path / "report" / index["issues"][0]["plot"]).stat().st_size > 0


# ---------------------------------------------------------------- CLI

@pytest.fixture
def cli_config(tmp_path):
    fleet = [make_app([DefectSpec(DefectKind.NO_SLEEP, ContextIs((ContextKind.FLIGHT_MODE,)), 1.5, "ns")],
                      name="leaky", noise_sd=20.0),
             make_app(name="plain", noise_sd=20.0)]
    dump_fleet(fleet, tmp_path / "fleet.yaml")
    stages = "\n".join(f"  {k}: {v}" for k, v in SHORT.items())
    (tmp_path / "c.yaml").write_text(f"fleet: fleet.yaml\nbudget: 10\nstage_durations_ms:\n{stages}\n")
    return tmp_path / "c.yaml"


def test_cli_run_report_score(tmp_path, cli_config, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(cli_config), "--seed", "5", "--budget", "30", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["cases"] == 30
    assert (out / "report" / "index.json").exists()

    assert main(["report", "--db", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["issues"] == summary["records"]

    assert main(["score", "--db", str(out), "--fleet", str(tmp_path / "fleet.yaml")]) == 0
    scores = json.loads(capsys.readouterr().out)
    assert set(scores) == {"Execution", "Background", "NoSleep"}
    assert scores["NoSleep"]["fp"] == 0 and scores["NoSleep"]["fn"] == 0


def test_cli_seed_changes_run(tmp_path, cli_config, capsys):
    for seed in ("1", "0x2"):
        assert main(["run", "--config", str(cli_config), "--seed", seed, "--out", str(tmp_path / seed)]) == 0
    capsys.readouterr()
    a = (tmp_path / "1" / "cases.jsonl").read_text()
    b = (tmp_path / "0x2" / "cases.jsonl").read_text()
    assert a != b


def test_cli_config_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    (tmp_path / "bad.yaml").write_text("fleet: nowhere.yaml\n")
    assert main(["run", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_rejects_out_of_range_seed(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--config", "x.yaml", "--seed", str(2**64), "--out", str(tmp_path)])


def test_module_entry_point(tmp_path):
    out = tmp_path / "demo"
    proc = subprocess.run([sys.executable, "-m", "energytest", "run", "--config",
                           str(CONFIGS / "demo_campaign.yaml"), "--budget", "8", "--out", str(out)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["cases"] == 8
