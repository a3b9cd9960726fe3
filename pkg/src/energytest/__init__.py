"""Energy-issue testing for mobile apps on a simulated power monitor.

Modules, in pipeline order: ``efg`` (input sequences), ``sim`` (apps,
contexts and power traces), ``trace`` (stages and CHPP features),
``detect`` (issue rules and DBSCAN), ``steer`` (on-the-fly steering),
``campaign`` (the test loop) and ``report``.
"""

from .campaign import CampaignConfig, IssueDatabase, load_campaign_config, run_campaign
from .detect import (DbscanParams, DetectionThresholds, EnergyIssueRecord, IssueKind, dbscan,
                     detect_background, detect_execution, detect_nosleep,
                     score_against_ground_truth)
from .efg import EventFlowGraph, RandomSequence, SequenceStats, WeightConfig, weight
from .errors import ConfigError, EnergyTestError
from .report import generate_report
from .sim import AppModel, ContextKind, DefectKind, DefectSpec, FleetSpec, Simulator, generate_fleet
from .steer import SteeringConfig, SteeringState, update_on_issue
from .trace import ChppConfig, Stage, energy_waste, features, find_chpp, segment

__version__ = "0.1.0"

__all__ = [
    "AppModel", "CampaignConfig", "ChppConfig", "ConfigError", "ContextKind", "DbscanParams",
    "DefectKind", "DefectSpec", "DetectionThresholds", "EnergyIssueRecord", "EnergyTestError",
    "EventFlowGraph", "FleetSpec", "IssueDatabase", "IssueKind", "RandomSequence", "SequenceStats",
    "Simulator", "Stage", "SteeringConfig", "SteeringState", "WeightConfig", "dbscan",
    "detect_background", "detect_execution", "detect_nosleep", "energy_waste", "features",
    "find_chpp", "generate_fleet", "generate_report", "load_campaign_config", "run_campaign",
    "score_against_ground_truth", "segment", "update_on_issue", "weight",
]
