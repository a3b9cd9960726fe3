"""Small builders shared by several test modules."""

import numpy as np

from energytest.efg import EventFlowGraph, SequenceStats
from energytest.sim import AppModel
from energytest.trace import PowerTrace, Stage, StageMarkers, segment


def chain_efg():
    return EventFlowGraph("main", {
        ("main", "list"): SequenceStats(2, 6),
        ("list", "detail"): SequenceStats(4, 10),
        ("main", "settings"): SequenceStats(1, 3),
        ("detail", "share"): SequenceStats(6, 18),
    })


def make_app(defects=(), name="app", category="Tools", noise_sd=0.0, os_noise_rate=0.0, **kw):
    return AppModel(name=name, category=category, efg=chain_efg(), defects=tuple(defects),
                    noise_sd=noise_sd, os_noise_rate=os_noise_rate, **kw)


def staged_from_levels(levels, samples=100, period=10, background=True):
    """Flat stages at the given mean powers (a dict keyed by Stage)."""
    stages = [s for s in Stage if background or s is not Stage.BACKGROUND]
    p = np.concatenate([np.full(samples, float(levels[s])) for s in stages])
    markers = StageMarkers.from_durations([(s, samples * period) for s in stages])
    return segment(PowerTrace.from_power(p, period), markers)
