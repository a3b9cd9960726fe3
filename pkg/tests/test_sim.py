import numpy as np
import pytest
from hypothesis import given, strategies as st

from energytest.efg import RandomSequence, WeightedSequence, SequenceStats
from energytest.errors import ConfigError, PathError
from energytest.sim import (CONTEXTS, DEFAULT_BASELINES, FLIGHT_MODE, NETWORK_FAIL, NON_BACKGROUND,
                            NORMAL, Always, AllOf, AnyOf, AppModel, ContextIs, ContextKind,
                            DefectKind, DefectSpec, FleetSpec, RunningContext, Simulator, Traverses,
                            Visits, dump_fleet, generate_fleet, load_fleet, parse_trigger,
                            run_test_case)
from energytest.trace import Stage, energy_waste, features, mean_power, write_trace, ChppConfig

from helpers import chain_efg, make_app

DURATIONS = {Stage.PRE_OFF: 1000, Stage.IDLE: 1000, Stage.EXECUTION: 24000,
             Stage.BACKGROUND: 1000, Stage.SCREEN_OFF: 1000}


def wseq(*path):
    return WeightedSequence(tuple(path), SequenceStats(), 0.0)


# ---------------------------------------------------------------- contexts

def test_context_parameters():
    assert (NORMAL.delay_ms, NORMAL.bandwidth_kbps) == (36.0, 3200.0)
    assert (NETWORK_FAIL.delay_ms, NETWORK_FAIL.bandwidth_kbps) == (451.0, 12.0)
    assert not FLIGHT_MODE.network and FLIGHT_MODE.gps == "normal"
    assert NON_BACKGROUND.network and not NON_BACKGROUND.has_background
    assert [c.kind for c in CONTEXTS] == list(ContextKind)
    assert RunningContext.of("FlightMode") is FLIGHT_MODE


# ---------------------------------------------------------------- triggers and models

@pytest.mark.parametrize("spec", [
    {"always": True},
    {"context": "NetworkFail"},
    {"context": ["Normal", "FlightMode"]},
    {"visits": "detail"},
    {"edge": ["main", "list"]},
    {"all": [{"visits": "detail"}, {"context": "Normal"}]},
    {"any": [{"edge": ["list", "detail"]}, {"context": "FlightMode"}]},
])
def test_trigger_spec_round_trip(spec):
    assert parse_trigger(spec).to_spec() == spec


@pytest.mark.parametrize("bad", [{"visits": "a", "edge": ["a", "b"]}, {"weather": "rain"},
                                 {"context": "Underwater"}, 3])
def test_trigger_spec_errors(bad):
    with pytest.raises(ConfigError):
        parse_trigger(bad)


def test_trigger_semantics(efg):
    from energytest.efg import path_walk
    w = path_walk(efg, ["main", "list", "detail"])
    assert Visits("detail").holds(w, NORMAL)
    assert not Visits("share").holds(w, NORMAL)
    assert Traverses(("list", "detail")).holds(w, NORMAL)
    assert not Traverses(("main", "settings")).holds(w, NORMAL)
    both = AllOf((Visits("detail"), ContextIs((ContextKind.FLIGHT_MODE,))))
    assert both.holds(w, FLIGHT_MODE) and not both.holds(w, NORMAL)
    assert AnyOf((Visits("share"), Always())).holds(w, NORMAL)


def test_app_model_validation():
    with pytest.raises(ConfigError):
        make_app(baselines={**DEFAULT_BASELINES, Stage.PRE_OFF: 1200.0})
    with pytest.raises(ConfigError):
        make_app(baselines={**DEFAULT_BASELINES, Stage.IDLE: 0.0})
    with pytest.raises(ConfigError):
        DefectSpec(DefectKind.NO_SLEEP, Always(), 0.0)


def test_defect_stages():
    assert DefectKind.UNNECESSARY_WORKLOAD.stage is Stage.EXECUTION
    assert DefectKind.EXCESSIVELY_FREQUENT_OPS.stage is Stage.EXECUTION
    assert DefectKind.BACKGROUND.stage is Stage.BACKGROUND
    assert DefectKind.NO_SLEEP.stage is Stage.SCREEN_OFF


# ---------------------------------------------------------------- running cases

def test_defect_free_noise_free_is_flat():
    case = run_test_case(make_app(), wseq("main", "list"), NORMAL, 1)
    for s in Stage:
        p = case.staged.stage_power(s)
        assert np.all(p == DEFAULT_BASELINES[s])
    assert case.triggered_defects == ()


def test_nosleep_under_flight_mode():
    ns = DefectSpec(DefectKind.NO_SLEEP, ContextIs((ContextKind.FLIGHT_MODE,)), 2.0, "wakelock")
    app = make_app([ns])
    hit = run_test_case(app, wseq("main"), FLIGHT_MODE, 5)
    so, pre = mean_power(hit.staged, Stage.SCREEN_OFF), mean_power(hit.staged, Stage.PRE_OFF)
    assert so == pytest.approx(3 * DEFAULT_BASELINES[Stage.PRE_OFF])
    assert energy_waste(so, pre) == pytest.approx(200.0)
    assert hit.triggered_defects == (ns,)

    miss = run_test_case(app, wseq("main"), NORMAL, 5)
    assert mean_power(miss.staged, Stage.SCREEN_OFF) == DEFAULT_BASELINES[Stage.SCREEN_OFF]
    assert miss.triggered_defects == ()


def test_defects_compose_multiplicatively():
    d1 = DefectSpec(DefectKind.UNNECESSARY_WORKLOAD, Always(), 0.5)
    d2 = DefectSpec(DefectKind.UNNECESSARY_WORKLOAD, Always(), 0.2)
    case = run_test_case(make_app([d1, d2]), wseq("main"), NORMAL, 0)
    assert mean_power(case.staged, Stage.EXECUTION) == pytest.approx(1500 * 1.5 * 1.2)


def test_frequent_ops_keep_mean_but_burst():
    efo = DefectSpec(DefectKind.EXCESSIVELY_FREQUENT_OPS, Always(), 0.6)
    uw = DefectSpec(DefectKind.UNNECESSARY_WORKLOAD, Always(), 0.6)
    bursty = run_test_case(make_app([efo]), wseq("main"), NORMAL, 0, DURATIONS)
    flat = run_test_case(make_app([uw]), wseq("main"), NORMAL, 0, DURATIONS)
    target = 1500 * 1.6
    assert mean_power(bursty.staged, Stage.EXECUTION) == pytest.approx(target)
    assert mean_power(flat.staged, Stage.EXECUTION) == pytest.approx(target)
    cfg = ChppConfig.relative_to_idle(bursty.staged)
    fb, ff = features(bursty.staged, cfg), features(flat.staged, cfg)
    assert fb.n_chpp == 2 and fb.l_chpp == 6000.0   # two 3 s bursts in 24 s
    assert ff.n_chpp == 0


def test_background_defect_needs_background_stage():
    bg = DefectSpec(DefectKind.BACKGROUND, Always(), 1.0)
    ns = DefectSpec(DefectKind.NO_SLEEP, Always(), 1.0)
    case = run_test_case(make_app([bg, ns]), wseq("main"), NON_BACKGROUND, 3)
    assert case.staged.labels == (Stage.PRE_OFF, Stage.IDLE, Stage.EXECUTION, Stage.SCREEN_OFF)
    assert case.triggered_defects == (ns,)


def test_invalid_path_raises():
    with pytest.raises(PathError):
        run_test_case(make_app(), wseq("main", "share"), NORMAL, 0)


@given(st.integers(0, 2**32), st.sampled_from(CONTEXTS), st.booleans())
def test_trace_is_pure_function_of_inputs(seed, ctx, random_input):
    app = make_app([DefectSpec(DefectKind.NO_SLEEP, Visits("detail"), 1.0)], noise_sd=30.0,
                   os_noise_rate=2.0)
    seq = RandomSequence(seed, 15) if random_input else wseq("main", "list", "detail")
    a = run_test_case(app, seq, ctx, seed, DURATIONS)
    b = run_test_case(app, seq, ctx, seed, DURATIONS)
    assert a.staged == b.staged
    assert (Stage.BACKGROUND in a.staged.labels) == ctx.has_background
    assert np.all(a.staged.trace.p_mw >= 0)


@given(st.sampled_from(CONTEXTS),
       st.lists(st.tuples(st.sampled_from(list(DefectKind)),
                          st.sampled_from([{"always": True}, {"visits": "detail"}, {"visits": "share"},
                                           {"context": "NetworkFail"}, {"context": "FlightMode"},
                                           {"edge": ["main", "settings"]}]),
                          st.floats(0.05, 3.0)), max_size=4),
       st.sampled_from([("main",), ("main", "list", "detail"), ("main", "settings")]))
def test_ground_truth_soundness(ctx, defect_specs, path):
    defects = [DefectSpec(k, parse_trigger(t), m, f"d{i}") for i, (k, t, m) in enumerate(defect_specs)]
    app = make_app(defects)
    case = run_test_case(app, wseq(*path), ctx, 0, DURATIONS)
    walk = case.walk
    expected = tuple(d for d in defects if d.fires(walk, ctx))
    assert case.triggered_defects == expected
    for s in case.staged.labels:
        hit = [d for d in expected if d.stage is s]
        mu = mean_power(case.staged, s)
        base = DEFAULT_BASELINES[s]
        assert (mu > base * (1 + 1e-9)) == bool(hit)
        assert mu == pytest.approx(base * np.prod([1 + d.magnitude for d in hit]))


def test_context_changes_only_affected_stages():
    app = make_app([DefectSpec(DefectKind.BACKGROUND, ContextIs((ContextKind.NETWORK_FAIL,)), 0.8)])
    a = run_test_case(app, wseq("main", "list"), NORMAL, 9)
    b = run_test_case(app, wseq("main", "list"), NETWORK_FAIL, 9)
    for s in Stage:
        same = np.array_equal(a.staged.stage_power(s), b.staged.stage_power(s))
        assert same == (s is not Stage.BACKGROUND)


# ---------------------------------------------------------------- reset and carry-over

def test_reset_then_rerun_is_byte_identical(tmp_path):
    app = make_app([DefectSpec(DefectKind.NO_SLEEP, Always(), 1.0, sticky=True)], noise_sd=25.0)
    sim = Simulator(DURATIONS)
    first = sim.run(app, wseq("main", "list"), FLIGHT_MODE, 11)
    sim.reset()
    second = sim.run(app, wseq("main", "list"), FLIGHT_MODE, 11)
    f1 = write_trace(tmp_path / "a.csv", first.staged).read_bytes()
    f2 = write_trace(tmp_path / "b.csv", second.staged).read_bytes()
    assert f1 == f2


def test_sticky_defect_leaks_without_reset():
    app = make_app([DefectSpec(DefectKind.NO_SLEEP, Always(), 1.0, sticky=True)])
    sim = Simulator(DURATIONS)
    first = sim.run(app, wseq("main"), NORMAL, 4)
    assert sim.dirty
    second = sim.run(app, wseq("main"), NORMAL, 4)
    assert first.staged != second.staged
    assert mean_power(second.staged, Stage.PRE_OFF) == pytest.approx(2 * DEFAULT_BASELINES[Stage.PRE_OFF])


def test_reset_on_fresh_simulator_is_noop():
    sim = Simulator(DURATIONS)
    assert not sim.dirty
    sim.reset()
    assert not sim.dirty
    app = make_app()
    assert sim.run(app, wseq("main"), NORMAL, 2).staged == run_test_case(app, wseq("main"), NORMAL, 2, DURATIONS).staged


def test_simulator_rejects_bad_durations():
    with pytest.raises(ConfigError):
        Simulator({**DURATIONS, Stage.IDLE: 55})
    with pytest.raises(ConfigError):
        Simulator({**DURATIONS, Stage.IDLE: 50})


# ---------------------------------------------------------------- fleets

def fleet_dicts(apps):
    return [a.to_dict() for a in apps]


def test_fleet_is_reproducible():
    a = generate_fleet(FleetSpec(), 42)
    b = generate_fleet(FleetSpec(), 42)
    assert fleet_dicts(a) == fleet_dicts(b)
    assert fleet_dicts(a) != fleet_dicts(generate_fleet(FleetSpec(), 43))
    assert sum(app.defective for app in a) == 6


def test_fleet_prevalence_zero():
    assert not any(a.defective for a in generate_fleet(FleetSpec(prevalence=0.0), 1))


def test_fleet_prevalence_over_1000_apps():
    spec = FleetSpec(n_apps=1000, n_nodes=(4, 6), calibration_walks=50)
    frac = np.mean([a.defective for a in generate_fleet(spec, 8)])
    assert abs(frac - 0.3) <= 0.03


def test_fleet_magnitudes_and_contexts():
    for seed in range(3):
        for app in generate_fleet(FleetSpec(only_context="NetworkFail"), seed):
            for d in app.defects:
                assert d.magnitude >= 0.25
                for ctx in CONTEXTS:
                    if ctx.kind is not ContextKind.NETWORK_FAIL:
                        assert not d.trigger.holds(_any_walk(app), ctx)


def _any_walk(app):
    from energytest.efg import path_walk
    return path_walk(app.efg, [app.efg.root])


def test_empty_fleet_spec_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        FleetSpec.from_dict({})
    empty = tmp_path / "fleet.yaml"
    empty.write_text("")
    with pytest.raises(ConfigError):
        load_fleet(empty)
    (tmp_path / "odd.yaml").write_text("colour: blue\n")
    with pytest.raises(ConfigError):
        load_fleet(tmp_path / "odd.yaml")
    with pytest.raises(ConfigError):
        load_fleet(tmp_path / "missing.yaml")


def test_fleet_file_round_trip(tmp_path):
    apps = generate_fleet(FleetSpec(n_apps=5, prevalence=0.4), 2)
    path = dump_fleet(apps, tmp_path / "fleet.yaml")
    back = load_fleet(path)
    assert fleet_dicts(back) == fleet_dicts(apps)
    assert (tmp_path / "efg" / "app000.json").exists()


def test_generate_block_in_fleet_file(tmp_path):
    f = tmp_path / "fleet.yaml"
    f.write_text("seed: 5\ngenerate:\n  n_apps: 4\n  prevalence: 0.5\n")
    assert fleet_dicts(load_fleet(f)) == fleet_dicts(generate_fleet(FleetSpec(n_apps=4, prevalence=0.5), 5))


def test_hand_written_app_with_inline_efg():
    app = AppModel.from_dict({
        "name": "x", "category": "Tools",
        "efg": {"root": "a", "edges": [{"from": "a", "to": "b", "S": 1, "C": 2}]},
        "defects": [{"kind": "NoSleep", "magnitude": 1.5, "trigger": {"context": "FlightMode"}}],
    })
    assert app.efg == chain_efg().__class__("a", {("a", "b"): SequenceStats(1, 2)})
    assert app.defects[0].trigger == ContextIs((ContextKind.FLIGHT_MODE,))
