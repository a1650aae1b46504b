import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import cocapture.pipeline as pipeline
from cocapture.camera import CameraModel
from cocapture.pipeline import (
    ConfigError,
    PlannerConfig,
    PlanningError,
    dipping_hover_groups,
    evaluate,
    op_baseline,
    plan,
    with_overrides,
)
from cocapture.route import FlightPlan, SafeSpace, Waypoint
from cocapture.scene import compute_no_dipping_zone, parse_scene

pos = st.floats(0.01, 50, allow_nan=False)
frac = st.floats(0.0, 0.95, allow_nan=False)

configs = st.builds(
    PlannerConfig,
    d_min=st.floats(1, 30),
    k_d=st.floats(0.05, 0.95),
    overlap=st.tuples(frac, frac),
    weights=st.tuples(*[st.floats(0, 2)] * 4),
    tau_p=pos,
    tau_s=pos,
    tau_r=st.floats(0, 3),
    beta=st.floats(0, 3),
    tilt_pitch=st.floats(1, 89),
    max_iters=st.integers(1, 20),
    grid_step=pos,
    sample_spacing=pos,
    launch=st.none() | st.tuples(*[st.floats(-1e3, 1e3)] * 3),
    camera=st.builds(CameraModel, focal_mm=st.floats(5, 50)),
)


@settings(max_examples=60, deadline=None)
@given(configs)
def test_config_round_trips_through_json_text(cfg):
    text = json.dumps(cfg.to_json())
    assert PlannerConfig.from_json(json.loads(text)) == cfg


@pytest.mark.parametrize(
    "doc, pointer",
    [({"k_d": 1.5}, "/k_d"), ({"d_min": 0}, "/d_min"), ({"bogus": 1}, "/bogus"), ({"overlap": [0.8]}, "/overlap")],
)
def test_bad_config_names_the_key(doc, pointer):
    with pytest.raises(ConfigError) as info:
        PlannerConfig.from_json(doc)
    assert info.value.pointer == pointer


def test_defaults():
    cfg = PlannerConfig()
    assert cfg.d_min == 10.0 and cfg.k_d == 0.8
    assert cfg.overlap == (0.8, 0.8)
    assert cfg.weights == (0.1, 0.85, 0.3, 0.1)
    assert cfg.camera.focal_mm == 12.67
    assert with_overrides(cfg, k_d=0.5).k_d == 0.5


# -- end to end -----------------------------------------------------------------


def test_empty_scene_is_planar_only(plans):
    r = plans.plan("empty")
    assert r.dipping is None
    kinds = {c.kind for _, c in r.flightplan.captures()}
    assert kinds == {"planar"}
    assert r.report.facades == {}
    assert all(len(w.captures) == 5 for w in r.flightplan.waypoints if w.is_hover)


@pytest.mark.parametrize("name", ["single", "two", "polytech5"])
def test_fewer_hovers_than_images(plans, name):
    s = plans.plan(name).summary
    assert 0 < s.hover < s.images


@pytest.mark.parametrize("name", ["single", "three", "empty"])
def test_summary_consistency(plans, name):
    r = plans.plan(name)
    fp, scene = r.flightplan, plans.scene(name)
    assert r.summary.images == sum(len(w.captures) for w in fp.waypoints)
    assert r.summary.hover == sum(len(nd.groups) for nd in r.graph.nodes)
    zone = compute_no_dipping_zone(scene, plans.config.d_min)
    space = SafeSpace(scene, plans.config.d_min, zone.routing_geometry)
    hovers = [np.asarray(fp.launch)] + [np.asarray(w.position) for w in fp.waypoints if w.is_hover]
    legs = sum(space.distance(a, b) for a, b in zip(hovers[:-1], hovers[1:]))
    assert r.summary.trajectory_m == pytest.approx(legs, rel=1e-9)


@pytest.mark.parametrize("name", ["single", "four"])
def test_dipping_views_frozen_through_later_stages(plans, name):
    r = plans.plan(name)
    expect = Counter(
        (tuple(np.round(g.position, 6)), round(m.yaw % 360.0, 6), round(m.pitch, 6), m.target)
        for groups in dipping_hover_groups(r.dipping)
        for g in groups
        for m in g.members
    )
    got = Counter(
        (tuple(np.round(p, 6)), round(c.yaw, 6), round(c.pitch, 6), c.target)
        for p, c in r.flightplan.captures()
        if c.kind == "dipping"
    )
    assert got == expect


def test_stage_errors_carry_the_stage(monkeypatch):
    scene = parse_scene({"safe_altitude": 60, "buildings": [], "bounds": [0, 0, 30, 30]})

    def boom(*a, **kw):
        raise ValueError("no stations")

    monkeypatch.setattr(pipeline, "optimize_planar", boom)
    with pytest.raises(PlanningError) as info:
        plan(scene)
    assert info.value.stage == "planar"
    assert "no stations" in str(info.value)


# -- evaluation --------------------------------------------------------------------


def test_evaluate_flags_unsafe_waypoints(plans):
    scene = plans.scene("single")
    fp = plans.plan("single").flightplan
    base = evaluate(fp, scene, plans.config)
    assert base.unsafe == []
    inside = Waypoint((scene.buildings[0].ring[0][0] - 2.0, scene.buildings[0].ring[0][1], 20.0))
    bad = FlightPlan(fp.launch, [fp.waypoints[0], inside, *fp.waypoints[1:]])
    rep = evaluate(bad, scene, plans.config)
    assert rep.unsafe == [1]
    # the transit waypoint carries no captures, so facade scores are unchanged
    assert {k: v.total for k, v in rep.facades.items()} == {k: v.total for k, v in base.facades.items()}


def test_evaluate_reproduces_plan_report(plans):
    r = plans.plan("two")
    rep = evaluate(r.flightplan, plans.scene("two"), plans.config)
    assert rep.to_json()["facades"] == r.report.to_json()["facades"]
    assert np.allclose(rep.recon, r.report.recon)


def test_op_baseline_has_no_dipping_and_scores_lower(plans):
    scene = plans.scene("single")
    op = plans.baseline("single")
    assert {c.kind for _, c in op.captures()} == {"planar"}
    assert all(w.position[2] == scene.safe_altitude for w in op.waypoints)
    ours = plans.plan("single").report
    theirs = evaluate(op, scene, plans.config)
    assert ours.mean_view_q_d > theirs.mean_view_q_d
    assert op_baseline(scene, plans.config).images == op.images
