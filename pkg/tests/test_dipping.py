import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import pareto_dominates

from cocapture.camera import CameraModel, View3D
from cocapture.dipping import (
    DippingParams,
    DippingSequence3D,
    dominates,
    h_pic,
    hover_groups,
    hovering_cost,
    init_direction,
    initialize_dipping,
    lift_sequence,
    merge_savings,
    merge_threshold,
    optimize_dipping,
    select_dipping_points,
)
from cocapture.geometry import rotate2
from cocapture.quality import QualityParams, View2D, facade_quality
from cocapture.scene import compute_no_dipping_zone, grid_sample_candidates, parse_scene
from cocapture.visibility import VisibilityTable

CAM8 = CameraModel(sensor_h_mm=8.0, focal_mm=12.67)
QP = QualityParams()


def rect_scene(*rects, bounds=None, H=60.0):
    doc = {"unit": "m", "safe_altitude": H, "buildings": []}
    for k, (x, y, w, h) in enumerate(rects):
        doc["buildings"].append({"id": f"b{k}", "ring": [[x, y], [x + w, y], [x + w, y + h], [x, y + h]]})
    if bounds:
        doc["bounds"] = bounds
    return parse_scene(doc)


# -- lifting ---------------------------------------------------------------------


def test_h_pic_direct_value():
    scene = rect_scene((0, 0, 20, 20))
    f = scene.facades[0]
    assert h_pic((10, -30, 60), f, CAM8) == pytest.approx(8 * 30 / 12.67)
    assert h_pic((10, -30, 60), f, CAM8) == pytest.approx(18.94, abs=0.005)


@given(st.floats(1, 200, allow_nan=False))
def test_h_pic_linear_in_distance(d):
    scene = rect_scene((0, 0, 20, 20))
    f = scene.facades[0]
    assert h_pic((10, -2 * d), f, CAM8) == pytest.approx(2 * h_pic((10, -d), f, CAM8))


def test_h_pic_vanishes_for_long_focal_length():
    scene = rect_scene((0, 0, 20, 20))
    f = scene.facades[0]
    assert h_pic((10, -30), f, CameraModel(focal_mm=1e9)) < 1e-6


def test_lift_sequence_altitudes_follow_h_pic():
    scene = rect_scene((0, 0, 20, 20))
    f = scene.facades[0]
    seq = lift_sequence((10, -30), f, 60.0, CAM8, 10.0, k_d=0.8)
    step = 0.8 * 8 * 30 / 12.67
    assert seq.step == pytest.approx(step)
    assert step == pytest.approx(15.15, abs=0.01)
    assert np.allclose(seq.altitudes, [60, 60 - step, 60 - 2 * step, 60 - 3 * step])
    assert seq.lowest_extra_view is not None
    assert seq.lowest_extra_view.position == seq.views[-1].position
    assert seq.lowest_extra_view.pitch < 0
    assert all(v.pitch == 0.0 for v in seq.views)
    assert all(v.target == "0" for v in seq.views)


def test_adjacent_footprints_overlap_one_minus_kd():
    scene = rect_scene((0, 0, 20, 20))
    seq = lift_sequence((10, -30), scene.facades[0], 60.0, CAM8, 10.0, k_d=0.8)
    overlap = (seq.h_pic - seq.step) / seq.h_pic
    assert overlap == pytest.approx(0.2)


def test_low_ceiling_gives_single_view_plus_tilt():
    scene = rect_scene((0, 0, 20, 20), H=20.0)
    seq = lift_sequence((10, -30), scene.facades[0], 20.0, CAM8, 10.0)
    assert len(seq.views) == 1
    assert seq.lowest_extra_view is not None


def test_lift_requires_frontal_point():
    scene = rect_scene((0, 0, 20, 20))
    with pytest.raises(ValueError):
        lift_sequence((10, 30), scene.facades[0], 60.0, CAM8, 10.0)


# -- hover cost --------------------------------------------------------------------


def test_delta_curve():
    tau = 4.2
    assert merge_savings(0.0, tau) == 0.5
    assert merge_savings(tau, tau) == pytest.approx(0.5 * math.exp(-4.5), abs=1e-9)
    assert merge_savings(1.01 * tau, tau) == 0.0


@given(st.floats(0.1, 50), st.floats(0, 1))
def test_delta_decreasing_inside_radius(tau, frac):
    assert merge_savings(frac * tau, tau) >= merge_savings(min(tau, frac * tau + 0.01 * tau), tau)


def _seq(fid, zs, yaw, h=18.94):
    views = tuple(View3D((0.0, 0.0, z), yaw, 0.0, str(fid)) for z in zs)
    return DippingSequence3D((0.0, 0.0), fid, views, 0.8 * h, h, None)


def test_two_sequences_one_shared_hover():
    a = _seq(0, [60.0, 45.0, 30.0], 0.0)
    b = _seq(1, [52.5, 45.0, 37.5], 90.0)
    cost, groups = hovering_cost([a, b], 0.8)
    assert sum(len(g.members) for g in groups) == 6
    assert len(groups) == 5
    merged = [g for g in groups if g.merged]
    assert len(merged) == 1 and merged[0].position == (0.0, 0.0, 45.0)
    assert sorted(m.target for m in merged[0].members) == ["0", "1"]
    assert cost == pytest.approx(6 - 0.5)


def test_merge_goes_to_midpoint():
    a = _seq(0, [60.0, 45.0], 0.0)
    b = _seq(1, [44.0, 29.0], 90.0)
    tau = merge_threshold(a.h_pic, b.h_pic, 0.8)
    assert 1.0 < tau
    groups = hover_groups([a, b], 0.8)
    merged = [g for g in groups if g.merged]
    assert [g.position for g in merged] == [(0.0, 0.0, 44.5)]


def test_no_close_pairs_costs_sequence_lengths():
    a = _seq(0, [60.0, 45.0, 30.0], 0.0)
    b = _seq(1, [55.0, 40.0, 25.0], 90.0)
    cost, groups = hovering_cost([a, b], 0.8)
    assert cost == 6.0
    assert len(groups) == 6


# -- dominance ------------------------------------------------------------------------

vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3)


@given(vec, vec)
def test_dominates_matches_definition(g, h):
    assert dominates(g, h) == pareto_dominates(g, h)
    assert not (dominates(g, h) and dominates(h, g))
    assert not dominates(g, g)


# -- direction initialization ------------------------------------------------------------


def _observers(scene, fid, step=5.0):
    zone = compute_no_dipping_zone(scene, QP.d_min)
    cand = grid_sample_candidates(scene, zone, step, margin=QP.d_max)
    table = VisibilityTable(cand, scene, QP.d_max)
    return [(cand[i], table.by_facade[fid][i]) for i in table.observers(fid)]


def test_unobstructed_facade_gets_inverse_normal():
    scene = rect_scene((0, 0, 20, 20))
    f = scene.facades[0]
    s = init_direction(f, _observers(scene, 0), QP)
    assert np.allclose(s, -np.asarray(f.normal))


def test_direction_matches_exhaustive_scan_and_turns_to_open_side():
    # a low wall just south of the facade hides it from everything west of x=30
    scene = rect_scene((0, 0, 40, 20), (-70, -16, 100, 3), bounds=[-90, -90, 130, 110])
    f = scene.facades[0]
    obs = _observers(scene, 0)
    s = init_direction(f, obs, QP)
    params = DippingParams()
    base = -np.asarray(f.normal)
    scores = []
    for k in range(-params.scan_steps, params.scan_steps + 1):
        d = rotate2(base, math.radians(k * params.tau_s_deg))
        views = [View2D.make(p, d) for p, _ in obs]
        scores.append((facade_quality(views, f, scene, QP).total, -abs(k), -k, k))
    best = max(scores)
    expect = rotate2(base, math.radians(best[3] * params.tau_s_deg))
    assert np.allclose(s, expect)
    assert best[3] != 0
    # views now come from the open (east) side looking west
    assert s[0] < 0


def test_unobservable_facade_flagged():
    doc = {
        "unit": "m",
        "safe_altitude": 60,
        "buildings": [
            {"id": "U", "ring": [[0, 0], [52, 0], [52, 40], [32, 40], [32, 10], [20, 10], [20, 40], [0, 40]]},
            {"id": "bar", "ring": [[0, 40], [52, 40], [52, 50], [0, 50]]},
        ],
        "bounds": [-30, -30, 80, 80],
    }
    scene = parse_scene(doc)
    assert init_direction(scene.facades[0], [], QP) is None
    plan = initialize_dipping(scene, compute_no_dipping_zone(scene, 10), CameraModel(), QP, DippingParams(grid_step=5))
    slot = sorted(f.id for f in scene.facades if f.building == "U" and 10 <= f.a[1] <= 40 and 20 <= f.a[0] <= 32)
    assert slot and set(slot) <= set(plan.unobservable)


# -- selection -------------------------------------------------------------------------


def test_duplicate_points_one_survives():
    scene = rect_scene((0, 0, 20, 20))
    cand = np.array([[10.0, -30.0], [10.0, -30.0]])
    table = VisibilityTable(cand, scene, QP.d_max)
    dirs = {0: -np.asarray(scene.facades[0].normal)}
    survivors, views = select_dipping_points(cand, table, dirs, scene, QP)
    assert len(survivors) == 1


def test_lone_observers_never_removed():
    scene = rect_scene((0, 0, 20, 20))
    cand = np.array([[10.0, -30.0], [50.0, 10.0], [10.0, -31.0]])
    table = VisibilityTable(cand, scene, QP.d_max)
    dirs = {0: np.array([0.0, 1.0]), 1: np.array([-1.0, 0.0])}
    survivors, _ = select_dipping_points(cand, table, dirs, scene, QP)
    assert 1 in survivors
    assert len([p for p in survivors if p in (0, 2)]) == 1


# -- optimization ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_plan():
    scene = rect_scene((0, 0, 30, 20), (0, 45, 25, 25), bounds=[-20, -20, 50, 90])
    zone = compute_no_dipping_zone(scene, 10)
    plan = initialize_dipping(scene, zone, CameraModel(), QP, DippingParams())
    return optimize_dipping(plan)


def test_optimized_plan_is_a_fixed_point(small_plan):
    points = {k: v.copy() for k, v in small_plan.points.items()}
    views = {k: list(v) for k, v in small_plan.views.items()}
    n_log = len(small_plan.log)
    again = optimize_dipping(small_plan)
    assert again.converged and again.iterations == 1
    assert len(again.log) == n_log
    assert views == again.views
    assert all(np.array_equal(points[k], again.points[k]) for k in points)


def test_view_count_never_grows(small_plan):
    assert small_plan.view_count <= small_plan.initial_view_count
    assert small_plan.converged
    assert small_plan.iterations <= 5


def test_every_facade_fully_covered(small_plan):
    for fid in small_plan.directions:
        assert small_plan.coverage(fid) >= 1 - 1e-6


def test_polytech_selection_keeps_few_candidates(plans):
    d = plans.plan("polytech5").dipping
    initial = len(d.initial_state[0])
    assert initial <= 0.10 * len(d.candidates)
