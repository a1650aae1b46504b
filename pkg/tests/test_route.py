import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_path, grid_geodesic

from cocapture.camera import View3D
from cocapture.dipping import HoverGroup
from cocapture.planar import make_station
from cocapture.route import (
    EXACT_LIMIT,
    PlaneTopology,
    RouteGraph,
    SafeSpace,
    UnsafePointError,
    build_graph,
    dipping_node,
    edge_cost,
    nearest_neighbor,
    path_cost,
    planar_node,
    safe_distance,
    sequence_views,
    solve_tour,
)
from cocapture.scene import compute_no_dipping_zone, parse_scene

D_MIN = 10.0


def square_scene(H=60.0):
    return parse_scene(
        {
            "unit": "m",
            "safe_altitude": H,
            "buildings": [{"id": "A", "ring": [[0, 0], [20, 0], [20, 20], [0, 20]]}],
            "bounds": [-40, -40, 60, 60],
        }
    )


@pytest.fixture(scope="module")
def space():
    scene = square_scene()
    zone = compute_no_dipping_zone(scene, D_MIN)
    return SafeSpace(scene, D_MIN, zone.routing_geometry)


# -- safe distance ----------------------------------------------------------------


def test_clear_line_is_euclidean(space):
    P, Q = np.array([-20.0, -20.0, 30.0]), np.array([40.0, -25.0, 15.0])
    assert safe_distance(P, Q, space) == pytest.approx(np.linalg.norm(Q - P))


def test_detour_around_building_matches_grid_oracle(space):
    P, Q = np.array([10.0, -15.0, 20.0]), np.array([10.0, 35.0, 20.0])
    got = safe_distance(P, Q, space)
    oracle = grid_geodesic(P, Q, space.scene, D_MIN)
    assert got > np.linalg.norm(Q - P) + 1.0
    assert got == pytest.approx(oracle, rel=0.01)
    # going over the roof would be far longer here
    assert got < 2 * (60 - 20) + 50


def test_detour_between_altitudes_adds_vertical_leg(space):
    P, Q = np.array([10.0, -15.0, 20.0]), np.array([10.0, 35.0, 45.0])
    flat = safe_distance(P, np.array([10.0, 35.0, 20.0]), space)
    assert safe_distance(P, Q, space) == pytest.approx(flat + 25.0, rel=1e-9)


def test_unsafe_endpoint_rejected(space):
    with pytest.raises(UnsafePointError):
        safe_distance([10.0, -5.0, 20.0], [10.0, -30.0, 20.0], space)
    # above H the zone no longer applies
    assert safe_distance([10.0, 10.0, 60.0], [10.0, -30.0, 60.0], space) == pytest.approx(40.0)


safe_xy = st.tuples(st.floats(-40, 60), st.floats(-40, 60)).filter(
    lambda p: max(0 - p[0], p[0] - 20, 0) ** 2 + max(0 - p[1], p[1] - 20, 0) ** 2 >= (D_MIN + 0.05) ** 2
)


@settings(max_examples=40, deadline=None)
@given(safe_xy, safe_xy, st.floats(10, 60), st.floats(10, 60))
def test_safe_distance_symmetric_and_bounded(space, a, b, za, zb):
    P, Q = np.array([*a, za]), np.array([*b, zb])
    l = safe_distance(P, Q, space)
    assert l == pytest.approx(safe_distance(Q, P, space), rel=1e-9, abs=1e-9)
    assert l >= np.linalg.norm(Q - P) - 1e-9
    climb = (60 - za) + (60 - zb) + np.linalg.norm(Q[:2] - P[:2])
    assert l <= climb + 1e-9


@settings(max_examples=25, deadline=None)
@given(safe_xy, safe_xy, st.floats(10, 59))
def test_returned_polyline_is_safe_and_has_that_length(space, a, b, z):
    P, Q = np.array([*a, z]), np.array([*b, z])
    length, pts = space.path(P, Q)
    pts = np.array(pts)
    assert np.allclose(pts[0], P) and np.allclose(pts[-1], Q)
    assert np.linalg.norm(np.diff(pts, axis=0), axis=1).sum() == pytest.approx(length)
    assert space.segments_clear(pts[:-1], pts[1:]).all()


# -- edge cost ----------------------------------------------------------------------


def test_edge_cost_values():
    assert edge_cost(10.0, 0.0, 0.5) == 5.0
    assert edge_cost(10.0, math.pi / 2, 1.0) == pytest.approx(11.70, abs=0.005)
    assert edge_cost(10.0, math.pi / 2, 0.75) == pytest.approx(0.75 * edge_cost(10.0, math.pi / 2, 1.0))
    # co-located groups are clamped to a 0.1 m leg
    assert edge_cost(0.0, 0.0) == pytest.approx(0.1)


def test_plane_topology_coefficients():
    scene = square_scene()
    topo = PlaneTopology(scene)
    f = lambda i: frozenset({f"f:{i}"})  # noqa: E731
    assert topo.weight(f(0), f(0)) == 0.5
    assert topo.weight(f(0), f(1)) == 0.75
    assert topo.weight(f(0), f(2)) == 1.0
    assert topo.weight(frozenset({"ground"}), f(2)) == 0.75
    assert topo.weight(frozenset({"roof:A"}), f(3)) == 0.75


# -- tour ---------------------------------------------------------------------------


def test_tour_matches_brute_force_on_random_matrices():
    rng = np.random.default_rng(7)
    for trial in range(60):
        n = int(rng.integers(2, 10))
        cost = rng.uniform(1, 100, (n, n))
        if trial % 3 == 0:
            pts = rng.uniform(0, 50, (n, 2))
            cost = np.linalg.norm(pts[:, None] - pts[None], axis=2) * rng.uniform(1, 1.5, (n, n))
        np.fill_diagonal(cost, 0)
        tour = solve_tour(cost)
        best, _ = brute_force_path(cost)
        assert sorted(tour.order) == list(range(n))
        assert tour.cost == pytest.approx(best, rel=1e-12)


def test_large_tour_is_a_permutation_no_worse_than_nn():
    rng = np.random.default_rng(3)
    n = EXACT_LIMIT + 15
    pts = rng.uniform(0, 200, (n, 2))
    cost = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    tour = solve_tour(cost, start=0)
    assert sorted(tour.order) == list(range(n))
    assert tour.cost <= path_cost(nearest_neighbor(cost, 0), cost) + 1e-9
    assert tour.cost == pytest.approx(path_cost(tour.order, cost))


def test_collinear_nodes_are_swept_in_order():
    scene = parse_scene({"safe_altitude": 60, "buildings": [], "bounds": [0, 0, 100, 10]})
    space = SafeSpace(scene, D_MIN)
    xs = [70.0, 10.0, 50.0, 30.0, 90.0]
    nodes = [planar_node(make_station(x, 5.0, 60.0), scene) for x in xs]
    graph = build_graph(nodes, space, scene, (0.0, 5.0, 60.0))
    tour = solve_tour(graph)
    assert [xs[i] for i in tour.order] == sorted(xs)
    assert tour.length == pytest.approx(80.0)


def test_sequence_descends_and_merges(space):
    yaw = 0.0
    seq_groups = [HoverGroup((10.0, -25.0, z), [View3D((10.0, -25.0, z), yaw, 0.0, "0")]) for z in (25.0, 55.0, 40.0, 15.0)]
    merged = HoverGroup(
        (-25.0, -25.0, 30.0),
        [View3D((-25.0, -25.0, 30.0), 0.0, 0.0, "0"), View3D((-25.0, -25.0, 30.0), 90.0, 0.0, "3")],
        merged=True,
    )
    nodes = [dipping_node(seq_groups), dipping_node([merged])]
    graph = build_graph(nodes, space, space.scene, (-40.0, -40.0, 60.0))
    fp = sequence_views(solve_tour(graph), graph, space)
    hovers = [w for w in fp.waypoints if w.is_hover]
    assert len(hovers) == 5
    dip = [w.position[2] for w in hovers if w.position[:2] == (10.0, -25.0)]
    assert dip == [55.0, 40.0, 25.0, 15.0]
    two = [w for w in hovers if len(w.captures) == 2]
    assert len(two) == 1 and two[0].position == (-25.0, -25.0, 30.0)
    assert [c.yaw for c in two[0].captures] == [0.0, 90.0]
    assert fp.images == 6 and fp.hover == 5


def _facade_gap(order, nodes):
    seen = {}
    for k, i in enumerate(order):
        for t in nodes[i].targets:
            if t.startswith("f:"):
                seen.setdefault(t, []).append(k)
    gaps = [b - a for ks in seen.values() for a, b in zip(ks[:-1], ks[1:])]
    return float(np.mean(gaps)) if gaps else 0.0


@pytest.mark.parametrize("name", ["single", "two", "three", "four"])
def test_fixture_tours(plans, name):
    r = plans.plan(name)
    g, tour = r.graph, r.tour
    assert sorted(tour.order) == list(range(len(g.nodes)))
    assert tour.cost <= path_cost(nearest_neighbor(g.cost, tour.order[0]), g.cost) + 1e-9
    # direction-aware costs keep same-facade views closer together in the tour than pure distance does
    plain = solve_tour(RouteGraph(g.nodes, g.length, g.length, g.launch))
    assert _facade_gap(tour.order, g.nodes) < _facade_gap(plain.order, g.nodes)
    assert r.flightplan.hover == sum(len(nd.groups) for nd in g.nodes)
