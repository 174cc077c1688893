"""Expert planner: reachability, cost fields, A*, waypoints, controller."""

import math

import numpy as np
import pytest

from conftest import make_embodiment
from oracles import brute_force_distance, dijkstra_cost
from morphnav.planner import (CLIP_HI, CLIP_LO, CostField, Plan, PlanGraph,
                              PLAN_MARGIN, ReachGrid, UnreachableError, astar,
                              build_graph, conservative_radius, distance_field,
                              edge_weight, emit_actions, episode_feasible,
                              extract_waypoints, plan_episode, plan_path,
                              polyline_cost, reachable_grid, segment_cost)
from morphnav.rng import SplitMix64, split_seed
from morphnav.scene import SceneBuilder, SceneParams, generate_scene
from morphnav.sim import (Action, Pose, TaskSpec, distance_to_target, reset,
                          step)

E = make_embodiment()  # 0.3 x 0.4 x 0.3, centered pivot


def _empty_grid(gx, gz, spacing=0.1, origin=(0.5, 0.5)):
    return ReachGrid(spacing=spacing, origin=origin, gx=gx, gz=gz,
                     reachable=np.ones((gz, gx), dtype=bool), radius=0.0)


def _uniform_graph(grid):
    cost = np.ones((grid.gz, grid.gx))
    return PlanGraph(grid=grid, cost=cost, min_cost=1.0)


def test_conservative_radius():
    assert conservative_radius(E) == pytest.approx(math.hypot(0.15, 0.15))
    off = make_embodiment(pivot=(0.05, -0.02))
    assert conservative_radius(off) == pytest.approx(math.hypot(0.20, 0.17))


def test_empty_scene_reachability_is_boundary_margin():
    scene = SceneBuilder(4.0, 4.0, walls=False).build()
    grid = reachable_grid(scene, E)
    r = conservative_radius(E) + PLAN_MARGIN
    pos = grid.node_positions()
    expected = ((pos[:, :, 0] >= r) & (pos[:, :, 0] <= 4.0 - r)
                & (pos[:, :, 1] >= r) & (pos[:, :, 1] <= 4.0 - r))
    assert np.array_equal(grid.reachable, expected)
    assert grid.reachable.any()


def test_under_table_reachability_depends_on_height():
    b = SceneBuilder(4.0, 4.0, walls=False)
    b.add_box("table", 1.2, 1.2, 2.8, 2.8, 0.6, 0.75)  # tabletop only
    scene = b.build()
    short_grid = reachable_grid(scene, make_embodiment(ay=0.4))
    tall_grid = reachable_grid(scene, make_embodiment(ay=1.4))
    ix, iz = short_grid.nearest_node(2.0, 2.0, require_reachable=False)
    assert short_grid.reachable[iz, ix]
    assert not tall_grid.reachable[iz, ix]


def test_reachability_shrinks_with_collider():
    small = make_embodiment(ax=0.22, ay=0.35, az=0.22)
    big = make_embodiment(ax=0.45, ay=1.2, az=0.45)
    for seed in (2, 5):
        scene = generate_scene(seed, SceneParams(rooms_x=2, rooms_z=1))
        gs = reachable_grid(scene, small)
        gb = reachable_grid(scene, big)
        assert not (gb.reachable & ~gs.reachable).any()
        assert gs.reachable.sum() > gb.reachable.sum()


def test_distance_field_matches_brute_force_oracle():
    scene = generate_scene(4, SceneParams(rooms_x=1, rooms_z=1))
    grid = reachable_grid(scene, E)
    field = distance_field(scene, grid, E)
    blocked = scene.blocked_mask(0.0, E.collider[1])
    izs, ixs = np.nonzero(blocked)
    cs = scene.cell_size
    centers = np.stack([(ixs + 0.5) * cs, (izs + 0.5) * cs], axis=-1)
    oracle = brute_force_distance(grid.node_positions(), centers,
                                  CLIP_LO, CLIP_HI)
    np.testing.assert_allclose(field.distance, oracle, atol=1e-12)
    np.testing.assert_allclose(field.cost, oracle ** -3.0, rtol=1e-12)


def test_cost_eight_at_half_meter():
    b = SceneBuilder(2.0, 2.0, walls=False)
    b.add_box("wall", 0.0, 0.0, 0.05, 0.05, 0.0, 2.0)  # one blocked cell
    scene = b.build()
    # single node exactly 0.5 m from the blocked cell center (0.025, 0.025)
    grid = ReachGrid(spacing=0.1, origin=(0.525, 0.025), gx=1, gz=1,
                     reachable=np.ones((1, 1), dtype=bool), radius=0.0)
    field = distance_field(scene, grid, E)
    assert field.distance[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert field.cost[0, 0] == pytest.approx(8.0, abs=1e-9)


def test_astar_diagonal_on_uniform_grid():
    g = _uniform_graph(_empty_grid(5, 5))
    path, cost = astar(g, (0, 0), (4, 4))
    assert path[0] == (0, 0) and path[-1] == (4, 4)
    assert len(path) == 5  # pure diagonal
    assert cost == pytest.approx(4 * math.sqrt(2.0) * 0.1, abs=1e-12)


def test_astar_start_equals_goal():
    g = _uniform_graph(_empty_grid(3, 3))
    assert astar(g, (1, 1), (1, 1)) == ([], 0.0)


def test_astar_unreachable_reports_component_size():
    grid = _empty_grid(5, 1)
    grid.reachable[0, 2] = False
    g = _uniform_graph(grid)
    with pytest.raises(UnreachableError, match="component has 2 nodes"):
        astar(g, (0, 0), (4, 0))


def test_astar_matches_dijkstra_oracle_small_random():
    rng = np.random.default_rng(12)
    for _ in range(5):
        grid = _empty_grid(20, 20)
        grid.reachable = rng.random((20, 20)) > 0.15
        cost = rng.uniform(1.0, 8.0, size=(20, 20))
        g = PlanGraph(grid=grid, cost=cost, min_cost=float(cost.min()))
        nodes = np.argwhere(grid.reachable)
        start = (int(nodes[0][1]), int(nodes[0][0]))
        goal = (int(nodes[-1][1]), int(nodes[-1][0]))
        oracle = dijkstra_cost(grid.reachable, cost, 0.1, start, goal)
        try:
            _, got = astar(g, start, goal)
        except UnreachableError:
            assert oracle == math.inf
            continue
        assert got == pytest.approx(oracle, abs=1e-9)


def test_corridor_collapses_to_two_waypoints():
    g = _uniform_graph(_empty_grid(7, 1))
    path, _ = astar(g, (0, 0), (6, 0))
    wps = extract_waypoints(path, g)
    assert wps == [(0, 0), (6, 0)]
    assert extract_waypoints([(2, 0)], g) == [(2, 0)]
    assert extract_waypoints([(2, 0), (3, 0)], g) == [(2, 0), (3, 0)]


def test_waypoint_polyline_never_costs_more():
    small = SceneParams(rooms_x=2, rooms_z=1)
    count = 0
    for seed in range(40, 52):
        scene = generate_scene(seed, small)
        grid = reachable_grid(scene, E)
        ok = np.argwhere(grid.reachable)
        rng = SplitMix64(seed)
        sx, sz = ok[rng.randint(0, len(ok) - 1)][::-1]
        x, z = grid.node_xz(int(sx), int(sz))
        try:
            plan = plan_path(scene, E, Pose(float(x), float(z), 0.0),
                             "houseplant")
        except UnreachableError:
            continue
        if not plan.path:
            continue
        pc = polyline_cost(plan.graph, plan.grid_waypoints)
        assert pc <= plan.path_cost * (1.0 + 1e-6)
        assert plan.grid_waypoints[0] == plan.path[0]
        assert plan.grid_waypoints[-1] == plan.path[-1]
        count += 1
    assert count >= 8


def _plant_room():
    b = SceneBuilder(8.0, 8.0, walls=True)
    b.add_box("houseplant", 3.8, 1.0, 4.2, 1.4, 0.0, 1.2)
    return b.build()


def test_visible_target_yields_immediate_done():
    scene = _plant_room()
    task = TaskSpec(target_category="houseplant")
    start = Pose(4.0, 2.2, 180.0)  # 0.8 m away, facing the plant
    plan = plan_path(scene, E, start, "houseplant")
    traj = emit_actions(scene, E, start, task, plan)
    assert traj.actions == (Action.DONE,)
    assert traj.success and traj.collisions == 0


def test_rotate_then_drive_straight():
    scene = _plant_room()
    task = TaskSpec(target_category="houseplant")
    start = Pose(4.0, 4.6, 210.0)  # roughly 30 degrees left of the bearing
    traj = plan_episode(scene, E, start, task)
    assert traj.actions[0].value.startswith("Rotate")
    assert Action.MOVE_AHEAD in traj.actions
    assert traj.success and traj.collisions == 0
    assert traj.steps <= 25


def test_safety_detour_prefers_wide_gap():
    b = SceneBuilder(6.0, 6.0, walls=True)
    # dividing wall with a wide gap (x 0.8..2.2) and a narrow one (4.15..4.75)
    b.add_box("wall", 0.0, 2.8, 0.8, 3.0, 0.0, 2.0)
    b.add_box("wall", 2.2, 2.8, 4.15, 3.0, 0.0, 2.0)
    b.add_box("wall", 4.75, 2.8, 6.0, 3.0, 0.0, 2.0)
    b.add_box("houseplant", 4.3, 4.8, 4.7, 5.2, 0.0, 1.2)
    scene = b.build()
    slim = make_embodiment(ax=0.2, ay=0.4, az=0.2)
    plan = plan_path(scene, slim, Pose(4.5, 1.0, 0.0), "houseplant")
    assert plan.path, "expected a path to the plant"
    # the narrow gap is reachable for this footprint but costlier: verify
    # reachability, then that the chosen route crosses via the wide gap
    ngx, ngz = plan.grid.nearest_node(4.45, 2.9, require_reachable=False)
    assert plan.grid.reachable[ngz, ngx]
    crossing_x = [plan.grid.node_xz(ix, iz)[0] for ix, iz in plan.path
                  if 2.6 < plan.grid.node_xz(ix, iz)[1] < 3.2]
    assert crossing_x and max(crossing_x) < 3.5
    # safety margin: the route keeps clearance except when closing on the
    # target footprint itself
    for ix, iz in plan.path:
        x, z = plan.grid.node_xz(ix, iz)
        if math.hypot(x - 4.5, z - 5.0) > 1.2:
            assert plan.costs.distance[iz, ix] >= 0.3


def test_expert_trajectory_replays_exactly():
    scene = _plant_room()
    task = TaskSpec(target_category="houseplant")
    start = Pose(6.5, 6.5, 0.0)
    traj = plan_episode(scene, E, start, task, render_max_side=48)
    assert traj.success
    state, _ = reset(scene, E, start, task, render_max_side=48)
    collisions = 0
    for action, ts in zip(traj.actions, traj.trace.steps):
        state, result = step(state, action)
        collisions += int(result.collision)
        assert (state.pose.x, state.pose.z, state.pose.heading) == ts.pose
        assert result.reward == ts.reward
    assert result.success == traj.success
    assert collisions == traj.collisions


def test_plan_episode_deterministic():
    scene = _plant_room()
    task = TaskSpec(target_category="houseplant")
    a = plan_episode(scene, E, Pose(2.0, 6.0, 90.0), task, render_max_side=48)
    b = plan_episode(scene, E, Pose(2.0, 6.0, 90.0), task, render_max_side=48)
    assert a == b


def test_episode_feasible_screen():
    scene = _plant_room()
    grid = reachable_grid(scene, E)
    task = TaskSpec(target_category="houseplant", success_distance=2.0)
    near = grid.nearest_node(4.0, 4.0)
    assert episode_feasible(scene, E, near, "houseplant", task, grid)
    # a tiny success distance leaves no slack below the goal-node distance
    tight = TaskSpec(target_category="houseplant", success_distance=0.3)
    assert not episode_feasible(scene, E, near, "houseplant", tight, grid)


def test_segment_cost_matches_edge_weight_for_neighbors():
    rng = np.random.default_rng(3)
    grid = _empty_grid(6, 6)
    cost = rng.uniform(1.0, 5.0, size=(6, 6))
    g = PlanGraph(grid=grid, cost=cost, min_cost=float(cost.min()))
    for a, b in (((1, 1), (2, 1)), ((1, 1), (1, 2)), ((2, 2), (3, 3)),
                 ((4, 4), (3, 4))):
        assert segment_cost(g, a, b) == pytest.approx(edge_weight(g, a, b),
                                                      abs=1e-12)
    # collinear run equals the sum of its hops
    run = sum(edge_weight(g, (i, 0), (i + 1, 0)) for i in range(4))
    assert segment_cost(g, (0, 0), (4, 0)) == pytest.approx(run, abs=1e-12)
