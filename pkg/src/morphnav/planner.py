"""Safety-shaped expert planner.

Pipeline: per-embodiment reachability on a regular node grid, clipped
inverse-cube obstacle-distance costs, max-of-endpoints edge weights over
8-neighbor adjacency, A*, greedy waypoint skipping that never raises the
path cost, and a closed-loop controller that turns the waypoint polyline
into discrete actions through the simulator.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .embodiment import EmbodimentConfig
from .geometry import bearing_to, wrap_angle
from .scene import Scene
from .sensor import render, visible_instances
from .sim import (Action, Pose, SimState, TaskSpec, check_collision,
                  distance_to_target, reset, step, success_check,
                  EpisodeTrace, TraceStep, DEFAULT_RENDER_MAX_SIDE)

DEFAULT_SPACING = 0.1
CLIP_LO = 0.05
CLIP_HI = 1.0
WAYPOINT_RADIUS = 0.25
HEADING_TOLERANCE = 3.0
SKIP_EPS = 1e-6
# extra reachability clearance absorbing the controller's tracking slack
# (waypoint consumption radius, stride quantization) between grid nodes
PLAN_MARGIN = 0.10


class UnreachableError(RuntimeError):
    pass


def conservative_radius(e: EmbodimentConfig) -> float:
    """Orientation-free footprint radius about the pivot: the farthest
    collider corner from the rotation center. For a centered pivot this is
    the usual half-diagonal sqrt(ax^2 + az^2) / 2."""
    ax, _, az = e.collider
    ox, oz = e.pivot
    return math.hypot(ax / 2 + abs(ox), az / 2 + abs(oz))


@dataclass
class ReachGrid:
    spacing: float
    origin: tuple[float, float]        # world position of node (0, 0)
    gx: int
    gz: int
    reachable: np.ndarray              # (gz, gx) bool
    radius: float                      # conservative footprint radius used

    def node_xz(self, ix: int, iz: int) -> tuple[float, float]:
        return (self.origin[0] + ix * self.spacing,
                self.origin[1] + iz * self.spacing)

    def node_positions(self) -> np.ndarray:
        xs = self.origin[0] + np.arange(self.gx) * self.spacing
        zs = self.origin[1] + np.arange(self.gz) * self.spacing
        xx, zz = np.meshgrid(xs, zs)
        return np.stack([xx, zz], axis=-1)

    def nearest_node(self, x: float, z: float,
                     require_reachable: bool = True) -> tuple[int, int]:
        """Nearest node (reachable if requested) to a world point."""
        pos = self.node_positions()
        d2 = (pos[:, :, 0] - x) ** 2 + (pos[:, :, 1] - z) ** 2
        if require_reachable:
            d2 = np.where(self.reachable, d2, np.inf)
        if not np.isfinite(d2.min()):
            raise UnreachableError(f"no reachable node near ({x:.2f}, {z:.2f})")
        iz, ix = np.unravel_index(int(np.argmin(d2)), d2.shape)
        return int(ix), int(iz)


@dataclass
class CostField:
    distance: np.ndarray   # (gz, gx) clipped obstacle distance, meters
    cost: np.ndarray       # clip(distance)^-3
    clip_lo: float = CLIP_LO
    clip_hi: float = CLIP_HI


@dataclass
class PlanGraph:
    grid: ReachGrid
    cost: np.ndarray       # per-node visit cost (gz, gx)
    min_cost: float        # lower bound used by the A* heuristic

    def node_index(self, ix: int, iz: int) -> int:
        return iz * self.grid.gx + ix


@dataclass(frozen=True)
class ExpertTrajectory:
    grid_path: tuple[tuple[int, int], ...]
    waypoints: tuple[tuple[float, float], ...]
    actions: tuple[Action, ...]
    success: bool
    collisions: int
    path_cost: float
    trace: EpisodeTrace | None = None
    failure_reason: str | None = None

    @property
    def steps(self) -> int:
        return len(self.actions)


def _blocked_centers(scene: Scene, ay: float) -> np.ndarray:
    blocked = scene.blocked_mask(0.0, ay)
    izs, ixs = np.nonzero(blocked)
    cs = scene.cell_size
    return np.stack([(ixs + 0.5) * cs, (izs + 0.5) * cs], axis=-1)


def reachable_grid(scene: Scene, e: EmbodimentConfig,
                   spacing: float = DEFAULT_SPACING,
                   margin: float = PLAN_MARGIN) -> ReachGrid:
    """Mark nodes where the conservative footprint disc (plus the tracking
    margin) over heights (0, ay) is collision-free (exact disc-vs-cell-square
    tests)."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    r = conservative_radius(e) + margin
    ex, ez = scene.extent
    gx = max(int(math.floor(ex / spacing)), 1)
    gz = max(int(math.floor(ez / spacing)), 1)
    origin = (0.5 * (ex - (gx - 1) * spacing), 0.5 * (ez - (gz - 1) * spacing))
    grid = ReachGrid(spacing=spacing, origin=origin, gx=gx, gz=gz,
                     reachable=np.zeros((gz, gx), dtype=bool), radius=r)
    pos = grid.node_positions().reshape(-1, 2)
    ok = ((pos[:, 0] >= r) & (pos[:, 0] <= ex - r)
          & (pos[:, 1] >= r) & (pos[:, 1] <= ez - r))
    centers = _blocked_centers(scene, e.collider[1])
    if len(centers):
        half = scene.cell_size / 2
        tree = cKDTree(centers)
        # every square possibly within r of a node has its center within
        # r + half*sqrt(2)
        cand = tree.query_ball_point(pos, r + half * math.sqrt(2.0))
        for i, lst in enumerate(cand):
            if not ok[i] or not lst:
                continue
            dx = np.maximum(np.abs(centers[lst, 0] - pos[i, 0]) - half, 0.0)
            dz = np.maximum(np.abs(centers[lst, 1] - pos[i, 1]) - half, 0.0)
            if np.any(dx * dx + dz * dz < r * r):
                ok[i] = False
    grid.reachable = ok.reshape(gz, gx)
    return grid


def distance_field(scene: Scene, grid: ReachGrid, e: EmbodimentConfig,
                   clip_lo: float = CLIP_LO, clip_hi: float = CLIP_HI) -> CostField:
    """Exact per-node Euclidean distance to the nearest blocked cell center
    (heights (0, ay)), clipped to [clip_lo, clip_hi]; cost = distance^-3."""
    centers = _blocked_centers(scene, e.collider[1])
    pos = grid.node_positions().reshape(-1, 2)
    if len(centers):
        tree = cKDTree(centers)
        dist, _ = tree.query(pos, k=1)
    else:
        dist = np.full(len(pos), np.inf)
    dist = np.clip(dist, clip_lo, clip_hi).reshape(grid.gz, grid.gx)
    return CostField(distance=dist, cost=dist ** -3.0,
                     clip_lo=clip_lo, clip_hi=clip_hi)


def build_graph(grid: ReachGrid, costs: CostField) -> PlanGraph:
    return PlanGraph(grid=grid, cost=costs.cost,
                     min_cost=float(costs.clip_hi ** -3.0))


_NEIGHBORS = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
              (1, 1, math.sqrt(2.0)), (1, -1, math.sqrt(2.0)),
              (-1, 1, math.sqrt(2.0)), (-1, -1, math.sqrt(2.0)))


def edge_weight(g: PlanGraph, a: tuple[int, int], b: tuple[int, int]) -> float:
    seg = math.hypot(b[0] - a[0], b[1] - a[1]) * g.grid.spacing
    return seg * max(float(g.cost[a[1], a[0]]), float(g.cost[b[1], b[0]]))


def astar(g: PlanGraph, start: tuple[int, int], goal: tuple[int, int]
          ) -> tuple[list[tuple[int, int]], float]:
    """Minimum-total-weight path over the 8-connected reachable grid.

    Heuristic: straight-line distance times the minimum per-length cost
    (admissible). Ties broken by (f, h, node index) for determinism.
    """
    grid = g.grid
    if not grid.reachable[start[1], start[0]]:
        raise UnreachableError(f"start node {start} is not reachable")
    if not grid.reachable[goal[1], goal[0]]:
        raise UnreachableError(f"goal node {goal} is not reachable")
    if start == goal:
        return [], 0.0
    sp = grid.spacing
    hmul = g.min_cost * sp

    def h(ix, iz):
        return math.hypot(ix - goal[0], iz - goal[1]) * hmul

    start_i = g.node_index(*start)
    goal_i = g.node_index(*goal)
    gx = grid.gx
    gscore = {start_i: 0.0}
    came: dict[int, int] = {}
    h0 = h(*start)
    open_heap = [(h0, h0, start_i)]
    closed: set[int] = set()
    while open_heap:
        f, _, cur = heapq.heappop(open_heap)
        if cur == goal_i:
            path = [cur]
            while path[-1] in came:
                path.append(came[path[-1]])
            path.reverse()
            return [(i % gx, i // gx) for i in path], gscore[goal_i]
        if cur in closed:
            continue
        closed.add(cur)
        cx, cz = cur % gx, cur // gx
        cc = float(g.cost[cz, cx])
        base = gscore[cur]
        for dx, dz, length in _NEIGHBORS:
            nx_, nz_ = cx + dx, cz + dz
            if not (0 <= nx_ < gx and 0 <= nz_ < grid.gz):
                continue
            if not grid.reachable[nz_, nx_]:
                continue
            ni = nz_ * gx + nx_
            if ni in closed:
                continue
            w = length * sp * max(cc, float(g.cost[nz_, nx_]))
            t = base + w
            if t < gscore.get(ni, math.inf):
                gscore[ni] = t
                came[ni] = cur
                hn = h(nx_, nz_)
                heapq.heappush(open_heap, (t + hn, hn, ni))
    # no path: report the size of the component the start belongs to
    raise UnreachableError(
        f"goal {goal} unreachable from start {start} "
        f"(start component has {len(closed)} nodes)")


def _supercover(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    """Grid cells visited by the segment between node a and node b, in
    entry order. Exact corner crossings step diagonally, so collinear
    diagonal segments visit exactly the diagonal cells."""
    x0, z0 = a
    x1, z1 = b
    dx, dz = x1 - x0, z1 - z0
    cells = [(x0, z0)]
    if dx == 0 and dz == 0:
        return cells
    n_steps = abs(dx) + abs(dz)
    sx = 1 if dx > 0 else -1
    sz = 1 if dz > 0 else -1
    ix, iz = x0, z0
    # parametric distances to the next vertical / horizontal grid line
    t_mx = (0.5 / abs(dx)) if dx != 0 else math.inf
    t_dx = (1.0 / abs(dx)) if dx != 0 else math.inf
    t_mz = (0.5 / abs(dz)) if dz != 0 else math.inf
    t_dz = (1.0 / abs(dz)) if dz != 0 else math.inf
    for _ in range(2 * n_steps + 4):
        if (ix, iz) == (x1, z1):
            break
        if abs(t_mx - t_mz) < 1e-12:
            ix += sx
            iz += sz
            t_mx += t_dx
            t_mz += t_dz
        elif t_mx < t_mz:
            ix += sx
            t_mx += t_dx
        else:
            iz += sz
            t_mz += t_dz
        cells.append((ix, iz))
    return cells


def segment_cost(g: PlanGraph, a: tuple[int, int], b: tuple[int, int]) -> float:
    """Cost of the straight segment a->b: supercover traversal, each hop
    weighted by hop length times the max of the two endpoint node costs.
    Returns inf if the segment crosses an unreachable node cell. Matches
    the A* edge weight exactly for adjacent nodes and for collinear runs."""
    cells = _supercover(a, b)
    grid = g.grid
    total = 0.0
    prev = cells[0]
    if not grid.reachable[prev[1], prev[0]]:
        return math.inf
    for cur in cells[1:]:
        if not grid.reachable[cur[1], cur[0]]:
            return math.inf
        hop = math.hypot(cur[0] - prev[0], cur[1] - prev[1]) * grid.spacing
        total += hop * max(float(g.cost[prev[1], prev[0]]),
                           float(g.cost[cur[1], cur[0]]))
        prev = cur
    return total


def extract_waypoints(path: list[tuple[int, int]], g: PlanGraph
                      ) -> list[tuple[int, int]]:
    """Greedy forward scan: from the latest waypoint, keep the farthest
    path node whose straight shortcut does not cost more than the
    along-path cost (relative tolerance SKIP_EPS). Endpoints always stay."""
    if len(path) <= 2:
        return list(path)
    waypoints = [path[0]]
    i = 0
    while i < len(path) - 1:
        # cumulative along-path cost from path[i]
        along = 0.0
        best = i + 1
        along_j = edge_weight(g, path[i], path[i + 1])
        for j in range(i + 1, len(path)):
            if j > i + 1:
                along_j += edge_weight(g, path[j - 1], path[j])
            if segment_cost(g, path[i], path[j]) <= along_j * (1.0 + SKIP_EPS):
                best = j
            along = along_j
        waypoints.append(path[best])
        i = best
    return waypoints


def polyline_cost(g: PlanGraph, waypoints: list[tuple[int, int]]) -> float:
    return sum(segment_cost(g, a, b) for a, b in zip(waypoints, waypoints[1:]))


@dataclass
class Plan:
    grid: ReachGrid
    costs: CostField
    graph: PlanGraph
    path: list[tuple[int, int]]
    path_cost: float
    waypoints_xz: list[tuple[float, float]]
    grid_waypoints: list[tuple[int, int]]


def target_distance_map(scene: Scene, grid: ReachGrid, category: str
                        ) -> np.ndarray:
    """Per-node distance to the nearest target instance footprint
    (inf for unreachable nodes)."""
    targets = scene.instances_of_category(category)
    if not targets:
        raise UnreachableError(f"no instance of category {category!r} in scene")
    pos = grid.node_positions()
    best = np.full((grid.gz, grid.gx), np.inf)
    for inst in targets:
        px = np.clip(pos[:, :, 0], inst.x_min, inst.x_max)
        pz = np.clip(pos[:, :, 1], inst.z_min, inst.z_max)
        d = np.hypot(pos[:, :, 0] - px, pos[:, :, 1] - pz)
        best = np.minimum(best, d)
    return np.where(grid.reachable, best, np.inf)


def _nearest_goal_node(scene: Scene, grid: ReachGrid, category: str,
                       start_node: tuple[int, int] | None = None
                       ) -> tuple[int, int]:
    """Reachable node nearest to the nearest target instance footprint.

    When a start node is given, only nodes in the same 8-connected
    component are considered, so the goal is always attainable if any
    node near the target is."""
    best = target_distance_map(scene, grid, category)
    if start_node is not None:
        labels, _ = ndimage.label(grid.reachable, structure=np.ones((3, 3)))
        start_label = labels[start_node[1], start_node[0]]
        best = np.where(labels == start_label, best, np.inf)
    if not np.isfinite(best.min()):
        raise UnreachableError(
            f"no reachable node near any {category!r} instance"
            + ("" if start_node is None else " in the start's free-space component"))
    iz, ix = np.unravel_index(int(np.argmin(best)), best.shape)
    return int(ix), int(iz)


def plan_path(scene: Scene, e: EmbodimentConfig, start: Pose, category: str,
              spacing: float = DEFAULT_SPACING,
              grid: ReachGrid | None = None,
              costs: CostField | None = None) -> Plan:
    """Build (or reuse) the reachability grid and cost field, then run A*
    from the node nearest the start to the node nearest the target."""
    if grid is None:
        grid = reachable_grid(scene, e, spacing)
    if costs is None:
        costs = distance_field(scene, grid, e)
    graph = build_graph(grid, costs)
    start_node = grid.nearest_node(start.x, start.z)
    goal_node = _nearest_goal_node(scene, grid, category, start_node)
    path, cost = astar(graph, start_node, goal_node)
    grid_wps = extract_waypoints(path, graph) if path else [start_node]
    wps = [grid.node_xz(ix, iz) for ix, iz in grid_wps]
    return Plan(grid=grid, costs=costs, graph=graph, path=path,
                path_cost=cost, waypoints_xz=wps, grid_waypoints=grid_wps)


def _rotation_toward(err: float) -> Action | None:
    """The single rotation that most reduces |heading error| (ties prefer
    the small rotation). None when no rotation meaningfully improves, i.e.
    the pose is as aligned as the action set allows."""
    candidates = ((Action.ROTATE_RIGHT_6, 6.0), (Action.ROTATE_LEFT_6, -6.0),
                  (Action.ROTATE_RIGHT_30, 30.0), (Action.ROTATE_LEFT_30, -30.0))
    best, best_res = None, abs(err)
    for act, delta in candidates:
        res = abs(wrap_angle(err - delta))
        if res < best_res - 1e-9:
            best, best_res = act, res
    return best


def emit_actions(scene: Scene, e: EmbodimentConfig, start: Pose,
                 task: TaskSpec, plan: Plan,
                 render_max_side: int | None = DEFAULT_RENDER_MAX_SIDE,
                 spacing: float = DEFAULT_SPACING) -> ExpertTrajectory:
    """Closed-loop waypoint follower through the simulator.

    Emits Done as soon as the success criterion holds; rotates when the
    heading error to the active waypoint exceeds the tolerance, otherwise
    drives forward; consumes waypoints within WAYPOINT_RADIUS. One
    replanning fallback on a blocked action; after the last waypoint the
    controller faces the target and sweeps a full turn looking for it.
    """
    state, obs = reset(scene, e, start, task, render_max_side=render_max_side)
    waypoints = list(plan.waypoints_xz)
    wp_i = 1 if len(waypoints) > 1 else 0  # first waypoint is the start node
    actions: list[Action] = []
    steps: list[TraceStep] = []
    replanned = False
    failure = None
    sweep_left: int | None = None  # None = not started, 0 = exhausted
    success = False

    def target_point() -> tuple[float, float, float]:
        """Representative point of the nearest target instance, plus the
        pivot-to-footprint distance."""
        best, bp = math.inf, (state.pose.x, state.pose.z)
        for inst in scene.instances_of_category(task.target_category):
            px, pz = inst.nearest_footprint_point(state.pose.x, state.pose.z)
            d = math.hypot(px - state.pose.x, pz - state.pose.z)
            if d < best:
                best, bp = d, (inst.rep_point[0], inst.rep_point[2])
        return bp[0], bp[1], best

    while state.step_count < task.max_steps:
        if success_check(state):
            action = Action.DONE
        else:
            while (wp_i < len(waypoints)
                   and math.hypot(waypoints[wp_i][0] - state.pose.x,
                                  waypoints[wp_i][1] - state.pose.z) <= WAYPOINT_RADIUS):
                wp_i += 1
            if wp_i < len(waypoints):
                tx, tz = waypoints[wp_i]
                err = wrap_angle(bearing_to(state.pose.x, state.pose.z, tx, tz)
                                 - state.pose.heading)
                action = Action.MOVE_AHEAD
                if abs(err) > HEADING_TOLERANCE:
                    action = _rotation_toward(err) or Action.MOVE_AHEAD
            else:
                # waypoints consumed but not successful yet: face the target,
                # close remaining distance, then sweep a full turn in case the
                # target sits off to a side of the cameras
                tx, tz, dist = target_point()
                err = wrap_angle(bearing_to(state.pose.x, state.pose.z, tx, tz)
                                 - state.pose.heading)
                rot = (_rotation_toward(err)
                       if abs(err) > HEADING_TOLERANCE else None)
                if sweep_left is None and rot is not None:
                    action = rot
                elif sweep_left is None and dist > task.success_distance:
                    action = Action.MOVE_AHEAD
                elif sweep_left is None:
                    sweep_left = 11
                    action = Action.ROTATE_RIGHT_30
                elif sweep_left > 0:
                    sweep_left -= 1
                    action = Action.ROTATE_RIGHT_30
                else:
                    failure = "target not visible after sweep"
                    break
        state, result = step(state, action)
        actions.append(action)
        steps.append(TraceStep(action=action.value, collision=result.collision,
                               reward=result.reward,
                               distance=result.distance_to_target,
                               pose=(state.pose.x, state.pose.z,
                                     state.pose.heading)))
        if action is Action.DONE:
            success = result.success
            break
        if result.collision:
            if wp_i >= len(waypoints) and sweep_left is None:
                # blocked while closing on the target: look around instead
                sweep_left = 11
                continue
            if replanned:
                failure = "blocked after replanning"
                break
            replanned = True
            try:
                new_plan = plan_path(scene, e, state.pose, task.target_category,
                                     spacing=spacing, grid=plan.grid,
                                     costs=plan.costs)
            except UnreachableError as exc:
                failure = f"replanning failed: {exc}"
                break
            waypoints = list(new_plan.waypoints_xz)
            wp_i = 1 if len(waypoints) > 1 else 0
        if result.terminal:
            break

    if failure is None and not success and state.step_count >= task.max_steps:
        failure = "step budget exhausted"
    trace = EpisodeTrace(start_pose=(start.x, start.z, start.heading),
                         steps=tuple(steps), terminal=True, success=success)
    return ExpertTrajectory(
        grid_path=tuple(plan.path), waypoints=tuple(plan.waypoints_xz),
        actions=tuple(actions), success=success,
        collisions=state.cumulative_collisions, path_cost=plan.path_cost,
        trace=trace, failure_reason=failure)


PROBE_RENDER_SIDE = 48
GOAL_DISTANCE_SLACK = 0.3


def episode_feasible(scene: Scene, e: EmbodimentConfig,
                     start_node: tuple[int, int], category: str,
                     task: TaskSpec, grid: ReachGrid) -> bool:
    """Cheap solvability screen for an (embodiment, scene, target, start)
    combination, used when sampling dataset episodes and benchmark specs.

    Requires a reachable node in the start's free-space component whose
    distance to the target leaves GOAL_DISTANCE_SLACK below the success
    distance, and at least one target pixel in a low-resolution render
    from that node over a full 30-degree heading sweep (so embodiments
    whose cameras can never frame the target are rejected up front).
    """
    try:
        goal = _nearest_goal_node(scene, grid, category, start_node)
    except UnreachableError:
        return False
    dmap = target_distance_map(scene, grid, category)
    if dmap[goal[1], goal[0]] > task.success_distance - GOAL_DISTANCE_SLACK:
        return False
    gx, gz = grid.node_xz(*goal)
    targets = scene.instances_of_category(category)
    rep = min(targets, key=lambda i: math.hypot(
        i.nearest_footprint_point(gx, gz)[0] - gx,
        i.nearest_footprint_point(gx, gz)[1] - gz))
    target_ids = {t.id for t in targets}
    base = bearing_to(gx, gz, rep.rep_point[0], rep.rep_point[2])
    side = PROBE_RENDER_SIDE
    for k in range(12):
        pose = Pose(gx, gz, base + 30.0 * k)
        for ci in range(len(e.cameras)):
            img = render(scene, e, pose, ci, width=side, height=side)
            if visible_instances(img) & target_ids:
                return True
    return False


def plan_episode(scene: Scene, e: EmbodimentConfig, start: Pose,
                 task: TaskSpec, spacing: float = DEFAULT_SPACING,
                 render_max_side: int | None = DEFAULT_RENDER_MAX_SIDE
                 ) -> ExpertTrajectory:
    """Full expert pipeline: reachability -> cost field -> A* -> waypoint
    skipping -> closed-loop action emission."""
    plan = plan_path(scene, e, start, task.target_category, spacing=spacing)
    return emit_actions(scene, e, start, task, plan,
                        render_max_side=render_max_side, spacing=spacing)
