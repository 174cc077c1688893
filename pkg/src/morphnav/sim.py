"""The embodiment-dependent navigation POMDP.

Pose kinematics over the 7-action discrete space, swept collision tests
against the scene grid, distance-progress reward with step and collision
penalties, success criteria (within distance d of the target AND at least
one visible pixel), and the episode loop primitives reset/step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .embodiment import EmbodimentConfig
from .geometry import heading_to_world, normalize_heading
from .scene import Scene
from .sensor import Image, render, visible_instances

MOVE_DISTANCE = 0.2
TRANSLATION_SWEEP_STEP = 0.025
ROTATION_SWEEP_STEP = 2.0
STEP_PENALTY = 0.01
SUCCESS_REWARD = 10.0
DEFAULT_RENDER_MAX_SIDE = 128


class Action(enum.Enum):
    MOVE_AHEAD = "MoveAhead"
    MOVE_BACK = "MoveBack"
    ROTATE_RIGHT_30 = "RotateRight30"
    ROTATE_LEFT_30 = "RotateLeft30"
    ROTATE_RIGHT_6 = "RotateRight6"
    ROTATE_LEFT_6 = "RotateLeft6"
    DONE = "Done"

    @classmethod
    def from_name(cls, name: str) -> "Action":
        for a in cls:
            if a.value == name:
                return a
        raise ValueError(f"unknown action {name!r}")


ROTATION_DEGREES = {
    Action.ROTATE_RIGHT_30: 30.0,
    Action.ROTATE_LEFT_30: -30.0,
    Action.ROTATE_RIGHT_6: 6.0,
    Action.ROTATE_LEFT_6: -6.0,
}


class SimError(RuntimeError):
    pass


class PlacementError(SimError):
    """Start pose collides."""


class TaskError(SimError):
    """Scene does not contain the requested target category."""


@dataclass(frozen=True)
class Pose:
    """Location of the rotation pivot plus body heading (degrees, [0, 360))."""
    x: float
    z: float
    heading: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.z)
                and math.isfinite(self.heading)):
            raise ValueError(f"non-finite pose ({self.x}, {self.z}, {self.heading})")
        object.__setattr__(self, "heading", normalize_heading(self.heading))


@dataclass(frozen=True)
class TaskSpec:
    target_category: str
    success_distance: float = 2.0
    max_steps: int = 600
    collision_penalty: float = 0.0

    def __post_init__(self):
        if self.success_distance <= 0:
            raise ValueError("success distance must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.collision_penalty < 0:
            raise ValueError("collision penalty must be nonnegative")

    @property
    def instruction(self) -> str:
        return f"find a {self.target_category}"

    def to_dict(self) -> dict:
        return {"collision_penalty": self.collision_penalty,
                "max_steps": self.max_steps,
                "success_distance": self.success_distance,
                "target_category": self.target_category}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(target_category=str(d["target_category"]),
                   success_distance=float(d["success_distance"]),
                   max_steps=int(d["max_steps"]),
                   collision_penalty=float(d.get("collision_penalty", 0.0)))


@dataclass(frozen=True)
class Observation:
    """Per-camera images plus the blocked-action flag. Single-camera
    embodiments carry an all-zero (all-miss) second image."""
    images: tuple[Image, ...]
    last_action_failed: bool


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    collision: bool
    terminal: bool
    success: bool
    distance_to_target: float


@dataclass
class SimState:
    scene: Scene
    embodiment: EmbodimentConfig
    pose: Pose
    task: TaskSpec
    step_count: int = 0
    min_distance: float = math.inf
    cumulative_collisions: int = 0
    terminal: bool = False
    render_max_side: int | None = DEFAULT_RENDER_MAX_SIDE
    last_observation: Observation | None = None
    # caches, derived from scene + embodiment at reset
    _blocked: np.ndarray | None = field(default=None, repr=False)
    _targets: list = field(default_factory=list, repr=False)


def footprint_center(e: EmbodimentConfig, pose: Pose) -> tuple[float, float]:
    """World position of the collider footprint center for a pivot pose."""
    ox, oz = e.pivot
    wx, wz = heading_to_world(-ox, -oz, pose.heading)
    return (pose.x + wx, pose.z + wz)


def _rect_vs_cells(scene: Scene, blocked: np.ndarray, cx: float, cz: float,
                   half_x: float, half_z: float, heading: float) -> bool:
    """Exact oriented-rectangle vs blocked-cell-square overlap, including
    the solid world boundary."""
    h = math.radians(heading)
    c, s = math.cos(h), math.sin(h)
    # rectangle axes in world coordinates (lateral, longitudinal)
    ux, uz = c, -s     # body +x
    vx, vz = s, c      # body +z
    ex_x = abs(ux) * half_x + abs(vx) * half_z
    ex_z = abs(uz) * half_x + abs(vz) * half_z
    x0, x1 = cx - ex_x, cx + ex_x
    z0, z1 = cz - ex_z, cz + ex_z
    wx, wzed = scene.extent
    if x0 < 0.0 or z0 < 0.0 or x1 > wx or z1 > wzed:
        return True
    cs_ = scene.cell_size
    ix0 = max(int(math.floor(x0 / cs_)), 0)
    iz0 = max(int(math.floor(z0 / cs_)), 0)
    ix1 = min(int(math.floor(x1 / cs_)), scene.nx - 1)
    iz1 = min(int(math.floor(z1 / cs_)), scene.nz - 1)
    sub = blocked[iz0:iz1 + 1, ix0:ix1 + 1]
    if not sub.any():
        return False
    izs, ixs = np.nonzero(sub)
    ccx = (ixs + ix0 + 0.5) * cs_ - cx
    ccz = (izs + iz0 + 0.5) * cs_ - cz
    half_cell = cs_ / 2.0
    # SAT: cell axes are world-aligned (already pruned by the AABB pass);
    # test the rectangle's two axes.
    pu = ccx * ux + ccz * uz
    pv = ccx * vx + ccz * vz
    ru = half_cell * (abs(ux) + abs(uz))
    rv = half_cell * (abs(vx) + abs(vz))
    hit_u = np.abs(pu) < half_x + ru - 1e-12
    hit_v = np.abs(pv) < half_z + rv - 1e-12
    return bool(np.any(hit_u & hit_v))


def blocked_cells_for(scene: Scene, e: EmbodimentConfig) -> np.ndarray:
    """Cells whose slabs intersect the agent's height interval (0, ay)."""
    return scene.blocked_mask(0.0, e.collider[1])


def check_collision(scene: Scene, e: EmbodimentConfig, pose: Pose,
                    blocked: np.ndarray | None = None) -> bool:
    """True iff the collider rectangle at the pose overlaps any blocked cell
    or pokes outside the world boundary."""
    if blocked is None:
        blocked = blocked_cells_for(scene, e)
    ax, _, az = e.collider
    cx, cz = footprint_center(e, pose)
    return _rect_vs_cells(scene, blocked, cx, cz, ax / 2, az / 2, pose.heading)


def _swept_translation_collides(state: SimState, direction: float) -> bool:
    """Sample the swept footprint every TRANSLATION_SWEEP_STEP meters."""
    fx, fz = heading_to_world(0.0, direction * MOVE_DISTANCE, state.pose.heading)
    n = max(int(round(MOVE_DISTANCE / TRANSLATION_SWEEP_STEP)), 1)
    for i in range(1, n + 1):
        frac = i / n
        p = Pose(state.pose.x + fx * frac, state.pose.z + fz * frac,
                 state.pose.heading)
        if check_collision(state.scene, state.embodiment, p, state._blocked):
            return True
    return False


def _swept_rotation_collides(state: SimState, delta: float) -> bool:
    """Sample the swept footprint every ROTATION_SWEEP_STEP degrees."""
    n = max(int(round(abs(delta) / ROTATION_SWEEP_STEP)), 1)
    for i in range(1, n + 1):
        p = Pose(state.pose.x, state.pose.z,
                 state.pose.heading + delta * (i / n))
        if check_collision(state.scene, state.embodiment, p, state._blocked):
            return True
    return False


def distance_to_target(state: SimState) -> float:
    """Distance from the pivot to the nearest footprint point of the nearest
    target-category instance."""
    best = math.inf
    for inst in state._targets:
        px, pz = inst.nearest_footprint_point(state.pose.x, state.pose.z)
        d = math.hypot(px - state.pose.x, pz - state.pose.z)
        best = min(best, d)
    return best


def _render_observation(state: SimState, failed: bool) -> Observation:
    imgs = []
    cap = state.render_max_side
    for i, cam in enumerate(state.embodiment.cameras):
        if cap is not None and max(cam.width, cam.height) > cap:
            scale = cap / max(cam.width, cam.height)
            w = max(int(round(cam.width * scale)), 1)
            h = max(int(round(cam.height * scale)), 1)
        else:
            w, h = cam.width, cam.height
        imgs.append(render(state.scene, state.embodiment, state.pose, i,
                           width=w, height=h))
    if len(imgs) == 1:
        # mask the absent second camera with zeros
        imgs.append(Image.empty(imgs[0].width, imgs[0].height, camera_index=1))
    return Observation(images=tuple(imgs), last_action_failed=failed)


def success_check(state: SimState) -> bool:
    """Within success_distance of a target instance AND that instance shows
    at least one pixel in one of the current camera images."""
    if state.last_observation is None:
        return False
    visible: set[int] = set()
    for img in state.last_observation.images:
        visible |= visible_instances(img)
    d = state.task.success_distance
    for inst in state._targets:
        px, pz = inst.nearest_footprint_point(state.pose.x, state.pose.z)
        if math.hypot(px - state.pose.x, pz - state.pose.z) <= d and inst.id in visible:
            return True
    return False


def reset(scene: Scene, e: EmbodimentConfig, start: Pose, task: TaskSpec,
          render_max_side: int | None = DEFAULT_RENDER_MAX_SIDE
          ) -> tuple[SimState, Observation]:
    targets = scene.instances_of_category(task.target_category)
    if not targets:
        raise TaskError(f"scene has no instance of category {task.target_category!r}")
    blocked = blocked_cells_for(scene, e)
    if check_collision(scene, e, start, blocked):
        raise PlacementError(f"start pose {start} collides")
    state = SimState(scene=scene, embodiment=e, pose=start, task=task,
                     render_max_side=render_max_side)
    state._blocked = blocked
    state._targets = targets
    state.min_distance = distance_to_target(state)
    obs = _render_observation(state, failed=False)
    state.last_observation = obs
    return state, obs


def step(state: SimState, action: Action) -> tuple[SimState, StepResult]:
    """Advance the POMDP one action. The input state is mutated and
    returned (episodes own their state exclusively)."""
    if state.terminal:
        raise SimError("step() called on a terminal state")

    collision = False
    success = False
    done_issued = action is Action.DONE

    if action in (Action.MOVE_AHEAD, Action.MOVE_BACK):
        direction = 1.0 if action is Action.MOVE_AHEAD else -1.0
        if _swept_translation_collides(state, direction):
            collision = True  # pose unchanged
        else:
            fx, fz = heading_to_world(0.0, direction * MOVE_DISTANCE,
                                      state.pose.heading)
            state.pose = Pose(state.pose.x + fx, state.pose.z + fz,
                              state.pose.heading)
    elif action in ROTATION_DEGREES:
        delta = ROTATION_DEGREES[action]
        if _swept_rotation_collides(state, delta):
            collision = True
        else:
            state.pose = Pose(state.pose.x, state.pose.z,
                              state.pose.heading + delta)

    state.step_count += 1
    if collision:
        state.cumulative_collisions += 1

    obs = _render_observation(state, failed=collision)
    state.last_observation = obs

    dist = distance_to_target(state)
    progress = max(0.0, state.min_distance - dist)

    if done_issued:
        success = success_check(state)
        state.terminal = True
    elif state.step_count >= state.task.max_steps:
        state.terminal = True

    s_t = SUCCESS_REWARD if (done_issued and success) else 0.0
    reward = (progress + s_t - STEP_PENALTY
              - (state.task.collision_penalty if collision else 0.0))
    state.min_distance = min(state.min_distance, dist)

    result = StepResult(observation=obs, reward=reward, collision=collision,
                        terminal=state.terminal, success=success,
                        distance_to_target=dist)
    return state, result


@dataclass(frozen=True)
class TraceStep:
    action: str
    collision: bool
    reward: float
    distance: float
    pose: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {"action": self.action, "collision": self.collision,
                "distance": self.distance, "pose": list(self.pose),
                "reward": self.reward}

    @classmethod
    def from_dict(cls, d: dict) -> "TraceStep":
        return cls(action=d["action"], collision=bool(d["collision"]),
                   reward=float(d["reward"]), distance=float(d["distance"]),
                   pose=tuple(float(v) for v in d["pose"]))


@dataclass(frozen=True)
class EpisodeTrace:
    """Episode trace record shared by the dataset and the harness."""
    start_pose: tuple[float, float, float]
    steps: tuple[TraceStep, ...]
    terminal: bool
    success: bool

    def to_dict(self) -> dict:
        return {"start_pose": list(self.start_pose),
                "steps": [s.to_dict() for s in self.steps],
                "success": self.success, "terminal": self.terminal}

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeTrace":
        return cls(start_pose=tuple(float(v) for v in d["start_pose"]),
                   steps=tuple(TraceStep.from_dict(s) for s in d["steps"]),
                   terminal=bool(d["terminal"]), success=bool(d["success"]))
