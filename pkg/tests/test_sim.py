"""Simulator dynamics: rewards, collisions, success criteria, traces."""

import math

import pytest

from conftest import make_embodiment
from morphnav.rng import SplitMix64, split_seed
from morphnav.scene import SceneBuilder, SceneParams, generate_scene
from morphnav.sim import (Action, EpisodeTrace, PlacementError, Pose,
                          TaskError, TaskSpec, TraceStep, check_collision,
                          distance_to_target, reset, step, success_check)


def _room_with_plant():
    b = SceneBuilder(8.0, 8.0, walls=True)
    b.add_box("houseplant", 3.8, 1.0, 4.2, 1.4, 0.0, 1.2)
    return b.build()


E = make_embodiment()  # 0.3 x 0.4 x 0.3 collider, forward camera


def test_progress_reward_example():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant")
    state, _ = reset(scene, E, Pose(4.0, 4.4, 180.0), task)
    assert state.min_distance == pytest.approx(3.0, abs=1e-12)
    state, result = step(state, Action.MOVE_AHEAD)
    assert not result.collision
    assert result.distance_to_target == pytest.approx(2.8, abs=1e-12)
    assert result.reward == pytest.approx(0.19, abs=1e-9)


def test_blocked_move_reward_and_pose_invariance():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant", collision_penalty=0.1)
    start = Pose(0.35, 4.0, 270.0)  # facing the west wall, 0.1 m of slack
    state, _ = reset(scene, E, start, task)
    before = state.pose
    state, result = step(state, Action.MOVE_AHEAD)
    assert result.collision
    assert state.pose == before  # bit-exact pose invariance
    assert result.reward == pytest.approx(-0.11, abs=1e-12)
    assert state.cumulative_collisions == 1


def test_done_success_includes_bonus():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant", success_distance=2.0)
    state, _ = reset(scene, E, Pose(4.0, 2.6, 180.0), task)
    assert success_check(state)
    state, result = step(state, Action.DONE)
    assert result.success and result.terminal
    assert result.reward == pytest.approx(10.0 - 0.01, abs=1e-9)
    with pytest.raises(RuntimeError):
        step(state, Action.MOVE_AHEAD)


def test_done_beyond_distance_fails():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant", success_distance=2.0)
    state, _ = reset(scene, E, Pose(4.0, 4.4, 180.0), task)  # 3.0 m away
    assert not success_check(state)
    state, result = step(state, Action.DONE)
    assert not result.success and result.terminal


def test_success_requires_visibility():
    b = SceneBuilder(6.0, 6.0, walls=True)
    b.add_box("houseplant", 1.8, 2.6, 2.2, 2.9, 0.0, 1.2)
    b.add_box("wall", 1.0, 3.1, 3.0, 3.2, 0.0, 2.0)  # occluder
    scene = b.build()
    task = TaskSpec(target_category="houseplant", success_distance=2.0)
    state, _ = reset(scene, E, Pose(2.0, 3.6, 180.0), task)
    assert distance_to_target(state) < 2.0
    assert not success_check(state)  # occluded: zero target pixels


def test_reset_errors():
    scene = _room_with_plant()
    with pytest.raises(TaskError):
        reset(scene, E, Pose(4.0, 4.0, 0.0), TaskSpec(target_category="sofa"))
    with pytest.raises(PlacementError):
        reset(scene, E, Pose(0.05, 4.0, 0.0),
              TaskSpec(target_category="houseplant"))


def test_rotation_actions_and_heading_wrap():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant")
    state, _ = reset(scene, E, Pose(4.0, 5.0, 350.0), task)
    state, result = step(state, Action.ROTATE_RIGHT_30)
    assert not result.collision
    assert state.pose.heading == pytest.approx(20.0)
    state, _ = step(state, Action.ROTATE_LEFT_6)
    assert state.pose.heading == pytest.approx(14.0)


def test_move_back_reverses_move_ahead():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant")
    state, _ = reset(scene, E, Pose(4.0, 4.0, 37.0), task)
    p0 = state.pose
    state, r1 = step(state, Action.MOVE_AHEAD)
    state, r2 = step(state, Action.MOVE_BACK)
    assert not r1.collision and not r2.collision
    assert state.pose.x == pytest.approx(p0.x, abs=1e-12)
    assert state.pose.z == pytest.approx(p0.z, abs=1e-12)


def test_under_table_collision_depends_on_height():
    b = SceneBuilder(4.0, 4.0, walls=False)
    b.add_box("table", 1.0, 1.0, 3.0, 3.0, 0.6, 0.75)  # tabletop, no legs
    scene = b.build()
    pose = Pose(2.0, 2.0, 0.0)
    short = make_embodiment(ay=0.4)
    tall = make_embodiment(ay=1.4)
    assert not check_collision(scene, short, pose)
    assert check_collision(scene, tall, pose)


def test_collider_monotonicity():
    scene = generate_scene(21, SceneParams(rooms_x=2, rooms_z=1))
    small = make_embodiment(ax=0.22, ay=0.35, az=0.22)
    big = make_embodiment(ax=0.45, ay=1.2, az=0.45)
    rng = SplitMix64(99)
    ex, ez = scene.extent
    checked = 0
    for _ in range(300):
        pose = Pose(rng.uniform(0, ex), rng.uniform(0, ez),
                    rng.uniform(0, 360))
        if not check_collision(scene, big, pose):
            assert not check_collision(scene, small, pose)
            checked += 1
    assert checked > 20


def test_telescoping_identity_random_sequences():
    moves = [a for a in Action if a is not Action.DONE]
    for s in range(3):
        scene = generate_scene(30 + s, SceneParams(rooms_x=2, rooms_z=1))
        cat = next(c for c in ("houseplant", "chair", "sofa")
                   if scene.instances_of_category(c))
        task = TaskSpec(target_category=cat, max_steps=200)
        ex, ez = scene.extent
        rng = SplitMix64(split_seed(500, s, 0))
        done = 0
        while done < 15:
            pose = Pose(rng.uniform(0.5, ex - 0.5), rng.uniform(0.5, ez - 0.5),
                        rng.uniform(0, 360))
            try:
                state, _ = reset(scene, E, pose, task, render_max_side=24)
            except PlacementError:
                continue
            d0 = distance_to_target(state)
            dists = [d0]
            total_reward = 0.0
            n = 30
            for _ in range(n):
                state, result = step(state, moves[rng.randint(0, len(moves) - 1)])
                total_reward += result.reward
                dists.append(result.distance_to_target)
            progress_sum = total_reward + 0.01 * n  # no Done, no penalty
            assert abs(progress_sum - (d0 - min(dists))) < 1e-9
            done += 1


def test_reward_lower_bound_without_success():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant", collision_penalty=0.1)
    state, _ = reset(scene, E, Pose(4.0, 4.0, 0.0), task, render_max_side=24)
    rng = SplitMix64(8)
    moves = [a for a in Action if a is not Action.DONE]
    for _ in range(50):
        state, result = step(state, moves[rng.randint(0, len(moves) - 1)])
        assert result.reward >= -0.01 - 0.1 - 1e-12


def test_single_camera_observation_masks_second_image():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant")
    state, obs = reset(scene, E, Pose(4.0, 4.0, 0.0), task)
    assert len(obs.images) == 2
    import numpy as np
    assert np.all(obs.images[1].semantic == 0)
    assert np.all(obs.images[1].depth == 65535)


def test_trace_round_trip():
    ts = TraceStep(action="MoveAhead", collision=False, reward=0.19,
                   distance=2.8, pose=(1.0, 2.0, 90.0))
    trace = EpisodeTrace(start_pose=(1.0, 2.2, 90.0), steps=(ts,),
                         terminal=True, success=True)
    assert EpisodeTrace.from_dict(trace.to_dict()) == trace


def test_max_steps_terminates():
    scene = _room_with_plant()
    task = TaskSpec(target_category="houseplant", max_steps=3)
    state, _ = reset(scene, E, Pose(4.0, 4.0, 0.0), task, render_max_side=24)
    for _ in range(3):
        state, result = step(state, Action.ROTATE_LEFT_6)
    assert result.terminal and not result.success
