"""Raycast rendering: depth/semantic correctness, padding, byte layout."""

import numpy as np
import pytest

from conftest import make_embodiment
from morphnav.scene import SceneBuilder
from morphnav.sensor import (Image, NO_HIT_DEPTH, pad_to_square, render,
                             visible_instances)
from morphnav.sim import Pose


def _wall_scene():
    b = SceneBuilder(6.0, 6.0, walls=False)
    inst = b.add_box("wall", 0.0, 3.0, 6.0, 3.2, 0.0, 2.0)
    return b.build(), inst


def test_wall_one_meter_center_depth():
    scene, wall = _wall_scene()
    e = make_embodiment(cam_y=0.5, width=5, height=5)
    img = render(scene, e, Pose(3.0, 2.0, 0.0), 0)
    center = img.depth[2, 2]
    assert abs(int(center) - 1000) <= 1
    assert img.semantic[2, 2] == wall.id


def test_empty_scene_all_miss():
    scene = SceneBuilder(4.0, 4.0, walls=False).build()
    e = make_embodiment(width=16, height=12)
    img = render(scene, e, Pose(2.0, 2.0, 45.0), 0)
    assert np.all(img.depth == NO_HIT_DEPTH)
    assert np.all(img.semantic == 0)
    assert visible_instances(img) == set()


def test_semantic_zero_iff_no_hit():
    scene, _ = _wall_scene()
    e = make_embodiment(cam_y=0.5, width=32, height=24, vfov=80, hfov=100)
    for heading in (0.0, 90.0, 200.0):
        img = render(scene, e, Pose(3.0, 2.0, heading), 0)
        assert np.array_equal(img.semantic == 0, img.depth == NO_HIT_DEPTH)


def test_second_camera_yaw_180_symmetry():
    b = SceneBuilder(6.0, 6.0, walls=True)
    b.add_box("chair", 1.0, 1.0, 1.5, 1.5, 0.0, 0.9)
    scene = b.build()
    e = make_embodiment(cam_y=0.5, width=24, height=24, second_cam_yaw=180.0)
    pose = Pose(3.0, 3.0, 30.0)
    rear = render(scene, e, pose, 1)
    turned = render(scene, e, Pose(3.0, 3.0, 210.0), 0)
    assert np.array_equal(rear.depth, turned.depth)
    assert np.array_equal(rear.semantic, turned.semantic)


def test_visible_instances_union():
    sem = np.zeros((4, 4), dtype=np.uint16)
    sem[0, 0] = 3
    sem[2, 1] = 7
    dep = np.full((4, 4), 100, dtype=np.uint16)
    dep[sem == 0] = NO_HIT_DEPTH
    img = Image(width=4, height=4, semantic=sem, depth=dep, camera_index=0)
    assert visible_instances(img) == {3, 7}


def test_pad_to_square_identity():
    rng = np.random.default_rng(0)
    sem = rng.integers(0, 5, size=(16, 16)).astype(np.uint16)
    dep = np.where(sem > 0, 1234, NO_HIT_DEPTH).astype(np.uint16)
    img = Image(16, 16, sem, dep, 0)
    out = pad_to_square(img, 16)
    assert np.array_equal(out.semantic, sem)
    assert np.array_equal(out.depth, dep)


def test_pad_to_square_banding():
    sem = np.ones((112, 448), dtype=np.uint16)
    dep = np.full((112, 448), 2000, dtype=np.uint16)
    img = Image(448, 112, sem, dep, 0)
    out = pad_to_square(img, 448)
    assert out.width == out.height == 448
    assert np.all(out.semantic[:168] == 0)
    assert np.all(out.semantic[280:] == 0)
    assert np.all(out.depth[:168] == NO_HIT_DEPTH)
    assert np.all(out.semantic[168:280] == 1)


def test_pad_to_square_pixel_count_audit():
    rng = np.random.default_rng(1)
    sem = (rng.random((23, 37)) < 0.3).astype(np.uint16) * 9
    dep = np.where(sem > 0, 500, NO_HIT_DEPTH).astype(np.uint16)
    img = Image(37, 23, sem, dep, 0)
    base = int((sem > 0).sum())
    out_same = pad_to_square(img, 37)
    assert int((out_same.semantic > 0).sum()) == base
    out_double = pad_to_square(img, 74)  # exact 2x nearest-neighbor
    assert int((out_double.semantic > 0).sum()) == base * 4


def test_pad_to_square_side_too_small():
    img = Image.empty(10, 6, 0)
    with pytest.raises(ValueError):
        pad_to_square(img, 8)


def test_image_bytes_round_trip():
    rng = np.random.default_rng(2)
    sem = rng.integers(0, 8, size=(9, 13)).astype(np.uint16)
    dep = np.where(sem > 0, rng.integers(1, 60000, size=(9, 13)),
                   NO_HIT_DEPTH).astype(np.uint16)
    img = Image(13, 9, sem, dep, 1)
    data = img.to_bytes()
    assert len(data) == 13 * 9 * 4  # two u16 channels per pixel
    back = Image.from_bytes(data, 13, 9, 1)
    assert np.array_equal(back.semantic, sem)
    assert np.array_equal(back.depth, dep)


def test_removing_obstacle_never_decreases_depth():
    def build(with_front):
        b = SceneBuilder(6.0, 6.0, walls=False)
        b.add_box("wall", 0.0, 4.0, 6.0, 4.2, 0.0, 2.0)
        if with_front:
            b.add_box("chair", 2.5, 2.5, 3.5, 3.0, 0.0, 0.9)
        return b.build()

    e = make_embodiment(cam_y=0.5, width=32, height=24, vfov=70, hfov=90)
    pose = Pose(3.0, 1.0, 0.0)
    near = render(build(True), e, pose, 0)
    far = render(build(False), e, pose, 0)
    assert np.all(far.depth.astype(np.int64) >= near.depth.astype(np.int64))


def test_render_deterministic_and_camera_index_check():
    scene, _ = _wall_scene()
    e = make_embodiment(cam_y=0.5, width=20, height=20)
    a = render(scene, e, Pose(3.0, 2.0, 10.0), 0)
    b = render(scene, e, Pose(3.0, 2.0, 10.0), 0)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.semantic, b.semantic)
    with pytest.raises(IndexError):
        render(scene, e, Pose(3.0, 2.0, 0.0), 1)
