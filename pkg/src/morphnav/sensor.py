"""Per-camera semantic + depth rendering by exact grid traversal.

Each pixel casts one pinhole ray; the ray is walked cell by cell through
the scene grid (Amanatides-Woo traversal, no sampling) and the first slab
whose vertical interval contains the ray height at the crossing yields
the hit. Depth is Euclidean, u16 millimeters, 65535 = no hit within the
20 m range; the semantic channel carries the hit instance id (0 = none).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .embodiment import CameraConfig, EmbodimentConfig
from .geometry import heading_to_world
from .scene import Scene

MAX_RANGE = 20.0
NO_HIT_DEPTH = 65535


@dataclass(frozen=True)
class Image:
    """Semantic + depth image. semantic[p] == 0 iff depth[p] == 65535."""

    width: int
    height: int
    semantic: np.ndarray  # (height, width) u16 instance ids
    depth: np.ndarray     # (height, width) u16 millimeters
    camera_index: int

    def to_bytes(self) -> bytes:
        """Row-major top-to-bottom, per pixel u16 semantic then u16 depth, LE."""
        out = np.empty((self.height, self.width, 2), dtype="<u2")
        out[:, :, 0] = self.semantic
        out[:, :, 1] = self.depth
        return out.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, width: int, height: int,
                   camera_index: int) -> "Image":
        arr = np.frombuffer(data, dtype="<u2").reshape(height, width, 2)
        return cls(width=width, height=height,
                   semantic=arr[:, :, 0].astype(np.uint16),
                   depth=arr[:, :, 1].astype(np.uint16),
                   camera_index=camera_index)

    @classmethod
    def empty(cls, width: int, height: int, camera_index: int) -> "Image":
        """All-miss image (used as the masked second-camera observation)."""
        return cls(width=width, height=height,
                   semantic=np.zeros((height, width), dtype=np.uint16),
                   depth=np.full((height, width), NO_HIT_DEPTH, dtype=np.uint16),
                   camera_index=camera_index)


@njit(cache=True)
def _march(origin, dirs, cell_size, nx, nz, cell_start, ymin, ymax, inst,
           max_range, sem_out, depth_out):
    n = dirs.shape[0]
    for p in range(n):
        dx = dirs[p, 0]
        dy = dirs[p, 1]
        dz = dirs[p, 2]
        x0 = origin[0]
        y0 = origin[1]
        z0 = origin[2]
        ix = int(math.floor(x0 / cell_size))
        iz = int(math.floor(z0 / cell_size))
        step_x = 1 if dx > 0 else -1
        step_z = 1 if dz > 0 else -1
        if dx != 0.0:
            t_dx = abs(cell_size / dx)
            nxt = (ix + (1 if dx > 0 else 0)) * cell_size
            t_mx = (nxt - x0) / dx
        else:
            t_dx = 1e30
            t_mx = 1e30
        if dz != 0.0:
            t_dz = abs(cell_size / dz)
            nxt = (iz + (1 if dz > 0 else 0)) * cell_size
            t_mz = (nxt - z0) / dz
        else:
            t_dz = 1e30
            t_mz = 1e30
        t0 = 0.0
        hit_t = -1.0
        hit_inst = 0
        while t0 < max_range:
            t1 = t_mx if t_mx < t_mz else t_mz
            if t1 > max_range:
                t1 = max_range
            if 0 <= ix < nx and 0 <= iz < nz:
                c = iz * nx + ix
                best = 1e30
                best_inst = 0
                for k in range(cell_start[c], cell_start[c + 1]):
                    lo = ymin[k]
                    hi = ymax[k]
                    if dy == 0.0:
                        if lo <= y0 <= hi:
                            ts = t0
                        else:
                            continue
                    else:
                        ta = (lo - y0) / dy
                        tb = (hi - y0) / dy
                        if ta > tb:
                            ta, tb = tb, ta
                        ts = ta if ta > t0 else t0
                        te = tb if tb < t1 else t1
                        if ts > te:
                            continue
                    if ts < best:
                        best = ts
                        best_inst = inst[k]
                if best_inst != 0 and best <= max_range:
                    hit_t = best
                    hit_inst = best_inst
                    break
            elif t0 > 0.0 and (ix < -1 or ix > nx or iz < -1 or iz > nz):
                pass  # keep marching; geometry only exists inside the grid
            if t_mx < t_mz:
                ix += step_x
                t0 = t_mx
                t_mx += t_dx
            else:
                iz += step_z
                t0 = t_mz
                t_mz += t_dz
        if hit_t >= 0.0:
            sem_out[p] = hit_inst
            d = int(hit_t * 1000.0 + 0.5)
            if d > 65534:
                d = 65534
            depth_out[p] = d
        else:
            sem_out[p] = 0
            depth_out[p] = NO_HIT_DEPTH


def ray_directions(cam: CameraConfig, heading: float,
                   width: int | None = None, height: int | None = None) -> np.ndarray:
    """Unit ray directions (H, W, 3) for a camera at the given body heading.

    The pinhole is anisotropic: hfov and vfov are honored independently.
    """
    w = cam.width if width is None else width
    h = cam.height if height is None else height
    tan_h = math.tan(math.radians(cam.hfov) / 2.0)
    tan_v = math.tan(math.radians(cam.vfov) / 2.0)
    u = (2.0 * (np.arange(w) + 0.5) / w - 1.0) * tan_h
    v = (1.0 - 2.0 * (np.arange(h) + 0.5) / h) * tan_v
    uu, vv = np.meshgrid(u, v)
    # pitch (downward positive) about the camera's lateral axis
    p = math.radians(cam.pitch)
    cp, sp = math.cos(p), math.sin(p)
    dy = vv * cp - sp
    dz = vv * sp + cp
    dx = uu
    # yaw: body heading plus the camera's own mount yaw, about the vertical
    t = math.radians(heading + cam.yaw)
    ct, st = math.cos(t), math.sin(t)
    wx = dx * ct + dz * st
    wz = -dx * st + dz * ct
    dirs = np.stack([wx, dy, wz], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


def camera_world_position(e: EmbodimentConfig, cam: CameraConfig,
                          pose_x: float, pose_z: float, heading: float) -> tuple[float, float, float]:
    """World position of the camera pinhole for a pose of the pivot."""
    ox, oz = e.pivot
    # collider footprint center, then the camera offset, both in body frame
    bx = cam.pos_x - ox
    bz = cam.pos_z - oz
    wx, wz = heading_to_world(bx, bz, heading)
    return (pose_x + wx, cam.pos_y, pose_z + wz)


def render(scene: Scene, e: EmbodimentConfig, pose, cam_index: int,
           width: int | None = None, height: int | None = None) -> Image:
    """Render one camera at a pose. Optional width/height override the
    camera resolution (a performance knob for datasets and benchmarks;
    aspect and FoV are unchanged)."""
    if not 0 <= cam_index < len(e.cameras):
        raise IndexError(f"camera index {cam_index} out of range "
                         f"({len(e.cameras)} cameras)")
    cam = e.cameras[cam_index]
    w = cam.width if width is None else width
    h = cam.height if height is None else height
    dirs = ray_directions(cam, pose.heading, w, h).reshape(-1, 3)
    origin = np.array(camera_world_position(e, cam, pose.x, pose.z, pose.heading))
    sem = np.zeros(w * h, dtype=np.uint16)
    depth = np.zeros(w * h, dtype=np.uint16)
    _march(origin, dirs, scene.cell_size, scene.nx, scene.nz,
           scene.cell_start, scene.slab_ymin, scene.slab_ymax, scene.slab_inst,
           MAX_RANGE, sem, depth)
    return Image(width=w, height=h, semantic=sem.reshape(h, w),
                 depth=depth.reshape(h, w), camera_index=cam_index)


def visible_instances(img: Image) -> set[int]:
    """Instance ids with at least one pixel in the image."""
    return set(int(v) for v in np.unique(img.semantic) if v != 0)


def pad_to_square(img: Image, side: int) -> Image:
    """Center the content in a square (padding: semantic 0, depth 65535),
    then nearest-neighbor resize to side x side."""
    s = max(img.width, img.height)
    if side < s:
        raise ValueError(f"side {side} smaller than max(width, height) = {s}")
    sem = np.zeros((s, s), dtype=np.uint16)
    dep = np.full((s, s), NO_HIT_DEPTH, dtype=np.uint16)
    r0 = (s - img.height) // 2
    c0 = (s - img.width) // 2
    sem[r0:r0 + img.height, c0:c0 + img.width] = img.semantic
    dep[r0:r0 + img.height, c0:c0 + img.width] = img.depth
    if side != s:
        idx = (np.arange(side) * s // side)
        sem = sem[np.ix_(idx, idx)]
        dep = dep[np.ix_(idx, idx)]
    return Image(width=side, height=side, semantic=sem, depth=dep,
                 camera_index=img.camera_index)
