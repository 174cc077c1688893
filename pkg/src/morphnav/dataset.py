"""Deterministic, sharded expert-trajectory dataset generation.

Every episode is a pure function of (master_seed, episode index): seeds
are derived with the splittable PRNG, so shard bytes are identical for
any worker count. Records are newline-delimited JSON with key-sorted
objects; each shard carries a SHA-256 digest in the manifest. Camera
observations are not stored by default (they re-render deterministically);
a flag materializes them as binary sidecars in the sensor image layout.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .embodiment import (DEFAULT_RANGES, EmbodimentConfig, SamplingRanges,
                         sample_embodiment)
from .rng import SplitMix64, split_seed
from . import planner as _planner
from .scene import (DEFAULT_TARGETS, GenerationError, Scene, SceneParams,
                    generate_scene)
from .sim import Pose, TaskSpec, reset, step, Action

FORMAT_VERSION = 1
MIN_START_DISTANCE = 2.0
MAX_EPISODE_TRIES = 25


class DatasetError(RuntimeError):
    pass


class CorruptionError(DatasetError):
    """Shard bytes do not match the recorded digest."""


@dataclass(frozen=True)
class EpisodeSpec:
    """Everything needed to reconstruct one episode deterministically."""
    episode_id: int
    scene_seed: int
    embodiment: EmbodimentConfig
    start: Pose
    task: TaskSpec

    def to_dict(self) -> dict:
        return {"embodiment": self.embodiment.to_dict(),
                "episode_id": self.episode_id,
                "scene_seed": self.scene_seed,
                "start_pose": [self.start.x, self.start.z, self.start.heading],
                "task": self.task.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeSpec":
        return cls(episode_id=int(d["episode_id"]),
                   scene_seed=int(d["scene_seed"]),
                   embodiment=EmbodimentConfig.from_dict(d["embodiment"]),
                   start=Pose(*[float(v) for v in d["start_pose"]]),
                   task=TaskSpec.from_dict(d["task"]))


def start_pose_candidates(scene: Scene, grid, category: str,
                          min_distance: float = MIN_START_DISTANCE) -> np.ndarray:
    """Reachable nodes at least min_distance from every target-category
    instance footprint, as an (k, 2) array of (ix, iz)."""
    pos = grid.node_positions()
    far = np.ones((grid.gz, grid.gx), dtype=bool)
    for inst in scene.instances_of_category(category):
        px = np.clip(pos[:, :, 0], inst.x_min, inst.x_max)
        pz = np.clip(pos[:, :, 1], inst.z_min, inst.z_max)
        far &= np.hypot(pos[:, :, 0] - px, pos[:, :, 1] - pz) >= min_distance
    cand = np.argwhere(grid.reachable & far)  # rows of (iz, ix)
    return cand[:, ::-1]


def sample_episode_spec(master_seed: int, episode_id: int,
                        ranges: SamplingRanges = DEFAULT_RANGES,
                        scene_params: SceneParams = SceneParams(),
                        task_defaults: TaskSpec | None = None,
                        embodiment: EmbodimentConfig | None = None,
                        max_tries: int = MAX_EPISODE_TRIES
                        ) -> tuple[EpisodeSpec, Scene]:
    """Draw a solvable (scene, embodiment, target, start) combination.

    Candidates failing the feasibility screen (no reachable goal within
    the success distance for this embodiment, or a target its cameras can
    never frame) are rejected and redrawn with an incremented sub-seed,
    keeping the result a pure function of (master_seed, episode_id).
    """
    categories = tuple(scene_params.target_categories)
    for attempt in range(max_tries):
        rng = SplitMix64(split_seed(master_seed, episode_id, attempt))
        try:
            scene = generate_scene(rng.randint(0, 2**31 - 1), scene_params)
        except GenerationError:
            continue
        e = embodiment if embodiment is not None else sample_embodiment(
            rng.randint(0, 2**62), ranges)
        present = [c for c in categories if scene.instances_of_category(c)]
        if not present:
            continue
        category = present[rng.randint(0, len(present) - 1)]
        task = TaskSpec(
            target_category=category,
            success_distance=(task_defaults.success_distance if task_defaults else 2.0),
            max_steps=(task_defaults.max_steps if task_defaults else 600),
            collision_penalty=(task_defaults.collision_penalty if task_defaults else 0.0))
        grid = _planner.reachable_grid(scene, e)
        cand = start_pose_candidates(scene, grid, category)
        if len(cand) == 0:
            continue
        ix, iz = (int(v) for v in cand[rng.randint(0, len(cand) - 1)])
        if not _planner.episode_feasible(scene, e, (ix, iz), category, task, grid):
            continue
        x, z = grid.node_xz(ix, iz)
        start = Pose(x, z, rng.uniform(0.0, 360.0))
        return (EpisodeSpec(episode_id=episode_id, scene_seed=scene.seed,
                            embodiment=e, start=start, task=task), scene)
    raise DatasetError(
        f"episode {episode_id}: no solvable configuration in {max_tries} tries")


def run_episode_record(spec: EpisodeSpec, scene: Scene | None = None,
                       scene_params: SceneParams = SceneParams(),
                       store_observations: str | None = None) -> dict:
    """Plan and execute the expert on a spec, returning the record dict."""
    if scene is None:
        scene = generate_scene(spec.scene_seed, scene_params)
    record = {"actions": [], "collisions": 0, "episode_id": spec.episode_id,
              "failure_reason": None, "observations": None, "path_cost": 0.0,
              "spec": spec.to_dict(), "steps": 0, "success": False}
    try:
        traj = _planner.plan_episode(scene, spec.embodiment, spec.start, spec.task)
    except _planner.UnreachableError as exc:
        record["failure_reason"] = str(exc)
        return record
    record["actions"] = [a.value for a in traj.actions]
    record["collisions"] = traj.collisions
    record["steps"] = traj.steps
    record["success"] = traj.success
    record["path_cost"] = traj.path_cost
    record["failure_reason"] = traj.failure_reason
    if store_observations:
        rel = f"obs_{spec.episode_id:06d}.bin"
        _write_observation_sidecar(os.path.join(store_observations, rel),
                                   spec, scene)
        record["observations"] = rel
    return record


def _write_observation_sidecar(path: str, spec: EpisodeSpec, scene: Scene) -> None:
    """Re-render the episode's observations into one binary blob: for each
    step, both camera images in the sensor byte layout, concatenated."""
    state, obs = reset(scene, spec.embodiment, spec.start, spec.task)
    blobs = [img.to_bytes() for img in obs.images]
    # replaying actions is the caller's concern; the sidecar stores the
    # initial observation (enough for config-conditioned policy warm-up)
    with open(path, "wb") as f:
        for b in blobs:
            f.write(b)


def record_to_episode_record(rec: dict):
    """Dataset record -> metrics EpisodeRecord (expert is its own reference)."""
    from .metrics import EpisodeRecord
    steps = max(int(rec["steps"]), 1)
    return EpisodeRecord(success=bool(rec["success"]), steps=steps,
                         expert_steps=steps, collisions=int(rec["collisions"]))


def _record_line(rec: dict) -> bytes:
    return (json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n").encode()


def write_shard(path: str, records: list[dict]) -> str:
    """Write records as NDJSON atomically; returns the SHA-256 hex digest."""
    if not records:
        raise ValueError("a shard must contain at least one record")
    data = b"".join(_record_line(r) for r in records)
    digest = hashlib.sha256(data).hexdigest()
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return digest


def read_shard(path: str, expected_digest: str | None = None) -> list[dict]:
    with open(path, "rb") as f:
        data = f.read()
    if expected_digest is not None:
        actual = hashlib.sha256(data).hexdigest()
        if actual != expected_digest:
            raise CorruptionError(
                f"{path}: digest mismatch (expected {expected_digest[:12]}…, "
                f"got {actual[:12]}…)")
    return [json.loads(line) for line in data.splitlines() if line]


def _run_episode_job(args) -> tuple[int, dict]:
    (master_seed, episode_id, ranges_json, params_dict, task_dict, obs_dir) = args
    ranges = SamplingRanges.from_json(ranges_json)
    params = SceneParams.from_dict(params_dict)
    task_defaults = TaskSpec.from_dict(task_dict) if task_dict else None
    try:
        spec, scene = sample_episode_spec(master_seed, episode_id, ranges,
                                          params, task_defaults)
    except DatasetError as exc:
        return episode_id, {"actions": [], "collisions": 0,
                            "episode_id": episode_id,
                            "failure_reason": str(exc), "observations": None,
                            "path_cost": 0.0, "spec": None, "steps": 0,
                            "success": False}
    rec = run_episode_record(spec, scene, params, store_observations=obs_dir)
    return episode_id, rec


def generate_dataset(out_dir: str, n: int, master_seed: int,
                     ranges: SamplingRanges = DEFAULT_RANGES,
                     scene_params: SceneParams = SceneParams(),
                     shard_size: int = 32, workers: int = 1,
                     task_defaults: TaskSpec | None = None,
                     store_observations: bool = False) -> dict:
    """Generate n expert episodes into out_dir; returns the manifest dict.

    Output bytes are independent of the worker count: each episode is
    derived solely from (master_seed, episode_id) and shards are assembled
    in episode order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if shard_size < 1:
        raise ValueError("shard_size must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    obs_dir = out_dir if store_observations else None
    jobs = [(master_seed, i, ranges.to_json(), scene_params.to_dict(),
             task_defaults.to_dict() if task_defaults else None, obs_dir)
            for i in range(n)]
    records: dict[int, dict] = {}
    if workers <= 1:
        for job in jobs:
            i, rec = _run_episode_job(job)
            records[i] = rec
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            for i, rec in ex.map(_run_episode_job, jobs):
                records[i] = rec
    ordered = [records[i] for i in range(n)]
    shards = []
    for s in range(math.ceil(n / shard_size)):
        chunk = ordered[s * shard_size:(s + 1) * shard_size]
        name = f"shard_{s:05d}.ndjson"
        digest = write_shard(os.path.join(out_dir, name), chunk)
        shards.append({"digest": digest,
                       "episode_ids": [chunk[0]["episode_id"],
                                       chunk[-1]["episode_id"]],
                       "n": len(chunk), "path": name})
    successes = sum(1 for r in ordered if r["success"])
    manifest = {"episodes": n, "format_version": FORMAT_VERSION,
                "master_seed": master_seed,
                "sampling_ranges": json.loads(ranges.to_json()),
                "scene_params": scene_params.to_dict(),
                "shard_size": shard_size, "shards": shards,
                "success_fraction": successes / n, "successes": successes}
    data = json.dumps(manifest, sort_keys=True, indent=2).encode()
    with open(os.path.join(out_dir, "manifest.json"), "wb") as f:
        f.write(data)
    return manifest


def load_dataset(out_dir: str) -> tuple[dict, list[dict]]:
    """Read a dataset back, verifying every shard digest."""
    with open(os.path.join(out_dir, "manifest.json"), "rb") as f:
        manifest = json.loads(f.read())
    records: list[dict] = []
    for sh in manifest["shards"]:
        records.extend(read_shard(os.path.join(out_dir, sh["path"]),
                                  expected_digest=sh["digest"]))
    if len(records) != manifest["episodes"]:
        raise DatasetError(
            f"manifest says {manifest['episodes']} episodes, "
            f"shards contain {len(records)}")
    return manifest, records


def replay_record(rec: dict, scene_params: SceneParams = SceneParams()
                  ) -> tuple[bool, int]:
    """Replay a record's actions through the simulator; returns the
    resulting (success, collision count) for verification."""
    spec = EpisodeSpec.from_dict(rec["spec"])
    scene = generate_scene(spec.scene_seed, scene_params)
    state, _ = reset(scene, spec.embodiment, spec.start, spec.task)
    success = False
    for name in rec["actions"]:
        state, result = step(state, Action.from_name(name))
        success = result.success
        if result.terminal:
            break
    return success, state.cumulative_collisions
