"""Benchmark construction, the policy contract, and evaluation runs.

Suites are ordered lists of episode specs (one scene per episode) built
deterministically from a seed. Policies are either built-in (expert
replay, greedy-visible, random, always-move-ahead) or external processes
speaking a newline-delimited JSON protocol over a socket or pipe pair.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import socket
from dataclasses import dataclass, field, replace

import numpy as np

from . import planner as _planner
from .dataset import EpisodeSpec, sample_episode_spec, DatasetError
from .embodiment import (DEFAULT_RANGES, EmbodimentConfig, SamplingRanges,
                         preset_embodiment)
from .metrics import EpisodeRecord, MetricsSummary, aggregate
from .rng import SplitMix64, split_seed
from .scene import Scene, SceneParams, generate_scene, ShapeTemplate
from .sim import (Action, Observation, Pose, TaskSpec, reset, step,
                  DEFAULT_RENDER_MAX_SIDE)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0

MODES = ("fixed", "random", "external")


class HarnessError(RuntimeError):
    pass


class ProtocolError(HarnessError):
    """External policy sent something the protocol does not allow."""


@dataclass(frozen=True)
class BenchmarkSuite:
    suite_id: str
    mode: str                      # fixed | random | external
    episodes: tuple[EpisodeSpec, ...]
    scene_params: SceneParams
    success_distance: float
    low_variant: bool = False
    disclose_embodiment: bool = True

    @property
    def n(self) -> int:
        return len(self.episodes)

    def to_dict(self) -> dict:
        return {"disclose_embodiment": self.disclose_embodiment,
                "episodes": [s.to_dict() for s in self.episodes],
                "low_variant": self.low_variant, "mode": self.mode,
                "scene_params": self.scene_params.to_dict(),
                "success_distance": self.success_distance,
                "suite_id": self.suite_id}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSuite":
        return cls(suite_id=str(d["suite_id"]), mode=str(d["mode"]),
                   episodes=tuple(EpisodeSpec.from_dict(s) for s in d["episodes"]),
                   scene_params=SceneParams.from_dict(d["scene_params"]),
                   success_distance=float(d["success_distance"]),
                   low_variant=bool(d.get("low_variant", False)),
                   disclose_embodiment=bool(d.get("disclose_embodiment", True)))

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path: str) -> "BenchmarkSuite":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _low_variant_params(params: SceneParams) -> SceneParams:
    """Lower elevated target placements so a 0.3 m camera can see them:
    any target-category template part starting above 0.3 m is dropped to
    the floor (keeping its vertical thickness)."""
    templates = dict(params.templates)
    for cat in params.target_categories:
        if cat not in templates:
            continue
        new_tpls = []
        for tpl in templates[cat]:
            parts = []
            for (fx0, fz0, fx1, fz1, y0, y1) in tpl.parts:
                if y0 > 0.3:
                    y1, y0 = y1 - y0, 0.0
                parts.append((fx0, fz0, fx1, fz1, y0, y1))
            new_tpls.append(ShapeTemplate(tpl.footprint_x, tpl.footprint_z,
                                          tuple(parts)))
        templates[cat] = tuple(new_tpls)
    return replace(params, templates=templates)


def make_benchmark(seed: int, n_episodes: int, mode: str = "random",
                   scene_params: SceneParams = SceneParams(),
                   preset: str | None = None,
                   embodiment: EmbodimentConfig | None = None,
                   ranges: SamplingRanges = DEFAULT_RANGES,
                   task_defaults: TaskSpec | None = None,
                   low_variant: bool = False,
                   disclose_embodiment: bool = True) -> BenchmarkSuite:
    """Build a deterministic suite: one scene per episode, each episode
    screened for solvability (which subsumes the small-probe target
    reachability check); failed draws are retried with incremented
    sub-seeds."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    fixed = None
    if mode == "fixed":
        if preset is None and embodiment is None:
            raise ValueError("fixed mode needs a preset name or an embodiment")
        fixed = embodiment if embodiment is not None else preset_embodiment(preset)
    elif mode == "external":
        if embodiment is None:
            raise ValueError("external mode needs an explicit embodiment")
        fixed = embodiment
    if low_variant:
        scene_params = _low_variant_params(scene_params)
    episodes = []
    for i in range(n_episodes):
        spec, _scene = sample_episode_spec(seed, i, ranges, scene_params,
                                           task_defaults, embodiment=fixed)
        episodes.append(spec)
    d = episodes[0].task.success_distance
    return BenchmarkSuite(suite_id=f"suite-{seed}-{mode}-{n_episodes}",
                          mode=mode, episodes=tuple(episodes),
                          scene_params=scene_params, success_distance=d,
                          low_variant=low_variant,
                          disclose_embodiment=disclose_embodiment)


# ---------------------------------------------------------------------------
# policies

@dataclass(frozen=True)
class PolicyHandle:
    """Declarative policy description, constructible in worker processes.

    kind: expert | greedy | random | moveahead | bridge
    endpoint: tcp://host:port for bridge policies
    seed: base seed for stochastic policies
    """
    kind: str
    endpoint: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("expert", "greedy", "random", "moveahead", "bridge"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "bridge" and not self.endpoint:
            raise ValueError("bridge policy needs an endpoint")


class _ExpertReplay:
    def __init__(self, spec: EpisodeSpec, scene: Scene):
        traj = _planner.plan_episode(scene, spec.embodiment, spec.start, spec.task)
        self.trajectory = traj
        self._actions = list(traj.actions)
        self._i = 0

    def act(self, obs: Observation) -> Action:
        if self._i < len(self._actions):
            a = self._actions[self._i]
            self._i += 1
            return a
        return Action.DONE


class _GreedyVisible:
    """Rotate until target pixels appear, then steer toward them; emit
    Done once the nearest target pixel is within the success distance."""

    def __init__(self, spec: EpisodeSpec, scene: Scene):
        self._ids = {t.id for t in
                     scene.instances_of_category(spec.task.target_category)}
        self._d_mm = spec.task.success_distance * 1000.0
        self._since_move = 0

    def act(self, obs: Observation) -> Action:
        best = None  # (depth_mm, column_frac)
        for img in obs.images:
            mask = np.isin(img.semantic, list(self._ids))
            if not mask.any():
                continue
            depth = img.depth[mask]
            cols = np.nonzero(mask.any(axis=0))[0]
            frac = (cols.mean() + 0.5) / img.width
            d = float(depth.min())
            if best is None or d < best[0]:
                best = (d, frac, img.camera_index)
        if best is None:
            # explore: stride forward, scan a full turn when blocked
            if obs.last_action_failed or self._since_move >= 6:
                self._since_move = 0
                return Action.ROTATE_RIGHT_30
            self._since_move += 1
            return Action.MOVE_AHEAD
        d, frac, cam = best
        if d <= self._d_mm * 0.8:
            return Action.DONE
        if cam == 0:  # only the forward camera gives a steering signal
            if frac < 0.35:
                return Action.ROTATE_LEFT_6
            if frac > 0.65:
                return Action.ROTATE_RIGHT_6
        if obs.last_action_failed:
            return Action.ROTATE_RIGHT_30
        return Action.MOVE_AHEAD


class _RandomPolicy:
    def __init__(self, seed: int):
        self._rng = SplitMix64(seed)
        self._actions = list(Action)

    def act(self, obs: Observation) -> Action:
        return self._actions[self._rng.randint(0, len(self._actions) - 1)]


class _MoveAhead:
    def act(self, obs: Observation) -> Action:
        return Action.MOVE_AHEAD


# ---------------------------------------------------------------------------
# wire protocol

def _obs_message(step_idx: int, obs: Observation, instruction: str) -> dict:
    images = [{"camera": img.camera_index, "data": img.to_bytes().hex(),
               "height": img.height, "width": img.width}
              for img in obs.images]
    return {"images": images, "instruction": instruction,
            "last_action_failed": obs.last_action_failed, "step": step_idx,
            "type": "obs"}


class BridgeConnection:
    """One NDJSON message stream to an external policy (socket or file
    pair). One outstanding request at a time."""

    def __init__(self, rfile, wfile, timeout: float = DEFAULT_TIMEOUT):
        self._r = rfile
        self._w = wfile
        self.timeout = timeout

    @classmethod
    def dial(cls, endpoint: str, timeout: float = DEFAULT_TIMEOUT
             ) -> "BridgeConnection":
        if not endpoint.startswith("tcp://"):
            raise ValueError(f"unsupported endpoint {endpoint!r} (want tcp://host:port)")
        host, _, port = endpoint[len("tcp://"):].rpartition(":")
        sock = socket.create_connection((host, int(port)), timeout=timeout)
        sock.settimeout(timeout)
        f = sock.makefile("rwb")
        conn = cls(f, f, timeout)
        conn._sock = sock
        return conn

    def send(self, msg: dict) -> None:
        self._w.write((json.dumps(msg, sort_keys=True,
                                  separators=(",", ":")) + "\n").encode())
        self._w.flush()

    def recv(self) -> dict:
        line = self._r.readline()
        if not line:
            raise ProtocolError("connection closed by peer")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed message: {exc}") from exc
        if not isinstance(msg, dict) or "type" not in msg:
            raise ProtocolError(f"message without type: {line[:80]!r}")
        return msg

    def close(self) -> None:
        try:
            self._r.close()
        except OSError:
            pass
        sock = getattr(self, "_sock", None)
        if sock is not None:
            sock.close()


class _BridgePolicy:
    """Harness-side driver for one external-policy episode."""

    def __init__(self, conn: BridgeConnection, spec: EpisodeSpec,
                 disclose_embodiment: bool):
        self._conn = conn
        self._step = 0
        hello = {"embodiment": (spec.embodiment.to_dict()
                                if disclose_embodiment else None),
                 "episode_id": spec.episode_id,
                 "task": spec.task.to_dict(), "type": "hello",
                 "version": PROTOCOL_VERSION}
        self._instruction = spec.task.instruction
        conn.send(hello)
        ack = conn.recv()
        if ack.get("type") != "ack":
            raise ProtocolError(f"expected ack, got {ack.get('type')!r}")
        if ack.get("version") != PROTOCOL_VERSION:
            conn.send({"type": "error", "reason": "version mismatch"})
            raise ProtocolError(
                f"protocol version mismatch: harness {PROTOCOL_VERSION}, "
                f"policy {ack.get('version')!r}")

    def act(self, obs: Observation) -> Action:
        self._conn.send(_obs_message(self._step, obs, self._instruction))
        self._step += 1
        reply = self._conn.recv()
        if reply.get("type") != "act":
            raise ProtocolError(f"expected act, got {reply.get('type')!r}")
        try:
            return Action.from_name(reply.get("action"))
        except ValueError as exc:
            raise ProtocolError(str(exc)) from exc

    def end(self, success: bool, record: dict) -> None:
        self._conn.send({"metrics": record, "success": success, "type": "end"})


# ---------------------------------------------------------------------------
# episode + suite execution

@dataclass(frozen=True)
class EpisodeResult:
    episode_id: int
    record: EpisodeRecord
    actions: tuple[str, ...]
    spec: EpisodeSpec | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {"actions": list(self.actions), "episode_id": self.episode_id,
                "error": self.error, "record": self.record.to_dict(),
                "spec": self.spec.to_dict() if self.spec else None}


def _builtin_policy(handle: PolicyHandle, spec: EpisodeSpec, scene: Scene):
    if handle.kind == "expert":
        return _ExpertReplay(spec, scene)
    if handle.kind == "greedy":
        return _GreedyVisible(spec, scene)
    if handle.kind == "random":
        return _RandomPolicy(split_seed(handle.seed, spec.episode_id, 0))
    if handle.kind == "moveahead":
        return _MoveAhead()
    raise ValueError(handle.kind)


def run_episode(handle: PolicyHandle, spec: EpisodeSpec,
                scene_params: SceneParams = SceneParams(),
                scene: Scene | None = None,
                conn: BridgeConnection | None = None,
                disclose_embodiment: bool = True,
                expert_steps: int | None = None,
                render_max_side: int | None = DEFAULT_RENDER_MAX_SIDE
                ) -> EpisodeResult:
    """Run one policy on one spec. The reference length L* is the expert's
    step count on the identical spec (computed here unless provided)."""
    if scene is None:
        scene = generate_scene(spec.scene_seed, scene_params)
    if handle.kind == "expert":
        policy = _ExpertReplay(spec, scene)
        expert_steps = max(policy.trajectory.steps, 1)
    else:
        if expert_steps is None:
            expert = _planner.plan_episode(scene, spec.embodiment, spec.start,
                                           spec.task)
            expert_steps = max(expert.steps, 1)
        if handle.kind == "bridge":
            if conn is None:
                conn = BridgeConnection.dial(handle.endpoint)
            policy = _BridgePolicy(conn, spec, disclose_embodiment)
        else:
            policy = _builtin_policy(handle, spec, scene)

    state, obs = reset(scene, spec.embodiment, spec.start, spec.task,
                       render_max_side=render_max_side)
    actions: list[str] = []
    success = False
    error = None
    try:
        while not state.terminal:
            action = policy.act(obs)
            state, result = step(state, action)
            actions.append(action.value)
            obs = result.observation
            success = result.success
    except ProtocolError as exc:
        error = str(exc)
        success = False
    record = EpisodeRecord(success=success, steps=max(state.step_count, 1),
                           expert_steps=expert_steps,
                           collisions=state.cumulative_collisions)
    result = EpisodeResult(episode_id=spec.episode_id, record=record,
                           actions=tuple(actions), spec=spec, error=error)
    if isinstance(policy, _BridgePolicy) and error is None:
        try:
            policy.end(success, record.to_dict())
        except (ProtocolError, OSError):
            pass
    return result


def _episode_job(args):
    handle, spec_dict, params_dict, disclose = args
    spec = EpisodeSpec.from_dict(spec_dict)
    params = SceneParams.from_dict(params_dict)
    res = run_episode(handle, spec, params, disclose_embodiment=disclose)
    return spec.episode_id, res


def run_benchmark(handle: PolicyHandle, suite: BenchmarkSuite,
                  workers: int = 1, records_path: str | None = None
                  ) -> tuple[MetricsSummary, list[EpisodeResult]]:
    """Evaluate a policy over a suite. External (bridge) policies run
    sequentially over one session; built-ins can use a worker pool.
    Aggregation is order-independent; per-episode results are persisted
    as NDJSON when records_path is given."""
    results: dict[int, EpisodeResult] = {}
    if handle.kind == "bridge":
        conn = BridgeConnection.dial(handle.endpoint)
        try:
            for spec in suite.episodes:
                res = run_episode(handle, spec, suite.scene_params, conn=conn,
                                  disclose_embodiment=suite.disclose_embodiment)
                results[spec.episode_id] = res
        finally:
            conn.close()
    elif workers <= 1:
        for spec in suite.episodes:
            results[spec.episode_id] = run_episode(
                handle, spec, suite.scene_params,
                disclose_embodiment=suite.disclose_embodiment)
    else:
        jobs = [(handle, spec.to_dict(), suite.scene_params.to_dict(),
                 suite.disclose_embodiment) for spec in suite.episodes]
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            for eid, res in ex.map(_episode_job, jobs):
                results[eid] = res
    ordered = [results[spec.episode_id] for spec in suite.episodes]
    summary = aggregate([r.record for r in ordered])
    if records_path:
        with open(records_path, "w") as f:
            for r in ordered:
                f.write(json.dumps(r.to_dict(), sort_keys=True,
                                   separators=(",", ":")) + "\n")
    return summary, ordered


def serve_policy_bridge(suite: BenchmarkSuite, bind: str = "tcp://127.0.0.1:0",
                        timeout: float = DEFAULT_TIMEOUT,
                        records_path: str | None = None,
                        ready_callback=None
                        ) -> tuple[MetricsSummary, list[EpisodeResult]]:
    """Bind an endpoint, wait for one external policy client to connect,
    and run the whole suite against it. ready_callback (if given) receives
    the bound 'tcp://host:port' before accepting, for test orchestration."""
    if not bind.startswith("tcp://"):
        raise ValueError("bind endpoint must be tcp://host:port")
    host, _, port = bind[len("tcp://"):].rpartition(":")
    srv = socket.create_server((host, int(port)))
    srv.settimeout(timeout)
    bound = f"tcp://{srv.getsockname()[0]}:{srv.getsockname()[1]}"
    try:
        if ready_callback is not None:
            ready_callback(bound)
        client, _addr = srv.accept()
        client.settimeout(timeout)
        f = client.makefile("rwb")
        conn = BridgeConnection(f, f, timeout)
        conn._sock = client
        results: dict[int, EpisodeResult] = {}
        try:
            for spec in suite.episodes:
                res = run_episode(PolicyHandle(kind="bridge", endpoint=bound),
                                  spec, suite.scene_params, conn=conn,
                                  disclose_embodiment=suite.disclose_embodiment)
                results[spec.episode_id] = res
        finally:
            conn.close()
    finally:
        srv.close()
    ordered = [results[spec.episode_id] for spec in suite.episodes]
    summary = aggregate([r.record for r in ordered])
    if records_path:
        with open(records_path, "w") as f2:
            for r in ordered:
                f2.write(json.dumps(r.to_dict(), sort_keys=True,
                                    separators=(",", ":")) + "\n")
    return summary, ordered
