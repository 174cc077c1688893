"""Wire-protocol client: one NDJSON session against the benchmark harness.

Message flow per episode: hello -> ack, then obs -> act repeated, then
end. Exactly one obs is outstanding at a time (the session replies
synchronously). A connection drop mid-episode raises BridgeError and the
command-line entry point exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys

import numpy as np
import torch

from morphnav.embodiment import EmbodimentConfig

from .features import (ACTION_NAMES, CONTEXT_WINDOW, conditioning_vector,
                       decode_wire_image, observation_features)
from .model import ToyPolicyModel, load_model

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 120.0
PROB_SUM_TOLERANCE = 1e-6


class BridgeError(RuntimeError):
    """Protocol violation or a connection lost mid-episode."""


class ModelPolicy:
    """Per-episode context buffer around a ToyPolicyModel."""

    def __init__(self, model: ToyPolicyModel, sample: bool = True,
                 seed: int = 0):
        self.model = model
        self.sample = sample
        self._gen = torch.Generator().manual_seed(seed)
        self._frames: list[np.ndarray] = []
        self._prev: list[int] = []
        self._condition = torch.zeros(0)

    def start_episode(self, embodiment: dict | None, task: dict) -> None:
        e = EmbodimentConfig.from_dict(embodiment) if embodiment else None
        cond = conditioning_vector(e, task.get("target_category", ""))
        self._condition = torch.from_numpy(cond)
        self._frames = []
        self._prev = []

    def act(self, obs_msg: dict) -> str:
        images = [decode_wire_image(m) for m in obs_msg["images"]]
        self._frames.append(observation_features(images))
        frames = torch.from_numpy(
            np.stack(self._frames[-CONTEXT_WINDOW:]))
        prev = torch.tensor(([len(ACTION_NAMES)] + self._prev)
                            [-len(frames):], dtype=torch.long)
        probs = self.model.action_distribution(frames, self._condition, prev)
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_TOLERANCE:
            raise BridgeError(f"action distribution sums to {total!r}")
        if self.sample:
            idx = int(torch.multinomial(probs, 1, generator=self._gen))
        else:
            idx = int(torch.argmax(probs))
        self._prev.append(idx)
        return ACTION_NAMES[idx]


class BridgeSession:
    """Run a policy over every episode the harness offers on one socket.

    The policy exposes start_episode(embodiment_dict_or_None, task_dict)
    and act(obs_message) -> action name.
    """

    def __init__(self, endpoint: str, policy,
                 timeout: float = DEFAULT_TIMEOUT):
        if not endpoint.startswith("tcp://"):
            raise ValueError(f"unsupported endpoint {endpoint!r}")
        self.endpoint = endpoint
        self.policy = policy
        self.timeout = timeout

    def run(self) -> dict:
        host, _, port = self.endpoint[len("tcp://"):].rpartition(":")
        sock = socket.create_connection((host, int(port)),
                                        timeout=self.timeout)
        sock.settimeout(self.timeout)
        f = sock.makefile("rwb")
        episodes = successes = 0
        in_episode = False
        try:
            while True:
                try:
                    line = f.readline()
                except OSError as exc:
                    raise BridgeError(f"connection lost: {exc}") from exc
                if not line:
                    if in_episode:
                        raise BridgeError("connection closed mid-episode")
                    break
                try:
                    msg = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise BridgeError(f"malformed message from harness: {exc}")
                kind = msg.get("type")
                if kind == "hello":
                    if msg.get("version") != PROTOCOL_VERSION:
                        raise BridgeError(
                            f"harness speaks version {msg.get('version')!r}, "
                            f"client speaks {PROTOCOL_VERSION}")
                    self.policy.start_episode(msg.get("embodiment"),
                                              msg.get("task") or {})
                    in_episode = True
                    self._send(f, {"type": "ack",
                                   "version": PROTOCOL_VERSION})
                elif kind == "obs":
                    action = self.policy.act(msg)
                    self._send(f, {"action": action, "type": "act"})
                elif kind == "end":
                    in_episode = False
                    episodes += 1
                    successes += int(bool(msg.get("success")))
                elif kind == "error":
                    raise BridgeError(
                        f"harness reported: {msg.get('reason')!r}")
                else:
                    raise BridgeError(f"unexpected message type {kind!r}")
        finally:
            sock.close()
        return {"episodes": episodes, "successes": successes}

    @staticmethod
    def _send(f, msg: dict) -> None:
        try:
            f.write((json.dumps(msg, sort_keys=True,
                                separators=(",", ":")) + "\n").encode())
            f.flush()
        except OSError as exc:
            raise BridgeError(f"connection lost: {exc}") from exc


def serve_policy(model: ToyPolicyModel, endpoint: str, sample: bool = True,
                 seed: int = 0, timeout: float = DEFAULT_TIMEOUT) -> dict:
    """Answer every episode the harness at `endpoint` offers."""
    policy = ModelPolicy(model, sample=sample, seed=seed)
    return BridgeSession(endpoint, policy, timeout=timeout).run()


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="morphnav-bridge",
        description="serve a behavior-cloned policy to a benchmark harness")
    p.add_argument("--endpoint", required=True, help="tcp://host:port")
    p.add_argument("--model", help="model file from bc_train "
                                   "(default: untrained uniform policy)")
    p.add_argument("--argmax", action="store_true",
                   help="pick the mode instead of sampling")
    p.add_argument("--seed", type=int, default=0)
    try:
        args = p.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    model = load_model(args.model) if args.model else ToyPolicyModel().eval()
    try:
        stats = serve_policy(model, args.endpoint, sample=not args.argmax,
                             seed=args.seed)
    except (BridgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(stats))
    return 0


if __name__ == "__main__":
    sys.exit(main())
