"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import pytest

from morphnav.embodiment import CameraConfig, EmbodimentConfig
from morphnav.scene import SceneParams


def make_embodiment(ax=0.3, ay=0.4, az=0.3, pivot=(0.0, 0.0), cam_y=None,
                    pitch=0.0, vfov=60.0, hfov=80.0, width=64, height=64,
                    second_cam_yaw=None, eid="test") -> EmbodimentConfig:
    """A compact, valid embodiment for hand-built scenarios."""
    if cam_y is None:
        cam_y = round(0.9 * ay, 3)
    cams = [CameraConfig(pos_x=0.0, pos_y=cam_y, pos_z=0.0, pitch=pitch,
                         yaw=0.0, hfov=hfov, vfov=vfov,
                         width=width, height=height)]
    if second_cam_yaw is not None:
        cams.append(CameraConfig(pos_x=0.0, pos_y=cam_y, pos_z=0.0,
                                 pitch=pitch, yaw=second_cam_yaw, hfov=hfov,
                                 vfov=vfov, width=width, height=height))
    return EmbodimentConfig(collider=(ax, ay, az), pivot=pivot,
                            cameras=tuple(cams), id=eid)


@pytest.fixture(scope="session")
def small_scene_params() -> SceneParams:
    """Two-room layout: fast to generate, still has doorways and targets."""
    return SceneParams(rooms_x=2, rooms_z=1)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One explicit pass/fail line per acceptance criterion."""
    lines = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            name = nodeid.split("::")[-1]
            verdict = "PASS" if status == "passed" else "FAIL"
            # a setup error outranks nothing; a call result wins
            if name not in lines or getattr(rep, "when", "") == "call":
                lines[name] = verdict
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name in sorted(lines):
            terminalreporter.write_line(f"  {lines[name]}: {name}")
