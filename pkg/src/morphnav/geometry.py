"""Shared frame conventions.

World axes: x east, z north, y up. Headings are degrees, clockwise
positive, 0 = facing +z. Body frame: x lateral (right), z longitudinal
(forward).
"""

from __future__ import annotations

import math


def heading_to_world(vx: float, vz: float, heading_deg: float) -> tuple[float, float]:
    """Rotate a body-frame (lateral, longitudinal) vector into world (x, z)."""
    h = math.radians(heading_deg)
    c, s = math.cos(h), math.sin(h)
    return (vx * c + vz * s, -vx * s + vz * c)


def forward_vector(heading_deg: float) -> tuple[float, float]:
    h = math.radians(heading_deg)
    return (math.sin(h), math.cos(h))


def wrap_angle(deg: float) -> float:
    """Wrap to [-180, 180)."""
    return (deg + 180.0) % 360.0 - 180.0


def normalize_heading(deg: float) -> float:
    """Wrap to [0, 360)."""
    return deg % 360.0


def bearing_to(x0: float, z0: float, x1: float, z1: float) -> float:
    """Heading (clockwise from +z) from point 0 toward point 1, in [0, 360)."""
    return normalize_heading(math.degrees(math.atan2(x1 - x0, z1 - z0)))
