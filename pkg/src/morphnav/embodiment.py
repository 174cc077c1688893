"""Embodiment configurations: sampling, presets, validation, vectorization.

An embodiment is an invisible collider box (half-extents per axis), a yaw
rotation pivot offset inside the footprint, and one or two pinhole cameras
mounted inside the box.  All sampling is driven by the portable SplitMix64
generator so identical seeds give bit-identical configurations everywhere.

Units: meters, degrees, pixels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import SplitMix64

# Fixed length of config_vector(): 5 body entries, one camera-count entry,
# then two 9-entry camera slots.
CONFIG_VECTOR_LEN = 24


class RangeError(ValueError):
    """Invalid or empty sampling interval."""


@dataclass(frozen=True)
class CameraConfig:
    """A pinhole camera rigidly mounted on the agent body.

    pos_x / pos_z are offsets from the collider footprint center (lateral /
    longitudinal, in the body frame); pos_y is height above the floor.
    pitch is downward-positive; yaw is relative to the body heading
    (0 = forward).
    """

    pos_x: float
    pos_y: float
    pos_z: float
    pitch: float
    yaw: float
    hfov: float
    vfov: float
    width: int
    height: int

    def to_dict(self) -> dict:
        return {
            "pos_x": self.pos_x, "pos_y": self.pos_y, "pos_z": self.pos_z,
            "pitch": self.pitch, "yaw": self.yaw,
            "hfov": self.hfov, "vfov": self.vfov,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraConfig":
        return cls(
            pos_x=float(d["pos_x"]), pos_y=float(d["pos_y"]), pos_z=float(d["pos_z"]),
            pitch=float(d["pitch"]), yaw=float(d["yaw"]),
            hfov=float(d["hfov"]), vfov=float(d["vfov"]),
            width=int(d["width"]), height=int(d["height"]),
        )


@dataclass(frozen=True)
class EmbodimentConfig:
    """Collider box, yaw pivot and cameras fully describing an agent body."""

    collider: tuple[float, float, float]   # (ax, ay, az) meters
    pivot: tuple[float, float]             # (ox, oz) offset from footprint center
    cameras: tuple[CameraConfig, ...]      # 1 or 2 entries; cameras[0].yaw == 0
    id: str = ""

    def to_dict(self) -> dict:
        return {
            "cameras": [c.to_dict() for c in self.cameras],
            "collider": list(self.collider),
            "id": self.id,
            "pivot": list(self.pivot),
        }

    def to_json(self) -> str:
        """Canonical key-sorted JSON serialization."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "EmbodimentConfig":
        return cls(
            collider=tuple(float(v) for v in d["collider"]),
            pivot=tuple(float(v) for v in d["pivot"]),
            cameras=tuple(CameraConfig.from_dict(c) for c in d["cameras"]),
            id=str(d.get("id", "")),
        )

    @classmethod
    def from_json(cls, s: str) -> "EmbodimentConfig":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise RangeError(f"empty or non-finite interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def sample(self, rng: SplitMix64) -> float:
        return rng.uniform(self.lo, self.hi)


@dataclass(frozen=True)
class CameraRanges:
    """Per-camera sampling intervals. Positions along x/z are fractions of
    the realized collider dimension (so they stay valid for any collider);
    height is in meters and is additionally capped by the realized ay."""

    vfov: Interval = Interval(40.0, 100.0)
    hfov: Interval = Interval(40.0, 120.0)
    pitch: Interval = Interval(-20.0, 40.0)
    yaw: Interval = Interval(0.0, 0.0)
    pos_x_frac: Interval = Interval(-0.5, 0.5)
    pos_y: Interval = Interval(0.3, 1.5)
    pos_z_frac: Interval = Interval(-0.5, 0.5)
    width: Interval = Interval(112, 448)
    height: Interval = Interval(112, 448)


@dataclass(frozen=True)
class SamplingRanges:
    """Sampling intervals for every embodiment parameter.

    Defaults: collider x/z in [0.2, 0.5] m, collider y in [0.3, 1.5] m,
    pivot offsets in [-a/3, a/3] (the explicitly motivated range; the wider
    [-a/2, a/2] remains the validity limit), camera FoVs/pitch/yaw and
    resolutions per the training table, and a 50/50 one-vs-two camera split.
    """

    collider_x: Interval = Interval(0.2, 0.5)
    collider_y: Interval = Interval(0.3, 1.5)
    collider_z: Interval = Interval(0.2, 0.5)
    pivot_x_frac: Interval = Interval(-1.0 / 3.0, 1.0 / 3.0)
    pivot_z_frac: Interval = Interval(-1.0 / 3.0, 1.0 / 3.0)
    cam1: CameraRanges = field(default_factory=CameraRanges)
    cam2: CameraRanges = field(
        default_factory=lambda: CameraRanges(
            pitch=Interval(-20.0, 60.0), yaw=Interval(0.0, 360.0)
        )
    )
    two_camera_prob: float = 0.5

    def to_dict(self) -> dict:
        def cam(c: CameraRanges) -> dict:
            return {
                "vfov": [c.vfov.lo, c.vfov.hi], "hfov": [c.hfov.lo, c.hfov.hi],
                "pitch": [c.pitch.lo, c.pitch.hi], "yaw": [c.yaw.lo, c.yaw.hi],
                "pos_x_frac": [c.pos_x_frac.lo, c.pos_x_frac.hi],
                "pos_y": [c.pos_y.lo, c.pos_y.hi],
                "pos_z_frac": [c.pos_z_frac.lo, c.pos_z_frac.hi],
                "width": [c.width.lo, c.width.hi], "height": [c.height.lo, c.height.hi],
            }

        return {
            "cam1": cam(self.cam1),
            "cam2": cam(self.cam2),
            "collider_x": [self.collider_x.lo, self.collider_x.hi],
            "collider_y": [self.collider_y.lo, self.collider_y.hi],
            "collider_z": [self.collider_z.lo, self.collider_z.hi],
            "pivot_x_frac": [self.pivot_x_frac.lo, self.pivot_x_frac.hi],
            "pivot_z_frac": [self.pivot_z_frac.lo, self.pivot_z_frac.hi],
            "two_camera_prob": self.two_camera_prob,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingRanges":
        def iv(v) -> Interval:
            return Interval(float(v[0]), float(v[1]))

        def cam(c: dict) -> CameraRanges:
            return CameraRanges(
                vfov=iv(c["vfov"]), hfov=iv(c["hfov"]), pitch=iv(c["pitch"]),
                yaw=iv(c["yaw"]), pos_x_frac=iv(c["pos_x_frac"]), pos_y=iv(c["pos_y"]),
                pos_z_frac=iv(c["pos_z_frac"]), width=iv(c["width"]), height=iv(c["height"]),
            )

        return cls(
            collider_x=iv(d["collider_x"]), collider_y=iv(d["collider_y"]),
            collider_z=iv(d["collider_z"]),
            pivot_x_frac=iv(d["pivot_x_frac"]), pivot_z_frac=iv(d["pivot_z_frac"]),
            cam1=cam(d["cam1"]), cam2=cam(d["cam2"]),
            two_camera_prob=float(d["two_camera_prob"]),
        )

    @classmethod
    def from_json(cls, s: str) -> "SamplingRanges":
        return cls.from_dict(json.loads(s))


DEFAULT_RANGES = SamplingRanges()


def _sample_camera(rng: SplitMix64, cr: CameraRanges, collider, first: bool) -> CameraConfig:
    ax, ay, az = collider
    vfov = cr.vfov.sample(rng)
    hfov = cr.hfov.sample(rng)
    pitch = cr.pitch.sample(rng)
    yaw = 0.0 if first else cr.yaw.sample(rng) % 360.0
    pos_x = cr.pos_x_frac.sample(rng) * ax
    # Height range is expressed in meters but never exceeds the realized
    # collider height; the sampler guarantees ay >= pos_y.lo (see
    # sample_embodiment), so the realized interval is never empty.
    pos_y = rng.uniform(cr.pos_y.lo, min(cr.pos_y.hi, ay))
    pos_z = cr.pos_z_frac.sample(rng) * az
    width = rng.randint(int(cr.width.lo), int(cr.width.hi))
    height = rng.randint(int(cr.height.lo), int(cr.height.hi))
    return CameraConfig(pos_x=pos_x, pos_y=pos_y, pos_z=pos_z, pitch=pitch,
                        yaw=yaw, hfov=hfov, vfov=vfov, width=width, height=height)


def sample_embodiment(seed: int, ranges: SamplingRanges = DEFAULT_RANGES) -> EmbodimentConfig:
    """Sample a uniformly random embodiment. Deterministic in (seed, ranges)."""
    _check_ranges(ranges)
    rng = SplitMix64(seed)
    ax = ranges.collider_x.sample(rng)
    # Collider height must be able to host the lowest allowed camera; when
    # the camera-height range is narrowed above the collider-height floor,
    # the effective floor rises with it.
    ay_lo = max(ranges.collider_y.lo, ranges.cam1.pos_y.lo, ranges.cam2.pos_y.lo)
    if ay_lo > ranges.collider_y.hi:
        raise RangeError("camera height range lies entirely above the collider height range")
    ay = rng.uniform(ay_lo, ranges.collider_y.hi)
    az = ranges.collider_z.sample(rng)
    ox = ranges.pivot_x_frac.sample(rng) * ax
    oz = ranges.pivot_z_frac.sample(rng) * az
    n_cams = 2 if rng.random() < ranges.two_camera_prob else 1
    cam1 = _sample_camera(rng, ranges.cam1, (ax, ay, az), first=True)
    cams = [cam1]
    if n_cams == 2:
        cams.append(_sample_camera(rng, ranges.cam2, (ax, ay, az), first=False))
    return EmbodimentConfig(
        collider=(ax, ay, az), pivot=(ox, oz), cameras=tuple(cams),
        id=f"sampled-{seed & 0xFFFFFFFFFFFFFFFF:016x}",
    )


def _check_ranges(ranges: SamplingRanges) -> None:
    if not (0.0 <= ranges.two_camera_prob <= 1.0):
        raise RangeError(f"two_camera_prob {ranges.two_camera_prob} outside [0, 1]")
    for cr in (ranges.cam1, ranges.cam2):
        if cr.vfov.lo <= 0 or cr.vfov.hi >= 180 or cr.hfov.lo <= 0 or cr.hfov.hi >= 180:
            raise RangeError("FoV intervals must lie inside (0, 180)")
        if cr.width.lo < 1 or cr.height.lo < 1:
            raise RangeError("resolution intervals must be >= 1 pixel")
        if cr.pos_y.lo <= 0:
            raise RangeError("camera height must be positive")
    if ranges.collider_x.lo <= 0 or ranges.collider_y.lo <= 0 or ranges.collider_z.lo <= 0:
        raise RangeError("collider dimensions must be positive")


# Table-sourced real robot platforms. Collider (ax, ay, az) in meters,
# camera height / pitch / FoVs per platform. Stretch RE-1 carries two
# identical forward cameras; every other platform has one.
_PRESETS: dict[str, dict] = {
    "stretch_re1": dict(
        collider=(0.33, 1.41, 0.34), cams=[
            dict(pos_y=1.40, pitch=27.0, vfov=59.0, hfov=90.0, width=1280, height=720),
            dict(pos_y=1.40, pitch=27.0, vfov=59.0, hfov=90.0, width=1280, height=720),
        ]),
    "stretch_factory": dict(
        collider=(0.33, 1.41, 0.34), cams=[
            dict(pos_y=1.30, pitch=30.0, vfov=69.0, hfov=42.0, width=720, height=1280),
        ]),
    "locobot": dict(
        collider=(0.35, 0.89, 0.35), cams=[
            dict(pos_y=0.87, pitch=0.0, vfov=42.0, hfov=68.0, width=396, height=224),
        ]),
    "unitree_go1": dict(
        collider=(0.645, 0.40, 0.28), cams=[
            dict(pos_y=0.28, pitch=0.0, vfov=42.0, hfov=68.0, width=480, height=270),
        ]),
    "rby1_standing": dict(
        collider=(0.60, 1.40, 0.69), cams=[
            dict(pos_y=1.40, pitch=0.0, vfov=73.0, hfov=53.0, width=224, height=396),
        ]),
    "rby1_seated": dict(
        collider=(0.60, 0.92, 0.69), cams=[
            dict(pos_y=0.92, pitch=0.0, vfov=73.0, hfov=53.0, width=224, height=396),
        ]),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_embodiment(name: str) -> EmbodimentConfig:
    """Return the embodiment configuration of a known robot platform."""
    try:
        spec = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}") from None
    cams = tuple(
        CameraConfig(pos_x=0.0, pos_y=c["pos_y"], pos_z=0.0, pitch=c["pitch"], yaw=0.0,
                     hfov=c["hfov"], vfov=c["vfov"], width=c["width"], height=c["height"])
        for c in spec["cams"]
    )
    return EmbodimentConfig(collider=spec["collider"], pivot=(0.0, 0.0), cameras=cams, id=name)


def config_vector(e: EmbodimentConfig) -> np.ndarray:
    """Fixed 24-entry real vector: [ax, ay, az, ox, oz, n_cameras] followed
    by two camera slots of [present, pos_x, pos_y, pos_z, pitch, yaw, hfov,
    vfov, aspect]. An absent second camera leaves its slot all zeros."""
    v = np.zeros(CONFIG_VECTOR_LEN, dtype=np.float64)
    v[0:3] = e.collider
    v[3:5] = e.pivot
    v[5] = len(e.cameras)
    for i, cam in enumerate(e.cameras[:2]):
        base = 6 + 9 * i
        v[base] = 1.0
        v[base + 1:base + 9] = (cam.pos_x, cam.pos_y, cam.pos_z, cam.pitch,
                                cam.yaw, cam.hfov, cam.vfov, cam.width / cam.height)
    return v


def _norm_widths() -> np.ndarray:
    """Per-dimension normalization widths from the default sampling ranges."""
    r = DEFAULT_RANGES
    max_ax = r.collider_x.hi
    max_az = r.collider_z.hi
    aspect_w = r.cam1.width.hi / r.cam1.height.lo - r.cam1.width.lo / r.cam1.height.hi
    w = np.ones(CONFIG_VECTOR_LEN)
    w[0] = r.collider_x.width
    w[1] = r.collider_y.width
    w[2] = r.collider_z.width
    w[3] = r.pivot_x_frac.width * max_ax
    w[4] = r.pivot_z_frac.width * max_az
    w[5] = 1.0  # camera count
    for i, cr in enumerate((r.cam1, r.cam2)):
        base = 6 + 9 * i
        w[base] = 1.0  # present flag
        w[base + 1] = cr.pos_x_frac.width * max_ax
        w[base + 2] = cr.pos_y.width
        w[base + 3] = cr.pos_z_frac.width * max_az
        w[base + 4] = cr.pitch.width
        w[base + 5] = 360.0  # yaw (cam1's width is zero; use a full turn)
        w[base + 6] = cr.hfov.width
        w[base + 7] = cr.vfov.width
        w[base + 8] = aspect_w
    return w


_NORM_WIDTHS = _norm_widths()


def embodiment_distance(a: EmbodimentConfig, b: EmbodimentConfig) -> float:
    """Euclidean distance between config vectors after per-dimension
    normalization by the default sampling-range widths."""
    da = config_vector(a) / _NORM_WIDTHS
    db = config_vector(b) / _NORM_WIDTHS
    return float(np.linalg.norm(da - db))


def normalized_vector(e: EmbodimentConfig) -> np.ndarray:
    """config_vector scaled by the distance normalization (for batch work)."""
    return config_vector(e) / _NORM_WIDTHS


# filter_ranges parameter names -> the fields they narrow.
_FILTERABLE = {
    "collider_x": ("collider_x",),
    "collider_y": ("collider_y",),
    "collider_z": ("collider_z",),
    "collider_size": ("collider_x", "collider_z"),
    "pivot_x": ("pivot_x_frac",),
    "pivot_z": ("pivot_z_frac",),
    "camera_height": ("cam1.pos_y", "cam2.pos_y"),
    "vfov": ("cam1.vfov", "cam2.vfov"),
    "hfov": ("cam1.hfov", "cam2.hfov"),
    "pitch": ("cam1.pitch", "cam2.pitch"),
    "cam1_pitch": ("cam1.pitch",),
    "cam2_pitch": ("cam2.pitch",),
    "cam2_yaw": ("cam2.yaw",),
    "width": ("cam1.width", "cam2.width"),
    "height": ("cam1.height", "cam2.height"),
}

FILTERABLE_PARAMETERS = tuple(sorted(_FILTERABLE))


def filter_ranges(ranges: SamplingRanges, parameter: str,
                  interval: tuple[float, float]) -> SamplingRanges:
    """Return a copy of `ranges` with one named parameter narrowed.

    The new interval must be contained in the existing one. Camera pitch
    narrowing is intersected with each camera's own range (the second
    camera's pitch range is wider than the first's).
    """
    try:
        fields = _FILTERABLE[parameter]
    except KeyError:
        raise RangeError(
            f"unknown parameter {parameter!r}; filterable: {', '.join(FILTERABLE_PARAMETERS)}"
        ) from None
    new = Interval(float(interval[0]), float(interval[1]))
    out = ranges
    for path in fields:
        if "." in path:
            cam_name, attr = path.split(".")
            cam = getattr(out, cam_name)
            old: Interval = getattr(cam, attr)
            if not old.contains(new):
                raise RangeError(
                    f"interval [{new.lo}, {new.hi}] not contained in existing "
                    f"{parameter} range [{old.lo}, {old.hi}]"
                )
            out = replace(out, **{cam_name: replace(cam, **{attr: new})})
        else:
            old = getattr(out, path)
            if not old.contains(new):
                raise RangeError(
                    f"interval [{new.lo}, {new.hi}] not contained in existing "
                    f"{parameter} range [{old.lo}, {old.hi}]"
                )
            out = replace(out, **{path: new})
    return out


def validate(e: EmbodimentConfig) -> list[str]:
    """Return every violated invariant (empty list = valid)."""
    issues: list[str] = []
    ax, ay, az = e.collider
    if not all(math.isfinite(v) and v > 0 for v in e.collider):
        issues.append(f"collider dimensions must be positive, got {e.collider}")
        return issues
    ox, oz = e.pivot
    if abs(ox) > ax / 2 + 1e-12 or abs(oz) > az / 2 + 1e-12:
        issues.append(f"pivot ({ox}, {oz}) outside footprint ({ax / 2}, {az / 2})")
    if not 1 <= len(e.cameras) <= 2:
        issues.append(f"embodiment must carry 1 or 2 cameras, got {len(e.cameras)}")
    for i, cam in enumerate(e.cameras):
        tag = f"camera {i}"
        if not (0 < cam.hfov < 180) or not (0 < cam.vfov < 180):
            issues.append(f"{tag} FoV ({cam.hfov}, {cam.vfov}) outside (0, 180)")
        if cam.width < 1 or cam.height < 1:
            issues.append(f"{tag} resolution {cam.width}x{cam.height} below 1 pixel")
        if abs(cam.pos_x) > ax / 2 + 1e-12:
            issues.append(f"{tag} lateral offset {cam.pos_x} outside collider")
        if abs(cam.pos_z) > az / 2 + 1e-12:
            issues.append(f"{tag} longitudinal offset {cam.pos_z} outside collider")
        if cam.pos_y <= 0:
            issues.append(f"{tag} height {cam.pos_y} not positive")
        elif cam.pos_y > ay + 1e-12:
            issues.append(f"{tag} above collider: height {cam.pos_y} > {ay}")
        if i == 0 and cam.yaw != 0.0:
            issues.append(f"first camera yaw must be 0, got {cam.yaw}")
        if i == 1 and not (0.0 <= cam.yaw < 360.0):
            issues.append(f"second camera yaw {cam.yaw} outside [0, 360)")
    return issues
