"""2.5D indoor worlds and their procedural generation.

A Scene is a grid of cells; each cell carries a list of occupied vertical
intervals (slabs) tagged with a semantic instance id.  This is enough to
represent walls, furniture with under-passable clearance (table tops on
legs, beds with a gap underneath) and small target objects, while keeping
collision tests and raycasts cheap.

Scene files are a length-prefixed JSON header followed by a little-endian
binary slab section (per cell: u16 slab count, then per slab f32 y_min,
f32 y_max, u16 instance id; cells row-major, iz outer / ix inner).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .rng import SplitMix64

_MAGIC = b"MNSC"
_FORMAT_VERSION = 1

WALL_CATEGORY = "wall"
DEFAULT_CELL_SIZE = 0.05
DEFAULT_WALL_HEIGHT = 2.0

# Probe used by the connectivity contract: a 0.2 m radius disc occupying
# heights (0, 0.2) must reach every room through the doorways.
PROBE_RADIUS = 0.2
PROBE_HEIGHT = 0.2


class SceneFormatError(ValueError):
    """Malformed scene file."""


class GenerationError(RuntimeError):
    """Scene constraints could not be satisfied within the retry budget."""


@dataclass(frozen=True)
class Slab:
    """One occupied vertical interval of a cell."""
    y_min: float
    y_max: float
    instance: int


@dataclass(frozen=True)
class Instance:
    """A semantic object: id, category, metric footprint AABB and a
    representative point (footprint centroid at the vertical midpoint)."""
    id: int
    category: str
    x_min: float
    z_min: float
    x_max: float
    z_max: float
    rep_point: tuple[float, float, float]

    def nearest_footprint_point(self, x: float, z: float) -> tuple[float, float]:
        return (min(max(x, self.x_min), self.x_max),
                min(max(z, self.z_min), self.z_max))


class Scene:
    """Immutable 2.5D heightfield world.

    Internally slabs are held in CSR-style flat arrays for fast vectorized
    queries; `occupied_intervals` exposes the per-cell view.
    """

    def __init__(self, cell_size: float, nx: int, nz: int,
                 cells: list[list[Slab]], instances: list[Instance], seed: int = 0):
        if cell_size <= 0:
            raise ValueError(f"cell_size must be positive, got {cell_size}")
        if len(cells) != nx * nz:
            raise ValueError(f"expected {nx * nz} cells, got {len(cells)}")
        self.cell_size = float(cell_size)
        self.nx = int(nx)
        self.nz = int(nz)
        self.seed = int(seed)
        self.instances = list(instances)
        self._by_id = {inst.id: inst for inst in self.instances}

        counts = np.zeros(nx * nz, dtype=np.int64)
        for i, slabs in enumerate(cells):
            counts[i] = len(slabs)
        self.cell_start = np.zeros(nx * nz + 1, dtype=np.int64)
        np.cumsum(counts, out=self.cell_start[1:])
        total = int(self.cell_start[-1])
        self.slab_ymin = np.zeros(total, dtype=np.float32)
        self.slab_ymax = np.zeros(total, dtype=np.float32)
        self.slab_inst = np.zeros(total, dtype=np.uint16)
        self.slab_cell = np.repeat(np.arange(nx * nz, dtype=np.int64), counts)
        k = 0
        for slabs in cells:
            for s in sorted(slabs, key=lambda s: s.y_min):
                if not (0.0 <= s.y_min < s.y_max):
                    raise ValueError(f"invalid slab interval [{s.y_min}, {s.y_max}]")
                if s.instance not in self._by_id:
                    raise ValueError(f"slab references unknown instance {s.instance}")
                self.slab_ymin[k] = s.y_min
                self.slab_ymax[k] = s.y_max
                self.slab_inst[k] = s.instance
                k += 1
        for arr in (self.cell_start, self.slab_ymin, self.slab_ymax,
                    self.slab_inst, self.slab_cell):
            arr.setflags(write=False)

    # -- geometry ---------------------------------------------------------

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.cell_size, self.nz * self.cell_size)

    def cell_index(self, ix: int, iz: int) -> int:
        return iz * self.nx + ix

    def in_bounds_point(self, x: float, z: float) -> bool:
        ex, ez = self.extent
        return 0.0 <= x <= ex and 0.0 <= z <= ez

    def cell_of_point(self, x: float, z: float) -> tuple[int, int]:
        ix = min(max(int(x / self.cell_size), 0), self.nx - 1)
        iz = min(max(int(z / self.cell_size), 0), self.nz - 1)
        return ix, iz

    def occupied_intervals(self, cell: tuple[int, int]) -> list[Slab]:
        """The cell's slabs sorted by y_min."""
        ix, iz = cell
        if not (0 <= ix < self.nx and 0 <= iz < self.nz):
            raise IndexError(f"cell ({ix}, {iz}) out of bounds ({self.nx}, {self.nz})")
        i = self.cell_index(ix, iz)
        lo, hi = self.cell_start[i], self.cell_start[i + 1]
        return [Slab(float(self.slab_ymin[k]), float(self.slab_ymax[k]),
                     int(self.slab_inst[k])) for k in range(lo, hi)]

    def instance_by_id(self, iid: int) -> Instance:
        return self._by_id[iid]

    def instances_of_category(self, category: str) -> list[Instance]:
        return [inst for inst in self.instances if inst.category == category]

    def blocked_mask(self, y_lo: float, y_hi: float) -> np.ndarray:
        """Boolean (nz, nx) mask of cells with a slab intersecting the open
        height interval (y_lo, y_hi)."""
        hit = (self.slab_ymin < y_hi) & (self.slab_ymax > y_lo)
        counts = np.bincount(self.slab_cell[hit], minlength=self.nx * self.nz)
        return (counts > 0).reshape(self.nz, self.nx)

    def slab_volume(self) -> float:
        return float(np.sum(self.slab_ymax - self.slab_ymin)) * self.cell_size ** 2

    # -- equality / serialization -----------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.cell_size == other.cell_size and self.nx == other.nx
                and self.nz == other.nz and self.seed == other.seed
                and self.instances == other.instances
                and np.array_equal(self.cell_start, other.cell_start)
                and np.array_equal(self.slab_ymin, other.slab_ymin)
                and np.array_equal(self.slab_ymax, other.slab_ymax)
                and np.array_equal(self.slab_inst, other.slab_inst))

    def header_dict(self) -> dict:
        return {
            "cell_size": self.cell_size,
            "format_version": _FORMAT_VERSION,
            "instances": [
                {"category": inst.category, "id": inst.id,
                 "rep_point": list(inst.rep_point),
                 "x_max": inst.x_max, "x_min": inst.x_min,
                 "z_max": inst.z_max, "z_min": inst.z_min}
                for inst in self.instances
            ],
            "nx": self.nx,
            "nz": self.nz,
            "seed": self.seed,
        }


def save_scene(scene: Scene, path) -> None:
    header = json.dumps(scene.header_dict(), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    counts = np.diff(scene.cell_start).astype(np.uint16)
    body = bytearray()
    for i in range(scene.nx * scene.nz):
        body += struct.pack("<H", counts[i])
        lo, hi = scene.cell_start[i], scene.cell_start[i + 1]
        for k in range(lo, hi):
            body += struct.pack("<ffH", scene.slab_ymin[k], scene.slab_ymax[k],
                                scene.slab_inst[k])
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(bytes(body))


def load_scene(path) -> Scene:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise SceneFormatError(f"bad magic at offset 0: {data[:4]!r}")
    if len(data) < 8:
        raise SceneFormatError("truncated file: missing header length")
    (hlen,) = struct.unpack_from("<I", data, 4)
    if len(data) < 8 + hlen:
        raise SceneFormatError(f"truncated header: need {hlen} bytes at offset 8")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"unparseable header: {exc}") from exc
    if header.get("format_version") != _FORMAT_VERSION:
        raise SceneFormatError(f"unsupported format version {header.get('format_version')}")
    instances = [
        Instance(id=int(d["id"]), category=str(d["category"]),
                 x_min=float(d["x_min"]), z_min=float(d["z_min"]),
                 x_max=float(d["x_max"]), z_max=float(d["z_max"]),
                 rep_point=tuple(float(v) for v in d["rep_point"]))
        for d in header["instances"]
    ]
    nx, nz = int(header["nx"]), int(header["nz"])
    cells: list[list[Slab]] = []
    off = 8 + hlen
    for i in range(nx * nz):
        if off + 2 > len(data):
            raise SceneFormatError(f"truncated slab section at offset {off} (cell {i})")
        (count,) = struct.unpack_from("<H", data, off)
        off += 2
        slabs = []
        for _ in range(count):
            if off + 10 > len(data):
                raise SceneFormatError(f"truncated slab record at offset {off} (cell {i})")
            y_min, y_max, inst = struct.unpack_from("<ffH", data, off)
            off += 10
            if not (0.0 <= y_min < y_max):
                ix, iz = i % nx, i // nx
                raise SceneFormatError(
                    f"invalid slab interval [{y_min}, {y_max}] in cell ({ix}, {iz})")
            slabs.append(Slab(float(y_min), float(y_max), int(inst)))
        cells.append(slabs)
    if off != len(data):
        raise SceneFormatError(f"{len(data) - off} trailing bytes at offset {off}")
    return Scene(cell_size=float(header["cell_size"]), nx=nx, nz=nz,
                 cells=cells, instances=instances, seed=int(header["seed"]))


# -- templates -------------------------------------------------------------

@dataclass(frozen=True)
class ShapeTemplate:
    """How a category instantiates into slabs over its footprint.

    parts: list of (fx0, fz0, fx1, fz1, y0, y1) with footprint-relative
    fractional extents. A table is four leg columns plus a raised top slab;
    a bed is a low slab, optionally with an under-bed clearance gap.
    """
    footprint_x: float
    footprint_z: float
    parts: tuple[tuple[float, float, float, float, float, float], ...]

    def max_height(self) -> float:
        return max(p[5] for p in self.parts)

    def to_dict(self) -> dict:
        return {"footprint_x": self.footprint_x,
                "footprint_z": self.footprint_z,
                "parts": [list(p) for p in self.parts]}

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeTemplate":
        return cls(footprint_x=float(d["footprint_x"]),
                   footprint_z=float(d["footprint_z"]),
                   parts=tuple(tuple(float(v) for v in p) for p in d["parts"]))


def _box(fx, fz, y0, y1) -> ShapeTemplate:
    return ShapeTemplate(fx, fz, ((0.0, 0.0, 1.0, 1.0, y0, y1),))


TABLE_TOP = (0.6, 0.75)
BED_SLAB = (0.0, 0.45)
BED_UNDER = (0.25, 0.45)  # variant with clearance underneath

_LEG = 0.12  # leg column fraction of the table footprint


def _table_template(fx: float, fz: float) -> ShapeTemplate:
    legs = [
        (0.0, 0.0, _LEG, _LEG), (1.0 - _LEG, 0.0, 1.0, _LEG),
        (0.0, 1.0 - _LEG, _LEG, 1.0), (1.0 - _LEG, 1.0 - _LEG, 1.0, 1.0),
    ]
    parts = tuple((x0, z0, x1, z1, 0.0, TABLE_TOP[1]) for x0, z0, x1, z1 in legs)
    parts += ((0.0, 0.0, 1.0, 1.0, TABLE_TOP[0], TABLE_TOP[1]),)
    return ShapeTemplate(fx, fz, parts)


DEFAULT_TEMPLATES: dict[str, tuple[ShapeTemplate, ...]] = {
    "table": (_table_template(1.2, 0.8),),
    "bed": (
        _box(2.0, 1.5, *BED_SLAB),
        ShapeTemplate(2.0, 1.5, ((0.0, 0.0, 1.0, 1.0, BED_UNDER[0], BED_UNDER[1]),)),
    ),
    "chair": (_box(0.5, 0.5, 0.0, 0.9),),
    "sofa": (_box(1.8, 0.85, 0.0, 0.8),),
    "television": (_box(1.0, 0.15, 0.5, 1.3),),
    "houseplant": (_box(0.4, 0.4, 0.0, 1.2),),
    "vase": (_box(0.25, 0.25, 0.0, 0.6),),
    "toilet": (_box(0.45, 0.65, 0.0, 0.8),),
    "trashcan": (_box(0.35, 0.35, 0.0, 0.7),),
    "mug": (_box(0.15, 0.15, 0.0, 0.25),),
    "apple": (_box(0.12, 0.12, 0.0, 0.12),),
}

# Default navigation targets: categories whose templates stand tall enough
# to be seen by high-mounted, shallow-pitch cameras at the success radius.
DEFAULT_TARGETS = ("houseplant", "television", "chair", "sofa", "toilet", "trashcan")


@dataclass(frozen=True)
class SceneParams:
    rooms_x: int = 2
    rooms_z: int = 2
    room_size: tuple[float, float] = (2.6, 3.4)     # meters per room side
    # wide enough for the largest randomized collider (conservative
    # footprint radius up to ~0.59 m) plus planner-grid slack
    doorway_width: tuple[float, float] = (1.4, 1.7)
    furniture_density: float = 0.12                 # fraction of floor covered
    cell_size: float = DEFAULT_CELL_SIZE
    wall_height: float = DEFAULT_WALL_HEIGHT
    wall_thickness: float = 0.10
    templates: dict[str, tuple[ShapeTemplate, ...]] = field(
        default_factory=lambda: dict(DEFAULT_TEMPLATES))
    target_categories: tuple[str, ...] = DEFAULT_TARGETS
    max_retries: int = 8

    def validated(self) -> "SceneParams":
        if self.doorway_width[0] < 2 * self.cell_size:
            raise ValueError("doorway width below 2 cells")
        for cat in self.target_categories:
            if cat not in self.templates or not self.templates[cat]:
                raise ValueError(f"target category {cat!r} has no shape template")
        if not (0.0 <= self.furniture_density <= 1.0):
            raise ValueError("furniture density outside [0, 1]")
        if self.rooms_x < 1 or self.rooms_z < 1:
            raise ValueError("room grid must be at least 1x1")
        return self

    def to_dict(self) -> dict:
        return {
            "rooms_x": self.rooms_x, "rooms_z": self.rooms_z,
            "room_size": list(self.room_size),
            "doorway_width": list(self.doorway_width),
            "furniture_density": self.furniture_density,
            "cell_size": self.cell_size, "wall_height": self.wall_height,
            "wall_thickness": self.wall_thickness,
            "target_categories": list(self.target_categories),
            "max_retries": self.max_retries,
            "templates": {cat: [t.to_dict() for t in tpls]
                          for cat, tpls in sorted(self.templates.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneParams":
        kw = {}
        for key in ("rooms_x", "rooms_z", "furniture_density", "cell_size",
                    "wall_height", "wall_thickness", "max_retries"):
            if key in d:
                kw[key] = d[key]
        if "room_size" in d:
            kw["room_size"] = tuple(d["room_size"])
        if "doorway_width" in d:
            kw["doorway_width"] = tuple(d["doorway_width"])
        if "target_categories" in d:
            kw["target_categories"] = tuple(d["target_categories"])
        if "templates" in d:
            kw["templates"] = {
                cat: tuple(ShapeTemplate.from_dict(t) for t in tpls)
                for cat, tpls in d["templates"].items()}
        return cls(**kw)


class _Builder:
    """Accumulates instances and rectangular slab placements on a grid."""

    def __init__(self, cell_size: float, nx: int, nz: int, seed: int):
        self.cell_size = cell_size
        self.nx = nx
        self.nz = nz
        self.seed = seed
        self.cells: list[list[Slab]] = [[] for _ in range(nx * nz)]
        self.instances: list[Instance] = []
        self._next_id = 1  # 0 = no instance

    def cells_of_rect(self, x0, z0, x1, z1):
        ix0 = max(int(math.floor(x0 / self.cell_size + 1e-9)), 0)
        iz0 = max(int(math.floor(z0 / self.cell_size + 1e-9)), 0)
        ix1 = min(int(math.ceil(x1 / self.cell_size - 1e-9)), self.nx)
        iz1 = min(int(math.ceil(z1 / self.cell_size - 1e-9)), self.nz)
        return ix0, iz0, ix1, iz1

    def add_instance(self, category, x0, z0, x1, z1, y_mid) -> Instance:
        inst = Instance(id=self._next_id, category=category,
                        x_min=x0, z_min=z0, x_max=x1, z_max=z1,
                        rep_point=((x0 + x1) / 2, y_mid, (z0 + z1) / 2))
        if self._next_id >= 0xFFFF:
            raise GenerationError("instance id space (u16) exhausted")
        self._next_id += 1
        self.instances.append(inst)
        return inst

    def fill_rect(self, inst: Instance, x0, z0, x1, z1, y0, y1) -> None:
        # f32 storage keeps save/load round-trips bit-exact
        y0 = float(np.float32(y0))
        y1 = float(np.float32(y1))
        ix0, iz0, ix1, iz1 = self.cells_of_rect(x0, z0, x1, z1)
        for iz in range(iz0, iz1):
            row = iz * self.nx
            for ix in range(ix0, ix1):
                self.cells[row + ix].append(Slab(y0, y1, inst.id))

    def build(self) -> Scene:
        return Scene(self.cell_size, self.nx, self.nz, self.cells,
                     self.instances, seed=self.seed)


def _place_template(builder: _Builder, category: str, tpl: ShapeTemplate,
                    x0: float, z0: float, rotated: bool,
                    y_top: float | None = None) -> Instance:
    fx, fz = (tpl.footprint_z, tpl.footprint_x) if rotated else (tpl.footprint_x, tpl.footprint_z)
    x1, z1 = x0 + fx, z0 + fz
    y_lo = min(p[4] for p in tpl.parts)
    y_hi = tpl.max_height()
    inst = builder.add_instance(category, x0, z0, x1, z1, (y_lo + y_hi) / 2)
    for px0, pz0, px1, pz1, y0p, y1p in tpl.parts:
        if rotated:
            px0, pz0, px1, pz1 = pz0, px0, pz1, px1
        builder.fill_rect(inst, x0 + px0 * fx, z0 + pz0 * fz,
                          x0 + px1 * fx, z0 + pz1 * fz, y0p, y1p)
    return inst


def free_mask_for_probe(scene: Scene, radius: float = PROBE_RADIUS,
                        height: float = PROBE_HEIGHT) -> np.ndarray:
    """Cells a disc of the given radius (occupying heights (0, height)) can
    stand on: the blocked mask eroded by the disc."""
    blocked = scene.blocked_mask(0.0, height)
    r_cells = int(math.ceil(radius / scene.cell_size))
    yy, xx = np.mgrid[-r_cells:r_cells + 1, -r_cells:r_cells + 1]
    disc = (xx * xx + yy * yy) * scene.cell_size ** 2 <= radius * radius
    inflated = ndimage.binary_dilation(blocked, structure=disc)
    # boundary cells cannot host the disc either
    inflated[:r_cells, :] = True
    inflated[-r_cells:, :] = True
    inflated[:, :r_cells] = True
    inflated[:, -r_cells:] = True
    return ~inflated


def is_connected(scene: Scene, seeds_xz: list[tuple[float, float]]) -> bool:
    """True if every seed point lies in one probe-connected free component."""
    free = free_mask_for_probe(scene)
    labels, _ = ndimage.label(free)
    ids = set()
    for x, z in seeds_xz:
        ix, iz = scene.cell_of_point(x, z)
        if not free[iz, ix]:
            return False
        ids.add(int(labels[iz, ix]))
    return len(ids) == 1


def generate_scene(seed: int, params: SceneParams = SceneParams()) -> Scene:
    """Procedurally generate a connected multi-room scene.

    Guarantees: every room reachable by the probe disc, at least one
    instance of each target category, determinism in (seed, params).
    Raises GenerationError when constraints cannot be met within the retry
    budget.
    """
    params = params.validated()
    last_reason = "unknown"
    for attempt in range(params.max_retries):
        rng = SplitMix64(SplitMix64(seed + attempt * 0x9E37).next_u64())
        scene = _try_generate(rng, seed, params)
        if scene is not None:
            return scene
        last_reason = _LAST_FAILURE[0]
    raise GenerationError(
        f"scene generation failed after {params.max_retries} attempts: {last_reason}")


_LAST_FAILURE = ["unknown"]


def _try_generate(rng: SplitMix64, seed: int, params: SceneParams) -> Scene | None:
    cs = params.cell_size
    wt = params.wall_thickness
    # room sizes snapped to the cell grid
    room_w = [round(rng.uniform(*params.room_size) / cs) * cs for _ in range(params.rooms_x)]
    room_d = [round(rng.uniform(*params.room_size) / cs) * cs for _ in range(params.rooms_z)]
    ex = sum(room_w) + (params.rooms_x + 1) * wt
    ez = sum(room_d) + (params.rooms_z + 1) * wt
    nx = int(round(ex / cs))
    nz = int(round(ez / cs))
    builder = _Builder(cs, nx, nz, seed)

    # room rectangles (interior floor area)
    x_edges = [wt]
    for w in room_w:
        x_edges.append(x_edges[-1] + w + wt)
    z_edges = [wt]
    for d in room_d:
        z_edges.append(z_edges[-1] + d + wt)
    rooms = {}
    for rz in range(params.rooms_z):
        for rx in range(params.rooms_x):
            x0 = x_edges[rx]
            z0 = z_edges[rz]
            rooms[(rx, rz)] = (x0, z0, x0 + room_w[rx], z0 + room_d[rz])

    wall_inst = builder.add_instance(WALL_CATEGORY, 0.0, 0.0, ex, ez,
                                     params.wall_height / 2)

    def wall(x0, z0, x1, z1):
        builder.fill_rect(wall_inst, x0, z0, x1, z1, 0.0, params.wall_height)

    # perimeter (side strips skip the corners the top/bottom already cover)
    wall(0, 0, ex, wt)
    wall(0, ez - wt, ex, ez)
    wall(0, wt, wt, ez - wt)
    wall(ex - wt, wt, ex, ez - wt)

    # interior walls with one doorway per adjacent room pair
    doorways = []
    for rz in range(params.rooms_z):
        for rx in range(params.rooms_x):
            x0, z0, x1, z1 = rooms[(rx, rz)]
            if rx + 1 < params.rooms_x:  # vertical wall to the right
                wx0, wx1 = x1, x1 + wt
                dw = round(rng.uniform(*params.doorway_width) / cs) * cs
                dz0 = z0 + round(rng.uniform(0.1, (z1 - z0) - dw - 0.1) / cs) * cs
                wall(wx0, z0 - wt, wx1, dz0)
                wall(wx0, dz0 + dw, wx1, z1 + wt)
                doorways.append((wx0, dz0, wx1, dz0 + dw))
            if rz + 1 < params.rooms_z:  # horizontal wall above
                wz0, wz1 = z1, z1 + wt
                dw = round(rng.uniform(*params.doorway_width) / cs) * cs
                dx0 = x0 + round(rng.uniform(0.1, (x1 - x0) - dw - 0.1) / cs) * cs
                wall(x0 - wt, wz0, dx0, wz1)
                wall(dx0 + dw, wz0, x1 + wt, wz1)
                doorways.append((dx0, wz0, dx0 + dw, wz1))

    room_centers = [((x0 + x1) / 2, (z0 + z1) / 2) for x0, z0, x1, z1 in rooms.values()]

    # furniture: targets first (one of each), then filler up to the density
    room_list = list(rooms.values())
    placements: list[tuple[str, ShapeTemplate]] = []
    for cat in params.target_categories:
        placements.append((cat, rng.choice(params.templates[cat])))
    total_area = sum((x1 - x0) * (z1 - z0) for x0, z0, x1, z1 in room_list)
    budget = params.furniture_density * total_area
    placed_area = 0.0

    all_cats = sorted(params.templates)
    occupied: list[tuple[float, float, float, float]] = []

    def try_place(cat: str, tpl: ShapeTemplate) -> bool:
        nonlocal placed_area
        for _ in range(40):
            x0r, z0r, x1r, z1r = rng.choice(room_list)
            rotated = rng.random() < 0.5
            fx = tpl.footprint_z if rotated else tpl.footprint_x
            fz = tpl.footprint_x if rotated else tpl.footprint_z
            if x1r - x0r < fx + 2 * cs or z1r - z0r < fz + 2 * cs:
                continue
            px = x0r + cs + rng.random() * (x1r - x0r - fx - 2 * cs)
            pz = z0r + cs + rng.random() * (z1r - z0r - fz - 2 * cs)
            px = round(px / cs) * cs
            pz = round(pz / cs) * cs
            rect = (px, pz, px + fx, pz + fz)
            # keep clear of other furniture and doorway aprons
            clear = PROBE_RADIUS + cs
            bad = False
            for ox0, oz0, ox1, oz1 in occupied + doorways:
                if (rect[0] < ox1 + clear and rect[2] > ox0 - clear
                        and rect[1] < oz1 + clear and rect[3] > oz0 - clear):
                    bad = True
                    break
            if bad:
                continue
            inst = _place_template(builder, cat, tpl, px, pz, rotated)
            # keep connectivity; undo the placement if it splits free space
            trial = builder.build()
            if not is_connected(trial, room_centers):
                _undo_last(builder, inst)
                continue
            occupied.append(rect)
            placed_area += fx * fz
            return True
        return False

    for cat, tpl in placements:
        if not try_place(cat, tpl):
            _LAST_FAILURE[0] = f"could not place required target category {cat!r}"
            return None

    stall = 0
    while placed_area < budget and stall < 25:
        cat = rng.choice(all_cats)
        tpl = rng.choice(params.templates[cat])
        if try_place(cat, tpl):
            stall = 0
        else:
            stall += 1
    if placed_area < budget and params.furniture_density > 0.35:
        _LAST_FAILURE[0] = (f"furniture density {params.furniture_density} unreachable: "
                            f"placed {placed_area:.2f} of {budget:.2f} m^2")
        return None

    scene = builder.build()
    if not is_connected(scene, room_centers):
        _LAST_FAILURE[0] = "rooms not probe-connected"
        return None
    return scene


def _undo_last(builder: _Builder, inst: Instance) -> None:
    builder.instances.pop()
    builder._next_id -= 1
    for slabs in builder.cells:
        if slabs and slabs[-1].instance == inst.id:
            while slabs and slabs[-1].instance == inst.id:
                slabs.pop()


class SceneBuilder:
    """Hand-construction of scenes for tests and golden scenarios."""

    def __init__(self, extent_x: float, extent_z: float,
                 cell_size: float = DEFAULT_CELL_SIZE, seed: int = 0,
                 wall_height: float = DEFAULT_WALL_HEIGHT, walls: bool = True):
        nx = int(round(extent_x / cell_size))
        nz = int(round(extent_z / cell_size))
        self._b = _Builder(cell_size, nx, nz, seed)
        self.cell_size = cell_size
        self.extent = (nx * cell_size, nz * cell_size)
        if walls:
            ex, ez = self.extent
            wt = 2 * cell_size
            inst = self._b.add_instance(WALL_CATEGORY, 0, 0, ex, ez, wall_height / 2)
            # side strips exclude the corner rows already covered by the
            # top/bottom strips, so no cell carries duplicate slabs
            self._b.fill_rect(inst, 0, 0, ex, wt, 0, wall_height)
            self._b.fill_rect(inst, 0, ez - wt, ex, ez, 0, wall_height)
            self._b.fill_rect(inst, 0, wt, wt, ez - wt, 0, wall_height)
            self._b.fill_rect(inst, ex - wt, wt, ex, ez - wt, 0, wall_height)

    def add_box(self, category: str, x0: float, z0: float, x1: float, z1: float,
                y0: float, y1: float) -> Instance:
        inst = self._b.add_instance(category, x0, z0, x1, z1, (y0 + y1) / 2)
        self._b.fill_rect(inst, x0, z0, x1, z1, y0, y1)
        return inst

    def add_template(self, category: str, tpl: ShapeTemplate,
                     x0: float, z0: float, rotated: bool = False) -> Instance:
        return _place_template(self._b, category, tpl, x0, z0, rotated)

    def build(self) -> Scene:
        return self._b.build()
