"""Procedural objects, table scenes, grasp parameters and planar geometry helpers.

Units are mm, N and kg throughout.  Objects are extruded simple polygons
(2.5D prisms) so every contact query reduces to exact polygon clipping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

G = 9.81  # m/s^2

FAMILIES = ("box", "prism_convex", "prism_concave", "cylinder_like")

WORKSPACE_HEIGHT = 150.0
FOOTPRINT_DIAMETER = (20.0, 100.0)
HEIGHT_RANGE = (20.0, 120.0)
MASS_RANGE = (0.05, 0.5)
FRICTION_RANGE = (0.2, 1.0)
STIFFNESS_RANGE = (1.0, 3.0)  # N/mm
FORCE_RANGE = (2.0, 20.0)  # N, default grip-force range of a run

# surface finishes: (friction range, effective density g/cm^3, base albedo). Appearance
# tracks the material the way rubber, wood, plastic and metal look different; a minority
# of objects are painted. Densities are effective values
# for partly hollow objects.
FINISHES = (
    ((0.80, 1.00), (0.90, 1.80), (0.78, 0.28, 0.24)),
    ((0.55, 0.80), (0.75, 1.50), (0.86, 0.72, 0.38)),
    ((0.35, 0.55), (0.45, 1.05), (0.28, 0.56, 0.86)),
    ((0.20, 0.35), (1.20, 2.40), (0.82, 0.84, 0.88)),
)
PAINTED_FRACTION = 0.15

# geometry is snapped to this grid (mm) so 16-bit depth images round-trip exactly
GRID = 0.01


class PlacementImpossible(ValueError):
    pass


# --- planar geometry ------------------------------------------------------------------


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6 * a)


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


def is_simple(poly: np.ndarray) -> bool:
    """Brute-force O(n^2) check that no two non-adjacent edges touch."""
    n = len(poly)
    if n < 3:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                return False
    return True


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over ``pts`` of shape (..., 2)."""
    x = pts[..., 0][..., None]
    y = pts[..., 1][..., None]
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    return (straddle & (x < xcross)).sum(axis=-1) % 2 == 1


def clip_halfplane(poly: np.ndarray, normal, offset: float) -> np.ndarray:
    """Keep the part of ``poly`` where ``p . normal <= offset`` (Sutherland-Hodgman)."""
    if len(poly) == 0:
        return poly
    normal = np.asarray(normal, dtype=float)
    s = poly @ normal - offset
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if s[i] <= 0:
            out.append(poly[i])
        if (s[i] <= 0) != (s[j] <= 0):
            t = s[i] / (s[i] - s[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out).reshape(-1, 2)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _snap(a):
    return np.round(np.asarray(a, dtype=float) / GRID) * GRID


# --- domain types ---------------------------------------------------------------------


@dataclass(frozen=True)
class MaterialProps:
    mass: float
    friction_mu: float
    stiffness: float
    texture_amplitude: float
    albedo: tuple[float, float, float]

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not 0.05 <= self.friction_mu <= 2.0:
            raise ValueError(f"friction_mu out of [0.05, 2]: {self.friction_mu}")
        if not self.stiffness > 0:
            raise ValueError(f"stiffness must be positive, got {self.stiffness}")
        if self.texture_amplitude < 0:
            raise ValueError("texture_amplitude must be >= 0")


@dataclass(frozen=True)
class ObjectModel:
    object_id: str
    footprint: tuple[tuple[float, float], ...]
    height: float
    com: tuple[float, float, float]
    material: MaterialProps

    @property
    def vertices(self) -> np.ndarray:
        return np.array(self.footprint, dtype=float)

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def check(self) -> None:
        """Raise ``ValueError`` if any invariant is violated."""
        v = self.vertices
        if signed_area(v) <= 0:
            raise ValueError(f"{self.object_id}: footprint not counterclockwise / zero area")
        if not is_simple(v):
            raise ValueError(f"{self.object_id}: footprint self-intersects")
        if not 0 < self.height <= WORKSPACE_HEIGHT:
            raise ValueError(f"{self.object_id}: height {self.height} out of range")
        if not points_in_polygon(np.array(self.com[:2]), v) or not 0 <= self.com[2] <= self.height:
            raise ValueError(f"{self.object_id}: com outside the prism")

    def to_json(self) -> dict:
        m = self.material
        return {
            "object_id": self.object_id,
            "footprint": [list(p) for p in self.footprint],
            "height": self.height,
            "com": list(self.com),
            "material": {
                "mass": m.mass,
                "friction_mu": m.friction_mu,
                "stiffness": m.stiffness,
                "texture_amplitude": m.texture_amplitude,
                "albedo": list(m.albedo),
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "ObjectModel":
        m = d["material"]
        return cls(
            object_id=d["object_id"],
            footprint=tuple(tuple(float(c) for c in p) for p in d["footprint"]),
            height=float(d["height"]),
            com=tuple(float(c) for c in d["com"]),
            material=MaterialProps(
                mass=float(m["mass"]),
                friction_mu=float(m["friction_mu"]),
                stiffness=float(m["stiffness"]),
                texture_amplitude=float(m["texture_amplitude"]),
                albedo=tuple(float(c) for c in m["albedo"]),
            ),
        )


@dataclass(frozen=True)
class Table:
    """Region of the table surface where objects are placed."""

    xmin: float = -60.0
    ymin: float = -60.0
    xmax: float = 60.0
    ymax: float = 60.0

    @property
    def width(self):
        return self.xmax - self.xmin

    @property
    def depth(self):
        return self.ymax - self.ymin

    def contains(self, pts: np.ndarray) -> bool:
        return bool(
            np.all(pts[:, 0] > self.xmin) and np.all(pts[:, 0] < self.xmax)
            and np.all(pts[:, 1] > self.ymin) and np.all(pts[:, 1] < self.ymax)
        )


@dataclass(frozen=True)
class Scene:
    """An object resting on the table at planar pose (x, y, theta).

    ``object`` may be ``None`` for an empty table.
    """

    object: ObjectModel | None
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    table: Table = field(default_factory=Table)

    def world_footprint(self) -> np.ndarray:
        if self.object is None:
            return np.zeros((0, 2))
        x, y, th = self.pose
        return self.object.vertices @ rotation(th).T + np.array([x, y])

    def world_com(self) -> np.ndarray:
        x, y, th = self.pose
        cx, cy, cz = self.object.com
        p = rotation(th) @ np.array([cx, cy]) + np.array([x, y])
        return np.array([p[0], p[1], cz])

    def key(self) -> str:
        """Canonical string identity used for contact checksums."""
        oid = None if self.object is None else self.object.object_id
        return f"{oid}|{self.pose[0]!r}|{self.pose[1]!r}|{self.pose[2]!r}"


@dataclass(frozen=True)
class GraspParams:
    """Grasp variables: end-effector position (mm), jaw angle (rad), grip force (N)."""

    ee_x: float
    ee_y: float
    ee_z: float
    phi: float
    force: float

    def __post_init__(self):
        if not 0 <= self.phi <= math.pi:
            raise ValueError(f"phi must lie in [0, pi], got {self.phi}")
        if self.ee_z < 0:
            raise ValueError(f"ee_z must be >= 0, got {self.ee_z}")
        if self.force < 0:
            raise ValueError(f"force must be >= 0, got {self.force}")

    def as_array(self) -> np.ndarray:
        return np.array([self.ee_x, self.ee_y, self.ee_z, self.phi, self.force])

    def key(self) -> str:
        return "|".join(repr(float(v)) for v in self.as_array())


# --- generation -----------------------------------------------------------------------


def _family_index(family: str) -> int:
    try:
        return FAMILIES.index(family)
    except ValueError:
        raise ValueError(f"unknown object family {family!r}; expected one of {FAMILIES}") from None


def _raw_footprint(rng: np.random.Generator, family: str) -> np.ndarray:
    if family == "box":
        w, d = rng.uniform(18, 70, size=2)
        return np.array([[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]])
    if family == "cylinder_like":
        r = rng.uniform(10, 50)
        ecc = rng.uniform(0.8, 1.0)
        t = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        return np.stack([r * np.cos(t), ecc * r * np.sin(t)], axis=1)
    if family == "prism_convex":
        n = int(rng.integers(5, 9))
        r = rng.uniform(12, 50)
        t = np.sort(rng.uniform(0, 2 * np.pi, n))
        # enforce a minimum angular gap so no vertex collapses onto its neighbour
        t = t[0] + np.cumsum(np.r_[0, np.maximum(np.diff(t), 0.3)])
        t = t[t < t[0] + 2 * np.pi - 0.3]
        ecc = rng.uniform(0.6, 1.0)
        return np.stack([r * np.cos(t), ecc * r * np.sin(t)], axis=1)
    # prism_concave: star polygon, simple because it is star-shaped about the origin
    k = int(rng.integers(3, 7))
    r = rng.uniform(15, 50)
    inner = rng.uniform(0.5, 0.8)
    t = np.linspace(0, 2 * np.pi, 2 * k, endpoint=False) + rng.uniform(0, np.pi)
    radii = np.where(np.arange(2 * k) % 2 == 0, r, r * inner)
    return np.stack([radii * np.cos(t), radii * np.sin(t)], axis=1)


def generate_object(seed: int, family: str) -> ObjectModel:
    """Deterministically generate a graspable prism of the given family."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, _family_index(family), 0x0B1EC7])
    poly = _raw_footprint(rng, family)

    diam = float(np.max(np.linalg.norm(poly[:, None] - poly[None], axis=-1)))
    lo, hi = FOOTPRINT_DIAMETER
    if diam < lo + 0.5 or diam > hi - 0.5:
        poly = poly * (float(np.clip(diam, lo + 0.5, hi - 0.5)) / diam)
    poly = poly - polygon_centroid(poly)
    poly = _snap(poly)
    if signed_area(poly) < 0:
        poly = poly[::-1]

    height = float(_snap(rng.uniform(*HEIGHT_RANGE)))

    # mass grows with visible volume; gel texture tracks friction
    mu_range, density_range, base = FINISHES[int(rng.integers(len(FINISHES)))]
    volume_cm3 = signed_area(poly) * height / 1000.0
    mass = float(np.clip(rng.uniform(*density_range) * volume_cm3 / 1000.0, *MASS_RANGE))
    mu = float(rng.uniform(*mu_range))
    texture = float(max(0.0, 0.02 + 0.3 * (mu - 0.2) / 0.8 + rng.normal(0, 0.02)))
    stiffness = float(rng.uniform(*STIFFNESS_RANGE))
    if rng.random() < PAINTED_FRACTION:
        albedo_arr = rng.uniform(0.3, 0.95, size=3)
    else:
        albedo_arr = np.clip(np.array(base) + rng.normal(0, 0.04, size=3), 0.0, 1.0)
    albedo = tuple(float(a) for a in albedo_arr)

    radius = float(np.max(np.linalg.norm(poly[:, None] - poly[None], axis=-1))) / 2
    com_xy = np.zeros(2)
    for _ in range(64):
        ang = rng.uniform(0, 2 * np.pi)
        cand = rng.uniform(0, 0.3 * radius - GRID) * np.array([math.cos(ang), math.sin(ang)])
        if points_in_polygon(cand, poly):
            com_xy = cand
            break
    com_z = height * rng.uniform(0.3, 0.7)
    com = tuple(float(c) for c in _snap([com_xy[0], com_xy[1], com_z]))

    obj = ObjectModel(
        object_id=f"{family}-{int(seed)}",
        footprint=tuple((float(x), float(y)) for x, y in poly),
        height=height,
        com=com,
        material=MaterialProps(
            mass=mass, friction_mu=mu, stiffness=stiffness, texture_amplitude=texture, albedo=albedo
        ),
    )
    return obj


def object_set(seed: int, count: int, families: Sequence[str] = FAMILIES) -> list[ObjectModel]:
    """``count`` objects cycling through ``families``, seeded from ``seed``."""
    return [generate_object(seed * 100_003 + i, families[i % len(families)]) for i in range(count)]


# --- placement ------------------------------------------------------------------------


def _fits_at_some_rotation(poly: np.ndarray, table: Table, steps: int = 360) -> bool:
    for th in np.linspace(0, np.pi, steps, endpoint=False):
        p = poly @ rotation(th).T
        span = p.max(axis=0) - p.min(axis=0)
        if span[0] < table.width and span[1] < table.depth:
            return True
    return False


def place_object(obj: ObjectModel, seed: int, table: Table | None = None, max_tries: int = 100_000) -> Scene:
    """Rejection-sample a uniformly random pose with the footprint strictly inside ``table``."""
    table = table or Table()
    poly = obj.vertices
    if not _fits_at_some_rotation(poly, table):
        raise PlacementImpossible(f"{obj.object_id} cannot fit on a {table.width}x{table.depth} mm table")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x9E7A])
    for _ in range(max_tries):
        th = rng.uniform(0, 2 * np.pi)
        x = rng.uniform(table.xmin, table.xmax)
        y = rng.uniform(table.ymin, table.ymax)
        if table.contains(poly @ rotation(th).T + np.array([x, y])):
            return Scene(obj, (float(x), float(y), float(th)), table)
    raise PlacementImpossible(f"no feasible pose for {obj.object_id} after {max_tries} samples")


# --- overhead camera geometry ---------------------------------------------------------


@dataclass(frozen=True)
class CameraModel:
    """Orthographic overhead view of the table; row 0 is the far (+y) edge.

    The view extends ``margin`` mm beyond the placement region on every side so
    a training crop never cuts the object off.
    """

    table: Table = field(default_factory=Table)
    width: int = 72
    height: int = 72
    margin: float = 20.0

    @property
    def extent(self) -> tuple[float, float, float, float]:
        t, m = self.table, self.margin
        return t.xmin - m, t.ymin - m, t.xmax + m, t.ymax + m

    @property
    def pixel_size(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.extent
        return (x1 - x0) / self.width, (y1 - y0) / self.height

    def pixel_centers(self) -> np.ndarray:
        """(height, width, 2) array of table coordinates of every pixel centre."""
        x0, _, _, y1 = self.extent
        sx, sy = self.pixel_size
        xs = x0 + (np.arange(self.width) + 0.5) * sx
        ys = y1 - (np.arange(self.height) + 0.5) * sy
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def project(self, xy) -> np.ndarray:
        """Table point(s) to continuous (row, col) pixel coordinates."""
        xy = np.asarray(xy, dtype=float)
        x0, _, _, y1 = self.extent
        sx, sy = self.pixel_size
        col = (xy[..., 0] - x0) / sx - 0.5
        row = (y1 - xy[..., 1]) / sy - 0.5
        return np.stack([row, col], axis=-1)
