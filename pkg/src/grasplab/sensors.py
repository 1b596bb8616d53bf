"""Synthetic camera, depth and GelSight-style tactile images.

The camera is an orthographic overhead view of the table.  Tactile images are
rendered photometrically: an indentation heightmap on the jaw face is smoothed
by the membrane, and its surface normals are shaded by three coloured
directional lights.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .frames import SensorFrame, ShapeMismatch
from .oracle import ContactSet, JawGeometry, jaw_strip_section, to_grasp_frame
from .world import CameraModel, GraspParams, ObjectModel, Scene, points_in_polygon

TABLE_RGB = (0.52, 0.47, 0.42)
JAW_RGB = (0.30, 0.34, 0.42)
FINGER_LENGTH = 60.0  # mm above the jaw centre line seen by the overhead depth camera

TACTILE_SHAPE = (54, 72)  # rows (vertical, 18 mm) x cols (along the jaw, 24 mm)
PX_PER_MM = 3.0


# --- overhead camera ------------------------------------------------------------------


def _jaw_masks(scene: Scene, params: GraspParams, camera: CameraModel, jaw: JawGeometry):
    """Pixel masks of the closed left and right jaws."""
    section = jaw_strip_section(scene, params, jaw)
    if len(section):
        faces = (float(section[:, 0].min()), float(section[:, 0].max()))
    else:
        faces = (0.0, 0.0)  # nothing between the fingers: fully closed
    uv = to_grasp_frame(camera.pixel_centers(), params)
    u, v = uv[..., 0], uv[..., 1]
    lateral = np.abs(v) <= jaw.width / 2
    left = lateral & (u <= faces[0]) & (u >= faces[0] - jaw.thickness)
    right = lateral & (u >= faces[1]) & (u <= faces[1] + jaw.thickness)
    return left | right


def _object_mask(scene: Scene, camera: CameraModel) -> np.ndarray:
    if scene.object is None:
        return np.zeros((camera.height, camera.width), dtype=bool)
    return points_in_polygon(camera.pixel_centers(), scene.world_footprint())


def render_camera(
    scene: Scene,
    gripper: GraspParams | None = None,
    tag: str = "Tb",
    camera: CameraModel | None = None,
    jaw: JawGeometry | None = None,
) -> SensorFrame:
    camera = camera or CameraModel(scene.table)
    jaw = jaw or JawGeometry()
    img = np.empty((camera.height, camera.width, 3))
    img[...] = TABLE_RGB
    if scene.object is not None:
        obj = scene.object
        shade = 0.55 + 0.45 * min(obj.height / 120.0, 1.0)
        img[_object_mask(scene, camera)] = np.array(obj.material.albedo) * shade
    if gripper is not None:
        # lower jaws render darker
        level = 0.35 + 0.65 * min(gripper.ee_z / 120.0, 1.0)
        img[_jaw_masks(scene, gripper, camera, jaw)] = np.array(JAW_RGB) * level
    return SensorFrame.from_values("rgb", img, tag)


def render_depth(
    scene: Scene,
    gripper: GraspParams | None = None,
    tag: str = "Tb",
    camera: CameraModel | None = None,
    jaw: JawGeometry | None = None,
) -> SensorFrame:
    """Per-pixel height above the table in mm."""
    camera = camera or CameraModel(scene.table)
    jaw = jaw or JawGeometry()
    depth = np.zeros((camera.height, camera.width))
    if scene.object is not None:
        depth[_object_mask(scene, camera)] = scene.object.height
    if gripper is not None:
        depth[_jaw_masks(scene, gripper, camera, jaw)] = gripper.ee_z + FINGER_LENGTH
    return SensorFrame.from_values("depth", depth, tag)


# --- tactile --------------------------------------------------------------------------


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _default_lights():
    elev = math.radians(35)
    return tuple(
        tuple(_unit([math.cos(az) * math.cos(elev), math.sin(az) * math.cos(elev), math.sin(elev)]))
        for az in (math.radians(90), math.radians(210), math.radians(330))
    )


@dataclass(frozen=True)
class GelConfig:
    resolution: tuple[int, int] = TACTILE_SHAPE
    gel_sigma: float = 0.4  # mm
    light_dirs: tuple = field(default_factory=_default_lights)
    base_level: tuple[float, float, float] = (0.45, 0.45, 0.45)
    k_shade: float = 1.2
    vignette: float = 0.18

    def __post_init__(self):
        if not self.gel_sigma > 0:
            raise ValueError("gel_sigma must be positive")
        for d in self.light_dirs:
            if abs(np.linalg.norm(d) - 1) > 1e-9:
                raise ValueError(f"light direction {d} is not unit length")

    @classmethod
    def for_sensor(cls, jaw: str, seed: int = 0) -> "GelConfig":
        """Slightly different gel and lighting per physical sensor."""
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0 if jaw == "left" else 1, 0x6E1])
        elev = math.radians(35) + rng.normal(0, math.radians(3))
        az0 = math.radians(90) + rng.normal(0, math.radians(8))
        lights = tuple(
            tuple(_unit([math.cos(az) * math.cos(elev), math.sin(az) * math.cos(elev), math.sin(elev)]))
            for az in (az0, az0 + 2 * math.pi / 3, az0 + 4 * math.pi / 3)
        )
        base = tuple(float(b) for b in np.clip(0.45 + rng.normal(0, 0.03, size=3), 0.3, 0.6))
        return cls(light_dirs=lights, base_level=base, gel_sigma=float(0.4 + rng.uniform(-0.05, 0.05)))


def gel_base(gel: GelConfig) -> np.ndarray:
    """Unloaded gel image: tinted base level darkening towards the gel border."""
    h, w = gel.resolution
    yy, xx = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    falloff = 1.0 - gel.vignette * (xx**2 + yy**2) / 2
    return np.clip(np.array(gel.base_level)[None, None, :] * falloff[..., None], 0, 1)


def base_frame(gel: GelConfig, tag: str = "Ta") -> SensorFrame:
    return SensorFrame.from_values("tactile", gel_base(gel), tag)


def _texture_phase(object_id: str) -> tuple[float, float, float]:
    h = hashlib.sha256(object_id.encode()).digest()
    rng = np.random.default_rng(list(h[:8]))
    return float(rng.uniform(0, 2 * np.pi)), float(rng.uniform(0, 2 * np.pi)), float(rng.uniform(1.2, 2.0))


def _surface_profile(section: np.ndarray, sign: float, v: np.ndarray) -> np.ndarray:
    """Extreme closure-axis coordinate of ``section`` on each lateral line v = const."""
    p = section
    q = np.roll(section, -1, axis=0)
    v0, v1 = p[:, 1][None], q[:, 1][None]
    u0, u1 = p[:, 0][None], q[:, 0][None]
    vv = v[:, None]
    lo, hi = np.minimum(v0, v1), np.maximum(v0, v1)
    hit = (vv >= lo) & (vv <= hi) & (hi > lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (vv - v0) / (v1 - v0)
    u = u0 + t * (u1 - u0)
    u = np.where(hit, sign * u, -np.inf)
    return u.max(axis=1)


def indentation_map(contacts: ContactSet, jaw_name: str, obj: ObjectModel, gel: GelConfig) -> np.ndarray:
    """Gel indentation depth (mm) on the sensor grid, before membrane smoothing."""
    h, w = gel.resolution
    patch = contacts.left if jaw_name == "left" else contacts.right
    if patch is None or patch.penetration <= 0:
        return np.zeros((h, w))
    sign = -1.0 if jaw_name == "left" else 1.0
    width_mm, height_mm = w / PX_PER_MM, h / PX_PER_MM
    v = (np.arange(w) + 0.5) / PX_PER_MM - width_mm / 2
    if jaw_name == "left":
        v = -v  # the left gel faces the opposite way
    z = height_mm / 2 - (np.arange(h) + 0.5) / PX_PER_MM

    section = np.array(contacts.section)
    face = sign * patch.face_offset
    gap = face - _surface_profile(section, sign, v)
    ind = np.clip(patch.penetration - gap, 0.0, None)

    zmask = (z >= patch.z_interval[0]) & (z <= patch.z_interval[1])
    depth = ind[None, :] * zmask[:, None]

    p1, p2, lam = _texture_phase(obj.object_id)
    amp = obj.material.texture_amplitude
    vv, zz = np.meshgrid(v, z)
    bumps = np.sin(2 * np.pi * vv / lam + p1) * np.sin(2 * np.pi * zz / lam + p2)
    engage = depth / (depth + 0.2)
    return np.where(depth > 0, np.clip(depth + amp * engage * bumps, 0.0, None), 0.0)


def shade_heightmap(height: np.ndarray, gel: GelConfig) -> np.ndarray:
    """Photometric response of the smoothed gel surface, in [0, 1]."""
    smooth = gaussian_filter(height, gel.gel_sigma * PX_PER_MM, mode="constant")
    gz_row, gz_col = np.gradient(smooth, 1.0 / PX_PER_MM)
    # image rows run downward; the surface is pressed into the gel (towards the camera)
    nx, ny = -gz_col, gz_row
    norm = np.sqrt(nx**2 + ny**2 + 1.0)
    normal = np.stack([nx / norm, ny / norm, 1.0 / norm], axis=-1)
    lights = np.array(gel.light_dirs)
    response = np.maximum(normal @ lights.T, 0.0) - np.maximum(lights[:, 2], 0.0)
    return np.clip(gel_base(gel) + gel.k_shade * response, 0.0, 1.0)


def render_tactile(
    contacts: ContactSet,
    jaw: str,
    obj: ObjectModel,
    params: GraspParams,
    gel: GelConfig,
    tag: str = "Tb",
) -> SensorFrame:
    """Tactile image of one gel given the closed-gripper contacts.

    ``params`` is accepted for interface symmetry with the other renderers; the
    contact set already carries everything the gel sees.
    """
    if jaw not in ("left", "right"):
        raise ValueError(f"jaw must be 'left' or 'right', got {jaw!r}")
    patch = contacts.left if jaw == "left" else contacts.right
    if patch is None:
        return SensorFrame.from_values("tactile", gel_base(gel), tag)
    height = indentation_map(contacts, jaw, obj, gel)
    return SensorFrame.from_values("tactile", shade_heightmap(height, gel), tag)


# --- temporal difference --------------------------------------------------------------


def temporal_difference(frame_b, frame_a) -> np.ndarray:
    """``frame_b - frame_a`` mapped affinely from [-1, 1] to [0, 1]; 0.5 means no change."""
    b = frame_b.data if isinstance(frame_b, SensorFrame) else np.asarray(frame_b, dtype=float)
    a = frame_a.data if isinstance(frame_a, SensorFrame) else np.asarray(frame_a, dtype=float)
    if isinstance(frame_b, SensorFrame) and isinstance(frame_a, SensorFrame) and frame_a.kind != frame_b.kind:
        raise ShapeMismatch(f"cannot difference {frame_b.kind} and {frame_a.kind} frames")
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {b.shape} vs {a.shape}")
    return (b - a + 1.0) / 2.0
