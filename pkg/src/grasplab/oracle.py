"""Ground-truth grasp physics and the cylinder-fit collection policy.

Contacts come from exact polygon clipping of the object footprint by the jaw
strip; the lift outcome is decided by two quasi-static friction inequalities
(vertical slip and rotation about the grasp axis).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .frames import SensorFrame
from .world import FORCE_RANGE, G, CameraModel, GraspParams, Scene, clip_halfplane

PATCH_MIN = 2.0  # mm, total patch length below which a closure counts as empty
NOISE_SIGMA = 0.08
DEPTH_EPSILON = 1.0  # mm
FAILURE_MODES = ("none", "empty_grasp", "vertical_slip", "rotational_slip")


class InconsistentContacts(ValueError):
    pass


class NoObjectVisible(ValueError):
    pass


@dataclass(frozen=True)
class JawGeometry:
    width: float = 24.0  # along the jaw face, matches the gel's 24 mm side
    finger_height: float = 18.0
    thickness: float = 14.0
    penetration_max: float = 5.0

    def key(self) -> str:
        return f"{self.width!r}|{self.finger_height!r}|{self.thickness!r}|{self.penetration_max!r}"


@dataclass(frozen=True)
class ContactPatch:
    """Contact of one jaw.

    ``segment`` is the (lo, hi) interval along the jaw width in jaw coordinates
    (the grasp frame's lateral axis), ``z_interval`` the vertical extent of the
    contact relative to the jaw centre line.
    """

    jaw: str
    segment: tuple[float, float]
    z_interval: tuple[float, float]
    penetration: float
    centroid_world: tuple[float, float, float]
    face_offset: float  # closure-axis coordinate of the jaw face

    @property
    def length(self) -> float:
        return self.segment[1] - self.segment[0]

    @property
    def center(self) -> float:
        return 0.5 * (self.segment[0] + self.segment[1])


@dataclass(frozen=True)
class ContactSet:
    left: ContactPatch | None
    right: ContactPatch | None
    grasp_axis: tuple[float, float]
    jaw: JawGeometry
    checksum: str
    # object cross-section inside the jaw strip, grasp coordinates (u along closure, v lateral)
    section: tuple[tuple[float, float], ...] = ()

    @property
    def empty(self) -> bool:
        return self.left is None or self.right is None

    def total_length(self) -> float:
        return sum(p.length for p in (self.left, self.right) if p is not None)


@dataclass(frozen=True)
class GraspOutcome:
    success: bool
    failure_mode: str
    margin: float

    def __post_init__(self):
        if self.failure_mode not in FAILURE_MODES:
            raise ValueError(f"unknown failure mode {self.failure_mode!r}")
        if self.success != (self.failure_mode == "none") or self.success != (self.margin > 1):
            raise ValueError(f"inconsistent outcome {self}")


@dataclass(frozen=True)
class CylinderEstimate:
    center_xy: tuple[float, float]
    radius: float
    top_z: float


def _checksum(scene: Scene, params: GraspParams, jaw: JawGeometry) -> str:
    blob = f"{scene.key()}#{params.key()}#{jaw.key()}".encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def grasp_frame(params: GraspParams) -> tuple[np.ndarray, np.ndarray]:
    """Closure axis (left jaw -> right jaw) and lateral axis along the jaw faces."""
    a = np.array([math.cos(params.phi), math.sin(params.phi)])
    n = np.array([-a[1], a[0]])
    return a, n


def to_grasp_frame(pts: np.ndarray, params: GraspParams) -> np.ndarray:
    a, n = grasp_frame(params)
    d = np.asarray(pts, dtype=float) - np.array([params.ee_x, params.ee_y])
    return np.stack([d @ a, d @ n], axis=-1)


def penetration_depth(force: float, stiffness: float, jaw: JawGeometry) -> float:
    return float(np.clip(force / (2.0 * stiffness), 0.0, jaw.penetration_max))


def jaw_strip_section(scene: Scene, params: GraspParams, jaw: JawGeometry) -> np.ndarray:
    """Object cross-section at the jaw plane, in grasp coordinates, clipped to the jaw strip."""
    if scene.object is None or params.ee_z >= scene.object.height:
        return np.zeros((0, 2))
    local = to_grasp_frame(scene.world_footprint(), params)
    half = jaw.width / 2
    strip = clip_halfplane(clip_halfplane(local, (0.0, 1.0), half), (0.0, -1.0), half)
    if len(strip) < 3:
        return np.zeros((0, 2))
    x, y = strip[:, 0], strip[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    if area <= 1e-9:
        return np.zeros((0, 2))
    return strip


def compute_contacts(scene: Scene, params: GraspParams, jaw: JawGeometry | None = None) -> ContactSet:
    """Close both jaws on the object and return the resulting contact patches."""
    jaw = jaw or JawGeometry()
    a, n = grasp_frame(params)
    checksum = _checksum(scene, params, jaw)
    section = jaw_strip_section(scene, params, jaw)
    if len(section) == 0:
        return ContactSet(None, None, (float(a[0]), float(a[1])), jaw, checksum)

    obj = scene.object
    pen = penetration_depth(params.force, obj.material.stiffness, jaw)
    z_lo = max(0.0, params.ee_z - jaw.finger_height / 2) - params.ee_z
    z_hi = min(obj.height, params.ee_z + jaw.finger_height / 2) - params.ee_z
    ee = np.array([params.ee_x, params.ee_y])

    patches = {}
    for name, sign in (("left", -1.0), ("right", 1.0)):
        # the jaw face rests on the extreme point of the section along its closing direction
        face = float(np.max(sign * section[:, 0]))
        region = clip_halfplane(section, (-sign, 0.0), -(face - pen))
        v = region[:, 1] if len(region) else section[np.argmax(sign * section[:, 0]), 1:2]
        seg = (float(v.min()), float(v.max()))
        vc = 0.5 * (seg[0] + seg[1])
        xy = ee + sign * face * a + vc * n
        patches[name] = ContactPatch(
            jaw=name,
            segment=seg,
            z_interval=(z_lo, z_hi),
            penetration=pen,
            centroid_world=(float(xy[0]), float(xy[1]), params.ee_z + 0.5 * (z_lo + z_hi)),
            face_offset=sign * face,
        )
    return ContactSet(
        patches["left"],
        patches["right"],
        (float(a[0]), float(a[1])),
        jaw,
        checksum,
        tuple((float(u), float(v)) for u, v in section),
    )


def slip_ratios(mass, mu, force, half_length, lever, eps_v=1.0, eps_r=1.0) -> tuple[float, float]:
    """Capacity/demand ratios for vertical slip and rotational slip."""
    weight = mass * G
    vertical = 2.0 * mu * force * eps_v / weight
    torque = weight * lever
    rotational = math.inf if torque == 0 else mu * force * (half_length / 3.0) * eps_r / torque
    return vertical, rotational


def lift_outcome(
    scene: Scene,
    params: GraspParams,
    contacts: ContactSet,
    noise_seed: int = 0,
    noise: bool = True,
) -> GraspOutcome:
    """Decide whether the object stays in the gripper after lifting."""
    if contacts.checksum != _checksum(scene, params, contacts.jaw):
        raise InconsistentContacts("contacts were computed for a different scene or grasp")
    if contacts.empty or contacts.total_length() < PATCH_MIN:
        return GraspOutcome(False, "empty_grasp", 0.0)

    obj = scene.object
    m = obj.material
    if noise:
        eps_v, eps_r = np.exp(NOISE_SIGMA * np.random.default_rng([int(noise_seed) & 0xFFFFFFFF, 0x5EED]).standard_normal(2))
    else:
        eps_v = eps_r = 1.0
    half_length = 0.5 * (contacts.left.length / 2 + contacts.right.length / 2)
    # the grasp axis is the closure line through the end effector, v = 0 in grasp coordinates
    lever = abs(float(to_grasp_frame(scene.world_com()[:2], params)[1]))

    vertical, rotational = slip_ratios(m.mass, m.friction_mu, params.force, half_length, lever, eps_v, eps_r)
    margin = min(vertical, rotational)
    if margin > 1:
        return GraspOutcome(True, "none", float(margin))
    mode = "vertical_slip" if vertical <= rotational else "rotational_slip"
    return GraspOutcome(False, mode, float(margin))


def fit_cylinder(depth: SensorFrame, camera: CameraModel | None = None) -> CylinderEstimate:
    """Fit a rough cylinder to the above-table pixels of an overhead depth frame."""
    camera = camera or CameraModel()
    if depth.kind != "depth":
        raise ValueError(f"fit_cylinder needs a depth frame, got {depth.kind}")
    d = depth.data
    mask = d > DEPTH_EPSILON
    if not mask.any():
        raise NoObjectVisible("no pixel rises above the table")
    pts = camera.pixel_centers()[mask]
    center = pts.mean(axis=0)
    radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
    return CylinderEstimate((float(center[0]), float(center[1])), max(radius, 1e-6), float(d[mask].max()))


def collection_policy(
    cyl: CylinderEstimate,
    seed: int,
    force_range: tuple[float, float] = FORCE_RANGE,
    xy_sigma: float = 10.0,
    z_min: float = 5.0,
) -> GraspParams:
    """Hand-engineered grasp proposal: jittered cylinder centre, random height, angle and force."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0xC011])
    while True:
        off = rng.normal(0.0, xy_sigma, size=2)
        if np.hypot(*off) <= 2 * xy_sigma:
            break
    z = rng.uniform(z_min, max(z_min, cyl.top_z))
    phi = rng.uniform(0.0, math.pi)
    force = rng.uniform(*force_range)
    return GraspParams(
        ee_x=float(cyl.center_xy[0] + off[0]),
        ee_y=float(cyl.center_xy[1] + off[1]),
        ee_z=float(z),
        phi=float(phi),
        force=float(force),
    )
