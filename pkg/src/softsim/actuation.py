"""Action spaces and kinematic actuators (pickers and cups).

Normalized actions live in [-1, 1]^k and map affinely onto per-dimension
bounds.  Pickers are kinematic spheres that move by a position delta and
grab/release the nearest cloth or rope particle with a pick flag.  Cups are
kinematic five-box rigs driven by pose increments; their walls carry the rig
velocity so contacting fluid is dragged along.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import CupSpec, cup_world_boxes
from .pbd import GROUP_CLOTH, GROUP_ROPE, Attachment, Scene, SimConfig

__all__ = [
    "ActionSpaceSpec",
    "denormalize",
    "CupRig",
    "move_picker",
    "update_picker_grab",
    "apply_picker",
    "WORKSPACE_LOW",
    "WORKSPACE_HIGH",
    "DROP_MIN_HEIGHT",
]

# Pickers and cups are confined to this box; Drop tasks additionally keep
# pickers above a floor threshold so the cloth must be dropped, not placed.
WORKSPACE_LOW = np.array([-1.5, 0.0, -1.5])
WORKSPACE_HIGH = np.array([1.5, 1.5, 1.5])
DROP_MIN_HEIGHT = 0.12

PICKER_DELTA = 0.01
CUP1D_DELTA = 0.011
CUP3D_DXY = 0.01
CUP3D_DTHETA = 0.015


@dataclass(frozen=True)
class ActionSpaceSpec:
    """Per-dimension bounds of one task's raw action vector."""

    kind: str
    low: tuple
    high: tuple

    def __post_init__(self):
        if len(self.low) != len(self.high):
            raise ValueError("low/high must have equal length")
        for lo, hi in zip(self.low, self.high):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("bounds must be finite with low < high")

    @property
    def dimension(self) -> int:
        return len(self.low)

    @classmethod
    def cup_1d(cls) -> "ActionSpaceSpec":
        return cls("Cup1D", (-CUP1D_DELTA,), (CUP1D_DELTA,))

    @classmethod
    def cup_3d(cls) -> "ActionSpaceSpec":
        return cls(
            "Cup3D",
            (-CUP3D_DXY, -CUP3D_DXY, -CUP3D_DTHETA),
            (CUP3D_DXY, CUP3D_DXY, CUP3D_DTHETA),
        )

    @classmethod
    def pickers(cls, n: int) -> "ActionSpaceSpec":
        low = (-PICKER_DELTA, -PICKER_DELTA, -PICKER_DELTA, 0.0) * n
        high = (PICKER_DELTA, PICKER_DELTA, PICKER_DELTA, 1.0) * n
        return cls("Pickers", low, high)

    @property
    def n_pickers(self) -> int:
        if self.kind != "Pickers":
            raise ValueError("not a picker action space")
        return self.dimension // 4


def denormalize(spec: ActionSpaceSpec, a_norm) -> np.ndarray:
    """Map [-1, 1]^k onto the raw bounds; out-of-range input clamps first.

    The convex-combination form maps the endpoints exactly: -1 -> low,
    +1 -> high, 0 -> the midpoint.
    """
    a = np.asarray(a_norm, dtype=np.float64)
    if a.shape != (spec.dimension,):
        raise ValueError(f"action must have shape ({spec.dimension},), got {a.shape}")
    a = np.clip(a, -1.0, 1.0)
    low = np.asarray(spec.low, dtype=np.float64)
    high = np.asarray(spec.high, dtype=np.float64)
    return 0.5 * (1.0 - a) * low + 0.5 * (1.0 + a) * high


# ------------------------------------------------------------------- pickers

GRABBABLE_GROUPS = (GROUP_CLOTH, GROUP_ROPE)


def grab_range(picker_radius: float, cfg: SimConfig) -> float:
    """Sphere-contact distance: picker surface touching particle surface."""
    return picker_radius + cfg.particle_radius


def move_picker(picker, delta, min_height: float = 0.0) -> None:
    """Displace a picker, clamped to the workspace and the height floor."""
    target = picker.position + np.asarray(delta, dtype=np.float64)
    low = WORKSPACE_LOW.copy()
    low[1] = max(low[1], min_height)
    np.clip(target, low, WORKSPACE_HIGH, out=target)
    picker.position[:] = target


def _attachment_index(scene: Scene, picker_index: int):
    for k, att in enumerate(scene.attachments):
        if att.picker == picker_index:
            return k
    return None


def update_picker_grab(scene: Scene, picker_index: int, p: float, cfg: SimConfig) -> None:
    """Apply the pick flag: attach the nearest grabbable particle in range
    when p >= 0.5, release when p < 0.5.  Release only removes the
    attachment; the particle itself is not touched."""
    existing = _attachment_index(scene, picker_index)
    if p < 0.5:
        if existing is not None:
            scene.attachments.pop(existing)
        return
    if existing is not None:
        return
    picker = scene.pickers[picker_index]
    groups = scene.particles.groups
    mask = (groups == GROUP_CLOTH) | (groups == GROUP_ROPE)
    if not mask.any():
        return
    candidates = np.flatnonzero(mask)
    d = np.linalg.norm(scene.particles.positions[candidates] - picker.position, axis=1)
    best = int(np.argmin(d))  # ties resolve to the lowest particle index
    if d[best] <= grab_range(picker.radius, cfg):
        particle = int(candidates[best])
        offset = scene.particles.positions[particle] - picker.position
        scene.attachments.append(Attachment(picker=picker_index, particle=particle, offset=offset))


def apply_picker(scene: Scene, picker_index: int, raw, cfg: SimConfig, min_height: float = 0.0):
    """One substep of picker actuation: move by (dx, dy, dz), then apply the
    pick flag p."""
    raw = np.asarray(raw, dtype=np.float64)
    move_picker(scene.pickers[picker_index], raw[:3], min_height=min_height)
    update_picker_grab(scene, picker_index, float(raw[3]), cfg)


# ---------------------------------------------------------------------- cups


class CupRig:
    """A cup whose five boxes occupy a contiguous slice of the collider set.

    The pose is (x, y, tilt); move() rigidly re-poses the boxes and gives the
    walls the rig velocity so collision resolution drags contacting fluid.
    """

    def __init__(self, spec: CupSpec, first_box: int, pose=None):
        self.spec = spec
        self.first_box = first_box
        self.pose = np.array(pose if pose is not None else spec.pose, dtype=np.float64)

    def sync(self, colliders, velocity=(0.0, 0.0, 0.0)) -> None:
        boxes = cup_world_boxes(self.spec, tuple(self.pose))
        for k, (center, rot, _half) in enumerate(boxes):
            colliders.set_box_pose(self.first_box + k, center, rot, velocity)

    def move(self, colliders, delta, dt: float) -> None:
        """Increment the pose by (dx, dy, dtheta) over one substep of dt."""
        delta = np.asarray(delta, dtype=np.float64)
        old_centers = [
            colliders.box_center[self.first_box + k].copy() for k in range(5)
        ]
        self.pose += delta
        self.pose[0] = np.clip(self.pose[0], WORKSPACE_LOW[0], WORKSPACE_HIGH[0])
        self.pose[1] = np.clip(self.pose[1], WORKSPACE_LOW[1], WORKSPACE_HIGH[1])
        boxes = cup_world_boxes(self.spec, tuple(self.pose))
        for k, (center, rot, _half) in enumerate(boxes):
            vel = (center - old_centers[k]) / dt
            colliders.set_box_pose(self.first_box + k, center, rot, vel)

    def rest(self, colliders) -> None:
        """Zero the wall velocities (call when the cup stops being driven)."""
        for k in range(5):
            colliders.box_vel[self.first_box + k] = 0.0
