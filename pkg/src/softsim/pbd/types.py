"""State containers for the position-based particle simulator.

Particles are stored structure-of-arrays (float64) so the solver kernels can
run over flat memory.  Constraints and colliders have small dataclass forms
for construction and inspection plus packed array forms for the hot loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GROUP_NONE",
    "GROUP_FLUID",
    "GROUP_CLOTH",
    "GROUP_ROPE",
    "SimConfig",
    "ParticleSet",
    "DistanceConstraint",
    "DistanceSet",
    "DensityConstraint",
    "Attachment",
    "HalfSpace",
    "Box",
    "ColliderSet",
    "Picker",
    "Scene",
    "NonFiniteStateError",
    "yaw_matrix",
    "tilt_matrix",
]

# Particle group tags.  Self-collision applies within cloth and rope groups;
# the density constraint applies to the fluid group; pickers only grab
# cloth/rope particles.
GROUP_NONE = 0
GROUP_FLUID = 1
GROUP_CLOTH = 2
GROUP_ROPE = 3


class NonFiniteStateError(ValueError):
    """Raised when particle state contains NaN or infinity."""


@dataclass(frozen=True)
class SimConfig:
    """Solver parameters shared by one scene.

    particle_radius is both the collider clearance and half the self-collision
    separation.  fluid_rest_distance is the lattice pitch fluids are built at;
    the density kernel support is kernel_scale times that pitch.
    """

    dt: float = 0.01
    gravity: tuple[float, float, float] = (0.0, -9.8, 0.0)
    solver_iterations: int = 40
    particle_radius: float = 0.0125
    fluid_rest_distance: float = 0.025
    kernel_scale: float = 2.0

    @property
    def kernel_radius(self) -> float:
        return self.kernel_scale * self.fluid_rest_distance


class ParticleSet:
    """Positions, velocities, inverse masses and group tags (SoA, float64)."""

    __slots__ = ("positions", "velocities", "inv_masses", "groups")

    def __init__(self, positions, velocities, inv_masses, groups):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.velocities = np.ascontiguousarray(velocities, dtype=np.float64)
        self.inv_masses = np.ascontiguousarray(inv_masses, dtype=np.float64)
        self.groups = np.ascontiguousarray(groups, dtype=np.int32)

    @classmethod
    def from_positions(cls, positions, mass: float = 1.0, group: int = GROUP_NONE):
        positions = np.asarray(positions, dtype=np.float64)
        n = positions.shape[0]
        inv = 0.0 if mass == 0.0 else 1.0 / mass
        return cls(
            positions,
            np.zeros((n, 3)),
            np.full(n, inv),
            np.full(n, group, dtype=np.int32),
        )

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def validate(self) -> None:
        n = self.count
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ValueError("particle arrays must be (n, 3)")
        if self.inv_masses.shape != (n,) or self.groups.shape != (n,):
            raise ValueError("inv_masses/groups must be (n,)")
        if not (np.isfinite(self.positions).all() and np.isfinite(self.velocities).all()):
            raise NonFiniteStateError("non-finite state")
        if not np.isfinite(self.inv_masses).all() or (self.inv_masses < 0).any():
            raise ValueError("inverse masses must be finite and >= 0")

    def copy(self) -> "ParticleSet":
        return ParticleSet(
            self.positions.copy(),
            self.velocities.copy(),
            self.inv_masses.copy(),
            self.groups.copy(),
        )


@dataclass
class DistanceConstraint:
    """Keep particles i and j at rest_length (kind: "stretch" or "bend")."""

    i: int
    j: int
    rest_length: float
    stiffness: float = 1.0
    kind: str = "stretch"


class DistanceSet:
    """Packed distance constraints, projected in storage order (Gauss-Seidel)."""

    __slots__ = ("i", "j", "rest", "stiffness", "kind")

    KIND_STRETCH = 0
    KIND_BEND = 1

    def __init__(self, i, j, rest, stiffness, kind):
        self.i = np.ascontiguousarray(i, dtype=np.int64)
        self.j = np.ascontiguousarray(j, dtype=np.int64)
        self.rest = np.ascontiguousarray(rest, dtype=np.float64)
        self.stiffness = np.ascontiguousarray(stiffness, dtype=np.float64)
        self.kind = np.ascontiguousarray(kind, dtype=np.uint8)

    @classmethod
    def empty(cls) -> "DistanceSet":
        z = np.zeros(0)
        return cls(z, z, z, z, z)

    @classmethod
    def from_list(cls, constraints) -> "DistanceSet":
        if not constraints:
            return cls.empty()
        kind_codes = {"stretch": cls.KIND_STRETCH, "bend": cls.KIND_BEND}
        return cls(
            [c.i for c in constraints],
            [c.j for c in constraints],
            [c.rest_length for c in constraints],
            [c.stiffness for c in constraints],
            [kind_codes[c.kind] for c in constraints],
        )

    def to_list(self) -> list[DistanceConstraint]:
        names = {self.KIND_STRETCH: "stretch", self.KIND_BEND: "bend"}
        return [
            DistanceConstraint(int(i), int(j), float(r), float(s), names[int(k)])
            for i, j, r, s, k in zip(self.i, self.j, self.rest, self.stiffness, self.kind)
        ]

    def __len__(self) -> int:
        return self.i.shape[0]

    def copy(self) -> "DistanceSet":
        return DistanceSet(
            self.i.copy(), self.j.copy(), self.rest.copy(), self.stiffness.copy(), self.kind.copy()
        )


@dataclass
class DensityConstraint:
    """PBF density constraint over one particle group (unit particle mass)."""

    rest_density: float
    kernel_radius: float
    group: int = GROUP_FLUID
    relaxation: float = 100.0  # CFM epsilon added to the lambda denominator

    def copy(self) -> "DensityConstraint":
        return DensityConstraint(self.rest_density, self.kernel_radius, self.group, self.relaxation)


@dataclass
class Attachment:
    """Pin particle to picker at the offset captured when it was grabbed."""

    picker: int
    particle: int
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "Attachment":
        return Attachment(self.picker, self.particle, np.array(self.offset, dtype=np.float64))


def yaw_matrix(theta: float) -> np.ndarray:
    """Rotation about the vertical (y) axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def tilt_matrix(phi: float) -> np.ndarray:
    """Rotation about the z axis (the pouring tilt, in the xy motion plane)."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class HalfSpace:
    """Solid region {x : normal . x <= offset}; particles stay outside."""

    normal: tuple[float, float, float] = (0.0, 1.0, 0.0)
    offset: float = 0.0
    friction: float = 0.5


@dataclass
class Box:
    """Oriented box collider.

    Built from a vertical-axis yaw in scene layouts; actuated cups additionally
    tilt about the z axis, so the packed form stores the full rotation matrix.
    """

    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float = 0.0
    friction: float = 0.5
    rotation: np.ndarray | None = None  # overrides yaw when present
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def rotation_matrix(self) -> np.ndarray:
        if self.rotation is not None:
            return np.asarray(self.rotation, dtype=np.float64)
        return yaw_matrix(self.yaw)

    def corners(self) -> np.ndarray:
        """World positions of the 8 box corners."""
        rot = self.rotation_matrix()
        he = np.asarray(self.half_extents, dtype=np.float64)
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64
        )
        return np.asarray(self.center, dtype=np.float64) + (signs * he) @ rot.T


class ColliderSet:
    """Packed colliders: half-spaces plus oriented boxes.

    Box poses can be updated in place (set_box_pose) so actuated cups do not
    re-pack every substep.
    """

    __slots__ = (
        "hs_normal",
        "hs_offset",
        "hs_friction",
        "box_center",
        "box_half",
        "box_rot",
        "box_vel",
        "box_friction",
    )

    def __init__(self, halfspaces=(), boxes=()):
        halfspaces = list(halfspaces)
        boxes = list(boxes)
        nh, nb = len(halfspaces), len(boxes)
        self.hs_normal = np.zeros((nh, 3))
        self.hs_offset = np.zeros(nh)
        self.hs_friction = np.zeros(nh)
        for k, h in enumerate(halfspaces):
            normal = np.asarray(h.normal, dtype=np.float64)
            norm = np.linalg.norm(normal)
            if not norm > 0:
                raise ValueError("half-space normal must be nonzero")
            self.hs_normal[k] = normal / norm
            self.hs_offset[k] = h.offset
            self.hs_friction[k] = h.friction
        self.box_center = np.zeros((nb, 3))
        self.box_half = np.zeros((nb, 3))
        self.box_rot = np.zeros((nb, 3, 3))
        self.box_vel = np.zeros((nb, 3))
        self.box_friction = np.zeros(nb)
        for k, b in enumerate(boxes):
            self.box_center[k] = b.center
            self.box_half[k] = b.half_extents
            self.box_rot[k] = b.rotation_matrix()
            self.box_vel[k] = b.velocity
            self.box_friction[k] = b.friction

    @property
    def n_halfspaces(self) -> int:
        return self.hs_offset.shape[0]

    @property
    def n_boxes(self) -> int:
        return self.box_friction.shape[0]

    def set_box_pose(self, index: int, center, rotation, velocity) -> None:
        self.box_center[index] = center
        self.box_rot[index] = rotation
        self.box_vel[index] = velocity

    def boxes(self) -> list[Box]:
        return [
            Box(
                center=tuple(self.box_center[k]),
                half_extents=tuple(self.box_half[k]),
                rotation=self.box_rot[k].copy(),
                velocity=tuple(self.box_vel[k]),
                friction=float(self.box_friction[k]),
            )
            for k in range(self.n_boxes)
        ]

    def copy(self) -> "ColliderSet":
        out = ColliderSet()
        out.hs_normal = self.hs_normal.copy()
        out.hs_offset = self.hs_offset.copy()
        out.hs_friction = self.hs_friction.copy()
        out.box_center = self.box_center.copy()
        out.box_half = self.box_half.copy()
        out.box_rot = self.box_rot.copy()
        out.box_vel = self.box_vel.copy()
        out.box_friction = self.box_friction.copy()
        return out


@dataclass
class Picker:
    """Spherical kinematic gripper; attachments live in Scene.attachments."""

    position: np.ndarray
    radius: float = 0.05

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).copy()

    def copy(self) -> "Picker":
        return Picker(self.position.copy(), self.radius)


@dataclass
class Scene:
    """Everything one solve_step touches."""

    particles: ParticleSet
    distance: DistanceSet = field(default_factory=DistanceSet.empty)
    density: DensityConstraint | None = None
    colliders: ColliderSet = field(default_factory=ColliderSet)
    pickers: list[Picker] = field(default_factory=list)
    attachments: list[Attachment] = field(default_factory=list)

    def copy(self) -> "Scene":
        return Scene(
            self.particles.copy(),
            self.distance.copy(),
            self.density.copy() if self.density else None,
            self.colliders.copy(),
            [p.copy() for p in self.pickers],
            [a.copy() for a in self.attachments],
        )
