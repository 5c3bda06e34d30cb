"""Builders for the deformable bodies and containers used by the tasks.

Cloth is a planar particle grid with springs to the 8-neighborhood and bend
constraints across two-step axis pairs.  Rope is a particle chain with i..i+1
stretch and i..i+2 bend constraints.  Fluid blocks are rectangular lattices in
the fluid group.  Cups are five-box open-top containers with an exact inner
cavity; the floor is a half-space.

All builders are pure: the same spec always produces bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pbd import (
    GROUP_CLOTH,
    GROUP_FLUID,
    GROUP_ROPE,
    Box,
    DensityConstraint,
    DistanceSet,
    HalfSpace,
    ParticleSet,
    SimConfig,
    tilt_matrix,
)
from .pbd.solver import lattice_rest_density

__all__ = [
    "ClothSpec",
    "RopeSpec",
    "FluidSpec",
    "CupSpec",
    "build_cloth",
    "build_rope",
    "build_fluid_block",
    "fluid_density_constraint",
    "build_cup",
    "cup_world_boxes",
    "build_floor",
    "straight_polyline",
    "cloth_index",
]

# Wall clearance of a picker grab: see actuation.  Kept here so asset-scale
# defaults stay in one place.
CLOTH_SPACING = 0.0125
ROPE_SPACING = 0.025
ROPE_PARTICLES = 41
ROPE_BEND_STIFFNESS = 0.8
CUP_WALL_THICKNESS = 0.02


@dataclass(frozen=True)
class ClothSpec:
    """Rectangular cloth grid: w x l particles, spacing apart."""

    width_particles: int
    length_particles: int
    spacing: float = CLOTH_SPACING
    mass_per_particle: float = 1.0
    stretch_stiffness: float = 1.0
    bend_stiffness: float = 0.6

    def validate(self) -> None:
        if self.width_particles < 2 or self.length_particles < 2:
            raise ValueError("cloth needs at least 2 particles per axis")
        if not self.spacing > 0:
            raise ValueError("cloth spacing must be positive")


@dataclass(frozen=True)
class RopeSpec:
    """Particle chain: n particles, spacing apart along the chain."""

    n_particles: int = ROPE_PARTICLES
    spacing: float = ROPE_SPACING
    mass_per_particle: float = 1.0
    stiffness: float = 1.0

    def validate(self) -> None:
        if self.n_particles < 2:
            raise ValueError("rope needs at least 2 particles")
        if not self.spacing > 0:
            raise ValueError("rope spacing must be positive")


@dataclass(frozen=True)
class FluidSpec:
    """Rectangular fluid lattice: w_w (x) by h_w (y) by l_w (z) particles."""

    w_w: int
    l_w: int
    h_w: int
    rest_distance: float = 0.025
    mass_per_particle: float = 1.0

    def validate(self) -> None:
        if min(self.w_w, self.l_w, self.h_w) < 1:
            raise ValueError("fluid block needs at least 1 particle per axis")
        if not self.rest_distance > 0:
            raise ValueError("fluid rest distance must be positive")


@dataclass(frozen=True)
class CupSpec:
    """Open-top box container; width/length/height are the inner cavity."""

    width: float
    length: float
    height: float
    wall_thickness: float = CUP_WALL_THICKNESS
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)  # (x, y, tilt)
    friction: float = 0.1

    def validate(self) -> None:
        if min(self.width, self.length, self.height, self.wall_thickness) <= 0:
            raise ValueError("cup dimensions must be positive")


def cloth_index(spec: ClothSpec, i: int, j: int) -> int:
    """Particle index of grid node (i along width/x, j along length/z)."""
    return i * spec.length_particles + j


def build_cloth(spec: ClothSpec, origin=(0.0, 0.0, 0.0)):
    """Planar grid in the xz plane with 8-neighborhood springs.

    Stretch constraints connect each particle to its axis and diagonal
    neighbors (each undirected pair once, rest length = the build-time
    separation).  Bend constraints connect two-step axis-aligned pairs.
    """
    spec.validate()
    w, l, s = spec.width_particles, spec.length_particles, spec.spacing
    origin = np.asarray(origin, dtype=np.float64)

    ii, jj = np.meshgrid(np.arange(w), np.arange(l), indexing="ij")
    pos = np.zeros((w * l, 3))
    pos[:, 0] = ii.ravel() * s
    pos[:, 2] = jj.ravel() * s
    pos += origin
    particles = ParticleSet.from_positions(pos, mass=spec.mass_per_particle, group=GROUP_CLOTH)

    idx = np.arange(w * l).reshape(w, l)
    ai, aj, rest = [], [], []

    def connect(a, b, length):
        ai.append(a.ravel())
        aj.append(b.ravel())
        rest.append(np.full(a.size, length))

    connect(idx[:-1, :], idx[1:, :], s)  # along width
    connect(idx[:, :-1], idx[:, 1:], s)  # along length
    connect(idx[:-1, :-1], idx[1:, 1:], s * math.sqrt(2.0))  # diagonal
    connect(idx[1:, :-1], idx[:-1, 1:], s * math.sqrt(2.0))  # anti-diagonal
    n_stretch = sum(a.size for a in ai)

    connect(idx[:-2, :], idx[2:, :], 2.0 * s)  # bend along width
    connect(idx[:, :-2], idx[:, 2:], 2.0 * s)  # bend along length
    n_total = sum(a.size for a in ai)

    stiffness = np.full(n_total, spec.bend_stiffness)
    stiffness[:n_stretch] = spec.stretch_stiffness
    kind = np.full(n_total, DistanceSet.KIND_BEND, dtype=np.uint8)
    kind[:n_stretch] = DistanceSet.KIND_STRETCH
    constraints = DistanceSet(
        np.concatenate(ai), np.concatenate(aj), np.concatenate(rest), stiffness, kind
    )
    return particles, constraints


def straight_polyline(n: int, spacing: float, origin=(0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0)):
    """n points along a unit direction, spacing apart."""
    origin = np.asarray(origin, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return origin + np.arange(n)[:, None] * spacing * axis


def build_rope(spec: RopeSpec, shape):
    """Chain along a polyline: n-1 stretch constraints at the rest spacing
    plus i..i+2 bend constraints so the chain resists folding at a point."""
    spec.validate()
    shape = np.asarray(shape, dtype=np.float64)
    n = spec.n_particles
    if shape.shape != (n, 3):
        raise ValueError(f"polyline must be ({n}, 3), got {shape.shape}")
    particles = ParticleSet.from_positions(shape, mass=spec.mass_per_particle, group=GROUP_ROPE)

    si = np.arange(n - 1)
    bi = np.arange(n - 2)
    i = np.concatenate([si, bi])
    j = np.concatenate([si + 1, bi + 2])
    rest = np.concatenate([np.full(n - 1, spec.spacing), np.full(n - 2, 2.0 * spec.spacing)])
    stiffness = np.concatenate(
        [np.full(n - 1, spec.stiffness), np.full(n - 2, ROPE_BEND_STIFFNESS)]
    )
    kind = np.concatenate(
        [
            np.full(n - 1, DistanceSet.KIND_STRETCH, dtype=np.uint8),
            np.full(n - 2, DistanceSet.KIND_BEND, dtype=np.uint8),
        ]
    )
    return particles, DistanceSet(i, j, rest, stiffness, kind)


def build_fluid_block(spec: FluidSpec, origin=(0.0, 0.0, 0.0)) -> ParticleSet:
    """w_w * h_w * l_w particles on a lattice with pitch rest_distance.

    Layout order is y (outer), then x, then z, starting at origin and growing
    along +x/+y/+z.
    """
    spec.validate()
    origin = np.asarray(origin, dtype=np.float64)
    d = spec.rest_distance
    kk, ii, jj = np.meshgrid(
        np.arange(spec.h_w), np.arange(spec.w_w), np.arange(spec.l_w), indexing="ij"
    )
    pos = np.zeros((spec.w_w * spec.h_w * spec.l_w, 3))
    pos[:, 0] = ii.ravel() * d
    pos[:, 1] = kk.ravel() * d
    pos[:, 2] = jj.ravel() * d
    pos += origin
    return ParticleSet.from_positions(pos, mass=spec.mass_per_particle, group=GROUP_FLUID)


def fluid_density_constraint(cfg: SimConfig) -> DensityConstraint:
    """Density constraint whose rest density is the config lattice's own
    kernel-summed density, so a resting block is exactly at rest."""
    h = cfg.kernel_radius
    return DensityConstraint(
        rest_density=lattice_rest_density(cfg.fluid_rest_distance, h),
        kernel_radius=h,
    )


def _cup_local_boxes(spec: CupSpec):
    """(center, half_extents) per box in the cup frame.

    Frame: cavity base center at the local origin, cavity spanning
    x in [-w/2, w/2], y in [0, h], z in [-l/2, l/2].  The x walls carry the
    corners; outer footprint is (w + 2t) by (l + 2t).
    """
    w2, l2, h2 = spec.width / 2.0, spec.length / 2.0, spec.height / 2.0
    t, t2 = spec.wall_thickness, spec.wall_thickness / 2.0
    return [
        ((0.0, -t2, 0.0), (w2 + t, t2, l2 + t)),  # bottom
        ((-(w2 + t2), h2, 0.0), (t2, h2, l2 + t)),  # x- wall
        ((+(w2 + t2), h2, 0.0), (t2, h2, l2 + t)),  # x+ wall
        ((0.0, h2, -(l2 + t2)), (w2, h2, t2)),  # z- wall
        ((0.0, h2, +(l2 + t2)), (w2, h2, t2)),  # z+ wall
    ]


def cup_world_boxes(spec: CupSpec, pose=None):
    """Box (center, rotation) pairs for a cup at pose (x, y, tilt).

    (x, y) places the cavity base center at world (x, y, 0); the tilt rotates
    the whole cup about the cavity center axis (z through (x, y + h/2, 0)).
    """
    if pose is None:
        pose = spec.pose
    x, y, theta = pose
    rot = tilt_matrix(theta)
    pivot = np.array([x, y + spec.height / 2.0, 0.0])
    pivot_local = np.array([0.0, spec.height / 2.0, 0.0])
    out = []
    for center, half in _cup_local_boxes(spec):
        c = pivot + rot @ (np.asarray(center) - pivot_local)
        out.append((c, rot, np.asarray(half, dtype=np.float64)))
    return out


def build_cup(spec: CupSpec) -> list[Box]:
    """Five boxes (bottom + 4 walls) forming an open-top container."""
    spec.validate()
    return [
        Box(
            center=tuple(center),
            half_extents=tuple(half),
            rotation=rot.copy(),
            friction=spec.friction,
        )
        for center, rot, half in cup_world_boxes(spec)
    ]


def build_floor(friction: float = 0.5) -> HalfSpace:
    """Ground plane at y = 0."""
    return HalfSpace(normal=(0.0, 1.0, 0.0), offset=0.0, friction=friction)
