"""Task reward functions and the water-accounting geometry they share.

Rewards are pure functions of particle positions plus task constants.  Water
rewards run on a WaterTally (a partition of the fluid particles into
control-cup / target-cup / spilled).  Cloth and rope rewards are distances in
various forms: endpoint extension, top-down covered area, mirror-pair folding
distance, particle-wise target distance, and optimal-assignment set distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment

from .assets import CLOTH_SPACING, CupSpec

__all__ = [
    "WaterTally",
    "in_cup_cavity",
    "classify_water",
    "reward_transport",
    "reward_pour",
    "reward_pour_amount",
    "reward_straighten",
    "reward_spread",
    "reward_fold",
    "reward_drop",
    "reward_rope_config",
    "rope_keypoints",
    "SPILL_PENALTY",
    "FOLD_DISPLACEMENT_PENALTY",
]

SPILL_PENALTY = 4.0
FOLD_DISPLACEMENT_PENALTY = 1.0

# Top-down coverage raster: 1 cm cells over the central workspace footprint.
SPREAD_CELL = 0.01
SPREAD_EXTENT = 1.0


@dataclass(frozen=True)
class WaterTally:
    """Partition of the fluid particles; the three parts sum to total."""

    in_control: int
    in_target: int
    spilled: int
    total: int

    def __post_init__(self):
        if self.in_control + self.in_target + self.spilled != self.total:
            raise ValueError("tally parts must sum to total")


def in_cup_cavity(positions, spec: CupSpec, pose) -> np.ndarray:
    """Boolean mask of points inside the cup's inner cavity volume.

    The cavity is the open box between the bottom and the rim, transformed by
    the cup pose (rotation about the cavity center, see assets).
    """
    positions = np.asarray(positions, dtype=np.float64)
    x, y, theta = pose
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pivot = np.array([x, y + spec.height / 2.0, 0.0])
    local = (positions - pivot) @ rot  # R^T via right-multiplication
    w2, l2, h2 = spec.width / 2.0, spec.length / 2.0, spec.height / 2.0
    return (
        (np.abs(local[:, 0]) <= w2)
        & (np.abs(local[:, 1]) <= h2)
        & (np.abs(local[:, 2]) <= l2)
    )


def classify_water(
    positions, control_spec: CupSpec, control_pose, target_spec: CupSpec, target_pose
) -> WaterTally:
    """Partition fluid particles into control-cup, target-cup and spilled.

    Membership in the control cup takes precedence when cavities overlap.
    """
    in_control = in_cup_cavity(positions, control_spec, control_pose)
    in_target = in_cup_cavity(positions, target_spec, target_pose) & ~in_control
    n = len(positions)
    nc = int(in_control.sum())
    nt = int(in_target.sum())
    return WaterTally(nc, nt, n - nc - nt, n)


def water_height(positions, spec: CupSpec, pose) -> float:
    """Fill height above the cavity base for the particles inside a cup."""
    mask = in_cup_cavity(positions, spec, pose)
    if not mask.any():
        return 0.0
    return float(np.asarray(positions)[mask, 1].max() - pose[1])


# ------------------------------------------------------------- water rewards


def reward_transport(tally: WaterTally, cup_x: float, target_x: float) -> float:
    """Negative distance to the goal position with a spill penalty."""
    return -abs(cup_x - target_x) - SPILL_PENALTY * tally.spilled / tally.total


def reward_pour(tally: WaterTally) -> float:
    """Fraction of the water inside the target cup."""
    return tally.in_target / tally.total


def reward_pour_amount(tally: WaterTally, goal_fraction: float) -> float:
    """Negative deviation of the poured fraction from the goal fraction."""
    return -abs(tally.in_target / tally.total - goal_fraction)


# -------------------------------------------------------------- rope rewards


def reward_straighten(positions, straight_length: float) -> float:
    """Negative gap between the endpoint distance and the straight length."""
    positions = np.asarray(positions)
    span = float(np.linalg.norm(positions[-1] - positions[0]))
    return -abs(span - straight_length)


def rope_keypoints(positions, k: int = 10) -> np.ndarray:
    """k evenly spaced particles along the chain (endpoints included)."""
    positions = np.asarray(positions, dtype=np.float64)
    idx = np.round(np.linspace(0, positions.shape[0] - 1, k)).astype(int)
    return positions[idx]


def reward_rope_config(keypoints, goal_keypoints) -> float:
    """Negative mean optimal-assignment distance between two keypoint sets."""
    a = np.asarray(keypoints, dtype=np.float64)
    b = np.asarray(goal_keypoints, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"keypoint sets must match, got {a.shape} vs {b.shape}")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return -float(cost[rows, cols].mean())


# ------------------------------------------------------------- cloth rewards


@njit(cache=True)
def _k_raster_discs(xz, radius, low, cell, nx, grid):
    r2 = radius * radius
    for p in range(xz.shape[0]):
        px = xz[p, 0]
        pz = xz[p, 1]
        i0 = int(math.floor((px - radius - low) / cell))
        i1 = int(math.floor((px + radius - low) / cell))
        j0 = int(math.floor((pz - radius - low) / cell))
        j1 = int(math.floor((pz + radius - low) / cell))
        if i0 < 0:
            i0 = 0
        if j0 < 0:
            j0 = 0
        if i1 > nx - 1:
            i1 = nx - 1
        if j1 > nx - 1:
            j1 = nx - 1
        for i in range(i0, i1 + 1):
            cx = low + (i + 0.5) * cell
            dx = cx - px
            for j in range(j0, j1 + 1):
                cz = low + (j + 0.5) * cell
                dz = cz - pz
                if dx * dx + dz * dz <= r2:
                    grid[i, j] = 1


def reward_spread(positions, disc_radius: float = CLOTH_SPACING) -> float:
    """Top-down covered area in m².

    Particles project to the ground plane as filled discs; a raster cell
    counts as covered when its center falls inside some disc.
    """
    positions = np.asarray(positions, dtype=np.float64)
    nx = int(round(2 * SPREAD_EXTENT / SPREAD_CELL))
    grid = np.zeros((nx, nx), dtype=np.uint8)
    xz = np.ascontiguousarray(positions[:, [0, 2]])
    _k_raster_discs(xz, disc_radius, -SPREAD_EXTENT, SPREAD_CELL, nx, grid)
    return float(grid.sum()) * SPREAD_CELL * SPREAD_CELL


def fold_pairs(width_particles: int, length_particles: int):
    """Mirror pairs (a, b) across the middle column; the middle column of an
    odd grid pairs with itself."""
    w, l = width_particles, length_particles
    js = np.arange((l - 1) // 2 + 1)
    ii = np.repeat(np.arange(w), js.size)
    jj = np.tile(js, w)
    a = ii * l + jj
    b = ii * l + (l - 1 - jj)
    return a, b


def reward_fold(
    positions, width_particles: int, length_particles: int, initial_center
) -> float:
    """Negative mean mirror-pair distance minus cloth displacement.

    The displacement term is the distance of the current centroid from the
    build-time centroid.
    """
    positions = np.asarray(positions, dtype=np.float64)
    a, b = fold_pairs(width_particles, length_particles)
    pair_dist = np.linalg.norm(positions[a] - positions[b], axis=1).mean()
    drift = np.linalg.norm(positions.mean(axis=0) - np.asarray(initial_center))
    return -float(pair_dist) - FOLD_DISPLACEMENT_PENALTY * float(drift)


def reward_drop(positions, target_positions) -> float:
    """Negative mean particle-wise distance to the flat target layout."""
    positions = np.asarray(positions, dtype=np.float64)
    target = np.asarray(target_positions, dtype=np.float64)
    if positions.shape != target.shape:
        raise ValueError("target layout must match particle count")
    return -float(np.linalg.norm(positions - target, axis=1).mean())
