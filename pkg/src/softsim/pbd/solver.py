"""Position-based dynamics step and the operations it is composed of.

Substep order: predict (gravity pre-integrated into velocities), then
solver_iterations rounds of {attachment pins, distance constraints, density
constraint, self-collision, collider projection}, then velocities from the
position change with contact friction.  Every phase is sequential and
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .types import (
    GROUP_CLOTH,
    GROUP_ROPE,
    Attachment,
    ColliderSet,
    DensityConstraint,
    DistanceConstraint,
    NonFiniteStateError,
    ParticleSet,
    Scene,
    SimConfig,
)

__all__ = [
    "StepStats",
    "Workspace",
    "predict_positions",
    "project_distance",
    "project_density",
    "neighbor_search",
    "resolve_collisions",
    "solve_step",
    "lattice_rest_density",
    "poly6",
    "max_speed",
]

_EMPTY_I64 = np.zeros(0, dtype=np.int64)
_EMPTY_F64 = np.zeros(0, dtype=np.float64)


def poly6(r: float, h: float) -> float:
    """Poly6 density kernel value at distance r for support radius h."""
    if r < 0 or r > h:
        return 0.0
    return 315.0 / (64.0 * math.pi * h**9) * (h * h - r * r) ** 3


def lattice_rest_density(rest_distance: float, kernel_radius: float) -> float:
    """Poly6 kernel sum (unit mass, self included) over a cubic lattice.

    Fluids built at pitch rest_distance measure exactly this density in the
    bulk, so using it as the constraint's rest density makes a settled lattice
    stress free.
    """
    reach = int(kernel_radius / rest_distance) + 1
    total = 0.0
    for ix in range(-reach, reach + 1):
        for iy in range(-reach, reach + 1):
            for iz in range(-reach, reach + 1):
                r = rest_distance * math.sqrt(ix * ix + iy * iy + iz * iz)
                total += poly6(r, kernel_radius)
    return total


def max_speed(particles: ParticleSet) -> float:
    """Largest particle speed; the settling criterion checks this."""
    if particles.count == 0:
        return 0.0
    return float(np.sqrt((particles.velocities**2).sum(axis=1)).max())


@dataclass
class StepStats:
    """Per-substep diagnostics."""

    degenerate_distance: int = 0


class Workspace:
    """Reusable scratch buffers for solve_step (keyed by particle count)."""

    def __init__(self):
        self.n = -1
        self.pred = None
        self.eff_w = None
        self.c_flag = None
        self.c_n = None
        self.c_v = None
        self.c_fric = None
        self.c_acc = None
        self.fluid_tbl = None
        self.fluid_cnt = None
        self.fluid_lam = None
        self.fluid_dx = None
        self.self_tbl = None
        self.self_cnt = None

    def bind(self, n: int) -> None:
        if self.n == n:
            return
        self.n = n
        self.pred = np.empty((n, 3))
        self.eff_w = np.empty(n)
        self.c_flag = np.zeros(n, dtype=np.uint8)
        self.c_n = np.zeros((n, 3))
        self.c_v = np.zeros((n, 3))
        self.c_fric = np.zeros(n)
        self.c_acc = np.zeros(n)
        self.fluid_tbl = None
        self.self_tbl = None


def _grow_table(points: np.ndarray, radius: float, tbl, cnt, start_cap: int):
    """Build a padded neighbor table, growing capacity until nothing truncates."""
    m = points.shape[0]
    cap = start_cap if tbl is None else tbl.shape[1]
    if tbl is None or tbl.shape[0] != m:
        tbl = np.zeros((m, cap), dtype=np.int64)
        cnt = np.zeros(m, dtype=np.int64)
    while True:
        maxcnt = K.k_neighbor_table(points, radius, tbl, cnt)
        if maxcnt <= tbl.shape[1]:
            return tbl, cnt
        tbl = np.zeros((m, int(maxcnt) + 8), dtype=np.int64)


def predict_positions(particles: ParticleSet, config: SimConfig) -> np.ndarray:
    """Apply gravity to dynamic velocities and return predicted positions."""
    if not (
        np.isfinite(particles.positions).all() and np.isfinite(particles.velocities).all()
    ):
        raise NonFiniteStateError("non-finite state")
    pred = np.empty_like(particles.positions)
    gx, gy, gz = config.gravity
    bad = K.k_predict(
        particles.positions,
        particles.velocities,
        particles.inv_masses,
        config.dt,
        gx,
        gy,
        gz,
        pred,
    )
    if bad:
        raise NonFiniteStateError("non-finite state")
    return pred


def project_distance(
    constraint: DistanceConstraint, positions: np.ndarray, inv_masses: np.ndarray
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Position corrections (dx_i, dx_j) for one distance constraint.

    Zero corrections when both endpoints are static or the endpoints are
    coincident (degenerate flag set).
    """
    pair = np.array(
        [positions[constraint.i], positions[constraint.j]], dtype=np.float64
    )
    before = pair.copy()
    eff_w = np.array(
        [inv_masses[constraint.i], inv_masses[constraint.j]], dtype=np.float64
    )
    degenerate = K.k_project_distance(
        pair,
        eff_w,
        np.array([0], dtype=np.int64),
        np.array([1], dtype=np.int64),
        np.array([constraint.rest_length]),
        np.array([constraint.stiffness]),
    )
    delta = pair - before
    return delta[0], delta[1], bool(degenerate)


def neighbor_search(positions: np.ndarray, radius: float) -> list[np.ndarray]:
    """Indices of all particles within `radius` of each particle.

    Lists are symmetric and sorted ascending.  Uses a uniform grid; the
    result matches a brute-force O(n^2) scan exactly.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    m = positions.shape[0]
    if m == 0:
        return []
    tbl, cnt = _grow_table(positions, float(radius), None, None, 32)
    return [np.sort(tbl[i, : cnt[i]].copy()) for i in range(m)]


def _neighbors_to_table(neighbors: list[np.ndarray]):
    cap = max(1, max((len(r) for r in neighbors), default=1))
    m = len(neighbors)
    tbl = np.zeros((m, cap), dtype=np.int64)
    cnt = np.zeros(m, dtype=np.int64)
    for i, row in enumerate(neighbors):
        cnt[i] = len(row)
        tbl[i, : len(row)] = row
    return tbl, cnt


def project_density(
    particles: ParticleSet,
    constraint: DensityConstraint,
    neighbors: list[np.ndarray] | None = None,
    apply: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """One density iteration over the constraint's group.

    Returns (lambda, corrections) indexed over the group's particles in
    ascending particle order; corrections are added to the positions when
    `apply` is set.  `neighbors` are group-local index lists (as produced by
    neighbor_search over the group's positions at the kernel radius).
    """
    fl_idx = np.nonzero(particles.groups == constraint.group)[0].astype(np.int64)
    nf = fl_idx.shape[0]
    lam = np.zeros(nf)
    dx = np.zeros((nf, 3))
    if nf == 0:
        return lam, dx
    sub = np.ascontiguousarray(particles.positions[fl_idx])
    if neighbors is None:
        neighbors = neighbor_search(sub, constraint.kernel_radius)
    tbl, cnt = _neighbors_to_table(neighbors)
    K.k_density_iterate(
        particles.positions,
        particles.inv_masses,
        fl_idx,
        tbl,
        cnt,
        constraint.kernel_radius,
        constraint.rest_density,
        constraint.relaxation,
        lam,
        dx,
        1 if apply else 0,
    )
    return lam, dx


def resolve_collisions(
    particles: ParticleSet, colliders: ColliderSet, config: SimConfig
) -> dict:
    """Project dynamic particles out of every collider (clearance = radius).

    Returns contact info: flags (n,), normals (n, 3), collider velocities and
    friction per contacting particle.
    """
    n = particles.count
    c_flag = np.zeros(n, dtype=np.uint8)
    c_n = np.zeros((n, 3))
    c_v = np.zeros((n, 3))
    c_fric = np.zeros(n)
    # prev == current positions: no tangential displacement, so the pure
    # projection op applies no positional friction
    K.k_collide(
        particles.positions,
        particles.positions.copy(),
        particles.inv_masses,
        config.particle_radius,
        config.dt,
        colliders.hs_normal,
        colliders.hs_offset,
        colliders.hs_friction,
        colliders.box_center,
        colliders.box_half,
        colliders.box_rot,
        colliders.box_vel,
        colliders.box_friction,
        np.zeros(n),
        1,
        c_flag,
        c_n,
        c_v,
        c_fric,
    )
    return {"flags": c_flag, "normals": c_n, "velocities": c_v, "friction": c_fric}


def _attachment_targets(scene: Scene):
    idx = np.array([a.particle for a in scene.attachments], dtype=np.int64)
    targets = np.array(
        [scene.pickers[a.picker].position + a.offset for a in scene.attachments]
    ).reshape(-1, 3)
    return idx, targets


def solve_step(scene: Scene, config: SimConfig, workspace: Workspace | None = None) -> StepStats:
    """Advance the scene by one substep of length config.dt."""
    ps = scene.particles
    n = ps.count
    ws = workspace if workspace is not None else Workspace()
    ws.bind(n)
    pred = ws.pred
    gx, gy, gz = config.gravity
    bad = K.k_predict(ps.positions, ps.velocities, ps.inv_masses, config.dt, gx, gy, gz, pred)
    if bad:
        raise NonFiniteStateError("non-finite state")

    # attachments pin exactly: the particle moves with its picker and nothing
    # else may move it during this substep
    eff_w = ws.eff_w
    np.copyto(eff_w, ps.inv_masses)
    if scene.attachments:
        att_idx, att_targets = _attachment_targets(scene)
        eff_w[att_idx] = 0.0
        pred[att_idx] = att_targets
    else:
        att_idx = None

    density = scene.density
    fl_idx = _EMPTY_I64
    if density is not None:
        fl_idx = np.nonzero(ps.groups == density.group)[0].astype(np.int64)
        if fl_idx.shape[0]:
            sub = np.ascontiguousarray(pred[fl_idx])
            ws.fluid_tbl, ws.fluid_cnt = _grow_table(
                sub, density.kernel_radius, ws.fluid_tbl, ws.fluid_cnt, 48
            )
            if ws.fluid_lam is None or ws.fluid_lam.shape[0] != fl_idx.shape[0]:
                ws.fluid_lam = np.zeros(fl_idx.shape[0])
                ws.fluid_dx = np.zeros((fl_idx.shape[0], 3))

    self_idx = np.nonzero((ps.groups == GROUP_CLOTH) | (ps.groups == GROUP_ROPE))[0].astype(
        np.int64
    )
    min_dist = 2.0 * config.particle_radius
    if self_idx.shape[0]:
        sub = np.ascontiguousarray(pred[self_idx])
        # gathered with slack so pairs stay valid while iterations move things
        ws.self_tbl, ws.self_cnt = _grow_table(
            sub, 1.3 * min_dist, ws.self_tbl, ws.self_cnt, 16
        )

    dist = scene.distance
    colliders = scene.colliders
    ws.c_flag[:] = 0
    ws.c_acc[:] = 0.0
    stats = StepStats()
    iters = config.solver_iterations
    for it in range(iters):
        if att_idx is not None:
            pred[att_idx] = att_targets
        if len(dist):
            stats.degenerate_distance += K.k_project_distance(
                pred, eff_w, dist.i, dist.j, dist.rest, dist.stiffness
            )
        if density is not None and fl_idx.shape[0]:
            K.k_density_iterate(
                pred,
                eff_w,
                fl_idx,
                ws.fluid_tbl,
                ws.fluid_cnt,
                density.kernel_radius,
                density.rest_density,
                density.relaxation,
                ws.fluid_lam,
                ws.fluid_dx,
                1,
            )
        if self_idx.shape[0]:
            K.k_self_collide(pred, eff_w, ps.groups, self_idx, ws.self_tbl, ws.self_cnt, min_dist)
        K.k_collide(
            pred,
            ps.positions,
            eff_w,
            config.particle_radius,
            config.dt,
            colliders.hs_normal,
            colliders.hs_offset,
            colliders.hs_friction,
            colliders.box_center,
            colliders.box_half,
            colliders.box_rot,
            colliders.box_vel,
            colliders.box_friction,
            ws.c_acc,
            1 if it == iters - 1 else 0,
            ws.c_flag,
            ws.c_n,
            ws.c_v,
            ws.c_fric,
        )
    K.k_velocity_commit(
        ps.positions,
        pred,
        ps.velocities,
        ps.inv_masses,
        config.dt,
        ws.c_flag,
        ws.c_n,
        ws.c_v,
        ws.c_fric,
    )
    return stats
