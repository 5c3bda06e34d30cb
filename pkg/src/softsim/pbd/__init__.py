"""Position-based particle dynamics: state containers, constraints, solver."""

from .solver import (
    StepStats,
    Workspace,
    lattice_rest_density,
    max_speed,
    neighbor_search,
    poly6,
    predict_positions,
    project_density,
    project_distance,
    resolve_collisions,
    solve_step,
)
from .types import (
    GROUP_CLOTH,
    GROUP_FLUID,
    GROUP_NONE,
    GROUP_ROPE,
    Attachment,
    Box,
    ColliderSet,
    DensityConstraint,
    DistanceConstraint,
    DistanceSet,
    HalfSpace,
    NonFiniteStateError,
    ParticleSet,
    Picker,
    Scene,
    SimConfig,
    tilt_matrix,
    yaw_matrix,
)

__all__ = [
    "Attachment",
    "Box",
    "ColliderSet",
    "DensityConstraint",
    "DistanceConstraint",
    "DistanceSet",
    "GROUP_CLOTH",
    "GROUP_FLUID",
    "GROUP_NONE",
    "GROUP_ROPE",
    "HalfSpace",
    "NonFiniteStateError",
    "ParticleSet",
    "Picker",
    "Scene",
    "SimConfig",
    "StepStats",
    "Workspace",
    "lattice_rest_density",
    "max_speed",
    "neighbor_search",
    "poly6",
    "predict_positions",
    "project_density",
    "project_distance",
    "resolve_collisions",
    "solve_step",
    "tilt_matrix",
    "yaw_matrix",
]
