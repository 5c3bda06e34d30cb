"""The ten manipulation tasks: registry plus per-episode runtime.

A TaskSpec is the static contract of one task: horizon, action repetition,
planning horizon, action space, solver configuration, actuator family.  A
TaskRuntime owns one episode's Scene plus the params-derived constants (cup
specs, goals, targets) and implements stepping, performance, and the reduced
and full observation encodings.

Observation packing (fixed order):
  reduced: per-family fields documented on each runtime class
  full:    particle positions flattened, zero-padded to the caller's max
           count, then the actuator block: per picker [x, y, z, attached],
           Cup1D [x], Cup3D [x, y, theta]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actuation import (
    DROP_MIN_HEIGHT,
    ActionSpaceSpec,
    CupRig,
    apply_picker,
)
from .assets import CupSpec
from .pbd import Scene, SimConfig
from .pbd.solver import Workspace, solve_step
from .rewards import (
    WaterTally,
    classify_water,
    in_cup_cavity,
    reward_drop,
    reward_fold,
    reward_pour,
    reward_pour_amount,
    reward_rope_config,
    reward_spread,
    reward_straighten,
    reward_transport,
    rope_keypoints,
    water_height,
)

__all__ = [
    "TaskSpec",
    "TASKS",
    "TASK_NAMES",
    "task_spec",
    "canonical_name",
    "TaskRuntime",
    "make_runtime",
]

# Per-family solver settings.  Water tasks run few iterations (the density
# solve converges fast and dominates cost); cloth halves the particle radius
# so self-collision does not fight resting stretch constraints.
SIM_WATER_TRANSPORT = SimConfig(solver_iterations=2)
SIM_WATER_POUR = SimConfig(solver_iterations=4)
SIM_ROPE = SimConfig(solver_iterations=40)
SIM_CLOTH = SimConfig(solver_iterations=40, particle_radius=0.00625)


@dataclass(frozen=True)
class TaskSpec:
    """Static contract of one task."""

    name: str
    kind_id: int
    horizon: int
    action_repetition: int
    plan_horizon: int
    actuator: str  # "cup1d" | "cup3d" | "pickers"
    n_pickers: int
    sim: SimConfig
    picker_min_height: float = 0.0

    @property
    def action_space(self) -> ActionSpaceSpec:
        if self.actuator == "cup1d":
            return ActionSpaceSpec.cup_1d()
        if self.actuator == "cup3d":
            return ActionSpaceSpec.cup_3d()
        return ActionSpaceSpec.pickers(self.n_pickers)


def _spec(name, kind_id, horizon, rep, plan, actuator, n_pickers, sim, min_h=0.0):
    return TaskSpec(name, kind_id, horizon, rep, plan, actuator, n_pickers, sim, min_h)


TASKS = {
    s.name: s
    for s in [
        _spec("TransportWater", 1, 75, 8, 7, "cup1d", 0, SIM_WATER_TRANSPORT),
        _spec("PourWater", 2, 100, 8, 40, "cup3d", 0, SIM_WATER_POUR),
        _spec("PourWaterAmount", 3, 100, 8, 40, "cup3d", 0, SIM_WATER_POUR),
        _spec("StraightenRope", 4, 75, 8, 15, "pickers", 2, SIM_ROPE),
        _spec("RopeConfiguration", 5, 75, 8, 15, "pickers", 2, SIM_ROPE),
        _spec("SpreadCloth", 6, 100, 8, 15, "pickers", 2, SIM_CLOTH),
        _spec("FoldCloth", 7, 100, 8, 30, "pickers", 2, SIM_CLOTH),
        _spec("FoldCrumpledCloth", 8, 100, 8, 30, "pickers", 2, SIM_CLOTH),
        _spec("DropCloth", 9, 15, 32, 15, "pickers", 2, SIM_CLOTH, DROP_MIN_HEIGHT),
        _spec("DropFoldCloth", 10, 15, 32, 15, "pickers", 2, SIM_CLOTH, DROP_MIN_HEIGHT),
    ]
}

TASK_NAMES = list(TASKS)
_BY_KIND_ID = {s.kind_id: s for s in TASKS.values()}
_SNAKE = {
    "".join("_" + c.lower() if c.isupper() else c for c in name).lstrip("_"): name
    for name in TASKS
}


def canonical_name(name: str) -> str:
    """Accept CamelCase or snake_case task names."""
    if name in TASKS:
        return name
    if name in _SNAKE:
        return _SNAKE[name]
    raise KeyError(f"unknown task {name!r}; valid: {', '.join(sorted(_SNAKE))}")


def task_spec(name: str) -> TaskSpec:
    return TASKS[canonical_name(name)]


def spec_by_kind_id(kind_id: int) -> TaskSpec:
    return _BY_KIND_ID[kind_id]


# ---------------------------------------------------------------- runtimes


class TaskRuntime:
    """One episode's scene plus task constants; stepping and observations."""

    def __init__(self, spec: TaskSpec, params: dict, scene: Scene):
        self.spec = spec
        self.params = params
        self.scene = scene
        self.workspace = Workspace()
        self._setup()

    # family hooks
    def _setup(self) -> None:
        pass

    def _apply_increment(self, raw, repetition: int) -> None:
        raise NotImplementedError

    def performance(self) -> float:
        raise NotImplementedError

    def reduced_state(self) -> np.ndarray:
        raise NotImplementedError

    def diagnostics(self) -> dict:
        return {}

    def _actuator_block(self) -> np.ndarray:
        raise NotImplementedError

    # shared
    def step_substeps(self, raw) -> None:
        """Apply one env step's raw action over action_repetition substeps."""
        rep = self.spec.action_repetition
        for _ in range(rep):
            self._apply_increment(raw, rep)
            solve_step(self.scene, self.spec.sim, self.workspace)

    def full_state(self, max_particles: int | None = None) -> np.ndarray:
        pos = self.scene.particles.positions.ravel()
        if max_particles is not None:
            padded = np.zeros(3 * max_particles)
            padded[: pos.size] = pos
            pos = padded
        return np.concatenate([pos, self._actuator_block()])

    def mutable_state(self) -> np.ndarray:
        """Task state beyond the scene that snapshots must carry."""
        return np.zeros(0)

    def set_mutable_state(self, state) -> None:
        pass


class _WaterRuntime(TaskRuntime):
    """Cup tasks over a fluid block.

    Scene layout: one floor half-space; boxes 0..4 are the controlled cup,
    boxes 5..9 (when present) the target cup.
    reduced_state:
      TransportWater: [w_cc, l_cc, h_cc, target_x, water_height,
                       frac_in_cup, frac_outside]                    (7)
      PourWater:      [w_cc, l_cc, h_cc, w_tc, l_tc, h_tc, x, y, theta,
                       distance, water_height, frac_control, frac_target] (13)
      PourWaterAmount: PourWater fields + [goal]                     (14)
    """

    def _setup(self) -> None:
        p = self.params
        self.control_spec = CupSpec(
            width=p["w_cc"], length=p["l_cc"], height=p["h_cc"], friction=0.1
        )
        self.rig = CupRig(self.control_spec, first_box=0, pose=(0.0, 0.0, 0.0))
        if self.spec.name == "TransportWater":
            self.target_spec = None
            self.target_x = p["target_x"]
        else:
            self.target_spec = CupSpec(
                width=p["w_tc"], length=p["l_tc"], height=p["h_tc"], friction=0.1
            )
            self.target_pose = (p["distance"], 0.0, 0.0)

    def _apply_increment(self, raw, repetition: int) -> None:
        if self.spec.actuator == "cup1d":
            delta = (raw[0] / repetition, 0.0, 0.0)
        else:
            delta = np.asarray(raw) / repetition
        self.rig.move(self.scene.colliders, delta, self.spec.sim.dt)

    def _tally(self) -> WaterTally:
        pos = self.scene.particles.positions
        pose = tuple(self.rig.pose)
        if self.target_spec is None:
            inside = in_cup_cavity(pos, self.control_spec, pose)
            nc = int(inside.sum())
            return WaterTally(nc, 0, pos.shape[0] - nc, pos.shape[0])
        return classify_water(pos, self.control_spec, pose, self.target_spec, self.target_pose)

    def performance(self) -> float:
        tally = self._tally()
        if self.spec.name == "TransportWater":
            return reward_transport(tally, self.rig.pose[0], self.target_x)
        if self.spec.name == "PourWater":
            return reward_pour(tally)
        return reward_pour_amount(tally, self.params["goal"])

    def reduced_state(self) -> np.ndarray:
        p = self.params
        pos = self.scene.particles.positions
        tally = self._tally()
        h_water = water_height(pos, self.control_spec, tuple(self.rig.pose))
        if self.spec.name == "TransportWater":
            return np.array(
                [
                    p["w_cc"],
                    p["l_cc"],
                    p["h_cc"],
                    self.target_x,
                    h_water,
                    tally.in_control / tally.total,
                    1.0 - tally.in_control / tally.total,
                ]
            )
        fields = [
            p["w_cc"],
            p["l_cc"],
            p["h_cc"],
            p["w_tc"],
            p["l_tc"],
            p["h_tc"],
            self.rig.pose[0],
            self.rig.pose[1],
            self.rig.pose[2],
            p["distance"],
            h_water,
            tally.in_control / tally.total,
            tally.in_target / tally.total,
        ]
        if self.spec.name == "PourWaterAmount":
            fields.append(p["goal"])
        return np.array(fields)

    def diagnostics(self) -> dict:
        t = self._tally()
        return {
            "in_control": t.in_control,
            "in_target": t.in_target,
            "spilled": t.spilled,
            "total": t.total,
        }

    def _actuator_block(self) -> np.ndarray:
        if self.spec.actuator == "cup1d":
            return np.array([self.rig.pose[0]])
        return np.array(self.rig.pose)

    def mutable_state(self) -> np.ndarray:
        return np.array(self.rig.pose)

    def set_mutable_state(self, state) -> None:
        self.rig.pose[:] = np.asarray(state, dtype=np.float64)
        self.rig.sync(self.scene.colliders)


class _PickerRuntimeMixin:
    def _apply_increment(self, raw, repetition: int) -> None:
        for k in range(self.spec.n_pickers):
            dx, dy, dz, p = raw[4 * k : 4 * k + 4]
            sub = (dx / repetition, dy / repetition, dz / repetition, p)
            apply_picker(
                self.scene, k, sub, self.spec.sim, min_height=self.spec.picker_min_height
            )

    def _actuator_block(self) -> np.ndarray:
        attached = {a.picker for a in self.scene.attachments}
        block = []
        for k, picker in enumerate(self.scene.pickers):
            block.extend(picker.position)
            block.append(1.0 if k in attached else 0.0)
        return np.array(block)

    def _picker_positions(self) -> np.ndarray:
        return np.concatenate([p.position for p in self.scene.pickers])


class _RopeRuntime(_PickerRuntimeMixin, TaskRuntime):
    """Rope tasks.

    reduced_state: 10 keypoints (30) + picker positions (3 per picker);
    RopeConfiguration appends the 10 goal keypoints (30 more).
    """

    def _setup(self) -> None:
        p = self.params
        self.straight_length = (p["n_particles"] - 1) * p["spacing"]
        self.goal = (
            np.asarray(p["goal_keypoints"], dtype=np.float64)
            if "goal_keypoints" in p
            else None
        )

    def performance(self) -> float:
        pos = self.scene.particles.positions
        if self.spec.name == "StraightenRope":
            return reward_straighten(pos, self.straight_length)
        return reward_rope_config(rope_keypoints(pos), self.goal)

    def reduced_state(self) -> np.ndarray:
        parts = [rope_keypoints(self.scene.particles.positions).ravel(), self._picker_positions()]
        if self.goal is not None:
            parts.append(self.goal.ravel())
        return np.concatenate(parts)

    def diagnostics(self) -> dict:
        pos = self.scene.particles.positions
        return {"endpoint_distance": float(np.linalg.norm(pos[-1] - pos[0]))}


class _ClothRuntime(_PickerRuntimeMixin, TaskRuntime):
    """Cloth tasks.

    reduced_state: the four grid corners (12) + picker positions (3 per
    picker).  Fold rewards measure displacement from the reset centroid;
    Drop rewards use the flat target layout rebuilt from params.
    """

    def _setup(self) -> None:
        p = self.params
        self.grid_w = p["grid_w"]
        self.grid_l = p["grid_l"]
        self.spacing = p["spacing"]
        self.initial_center = self.scene.particles.positions.mean(axis=0)
        if self.spec.name in ("DropCloth", "DropFoldCloth"):
            self.target = self._flat_layout()
        else:
            self.target = None

    def _flat_layout(self) -> np.ndarray:
        """The flat, origin-centered grid this cloth was built from."""
        w, l, s = self.grid_w, self.grid_l, self.spacing
        ii, jj = np.meshgrid(np.arange(w), np.arange(l), indexing="ij")
        pts = np.zeros((w * l, 3))
        pts[:, 0] = (ii.ravel() - (w - 1) / 2.0) * s
        pts[:, 1] = self.spec.sim.particle_radius
        pts[:, 2] = (jj.ravel() - (l - 1) / 2.0) * s
        return pts

    def flat_area(self) -> float:
        """Covered area of the flat layout (the SpreadCloth upper bound)."""
        return reward_spread(self._flat_layout(), self.spacing)

    def performance(self) -> float:
        pos = self.scene.particles.positions
        name = self.spec.name
        if name == "SpreadCloth":
            return reward_spread(pos, self.spacing)
        if name in ("FoldCloth", "FoldCrumpledCloth", "DropFoldCloth"):
            return reward_fold(pos, self.grid_w, self.grid_l, self.initial_center)
        return reward_drop(pos, self.target)

    def _corners(self) -> np.ndarray:
        w, l = self.grid_w, self.grid_l
        idx = [0, l - 1, (w - 1) * l, w * l - 1]
        return self.scene.particles.positions[idx]

    def reduced_state(self) -> np.ndarray:
        return np.concatenate([self._corners().ravel(), self._picker_positions()])

    def diagnostics(self) -> dict:
        if self.spec.name == "SpreadCloth":
            return {"covered_area": self.performance()}
        return {}


def make_runtime(spec: TaskSpec, params: dict, scene: Scene) -> TaskRuntime:
    if spec.actuator in ("cup1d", "cup3d"):
        return _WaterRuntime(spec, params, scene)
    if spec.name in ("StraightenRope", "RopeConfiguration"):
        return _RopeRuntime(spec, params, scene)
    return _ClothRuntime(spec, params, scene)
