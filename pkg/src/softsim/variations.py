"""Seeded generation of task variations and their settled initial scenes.

Each variation index draws from its own RNG stream (master_seed, index,
attempt), so generation is order-independent and a degenerate draw (upper
bound too close to the lower bound) retries on the next attempt stream.

Draw orders are fixed per task and documented on each gen_* function; the
closed forms take r = 0.033 (water particle radius), with the fluid block
built on a 0.025 m lattice.

Particle scale: a divisor applied to particle counts only (cloth grid dims
by `scale`, fluid dims by `ceil(scale/2)`; rope is already small).  All
physical dimensions (cups, actions, horizons) stay at full scale; the scaled
dims are recorded in the params record.
"""

from __future__ import annotations

import math

import numpy as np

from .assets import (
    CLOTH_SPACING,
    ROPE_PARTICLES,
    ROPE_SPACING,
    ClothSpec,
    CupSpec,
    FluidSpec,
    RopeSpec,
    build_cloth,
    build_cup,
    build_floor,
    build_fluid_block,
    build_rope,
    fluid_density_constraint,
    straight_polyline,
)
from .metrics import compute_bounds
from .pbd import Attachment, ColliderSet, Picker, Scene
from .pbd.solver import Workspace, max_speed, solve_step
from .rng import stream_rng
from .tasks import TaskSpec, task_spec

__all__ = [
    "WATER_R",
    "gen_transport_water",
    "gen_pour_water",
    "gen_pour_water_amount",
    "gen_rope",
    "gen_cloth",
    "generate_variation",
    "generate_all",
    "letter_polyline",
    "TRAIN_SPLIT",
]

WATER_R = 0.033
FLUID_REST = 0.025
TRAIN_SPLIT = 0.8

SETTLE_DAMPING = 0.95
SETTLE_SPEED = 0.01
SETTLE_MAX_SUBSTEPS = 1000
LIFT_STEP = 0.01  # m per substep during scripted lift animations
DEGENERATE_GAP = 1e-6


def _fluid_divisor(scale: int) -> int:
    return max(1, (scale + 1) // 2)


# ------------------------------------------------------------------- params


def gen_transport_water(rng, scale: int = 1) -> dict:
    """Draw order: w_w, l_w, level, target_x."""
    w_w = int(rng.integers(4, 14))
    l_w = int(rng.integers(4, 14))
    level = "medium" if int(rng.integers(0, 2)) == 0 else "large"
    m = min(w_w, l_w)
    h_w = int(math.floor(3.5 * m)) if level == "medium" else 4 * m
    v = w_w * h_w * l_w
    h = v / ((w_w + 1) * (l_w + 1))
    if level == "medium":
        h_cc = h * WATER_R / 2.0
    else:
        h_cc = h * WATER_R / 3.0 + 0.0015 * m
    target_x = float(rng.uniform(0.4, 1.2))
    div = _fluid_divisor(scale)
    return {
        "w_w": w_w,
        "l_w": l_w,
        "level": level,
        "h_w": h_w,
        "h": h,
        "w_cc": w_w * WATER_R + 0.1,
        "l_cc": l_w * WATER_R + 0.1,
        "h_cc": h_cc,
        "target_x": target_x,
        "fluid_w": max(2, w_w // div),
        "fluid_h": max(2, h_w // div),
        "fluid_l": max(2, l_w // div),
        "scale": scale,
    }


def gen_pour_water(rng, scale: int = 1) -> dict:
    """Draw order: w_w, l_w, level, control height jitter, target height
    jitter, distance."""
    w_w = int(rng.integers(4, 14))
    l_w = int(rng.integers(4, 14))
    level = "medium" if int(rng.integers(0, 2)) == 0 else "large"
    m = min(w_w, l_w)
    h_w = int(math.floor(3.5 * m)) if level == "medium" else 4 * m
    v = w_w * h_w * l_w
    h = v / ((w_w + 1) * (l_w + 1))
    if level == "medium":
        h_cc = h * WATER_R / 2.0 + 0.001 * float(rng.uniform(-0.5, 0.5))
    else:
        h_cc = h * WATER_R / 3.0 + 0.001 * float(rng.uniform(0.0, 1.0))
    h_tc = h_cc + float(rng.uniform(0.0, 0.1))
    distance = m * float(rng.uniform(0.05, 0.09)) + (w_w + 4) * WATER_R / 2.0
    div = _fluid_divisor(scale)
    return {
        "w_w": w_w,
        "l_w": l_w,
        "level": level,
        "h_w": h_w,
        "h": h,
        "w_cc": w_w * WATER_R + 0.1,
        "l_cc": l_w * WATER_R + 0.1,
        "h_cc": h_cc,
        "w_tc": w_w * WATER_R + 0.07,
        "l_tc": l_w * WATER_R + 0.07,
        "h_tc": h_tc,
        "distance": distance,
        "fluid_w": max(2, w_w // div),
        "fluid_h": max(2, h_w // div),
        "fluid_l": max(2, l_w // div),
        "scale": scale,
    }


def gen_pour_water_amount(rng, scale: int = 1) -> dict:
    """PourWater draws, then the goal fraction g = 0.1 + 0.9 u."""
    params = gen_pour_water(rng, scale)
    params["goal"] = 0.1 + 0.9 * float(rng.uniform(0.0, 1.0))
    return params


def gen_rope(rng, kind: str, scale: int = 1) -> dict:
    """Draw order: 4 x (particle index, lift height), then the letter pick
    for RopeConfiguration."""
    n = ROPE_PARTICLES
    perturb = []
    for _ in range(4):
        idx = int(rng.integers(0, n))
        height = float(rng.uniform(0.0, 0.5))
        perturb.append([idx, height])
    params = {
        "n_particles": n,
        "spacing": ROPE_SPACING,
        "perturb": perturb,
        "scale": scale,
    }
    if kind == "RopeConfiguration":
        letter = "SCLU"[int(rng.integers(0, 4))]
        params["letter"] = letter
        goal = letter_polyline(letter, (n - 1) * ROPE_SPACING)
        params["goal_keypoints"] = [[float(c) for c in p] for p in goal]
    return params


def gen_cloth(rng, kind: str, scale: int = 1) -> dict:
    """Draw order: w, l, then the kind's own draws (crumple pick index +
    height / rotation / drop height)."""
    cloth_w = int(rng.integers(60, 121))
    cloth_l = int(rng.integers(60, 121))
    grid_w = max(4, cloth_w // scale)
    grid_l = max(4, cloth_l // scale)
    params = {
        "cloth_w": cloth_w,
        "cloth_l": cloth_l,
        "grid_w": grid_w,
        "grid_l": grid_l,
        "spacing": CLOTH_SPACING,
        "scale": scale,
    }
    if kind in ("SpreadCloth", "FoldCrumpledCloth"):
        params["pick_index"] = int(rng.integers(0, grid_w * grid_l))
        params["lift_height"] = float(rng.uniform(0.0, 0.5))
    elif kind == "FoldCloth":
        params["rotation"] = float(rng.uniform(0.0, 2.0 * math.pi))
    else:  # DropCloth / DropFoldCloth
        params["drop_height"] = float(rng.uniform(0.3, 0.6))
    return params


# ------------------------------------------------------------ goal letters


def _arc(center, radius, start_deg, end_deg, steps=48):
    ts = np.linspace(math.radians(start_deg), math.radians(end_deg), steps)
    return np.stack([center[0] + radius * np.cos(ts), center[1] + radius * np.sin(ts)], axis=1)


def _letter_points(letter: str) -> np.ndarray:
    if letter == "L":
        return np.array([[0.0, 1.0], [0.0, 0.0], [0.6, 0.0]])
    if letter == "U":
        return np.concatenate(
            [
                np.array([[0.0, 1.0], [0.0, 0.25]]),
                _arc((0.25, 0.25), 0.25, 180.0, 360.0),
                np.array([[0.5, 0.25], [0.5, 1.0]]),
            ]
        )
    if letter == "C":
        return _arc((0.5, 0.5), 0.5, 60.0, 300.0)
    if letter == "S":
        return np.concatenate(
            [_arc((0.0, 0.5), 0.25, 45.0, 270.0), _arc((0.0, 0.0), 0.25, 90.0, -135.0)]
        )
    raise KeyError(f"unknown letter {letter!r}")


def _resample_polyline(points: np.ndarray, k: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], k)
    out = np.empty((k, points.shape[1]))
    for d in range(points.shape[1]):
        out[:, d] = np.interp(targets, cum, points[:, d])
    return out


def letter_polyline(letter: str, arc_length: float, k: int = 10, y: float = 0.0125):
    """k goal keypoints tracing a letter on the floor plane, scaled so the
    traced arc length equals the rope length, centered at the origin."""
    pts = _letter_points(letter)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
    pts = pts * (arc_length / seg)
    out = np.zeros((pts.shape[0], 3))
    out[:, 0] = pts[:, 0]
    out[:, 1] = y
    out[:, 2] = pts[:, 1]
    out = _resample_polyline(out, k)
    out[:, 0] -= out[:, 0].mean()
    out[:, 2] -= out[:, 2].mean()
    return out


# ------------------------------------------------------------ scene builds


def _settle(scene, cfg, workspace, max_substeps=SETTLE_MAX_SUBSTEPS):
    """Run substeps with velocity damping until the scene comes to rest."""
    for _ in range(max_substeps):
        solve_step(scene, cfg, workspace)
        scene.particles.velocities *= SETTLE_DAMPING
        if max_speed(scene.particles) < SETTLE_SPEED:
            break


def _animate_lift(scene, cfg, workspace, picker_index, target_height):
    """Raise a picker to target_height in LIFT_STEP increments, simulating."""
    picker = scene.pickers[picker_index]
    while picker.position[1] < target_height - 1e-12:
        picker.position[1] += min(LIFT_STEP, target_height - picker.position[1])
        solve_step(scene, cfg, workspace)


def _pick_lift_drop(scene, cfg, workspace, particle: int, height: float):
    """Scripted perturbation: grab one particle, lift it, release, settle."""
    picker = Picker(position=scene.particles.positions[particle].copy())
    scene.pickers.append(picker)
    k = len(scene.pickers) - 1
    scene.attachments.append(Attachment(picker=k, particle=particle, offset=np.zeros(3)))
    _animate_lift(scene, cfg, workspace, k, height)
    scene.attachments.pop()
    scene.pickers.pop()
    _settle(scene, cfg, workspace)


def _build_water_scene(spec: TaskSpec, params: dict) -> Scene:
    cfg = spec.sim
    control = CupSpec(
        width=params["w_cc"], length=params["l_cc"], height=params["h_cc"], friction=0.1
    )
    boxes = build_cup(control)
    if spec.name != "TransportWater":
        target = CupSpec(
            width=params["w_tc"],
            length=params["l_tc"],
            height=params["h_tc"],
            pose=(params["distance"], 0.0, 0.0),
            friction=0.1,
        )
        boxes = boxes + build_cup(target)
    colliders = ColliderSet(halfspaces=[build_floor()], boxes=boxes)

    fw, fh, fl = params["fluid_w"], params["fluid_h"], params["fluid_l"]
    origin = (
        -(fw - 1) * FLUID_REST / 2.0,
        cfg.particle_radius + 0.001,
        -(fl - 1) * FLUID_REST / 2.0,
    )
    particles = build_fluid_block(FluidSpec(fw, fl, fh, rest_distance=FLUID_REST), origin)
    scene = Scene(particles, density=fluid_density_constraint(cfg), colliders=colliders)
    _settle(scene, cfg, Workspace())
    return scene


def _build_rope_scene(spec: TaskSpec, params: dict) -> Scene:
    cfg = spec.sim
    n, spacing = params["n_particles"], params["spacing"]
    rope = RopeSpec(n_particles=n, spacing=spacing)
    start = (-(n - 1) * spacing / 2.0, cfg.particle_radius, 0.0)
    particles, constraints = build_rope(rope, straight_polyline(n, spacing, start))
    scene = Scene(
        particles, constraints, colliders=ColliderSet(halfspaces=[build_floor()])
    )
    workspace = Workspace()
    for idx, height in params["perturb"]:
        _pick_lift_drop(scene, cfg, workspace, idx, height)
    hover = np.array([0.0, 0.05, 0.0])
    scene.pickers = [
        Picker(position=scene.particles.positions[0] + hover),
        Picker(position=scene.particles.positions[-1] + hover),
    ]
    return scene


def _build_cloth_scene(spec: TaskSpec, params: dict) -> Scene:
    cfg = spec.sim
    w, l, s = params["grid_w"], params["grid_l"], params["spacing"]
    origin = (-(w - 1) * s / 2.0, cfg.particle_radius, -(l - 1) * s / 2.0)
    particles, constraints = build_cloth(ClothSpec(w, l, spacing=s), origin)
    scene = Scene(
        particles, constraints, colliders=ColliderSet(halfspaces=[build_floor()])
    )
    workspace = Workspace()
    corner_a, corner_b = 0, (w - 1) * l  # the two corners of the j=0 edge

    if spec.name == "FoldCloth":
        theta = params["rotation"]
        c, si = math.cos(theta), math.sin(theta)
        rot = np.array([[c, 0.0, si], [0.0, 1.0, 0.0], [-si, 0.0, c]])
        particles.positions[:] = particles.positions @ rot.T
        particles.positions[:, 1] = cfg.particle_radius
    elif spec.name in ("SpreadCloth", "FoldCrumpledCloth"):
        _pick_lift_drop(scene, cfg, workspace, params["pick_index"], params["lift_height"])
    else:  # DropCloth / DropFoldCloth
        for k, corner in enumerate((corner_a, corner_b)):
            scene.pickers.append(Picker(position=particles.positions[corner].copy()))
            scene.attachments.append(Attachment(picker=k, particle=corner, offset=np.zeros(3)))
        height = params["drop_height"]
        picker_b = scene.pickers[1]
        picker_a = scene.pickers[0]
        while picker_a.position[1] < height - 1e-12:
            dy = min(LIFT_STEP, height - picker_a.position[1])
            picker_a.position[1] += dy
            picker_b.position[1] += dy
            solve_step(scene, cfg, workspace)
        _settle(scene, cfg, workspace)
        return scene

    if not scene.pickers:
        hover = np.array([0.0, 0.05, 0.0])
        scene.pickers = [
            Picker(position=scene.particles.positions[corner_a] + hover),
            Picker(position=scene.particles.positions[corner_b] + hover),
        ]
    return scene


_GEN = {
    "TransportWater": lambda rng, scale: gen_transport_water(rng, scale),
    "PourWater": lambda rng, scale: gen_pour_water(rng, scale),
    "PourWaterAmount": lambda rng, scale: gen_pour_water_amount(rng, scale),
    "StraightenRope": lambda rng, scale: gen_rope(rng, "StraightenRope", scale),
    "RopeConfiguration": lambda rng, scale: gen_rope(rng, "RopeConfiguration", scale),
    "SpreadCloth": lambda rng, scale: gen_cloth(rng, "SpreadCloth", scale),
    "FoldCloth": lambda rng, scale: gen_cloth(rng, "FoldCloth", scale),
    "FoldCrumpledCloth": lambda rng, scale: gen_cloth(rng, "FoldCrumpledCloth", scale),
    "DropCloth": lambda rng, scale: gen_cloth(rng, "DropCloth", scale),
    "DropFoldCloth": lambda rng, scale: gen_cloth(rng, "DropFoldCloth", scale),
}


def build_scene(spec: TaskSpec, params: dict) -> Scene:
    if spec.actuator in ("cup1d", "cup3d"):
        return _build_water_scene(spec, params)
    if spec.name in ("StraightenRope", "RopeConfiguration"):
        return _build_rope_scene(spec, params)
    return _build_cloth_scene(spec, params)


# -------------------------------------------------------------- generation


def generate_variation(task: str, master_seed: int, index: int, scale: int = 1):
    """Generate one settled variation; degenerate bound gaps retry on the
    next attempt stream (index, attempt)."""
    spec = task_spec(task)
    for attempt in range(16):
        rng = stream_rng(master_seed, index, attempt)
        params = _GEN[spec.name](rng, scale)
        scene = build_scene(spec, params)
        lower, upper = compute_bounds(spec, params, scene)
        if upper - lower >= DEGENERATE_GAP:
            return params, scene
    raise RuntimeError(f"variation {index} of {task} degenerate after 16 attempts")


def generate_all(task: str, master_seed: int, count: int = 1000, scale: int = 1):
    """Yield (index, params, scene) for indices 0..count-1."""
    for index in range(count):
        params, scene = generate_variation(task, master_seed, index, scale)
        yield index, params, scene
