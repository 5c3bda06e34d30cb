"""Deterministic software renderer: z-buffered point sprites over box faces.

Particles draw as screen-space discs colored by material group (fluid blue,
cloth pink, rope yellow), colliders as flat-shaded boxes, the ground
half-space as a ray-cast gray floor with a radial shading gradient, pickers
as dark discs.  PourWaterAmount overlays a 2-pixel pure-red goal-level line
on the target cup; nothing else in the palette ever hits exact (255, 0, 0).

Output is a pure function of the inputs: same scene, same camera, same
bytes.  Frames are uint8 arrays of shape (d, d, 3), RGB, top row first,
written as binary PPM (P6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pbd import GROUP_CLOTH, GROUP_FLUID, GROUP_ROPE, Scene

__all__ = [
    "Camera",
    "task_camera",
    "render_frame",
    "render_env",
    "write_image",
    "read_image",
    "frame_name",
]

BACKGROUND = np.array([214, 218, 223], dtype=np.uint8)
FLOOR_BASE = 138.0
FLOOR_GAIN = 52.0  # radial gradient amplitude
BOX_COLOR = np.array([176.0, 186.0, 196.0])
PICKER_COLOR = np.array([92, 94, 99], dtype=np.uint8)
GOAL_RED = np.array([255, 0, 0], dtype=np.uint8)
GROUP_COLORS = {
    GROUP_FLUID: np.array([58, 120, 232], dtype=np.uint8),
    GROUP_CLOTH: np.array([240, 130, 168], dtype=np.uint8),
    GROUP_ROPE: np.array([236, 200, 64], dtype=np.uint8),
}
DEFAULT_COLOR = np.array([128, 128, 128], dtype=np.uint8)
LIGHT_DIR = np.array([0.4, 1.0, 0.6]) / np.linalg.norm([0.4, 1.0, 0.6])
NEAR = 0.05
# goal marker stays legible at any cup distance: never shorter than this
MIN_GOAL_LINE_PX = 44


@dataclass(frozen=True)
class Camera:
    eye: tuple
    look_at: tuple
    up: tuple = (0.0, 1.0, 0.0)
    fov: float = math.radians(45.0)
    d: int = 128

    def __post_init__(self):
        if np.allclose(self.eye, self.look_at):
            raise ValueError("camera eye must differ from look_at")
        if self.d < 16:
            raise ValueError("image size must be at least 16 pixels")

    def basis(self):
        eye = np.asarray(self.eye, dtype=np.float64)
        forward = np.asarray(self.look_at, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return eye, forward, right, up


# fixed oblique poses framing each family's largest variation
_CAMERAS = {
    "transport": Camera(eye=(0.6, 1.1, 1.55), look_at=(0.6, 0.12, 0.0), fov=math.radians(60.0)),
    "pour": Camera(eye=(0.75, 1.1, 1.85), look_at=(0.75, 0.2, 0.0), fov=math.radians(55.0)),
    "rope": Camera(eye=(0.0, 1.35, 1.3), look_at=(0.0, 0.0, 0.0)),
    "cloth": Camera(eye=(0.0, 1.6, 1.9), look_at=(0.0, 0.0, 0.0), fov=math.radians(55.0)),
    "drop": Camera(eye=(0.0, 1.3, 2.0), look_at=(0.0, 0.3, 0.0), fov=math.radians(55.0)),
}
_TASK_FAMILY = {
    "TransportWater": "transport",
    "PourWater": "pour",
    "PourWaterAmount": "pour",
    "StraightenRope": "rope",
    "RopeConfiguration": "rope",
    "SpreadCloth": "cloth",
    "FoldCloth": "cloth",
    "FoldCrumpledCloth": "cloth",
    "DropCloth": "drop",
    "DropFoldCloth": "drop",
}


def task_camera(task: str, d: int = 128) -> Camera:
    base = _CAMERAS[_TASK_FAMILY[task]]
    if d == base.d:
        return base
    return Camera(eye=base.eye, look_at=base.look_at, up=base.up, fov=base.fov, d=d)


# ------------------------------------------------------------- projection


def _project(points, camera: Camera, basis):
    """World points -> (u, v, z): pixel coords (float) and view depth."""
    eye, forward, right, up = basis
    rel = np.atleast_2d(points) - eye
    z = rel @ forward
    x = rel @ right
    y = rel @ up
    half = math.tan(camera.fov / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (x / (z * half) + 1.0) * 0.5 * camera.d
        v = (1.0 - y / (z * half)) * 0.5 * camera.d
    return u, v, z


def _raster_floor(img, zbuf, colliders, camera: Camera, basis):
    """Ray-cast every half-space whose surface faces up; radial gray shade."""
    eye, forward, right, up = basis
    d = camera.d
    half = math.tan(camera.fov / 2.0)
    col = (np.arange(d) + 0.5) / d * 2.0 - 1.0
    row = 1.0 - (np.arange(d) + 0.5) / d * 2.0  # top row maps to +1 (up)
    sx, sy = np.meshgrid(col, row)
    dirs = (
        forward[None, None, :]
        + sx[:, :, None] * half * right[None, None, :]
        + sy[:, :, None] * half * up[None, None, :]
    )
    look = np.asarray(camera.look_at, dtype=np.float64)
    for k in range(colliders.hs_offset.shape[0]):
        n = colliders.hs_normal[k]
        if n[1] < 0.7:  # only roughly-horizontal planes draw as floor
            continue
        denom = dirs @ n
        t = (colliders.hs_offset[k] - eye @ n) / denom
        hit = (denom != 0.0) & (t > NEAR)
        depth = t * (dirs @ forward)
        pts = eye[None, None, :] + t[:, :, None] * dirs
        dist2 = (pts[:, :, 0] - look[0]) ** 2 + (pts[:, :, 2] - look[2]) ** 2
        shade = FLOOR_BASE + FLOOR_GAIN * np.exp(-0.55 * dist2)
        write = hit & (depth < zbuf)
        zbuf[write] = depth[write]
        gray = np.clip(shade, 0, 254).astype(np.uint8)
        for c in range(3):
            ch = img[:, :, c]
            ch[write] = gray[write]


_FACES = (
    ((0, 1, 3, 2), (-1, 0, 0)),
    ((4, 6, 7, 5), (1, 0, 0)),
    ((0, 4, 5, 1), (0, -1, 0)),
    ((2, 3, 7, 6), (0, 1, 0)),
    ((0, 2, 6, 4), (0, 0, -1)),
    ((1, 5, 7, 3), (0, 0, 1)),
)


def _fill_triangle(img, zbuf, p0, p1, p2, color):
    (u0, v0, z0), (u1, v1, z1), (u2, v2, z2) = p0, p1, p2
    if min(z0, z1, z2) <= NEAR:
        return
    d = img.shape[0]
    lo_u = max(int(math.floor(min(u0, u1, u2))), 0)
    hi_u = min(int(math.ceil(max(u0, u1, u2))) + 1, d)
    lo_v = max(int(math.floor(min(v0, v1, v2))), 0)
    hi_v = min(int(math.ceil(max(v0, v1, v2))) + 1, d)
    if lo_u >= hi_u or lo_v >= hi_v:
        return
    area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
    if abs(area) < 1e-12:
        return
    uu, vv = np.meshgrid(
        np.arange(lo_u, hi_u) + 0.5, np.arange(lo_v, hi_v) + 0.5
    )
    w0 = ((u1 - uu) * (v2 - vv) - (u2 - uu) * (v1 - vv)) / area
    w1 = ((u2 - uu) * (v0 - vv) - (u0 - uu) * (v2 - vv)) / area
    w2 = 1.0 - w0 - w1
    inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    if not inside.any():
        return
    z = w0 * z0 + w1 * z1 + w2 * z2
    patch_z = zbuf[lo_v:hi_v, lo_u:hi_u]
    write = inside & (z < patch_z)
    patch_z[write] = z[write]
    patch_c = img[lo_v:hi_v, lo_u:hi_u]
    patch_c[write] = color


def _raster_boxes(img, zbuf, colliders, camera: Camera, basis):
    for box in colliders.boxes():
        corners = box.corners()
        rot = box.rotation_matrix()
        u, v, z = _project(corners, camera, basis)
        for quad, local_n in _FACES:
            n = rot @ np.asarray(local_n, dtype=np.float64)
            shade = 0.5 + 0.5 * abs(float(n @ LIGHT_DIR))
            color = np.clip(BOX_COLOR * shade, 0, 254).astype(np.uint8)
            a, b, c, e = quad
            _fill_triangle(
                img, zbuf, (u[a], v[a], z[a]), (u[b], v[b], z[b]), (u[c], v[c], z[c]), color
            )
            _fill_triangle(
                img, zbuf, (u[a], v[a], z[a]), (u[c], v[c], z[c]), (u[e], v[e], z[e]), color
            )


def _raster_discs(img, zbuf, centers, radii, colors, camera: Camera, basis):
    if len(centers) == 0:
        return
    d = camera.d
    half = math.tan(camera.fov / 2.0)
    u, v, z = _project(centers, camera, basis)
    r_px = np.asarray(radii) / (z * half) * (d / 2.0)
    order = np.argsort(z)[::-1]  # far to near keeps writes coherent
    for i in order:
        if z[i] <= NEAR or not np.isfinite(r_px[i]):
            continue
        r = max(float(r_px[i]), 0.6)
        lo_u = max(int(math.floor(u[i] - r)), 0)
        hi_u = min(int(math.ceil(u[i] + r)) + 1, d)
        lo_v = max(int(math.floor(v[i] - r)), 0)
        hi_v = min(int(math.ceil(v[i] + r)) + 1, d)
        if lo_u >= hi_u or lo_v >= hi_v:
            continue
        uu, vv = np.meshgrid(
            np.arange(lo_u, hi_u) + 0.5, np.arange(lo_v, hi_v) + 0.5
        )
        inside = (uu - u[i]) ** 2 + (vv - v[i]) ** 2 <= r * r
        patch_z = zbuf[lo_v:hi_v, lo_u:hi_u]
        write = inside & (z[i] < patch_z)
        patch_z[write] = z[i]
        img[lo_v:hi_v, lo_u:hi_u][write] = colors[i]


def _overlay_line(img, camera: Camera, basis, p0, p1, thickness=2):
    """Screen-space marker line; ignores the z-buffer so it is always visible."""
    d = camera.d
    (u0, u1), (v0, v1), (z0, z1) = _project(np.array([p0, p1]), camera, basis)
    if z0 <= NEAR or z1 <= NEAR:
        return
    length = math.hypot(u1 - u0, v1 - v0)
    if length < MIN_GOAL_LINE_PX / thickness:
        pad = (MIN_GOAL_LINE_PX / thickness - length) / 2.0
        du, dv = (u1 - u0) / max(length, 1e-9), (v1 - v0) / max(length, 1e-9)
        u0, v0 = u0 - du * pad, v0 - dv * pad
        u1, v1 = u1 + du * pad, v1 + dv * pad
        length = math.hypot(u1 - u0, v1 - v0)
    steps = max(int(math.ceil(length)) * 2, 2)
    for s in range(steps + 1):
        t = s / steps
        u = u0 + (u1 - u0) * t
        v = v0 + (v1 - v0) * t
        iu, iv = int(round(u)), int(round(v))
        for dv_px in range(thickness):
            row = iv + dv_px
            if 0 <= row < d and 0 <= iu < d:
                img[row, iu] = GOAL_RED


def render_frame(scene: Scene, camera: Camera, kind: int = 0, goal_line=None) -> np.ndarray:
    """Render one frame; pure in (scene, camera, kind, goal_line)."""
    basis = camera.basis()
    d = camera.d
    img = np.empty((d, d, 3), dtype=np.uint8)
    img[:, :] = BACKGROUND
    zbuf = np.full((d, d), np.inf)
    _raster_floor(img, zbuf, scene.colliders, camera, basis)
    _raster_boxes(img, zbuf, scene.colliders, camera, basis)
    n = scene.particles.count
    if n:
        colors = np.empty((n, 3), dtype=np.uint8)
        colors[:] = DEFAULT_COLOR
        for group, color in GROUP_COLORS.items():
            colors[scene.particles.groups == group] = color
        radii = np.where(scene.particles.groups == GROUP_CLOTH, 0.00625, 0.0125)
        _raster_discs(
            img, zbuf, scene.particles.positions, radii, colors, camera, basis
        )
    if scene.pickers:
        centers = np.array([p.position for p in scene.pickers])
        radii = np.array([p.radius for p in scene.pickers])
        colors = np.tile(PICKER_COLOR, (len(scene.pickers), 1))
        _raster_discs(img, zbuf, centers, radii, colors, camera, basis)
    if goal_line is not None:
        _overlay_line(img, camera, basis, goal_line[0], goal_line[1])
    return img


def render_env(env) -> np.ndarray:
    """Frame for an env's current state with its task camera and markers."""
    camera = task_camera(env.spec.name)
    goal_line = None
    if env.spec.name == "PourWaterAmount":
        p = env._runtime.params
        y = p["goal"] * p["h_tc"]
        x0 = p["distance"] - p["w_tc"] / 2.0
        x1 = p["distance"] + p["w_tc"] / 2.0
        goal_line = ((x0, y, 0.0), (x1, y, 0.0))
    return render_frame(env.scene, camera, kind=env.spec.kind_id, goal_line=goal_line)


# ----------------------------------------------------------------- images


def write_image(frame: np.ndarray, path) -> None:
    """Binary PPM, P6 maxval 255, bit-exact with the frame buffer."""
    d = frame.shape[0]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{frame.shape[1]} {d}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(frame, dtype=np.uint8).tobytes())


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P6":
            raise ValueError("not a binary PPM file")
        w, h = (int(tok) for tok in fh.readline().split())
        if fh.readline().strip() != b"255":
            raise ValueError("unsupported PPM maxval")
        data = fh.read(3 * w * h)
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)


def frame_name(step: int) -> str:
    return f"frame_{step:05d}.ppm"
