"""Binary cache files for generated variations, and snapshot blobs.

Cache file layout (all integers little-endian):
  magic "SGV1" (4 bytes)
  task kind id        u16
  master seed         u64
  variation count     u32
  then per variation:
    index             u32
    params length     u32, followed by canonical JSON (sorted keys, compact)
    scene block       (below, particle arrays as f32)

Scene block:
  particle count n    u32
  positions           n*3 particle-precision floats
  velocities          n*3 particle-precision floats
  inv_masses          n   particle-precision floats
  groups              n   u8
  distance count      u32; i u32[], j u32[], rest f64[], stiffness f64[],
                      kind u8[] (0 stretch, 1 bend)
  has_density         u8; when 1: group u8, rest_density f64,
                      kernel_radius f64, relaxation f64
  attachment count    u32; picker u32[], particle u32[], offsets f64[n,3]
  half-space count    u32; normals f64[n,3], offsets f64[], frictions f64[]
  box count           u32; centers f64[n,3], half_extents f64[n,3],
                      rotations f64[n,3,3], velocities f64[n,3], frictions f64[]
  picker count        u32; positions f64[n,3], radii f64[]

Snapshot blobs reuse the same scene block at f64 particle precision (restores
must be bit-exact) prefixed with magic "SGS1", the task kind id (u16), the
variation index (u32), the step count (u32), the done flag (u8), task mutable
state, and the episode rng state.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .pbd import (
    Attachment,
    Box,
    ColliderSet,
    DensityConstraint,
    DistanceSet,
    HalfSpace,
    ParticleSet,
    Picker,
    Scene,
)

__all__ = [
    "CACHE_MAGIC",
    "SNAPSHOT_MAGIC",
    "CachedVariation",
    "VariationCache",
    "canonical_params_bytes",
    "write_cache",
    "load_cache",
    "Snapshot",
    "encode_snapshot",
    "decode_snapshot",
]

CACHE_MAGIC = b"SGV1"
SNAPSHOT_MAGIC = b"SGS1"


def canonical_params_bytes(params: dict) -> bytes:
    """Key-sorted, compact JSON; byte-identical for equal param dicts."""
    return json.dumps(params, sort_keys=True, separators=(",", ":")).encode("utf-8")


class CacheFormatError(ValueError):
    pass


# ------------------------------------------------------------- scene block


def _arr_bytes(a, dtype) -> bytes:
    return np.ascontiguousarray(a, dtype=dtype).tobytes()


def _scene_bytes(scene: Scene, particle_dtype: str) -> bytes:
    ps = scene.particles
    out = bytearray()
    out += struct.pack("<I", ps.count)
    out += _arr_bytes(ps.positions, particle_dtype)
    out += _arr_bytes(ps.velocities, particle_dtype)
    out += _arr_bytes(ps.inv_masses, particle_dtype)
    out += _arr_bytes(ps.groups, "u1")

    dist = scene.distance
    out += struct.pack("<I", len(dist))
    if len(dist):
        out += _arr_bytes(dist.i, "<u4")
        out += _arr_bytes(dist.j, "<u4")
        out += _arr_bytes(dist.rest, "<f8")
        out += _arr_bytes(dist.stiffness, "<f8")
        out += _arr_bytes(dist.kind, "u1")

    if scene.density is not None:
        d = scene.density
        out += struct.pack("<BB", 1, d.group)
        out += struct.pack("<ddd", d.rest_density, d.kernel_radius, d.relaxation)
    else:
        out += struct.pack("<B", 0)

    out += struct.pack("<I", len(scene.attachments))
    if scene.attachments:
        out += _arr_bytes([a.picker for a in scene.attachments], "<u4")
        out += _arr_bytes([a.particle for a in scene.attachments], "<u4")
        out += _arr_bytes([a.offset for a in scene.attachments], "<f8")

    cols = scene.colliders
    out += struct.pack("<I", cols.n_halfspaces)
    if cols.n_halfspaces:
        out += _arr_bytes(cols.hs_normal, "<f8")
        out += _arr_bytes(cols.hs_offset, "<f8")
        out += _arr_bytes(cols.hs_friction, "<f8")
    out += struct.pack("<I", cols.n_boxes)
    if cols.n_boxes:
        out += _arr_bytes(cols.box_center, "<f8")
        out += _arr_bytes(cols.box_half, "<f8")
        out += _arr_bytes(cols.box_rot, "<f8")
        out += _arr_bytes(cols.box_vel, "<f8")
        out += _arr_bytes(cols.box_friction, "<f8")

    out += struct.pack("<I", len(scene.pickers))
    if scene.pickers:
        out += _arr_bytes([p.position for p in scene.pickers], "<f8")
        out += _arr_bytes([p.radius for p in scene.pickers], "<f8")
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes, off: int = 0):
        self.buf = buf
        self.off = off

    def u32(self) -> int:
        (v,) = struct.unpack_from("<I", self.buf, self.off)
        self.off += 4
        return v

    def unpack(self, fmt: str):
        v = struct.unpack_from(fmt, self.buf, self.off)
        self.off += struct.calcsize(fmt)
        return v

    def array(self, dtype: str, shape) -> np.ndarray:
        a = np.frombuffer(self.buf, dtype=dtype, count=int(np.prod(shape)), offset=self.off)
        self.off += a.nbytes
        return a.reshape(shape).copy()

    def raw(self, n: int) -> bytes:
        b = self.buf[self.off : self.off + n]
        if len(b) != n:
            raise CacheFormatError("truncated file")
        self.off += n
        return bytes(b)


def _read_scene(r: _Reader, particle_dtype: str) -> Scene:
    n = r.u32()
    positions = r.array(particle_dtype, (n, 3)).astype(np.float64)
    velocities = r.array(particle_dtype, (n, 3)).astype(np.float64)
    inv_masses = r.array(particle_dtype, (n,)).astype(np.float64)
    groups = r.array("u1", (n,)).astype(np.int32)
    particles = ParticleSet(positions, velocities, inv_masses, groups)

    nd = r.u32()
    if nd:
        di = r.array("<u4", (nd,))
        dj = r.array("<u4", (nd,))
        rest = r.array("<f8", (nd,))
        stiff = r.array("<f8", (nd,))
        kind = r.array("u1", (nd,))
        distance = DistanceSet(di, dj, rest, stiff, kind)
    else:
        distance = DistanceSet.empty()

    (has_density,) = r.unpack("<B")
    density = None
    if has_density:
        (group,) = r.unpack("<B")
        rest_density, kernel_radius, relaxation = r.unpack("<ddd")
        density = DensityConstraint(rest_density, kernel_radius, group, relaxation)

    na = r.u32()
    attachments = []
    if na:
        apk = r.array("<u4", (na,))
        apt = r.array("<u4", (na,))
        aof = r.array("<f8", (na, 3))
        attachments = [
            Attachment(int(apk[k]), int(apt[k]), aof[k].copy()) for k in range(na)
        ]

    nh = r.u32()
    halfspaces = []
    if nh:
        hn = r.array("<f8", (nh, 3))
        ho = r.array("<f8", (nh,))
        hf = r.array("<f8", (nh,))
        halfspaces = [
            HalfSpace(tuple(hn[k]), float(ho[k]), float(hf[k])) for k in range(nh)
        ]

    nb = r.u32()
    boxes = []
    if nb:
        bc = r.array("<f8", (nb, 3))
        bh = r.array("<f8", (nb, 3))
        br = r.array("<f8", (nb, 3, 3))
        bv = r.array("<f8", (nb, 3))
        bf = r.array("<f8", (nb,))
        boxes = [
            Box(
                center=tuple(bc[k]),
                half_extents=tuple(bh[k]),
                rotation=br[k].copy(),
                velocity=tuple(bv[k]),
                friction=float(bf[k]),
            )
            for k in range(nb)
        ]

    np_ = r.u32()
    pickers = []
    if np_:
        pp = r.array("<f8", (np_, 3))
        pr = r.array("<f8", (np_,))
        pickers = [Picker(pp[k].copy(), float(pr[k])) for k in range(np_)]

    return Scene(
        particles,
        distance,
        density,
        ColliderSet(halfspaces=halfspaces, boxes=boxes),
        pickers,
        attachments,
    )


# -------------------------------------------------------------- cache files


@dataclass
class CachedVariation:
    """One settled variation: params plus a scene template (copy to use)."""

    index: int
    params: dict
    scene: Scene


@dataclass
class VariationCache:
    kind_id: int
    master_seed: int
    variations: list[CachedVariation]

    @property
    def count(self) -> int:
        return len(self.variations)

    def max_particles(self) -> int:
        return max((v.scene.particles.count for v in self.variations), default=0)


def write_cache(path, kind_id: int, master_seed: int, variations) -> None:
    """variations: iterable of (index, params, scene)."""
    records = list(variations)
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<HQI", kind_id, master_seed, len(records)))
        for index, params, scene in records:
            blob = canonical_params_bytes(params)
            f.write(struct.pack("<II", index, len(blob)))
            f.write(blob)
            f.write(_scene_bytes(scene, "<f4"))


def load_cache(path) -> VariationCache:
    with open(path, "rb") as f:
        buf = f.read()
    r = _Reader(buf)
    if r.raw(4) != CACHE_MAGIC:
        raise CacheFormatError(f"{path}: not a variation cache")
    kind_id, master_seed, count = r.unpack("<HQI")
    variations = []
    for _ in range(count):
        index = r.u32()
        plen = r.u32()
        params = json.loads(r.raw(plen).decode("utf-8"))
        scene = _read_scene(r, "<f4")
        variations.append(CachedVariation(index, params, scene))
    if r.off != len(buf):
        raise CacheFormatError(f"{path}: {len(buf) - r.off} trailing bytes")
    return VariationCache(kind_id, master_seed, variations)


# ---------------------------------------------------------------- snapshots


@dataclass
class Snapshot:
    """Decoded episode state: enough to resume bit-exactly."""

    scene: Scene
    step_count: int
    done: bool
    mutable: np.ndarray
    rng_state: dict
    kind_id: int
    variation_index: int


def _json_scalar(v):
    # numpy Generator state dicts hold uint64 arrays and numpy ints
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.integer):
        return int(v)
    raise TypeError(f"not serializable: {type(v)!r}")


def encode_snapshot(
    scene: Scene,
    step_count: int,
    done: bool,
    mutable,
    rng_state,
    kind_id: int = 0,
    variation_index: int = 0,
) -> bytes:
    out = bytearray()
    out += SNAPSHOT_MAGIC
    out += struct.pack("<HIIB", kind_id, variation_index, step_count, 1 if done else 0)
    m = np.ascontiguousarray(mutable, dtype=np.float64)
    out += struct.pack("<I", m.size)
    out += m.tobytes()
    rblob = json.dumps(
        rng_state, sort_keys=True, separators=(",", ":"), default=_json_scalar
    ).encode("utf-8")
    out += struct.pack("<I", len(rblob))
    out += rblob
    out += _scene_bytes(scene, "<f8")
    return bytes(out)


def decode_snapshot(blob: bytes):
    r = _Reader(blob)
    if r.raw(4) != SNAPSHOT_MAGIC:
        raise CacheFormatError("not a snapshot blob")
    kind_id, variation_index, step_count, done = r.unpack("<HIIB")
    msize = r.u32()
    mutable = r.array("<f8", (msize,))
    rlen = r.u32()
    rng_state = json.loads(r.raw(rlen).decode("utf-8"))
    scene = _read_scene(r, "<f8")
    if r.off != len(blob):
        raise CacheFormatError("trailing bytes in snapshot")
    return Snapshot(
        scene=scene,
        step_count=step_count,
        done=bool(done),
        mutable=mutable,
        rng_state=rng_state,
        kind_id=kind_id,
        variation_index=variation_index,
    )
