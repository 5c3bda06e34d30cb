"""Episode-level environment handle over a variation cache.

An EnvHandle owns one task's cache and runs one episode at a time:
reset(index) copies the cached settled scene, rebuilds the task runtime,
and recomputes performance bounds; step(a) maps a normalized action onto
the actuator, runs the substep loop, and reports (obs, reward, done, info)
with reward = raw performance and info carrying both raw and normalized
performance plus task diagnostics.

Snapshots serialize everything an episode can mutate (particle state,
collider poses, picker positions, attachments, task mutable state, step
counter, episode rng) so a restore is bit-exact; planners lean on this.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actuation import denormalize
from .cache_io import VariationCache, decode_snapshot, encode_snapshot, load_cache
from .metrics import PerformanceBounds, compute_bounds, normalize
from .pbd import Scene
from .rng import stream_rng
from .tasks import make_runtime, task_spec
from .variations import TRAIN_SPLIT

__all__ = [
    "EnvStateError",
    "EnvHandle",
    "EpisodeRecord",
    "run_episode",
    "open_cache",
    "cache_path",
]

OBS_MODES = ("reduced", "full", "image")


class EnvStateError(RuntimeError):
    """Operation not valid in the episode's current state."""


def cache_path(cache_dir, task: str) -> Path:
    return Path(cache_dir) / f"{task}.cache"


def open_cache(path, task: str | None = None) -> VariationCache:
    path = Path(path)
    if not path.exists():
        hint = task or "<task>"
        raise FileNotFoundError(
            f"variation cache not found: {path}; generate it with "
            f"`softsim gen-cache --task {hint} --out {path}`"
        )
    return load_cache(path)


def _copy_scene_state(dst: Scene, src: Scene) -> None:
    """Copy every episode-mutable field of src into dst in place.

    In-place so the task runtime's array references stay valid; static
    structure (constraints, collider shapes) is asserted equal by shape.
    """
    if dst.particles.count != src.particles.count:
        raise ValueError("scene particle counts differ")
    dst.particles.positions[:] = src.particles.positions
    dst.particles.velocities[:] = src.particles.velocities
    dst.particles.inv_masses[:] = src.particles.inv_masses
    dst.particles.groups[:] = src.particles.groups
    for name in (
        "hs_normal",
        "hs_offset",
        "hs_friction",
        "box_center",
        "box_half",
        "box_rot",
        "box_vel",
        "box_friction",
    ):
        getattr(dst.colliders, name)[:] = getattr(src.colliders, name)
    for dp, sp in zip(dst.pickers, src.pickers, strict=True):
        dp.position[:] = sp.position
        dp.radius = sp.radius
    dst.attachments[:] = src.attachments


class EnvHandle:
    """One task environment bound to a variation cache."""

    def __init__(self, task: str, cache, obs_mode: str = "reduced", seed: int = 0):
        self.spec = task_spec(task)
        if obs_mode not in OBS_MODES:
            raise ValueError(f"obs_mode must be one of {OBS_MODES}, got {obs_mode!r}")
        if not isinstance(cache, VariationCache):
            cache = open_cache(cache, task)
        if cache.kind_id != self.spec.kind_id:
            raise ValueError(
                f"cache holds task kind {cache.kind_id}, but {self.spec.name} "
                f"is kind {self.spec.kind_id}"
            )
        self.cache = cache
        self.obs_mode = obs_mode
        self.seed = seed
        self.max_particles = cache.max_particles()
        self._by_index = {v.index: v for v in cache.variations}
        self._runtime = None
        self.scene = None
        self.bounds: PerformanceBounds | None = None
        self.rng = None
        self._variation_index = -1
        self._step_count = 0
        self._done = False

    # ------------------------------------------------------------- episode

    def reset(self, index: int):
        if index not in self._by_index:
            lo, hi = min(self._by_index), max(self._by_index)
            raise IndexError(
                f"variation index {index} not in cache (holds {lo}..{hi}, "
                f"count {self.cache.count})"
            )
        var = self._by_index[index]
        self.scene = var.scene.copy()
        self._runtime = make_runtime(self.spec, var.params, self.scene)
        self.bounds = compute_bounds(self.spec, var.params, var.scene)
        self.rng = stream_rng(self.seed, index)
        self._variation_index = index
        self._step_count = 0
        self._done = False
        return self._observe()

    def step(self, a_norm):
        if self._runtime is None:
            raise EnvStateError("reset(index) must be called before step")
        if self._done:
            raise EnvStateError("episode finished; reset or restore to continue")
        try:
            raw = denormalize(self.spec.action_space, a_norm)
        except ValueError as exc:
            raise ValueError(f"{self.spec.name}: {exc}") from None
        self._runtime.step_substeps(raw)
        self._step_count += 1
        self._done = self._step_count >= self.spec.horizon
        s = self._runtime.performance()
        info = {
            "performance": s,
            "normalized_performance": normalize(s, self.bounds),
        }
        info.update(self._runtime.diagnostics())
        return self._observe(), s, self._done, info

    # --------------------------------------------------------- observation

    def _observe(self):
        if self.obs_mode == "reduced":
            return self._runtime.reduced_state()
        if self.obs_mode == "full":
            return self._runtime.full_state(self.max_particles)
        from .render import render_env

        return render_env(self)

    def observe(self):
        if self._runtime is None:
            raise EnvStateError("reset(index) must be called before observe")
        return self._observe()

    def performance(self) -> float:
        if self._runtime is None:
            raise EnvStateError("reset(index) must be called before performance")
        return self._runtime.performance()

    def normalized_performance(self) -> float:
        return normalize(self.performance(), self.bounds)

    # ------------------------------------------------------------ snapshot

    def snapshot(self) -> bytes:
        if self._runtime is None:
            raise EnvStateError("reset(index) must be called before snapshot")
        return encode_snapshot(
            self.scene,
            self._step_count,
            self._done,
            self._runtime.mutable_state(),
            self.rng.bit_generator.state,
            kind_id=self.spec.kind_id,
            variation_index=self._variation_index,
        )

    def restore(self, blob: bytes):
        snap = decode_snapshot(blob)
        if snap.kind_id != self.spec.kind_id:
            raise ValueError(
                f"snapshot is for task kind {snap.kind_id}, but {self.spec.name} "
                f"is kind {self.spec.kind_id}"
            )
        if self._runtime is None or snap.variation_index != self._variation_index:
            self.reset(snap.variation_index)
        _copy_scene_state(self.scene, snap.scene)
        self._runtime.set_mutable_state(snap.mutable)
        self._step_count = snap.step_count
        self._done = snap.done
        self.rng.bit_generator.state = snap.rng_state
        return self._observe()

    # ------------------------------------------------------------- queries

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    @property
    def action_dimension(self) -> int:
        return self.spec.action_space.dimension

    @property
    def step_count(self) -> int:
        return self._step_count

    @property
    def done(self) -> bool:
        return self._done

    @property
    def variation_index(self) -> int:
        return self._variation_index

    def split_indices(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """(train, eval) variation indices: first 80% / last 20% by index."""
        indices = sorted(self._by_index)
        cut = int(len(indices) * TRAIN_SPLIT)
        return tuple(indices[:cut]), tuple(indices[cut:])


@dataclass(frozen=True)
class EpisodeRecord:
    """One full episode: actions taken and per-step performance."""

    index: int
    seed: int
    actions: tuple
    performances: tuple
    normalized: tuple

    @property
    def final_performance(self) -> float:
        return self.performances[-1]

    @property
    def final_normalized(self) -> float:
        return self.normalized[-1]


def run_episode(env: EnvHandle, policy, index: int, seed: int = 0) -> EpisodeRecord:
    """Roll one policy episode to the horizon and record the trace."""
    obs = env.reset(index)
    rng = stream_rng(seed, index)
    actions, perfs, norms = [], [], []
    t = 0
    while not env.done:
        a = np.asarray(policy(obs, t, rng), dtype=np.float64)
        obs, s, _, info = env.step(a)
        actions.append(tuple(a))
        perfs.append(float(s))
        norms.append(float(info["normalized_performance"]))
        t += 1
    return EpisodeRecord(
        index=index,
        seed=seed,
        actions=tuple(actions),
        performances=tuple(perfs),
        normalized=tuple(norms),
    )
