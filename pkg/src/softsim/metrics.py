"""Performance bounds, normalized performance, and the evaluation harness.

Bounds are per variation: the lower bound is the performance after one
zero-action env step from the settled initial scene (StraightenRope instead
uses minus the straightened length); the upper bound is 1 for PourWater, the
flat-layout covered area for SpreadCloth, and 0 for every negative-distance
reward.  Normalization is affine: s_hat = (s - l) / (u - l), not clipped on
either side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .actuation import denormalize
from .pbd import Scene
from .rng import stream_rng
from .tasks import TaskSpec, make_runtime

__all__ = [
    "PerformanceBounds",
    "compute_bounds",
    "normalize",
    "EvalReport",
    "evaluate",
    "zero_policy",
    "random_policy",
    "make_policy",
    "format_report",
]


class PerformanceBounds(NamedTuple):
    lower: float
    upper: float


def compute_bounds(spec: TaskSpec, params: dict, scene: Scene) -> PerformanceBounds:
    """Per-variation performance bounds for a settled initial scene.

    Pure in its inputs: the zero step runs on a copy of the scene.
    """
    runtime = make_runtime(spec, params, scene.copy())
    if spec.name == "PourWater":
        upper = 1.0
    elif spec.name == "SpreadCloth":
        upper = runtime.flat_area()
    else:
        upper = 0.0
    if spec.name == "StraightenRope":
        lower = -(params["n_particles"] - 1) * params["spacing"]
    else:
        zero = denormalize(spec.action_space, np.zeros(spec.action_space.dimension))
        runtime.step_substeps(zero)
        lower = runtime.performance()
    return PerformanceBounds(float(lower), float(upper))


def normalize(s: float, bounds) -> float:
    """s_hat = (s - l) / (u - l); 0 at the lower bound, 1 at the upper."""
    lower, upper = bounds
    return (s - lower) / (upper - lower)


# ----------------------------------------------------------------- policies


def zero_policy(spec: TaskSpec) -> Callable:
    dim = spec.action_space.dimension
    return lambda obs, t, rng: np.zeros(dim)


def random_policy(spec: TaskSpec) -> Callable:
    dim = spec.action_space.dimension
    return lambda obs, t, rng: rng.uniform(-1.0, 1.0, dim)


def make_policy(name: str, spec: TaskSpec) -> Callable:
    if name == "zero":
        return zero_policy(spec)
    if name == "random":
        return random_policy(spec)
    raise KeyError(f"unknown policy {name!r}; valid: zero, random")


# --------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class EvalReport:
    """Final-step normalized performance over a set of variations."""

    task: str
    policy: str
    seed: int
    indices: tuple[int, ...]
    finals: tuple[float, ...]  # final-step normalized performance, per index
    finals_raw: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.indices)

    @property
    def median(self) -> float:
        return float(np.median(self.finals))

    @property
    def q25(self) -> float:
        return float(np.percentile(self.finals, 25))

    @property
    def q75(self) -> float:
        return float(np.percentile(self.finals, 75))

    @property
    def mean(self) -> float:
        return float(np.mean(self.finals))


def evaluate(env, policy, indices, seed: int = 0, policy_name: str = "custom") -> EvalReport:
    """One episode per variation index; aggregates final-step s_hat.

    Each episode draws from its own rng stream (seed, index) so results do
    not depend on evaluation order.
    """
    indices = sorted(int(i) for i in indices)
    finals = []
    finals_raw = []
    for index in indices:
        obs = env.reset(index)
        rng = stream_rng(seed, index)
        done = False
        t = 0
        s = env.performance()
        info = {"normalized_performance": normalize(s, env.bounds)}
        while not done:
            obs, s, done, info = env.step(policy(obs, t, rng))
            t += 1
        finals.append(float(info["normalized_performance"]))
        finals_raw.append(float(s))
    return EvalReport(
        task=env.spec.name,
        policy=policy_name,
        seed=seed,
        indices=tuple(indices),
        finals=tuple(finals),
        finals_raw=tuple(finals_raw),
    )


def format_report(report: EvalReport, flags: dict | None = None) -> str:
    """Deterministic text form: header (config echo), one line per episode,
    summary block."""
    lines = [
        "# softsim evaluation report",
        f"# task: {report.task}",
        f"# policy: {report.policy}",
        f"# seed: {report.seed}",
    ]
    for key in sorted(flags or {}):
        lines.append(f"# flag: {key} = {flags[key]}")
    lines.append("# columns: index seed final_s final_normalized")
    for index, raw, norm in zip(report.indices, report.finals_raw, report.finals):
        lines.append(f"{index} {report.seed} {raw:.9g} {norm:.9g}")
    lines.append(
        "# summary: count {} median {:.9g} q25 {:.9g} q75 {:.9g} mean {:.9g}".format(
            report.count, report.median, report.q25, report.q75, report.mean
        )
    )
    return "\n".join(lines) + "\n"
