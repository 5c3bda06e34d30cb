"""Cross-entropy method planning over environment snapshots.

The planner treats the environment as a black-box simulator: candidate
action sequences are scored by discounted return from the current state
(snapshot before, restore after, so scoring has no side effects), the top
fraction refits a diagonal Gaussian, and the best sequence ever scored is
returned.  MPC replans every step, warm-starting from the previous plan
shifted by one.

The step budget is per planning call: candidates = budget / (horizon *
iterations), e.g. 21000 / (7 * 10) = 300 candidates per refit round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .envs import EnvHandle, EpisodeRecord
from .rng import stream_rng

__all__ = ["CemConfig", "rollout_return", "cem_plan", "mpc_episode"]


@dataclass(frozen=True)
class CemConfig:
    plan_horizon: int
    budget: int = 21000
    iterations: int = 10
    elite_frac: float = 0.10
    gamma: float = 0.99
    init_std: float = 0.5
    std_floor: float = 0.01

    def __post_init__(self):
        if self.plan_horizon < 1:
            raise ValueError("plan_horizon must be at least 1")
        if self.candidates < self.n_elites:
            raise ValueError(
                f"budget {self.budget} gives {self.candidates} candidates per "
                f"round; need at least {self.n_elites} (the elite count)"
            )

    @property
    def candidates(self) -> int:
        return self.budget // (self.plan_horizon * self.iterations)

    @property
    def n_elites(self) -> int:
        return max(2, int(self.candidates * self.elite_frac))


def rollout_return(env, actions, gamma: float = 0.99) -> float:
    """Discounted return of an action sequence from the current env state.

    Snapshots before and restores after, so the env is untouched; stops
    early if the episode ends.  An empty sequence scores 0.
    """
    actions = np.asarray(actions, dtype=np.float64)
    if actions.size == 0:
        return 0.0
    blob = env.snapshot()
    total = 0.0
    discount = 1.0
    try:
        for a in actions:
            _, s, done, _ = env.step(a)
            total += discount * s
            discount *= gamma
            if done:
                break
    finally:
        env.restore(blob)
    return float(total)


def cem_plan(env, config: CemConfig, rng, init_mean=None) -> np.ndarray:
    """Plan an action sequence of shape (plan_horizon, action_dim).

    Candidates are clipped to the normalized action box [-1, 1]; ties in
    score break toward the earlier candidate; the refit std never drops
    below the floor.  Returns the best sequence observed across all
    rounds, which with a zero init_std is the mean sequence itself.
    """
    dim = env.action_dimension
    h = config.plan_horizon
    if init_mean is None:
        mean = np.zeros((h, dim))
    else:
        mean = np.array(init_mean, dtype=np.float64).reshape(h, dim)
    std = np.full((h, dim), config.init_std, dtype=np.float64)
    best_score = -math.inf
    best = np.clip(mean, -1.0, 1.0)
    for _ in range(config.iterations):
        noise = rng.standard_normal((config.candidates, h, dim))
        samples = np.clip(mean + std * noise, -1.0, 1.0)
        scores = [rollout_return(env, seq, config.gamma) for seq in samples]
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        if scores[order[0]] > best_score:
            best_score = scores[order[0]]
            best = samples[order[0]].copy()
        elite = samples[order[: config.n_elites]]
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), config.std_floor)
    return best


def mpc_episode(env: EnvHandle, config: CemConfig, index: int, seed: int = 0) -> EpisodeRecord:
    """Replan-every-step control of one episode.

    Warm start: the previous plan shifted one step, zero-padded; near the
    horizon the plan truncates to the remaining steps (which raises the
    per-round candidate count, keeping the budget spent).
    """
    env.reset(index)
    rng = stream_rng(seed, index)
    warm = None
    actions, perfs, norms = [], [], []
    while not env.done:
        h = min(config.plan_horizon, env.horizon - env.step_count)
        cfg = config if h == config.plan_horizon else replace(config, plan_horizon=h)
        init = None
        if warm is not None:
            init = np.vstack([warm[1:], np.zeros((1, env.action_dimension))])[:h]
        plan = cem_plan(env, cfg, rng, init_mean=init)
        a = plan[0]
        _, s, _, info = env.step(a)
        warm = plan
        actions.append(tuple(a))
        perfs.append(float(s))
        norms.append(float(info["normalized_performance"]))
    return EpisodeRecord(
        index=index,
        seed=seed,
        actions=tuple(actions),
        performances=tuple(perfs),
        normalized=tuple(norms),
    )
