"""Reward function contracts, each checked against an independent oracle."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softsim.assets import CupSpec
from softsim.rewards import (
    WaterTally,
    classify_water,
    fold_pairs,
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
)

# --------------------------------------------------------------- oracles


def point_in_rotated_cavity_oracle(point, spec, pose):
    """Direct geometric check: transform into the cup frame, test the box."""
    x, y, theta = pose
    pivot = np.array([x, y + spec.height / 2.0, 0.0])
    c, s = math.cos(-theta), math.sin(-theta)
    inv = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    local = inv @ (np.asarray(point) - pivot)
    return (
        abs(local[0]) <= spec.width / 2.0
        and abs(local[1]) <= spec.height / 2.0
        and abs(local[2]) <= spec.length / 2.0
    )


def brute_force_assignment(a, b):
    """Minimum mean matching distance by enumerating all permutations."""
    n = len(a)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(a[i] - b[perm[i]]) for i in range(n)) / n
        best = min(best, cost)
    return best


def fine_raster_area(positions, radius, cell=0.001):
    """Covered top-down area on a 1 mm grid (vectorized, independent path)."""
    xz = np.asarray(positions)[:, [0, 2]]
    lo = xz.min(axis=0) - radius - 2 * cell
    hi = xz.max(axis=0) + radius + 2 * cell
    xs = np.arange(lo[0] + cell / 2, hi[0], cell)
    zs = np.arange(lo[1] + cell / 2, hi[1], cell)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    covered = np.zeros(gx.shape, dtype=bool)
    for p in xz:
        covered |= (gx - p[0]) ** 2 + (gz - p[1]) ** 2 <= radius * radius
    return covered.sum() * cell * cell


# ------------------------------------------------------------- water tally


def test_tally_partition_enforced():
    with pytest.raises(ValueError):
        WaterTally(1, 1, 1, 4)
    t = WaterTally(2, 1, 1, 4)
    assert t.total == 4


CONTROL = CupSpec(width=0.2, length=0.2, height=0.3)
TARGET = CupSpec(width=0.3, length=0.3, height=0.25)


def test_all_particles_inside_control_cup():
    pose_c, pose_t = (0.0, 0.0, 0.0), (0.6, 0.0, 0.0)
    pts = np.array([[0.05, 0.1, 0.0], [-0.03, 0.25, 0.04], [0.0, 0.01, -0.05]])
    tally = classify_water(pts, CONTROL, pose_c, TARGET, pose_t)
    assert (tally.in_control, tally.in_target, tally.spilled) == (3, 0, 0)


def test_particle_outside_both_cups_is_spilled():
    pose_c, pose_t = (0.0, 0.0, 0.0), (0.6, 0.0, 0.0)
    pts = np.array([[0.3, 0.0125, 0.0]])
    tally = classify_water(pts, CONTROL, pose_c, TARGET, pose_t)
    assert tally.spilled == 1


def test_control_cup_takes_precedence_when_cavities_overlap():
    pose = (0.0, 0.0, 0.0)
    pts = np.array([[0.0, 0.1, 0.0]])
    tally = classify_water(pts, CONTROL, pose, TARGET, pose)
    assert tally.in_control == 1 and tally.in_target == 0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30)
def test_classify_water_matches_geometric_oracle(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform([-0.5, 0.0, -0.5], [1.0, 0.5, 0.5], size=(20, 3))
    pose_c = (0.1, 0.05, rng.uniform(0, 1.2))
    pose_t = (0.6, 0.0, 0.0)
    tally = classify_water(pts, CONTROL, pose_c, TARGET, pose_t)
    nc = nt = ns = 0
    for p in pts:
        if point_in_rotated_cavity_oracle(p, CONTROL, pose_c):
            nc += 1
        elif point_in_rotated_cavity_oracle(p, TARGET, pose_t):
            nt += 1
        else:
            ns += 1
    assert (tally.in_control, tally.in_target, tally.spilled) == (nc, nt, ns)
    assert tally.in_control + tally.in_target + tally.spilled == tally.total


def test_tilted_cup_cavity_follows_rotation():
    spec = CupSpec(width=0.2, length=0.2, height=0.3)
    theta = -0.8
    pivot = np.array([0.0, 0.15, 0.0])
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    # a point near the rim corner of the cavity, mapped through the tilt
    inside_local = np.array([0.09, 0.14, 0.05])
    outside_local = np.array([0.11, 0.14, 0.05])  # just past the wall
    p_in = pivot + rot @ inside_local
    p_out = pivot + rot @ outside_local
    assert in_cup_cavity([p_in], spec, (0.0, 0.0, theta))[0]
    assert not in_cup_cavity([p_out], spec, (0.0, 0.0, theta))[0]
    # the same world point is not in the level cup's cavity
    assert not in_cup_cavity([p_in], spec, (0.0, 0.0, 0.0))[0]


# ----------------------------------------------------------- water rewards


def test_transport_at_target_no_spill_is_zero():
    assert reward_transport(WaterTally(10, 0, 0, 10), 0.5, 0.5) == 0.0


def test_transport_distance_term():
    assert reward_transport(WaterTally(10, 0, 0, 10), 0.0, 0.5) == pytest.approx(-0.5)


def test_transport_spill_penalty():
    assert reward_transport(WaterTally(5, 0, 5, 10), 0.5, 0.5) == pytest.approx(-2.0)


def test_pour_fraction():
    assert reward_pour(WaterTally(0, 64, 0, 64)) == 1.0
    assert reward_pour(WaterTally(64, 0, 0, 64)) == 0.0
    assert reward_pour(WaterTally(40, 16, 8, 64)) == 0.25


def test_pour_amount_deviation():
    assert reward_pour_amount(WaterTally(0, 10, 0, 10), 1.0) == 0.0
    assert reward_pour_amount(WaterTally(10, 0, 0, 10), 0.5) == pytest.approx(-0.5)
    assert reward_pour_amount(WaterTally(2, 8, 0, 10), 0.55) == pytest.approx(-0.25)


# ------------------------------------------------------------ rope rewards


def test_straighten_straight_rope_is_zero():
    pts = np.arange(10)[:, None] * [0.025, 0.0, 0.0]
    assert reward_straighten(pts, 9 * 0.025) == 0.0


def test_straighten_folded_rope_is_minus_length():
    pts = np.zeros((10, 3))
    pts[:5, 0] = np.arange(5) * 0.025
    pts[5:, 0] = (9 - np.arange(5, 10)) * 0.025  # walk back: endpoints coincide
    L = 9 * 0.025
    assert reward_straighten(pts, L) == pytest.approx(-L)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20)
def test_straighten_matches_direct_formula(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(12, 3))
    L = 11 * 0.025
    expected = -abs(np.linalg.norm(pts[-1] - pts[0]) - L)
    assert reward_straighten(pts, L) == pytest.approx(expected, rel=1e-12)


def test_rope_config_identical_sets_is_zero():
    pts = np.random.default_rng(3).normal(size=(10, 3))
    assert reward_rope_config(pts, pts) == pytest.approx(0.0, abs=1e-12)


def test_rope_config_swap_costs_nothing():
    goal = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    current = goal[[1, 0, 2]]
    assert reward_rope_config(current, goal) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(2, 7))
@settings(max_examples=25)
def test_rope_config_matches_factorial_oracle(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 3))
    b = rng.normal(size=(n, 3))
    assert reward_rope_config(a, b) == pytest.approx(-brute_force_assignment(a, b), rel=1e-9)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20)
def test_rope_config_invariant_under_keypoint_permutation(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(8, 3))
    b = rng.normal(size=(8, 3))
    shuffled = a[rng.permutation(8)]
    assert reward_rope_config(shuffled, b) == pytest.approx(reward_rope_config(a, b), rel=1e-12)


def test_rope_keypoints_even_spacing():
    pts = np.arange(41)[:, None] * [1.0, 0.0, 0.0]
    kp = rope_keypoints(pts, 10)
    assert kp.shape == (10, 3)
    assert kp[0, 0] == 0.0 and kp[-1, 0] == 40.0
    gaps = np.diff(kp[:, 0])
    assert gaps.min() >= 4 and gaps.max() <= 5


def test_rope_config_rejects_mismatched_counts():
    with pytest.raises(ValueError):
        reward_rope_config(np.zeros((3, 3)), np.zeros((4, 3)))


# ----------------------------------------------------------- cloth rewards


def test_spread_single_stack_matches_disc_area():
    pts = np.tile([0.123, 0.0, -0.456], (30, 1))
    area = reward_spread(pts, disc_radius=0.0125)
    fine = fine_raster_area(pts, 0.0125)
    assert area == pytest.approx(math.pi * 0.0125**2, abs=1.5e-4)
    assert area == pytest.approx(fine, abs=1.5e-4)


def test_spread_flat_cloth_near_footprint_area():
    w = l = 26
    s = 0.0125
    ii, jj = np.meshgrid(np.arange(w), np.arange(l), indexing="ij")
    pts = np.stack([ii.ravel() * s, np.zeros(w * l), jj.ravel() * s], axis=1)
    area = reward_spread(pts, disc_radius=s)
    interior = (w - 1) * (l - 1) * s * s
    outer = ((w - 1) * s + 2 * s) * ((l - 1) * s + 2 * s)
    assert interior * 0.95 <= area <= outer * 1.05
    fine = fine_raster_area(pts, s)
    assert area == pytest.approx(fine, rel=0.05)


def test_spread_empty_is_zero():
    assert reward_spread(np.zeros((0, 3))) == 0.0


def folded_cloth(w=4, l=6, s=0.02):
    """Positions where column j > middle coincides with its mirror."""
    pts = np.zeros((w * l, 3))
    for i in range(w):
        for j in range(l):
            jj = min(j, l - 1 - j)
            pts[i * l + j] = [i * s, 0.0, jj * s]
    return pts


def test_fold_perfect_fold_with_unmoved_centroid_is_zero():
    pts = folded_cloth()
    center = pts.mean(axis=0)
    assert reward_fold(pts, 4, 6, center) == pytest.approx(0.0, abs=1e-12)


def test_fold_flat_cloth_matches_closed_form():
    w, l, s = 5, 8, 0.0125
    ii, jj = np.meshgrid(np.arange(w), np.arange(l), indexing="ij")
    pts = np.stack([ii.ravel() * s, np.zeros(w * l), jj.ravel() * s], axis=1)
    center = pts.mean(axis=0)
    # mirror pair (i, j)..(i, l-1-j) sits (l-1-2j)*s apart on a flat grid
    js = np.arange((l - 1) // 2 + 1)
    expected = -np.mean((l - 1 - 2 * js) * s)
    assert reward_fold(pts, w, l, center) == pytest.approx(expected, rel=1e-12)


def test_fold_translation_penalty_only():
    pts = folded_cloth()
    center = pts.mean(axis=0)
    moved = pts + [0.06, 0.0, 0.08]  # 0.1 m displacement
    assert reward_fold(moved, 4, 6, center) == pytest.approx(-0.1, rel=1e-12)


def test_fold_odd_grid_middle_column_self_pairs():
    a, b = fold_pairs(3, 5)
    mids = [(x, y) for x, y in zip(a, b) if x == y]
    assert len(mids) == 3  # one per row, the j == 2 column
    assert all(x % 5 == 2 for x, _ in mids)


def test_drop_at_target_is_zero():
    target = np.random.default_rng(0).uniform(size=(12, 3))
    assert reward_drop(target, target) == 0.0


def test_drop_uniform_lift_is_minus_height():
    target = np.random.default_rng(1).uniform(size=(12, 3))
    lifted = target + [0.0, 0.3, 0.0]
    assert reward_drop(lifted, target) == pytest.approx(-0.3, rel=1e-12)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20)
def test_drop_matches_direct_formula(seed):
    rng = np.random.default_rng(seed)
    cur = rng.normal(size=(9, 3))
    tgt = rng.normal(size=(9, 3))
    expected = -np.linalg.norm(cur - tgt, axis=1).mean()
    assert reward_drop(cur, tgt) == pytest.approx(expected, rel=1e-12)
