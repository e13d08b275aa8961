import math

import numpy as np
import pytest

from srvfmotion.alignment import (
    DP_MOVES,
    KarcherConfig,
    SegmentCostTable,
    Warping,
    align,
    align_set_to_reference,
    frechet_variance,
    group_action,
    karcher_mean,
    karcher_mean_info,
    optimal_warping,
)
from srvfmotion.errors import EmptySet, NoConvergenceWarning
from srvfmotion.geometry import Srvf, geodesic_distance, geodesic_interpolate, sphere_inner

from util import random_srvf, smooth_srvf


def smooth_warping(m, w):
    grid = np.linspace(0.0, 1.0, m)
    values = grid + w * np.sin(math.pi * grid)
    values[0], values[-1] = 0.0, 1.0
    return Warping(values)


def exhaustive_min_cost(q1: Srvf, q2: Srvf) -> float:
    """Brute-force minimum over every monotone lattice path with the DP moves.

    Costs are accumulated left to right with the same per-segment kernel the
    DP uses, so the optimum matches the DP value bit for bit.
    """
    m = q1.n_intervals
    table = SegmentCostTable(q1.samples, q2.samples)
    best = [math.inf]

    def walk(i, j, acc):
        if i == m - 1 and j == m - 1:
            best[0] = min(best[0], acc)
            return
        for a, b in DP_MOVES:
            ni, nj = i + a, j + b
            if ni <= m - 1 and nj <= m - 1:
                walk(ni, nj, acc + table.cost(i, j, ni, nj))

    walk(0, 0, 0.0)
    return best[0]


def test_group_action_identity():
    rng = np.random.default_rng(20)
    q = random_srvf(rng, m=31, dim=4)
    out = group_action(q, Warping.identity(31))
    assert np.max(np.abs(out.samples - q.samples)) < 1e-9


def test_group_action_preserves_norm():
    rng = np.random.default_rng(21)
    for w in (-0.2, 0.1, 0.25):
        q = random_srvf(rng, m=31, dim=4)
        out = group_action(q, smooth_warping(31, w))
        assert abs(math.sqrt(sphere_inner(out, out)) - 1.0) < 1e-9


def test_group_action_inverse_round_trip():
    rng = np.random.default_rng(22)
    for w in (-0.12, 0.08, 0.12):
        q = smooth_srvf(rng, m=31, dim=4)
        gamma = smooth_warping(31, w)
        back = group_action(group_action(q, gamma), gamma.inverse())
        assert np.max(np.abs(back.samples - q.samples)) < 2e-3


def test_align_self_gives_identity():
    rng = np.random.default_rng(23)
    q = random_srvf(rng, m=15, dim=4)
    gamma, q_star, cost = align(q, q)
    assert gamma.is_identity()
    assert cost == 0.0
    assert np.array_equal(q_star.samples, q.samples)


def test_align_recovers_synthetic_warp():
    # |w| <= 0.2 keeps the warp slopes inside the move set's [1/3, 3] band
    rng = np.random.default_rng(24)
    for w in (-0.2, 0.18, 0.2):
        q1 = smooth_srvf(rng, m=31, dim=4)
        q2 = group_action(q1, smooth_warping(31, w))
        _, _, cost = align(q1, q2)
        assert cost <= 0.05
        assert cost <= 0.35 * geodesic_distance(q1, q2)


def test_align_never_increases_distance():
    rng = np.random.default_rng(25)
    for _ in range(200):
        q1 = random_srvf(rng, m=9, dim=4)
        q2 = random_srvf(rng, m=9, dim=4)
        _, _, cost = align(q1, q2)
        assert cost <= geodesic_distance(q1, q2) + 1e-9


@pytest.mark.parametrize("t", [4, 6, 8])
def test_dp_matches_exhaustive_search(t):
    rng = np.random.default_rng(26 + t)
    for _ in range(5):
        q1 = random_srvf(rng, m=t - 1, dim=4)
        q2 = random_srvf(rng, m=t - 1, dim=4)
        _, dp_value = optimal_warping(q1, q2)
        assert dp_value == exhaustive_min_cost(q1, q2)


def test_simultaneous_warp_invariance():
    rng = np.random.default_rng(30)
    q1 = smooth_srvf(rng, m=31, dim=4)
    q2 = smooth_srvf(rng, m=31, dim=4)
    base_cost = align(q1, q2)[2]
    gamma = smooth_warping(31, 0.1)
    warped_cost = align(group_action(q1, gamma), group_action(q2, gamma))[2]
    assert abs(warped_cost - base_cost) < 2e-3


def test_karcher_fixed_point_on_duplicates():
    rng = np.random.default_rng(31)
    q = random_srvf(rng)
    mean = karcher_mean([q, q, q])
    assert np.max(np.abs(mean.samples - q.samples)) < 1e-9
    assert karcher_mean([q]) is q


def test_karcher_two_points_is_geodesic_midpoint():
    rng = np.random.default_rng(32)
    for _ in range(5):
        q1 = random_srvf(rng)
        q2 = random_srvf(rng)
        mean = karcher_mean([q1, q2])
        assert abs(geodesic_distance(mean, q1) - geodesic_distance(mean, q2)) <= 1e-6
        mid = geodesic_interpolate(q1, q2, 0.5)
        assert geodesic_distance(mean, mid) <= 1e-6


def test_karcher_beats_every_member_as_frechet_center():
    rng = np.random.default_rng(33)
    for _ in range(5):
        base = random_srvf(rng)
        cloud = []
        for _ in range(8):
            jitter = 0.5 * rng.standard_normal(base.samples.shape)
            q = base.samples + jitter
            cloud.append(Srvf(q / math.sqrt(np.sum(q * q) / q.shape[0])))
        mean = karcher_mean(cloud)
        var = frechet_variance(mean, cloud)
        assert all(var <= frechet_variance(c, cloud) for c in cloud)


def test_karcher_permutation_invariance_bitwise():
    rng = np.random.default_rng(34)
    cloud = [random_srvf(rng) for _ in range(6)]
    m1 = karcher_mean(cloud)
    m2 = karcher_mean(list(reversed(cloud)))
    m3 = karcher_mean(cloud[3:] + cloud[:3])
    assert np.array_equal(m1.samples, m2.samples)
    assert np.array_equal(m1.samples, m3.samples)


def test_karcher_empty_set_and_no_convergence():
    rng = np.random.default_rng(35)
    with pytest.raises(EmptySet):
        karcher_mean([])
    cloud = [random_srvf(rng) for _ in range(4)]
    with pytest.warns(NoConvergenceWarning):
        _, info = karcher_mean_info(cloud, KarcherConfig(step=0.01, tol=1e-14, max_iters=2))
    assert not info.converged


def test_align_set_to_reference_contract():
    rng = np.random.default_rng(36)
    ref = smooth_srvf(rng, m=15, dim=4)
    cloud = [ref] + [group_action(ref, smooth_warping(15, w)) for w in (-0.2, -0.1, 0.1, 0.2)]
    aligned = align_set_to_reference(cloud, ref)
    assert np.array_equal(aligned[0].samples, ref.samples)
    for before, after in zip(cloud, aligned):
        assert geodesic_distance(ref, after) <= geodesic_distance(ref, before) + 1e-12
    twice = align_set_to_reference(aligned, ref)
    for once, again in zip(aligned, twice):
        d1 = geodesic_distance(ref, once)
        d2 = geodesic_distance(ref, again)
        assert abs(d1 - d2) <= 1e-6


def test_karcher_aligned_mode_runs():
    # alignment jitter plateaus around 1e-7, so the aligned mode needs a looser tol
    rng = np.random.default_rng(37)
    base = smooth_srvf(rng, m=15, dim=4)
    cloud = [group_action(base, smooth_warping(15, w)) for w in (-0.2, -0.05, 0.1, 0.2)]
    mean = karcher_mean(cloud, KarcherConfig(align_each_iter=True, tol=1e-6))
    assert all(align(mean, q)[2] < 0.2 for q in cloud)
