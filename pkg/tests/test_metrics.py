import math

import numpy as np
import pytest

from app.core.exceptions import ContractViolationError, InvalidArgumentError
from app.schemas.metrics import UNBOUNDED, EdgeMetrics, RelativeKinematics
from app.services.metrics import (
    duration_by_acute_form,
    duration_by_obtuse_form,
    link_connectivity,
    link_duration,
    normalized_strength,
    path_metrics,
    relative_kinematics,
)


def kin(delta_d, delta_v, alpha, d=300.0):
    return RelativeKinematics(delta_d=delta_d, delta_v=delta_v, alpha=alpha, d=d)


# =====================================================================
# STRENGTH
# =====================================================================

def test_normalized_strength_endpoints():
    assert normalized_strength(-45.0, -80.0, -10.0) == pytest.approx(0.5)
    assert normalized_strength(-10.0, -80.0, -10.0) == 1.0


@pytest.mark.parametrize("mu", [-80.0, -90.0, -5.0])
def test_normalized_strength_outside_contract(mu):
    with pytest.raises(ContractViolationError):
        normalized_strength(mu, -80.0, -10.0)


# =====================================================================
# DURATION
# =====================================================================

@pytest.mark.parametrize("k, expected", [
    (kin(0.0, 10.0, 0.0), 30.0),
    (kin(0.0, 10.0, 2.0), 30.0),
    (kin(100.0, 10.0, math.pi / 2), math.sqrt(80000.0) / 10.0),
    (kin(100.0, 10.0, math.pi), 20.0),
    (kin(100.0, 10.0, 0.0), 40.0),
])
def test_link_duration_examples(k, expected):
    assert link_duration(k) == pytest.approx(expected)


def test_static_pair_is_unbounded():
    assert link_duration(kin(100.0, 0.0, 0.0)) is UNBOUNDED
    assert link_connectivity(UNBOUNDED, 1.0) == 1.0


def test_pair_out_of_range_is_rejected():
    with pytest.raises(InvalidArgumentError):
        link_duration(kin(301.0, 10.0, 0.0))


def test_boundary_pair_receding_has_zero_duration():
    assert link_duration(kin(300.0, 10.0, math.pi)) == pytest.approx(0.0)


@pytest.mark.parametrize("alpha", np.linspace(0.0, math.pi, 13))
def test_both_written_forms_agree(alpha):
    k = kin(120.0, 7.0, float(alpha))
    assert duration_by_acute_form(k) == pytest.approx(duration_by_obtuse_form(k))


def test_duration_is_continuous_at_right_angle():
    eps = 1e-7
    left = link_duration(kin(150.0, 5.0, math.pi / 2 - eps))
    right = link_duration(kin(150.0, 5.0, math.pi / 2 + eps))
    assert left == pytest.approx(right, abs=1e-4)


@pytest.mark.parametrize("seed", range(8))
def test_duration_matches_kinematic_stepping(seed):
    rng = np.random.default_rng(seed)
    d = 300.0
    radius = rng.uniform(0.0, d)
    angle = rng.uniform(0.0, 2 * math.pi)
    pos_a, pos_b = (0.0, 0.0), (radius * math.cos(angle), radius * math.sin(angle))
    vel_a = tuple(rng.uniform(-15.0, 15.0, size=2))
    vel_b = tuple(rng.uniform(-15.0, 15.0, size=2))

    expected = link_duration(relative_kinematics(pos_a, vel_a, pos_b, vel_b, d))

    t = np.arange(0.0, 400.0, 0.001)
    gap_x = (pos_b[0] - pos_a[0]) + (vel_b[0] - vel_a[0]) * t
    gap_y = (pos_b[1] - pos_a[1]) + (vel_b[1] - vel_a[1]) * t
    outside = np.nonzero(np.hypot(gap_x, gap_y) > d)[0]
    assert len(outside) > 0
    assert t[outside[0]] == pytest.approx(expected, abs=0.002)


@pytest.mark.slow
def test_both_written_forms_agree_on_many_samples():
    rng = np.random.default_rng(99)
    for delta_d, delta_v, alpha in zip(rng.uniform(0.0, 300.0, 100_000),
                                       rng.uniform(0.1, 40.0, 100_000),
                                       rng.uniform(0.0, math.pi, 100_000)):
        k = kin(float(delta_d), float(delta_v), float(alpha))
        assert math.isclose(duration_by_acute_form(k), duration_by_obtuse_form(k),
                            rel_tol=1e-9, abs_tol=1e-9)


@pytest.mark.slow
def test_duration_matches_millisecond_stepping_on_many_pairs():
    rng = np.random.default_rng(7)
    d, n = 300.0, 10_000
    radius = d * np.sqrt(rng.uniform(0.0, 0.999, 2 * n))
    angle = rng.uniform(0.0, 2 * math.pi, 2 * n)
    gap = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    vel_a = rng.uniform(-15.0, 15.0, size=(2 * n, 2))
    vel_b = rng.uniform(-15.0, 15.0, size=(2 * n, 2))
    moving = np.hypot(*(vel_b - vel_a).T) > 1.0
    assert moving.sum() >= n
    gap, vel_a, vel_b = gap[moving][:n], vel_a[moving][:n], vel_b[moving][:n]
    rel = vel_b - vel_a

    def outside(rows, t):
        return np.hypot(gap[rows, :1] + rel[rows, :1] * t, gap[rows, 1:] + rel[rows, 1:] * t) > d

    # coarse 1 s scan, then 1 ms steps through the second in which the pair leaves
    coarse = np.arange(0.0, 700.0, 1.0)[None, :]
    fine_steps = np.arange(0, 1001)[None, :] * 0.001
    for chunk in np.array_split(np.arange(n), 10):
        hit = outside(chunk, coarse)
        assert hit.any(axis=1).all()
        start = coarse[0, hit.argmax(axis=1)] - 1.0
        fine = start[:, None] + fine_steps
        stepped = fine[np.arange(len(chunk)), outside(chunk, fine).argmax(axis=1)]
        for row, t_exit in zip(chunk, stepped):
            expected = link_duration(relative_kinematics(
                (0.0, 0.0), tuple(vel_a[row]), tuple(gap[row]), tuple(vel_b[row]), d))
            assert abs(t_exit - expected) <= 0.002


# =====================================================================
# CONNECTIVITY AND PATHS
# =====================================================================

@pytest.mark.parametrize("duration, expected", [(0.5, 0.5), (2.0, 1.0), (0.0, 0.0)])
def test_link_connectivity(duration, expected):
    assert link_connectivity(duration, 1.0) == expected


def test_link_connectivity_rejects_bad_tau():
    with pytest.raises(InvalidArgumentError):
        link_connectivity(1.0, 0.0)


def test_path_metrics_concave_and_additive():
    edges = [EdgeMetrics(l_S=0.9, l_C=1.0), EdgeMetrics(l_S=0.8, l_C=0.7)]
    metrics = path_metrics(edges)
    assert (metrics.p_S, metrics.p_C, metrics.p_H) == (0.8, 0.7, 2)
    assert path_metrics(edges[::-1]) == metrics


def test_appending_an_edge_never_improves_the_path():
    edges = [EdgeMetrics(l_S=0.6, l_C=0.9)]
    before = path_metrics(edges)
    after = path_metrics(edges + [EdgeMetrics(l_S=0.95, l_C=1.0)])
    assert after.p_S <= before.p_S
    assert after.p_C <= before.p_C
    assert after.p_H == before.p_H + 1


def test_path_metrics_rejects_empty_path():
    with pytest.raises(InvalidArgumentError):
        path_metrics([])


def test_edge_hop_count_is_one():
    with pytest.raises(ValueError):
        EdgeMetrics(l_S=0.5, l_C=0.5, l_H=2)


@pytest.mark.parametrize("l_S, l_C", [(0.5, 0.0), (0.0, 0.5), (1.1, 0.5), (0.5, 1.1)])
def test_edge_metrics_lie_in_the_half_open_unit_interval(l_S, l_C):
    with pytest.raises(ValueError):
        EdgeMetrics(l_S=l_S, l_C=l_C)
