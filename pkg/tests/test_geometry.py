import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from matsim.geometry import (DegenerateTriangleError, FatnessParams, UndefinedNeighborError, angle_diff,
                             bearing_to, ccw_angle, fatness, frontier_angle, inner_angles_from_bearings,
                             measure, norm_angle, occupancy_test, point_in_triangle, quantize_bearing,
                             sector_center, signed_area, triangle_metrics, triangle_quality)

PI = math.pi
angles = st.floats(-20.0, 20.0, allow_nan=False)
coords = st.floats(-10.0, 10.0, allow_nan=False)


# -- angles ---------------------------------------------------------------

@given(angles)
def test_norm_angle_range(a):
    assert 0.0 <= norm_angle(a) < 2 * PI


@given(angles, angles)
def test_angle_diff_symmetric_and_bounded(a, b):
    d = angle_diff(a, b)
    assert 0.0 <= d <= PI
    assert d == pytest.approx(angle_diff(b, a), abs=1e-12)


@given(angles, angles)
def test_ccw_angles_complement(a, b):
    s = ccw_angle(a, b) + ccw_angle(b, a)
    assert s == pytest.approx(0.0, abs=1e-9) or s == pytest.approx(2 * PI, abs=1e-9)


# -- quantization ---------------------------------------------------------

def test_quantize_sector_zero_center():
    assert quantize_bearing(0.10, PI / 8) == pytest.approx(PI / 16)


def test_quantize_center_is_fixed_point():
    assert quantize_bearing(PI / 16, PI / 8) == pytest.approx(PI / 16)


def test_quantize_last_sector():
    # sector 15 covers [15 pi/8, 2 pi); its center is 31 pi/16
    assert quantize_bearing(2 * PI - 0.01, PI / 8) == pytest.approx(31 * PI / 16)


def test_quantize_matches_boundary_enumeration():
    bounds = [k * PI / 8 for k in range(17)]
    for x in np.linspace(0, 2 * PI, 2001, endpoint=False):
        k = max(i for i in range(16) if bounds[i] <= x + 1e-15)
        assert quantize_bearing(x, PI / 8) == pytest.approx((bounds[k] + bounds[k + 1]) / 2)


@pytest.mark.parametrize("res", [0.0, -0.1, 0.4])
def test_quantize_rejects_bad_resolution(res):
    with pytest.raises(ValueError):
        quantize_bearing(1.0, res)


@given(angles)
def test_quantize_idempotent_and_close(a):
    q = quantize_bearing(a, PI / 8)
    assert quantize_bearing(q, PI / 8) == pytest.approx(q)
    assert angle_diff(q, a) <= PI / 16 + 1e-9


def test_measure_passes_through_without_resolution():
    assert measure(7.0, None) == pytest.approx(7.0 - 2 * PI)
    assert measure(0.1, 0.0) == pytest.approx(0.1)
    assert sector_center(16, PI / 8) == pytest.approx(PI / 16)


# -- inner angles -----------------------------------------------------------

def _bearings_from(points):
    u, L, R = points
    return bearing_to(L, u), bearing_to(L, R), bearing_to(R, u), bearing_to(R, L)


def test_inner_angles_equilateral():
    th = inner_angles_from_bearings(*_bearings_from([(0.5, math.sqrt(3) / 2), (0, 0), (1, 0)]))
    assert (th.theta_L, th.theta_R) == pytest.approx((PI / 3, PI / 3))


def test_inner_angles_collinear():
    th = inner_angles_from_bearings(*_bearings_from([(0.5, 0.0), (0, 0), (1, 0)]))
    assert (th.theta_L, th.theta_R) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_inner_angles_tall_isosceles():
    th = inner_angles_from_bearings(*_bearings_from([(0.5, 1.0), (0, 0), (1, 0)]))
    assert th.theta_L == pytest.approx(math.atan2(1.0, 0.5), abs=1e-12)
    assert (th.theta_L, th.theta_R) == pytest.approx((1.1071, 1.1071), abs=1e-4)


@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords), angles, angles)
def test_inner_angles_invariant_to_local_frames(u, L, R, hL, hR):
    if abs(signed_area(u, L, R)) < 1e-3:
        return
    bl = [b - hL for b in _bearings_from([u, L, R])[:2]]
    br = [b - hR for b in _bearings_from([u, L, R])[2:]]
    th = inner_angles_from_bearings(*bl, *br)
    m = triangle_metrics(u, L, R)
    assert 0 < th.theta_L < PI and 0 < th.theta_R < PI
    assert th.theta_L + th.theta_R < PI
    assert min(th.theta_L, th.theta_R) >= m.min_angle - 1e-9

    def corner(p, q, r):
        return math.acos((math.dist(p, q) ** 2 + math.dist(p, r) ** 2 - math.dist(q, r) ** 2)
                         / (2 * math.dist(p, q) * math.dist(p, r)))
    assert th.theta_L == pytest.approx(corner(L, u, R), abs=1e-6)
    assert th.theta_R == pytest.approx(corner(R, u, L), abs=1e-6)


# -- occupancy --------------------------------------------------------------

def test_occupancy_centroid_like():
    assert occupancy_test([0, 2 * PI / 3, 4 * PI / 3])


def test_occupancy_half_plane():
    assert not occupancy_test([0, PI / 6, PI / 3])


def test_occupancy_needs_three():
    with pytest.raises(ValueError):
        occupancy_test([0.0, 1.0])


@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords),
       st.tuples(coords, coords), angles)
def test_occupancy_matches_signed_area(p, a, b, c, heading):
    if abs(signed_area(a, b, c)) < 1e-3:
        return
    # stay clear of the edge lines, where both tests are knife-edge
    for u, v in ((a, b), (b, c), (c, a)):
        if abs(signed_area(p, u, v)) * 2 / math.dist(u, v) < 1e-6:
            return
    if min(math.dist(p, v) for v in (a, b, c)) < 1e-6:
        return
    bs = [bearing_to(p, v) - heading for v in (a, b, c)]
    assert occupancy_test(bs) == point_in_triangle(p, a, b, c)


# -- frontier angle and quality -------------------------------------------------

def test_frontier_angle_straight():
    th, normal = frontier_angle(PI, 0.0, "unexplored")
    assert th == pytest.approx(PI)
    assert normal == pytest.approx(PI / 2)
    _, other = frontier_angle(PI, 0.0, "explored")
    assert other == pytest.approx(3 * PI / 2)


def test_frontier_angle_reflex_side():
    # unexplored side holds 5 pi/4: sweep from the pi/2 neighbor round to 0
    th, normal = frontier_angle(0.0, PI / 2, "unexplored")
    assert th == pytest.approx(3 * PI / 2)
    assert normal == pytest.approx(5 * PI / 4)


def test_frontier_angle_convex_side():
    th, normal = frontier_angle(PI / 2, 0.0, "unexplored")
    assert th == pytest.approx(PI / 2)
    assert normal == pytest.approx(PI / 4)


def test_frontier_angle_undefined_neighbor():
    with pytest.raises(UndefinedNeighborError):
        frontier_angle(None, 1.0)


@given(angles, angles)
def test_frontier_sweeps_sum_to_full_turn(a, b):
    if angle_diff(a, b) < 1e-9:
        return
    t1, _ = frontier_angle(a, b, "unexplored")
    t2, _ = frontier_angle(a, b, "explored")
    assert t1 + t2 == pytest.approx(2 * PI)


@pytest.mark.parametrize("theta,ok", [(PI / 2, True), (3 * PI / 4, False), (PI, False)])
def test_triangle_quality(theta, ok):
    assert triangle_quality(theta, 3 * PI / 4) is ok


# -- metrics ------------------------------------------------------------------

def test_metrics_equilateral():
    m = triangle_metrics((0, 0), (1, 0), (0.5, math.sqrt(3) / 2))
    assert (m.min_angle, m.edge_ratio, m.area) == pytest.approx((PI / 3, 1.0, 0.4330), abs=1e-4)


def test_metrics_right_isosceles():
    m = triangle_metrics((0, 0), (1, 0), (0, 1))
    assert (m.min_angle, m.edge_ratio, m.area) == pytest.approx((PI / 4, math.sqrt(2), 0.5))


def test_side_of_ideal_base_triangle():
    side = math.sqrt(4 * 0.088 / math.sqrt(3))
    assert side == pytest.approx(0.451, abs=1e-3)
    m = triangle_metrics((0, 0), (side, 0), (side / 2, side * math.sqrt(3) / 2))
    assert m.area == pytest.approx(0.088)


def test_metrics_degenerate():
    with pytest.raises(DegenerateTriangleError):
        triangle_metrics((0, 0), (1, 0), (2, 0))


@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords))
def test_metrics_angle_bounds(a, b, c):
    if abs(signed_area(a, b, c)) < 1e-3:
        return
    m = triangle_metrics(a, b, c)
    assert m.min_angle <= PI / 3 + 1e-9 <= m.max_angle + 2e-9
    assert m.edge_ratio >= 1.0


def test_fatness_of_two_triangles():
    f = fatness([((0, 0), (1, 0), (0.5, math.sqrt(3) / 2)), ((0, 0), (1, 0), (0, 1))])
    assert f.rho == pytest.approx(math.sqrt(2))
    assert f.alpha == pytest.approx(PI / 4)
    with pytest.raises(ValueError):
        FatnessParams(0.5, 0.3)
    with pytest.raises(ValueError):
        fatness([])
