"""Domain geometry, Whitney cubes, and region families."""

import math

import numpy as np
import pytest

from thinlab.geometry import (
    RadialPolyProfile,
    above_graph,
    annulus_split,
    ball,
    cube_union_region,
    double_cover_multiplicity,
    contains,
    distance_bracket,
    distance_to_boundary,
    exterior_ball,
    half_space,
    log_corrected_region,
    power_law_region,
    profile_height,
    region_contains,
    subgraph_region,
    whitney_decompose,
)


def test_distance_exact_domains():
    assert distance_to_boundary(half_space(3), (5.0, -2.0, 0.75)) == 0.75
    assert distance_to_boundary(ball(2, 2.0), (0.6, 0.8)) == pytest.approx(1.0)
    assert distance_to_boundary(exterior_ball(3, 1.0),
                                (0.0, 0.0, -3.0)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        distance_to_boundary(half_space(2), (1.0, -0.1))
    with pytest.raises(ValueError):
        distance_to_boundary(ball(2, 1.0), (2.0, 0.0))


def test_distance_bracket_contains_true_cone_distance():
    # straight cone of slope c: exact distance from the axis is z/sqrt(1+c^2)
    c = 0.25
    dom = above_graph(3, RadialPolyProfile((c,), span=8.0))
    z = 0.8
    lo, hi = distance_bracket(dom, (0.0, 0.0, z))
    exact = z / math.sqrt(1.0 + c * c)
    assert lo <= exact <= hi
    assert hi == pytest.approx(z)
    mid = distance_to_boundary(dom, (0.0, 0.0, z))
    assert lo <= mid <= hi


def test_contains():
    assert contains(half_space(2), (3.0, 0.1))
    assert not contains(half_space(2), (3.0, 0.0))
    assert contains(ball(3, 1.0), (0.5, 0.5, 0.5))
    assert not contains(ball(3, 1.0), (0.8, 0.8, 0.0))
    assert contains(exterior_ball(2, 1.0), (1.5, 0.0))
    dom = above_graph(3, RadialPolyProfile((0.5,)))
    assert contains(dom, (0.2, 0.0, 0.2))
    assert not contains(dom, (0.4, 0.0, 0.1))


def _find(cubes, corner, side):
    for c in cubes:
        if c.side == side and np.allclose(c.corner, corner, atol=1e-12):
            return c
    return None


def test_halfspace_window_contains_expected_cube():
    dec = whitney_decompose(half_space(2), (0.0, 0.0), (8.0, 8.0),
                            max_generation=6)
    hit = _find(dec.cubes, (0.0, 4.0), 2.0)
    assert hit is not None
    assert _find(dec.cubes, (0.0, 4.0), 4.0) is None
    assert _find(dec.cubes, (0.0, 4.0), 1.0) is None
    # that cube touches the left window edge, so it is rim-flagged
    assert hit.status == "window_rim"
    interior = _find(dec.cubes, (2.0, 4.0), 2.0)
    assert interior is not None and interior.status == "ok"


DECOMPOSITIONS = [
    (half_space(2), (0.0, 0.0), (8.0, 8.0), 6),
    (half_space(3), (0.0, 0.0, 0.0), (4.0, 4.0, 4.0), 5),
    (ball(2, 4.0), (-4.0, -4.0), (4.0, 4.0), 6),
    (ball(3, 2.0), (-2.0, -2.0, -2.0), (2.0, 2.0, 2.0), 5),
    (exterior_ball(2, 1.0), (-4.0, -4.0), (4.0, 4.0), 6),
    (exterior_ball(3, 1.0), (-4.0, -4.0, -4.0), (4.0, 4.0, 4.0), 4),
]


@pytest.mark.parametrize("domain,wlo,whi,gen", DECOMPOSITIONS,
                         ids=lambda v: getattr(v, "kind", str(v)))
def test_whitney_property_holds_for_every_cube(domain, wlo, whi, gen):
    dec = whitney_decompose(domain, wlo, whi, max_generation=gen)
    assert dec.kept, "decomposition should not be empty"
    for c in dec.kept:
        assert c.diam <= c.dist * (1 + 1e-12)
        assert c.dist <= 4.0 * c.diam * (1 + 1e-12)
    for c in dec.cubes:
        assert c.diam <= c.dist_hi * (1 + 1e-12)


@pytest.mark.parametrize("domain,wlo,whi,gen", DECOMPOSITIONS,
                         ids=lambda v: getattr(v, "kind", str(v)))
def test_whitney_cubes_are_disjoint(domain, wlo, whi, gen):
    dec = whitney_decompose(domain, wlo, whi, max_generation=gen)
    cubes = dec.cubes
    corners = np.array([c.corner for c in cubes])
    sides = np.array([c.side for c in cubes])
    n = len(cubes)
    for i in range(n):
        lo_i, hi_i = corners[i], corners[i] + sides[i]
        overlap = np.all(
            (corners + sides[:, None] > lo_i + 1e-12)
            & (corners < hi_i - 1e-12), axis=1)
        overlap[i] = False
        assert not np.any(overlap), f"cube {i} overlaps another"


def test_whitney_coverage_halfspace():
    dom = half_space(2)
    dec = whitney_decompose(dom, (0.0, 0.0), (8.0, 8.0), max_generation=8)
    rng = np.random.default_rng(7)
    pts = rng.uniform([0.5, 0.02], [7.5, 7.5], size=(500, 2))
    floor = dec.scale * 2.0 ** -dec.max_generation
    keep = pts[:, 1] > 4.0 * floor * math.sqrt(2)
    pts = pts[keep]
    corners = np.array([c.corner for c in dec.cubes])
    sides = np.array([c.side for c in dec.cubes])
    for p in pts:
        inside = np.all((p >= corners) & (p < corners + sides[:, None]),
                        axis=1)
        assert np.count_nonzero(inside) == 1


def test_doubled_cubes_have_bounded_multiplicity():
    dom = half_space(2)
    dec = whitney_decompose(dom, (0.0, 0.0), (8.0, 8.0), max_generation=8)
    rng = np.random.default_rng(11)
    pts = rng.uniform([0.5, 0.05], [7.5, 7.5], size=(400, 2))
    counts = double_cover_multiplicity(dec.cubes, pts)
    assert counts.max() <= 4 ** 2


def test_whitney_graph_domain_emits_certified_cubes():
    dom = above_graph(2, RadialPolyProfile((0.2,), span=16.0))
    dec = whitney_decompose(dom, (-4.0, -1.0), (4.0, 7.0), max_generation=7)
    oks = dec.kept
    assert oks
    for c in oks:
        assert c.diam <= c.dist_lo * (1 + 1e-12)
    # ambiguity can only appear in the flagged list
    assert all(c.status == "ok" for c in oks)


def test_whitney_rejects_bad_arguments():
    with pytest.raises(ValueError):
        whitney_decompose(half_space(2), (0.0, 0.0), (8.0, 8.0),
                          max_generation=60)
    with pytest.raises(ValueError):
        whitney_decompose(half_space(2), (0.0, 0.0), (0.0, 8.0))


def test_power_law_heights():
    reg = power_law_region(2.0)
    assert profile_height(reg, 0.1) == pytest.approx(0.01, rel=1e-12)
    assert profile_height(reg, 0.6) == 0.0  # beyond the first annulus
    assert region_contains(reg, (0.1, 0.0, 0.005))
    assert not region_contains(reg, (0.1, 0.0, 0.02))
    assert not region_contains(reg, (0.1, 0.0, 0.0))


def test_log_corrected_heights_level1():
    reg = log_corrected_region(beta=0.5, level=1)
    rho = 2.0 ** -4
    u = -math.log(rho)
    expected = rho * u ** -0.5
    assert profile_height(reg, rho) == pytest.approx(expected, rel=1e-12)
    assert reg.start_index == 3
    assert profile_height(reg, 0.2) == 0.0


def test_log_corrected_heights_level2():
    reg = log_corrected_region(beta=0.4, level=2)
    assert reg.start_index == 8
    rho = 2.0 ** -12
    u = -math.log(rho)
    expected = rho * math.log(u) ** (-1.0 / 3.0) * math.log(
        math.log(u)) ** -0.4
    assert profile_height(reg, rho) == pytest.approx(expected, rel=1e-12)
    assert profile_height(reg, 2.0 ** -6) == 0.0


def test_annulus_split_layout():
    reg = power_law_region(1.5)
    pieces = annulus_split(reg, n_max=36)
    assert len(pieces) == 36
    assert pieces[0].index == 1
    assert pieces[0].r_outer == 0.5 and pieces[0].r_inner == 0.25
    assert pieces[-1].r_outer == 2.0 ** -36
    assert not pieces[0].empty

    reg2 = log_corrected_region(beta=0.2, level=2)
    pieces2 = annulus_split(reg2, n_max=12)
    assert all(p.empty for p in pieces2 if p.index < 8)
    assert all(not p.empty for p in pieces2 if p.index >= 8)


def test_annulus_split_cube_union():
    dec = whitney_decompose(half_space(3), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0),
                            max_generation=6)
    anchor_cubes = [c for c in dec.cubes
                    if np.linalg.norm(c.center) < 0.4]
    reg = cube_union_region(anchor_cubes)
    pieces = annulus_split(reg, n_max=10)
    assert any(not p.empty for p in pieces)
    far = annulus_split(cube_union_region(
        [c for c in dec.cubes if np.linalg.norm(c.center) > 0.5][:3]),
        n_max=10)
    assert all(p.empty for p in far if p.index >= 2)


def test_cone_annulus_volume_against_closed_form():
    """For the unit-slope cone 0 < h <= rho the solid angle is known, so the
    region volume inside a shell has a closed form; Monte Carlo point
    membership must reproduce it."""
    reg = power_law_region(1.0)
    n = 2
    r_out, r_in = 2.0 ** -n, 2.0 ** -(n + 1)
    frac = math.sqrt(2.0) / 4.0
    exact = frac * (4.0 * math.pi / 3.0) * (r_out ** 3 - r_in ** 3)

    rng = np.random.default_rng(123)
    n_pts = 200_000
    pts = rng.uniform(-r_out, r_out, size=(n_pts, 3))
    r = np.linalg.norm(pts, axis=1)
    shell = (r >= r_in) & (r < r_out)
    member = np.array([region_contains(reg, p) for p in pts[shell]])
    vol = (2.0 * r_out) ** 3 * member.sum() / n_pts
    assert vol == pytest.approx(exact, rel=0.05)


def test_subgraph_region_uses_profile():
    reg = subgraph_region(RadialPolyProfile((0.0, 1.0)))  # height rho^2
    assert profile_height(reg, 0.1) == pytest.approx(0.01, rel=1e-12)
    assert region_contains(reg, (0.05, 0.0, 0.002))
