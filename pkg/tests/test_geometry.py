import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rainbowloc.geometry import (
    DeploymentRegion,
    MaterialParams,
    brick,
    build_scene,
    concrete,
    facetize_arc,
    sample_position,
)


def test_scene_reflector_counts():
    assert len(build_scene("los").reflectors) == 1
    assert len(build_scene("l").reflectors) == 3
    assert len(build_scene("circle").reflectors) == 1 + 180
    assert len(build_scene("rounded_l").reflectors) == 1 + 90 + 1


def test_unknown_scene_rejected():
    with pytest.raises(ValueError, match="nonsense"):
        build_scene("nonsense")


def test_facet_deg_bounds():
    with pytest.raises(ValueError):
        build_scene("circle", facet_deg=0.0)
    with pytest.raises(ValueError):
        build_scene("circle", facet_deg=10.5)


def test_l_scene_wall_planes():
    scene = build_scene("l")
    ns, ew = scene.reflectors[1], scene.reflectors[2]
    assert ns.p0[0] == pytest.approx(205.0)
    assert abs(ns.normal @ np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
    assert ew.p0[1] == pytest.approx(180.0)
    assert abs(ew.normal @ np.array([0.0, 1.0, 0.0])) == pytest.approx(1.0)
    for wall in (ns, ew):
        assert wall.v_range == (0.0, 50.0)
        assert wall.u_range[1] - wall.u_range[0] == pytest.approx(800.0)


def test_all_normals_unit_and_wall_heights():
    for scene_id in ("los", "circle", "rounded_l", "l"):
        scene = build_scene(scene_id)
        for r in scene.reflectors:
            assert abs(np.linalg.norm(r.normal) - 1.0) < 1e-12
            if r.kind == "wall-segment":
                assert r.v_range == (0.0, 50.0)


def test_facetize_counts():
    mat = brick(28.0)
    facets = facetize_arc((0, 0), 300.0, 0.0, math.pi / 2, (0.0, 50.0), 1.0, mat)
    assert len(facets) == 90
    facets = facetize_arc((0, 0), 300.0, -math.pi / 2, math.pi / 2, (0.0, 50.0), 90.0, mat)
    assert len(facets) == 2
    chord = facets[0].u_range[1] - facets[0].u_range[0]
    assert chord == pytest.approx(300.0 * math.sqrt(2.0), rel=1e-12)


def test_facet_endpoints_on_arc():
    mat = brick(28.0)
    facets = facetize_arc((0, 0), 300.0, -0.5, 1.1, (0.0, 50.0), 1.0, mat)
    for f in facets:
        for end in (-1.0, 1.0):
            p = f.p0 + end * f.u_range[1] * f.u_axis
            assert np.hypot(p[0], p[1]) == pytest.approx(300.0, abs=1e-9)
        assert np.hypot(f.p0[0], f.p0[1]) < 300.0
        # normal points toward the arc center
        assert f.normal @ (np.array([0.0, 0.0, 0.0]) - f.p0) > 0.0


def test_chord_deviation_bound():
    # max perpendicular deviation r*(1 - cos(step/2)); sub-12 mm at 1 degree
    scene = build_scene("circle", facet_deg=1.0)
    bound = 300.0 * (1.0 - math.cos(math.radians(0.5)))
    assert bound < 0.012
    for f in scene.walls:
        mid_r = np.hypot(f.p0[0], f.p0[1])
        assert 300.0 - mid_r <= bound + 1e-12


def test_materials():
    c = concrete(28.0)
    b = brick(28.0)
    assert c.rel_permittivity == pytest.approx(5.24)
    assert c.conductivity_s_m == pytest.approx(0.0462 * 28**0.7822)
    assert b.rel_permittivity == pytest.approx(3.91)
    assert b.conductivity_s_m == pytest.approx(0.0238 * 28**0.16)
    with pytest.raises(ValueError):
        MaterialParams("x", 0.5, 0.0)
    with pytest.raises(ValueError):
        MaterialParams("x", 2.0, -1.0)


@given(seed=st.integers(0, 2**32), index=st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_sample_position_deterministic(seed, index):
    a = sample_position(seed, index)
    b = sample_position(seed, index)
    assert (a.x, a.y, a.z) == (b.x, b.y, b.z)


def test_sample_position_invariants():
    region = DeploymentRegion()
    for i in range(10_000):
        p = sample_position(123, i)
        assert p.z == 25.0
        assert 5.0 <= p.range_m <= 200.0
        assert -60.0 <= math.degrees(p.azimuth_rad) <= 60.0
        assert region.contains(p)


def test_sample_azimuth_mean():
    az = np.array([
        math.degrees(sample_position(9, i).azimuth_rad) for i in range(100_000)
    ])
    assert abs(az.mean()) < 1.0
