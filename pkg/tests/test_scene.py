import json
import math

import numpy as np
import pytest

from raysim import fixtures as fx
from raysim.scene import (GeometryError, SchemaError, dumps_scene, load_scene,
                          scene_from_dict, state_at)


def test_unit_cube_counts():
    sc = scene_from_dict(fx.unit_cube_scene())
    assert len(sc.surfaces) == 6
    assert len(sc.edges) == 12
    for e in sc.edges:
        assert e.n == pytest.approx(1.5, abs=1e-12)


def test_two_building_canyon_counts():
    sc = scene_from_dict(fx.two_building_canyon())
    assert len(sc.surfaces) == 12
    assert len(sc.edges) == 24
    assert len(sc.materials) == 2


def test_urban_fixture_has_40_surfaces():
    sc = scene_from_dict(fx.urban_canyon_scene())
    assert len(sc.surfaces) == 40


def test_non_planar_face_rejected():
    d = fx.unit_cube_scene()
    d["objects"][0]["faces"][0][0][2] += 0.01  # bend one corner
    with pytest.raises(GeometryError, match="cube"):
        scene_from_dict(d)


def test_missing_material_rejected():
    d = fx.unit_cube_scene()
    d["objects"][0]["material"] = "nope"
    with pytest.raises(SchemaError):
        scene_from_dict(d)


def test_surfaces_oriented_outward():
    sc = scene_from_dict(fx.unit_cube_scene())
    for s in sc.surfaces:
        centroid = s.polygon.centroid()
        assert np.dot(s.normal, centroid) > 0  # cube centered at origin


def test_edge_dihedral_invariant():
    """Exterior dihedral angle equals n*pi within 1e-9 rad for every edge."""
    for build in (fx.unit_cube_scene, fx.two_building_canyon,
                  fx.urban_canyon_scene, fx.knife_edge_scene):
        sc = scene_from_dict(build())
        for e in sc.edges:
            na = sc.surface(e.surface_ids[0]).normal
            nb = sc.surface(e.surface_ids[1]).normal
            omega = math.acos(float(np.clip(np.dot(na, nb), -1, 1)))
            assert abs((math.pi + omega) - e.n * math.pi) < 1e-9


def test_serialization_roundtrip_fixpoint(tmp_path):
    sc = scene_from_dict(fx.two_building_canyon())
    text1 = dumps_scene(sc)
    p = tmp_path / "scene.json"
    p.write_text(text1)
    sc2 = load_scene(p)
    text2 = dumps_scene(sc2)
    assert text1 == text2


def test_state_linear_motion():
    d = fx.moving_reflector_scene(speed=1.0)
    d["mobiles"][0]["route"] = [[0.0, 20.0, 5.0], [100.0, 20.0, 5.0]]
    sc = scene_from_dict(d)
    st0 = state_at(sc, 0.0)
    st5 = state_at(sc, 5.0)
    s0 = st0.surface(0).polygon.vertices
    s5 = st5.surface(0).polygon.vertices
    assert np.allclose(s5 - s0, [5.0, 0.0, 0.0])
    assert np.allclose(st5.velocity_of_object("slab"), [1.0, 0.0, 0.0])


def test_state_zero_speed_identity():
    d = fx.moving_reflector_scene(speed=0.0)
    sc = scene_from_dict(d)
    st = state_at(sc, 123.0)
    assert np.allclose(st.surface(0).polygon.vertices,
                       state_at(sc, 0.0).surface(0).polygon.vertices)


def test_state_piecewise_route_corner():
    d = fx.moving_reflector_scene(speed=1.0)
    d["mobiles"][0]["route"] = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0],
                                [2.0, 5.0, 0.0]]
    sc = scene_from_dict(d)
    st = state_at(sc, 3.0)
    off, vel = sc.mobiles[0].displacement(3.0)
    assert np.allclose(off, [2.0, 1.0, 0.0])  # 1 s along the second leg
    assert np.allclose(vel, [0.0, 1.0, 0.0])


def test_state_clamps_beyond_route_end():
    d = fx.moving_reflector_scene(speed=1.0)
    d["mobiles"][0]["route"] = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]
    sc = scene_from_dict(d)
    off, vel = sc.mobiles[0].displacement(100.0)
    assert np.allclose(off, [2.0, 0.0, 0.0])
    assert np.allclose(vel, 0.0)


def test_state_continuity_in_time():
    sc = scene_from_dict(fx.urban_canyon_scene(ue_speed=3.0))
    eps = 1e-4
    for t in (0.0, 1.7, 12.3):
        p0 = state_at(sc, t).terminal_position["ue"]
        p1 = state_at(sc, t + eps).terminal_position["ue"]
        assert np.linalg.norm(p1 - p0) <= 3.0 * eps + 1e-12


def test_negative_time_rejected():
    sc = scene_from_dict(fx.unit_cube_scene())
    with pytest.raises(ValueError):
        state_at(sc, -1.0)


def test_screen_knife_edges():
    sc = scene_from_dict(fx.knife_edge_scene())
    assert len(sc.surfaces) == 2
    assert len(sc.edges) == 4
    for e in sc.edges:
        assert e.n == pytest.approx(2.0, abs=1e-12)
