import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raysim import fixtures as fx
from raysim.geoparams import (C_LIGHT, angles_from_direction,
                              direction_from_angles, doppler,
                              mso_velocity_map, path_geometry, steering_vector)
from raysim.scene import AntennaArray, scene_from_dict, state_at
from raysim.tracer import Trajectory, trace

from conftest import single_plate_scene

ISO = AntennaArray()


def los(tx, rx):
    return Trajectory(interactions=(), ips=(), tx=np.asarray(tx, float),
                      rx=np.asarray(rx, float))


def test_los_geometry():
    g = path_geometry(los([0, 0, 0], [300.0, 0, 0]), ISO, ISO)
    assert g.total_length == pytest.approx(300.0, abs=1e-12)
    assert g.delay == pytest.approx(300.0 / C_LIGHT, rel=1e-12)
    assert np.allclose(g.directions[0], [1.0, 0.0, 0.0])


def test_two_ray_image_identity():
    sc = single_plate_scene()
    st = state_at(sc, 0.0)
    paths, _ = trace(st, np.array([0.0, 0.0, 10.0]), np.array([10.0, 0.0, 2.0]),
                     1, 0)
    refl = [p for p in paths if p.kind_string() == "R"][0]
    g = path_geometry(refl, ISO, ISO)
    assert g.total_length == pytest.approx(math.hypot(10.0, 12.0), abs=1e-9)
    assert g.total_length == pytest.approx(np.sum(g.segment_lengths), rel=1e-15)


def test_degenerate_segment_rejected():
    from raysim.geoparams import PathGeometryError
    from raysim.tracer import IP

    traj = Trajectory(interactions=(("R", 0),),
                      ips=(IP(position=np.zeros(3), kind="reflection",
                              object_id="x", facet_id=0),),
                      tx=np.zeros(3), rx=np.array([1.0, 0, 0]))
    with pytest.raises(PathGeometryError):
        path_geometry(traj, ISO, ISO)


def test_steering_vector_examples():
    arr = AntennaArray(n_hor=2, n_ver=1, spacing=0.5)
    lam = 1.0
    # broadside: all ones
    a = steering_vector(math.pi / 2, math.pi / 2, arr, lam)
    assert np.allclose(a, 1.0)
    # endfire with half-wave spacing: [1, e^{j pi}]
    a = steering_vector(0.0, math.pi / 2, arr, lam)
    assert np.allclose(a, [1.0, np.exp(1j * math.pi)])


@given(theta=st.floats(-math.pi, math.pi), phi=st.floats(0.0, math.pi),
       n_hor=st.integers(1, 4), n_ver=st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_steering_unit_magnitude(theta, phi, n_hor, n_ver):
    arr = AntennaArray(n_hor=n_hor, n_ver=n_ver, spacing=0.07)
    a = steering_vector(theta, phi, arr, 0.13)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)


def test_steering_matches_element_geometry():
    """Kronecker phases equal k * d . (element offsets) in the array frame."""
    arr = AntennaArray(n_hor=3, n_ver=2, spacing=0.065)
    lam = 0.13
    theta, phi = 0.4, 1.1
    d = direction_from_angles(theta, phi, arr)
    a = steering_vector(theta, phi, arr, lam)
    offs = arr.element_offsets()
    rel = offs - offs[0]
    expected = np.exp(1j * 2 * math.pi / lam * (rel @ d))
    assert np.allclose(a, expected, atol=1e-12)


def test_angle_direction_roundtrip(rng):
    arr = AntennaArray(n_hor=2, n_ver=2, spacing=0.05,
                       orientation=((0.0, 1.0, 0.0), (0.0, 0.0, 1.0),
                                    (-1.0, 0.0, 0.0)))
    for _ in range(50):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        th, ph = angles_from_direction(v, arr)
        back = direction_from_angles(th, ph, arr)
        assert np.linalg.norm(back - v) < 1e-12


def test_doppler_static():
    g = path_geometry(los([0, 0, 0], [100.0, 0, 0]), ISO, ISO)
    f = doppler(los([0, 0, 0], [100.0, 0, 0]), g, np.zeros(3), {}, 2.3e9)
    assert f == pytest.approx(2.3e9, abs=0.0)


def test_doppler_receding_ue():
    """UE receding at 1 m/s along the LoS: f = fc (1 - 1/c), 7.672 Hz below."""
    traj = los([0, 0, 0], [100.0, 0, 0])
    g = path_geometry(traj, ISO, ISO)
    f = doppler(traj, g, np.array([1.0, 0.0, 0.0]), {}, 2.3e9)
    assert 2.3e9 - f == pytest.approx(2.3e9 / C_LIGHT, abs=1e-6)
    assert 2.3e9 - f == pytest.approx(7.672, abs=1e-3)


def test_no_mso_reduction(rng):
    traj = los([0, 0, 0], [50.0, 20.0, 3.0])
    g = path_geometry(traj, ISO, ISO)
    v = rng.standard_normal(3)
    f = doppler(traj, g, v, {}, 2.3e9)
    v_bar = float(np.dot(v, g.directions[-1]))
    assert f == pytest.approx(2.3e9 * (1 - v_bar / C_LIGHT), rel=1e-15)


def _moving_reflector_rate(speed, fc, dt):
    sc = scene_from_dict(fx.moving_reflector_scene(fc=fc, speed=speed))

    def refl_path(t):
        st = state_at(sc, t)
        paths, _ = trace(st, st.terminal_position["tx"],
                         st.terminal_position["rx"], 1, 0)
        return st, [p for p in paths if p.kind_string() == "R"][0]

    st0, p0 = refl_path(1.0)
    _, pm = refl_path(1.0 - dt)
    _, pp = refl_path(1.0 + dt)
    g0 = path_geometry(p0, ISO, ISO)
    f = doppler(p0, g0, np.zeros(3), mso_velocity_map(p0, st0), fc)
    dr_dt = (pp.length - pm.length) / (2.0 * dt)
    return fc - f, fc / C_LIGHT * dr_dt


def test_doppler_matches_length_rate():
    """fc - f equals (fc/c) dr/dt within 1e-3 Hz (moving reflector)."""
    shift, fd = _moving_reflector_rate(speed=5.0, fc=2.3e9, dt=1e-6)
    assert abs(shift - fd) < 1e-3


def test_doppler_richardson_consistency():
    shift, fd1 = _moving_reflector_rate(speed=5.0, fc=2.3e9, dt=1e-6)
    _, fd2 = _moving_reflector_rate(speed=5.0, fc=2.3e9, dt=1e-7)
    # finite-difference estimates converge toward the model value
    assert abs(shift - fd2) <= abs(shift - fd1) + 1e-6
    assert abs(shift - fd2) < 1e-3
