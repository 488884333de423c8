"""Geometric path parameters: directions, lengths, delays, angles, Doppler.

Angle convention (documented frame): for an array with orientation triad
(u_hor, u_ver, u_normal), a unit direction d decomposes as

    d = cos(theta) sin(phi) u_hor + sin(theta) sin(phi) u_normal
        + cos(phi) u_ver

so phi is the zenith angle measured from the array's vertical axis u_ver and
theta the azimuth in the (u_hor, u_normal) plane. Broadside is
(theta, phi) = (pi/2, pi/2). This matches the steering-vector phase
increments: dpsi_hor = 2 pi d cos(theta) sin(phi) / lambda and
dpsi_ver = 2 pi d cos(phi) / lambda.

Departure angles use the first segment direction; arrival angles use the
reversed last segment direction (the direction the wave comes from), so the
same steering expression describes both ends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import AntennaArray
from .tracer import Trajectory

C_LIGHT = 299_792_458.0


class PathGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PathGeometry:
    directions: np.ndarray      # (Q+1, 3) unit segment directions
    segment_lengths: np.ndarray  # (Q+1,)
    total_length: float
    delay: float
    aod: tuple                  # (theta, phi) at departure
    aoa: tuple                  # (theta, phi) at arrival
    doppler: float = None       # filled by doppler(); Hz


def angles_from_direction(d, array: AntennaArray):
    """(theta, phi) of unit direction d in the array frame."""
    d = np.asarray(d, dtype=float)
    cph = float(np.clip(np.dot(d, array.u_ver), -1.0, 1.0))
    phi = float(np.arccos(cph))
    theta = float(np.arctan2(np.dot(d, array.u_normal), np.dot(d, array.u_hor)))
    return theta, phi


def direction_from_angles(theta, phi, array: AntennaArray):
    sph = np.sin(phi)
    return (np.cos(theta) * sph * array.u_hor
            + np.sin(theta) * sph * array.u_normal
            + np.cos(phi) * array.u_ver)


def path_geometry(traj: Trajectory, tx_array: AntennaArray,
                  rx_array: AntennaArray) -> PathGeometry:
    """Directions, lengths, delay and departure/arrival angles of a path."""
    pts = traj.points()
    diffs = np.diff(np.asarray(pts, dtype=float), axis=0)
    lengths = np.linalg.norm(diffs, axis=1)
    if np.any(lengths < 1e-12):
        raise PathGeometryError("degenerate trajectory: zero-length segment")
    directions = diffs / lengths[:, None]
    total = float(np.sum(lengths))
    aod = angles_from_direction(directions[0], tx_array)
    aoa = angles_from_direction(-directions[-1], rx_array)
    return PathGeometry(directions=directions, segment_lengths=lengths,
                        total_length=total, delay=total / C_LIGHT,
                        aod=aod, aoa=aoa)


def steering_vector(theta, phi, array: AntennaArray, lam):
    """UPA steering vector, Kronecker of the horizontal and vertical phases.

    Element order matches AntennaArray: index i*n_ver + j for horizontal i,
    vertical j; element 0 has phase 0.
    """
    if lam <= 0 or (array.size > 1 and array.spacing <= 0):
        raise ValueError("spacing and wavelength must be positive")
    dpsi_hor = 2.0 * np.pi * array.spacing * np.cos(theta) * np.sin(phi) / lam
    dpsi_ver = 2.0 * np.pi * array.spacing * np.cos(phi) / lam
    hor = np.exp(1j * dpsi_hor * np.arange(array.n_hor))
    ver = np.exp(1j * dpsi_ver * np.arange(array.n_ver))
    return np.kron(hor, ver)


def doppler(traj: Trajectory, geom: PathGeometry, ue_velocity, mso_velocities,
            fc) -> float:
    """Doppler-shifted carrier of a path.

    f = fc (1 - (v_ue . d_last + sum_l v_l . (d_in(l) - d_out(l))) / c)

    with d_last the final propagation direction (toward the receiving UE) and
    the sum over interaction points on mobile objects; the same incoming and
    outgoing differencing applies at reflecting and diffracting points.
    ``mso_velocities`` maps IP index -> velocity vector.
    """
    v_ue = np.asarray(ue_velocity, dtype=float)
    v_bar = float(np.dot(v_ue, geom.directions[-1]))
    for q, vel in (mso_velocities or {}).items():
        d_in = geom.directions[q]
        d_out = geom.directions[q + 1]
        v_bar += float(np.dot(np.asarray(vel, dtype=float), d_in - d_out))
    return fc * (1.0 - v_bar / C_LIGHT)


def mso_velocity_map(traj: Trajectory, state) -> dict:
    """IP index -> mobile-object velocity, for IPs sitting on moving objects."""
    out = {}
    for q, ip in enumerate(traj.ips):
        vel = state.velocity_of_object(ip.object_id)
        if np.any(vel != 0.0):
            out[q] = vel
    return out
