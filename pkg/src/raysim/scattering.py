"""Anomalous (non-Fermat) scattering paths around specular reflections.

A scattering region is the intersection of the bounce surface with the
ellipsoid whose foci are the unfolded transmitter and receiver images for
that bounce; grid points inside it generate one anomalous path each. The
ellipsoid radius adapts outward until newly captured power is negligible.

For MIMO arrays the grids are calibrated per antenna with anchor points so
that every scattered wavefront stays planar across the array: the anchor for
grid point n sits on the ray from the reference antenna through the point at
the specular path length, and each other antenna's grid point is moved on the
surface until its total path length equals its anchor distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import geometry as g
from .scene import SceneState
from .tracer import IP, Trajectory

DEFAULT_DS = 0.25            # grid cell area, m^2
INITIAL_MARGIN = 3.0         # initial ellipsoid radius margin, m
MARGIN_GROWTH = 1.5
MAX_EXPANSIONS = 6
ANNULUS_POWER_RATIO = 0.01   # stop expanding below this captured-power gain
CALIBRATION_TOL = 1e-9       # m


@dataclass
class ScatterRegion:
    specular: Trajectory
    bounce_index: int
    surface_id: int
    grid_points: np.ndarray          # (N, 3)
    ds: float
    radius: float
    focus_tx: np.ndarray             # unfolded transmitter-side focus
    focus_rx: np.ndarray             # unfolded receiver-side focus
    specular_length: float
    expansions: int = 0
    empty_reason: str = ""

    @property
    def num_points(self):
        return len(self.grid_points)


@dataclass
class AnchorSet:
    anchors: np.ndarray              # (N, 3)
    reference_length: float
    origin: np.ndarray               # reference antenna position


@dataclass
class CalibratedGrids:
    region: ScatterRegion
    anchor_set: AnchorSet
    points: dict                     # antenna index -> (N, 3) array
    valid: dict                      # antenna index -> (N,) bool mask
    dropped: int = 0


def _bounce_foci(state: SceneState, specular: Trajectory, bounce_index):
    """Unfolded tx / rx images seen from the bounce surface.

    Path length through a moved bounce point x equals |x - focus_tx| +
    |x - focus_rx| because reflections before and after the bounce unfold
    into straight lines.
    """
    pre = [state.surface(fid) for k, fid in specular.interactions[:bounce_index]
           if k == "R"]
    post = [state.surface(fid) for k, fid in specular.interactions[bounce_index + 1:]
            if k == "R"]
    f_tx = np.asarray(specular.tx, dtype=float)
    for s in pre:
        f_tx = g.mirror_point(f_tx, s.polygon.origin, s.polygon.normal)
    f_rx = np.asarray(specular.rx, dtype=float)
    for s in reversed(post):
        f_rx = g.mirror_point(f_rx, s.polygon.origin, s.polygon.normal)
    return f_tx, f_rx


def build_scatter_region(state: SceneState, specular: Trajectory, bounce_index,
                         ds=DEFAULT_DS, initial_margin=INITIAL_MARGIN,
                         gain_fn=None, max_expansions=MAX_EXPANSIONS) -> ScatterRegion:
    """Scattering grid on the bounce surface, radius adapted to captured power.

    ``gain_fn(points) -> power`` weights the expansion test; the default uses
    the directive-lobe model with spherical spreading. The region starts at
    radius = specular length + initial_margin and grows the margin by 1.5x
    while the newly captured annulus adds more than 1% of accumulated power.
    """
    ip = specular.ips[bounce_index]
    if ip.kind not in ("reflection", "diffraction"):
        raise ValueError("scatter region needs a reflection or diffraction IP")
    surface = state.surface(ip.facet_id)
    poly = surface.polygon
    f_tx, f_rx = _bounce_foci(state, specular, bounce_index)
    spec_len = specular.length

    if abs(poly.plane_height(f_tx)) < 1e-9 or abs(poly.plane_height(f_rx)) < 1e-9:
        return ScatterRegion(specular, bounce_index, surface.id,
                             np.zeros((0, 3)), ds, 0.0, f_tx, f_rx, spec_len,
                             empty_reason="grazing geometry: focus on surface plane")

    if gain_fn is None:
        gain_fn = _default_gain_fn(state, surface, specular, bounce_index,
                                   f_tx, f_rx, ds)

    pitch = math.sqrt(ds)
    anchor2d = poly.to_local2d(ip.position)
    max_radius = spec_len + initial_margin * MARGIN_GROWTH ** max_expansions
    lo = poly.verts2d.min(axis=0)
    hi = poly.verts2d.max(axis=0)
    iu = np.arange(math.floor((lo[0] - anchor2d[0]) / pitch),
                   math.ceil((hi[0] - anchor2d[0]) / pitch) + 1)
    iv = np.arange(math.floor((lo[1] - anchor2d[1]) / pitch),
                   math.ceil((hi[1] - anchor2d[1]) / pitch) + 1)
    uu, vv = np.meshgrid(iu * pitch + anchor2d[0], iv * pitch + anchor2d[1],
                         indexing="ij")
    pts2d = np.column_stack([uu.ravel(), vv.ravel()])
    pts3d = (poly.origin[None, :] + np.outer(pts2d[:, 0], poly.u)
             + np.outer(pts2d[:, 1], poly.v))
    path_len = (np.linalg.norm(pts3d - f_tx, axis=1)
                + np.linalg.norm(pts3d - f_rx, axis=1))
    near = path_len <= max_radius
    pts2d, pts3d, path_len = pts2d[near], pts3d[near], path_len[near]
    inside = poly.contains2d_many(pts2d, tol=1e-9)
    pts3d, path_len = pts3d[inside], path_len[inside]

    margin = initial_margin
    radius = spec_len + margin
    captured = path_len <= radius
    power = float(np.sum(gain_fn(pts3d[captured]))) if np.any(captured) else 0.0
    expansions = 0
    for _ in range(max_expansions):
        margin_next = margin * MARGIN_GROWTH
        radius_next = spec_len + margin_next
        annulus = (~captured) & (path_len <= radius_next)
        if not np.any(annulus):
            break
        gain_new = float(np.sum(gain_fn(pts3d[annulus])))
        margin = margin_next
        radius = radius_next
        captured = captured | annulus
        expansions += 1
        if power > 0.0 and gain_new <= ANNULUS_POWER_RATIO * power:
            power += gain_new
            break
        power += gain_new

    return ScatterRegion(specular, bounce_index, surface.id, pts3d[captured],
                         ds, radius, f_tx, f_rx, spec_len, expansions=expansions)


def _default_gain_fn(state, surface, specular, bounce_index, f_tx, f_rx, ds):
    from .em import directive_lobe_sq, scaling_factor

    mat = state.material_of(surface.id)
    n = surface.polygon.normal
    pts_path = specular.points()
    d_spec_out = g.unit(pts_path[bounce_index + 2] - pts_path[bounce_index + 1])

    def gain(points):
        if len(points) == 0:
            return np.zeros(0)
        r1 = np.linalg.norm(points - f_tx, axis=1)
        r2 = np.linalg.norm(points - f_rx, axis=1)
        d_in = (points - f_tx) / r1[:, None]
        d_out = (f_rx - points) / r2[:, None]
        cos_t = np.abs(d_in @ n)
        lobe = np.array([directive_lobe_sq(d, d_spec_out, mat.alpha_r)
                         for d in d_out])
        f_norm = np.array([scaling_factor(mat.alpha_r, math.acos(min(1.0, c)))
                           for c in cos_t])
        return ds * cos_t * lobe / np.maximum(f_norm, 1e-12) / (r1 * r2) ** 2

    return gain


def build_anchor_set(region: ScatterRegion, reference_antenna) -> AnchorSet:
    """Anchors on the rays from the reference antenna through the grid points,
    all at the specular path length from the antenna."""
    origin = np.asarray(reference_antenna, dtype=float)
    rel = region.grid_points - origin
    dist = np.linalg.norm(rel, axis=1)
    anchors = origin + rel / dist[:, None] * region.specular_length
    return AnchorSet(anchors=anchors, reference_length=region.specular_length,
                     origin=origin)


def calibrate_mimo_grids(region: ScatterRegion, antenna_positions, rx_point,
                         state: SceneState, tol=CALIBRATION_TOL) -> CalibratedGrids:
    """Per-antenna scattering grids with planar-wavefront calibration.

    antenna_positions[0] must be the reference antenna the region was built
    for; its grid is returned unchanged. For each other antenna m and grid
    point n, the point moves on the surface along the in-plane gradient of
    the path-length function until

        |rx - x| + |x - antenna_m|
            = |rx - g_n| + |g_n - antenna_0|
              + (|anchor_n - antenna_m| - |anchor_n - antenna_0|),

    i.e. the inter-antenna path-length differences equal the anchor-range
    differences (the anchor sits at the specular length from the reference
    antenna, so these differences are exactly those of a common wavefront).
    Pairs with no solution on the surface are dropped and counted.
    """
    antenna_positions = np.asarray(antenna_positions, dtype=float)
    rx_point = np.asarray(rx_point, dtype=float)
    anchor_set = build_anchor_set(region, antenna_positions[0])
    poly = state.surface(region.surface_id).polygon
    ref_len = (np.linalg.norm(rx_point - region.grid_points, axis=1)
               + np.linalg.norm(region.grid_points - antenna_positions[0], axis=1))
    points = {0: region.grid_points.copy()}
    valid = {0: np.ones(region.num_points, dtype=bool)}
    dropped = 0
    for m in range(1, len(antenna_positions)):
        t_m = antenna_positions[m]
        targets = ref_len + (np.linalg.norm(anchor_set.anchors - t_m, axis=1)
                             - anchor_set.reference_length)
        pts, ok = _calibrate_points(poly, region.grid_points, t_m, rx_point,
                                    targets, tol)
        dropped += int(np.sum(~ok))
        points[m] = pts
        valid[m] = ok
    return CalibratedGrids(region=region, anchor_set=anchor_set, points=points,
                           valid=valid, dropped=dropped)


def _calibrate_points(poly, x0s, tx, rx, targets, tol):
    """Vectorized 1D root-find along each point's in-plane length gradient.

    Newton iteration on f(t) = |rx - x(t)| + |x(t) - tx| - target with a
    scalar Brent fallback for stragglers.
    """
    n_pts = len(x0s)
    r_rx = np.linalg.norm(x0s - rx, axis=1)
    r_tx = np.linalg.norm(x0s - tx, axis=1)
    grad = (x0s - rx) / r_rx[:, None] + (x0s - tx) / r_tx[:, None]
    grad_in = grad - np.outer(grad @ poly.normal, poly.normal)
    gn = np.linalg.norm(grad_in, axis=1)
    ok_dir = gn > 1e-12
    u = np.zeros_like(x0s)
    u[ok_dir] = grad_in[ok_dir] / gn[ok_dir, None]

    t = np.zeros(n_pts)
    for _ in range(60):
        x = x0s + t[:, None] * u
        v1 = x - rx
        v2 = x - tx
        r1 = np.linalg.norm(v1, axis=1)
        r2 = np.linalg.norm(v2, axis=1)
        f = r1 + r2 - targets
        fp = np.einsum("ij,ij->i", u, v1 / r1[:, None] + v2 / r2[:, None])
        live = ok_dir & (np.abs(f) > tol * 0.1) & (np.abs(fp) > 1e-12)
        if not np.any(live):
            break
        t[live] = t[live] - f[live] / fp[live]

    x = x0s + t[:, None] * u
    f_final = (np.linalg.norm(x - rx, axis=1) + np.linalg.norm(x - tx, axis=1)
               - targets)
    ok = ok_dir & (np.abs(f_final) <= tol)
    # scalar fallback for non-converged points
    for i in np.nonzero(ok_dir & ~ok)[0]:
        sol = _calibrate_point_scalar(poly, x0s[i], u[i], tx, rx, targets[i], tol)
        if sol is not None:
            x[i] = sol
            ok[i] = True
    inside = poly.contains2d_many(
        np.column_stack([(x - poly.origin) @ poly.u, (x - poly.origin) @ poly.v]),
        tol=1e-9)
    ok = ok & inside
    x[~ok] = x0s[~ok]
    return x, ok


def _calibrate_point_scalar(poly, x0, u, tx, rx, target, tol):
    def h(t):
        x = x0 + t * u
        return (np.linalg.norm(rx - x) + np.linalg.norm(x - tx)) - target

    f0 = h(0.0)
    if abs(f0) <= tol:
        return x0
    step = max(1e-6, abs(f0))
    t_lo, t_hi = (0.0, step) if f0 * h(step) <= 0 else (-step, 0.0)
    for _ in range(80):
        if h(t_lo) * h(t_hi) <= 0.0:
            break
        t_lo -= step
        t_hi += step
        step *= 2.0
        if step > 1e7:
            return None
    else:
        return None
    t_root = brentq(h, t_lo, t_hi, xtol=tol * 0.1)
    return x0 + t_root * u


def uncalibrated_mimo_grids(region: ScatterRegion, per_antenna_specular_ips,
                            state: SceneState) -> dict:
    """Common-offset grids: each antenna's grid is the reference grid shifted
    to its own specular point (the uncalibrated construction whose wavefronts
    are not planar; kept for comparison)."""
    poly = state.surface(region.surface_id).polygon
    ref_ip = np.asarray(per_antenna_specular_ips[0], dtype=float)
    out = {}
    for m, ip_m in enumerate(per_antenna_specular_ips):
        shift = np.asarray(ip_m, dtype=float) - ref_ip
        out[m] = region.grid_points + shift
    return out


def scatter_trajectories(region: ScatterRegion, grids: CalibratedGrids | None,
                         antenna_positions, rx_point, state: SceneState):
    """Anomalous trajectories through (calibrated) grid points.

    Yields (antenna_index, grid_index, Trajectory); the scatter IP carries the
    specular outgoing direction so the EM stage can aim the directive lobe.
    Only single-bounce specular parents are supported (one anomalous IP).
    """
    spec = region.specular
    if len(spec.interactions) != 1:
        raise ValueError("scatter paths support single-bounce specular parents")
    ip0 = spec.ips[region.bounce_index]
    kind = ("scatter-reflection" if ip0.kind == "reflection"
            else "scatter-diffraction")
    antenna_positions = np.asarray(antenna_positions, dtype=float)
    rx_point = np.asarray(rx_point, dtype=float)
    for m, t_m in enumerate(antenna_positions):
        pts = grids.points[m] if grids is not None else region.grid_points
        mask = grids.valid[m] if grids is not None else np.ones(len(pts), bool)
        spec_m = _specular_out_direction(region, t_m, rx_point, state)
        for n, (p, ok) in enumerate(zip(pts, mask)):
            if not ok:
                continue
            ip = IP(position=p, kind=kind, object_id=ip0.object_id,
                    facet_id=ip0.facet_id, specular_out=spec_m)
            yield m, n, Trajectory(interactions=spec.interactions,
                                   ips=(ip,), tx=t_m, rx=rx_point,
                                   tx_antenna=m, rx_antenna=0)


def _specular_out_direction(region: ScatterRegion, tx, rx, state: SceneState):
    """Outgoing direction of the specular bounce for this antenna position
    (mirror construction on the bounce plane; exact for a single bounce)."""
    poly = state.surface(region.surface_id).polygon
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    image = g.mirror_point(tx, poly.origin, poly.normal)
    t = g.ray_plane_param(image, rx, poly.origin, poly.normal)
    if t is None or not (0.0 < t < 1.0):
        ip = region.specular.ips[region.bounce_index].position
        return g.unit(rx - ip)
    spec_point = image + t * (rx - image)
    return g.unit(rx - spec_point)
