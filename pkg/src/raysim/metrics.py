"""Channel characterization: PDP/delay spread, Doppler spread and coherence
time, NSE, SIR, angular spread profiles, coverage grids.

Time integrals over the emission time are realized as sums over the
simulator's emission instants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geoparams import steering_vector
from .sampling import DiscreteChannel, OfdmChannel

INF_DB = float("inf")


class MetricError(ValueError):
    pass


@dataclass
class Profile:
    axis: np.ndarray
    weights: np.ndarray
    label: str = ""


def _gains_delays(cirs_over_time):
    gains, delays, dopplers = [], [], []
    for samples in cirs_over_time:
        for s in samples:
            gains.append(abs(s.complex_gain) ** 2)
            delays.append(s.delay)
            dopplers.append(s.doppler)
    return np.asarray(gains), np.asarray(delays), np.asarray(dopplers)


def delay_spread(cirs_over_time):
    """Power-weighted mean delay over all paths and emission instants."""
    g, d, _ = _gains_delays(cirs_over_time)
    total = np.sum(g)
    if total <= 0.0:
        raise MetricError("all path gains are zero")
    return float(np.sum(d * g) / total)


def power_delay_profile(cirs_over_time, bin_s):
    g, d, _ = _gains_delays(cirs_over_time)
    if len(d) == 0:
        raise MetricError("no paths")
    nbins = int(math.ceil(np.max(d) / bin_s)) + 1
    axis = np.arange(nbins) * bin_s
    weights = np.zeros(nbins)
    idx = np.minimum((d / bin_s).astype(int), nbins - 1)
    np.add.at(weights, idx, g)
    return Profile(axis=axis, weights=weights, label="delay_s")


def doppler_spread(cirs_over_time, literal_variance=False):
    """(spread f_d, mean shift f_m, coherence time 1/(4 f_d)).

    The printed spread formula is a power-weighted mean squared deviation; by
    default the root of it is reported so f_d carries Hz. Pass
    literal_variance=True for the printed (squared) form.
    """
    g, _, f = _gains_delays(cirs_over_time)
    total = np.sum(g)
    if total <= 0.0:
        raise MetricError("all path gains are zero")
    f_m = float(np.sum(f * g) / total)
    var = float(np.sum((f - f_m) ** 2 * g) / total)
    f_d = var if literal_variance else math.sqrt(var)
    tau_c = INF_DB if f_d == 0.0 else 1.0 / (4.0 * f_d)
    return f_d, f_m, tau_c


def doppler_profile(cirs_over_time, bin_hz, center):
    g, _, f = _gains_delays(cirs_over_time)
    if len(f) == 0:
        raise MetricError("no paths")
    rel = f - center
    lo = np.floor(np.min(rel) / bin_hz)
    hi = np.ceil(np.max(rel) / bin_hz)
    axis = (np.arange(lo, hi + 1)) * bin_hz
    weights = np.zeros(len(axis))
    idx = np.clip(((rel - axis[0]) / bin_hz).astype(int), 0, len(axis) - 1)
    np.add.at(weights, idx, g)
    return Profile(axis=axis + center, weights=weights, label="doppler_hz")


def nse(d: DiscreteChannel, m1, m2):
    """Normalized square error between the tap sums at receive instants m1, m2:
    |sum_k h[m1, m1+k] - h[m2, m2+k]|^2 / |sum_k h[m1, m1+k]|^2."""
    s1 = _tap_sum(d, m1)
    s2 = _tap_sum(d, m2)
    denom = abs(s1) ** 2
    if denom == 0.0:
        raise MetricError("zero reference tap sum")
    return abs(s1 - s2) ** 2 / denom


def _tap_sum(d: DiscreteChannel, m):
    total = 0.0 + 0.0j
    for lag in range(d.lag_min, d.lag_max + 1):
        n = m - lag
        col = n - d.n_start
        if 0 <= col < d.num_cols:
            total += d.taps[col, lag - d.lag_min]
    return total


def sir(ofdm: OfdmChannel, in_db=True):
    """Sum over subcarriers of diagonal power over off-diagonal (ICI) power."""
    h = ofdm.matrix
    if ofdm.k < 2:
        raise MetricError("need at least two subcarriers")
    diag = np.abs(np.diag(h)) ** 2
    total_rows = np.sum(np.abs(h) ** 2, axis=1)
    interf = total_rows - diag
    if np.all(interf <= 0.0):
        return INF_DB if in_db else float("inf")
    ratio = float(np.sum(diag / np.maximum(interf, 1e-300)))
    return 10.0 * math.log10(ratio) if in_db else ratio


@dataclass
class AngularGrid:
    theta_edges: np.ndarray
    phi_edges: np.ndarray

    @staticmethod
    def degrees(dtheta=1.0, dphi=1.0):
        return AngularGrid(
            theta_edges=np.deg2rad(np.arange(-180.0, 180.0 + dtheta, dtheta)),
            phi_edges=np.deg2rad(np.arange(0.0, 180.0 + dphi, dphi)))

    def bin_of(self, theta, phi):
        it = int(np.clip(np.searchsorted(self.theta_edges, theta) - 1, 0,
                         len(self.theta_edges) - 2))
        ip = int(np.clip(np.searchsorted(self.phi_edges, phi) - 1, 0,
                         len(self.phi_edges) - 2))
        return it, ip


def true_angular_profile(cirs_over_time, grid: AngularGrid):
    """Departure-angle power map: bins sum |alpha|^2 over paths and instants."""
    shape = (len(grid.theta_edges) - 1, len(grid.phi_edges) - 1)
    out = np.zeros(shape)
    for samples in cirs_over_time:
        for s in samples:
            it, ip = grid.bin_of(*s.aod)
            out[it, ip] += abs(s.complex_gain) ** 2
    return out


def effective_angular_profile(ofdm_per_antenna, array, lam, grid: AngularGrid,
                              theta_centers=None, phi_centers=None):
    """Steering-matched per-bin power of the per-antenna subcarrier diagonals:
    (1/K) sum_k |sum_nt H^(nt)[k,k] a_nt(theta, phi)|^2."""
    n_ant = array.size
    ks = ofdm_per_antenna[0].k
    diag = np.column_stack([np.diag(ofdm_per_antenna[m].matrix)
                            for m in range(n_ant)])   # (K, n_ant)
    if theta_centers is None:
        theta_centers = 0.5 * (grid.theta_edges[:-1] + grid.theta_edges[1:])
    if phi_centers is None:
        phi_centers = 0.5 * (grid.phi_edges[:-1] + grid.phi_edges[1:])
    out = np.zeros((len(theta_centers), len(phi_centers)))
    for it, th in enumerate(theta_centers):
        for ip, ph in enumerate(phi_centers):
            a = steering_vector(th, ph, array, lam)
            out[it, ip] = float(np.mean(np.abs(diag @ a) ** 2))
    return out


def coverage_grid(run_point, bs_ids, grid_points):
    """Received quality per grid point and serving BS.

    ``run_point(bs_id, point) -> sum |alpha|^2 / P0`` is supplied by the
    pipeline (it traces and evaluates the paths). Returns a list of dicts
    with x, y, per-BS quality in dB and the argmax serving BS.
    """
    rows = []
    for p in grid_points:
        q = {}
        for b in bs_ids:
            power = run_point(b, p)
            q[b] = -INF_DB if power <= 0.0 else 10.0 * math.log10(power)
        serving = max(bs_ids, key=lambda b: q[b])
        rows.append({"x": float(p[0]), "y": float(p[1]),
                     "quality_db": q, "serving": serving})
    return rows
