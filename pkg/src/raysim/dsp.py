"""Link-level applications on generated channels: pilot-based OFDM channel
estimation, the downlink MU-MISO beamformer suite with sum rates, and RIS
phase optimization by alternating updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geoparams import steering_vector

DBM = 1e-3


def dbm_to_watt(dbm):
    return 10.0 ** (dbm / 10.0) * DBM


DEFAULT_PT = dbm_to_watt(10.0)          # 10 dBm total transmit power
DEFAULT_N0W = dbm_to_watt(-94.0)        # -174 dBm/Hz over 50 MHz


# ---------------------------------------------------------------------------
# pilot-grid channel estimation


@dataclass(frozen=True)
class PilotGrid:
    """Resource-block pilot layout: 12 subcarriers x 14 symbols per RB with
    per-port pilot positions (disjoint across the four ports).

    Positions are (symbol, subcarrier) offsets inside an RB; the default
    pattern places two pilot symbols per port on staggered subcarriers.
    """
    rb_subcarriers: int = 12
    rb_symbols: int = 14
    port_positions: tuple = (
        ((0, 0), (0, 6), (7, 3), (7, 9)),
        ((0, 3), (0, 9), (7, 0), (7, 6)),
        ((1, 0), (1, 6), (8, 3), (8, 9)),
        ((1, 3), (1, 9), (8, 0), (8, 6)),
    )

    def __post_init__(self):
        seen = set()
        for port in self.port_positions:
            for pos in port:
                if pos in seen:
                    raise ValueError("pilot positions overlap across ports")
                seen.add(pos)

    def positions(self, port, n_subbands):
        """Absolute (symbol, subcarrier) pilot positions over n_subbands RBs."""
        out = []
        for rb in range(n_subbands):
            for (l, k) in self.port_positions[port]:
                out.append((l, rb * self.rb_subcarriers + k))
        return out


def estimate_channel(h_true, grid: PilotGrid, port=0, linear_interp=False):
    """Nearest-pilot channel estimate and its NSE in dB.

    ``h_true[k, l]`` is the true per-resource-element channel (subcarrier k,
    symbol l) for this port over one subframe; pilots sample it and each
    non-pilot RE copies its nearest pilot (the baseline extension). With
    ``linear_interp`` the copy is replaced by inverse-distance weighting of
    the two nearest pilots.
    """
    h_true = np.asarray(h_true)
    n_sc, n_sym = h_true.shape
    n_subbands = n_sc // grid.rb_subcarriers
    pil = grid.positions(port, n_subbands)
    pil = [(l, k) for (l, k) in pil if l < n_sym and k < n_sc]
    if not pil:
        raise ValueError("no pilot positions inside the grid")
    est = np.empty_like(h_true)
    pk = np.array([k for (_, k) in pil], dtype=float)
    pl = np.array([l for (l, _) in pil], dtype=float)
    pv = np.array([h_true[k, l] for (l, k) in pil])
    # distance in RE units; symbols weighted by the RB aspect so time and
    # frequency distances are comparable
    for k in range(n_sc):
        for l in range(n_sym):
            d2 = (pk - k) ** 2 + (pl - l) ** 2
            if linear_interp and len(pil) > 1:
                order = np.argsort(d2)[:2]
                w = 1.0 / np.maximum(np.sqrt(d2[order]), 1e-9)
                est[k, l] = np.sum(pv[order] * w) / np.sum(w)
            else:
                est[k, l] = pv[int(np.argmin(d2))]
    err = np.sum(np.abs(est - h_true) ** 2)
    ref = np.sum(np.abs(h_true) ** 2)
    nse = err / ref
    nse_db = -math.inf if nse == 0.0 else 10.0 * math.log10(nse)
    return est, nse_db


# ---------------------------------------------------------------------------
# beamforming suite


@dataclass
class BeamformerSet:
    directions: np.ndarray       # (N_t, K) unit-norm columns
    powers: np.ndarray           # (K,) per-user transmit powers, sums to P_t
    method: str

    def __post_init__(self):
        norms = np.linalg.norm(self.directions, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("beam columns must be unit norm")

    @property
    def total_power(self):
        return float(np.sum(self.powers))


def _normalize_columns(f):
    return f / np.linalg.norm(f, axis=0, keepdims=True)


def beamform(method, h, p_t=DEFAULT_PT, n0w=DEFAULT_N0W, angles=None,
             array=None, lam=None) -> BeamformerSet:
    """Matched / ZF / MMSE / spatial beamformers with equal power split.

    ``h`` is N_t x K (column k is user k's channel). ZF uses the right
    pseudo-inverse of H^H for K < N_t and warns on bad conditioning; the
    spatial beamformer needs per-user (theta, phi) angles plus the array and
    wavelength.
    """
    h = np.asarray(h, dtype=complex)
    n_t, k = h.shape
    if k > n_t:
        raise ValueError("need K <= N_t")
    if method == "matched":
        f = h.copy()
    elif method == "zf":
        gram = h.conj().T @ h
        cond = np.linalg.cond(gram)
        if cond > 1e12:
            import warnings
            warnings.warn(f"ZF: ill-conditioned channel (cond={cond:.2e}); "
                          "using pseudo-inverse", stacklevel=2)
            f = h @ np.linalg.pinv(gram)
        else:
            f = h @ np.linalg.inv(gram)
    elif method == "mmse":
        gram = h.conj().T @ h
        f = h @ np.linalg.inv(gram + (n0w / p_t) * np.eye(k))
    elif method == "spatial":
        if angles is None or array is None or lam is None:
            raise ValueError("spatial beamformer needs angles, array, lam")
        f = np.column_stack([steering_vector(th, ph, array, lam)
                             for th, ph in angles])
    else:
        raise ValueError(f"unknown beamforming method {method!r}")
    return BeamformerSet(directions=_normalize_columns(f),
                         powers=np.full(k, p_t / k), method=method)


def sum_rate(bf: BeamformerSet, h, n0w=DEFAULT_N0W):
    """sum_k log2(1 + P_k |f_k^H h_k|^2 / (sum_{k'!=k} P_k' |f_k'^H h_k|^2 + N0W))."""
    h = np.asarray(h, dtype=complex)
    f = bf.directions
    p = bf.powers
    k = h.shape[1]
    cross = np.abs(f.conj().T @ h) ** 2          # [k', k] = |f_k'^H h_k|^2
    rate = 0.0
    for kk in range(k):
        sig = p[kk] * cross[kk, kk]
        interf = float(np.sum(p * cross[:, kk])) - sig
        rate += math.log2(1.0 + sig / (interf + n0w))
    return rate


def beamform_wmmse(h, p_t=DEFAULT_PT, n0w=DEFAULT_N0W, max_iter=100, tol=1e-9,
                   return_history=False):
    """Weighted-MMSE beamformer by alternating u, w and beam updates.

    Initialized from the (equal-power) MMSE beamformer. Each round updates
    the per-user receive scalars u_k, the MSE weights w_k and then the beams
    f_k = u_k^* w_k (A + mu I)^{-1} h_k with the Lagrange multiplier mu found
    by bisection so the total power meets p_t. Power splits across users are
    carried in the beam norms, reported via BeamformerSet.powers.
    """
    h = np.asarray(h, dtype=complex)
    n_t, k = h.shape
    init = beamform("mmse", h, p_t, n0w)
    f = init.directions * np.sqrt(init.powers)[None, :]
    history = [sum_rate(_as_set(f, "wmmse"), h, n0w)]
    for it in range(max_iter):
        gains = h.conj().T @ f                   # [k, k'] = h_k^H f_k'
        power_rx = np.abs(gains) ** 2
        totals = power_rx.sum(axis=1) + n0w
        u = np.diag(gains) / totals
        interf = totals - np.abs(np.diag(gains)) ** 2
        w = totals / interf
        a = (h * (w * np.abs(u) ** 2)[None, :]) @ h.conj().T
        rhs = h * (np.conj(u) * w)[None, :]
        f = _power_constrained_solve(a, rhs, p_t)
        history.append(sum_rate(_as_set(f, "wmmse"), h, n0w))
        if abs(history[-1] - history[-2]) < tol:
            break
    bf = _as_set(f, "wmmse")
    if return_history:
        return bf, history
    return bf


def _as_set(f, method):
    norms = np.linalg.norm(f, axis=0)
    return BeamformerSet(directions=f / norms[None, :], powers=norms ** 2,
                         method=method)


def _power_constrained_solve(a, rhs, p_t, tol_rel=1e-12, max_iter=200):
    """F(mu) = (A + mu I)^{-1} RHS with mu >= 0 from bisection on the total
    power; rescaled at the end so the budget is met to machine precision."""
    eye = np.eye(a.shape[0])
    scale = max(float(np.trace(a).real) / a.shape[0], 1e-300)

    def power(mu):
        f = np.linalg.solve(a + mu * eye, rhs)
        return float(np.sum(np.abs(f) ** 2)), f

    # A is PSD and typically rank-deficient (K < N_t): bracket from a
    # scale-relative ridge instead of mu = 0
    mu_lo = scale * 1e-14
    while True:
        try:
            p_lo, f_lo = power(mu_lo)
            break
        except np.linalg.LinAlgError:
            mu_lo *= 10.0
            if mu_lo > scale * 1e6:
                raise RuntimeError("WMMSE power step: cannot regularize A")
    if p_lo <= p_t:
        return f_lo * math.sqrt(p_t / p_lo)
    mu_hi = max(mu_lo * 2.0, scale)
    while power(mu_hi)[0] > p_t:
        mu_hi *= 2.0
        if mu_hi > scale * 1e30:
            raise RuntimeError("bisection bracket failure in WMMSE power step")
    for _ in range(max_iter):
        mu = 0.5 * (mu_lo + mu_hi)
        p_mid, f_mid = power(mu)
        if p_mid > p_t:
            mu_lo = mu
        else:
            mu_hi = mu
        if abs(p_mid - p_t) <= tol_rel * p_t:
            break
    p_fin, f_fin = power(0.5 * (mu_lo + mu_hi))
    return f_fin * math.sqrt(p_t / p_fin)


# ---------------------------------------------------------------------------
# RIS alternating optimization


def ris_optimize(h_d, h_i, p_t=DEFAULT_PT, max_iter=200, tol=1e-12,
                 rule="conjugate", return_history=False):
    """Joint matched beam and per-element RIS phases for a single-antenna UE.

    Alternates f = sqrt(P_t) (h_d + H_i phi)/|h_d + H_i phi| with the
    per-element phase update. ``rule='conjugate'`` co-phases every element
    against the direct term, phi_l = exp(j angle(f^H h_d conj(f^H H_i[:, l])));
    ``rule='literal'`` applies the subtraction form
    phi_l = exp(j angle(f^H h_d - f^H H_i[:, l])). Monotone effective-gain
    growth is guaranteed for the conjugate rule only.
    """
    h_d = np.asarray(h_d, dtype=complex).reshape(-1)
    h_i = np.asarray(h_i, dtype=complex)
    n_t, n_cells = h_i.shape
    phi = np.ones(n_cells, dtype=complex)
    gains = []

    def effective(phi_v):
        return h_d + h_i @ phi_v

    g = effective(phi)
    gains.append(float(np.linalg.norm(g)))
    for _ in range(max_iter):
        f = math.sqrt(p_t) * g / np.linalg.norm(g)
        fh_d = np.vdot(f, h_d)
        fh_i = f.conj() @ h_i
        if rule == "conjugate":
            ref = fh_d if abs(fh_d) > 0.0 else 1.0 + 0.0j
            phi = np.exp(1j * np.angle(ref * np.conj(fh_i)))
        elif rule == "literal":
            phi = np.exp(1j * np.angle(fh_d - fh_i))
        else:
            raise ValueError(f"unknown RIS phase rule {rule!r}")
        g = effective(phi)
        gains.append(float(np.linalg.norm(g)))
        if abs(gains[-1] - gains[-2]) < tol:
            break
    f = math.sqrt(p_t) * g / np.linalg.norm(g)
    if return_history:
        return f, phi, gains[-1], gains
    return f, phi, gains[-1]
