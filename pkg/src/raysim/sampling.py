"""Discrete-time and OFDM channel construction from CIR streams.

The tap between transmit symbol n and receive sample m is

    h[m, n] = sum_p alpha_p(n Ts) exp(-j 2 pi f_p(n Ts) tau_p(n Ts))
              * p((m - n) Ts - tau_p(n Ts) + tau_sync)

with p the effective pulse (transmit * receive convolution). The shipped
pulse pair is root-raised-cosine on both sides, so the effective pulse is the
raised cosine, tabulated on a fine grid over the configured span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class SamplingError(ValueError):
    pass


class SpanError(SamplingError):
    def __init__(self, discarded, span):
        self.discarded = discarded
        self.span = span
        super().__init__(f"tap span {span} too small: discarded relative "
                         f"energy {discarded:.3e}")


def raised_cosine(t, ts, beta=0.25):
    """Closed-form raised cosine (the RRC pair's exact convolution)."""
    t = np.asarray(t, dtype=float)
    x = t / ts
    sinc = np.sinc(x)
    denom = 1.0 - (2.0 * beta * x) ** 2
    out = np.empty_like(x)
    reg = np.abs(denom) > 1e-10
    out[reg] = sinc[reg] * np.cos(np.pi * beta * x[reg]) / denom[reg]
    out[~reg] = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * beta))
    return out


def root_raised_cosine(t, ts, beta=0.25):
    t = np.asarray(t, dtype=float)
    x = t / ts
    out = np.empty_like(x)
    tiny = np.abs(x) < 1e-10
    out[tiny] = 1.0 - beta + 4.0 * beta / np.pi
    pole = np.abs(np.abs(x) - 1.0 / (4.0 * beta)) < 1e-10
    out[pole] = (beta / np.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * math.sin(math.pi / (4.0 * beta))
        + (1.0 - 2.0 / np.pi) * math.cos(math.pi / (4.0 * beta)))
    reg = ~(tiny | pole)
    xr = x[reg]
    num = (np.sin(np.pi * xr * (1 - beta))
           + 4 * beta * xr * np.cos(np.pi * xr * (1 + beta)))
    den = np.pi * xr * (1 - (4 * beta * xr) ** 2)
    out[reg] = num / den
    return out


@dataclass
class PulsePair:
    """Tx/Rx pulse pair with the tabulated effective pulse p = tx * rx.

    The default root-raised-cosine pair yields the raised cosine, which peaks
    at zero and nulls at nonzero integer multiples of Ts.
    """
    ts: float
    beta: float = 0.25
    span: int = 8                  # effective pulse support: |t| <= span * Ts
    oversample: int = 64
    tau_sync: float = 0.0
    _grid: np.ndarray = field(default=None, repr=False)
    _table: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.span * self.oversample
        self._grid = np.arange(-n, n + 1) * (self.ts / self.oversample)
        self._table = raised_cosine(self._grid, self.ts, self.beta)

    def tx_pulse(self, t):
        return root_raised_cosine(t, self.ts, self.beta)

    def rx_pulse(self, t):
        return root_raised_cosine(t, self.ts, self.beta)

    def effective(self, t):
        """Effective pulse by linear interpolation of the tabulation; zero
        outside the span."""
        t = np.asarray(t, dtype=float)
        return np.interp(t, self._grid, self._table, left=0.0, right=0.0)

    @property
    def num_taps_side(self):
        return self.span


def tau_sync_for(samples, ts):
    """Sync offset: delay of the strongest path, floored to the sample grid."""
    if not samples:
        return 0.0
    strongest = max(samples, key=lambda s: abs(s.complex_gain))
    return math.floor(strongest.delay / ts) * ts


@dataclass
class DiscreteChannel:
    """Time-variant taps h[m, n] stored as (column n) x (lag m - n)."""
    taps: np.ndarray          # complex (num_cols, num_lags)
    n_start: int
    lag_min: int
    ts: float
    tau_sync: float

    @property
    def num_cols(self):
        return self.taps.shape[0]

    @property
    def num_lags(self):
        return self.taps.shape[1]

    @property
    def lag_max(self):
        return self.lag_min + self.num_lags - 1

    def h(self, m, n):
        col = n - self.n_start
        lag = m - n - self.lag_min
        if 0 <= col < self.num_cols and 0 <= lag < self.num_lags:
            return self.taps[col, lag]
        return 0.0 + 0.0j

    def column(self, n):
        return self.taps[n - self.n_start]

    def lag_profile(self):
        """Mean tap energy per lag across columns."""
        return np.mean(np.abs(self.taps) ** 2, axis=0)

    def energy(self):
        return float(np.sum(np.abs(self.taps) ** 2))


def discretize(cir_stream, pulses: PulsePair, n_range=None) -> DiscreteChannel:
    """Taps from per-emission-instant CIR samples.

    ``cir_stream`` maps transmit index n -> list of CirSample emitted at
    n * Ts. Every n in ``n_range`` (default: the stream's keys) must be
    present; interpolation between emission instants is refused.
    """
    if n_range is None:
        keys = sorted(cir_stream.keys())
        if not keys:
            raise SamplingError("empty CIR stream")
        n_range = range(keys[0], keys[-1] + 1)
    ns = list(n_range)
    for n in ns:
        if n not in cir_stream:
            raise SamplingError(f"missing CIR at emission instant n={n}; "
                                "interpolation is refused")
    ts = pulses.ts
    span = pulses.num_taps_side
    max_delay = 0.0
    for n in ns:
        for s in cir_stream[n]:
            max_delay = max(max_delay, s.delay)
    lag_min = -span + math.floor((0.0 - pulses.tau_sync) / ts)
    lag_max = span + math.ceil((max_delay - pulses.tau_sync) / ts)
    num_lags = lag_max - lag_min + 1
    taps = np.zeros((len(ns), num_lags), dtype=complex)
    lags = np.arange(lag_min, lag_max + 1)
    for i, n in enumerate(ns):
        for s in cir_stream[n]:
            arg = lags * ts - s.delay + pulses.tau_sync
            taps[i] += (s.complex_gain * pulses.effective(arg))
    return DiscreteChannel(taps=taps, n_start=ns[0], lag_min=lag_min, ts=ts,
                           tau_sync=pulses.tau_sync)


def multitap_matrix(d: DiscreteChannel, span, energy_tol=1e-12):
    """Lower-triangular banded matrix [H]_{m,n} = h[m, n] for m >= n.

    ``span`` is the maximum retained lag; taps beyond it (or at negative lag,
    which the causal matrix cannot represent) count as discarded energy and
    raise SpanError above ``energy_tol`` (relative).
    """
    total = d.energy()
    if total > 0.0:
        lags = np.arange(d.lag_min, d.lag_max + 1)
        keep = (lags >= 0) & (lags <= span)
        discarded = float(np.sum(np.abs(d.taps[:, ~keep]) ** 2)) / total
        if discarded > energy_tol:
            raise SpanError(discarded, span)
    n = d.num_cols
    h = np.zeros((n, n), dtype=complex)
    for col in range(n):
        n_sym = d.n_start + col
        for lag in range(max(0, d.lag_min), min(span, d.lag_max) + 1):
            row = col + lag
            if row < n:
                h[row, col] = d.taps[col, lag - d.lag_min]
    return h


@dataclass
class OfdmChannel:
    matrix: np.ndarray
    k: int
    n_cp: int


def ofdm_channel(h_matrix, k, n_cp) -> OfdmChannel:
    """K x K subcarrier channel from the multi-tap matrix.

    Rows/columns N_cp .. N_cp+K-1 (0-based) form H'; the cyclic-prefix wrap
    H'' moves columns 0 .. N_cp-1 into the last N_cp positions. The result is
    F (H' + H'') F^H with the unitary DFT.
    """
    if n_cp >= k:
        raise SamplingError("cyclic prefix must be shorter than the symbol")
    need = n_cp + k
    if h_matrix.shape[0] < need or h_matrix.shape[1] < need:
        raise SamplingError(f"multitap matrix must cover {need} samples")
    hp = h_matrix[n_cp:n_cp + k, n_cp:n_cp + k]
    hpp = np.zeros((k, k), dtype=complex)
    if n_cp > 0:
        hpp[:, k - n_cp:] = h_matrix[n_cp:n_cp + k, 0:n_cp]
    h_tilde = hp + hpp
    # F H F^H with unitary F: fft along rows, ifft along columns
    mat = np.fft.fft(np.fft.ifft(h_tilde, axis=1), axis=0)
    return OfdmChannel(matrix=mat, k=k, n_cp=n_cp)


def dominant_tap_count(d: DiscreteChannel, threshold_db=40.0):
    """Number of lags whose mean energy is within threshold_db of the peak."""
    prof = d.lag_profile()
    peak = np.max(prof)
    if peak <= 0.0:
        return 0
    return int(np.sum(prof >= peak * 10.0 ** (-threshold_db / 10.0)))
