"""End-to-end orchestration: trace -> EM -> discrete channel -> metrics -> DSP.

Candidate interaction sequences are found once per terminal pair from the
array centers and re-solved per antenna pair and per emission instant
(nearby antennas and nearby instants share trajectories on common objects);
every re-solve re-validates geometry and blockage. A full re-enumeration
runs whenever the scene state drifts past ``retrace_interval``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import em, geoparams, metrics, sampling, scattering, tracer
from .geoparams import C_LIGHT
from .scene import Scene, SceneState, state_at


@dataclass
class LinkSettings:
    max_reflections: int = 2
    max_diffractions: int = 1
    scattering_enabled: bool = False
    scattering_ds: float = 0.25
    scatter_diffraction: bool = False      # scattering at diffraction IPs
    retrace_interval: float = math.inf     # seconds between full re-traces
    atmosphere: em.Atmosphere = field(default_factory=em.Atmosphere)


class LinkSimulator:
    """CIR generator for one terminal pair over emission time."""

    def __init__(self, scene: Scene, tx_id: str, rx_id: str,
                 settings: LinkSettings | None = None):
        self.scene = scene
        self.tx_id = tx_id
        self.rx_id = rx_id
        self.settings = settings or LinkSettings()
        self.tx_array = scene.terminals[tx_id].array
        self.rx_array = scene.terminals[rx_id].array
        self.diagnostics = tracer.TraceDiagnostics()
        self._sequences = None
        self._diff_params = {}
        self._last_trace_t = None

    # -- tracing ---------------------------------------------------------

    def _full_trace(self, state: SceneState):
        tx_c = state.terminal_position[self.tx_id]
        rx_c = state.terminal_position[self.rx_id]
        paths, diag = tracer.trace(state, tx_c, rx_c,
                                   self.settings.max_reflections,
                                   self.settings.max_diffractions,
                                   self.diagnostics)
        self._sequences = [p.interactions for p in paths]
        self._diff_params = {
            p.interactions: [ip.param for ip in p.ips if ip.kind == "diffraction"]
            for p in paths}
        self._last_trace_t = state.t
        return paths

    def paths_at(self, state: SceneState, tx_point, rx_point):
        """Re-solve the cached sequences for arbitrary endpoint positions."""
        if (self._sequences is None
                or state.t - self._last_trace_t >= self.settings.retrace_interval):
            self._full_trace(state)
        out = []
        for seq in self._sequences:
            traj = tracer.resolve_interactions(
                state, seq, tx_point, rx_point,
                s_init=self._diff_params.get(seq) or None,
                diagnostics=self.diagnostics)
            if traj is not None:
                out.append(traj)
        return out

    # -- EM --------------------------------------------------------------

    def samples_at(self, t, antenna_pairs=None):
        """CIR samples emitted at time t, keyed by (tx_antenna, rx_antenna)."""
        state = state_at(self.scene, t)
        tx_elems = self.tx_array.element_positions(state.terminal_position[self.tx_id])
        rx_elems = self.rx_array.element_positions(state.terminal_position[self.rx_id])
        if antenna_pairs is None:
            antenna_pairs = [(i, j) for i in range(len(tx_elems))
                             for j in range(len(rx_elems))]
        ue_vel = state.terminal_velocity[self.rx_id]
        out = {}
        for (nt, nr) in antenna_pairs:
            trajs = self.paths_at(state, tx_elems[nt], rx_elems[nr])
            recs = []
            for pid, traj in enumerate(trajs):
                rec = self._evaluate(traj, state, ue_vel, nt, nr, pid)
                if rec is not None:
                    recs.append(rec)
            if self.settings.scattering_enabled:
                recs.extend(self._scatter_records(state, tx_elems, rx_elems,
                                                  nt, nr, ue_vel))
            out[(nt, nr)] = em.assemble_cir(recs, t)
        return out

    def _evaluate(self, traj, state, ue_vel, nt, nr, pid):
        geom = geoparams.path_geometry(traj, self.tx_array, self.rx_array)
        mso = geoparams.mso_velocity_map(traj, state)
        fbar = geoparams.doppler(traj, geom, ue_vel, mso, self.scene.fc)
        res = em.path_gain(traj, geom, state, self.tx_array, self.rx_array,
                           fbar, self.settings.atmosphere,
                           ds=self.settings.scattering_ds)
        if res.discarded:
            self.diagnostics.discarded_geometry += 1
            return None
        return {"alpha": res.alpha, "delay": geom.delay, "doppler": fbar,
                "aod": geom.aod, "aoa": geom.aoa, "tx_antenna": nt,
                "rx_antenna": nr, "kind": traj.kind_string(), "path_id": pid}

    def _scatter_records(self, state, tx_elems, rx_elems, nt, nr, ue_vel):
        """Anomalous-path records for single-bounce reflections (and, behind
        the flag, diffractions); the grids are MIMO-calibrated on the tx side
        against rx element nr."""
        if len(rx_elems) > 1 and len(tx_elems) > 1:
            raise NotImplementedError("scattering supports one array side")
        rx_point = rx_elems[nr]
        specs = [p for p in self.paths_at(state, tx_elems[0], rx_point)
                 if p.kind_string() == "R"
                 or (self.settings.scatter_diffraction and p.kind_string() == "D")]
        recs = []
        for pid, spec in enumerate(specs):
            region = scattering.build_scatter_region(
                state, spec, 0, ds=self.settings.scattering_ds)
            if region.num_points == 0:
                continue
            if len(tx_elems) > 1:
                grids = scattering.calibrate_mimo_grids(region, tx_elems,
                                                        rx_point, state)
            else:
                grids = None
            for m, n, traj in scattering.scatter_trajectories(
                    region, grids, tx_elems, rx_point, state):
                if m != nt:
                    continue
                rec = self._evaluate(traj, state, ue_vel, nt, nr,
                                     10_000 + 100 * pid + n)
                if rec is not None:
                    recs.append(rec)
        return recs

    # -- discrete channel --------------------------------------------------

    def cir_stream(self, ts, n_range, pair=(0, 0)):
        """{n: samples} for emission instants n*ts over the given range."""
        return {n: self.samples_at(n * ts, [pair])[pair] for n in n_range}

    def discrete_channel(self, ts, n_range, pair=(0, 0), pulses=None):
        stream = self.cir_stream(ts, n_range, pair)
        if pulses is None:
            first = stream[n_range[0]]
            pulses = sampling.PulsePair(ts=ts,
                                        tau_sync=sampling.tau_sync_for(first, ts))
        return sampling.discretize(stream, pulses, n_range), pulses


def received_quality(scene: Scene, tx_id: str, rx_point, settings: LinkSettings,
                     t=0.0, fc=None):
    """Sum of |alpha|^2 / P0 from the tx terminal to a probe point."""
    fc = fc if fc is not None else scene.fc
    state = state_at(scene, t)
    tx_c = state.terminal_position[tx_id]
    rx_point = np.asarray(rx_point, dtype=float)
    paths, diag = tracer.trace(state, tx_c, rx_point,
                               settings.max_reflections,
                               settings.max_diffractions)
    probe = scene.terminals[tx_id].array
    total = 0.0
    for traj in paths:
        geom = geoparams.path_geometry(traj, probe, probe)
        res = em.path_gain(traj, geom, state, probe, probe, fc,
                           settings.atmosphere, ds=settings.scattering_ds)
        if not res.discarded:
            total += abs(res.alpha) ** 2
    return total / scene.p0


def ofdm_symbols(d: sampling.DiscreteChannel, k, n_cp, n_symbols,
                 max_lag=None):
    """Per-symbol OFDM channel matrices from a tap stream covering
    n_symbols * (k + n_cp) transmit instants."""
    max_lag = max_lag if max_lag is not None else min(d.lag_max, n_cp + k - 1)
    sym_len = k + n_cp
    out = []
    h_full = sampling.multitap_matrix(d, span=max_lag, energy_tol=1.0)
    for s in range(n_symbols):
        block = h_full[s * sym_len:(s + 1) * sym_len,
                       s * sym_len:(s + 1) * sym_len]
        out.append(sampling.ofdm_channel(block, k, n_cp))
    return out


def ris_two_hop(scene: Scene, tx_id: str, panel_id: str, rx_id: str,
                settings: LinkSettings, t=0.0):
    """Composite Tx -> RIS -> Rx samples per cell, plus the direct samples.

    Hop one is traced from each Tx element to each cell at emission time t;
    hop two from each cell to the Rx at the wavefront's arrival time
    (t + hop-one delay of the strongest first-hop path).
    """
    state = state_at(scene, t)
    panel = scene.ris_panels[panel_id]
    tx_elems = scene.terminals[tx_id].array.element_positions(
        state.terminal_position[tx_id])
    rx_pos = state.terminal_position[rx_id]
    cells = panel.cell_positions()
    fc = scene.fc
    lam = C_LIGHT / fc
    tx_array = scene.terminals[tx_id].array
    rx_array = scene.terminals[rx_id].array
    probe = tx_array

    def hop_records(state_h, a, b, nt, nr, arr_a, arr_b, toward_panel):
        paths, _ = tracer.trace(state_h, a, b, settings.max_reflections,
                                settings.max_diffractions)
        hops = []
        for pid, traj in enumerate(paths):
            geom = geoparams.path_geometry(traj, arr_a, arr_b)
            mso = geoparams.mso_velocity_map(traj, state_h)
            fbar = geoparams.doppler(traj, geom, np.zeros(3), mso, fc)
            res = em.path_gain(traj, geom, state_h, arr_a, arr_b, fbar,
                               settings.atmosphere, ds=settings.scattering_ds)
            if res.discarded:
                continue
            sample = em.CirSample(
                complex_gain=res.alpha * np.exp(-2j * np.pi * fbar * geom.delay),
                delay=geom.delay, doppler=fbar, aod=geom.aod, aoa=geom.aoa,
                emission_time=state_h.t, tx_antenna=nt, rx_antenna=nr,
                kind_string=traj.kind_string(), path_id=pid)
            direction = (geom.directions[-1] if toward_panel
                         else geom.directions[0])
            hops.append(em.RisHop(sample=sample, panel_direction=direction,
                                  polar=res.final_polar))
        return hops

    composite = {}
    for ci, cell in enumerate(cells):
        for nt, te in enumerate(tx_elems):
            hop1 = hop_records(state, te, cell, nt, 0, tx_array, probe, True)
            if not hop1:
                continue
            arrival = t + min(h.sample.delay for h in hop1)
            state2 = state_at(scene, arrival)
            hop2 = hop_records(state2, cell, rx_pos, 0, 0, probe, rx_array, False)
            if not hop2:
                continue
            composite[(nt, ci)] = em.ris_channel(hop1, hop2, panel, t, fc, lam)
    return composite


def narrowband_ris_matrices(scene: Scene, tx_id, panel_id, rx_id, settings,
                            t=0.0):
    """(h_d, H_i): direct channel vector and per-cell composite matrix at the
    carrier (single-tap narrowband reduction for the RIS application)."""
    sim = LinkSimulator(scene, tx_id, rx_id, settings)
    n_t = scene.terminals[tx_id].array.size
    direct = sim.samples_at(t, [(m, 0) for m in range(n_t)])
    h_d = np.zeros(n_t, dtype=complex)
    for (m, _), samples in direct.items():
        h_d[m] = sum(s.complex_gain for s in samples)
    composite = ris_two_hop(scene, tx_id, panel_id, rx_id, settings, t)
    n_cells = scene.ris_panels[panel_id].num_cells
    h_i = np.zeros((n_t, n_cells), dtype=complex)
    for (m, ci), samples in composite.items():
        h_i[m, ci] = sum(s.complex_gain for s in samples)
    return h_d, h_i
