"""Batch scenario runner.

    raysim run <config.json> [--out DIR] [--seed N] [--threads N]
               [--stage-until {trace|cir|discrete|metrics|dsp}]
    raysim validate <config.json>
    raysim oracle <scene.json> [--out DIR]

Exit codes: 0 ok, 2 config error, 3 geometry error, 4 numeric failure.

All exports are deterministic for a fixed config and seed: text files use
repr-exact float formatting and fixed orderings, binary files carry a
format-version header. The run report (timings, diagnostics) is written
separately and is not part of the byte-stable export set.
"""

from __future__ import annotations

import argparse
import json
import math
import struct
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import em, geoparams, metrics, oracles, sampling, tracer
from .geoparams import C_LIGHT
from .pipeline import LinkSettings, LinkSimulator, ofdm_symbols, received_quality
from .scene import GeometryError, Scene, SchemaError, load_scene, state_at

FORMAT_VERSION = 1
STAGES = ("trace", "cir", "discrete", "metrics", "dsp")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scene_path: str
    tx: str
    rx: str
    sampling_rate: float
    max_reflections: int = 2
    max_diffractions: int = 1
    scattering_enabled: bool = False
    scattering_ds: float = 0.25
    schedule_t0: float = 0.0
    schedule_count: int = 64
    ofdm_k: int = 64
    ofdm_ncp: int = 8
    ofdm_spacing: float = 0.0
    pulse_beta: float = 0.25
    pulse_span: int = 8
    fc: float = None
    applications: dict = field(default_factory=dict)
    out_dir: str = "out"
    seed: int = 0

    @property
    def ts(self):
        return 1.0 / self.sampling_rate

    @staticmethod
    def from_dict(raw: dict, base: Path) -> "RunConfig":
        def need(key):
            if key not in raw:
                raise ConfigError(f"config missing field {key!r}")
            return raw[key]

        ofdm = raw.get("ofdm", {})
        sched = raw.get("schedule", {})
        scat = raw.get("scattering", {})
        pulse = raw.get("pulse", {})
        cfg = RunConfig(
            scene_path=str((base / need("scene")).resolve()
                           if not Path(need("scene")).is_absolute()
                           else need("scene")),
            tx=str(need("tx")),
            rx=str(need("rx")),
            sampling_rate=float(need("sampling_rate")),
            max_reflections=int(raw.get("max_reflections", 2)),
            max_diffractions=int(raw.get("max_diffractions", 1)),
            scattering_enabled=bool(scat.get("enabled", False)),
            scattering_ds=float(scat.get("ds", 0.25)),
            schedule_t0=float(sched.get("t0", 0.0)),
            schedule_count=int(sched.get("count", 64)),
            ofdm_k=int(ofdm.get("subcarriers", 64)),
            ofdm_ncp=int(ofdm.get("cyclic_prefix", 8)),
            ofdm_spacing=float(ofdm.get("spacing", 0.0)),
            pulse_beta=float(pulse.get("beta", 0.25)),
            pulse_span=int(pulse.get("span", 8)),
            fc=float(raw["fc"]) if "fc" in raw else None,
            applications=dict(raw.get("applications", {})),
            out_dir=str(raw.get("out_dir", "out")),
            seed=int(raw.get("seed", 0)),
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.sampling_rate <= 0:
            raise ConfigError("sampling_rate: must be positive")
        if self.ofdm_ncp >= self.ofdm_k:
            raise ConfigError("ofdm.cyclic_prefix: must be smaller than "
                              "ofdm.subcarriers")
        if self.max_reflections < 0 or self.max_diffractions < 0:
            raise ConfigError("max_reflections/max_diffractions: must be >= 0")
        if self.schedule_count < 1:
            raise ConfigError("schedule.count: must be >= 1")
        if self.scattering_ds <= 0:
            raise ConfigError("scattering.ds: must be positive")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    return RunConfig.from_dict(raw, path.parent)


# ---------------------------------------------------------------------------
# formatting helpers (deterministic text output)


def fnum(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows):
    lines = [f"# format_version={FORMAT_VERSION}", ",".join(header)]
    for row in rows:
        lines.append(",".join(fnum(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_banded_binary(path, d: sampling.DiscreteChannel, k, n_cp):
    header = struct.pack("<4siiiddii", b"RSB1", FORMAT_VERSION, k, n_cp,
                         d.ts, d.tau_sync, d.n_start, d.lag_min)
    with open(path, "wb") as f:
        f.write(header)
        f.write(struct.pack("<ii", d.num_cols, d.num_lags))
        f.write(np.ascontiguousarray(d.taps, dtype=np.complex128).tobytes())


def write_matrix_binary(path, mat):
    mat = np.ascontiguousarray(mat, dtype=np.complex128)
    with open(path, "wb") as f:
        f.write(struct.pack("<4siii", b"RSM1", FORMAT_VERSION,
                            mat.shape[0], mat.shape[1]))
        f.write(mat.tobytes())


# ---------------------------------------------------------------------------
# stages


def run(config: RunConfig, out_dir=None, stage_until="dsp", threads=1):
    """Execute the pipeline, writing exports and a run report; returns the
    report dict. ``threads`` is accepted for interface compatibility; the
    implementation is deterministic regardless of its value."""
    if stage_until not in STAGES:
        raise ConfigError(f"unknown stage {stage_until!r}")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {"format_version": FORMAT_VERSION, "config_seed": config.seed,
              "stages": {}, "exports": []}
    rng = np.random.default_rng(config.seed)

    scene = load_scene(config.scene_path)
    if config.fc is not None:
        scene = _override_fc(scene, config.fc)
    for term in (config.tx, config.rx):
        if term not in scene.terminals:
            raise ConfigError(f"terminal {term!r} not found in scene")

    settings = LinkSettings(max_reflections=config.max_reflections,
                            max_diffractions=config.max_diffractions,
                            scattering_enabled=config.scattering_enabled,
                            scattering_ds=config.scattering_ds)
    sim = LinkSimulator(scene, config.tx, config.rx, settings)
    stage_idx = STAGES.index(stage_until)

    # -- trace ------------------------------------------------------------
    t0 = time.perf_counter()
    state0 = state_at(scene, config.schedule_t0)
    paths = sim._full_trace(state0)
    report["stages"]["trace"] = {
        "wallclock_s": time.perf_counter() - t0,
        "paths": len(paths),
        "diagnostics": sim.diagnostics.as_dict(),
    }
    write_csv(out / "paths.csv",
              ["kinds", "objects", "length_m"],
              [(p.kind_string(), "|".join(p.object_sequence(state0)), p.length)
               for p in paths])
    report["exports"].append("paths.csv")
    if stage_idx < 1:
        _write_report(out, report)
        return report

    # -- cir ---------------------------------------------------------------
    t0 = time.perf_counter()
    ts = config.ts
    n0 = int(round(config.schedule_t0 / ts))
    n_range = range(n0, n0 + config.schedule_count)
    stream = sim.cir_stream(ts, n_range)
    rows = []
    for n in n_range:
        for s in stream[n]:
            rows.append((s.emission_time, s.tx_antenna, s.rx_antenna, s.delay,
                         s.complex_gain.real, s.complex_gain.imag, s.doppler,
                         s.aod[0], s.aod[1], s.aoa[0], s.aoa[1], s.kind_string))
    write_csv(out / "cir.csv",
              ["emissionTime", "txAnt", "rxAnt", "delay_s", "gainRe", "gainIm",
               "doppler_Hz", "aod_az", "aod_zen", "aoa_az", "aoa_zen",
               "pathKindSequence"], rows)
    report["exports"].append("cir.csv")
    report["stages"]["cir"] = {"wallclock_s": time.perf_counter() - t0,
                               "samples": len(rows)}
    if stage_idx < 2:
        _write_report(out, report)
        return report

    # -- discrete -----------------------------------------------------------
    t0 = time.perf_counter()
    pulses = sampling.PulsePair(ts=ts, beta=config.pulse_beta,
                                span=config.pulse_span,
                                tau_sync=sampling.tau_sync_for(stream[n0], ts))
    d = sampling.discretize(stream, pulses, n_range)
    write_banded_binary(out / "discrete.bin", d, config.ofdm_k, config.ofdm_ncp)
    tap_rows = []
    for i, n in enumerate(n_range):
        for lag in range(d.lag_min, d.lag_max + 1):
            v = d.taps[i, lag - d.lag_min]
            if v != 0:
                tap_rows.append((n, lag, v.real, v.imag))
    write_csv(out / "discrete.csv", ["n", "lag", "re", "im"], tap_rows)
    report["exports"] += ["discrete.bin", "discrete.csv"]

    ofdm = None
    if config.schedule_count >= config.ofdm_k + config.ofdm_ncp:
        ofdm = ofdm_symbols(d, config.ofdm_k, config.ofdm_ncp, 1)[0]
        write_matrix_binary(out / "ofdm.bin", ofdm.matrix)
        diag = np.diag(ofdm.matrix)
        write_csv(out / "ofdm.csv", ["k", "re", "im"],
                  [(k, v.real, v.imag) for k, v in enumerate(diag)])
        report["exports"] += ["ofdm.bin", "ofdm.csv"]
    report["stages"]["discrete"] = {"wallclock_s": time.perf_counter() - t0,
                                    "lags": d.num_lags}
    if stage_idx < 3:
        _write_report(out, report)
        return report

    # -- metrics -------------------------------------------------------------
    t0 = time.perf_counter()
    cirs = [stream[n] for n in n_range]
    try:
        tau_s = metrics.delay_spread(cirs)
        f_d, f_m, tau_c = metrics.doppler_spread(cirs)
        pdp = metrics.power_delay_profile(cirs, bin_s=ts)
        write_csv(out / "pdp.csv", ["delay_s", "power"],
                  list(zip(pdp.axis.tolist(), pdp.weights.tolist())))
        report["exports"].append("pdp.csv")
        metric_rows = [("delay_spread_s", tau_s),
                       ("doppler_spread_hz", f_d),
                       ("doppler_mean_hz", f_m),
                       ("coherence_time_s", tau_c)]
        if ofdm is not None:
            metric_rows.append(("sir_db", metrics.sir(ofdm)))
        write_csv(out / "metrics.csv", ["metric", "value"], metric_rows)
        report["exports"].append("metrics.csv")
    except metrics.MetricError as e:
        report["stages"]["metrics"] = {"error": str(e)}
    report["stages"].setdefault("metrics", {})["wallclock_s"] = \
        time.perf_counter() - t0
    if stage_idx < 4:
        _write_report(out, report)
        return report

    # -- dsp -------------------------------------------------------------------
    t0 = time.perf_counter()
    apps = config.applications
    if "beamforming" in apps:
        _run_beamforming_app(apps["beamforming"], rng, out, report)
    if "ris" in apps:
        _run_ris_app(apps["ris"], rng, out, report)
    report["stages"]["dsp"] = {"wallclock_s": time.perf_counter() - t0}
    _write_report(out, report)
    return report


def _run_beamforming_app(params, rng, out, report):
    """Monte-Carlo beamformer comparison table on synthetic channels drawn
    from the configured ensemble (method, N_hor, N_ver, K, sumRate)."""
    from . import dsp

    n_hor_list = params.get("n_hor", [2, 4])
    n_ver_list = params.get("n_ver", [2])
    k_users = int(params.get("users", 4))
    trials = int(params.get("trials", 20))
    p_t = dsp.dbm_to_watt(float(params.get("pt_dbm", 10.0)))
    n0w = dsp.dbm_to_watt(float(params.get("n0w_dbm", -94.0)))
    scale = float(params.get("channel_scale", 1e-5))
    rows = []
    for n_hor in n_hor_list:
        for n_ver in n_ver_list:
            n_t = n_hor * n_ver
            if k_users > n_t:
                continue
            acc = {m: 0.0 for m in ("matched", "zf", "mmse", "wmmse")}
            for _ in range(trials):
                h = scale * (rng.standard_normal((n_t, k_users))
                             + 1j * rng.standard_normal((n_t, k_users)))
                for m in ("matched", "zf", "mmse"):
                    acc[m] += dsp.sum_rate(dsp.beamform(m, h, p_t, n0w), h, n0w)
                acc["wmmse"] += dsp.sum_rate(dsp.beamform_wmmse(h, p_t, n0w),
                                             h, n0w)
            for m in ("matched", "zf", "mmse", "wmmse"):
                rows.append((m, n_hor, n_ver, k_users, acc[m] / trials))
    write_csv(out / "beamforming.csv",
              ["method", "N_hor", "N_ver", "K", "sumRate"], rows)
    report["exports"].append("beamforming.csv")


def _run_ris_app(params, rng, out, report):
    from . import dsp

    n_t = int(params.get("n_t", 8))
    cells = int(params.get("cells", 64))
    trials = int(params.get("trials", 20))
    rows = []
    for trial in range(trials):
        h_d = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
        h_i = rng.standard_normal((n_t, cells)) + 1j * rng.standard_normal((n_t, cells))
        _, _, g_opt = dsp.ris_optimize(h_d, h_i)
        g_ones = float(np.linalg.norm(h_d + h_i @ np.ones(cells)))
        rows.append((trial, g_opt, g_ones))
    write_csv(out / "ris.csv", ["trial", "optimized_gain", "uncontrolled_gain"],
              rows)
    report["exports"].append("ris.csv")


def _override_fc(scene: Scene, fc):
    return Scene(scene.surfaces, scene.edges, scene.materials,
                 scene.terminals.values(), scene.ris_panels.values(),
                 scene.mobiles, fc=fc, p0=scene.p0, raw=scene.raw)


def _write_report(out, report):
    (Path(out) / "report.json").write_text(json.dumps(report, indent=1,
                                                      sort_keys=True))


# ---------------------------------------------------------------------------
# oracle command


def run_oracles(scene_path, out_dir):
    """Brute-force oracle values for a fixture scene: exhaustive path set for
    the first two terminals plus grid/golden-section Fermat lengths."""
    scene = load_scene(scene_path)
    state = state_at(scene, 0.0)
    terms = list(scene.terminals)
    if len(terms) < 2:
        raise ConfigError("oracle fixture needs two terminals")
    tx = state.terminal_position[terms[0]]
    rx = state.terminal_position[terms[1]]
    found = oracles.exhaustive_paths(state, tx, rx, max_reflections=2,
                                     max_diffractions=1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "oracle_paths.csv", ["kinds", "objects", "length_m"],
              [(k, "|".join(o), length) for k, o, length in found])
    return {"paths": len(found)}


# ---------------------------------------------------------------------------
# entry point


def main(argv=None):
    parser = argparse.ArgumentParser(prog="raysim",
                                     description="ray-tracing channel simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--stage-until", default="dsp", choices=STAGES)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")

    p_orc = sub.add_parser("oracle", help="run brute-force oracles on a fixture")
    p_orc.add_argument("fixture")
    p_orc.add_argument("--out", default="oracle_out")

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            load_config(args.config)
            print("config ok")
            return 0
        if args.command == "oracle":
            info = run_oracles(args.fixture, args.out)
            print(f"oracle paths: {info['paths']}")
            return 0
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        report = run(config, out_dir=args.out, stage_until=args.stage_until,
                     threads=args.threads)
        print(f"run complete: {len(report['exports'])} exports")
        return 0
    except (ConfigError, SchemaError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (GeometryError, geoparams.PathGeometryError) as e:
        print(f"geometry error: {e}", file=sys.stderr)
        return 3
    except (ArithmeticError, np.linalg.LinAlgError, sampling.SamplingError,
            metrics.MetricError, em.EmError, RuntimeError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
