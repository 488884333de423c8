import math

import numpy as np
import pytest

from raysim import fixtures as fx
from raysim import geometry as g
from raysim import oracles
from raysim.em import (Atmosphere, CirSample, EmError, GrazingEdgeError,
                       PolarState, RisHop, assemble_cir, diffract,
                       diffraction_coefficients, directive_lobe_sq,
                       initial_polarization, path_gain, pathloss, radiation,
                       reflect, ris_channel, ris_reflect, scaling_factor,
                       transition_F)
from raysim.geoparams import C_LIGHT, path_geometry
from raysim.ris import RisPanel, set_steering
from raysim.scene import AntennaArray, Material, scene_from_dict, state_at
from raysim.tracer import trace

from conftest import single_plate_scene

ISO = AntennaArray()
MAT = Material(id="m", chi_r=0.7, kappa_r=1.0, alpha_r=2)


# ---------------------------------------------------------------------------
# radiation


def test_dipole_radiation_examples():
    axis = np.array([0.0, 0.0, 1.0])
    assert radiation("dipole", np.array([1.0, 0, 0]), axis) == pytest.approx(1.0)
    assert radiation("dipole", np.array([0.0, 0, 1.0]), axis) == pytest.approx(0.0)
    d45 = np.array([math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    assert radiation("dipole", d45, axis) == pytest.approx(math.sqrt(2) / 2)
    assert radiation("isotropic", d45) == 1.0


# ---------------------------------------------------------------------------
# pathloss


def test_pathloss_spreading():
    assert pathloss(1.0, 2.3e9, None) == pytest.approx(1.0)
    assert pathloss(2.0, 2.3e9, None) == pytest.approx(2.0)


def test_pathloss_absorption_factor():
    atm = Atmosphere(((24e9, 0.1),))
    eta = pathloss(1000.0, 24e9, atm)
    assert eta / 1000.0 == pytest.approx(10.0 ** (0.1 / 20.0), rel=1e-12)


def test_pathloss_out_of_table_warns():
    atm = Atmosphere()
    with pytest.warns(UserWarning):
        atm.gamma(1e9)


# ---------------------------------------------------------------------------
# reflection


def _polar_for(d):
    return initial_polarization("isotropic", d)


def test_reflect_specular_lobe_maximum():
    d_in = g.unit([1.0, 0.0, -1.0])
    d_out = g.unit([1.0, 0.0, 1.0])
    n = np.array([0.0, 0.0, 1.0])
    amp, pol = reflect(d_in, d_out, _polar_for(d_in), MAT, n, ds=0.25)
    theta = math.acos(abs(d_in @ n))
    e_s_max_sq = 0.25 * math.cos(theta) / scaling_factor(MAT.alpha_r, theta)
    assert amp <= math.sqrt(e_s_max_sq) + 1e-12
    # lobe factor is 1 at the specular direction
    assert directive_lobe_sq(d_out, d_out, MAT.alpha_r) == pytest.approx(1.0, abs=1e-12)


def test_reflect_backscatter_zero():
    d_in = g.unit([1.0, 0.0, -1.0])
    d_spec = g.unit([1.0, 0.0, 1.0])
    back = -d_spec
    assert directive_lobe_sq(back, d_spec, 1) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("alpha_r", [1, 2, 4])
def test_lobe_normalization_montecarlo(alpha_r):
    """Hemisphere integral of the lobe equals the scaling factor within 1%."""
    for theta in (0.3, 1.0):
        mc = oracles.lobe_hemisphere_integral(alpha_r, theta,
                                              n_samples=1_500_000,
                                              seed=alpha_r)
        assert mc == pytest.approx(scaling_factor(alpha_r, theta), rel=0.01)


def test_reflect_polarization_invariants(rng):
    """new electric field is unit and orthogonal to d_out."""
    n = np.array([0.0, 0.0, 1.0])
    for _ in range(40):
        v = rng.standard_normal(3)
        v[2] = -abs(v[2]) - 0.1
        d_in = g.unit(v)
        w = rng.standard_normal(3)
        w[2] = abs(w[2]) + 0.1
        d_out = g.unit(w)
        e0 = rng.standard_normal(3)
        try:
            pol = PolarState.make(d_in, e0)
        except EmError:
            continue
        amp, new = reflect(d_in, d_out, pol, MAT, n, ds=0.25,
                           d_specular=g.unit([d_in[0], d_in[1], -d_in[2]]))
        assert abs(np.linalg.norm(new.e) - 1) < 1e-12
        assert abs(np.dot(new.e, d_out)) < 1e-12
        assert np.allclose(new.h, np.cross(d_out, new.e), atol=1e-12)
        assert amp ** 2 <= 0.25 * abs(d_in @ n) / scaling_factor(
            MAT.alpha_r, math.acos(abs(d_in @ n))) * MAT.chi_r + 1e-12


def test_reflect_polarization_loss_bounds():
    d_in = g.unit([1.0, 0.0, -1.0])
    d_out = g.unit([1.0, 0.0, 1.0])
    n = np.array([0.0, 0.0, 1.0])
    amp, _ = reflect(d_in, d_out, _polar_for(d_in), MAT, n, ds=0.25)
    theta = math.acos(abs(d_in @ n))
    e_s = math.sqrt(0.25 * math.cos(theta) / scaling_factor(MAT.alpha_r, theta))
    assert amp <= e_s * math.sqrt(MAT.chi_r) + 1e-12


def test_grazing_incidence_continuous():
    n = np.array([0.0, 0.0, 1.0])
    d_out = g.unit([1.0, 0.0, 1.0])
    amps = []
    for dz in (1e-3, 1e-5, 1e-7):
        d_in = g.unit([1.0, 0.0, -dz])
        amp, _ = reflect(d_in, d_out, _polar_for(d_in), MAT, n, ds=0.25,
                         d_specular=d_out)
        amps.append(amp)
    assert amps[0] > amps[1] > amps[2]
    assert amps[2] < 1e-3


# ---------------------------------------------------------------------------
# transition function


def test_transition_function_against_quadrature():
    xs = np.logspace(-4, 2, 31)
    for x in xs:
        ours = transition_F(float(x))
        orc = oracles.transition_function_quadrature(float(x))
        assert abs(abs(ours) - abs(orc)) < 1e-6


def test_transition_function_asymptote():
    assert abs(transition_F(10.0)) == pytest.approx(1.0, rel=0.01)


def test_transition_function_small_x_series():
    x = 1e-4
    series = (math.sqrt(math.pi * x) - 2 * x * np.exp(1j * math.pi / 4)) \
        * np.exp(1j * (math.pi / 4 + x))
    assert abs(transition_F(x) - series) / abs(series) < 1e-4


def test_transition_function_monotone_magnitude():
    xs = np.logspace(-4, 2, 400)
    mags = np.abs(transition_F(xs))
    assert np.all(np.diff(mags) > -1e-12)


def test_transition_function_domain_error():
    with pytest.raises(EmError):
        transition_F(-1.0)
    with pytest.raises(EmError):
        transition_F(0.0)


# ---------------------------------------------------------------------------
# diffraction


def _top_edge(scene):
    st = state_at(scene, 0.0)
    return st, [e for e in st.edges
                if abs(e.p0[2] - 10.0) < 1e-9 and abs(e.p1[2] - 10.0) < 1e-9][0]


def test_diffract_soft_polarized_kills_hard(knife_scene_24ghz):
    st, edge = _top_edge(knife_scene_24ghz)
    d_in = g.unit([1.0, 0.0, 0.05])
    d_out = g.unit([1.0, 0.0, -0.2])
    lam = C_LIGHT / 24e9
    soft = PolarState.make(d_in, np.array([0.0, 1.0, 0.0]))
    val, new = diffract(d_in, d_out, soft, edge, 25.0, lam)
    zs, zh = diffraction_coefficients(edge, d_in, d_out, 25.0, lam)
    assert abs(abs(val) - abs(zs)) < 1e-12 * abs(zs)
    # outgoing field is soft-aligned (y direction, parallel to the edge)
    assert abs(abs(new.e[1]) - 1.0) < 1e-9


def test_diffract_wavelength_scaling(knife_scene_24ghz):
    """Deep shadow, large k r: halving the wavelength scales |zeta| by 1/sqrt2."""
    st, edge = _top_edge(knife_scene_24ghz)
    d_in = g.unit([1.0, 0.0, 0.1])
    d_out = g.unit([1.0, 0.0, -0.5])   # deep shadow
    pol = PolarState.make(d_in, np.array([0.0, 1.0, 0.0]))
    lam = C_LIGHT / 24e9
    v1, _ = diffract(d_in, d_out, pol, edge, 40.0, lam)
    v2, _ = diffract(d_in, d_out, pol, edge, 40.0, lam / 2)
    assert abs(v2) / abs(v1) == pytest.approx(1.0 / math.sqrt(2.0), rel=0.01)


def test_diffract_grazing_edge_discarded(knife_scene_24ghz):
    st, edge = _top_edge(knife_scene_24ghz)
    d_along = edge.direction
    pol = PolarState.make(np.array([1.0, 0, 0]), np.array([0.0, 0, 1.0]))
    with pytest.raises(GrazingEdgeError):
        diffraction_coefficients(edge, d_along, np.array([1.0, 0, 0]), 10.0,
                                 0.01)


def test_utd_reciprocity(knife_scene_24ghz, rng):
    """Swapping source and observer with reversed directions preserves the
    soft and hard coefficient magnitudes."""
    st, edge = _top_edge(knife_scene_24ghz)
    lam = C_LIGHT / 24e9
    for _ in range(30):
        v = rng.standard_normal(3)
        w = rng.standard_normal(3)
        v[0] = abs(v[0]) + 0.2
        w[0] = abs(w[0]) + 0.2
        d_in = g.unit([v[0], v[1], -abs(v[2])])
        d_out = g.unit([w[0], w[1], -abs(w[2])])
        # keep both directions on the Keller cone: enforce equal edge angles
        cos_b = float(np.dot(d_in, edge.direction))
        t = d_out - np.dot(d_out, edge.direction) * edge.direction
        d_out = g.unit(cos_b * edge.direction
                       + math.sqrt(max(0.0, 1 - cos_b ** 2)) * g.unit(t))
        try:
            zs1, zh1 = diffraction_coefficients(edge, d_in, d_out, 20.0, lam)
            zs2, zh2 = diffraction_coefficients(edge, -d_out, -d_in, 20.0, lam)
        except GrazingEdgeError:
            continue
        assert abs(zs1) == pytest.approx(abs(zs2), rel=1e-9)
        assert abs(zh1) == pytest.approx(abs(zh2), rel=1e-9)


def test_knife_edge_against_fresnel_integral(knife_scene_24ghz):
    """Total field across the shadow boundary within 0.5 dB of the classical
    knife-edge integral for |nu| <= 3."""
    fc = 24e9
    lam = C_LIGHT / fc
    k = 2 * math.pi / lam
    st, top = _top_edge(knife_scene_24ghz)
    tx = np.array([-50.0, 0.0, 5.0])
    d1, d2 = 50.0, 50.0
    for nu in np.linspace(-3, 3, 41):
        h = nu / math.sqrt(2 * (d1 + d2) / (lam * d1 * d2))
        rx = np.array([50.0, 0.0, 2 * (10.0 - h) - 5.0])
        _, s = oracles.edge_min_length(top.p0, top.p1, tx, rx)
        ep = top.point(s)
        r1 = np.linalg.norm(ep - tx)
        r2 = np.linalg.norm(rx - ep)
        d_in = g.unit(ep - tx)
        d_out = g.unit(rx - ep)
        pol = PolarState.make(d_in, np.array([0.0, 1.0, 0.0]))
        zeta, _ = diffract(d_in, d_out, pol, top, r1 * r2 / (r1 + r2), lam)
        field = zeta / (r1 * r2) * np.exp(-1j * k * (r1 + r2))
        r_los = np.linalg.norm(rx - tx)
        if h < 0:
            field = field + np.exp(-1j * k * r_los) / r_los
        ratio = abs(field) * r_los
        oracle = abs(oracles.knife_edge_loss(nu))
        assert abs(20 * math.log10(ratio / oracle)) < 0.5


# ---------------------------------------------------------------------------
# RIS response


def _panel():
    return RisPanel(id="p", center=np.zeros(3),
                    e_x=np.array([1.0, 0, 0]), e_y=np.array([0.0, 1.0, 0]),
                    q_x=8, q_y=6, d_x=0.06, d_y=0.06, l_u=0.05)


def test_ris_steered_pair_attains_dirichlet_maximum():
    lam = 0.06
    panel = _panel()
    d_in = g.unit([0.3, -0.1, -0.9])
    d_out = g.unit([-0.2, 0.4, 0.8])
    panel = set_steering(panel, d_in, d_out)
    pol = PolarState.make(d_in, g.orthonormal_transverse(d_in))
    val = ris_reflect(d_in, d_out, pol, panel, lam)
    # mismatch zero: both Dirichlet ratios hit Q
    mis = ris_reflect(d_in, g.unit([-0.21, 0.4, 0.79]), pol, panel, lam)
    assert abs(val) > abs(mis)
    ax, ay = panel.tangential_sum(d_in, d_out)
    assert ax == pytest.approx(panel.a_x_star, abs=1e-15)
    base = abs(val) / (panel.q_x * panel.q_y)
    off = abs(ris_reflect(d_in, d_out, pol,
                          set_steering(_panel(), d_in,
                                       g.unit([-0.1, 0.3, 0.9])), lam))
    assert off < abs(val)


def test_ris_first_dirichlet_null():
    lam = 0.06
    panel = _panel()
    d_in = g.unit([0.0, 0.0, -1.0])
    d_out = g.unit([0.0, 0.0, 1.0])
    panel = set_steering(panel, d_in, d_out)
    pol = PolarState.make(d_in, np.array([1.0, 0.0, 0.0]))
    # mismatch delta with pi Qx dx delta / lam = pi -> x array factor 0
    delta = lam / (panel.q_x * panel.d_x)
    d_out_null = g.unit([delta, 0.0, math.sqrt(1 - delta ** 2)])
    val = ris_reflect(d_in, d_out_null, pol, panel, lam)
    assert abs(val) < 1e-10 * panel.q_x * panel.q_y


def test_ris_closed_form_equals_cell_sum(rng):
    """|closed form| equals the per-cell brute-force sum within 1e-9 relative
    over random geometries (array-factor part)."""
    lam = 0.0561
    for _ in range(100):
        panel = RisPanel(id="p", center=np.zeros(3),
                         e_x=np.array([1.0, 0, 0]), e_y=np.array([0, 1.0, 0]),
                         q_x=int(rng.integers(2, 10)),
                         q_y=int(rng.integers(2, 10)),
                         d_x=0.05, d_y=0.04, l_u=0.03,
                         a_x_star=float(rng.uniform(-0.5, 0.5)),
                         a_y_star=float(rng.uniform(-0.5, 0.5)))
        d_in = g.unit([rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                       -rng.uniform(0.4, 1.0)])
        d_out = g.unit([rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                        rng.uniform(0.4, 1.0)])
        pol = PolarState.make(d_in, g.orthonormal_transverse(d_in))
        closed = ris_reflect(d_in, d_out, pol, panel, lam)
        a_x, a_y = panel.tangential_sum(d_in, d_out)
        brute = oracles.ris_cell_sum(panel, a_x, a_y, lam)
        common = abs(closed) / max(_dirichlet_product(panel, a_x, a_y, lam), 1e-300)
        if brute < 1e-9:
            continue
        assert abs(closed) == pytest.approx(common * brute, rel=1e-9)


def _dirichlet_product(panel, a_x, a_y, lam):
    from raysim.em import _dirichlet
    return abs(_dirichlet(panel.q_x, 2 * math.pi * panel.d_x
                          * (a_x - panel.a_x_star) / lam)
               * _dirichlet(panel.q_y, 2 * math.pi * panel.d_y
                            * (a_y - panel.a_y_star) / lam))


def test_ris_back_halfspace_rejected():
    panel = _panel()
    pol = PolarState.make(np.array([0.0, 0, 1.0]), np.array([1.0, 0, 0]))
    with pytest.raises(EmError):
        ris_reflect(np.array([0.0, 0, 1.0]), np.array([0.0, 0, 1.0]), pol,
                    panel, 0.06)


# ---------------------------------------------------------------------------
# path gain and CIR assembly


def test_path_gain_los_inverse_r():
    sc = scene_from_dict(fx.empty_scene())
    st = state_at(sc, 0.0)
    from raysim.tracer import Trajectory

    tx = np.zeros(3)
    rx = np.array([37.0, 0.0, 0.0])
    traj = Trajectory(interactions=(), ips=(), tx=tx, rx=rx)
    geom = path_geometry(traj, ISO, ISO)
    res = path_gain(traj, geom, st, ISO, ISO, 2.3e9, atmosphere=None)
    assert abs(res.alpha) == pytest.approx(1.0 / 37.0, rel=1e-12)


def test_path_gain_reflection_composition():
    """One specular bounce: alpha = (1/(r1 r2)) * zeta_r (P0 = 4 pi, gamma=0)."""
    sc = single_plate_scene(alpha_r=1)
    st = state_at(sc, 0.0)
    tx = np.array([0.0, 0.0, 10.0])
    rx = np.array([10.0, 0.0, 2.0])
    paths, _ = trace(st, tx, rx, 1, 0)
    refl = [p for p in paths if p.kind_string() == "R"][0]
    geom = path_geometry(refl, ISO, ISO)
    res = path_gain(refl, geom, st, ISO, ISO, 2.3e9, atmosphere=None, ds=0.25)
    r1, r2 = geom.segment_lengths
    pol0 = initial_polarization("isotropic", geom.directions[0])
    zeta, _ = reflect(geom.directions[0], geom.directions[1], pol0,
                      st.material_of(refl.ips[0].facet_id),
                      st.surface(refl.ips[0].facet_id).normal, ds=0.25)
    assert abs(res.alpha) == pytest.approx(zeta / (r1 * r2), rel=1e-12)


def _sample(alpha, delay, doppler):
    return {"alpha": alpha, "delay": delay, "doppler": doppler,
            "aod": (0.0, 0.0), "aoa": (0.0, 0.0)}


def test_assemble_cir_integer_phase():
    f = 1e9
    tau = 5.0 / f  # f tau integer -> phase 0
    out = assemble_cir([_sample(0.7, tau, f)], 0.0)
    assert out[0].complex_gain == pytest.approx(0.7, abs=1e-12)


def test_assemble_cir_destructive_pair():
    fc = 1e9
    tau1 = 10.0 / fc
    tau2 = tau1 + 0.5 / fc  # half carrier period later
    out = assemble_cir([_sample(1.0, tau1, fc), _sample(1.0, tau2, fc)], 0.0)
    assert abs(sum(s.complex_gain for s in out)) < 1e-12


def test_assemble_cir_time_invariant():
    recs = [_sample(0.5, 1e-7, 2.3e9)]
    a = assemble_cir(recs, 0.0)
    b = assemble_cir(recs, 1.0)
    assert a[0].complex_gain == b[0].complex_gain


def _hop(alpha, delay, doppler, direction, e_dir):
    s = CirSample(complex_gain=alpha * np.exp(-2j * np.pi * doppler * delay),
                  delay=delay, doppler=doppler, aod=(0, 0), aoa=(0, 0),
                  emission_time=0.0, tx_antenna=0, rx_antenna=0)
    d = g.unit(direction)
    return RisHop(sample=s, panel_direction=d,
                  polar=PolarState.make(d, e_dir))


def test_ris_channel_static_composition():
    fc = 2.3e9
    lam = C_LIGHT / fc
    panel = _panel()
    d_in = g.unit([0.2, 0.0, -1.0])
    d_out = g.unit([0.0, 0.1, 1.0])
    hop1 = [_hop(2e-3, 1e-7, fc, d_in, np.array([0.0, 1.0, 0.0]))]
    hop2 = [_hop(3e-3, 2e-7, fc, d_out, np.array([1.0, 0.0, 0.0]))]
    out = ris_channel(hop1, hop2, panel, 0.0, fc, lam)
    assert len(out) == 1  # P = R = 1 -> one composite sample
    s = out[0]
    assert s.delay == pytest.approx(3e-7, abs=1e-15)
    assert s.doppler == pytest.approx(fc, abs=1e-6)  # 2fc - fc normalization
    zeta = ris_reflect(d_in, d_out, hop1[0].polar, panel, lam)
    expect = 2e-3 * 3e-3 * zeta * np.exp(-2j * np.pi * (2 * fc) * 3e-7)
    assert s.complex_gain == pytest.approx(expect, rel=1e-12)
