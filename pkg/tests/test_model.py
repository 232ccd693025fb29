import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from homsim.model import (
    DEFAULT_PAIR_IRF_SIGMA_PS,
    EmitterSpec,
    InterferenceModel,
    constant_autocorr,
    convolve_irf,
    cw_antibunching,
    cw_autocorr,
    empirical_autocorr,
    g2_orthogonal,
    g2_parallel,
    hom_visibility,
    interference_term,
)


def test_orthogonal_zero_delay_from_measured_g0s():
    # residual g2(0) of 0.25 and 0.29 -> (0.25 + 0.29 + 2)/4
    g = g2_orthogonal(0.0, constant_autocorr(0.25), constant_autocorr(0.29))
    assert abs(float(g) - 0.635) < 1e-12


def test_parallel_zero_delay_with_partial_purity():
    m = InterferenceModel(overlap_v=0.96, tau_c_ps=115.0, rho_a=0.91, rho_b=0.94)
    g = g2_parallel(0.0, constant_autocorr(0.0), constant_autocorr(0.0), m)
    # 0.5 + 0.96*0.91*0.94/2
    assert abs(float(g) - 0.910592) < 1e-9


def test_parallel_half_coherence_time_ideal():
    m = InterferenceModel(overlap_v=1.0, tau_c_ps=115.0)
    g = g2_parallel(57.5, constant_autocorr(0.0), constant_autocorr(0.0), m)
    expected = (2.0 * (1.0 + math.exp(-1.0))) / 4.0  # 0.68394...
    assert abs(float(g) - expected) < 1e-12


def test_visibility_of_measured_pair():
    v = hom_visibility(0.96, 0.72)
    assert abs(v - 1.0 / 3.0) < 1e-12


def test_visibility_rejects_nonpositive_reference():
    with pytest.raises(ValueError):
        hom_visibility(0.9, 0.0)


def test_cw_autocorr_values():
    assert abs(cw_autocorr(0.0, 0.44, 100.0) - 0.44) < 1e-15
    assert abs(cw_autocorr(300.0, 0.0, 300.0) - (1.0 - math.exp(-1.0))) < 1e-12
    # symmetric in t
    assert cw_autocorr(-170.0, 0.2, 300.0) == cw_autocorr(170.0, 0.2, 300.0)


def test_default_pair_irf_sigma():
    assert DEFAULT_PAIR_IRF_SIGMA_PS == pytest.approx(120.1, abs=0.1)


@settings(max_examples=60, deadline=None)
@given(
    t=st.floats(-2000, 2000),
    v=st.floats(0, 1),
    rho_a=st.floats(0, 1),
    rho_b=st.floats(0, 1),
    tau_c=st.floats(1, 1000),
    ga0=st.floats(0, 1.5),
    gb0=st.floats(0, 1.5),
)
def test_parallel_minus_orthogonal_identity(t, v, rho_a, rho_b, tau_c, ga0, gb0):
    ga = constant_autocorr(ga0)
    gb = constant_autocorr(gb0)
    m = InterferenceModel(overlap_v=v, tau_c_ps=tau_c, rho_a=rho_a, rho_b=rho_b)
    diff = g2_parallel(t, ga, gb, m) - g2_orthogonal(t, ga, gb)
    expected = 0.5 * v * rho_a * rho_b * math.exp(-2.0 * abs(t) / tau_c)
    assert abs(float(diff) - expected) < 1e-12
    # interference never reduces coincidences below the distinguishable level
    assert float(diff) >= -1e-15


@settings(max_examples=40, deadline=None)
@given(t=st.floats(-5000, 5000), tau_c=st.floats(1, 1000), ga0=st.floats(0, 1))
def test_zero_overlap_or_zero_purity_degenerates(t, tau_c, ga0):
    ga = constant_autocorr(ga0)
    gb = cw_antibunching(0.3, 400.0)
    for m in (
        InterferenceModel(overlap_v=0.0, tau_c_ps=tau_c, rho_a=0.9, rho_b=0.9),
        InterferenceModel(overlap_v=0.9, tau_c_ps=tau_c, rho_a=0.0, rho_b=0.9),
        InterferenceModel(overlap_v=0.9, tau_c_ps=tau_c, rho_a=0.9, rho_b=0.0),
    ):
        par = g2_parallel(t, ga, gb, m)
        perp = g2_orthogonal(t, ga, gb)
        assert abs(float(par) - float(perp)) < 1e-15


def test_visibility_equals_overlap_for_ideal_emitters():
    m = InterferenceModel(overlap_v=0.77, tau_c_ps=115.0)
    ga = gb = constant_autocorr(0.0)
    par0 = float(g2_parallel(0.0, ga, gb, m))
    perp0 = float(g2_orthogonal(0.0, ga, gb))
    assert abs(hom_visibility(par0, perp0) - 0.77) < 1e-12


def test_detuning_beat_is_symmetric_and_off_by_default():
    m0 = InterferenceModel(overlap_v=1.0, tau_c_ps=115.0)
    m1 = InterferenceModel(overlap_v=1.0, tau_c_ps=115.0, detuning_rad_per_ps=0.05)
    t = np.linspace(-500, 500, 101)
    assert np.all(interference_term(t, m1) <= interference_term(t, m0) + 1e-15)
    np.testing.assert_allclose(
        interference_term(t, m1), interference_term(-t, m1)[::-1], rtol=0, atol=1e-15
    )
    assert float(interference_term(0.0, m1)) == pytest.approx(1.0)


# --- convolution ------------------------------------------------------------


def _triangle(x, half_width):
    # unit-area triangle of half-width w: peak 1/w at 0
    return np.clip(1.0 - np.abs(x) / half_width, 0.0, None) / half_width


def test_convolve_triangle_peak_matches_quadrature():
    # independent oracle: continuous convolution at t=0 by adaptive quadrature
    w, sigma = 100.0, 200.0

    def integrand(x):
        tri = max(0.0, 1.0 - abs(x) / w) / w
        return tri * math.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))

    oracle, err = quad(integrand, -w, w, epsabs=1e-12)
    assert err < 1e-10

    t = np.arange(-2000.0, 2000.0 + 1.0, 1.0)
    out = convolve_irf(t, _triangle(t, w), sigma, baseline=0.0)
    peak = out[t.size // 2]
    assert abs(peak - oracle) < 1e-6


def test_convolve_sigma_zero_is_identity():
    t = np.arange(-100.0, 101.0)
    v = np.sin(t / 17.0)
    out = convolve_irf(t, v, 0.0)
    np.testing.assert_array_equal(out, v)


def test_convolve_preserves_constant_exactly():
    t = np.arange(-500.0, 501.0, 2.0)
    v = np.full_like(t, 3.25)
    out = convolve_irf(t, v, 37.0)
    np.testing.assert_allclose(out, v, rtol=0, atol=1e-14)


def test_convolve_preserves_integral():
    t = np.arange(-3000.0, 3001.0, 1.0)
    v = _triangle(t, 150.0)
    out = convolve_irf(t, v, 120.0, baseline=0.0)
    assert abs(out.sum() - v.sum()) * 1.0 < 1e-9  # uniform 1 ps grid


def test_convolve_rejects_nonuniform_grid():
    t = np.array([0.0, 1.0, 2.5, 3.0])
    with pytest.raises(ValueError):
        convolve_irf(t, np.zeros_like(t), 10.0)


@settings(max_examples=25, deadline=None)
@given(
    sigma=st.floats(1.0, 80.0),
    a=st.floats(-2.0, 2.0),
    b=st.floats(-2.0, 2.0),
)
def test_convolve_is_linear(sigma, a, b):
    t = np.arange(-800.0, 801.0, 4.0)
    rng = np.random.default_rng(7)
    u = np.exp(-((t / 300.0) ** 2)) * rng.standard_normal(t.size)
    v = np.cos(t / 90.0) * np.exp(-np.abs(t) / 250.0)
    lhs = convolve_irf(t, a * u + b * v, sigma, baseline=0.0)
    rhs = a * convolve_irf(t, u, sigma, baseline=0.0) + b * convolve_irf(
        t, v, sigma, baseline=0.0
    )
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-9)


# --- types ------------------------------------------------------------------


def test_emitter_spec_validation():
    good = dict(
        id="dot-A",
        wavelength_nm=1250.4,
        lifetime_ps=1120.0,
        coherence_time_ps=115.0,
        signal_purity_rho=0.91,
    )
    EmitterSpec(**good)
    with pytest.raises(ValueError):
        EmitterSpec(**{**good, "signal_purity_rho": 1.2})
    with pytest.raises(ValueError):
        EmitterSpec(**{**good, "lifetime_ps": 0.0})
    with pytest.raises(ValueError):
        EmitterSpec(**{**good, "brightness_per_pulse": -0.1})


def test_emitter_spec_flags_above_transform_limit():
    with pytest.warns(UserWarning, match="transform limit"):
        EmitterSpec(
            id="x",
            wavelength_nm=1250.0,
            lifetime_ps=50.0,
            coherence_time_ps=101.0,
            signal_purity_rho=1.0,
        )


def test_model_validation():
    with pytest.raises(ValueError):
        InterferenceModel(overlap_v=1.1, tau_c_ps=115.0)
    with pytest.raises(ValueError):
        InterferenceModel(overlap_v=0.9, tau_c_ps=0.0)
    with pytest.raises(ValueError):
        InterferenceModel(overlap_v=0.9, tau_c_ps=115.0, rho_a=-0.2)


def test_empirical_autocorr_interpolates_and_clamps():
    lag = np.array([-100.0, 0.0, 100.0])
    val = np.array([1.0, 0.2, 1.0])
    fn = empirical_autocorr(lag, val)
    assert fn(0.0) == pytest.approx(0.2)
    assert fn(50.0) == pytest.approx(0.6)
    assert fn(1e6) == pytest.approx(1.0)  # edge hold
    with pytest.raises(ValueError):
        empirical_autocorr(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
