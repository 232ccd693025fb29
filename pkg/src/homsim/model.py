"""Analytic second-order correlation models for two-emitter interference.

Two independent single-photon emitters are combined on a 50:50 beamsplitter
and both detectors watch a fiber split of one output arm, so two-photon
interference shows up as a coincidence *peak* at zero delay instead of the
usual dip.  This module holds the closed-form correlation curves for the
distinguishable (orthogonal polarization) and interfering (parallel) cases,
the post-selected visibility, detector-response convolution, and the CW
antibunching shape used for single-emitter autocorrelations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Detector pair timing response: two detectors with 200 ps FWHM each give a
# coincidence response of sqrt(2)*200/2.355 ~ 120 ps Gaussian sigma.
DETECTOR_FWHM_PS = 200.0
FWHM_TO_SIGMA = 2.355
DEFAULT_PAIR_IRF_SIGMA_PS = math.sqrt(2.0) * DETECTOR_FWHM_PS / FWHM_TO_SIGMA

# Signature shared by all single-emitter autocorrelation curves: g2(t_ps).
AutocorrFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class EmitterSpec:
    """Static description of one cavity-coupled emitter.

    ``signal_purity_rho`` is the fraction of collected intensity that comes
    from the emitter itself rather than uncorrelated cavity background.
    ``residual_g0`` is the emitter's own g2(0) under the chosen excitation.
    """

    id: str
    wavelength_nm: float
    lifetime_ps: float
    coherence_time_ps: float
    signal_purity_rho: float
    residual_g0: float = 0.0
    polarization_deg: float = 0.0
    brightness_per_pulse: float = 1.0

    def __post_init__(self):
        if self.lifetime_ps <= 0:
            raise ValueError("lifetime_ps must be positive")
        if self.coherence_time_ps <= 0:
            raise ValueError("coherence_time_ps must be positive")
        if not 0.0 <= self.signal_purity_rho <= 1.0:
            raise ValueError("signal_purity_rho must be in [0, 1]")
        if self.residual_g0 < 0:
            raise ValueError("residual_g0 must be non-negative")
        if not 0.0 <= self.brightness_per_pulse <= 1.0:
            raise ValueError("brightness_per_pulse must be in [0, 1]")
        if self.coherence_time_ps > 2.0 * self.lifetime_ps:
            # Above the transform limit; physically suspect but not fatal.
            warnings.warn(
                f"emitter {self.id!r}: coherence_time_ps="
                f"{self.coherence_time_ps} exceeds the transform limit "
                f"2*lifetime_ps={2.0 * self.lifetime_ps}",
                stacklevel=2,
            )


@dataclass
class InterferenceModel:
    """Parameters of the two-emitter interference term.

    overlap_v is the wavefunction overlap |<psi_a|psi_b>|^2 of the two
    photons, tau_c_ps the mutual coherence time governing the width of the
    interference feature, rho_a/rho_b the signal purities of the two inputs.
    detuning_rad_per_ps enables an optional beat factor cos(dw*t) on the
    interference term (off at 0).  irf_sigma_ps is the Gaussian timing
    response applied when comparing with measured histograms.
    """

    overlap_v: float
    tau_c_ps: float
    rho_a: float = 1.0
    rho_b: float = 1.0
    detuning_rad_per_ps: float = 0.0
    irf_sigma_ps: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.overlap_v <= 1.0:
            raise ValueError("overlap_v must be in [0, 1]")
        if self.tau_c_ps <= 0:
            raise ValueError("tau_c_ps must be positive")
        for name in ("rho_a", "rho_b"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.irf_sigma_ps < 0:
            raise ValueError("irf_sigma_ps must be non-negative")


def g2_orthogonal(t_ps, g_a: AutocorrFn, g_b: AutocorrFn):
    """Normalized coincidence correlation with the emitters distinguishable.

    For balanced input intensities the combined-stream correlation is
    (g_a(t) + g_b(t) + 2) / 4: the cross terms between the two independent
    emitters contribute a flat 2.
    """
    t = np.asarray(t_ps, dtype=float)
    return (g_a(t) + g_b(t) + 2.0) / 4.0


def interference_term(t_ps, m: InterferenceModel):
    """The excess pair correlation from two-photon interference.

    V * rho_a * rho_b * exp(-2|t|/tau_c), optionally beating at the mutual
    detuning.  This is the quantity the parallel configuration adds (times
    1/2) on top of the orthogonal curve.
    """
    t = np.asarray(t_ps, dtype=float)
    term = m.overlap_v * m.rho_a * m.rho_b * np.exp(-2.0 * np.abs(t) / m.tau_c_ps)
    if m.detuning_rad_per_ps != 0.0:
        term = term * np.cos(m.detuning_rad_per_ps * t)
    return term


def g2_parallel(t_ps, g_a: AutocorrFn, g_b: AutocorrFn, m: InterferenceModel):
    """Normalized coincidence correlation with the emitters interfering.

    (g_a + g_b + 2*(1 + V*rho_a*rho_b*exp(-2|t|/tau_c))) / 4.  Only photon
    pairs that are mutually coherent within tau_c bunch into the same output
    arm, which raises the zero-delay coincidence rate between the two
    detectors on the monitored arm.
    """
    t = np.asarray(t_ps, dtype=float)
    return (g_a(t) + g_b(t) + 2.0 * (1.0 + interference_term(t, m))) / 4.0


def hom_visibility(g_parallel_zero: float, g_orthogonal_zero: float) -> float:
    """Post-selected interference visibility (g_par(0) - g_perp(0)) / g_perp(0)."""
    if g_orthogonal_zero <= 0:
        raise ValueError("g_orthogonal_zero must be positive")
    return (g_parallel_zero - g_orthogonal_zero) / g_orthogonal_zero


def cw_autocorr(t_ps, g0: float, recovery_ps: float):
    """Single-emitter CW antibunching curve 1 - (1 - g0) * exp(-|t|/recovery).

    g0 is the zero-delay value and recovery_ps the timescale on which the
    emitter refills after an emission.
    """
    if recovery_ps <= 0:
        raise ValueError("recovery_ps must be positive")
    t = np.asarray(t_ps, dtype=float)
    return 1.0 - (1.0 - g0) * np.exp(-np.abs(t) / recovery_ps)


def cw_antibunching(g0: float, recovery_ps: float) -> AutocorrFn:
    """Factory returning an AutocorrFn for :func:`cw_autocorr`."""
    if recovery_ps <= 0:
        raise ValueError("recovery_ps must be positive")

    def fn(t_ps):
        return cw_autocorr(t_ps, g0, recovery_ps)

    return fn


def constant_autocorr(value: float) -> AutocorrFn:
    """AutocorrFn that is flat at ``value`` (e.g. 0 for an ideal emitter)."""

    def fn(t_ps):
        return np.full_like(np.asarray(t_ps, dtype=float), float(value))

    return fn


def empirical_autocorr(lag_ps: np.ndarray, g2_values: np.ndarray) -> AutocorrFn:
    """AutocorrFn interpolated from a measured normalized histogram.

    Linear interpolation between samples; outside the sampled range the edge
    values are held.
    """
    lag = np.asarray(lag_ps, dtype=float)
    val = np.asarray(g2_values, dtype=float)
    if lag.ndim != 1 or lag.size < 2:
        raise ValueError("need at least two samples")
    if lag.size != val.size:
        raise ValueError("lag and value arrays must have equal length")
    if np.any(np.diff(lag) <= 0):
        raise ValueError("lag samples must be strictly increasing")
    if np.any(val < 0):
        raise ValueError("g2 values must be non-negative")

    def fn(t_ps):
        return np.interp(np.asarray(t_ps, dtype=float), lag, val)

    return fn


def convolve_irf(times_ps, values, sigma_ps: float, baseline: float | None = None):
    """Convolve a sampled curve with a Gaussian timing response.

    The curve must be sampled on a uniform grid.  The deviation from the
    asymptotic baseline is what gets convolved, so curves that flatten out at
    the grid edges come through without edge artifacts; pad the grid at least
    8 sigma beyond the region of interest.  With ``baseline=None`` the
    baseline is estimated as the mean of the first and last samples.

    Returns the convolved values on the same grid.  sigma_ps = 0 returns the
    input unchanged.
    """
    t = np.asarray(times_ps, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("need a 1-d grid with at least two samples")
    if v.shape != t.shape:
        raise ValueError("times and values must have equal length")
    steps = np.diff(t)
    dt = steps[0]
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ValueError("time grid must be uniform and increasing")
    if sigma_ps < 0:
        raise ValueError("sigma_ps must be non-negative")
    if sigma_ps == 0.0:
        return v.copy()

    if baseline is None:
        baseline = 0.5 * (v[0] + v[-1])

    half = int(math.ceil(8.0 * sigma_ps / dt))
    x = np.arange(-half, half + 1) * dt
    kernel = np.exp(-0.5 * (x / sigma_ps) ** 2)
    kernel /= kernel.sum()  # exact discrete unit area: constants pass through
    return baseline + np.convolve(v - baseline, kernel, mode="same")
