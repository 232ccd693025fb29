"""Photoluminescence spectra: synthesis, Lorentzian fitting, polarization.

Emission lines are Lorentzian in *energy*, so synthesis and fitting run in
energy space and convert to wavelength only at the interface.  The
spectrometer response is itself modeled as a Lorentzian (50 ueV class), and
a Lorentzian convolved with a Lorentzian is again Lorentzian with the FWHMs
adding — which is why synthesize simply widens each line by the instrument
resolution instead of doing a numerical convolution.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .photon_sim import substream
from .ttag import atomic_write_bytes

HC_EV_NM = 1239.84193
HC_UEV_NM = HC_EV_NM * 1e6


def energy_uev(wavelength_nm):
    """Photon energy in micro-eV for a wavelength in nm."""
    w = np.asarray(wavelength_nm, dtype=float)
    if np.any(w <= 0):
        raise ValueError("wavelength must be positive")
    return HC_UEV_NM / w


def detuning_uev(lambda1_nm: float, lambda2_nm: float) -> float:
    """Unsigned energy splitting |E(l1) - E(l2)| in micro-eV."""
    return float(abs(energy_uev(lambda1_nm) - energy_uev(lambda2_nm)))


def wavelength_step_for_uev(wavelength_nm: float, delta_uev: float) -> float:
    """Wavelength difference corresponding to an energy splitting at a line.

    First-order inversion dl = l^2 * dE / hc; 3 ueV at 1250.4 nm is about
    0.0038 nm.
    """
    if wavelength_nm <= 0:
        raise ValueError("wavelength must be positive")
    return wavelength_nm**2 * delta_uev / HC_UEV_NM


@dataclass
class Spectrum:
    wavelengths_nm: np.ndarray
    intensities: np.ndarray
    resolution_uev: float = 50.0

    def __post_init__(self):
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=float)
        self.intensities = np.asarray(self.intensities, dtype=float)
        if self.wavelengths_nm.shape != self.intensities.shape:
            raise ValueError("wavelength and intensity arrays must have equal length")
        if self.wavelengths_nm.ndim != 1 or self.wavelengths_nm.size == 0:
            raise ValueError("spectrum grid must be a non-empty 1-D array")
        if np.any(np.diff(self.wavelengths_nm) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        if np.any(self.intensities < 0):
            raise ValueError("intensities must be non-negative")
        if self.resolution_uev <= 0:
            raise ValueError("resolution_uev must be positive")


def _lorentz(e, amplitude, e0, gamma, baseline):
    return baseline + amplitude * gamma**2 / ((e - e0) ** 2 + gamma**2)


def synthesize(
    lines,
    baseline: float,
    grid_nm,
    resolution_uev: float = 50.0,
    noise_seed: int | None = None,
) -> Spectrum:
    """Sum of Lorentzian lines on a wavelength grid, instrument-broadened.

    ``lines`` is a list of (center_nm, fwhm_uev, amplitude) with amplitude
    the *peak height* above baseline before broadening is applied to the
    width.  With ``noise_seed`` set, intensities become Poisson draws around
    the ideal curve (so the baseline should be scaled to realistic counts).
    """
    grid = np.asarray(grid_nm, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if baseline < 0:
        raise ValueError("baseline must be non-negative")
    if resolution_uev <= 0:
        raise ValueError("resolution_uev must be positive")
    e = energy_uev(grid)
    total = np.full(grid.size, float(baseline))
    for center_nm, fwhm_uev, amplitude in lines:
        if fwhm_uev <= 0:
            raise ValueError("line fwhm_uev must be positive")
        if amplitude < 0:
            raise ValueError("line amplitude must be non-negative")
        gamma = (fwhm_uev + resolution_uev) / 2.0
        total += _lorentz(e, amplitude, energy_uev(center_nm), gamma, 0.0)
    if noise_seed is not None:
        rng = substream(noise_seed, "spectrum-noise")
        total = rng.poisson(total).astype(float)
    return Spectrum(grid, total, resolution_uev)


class FitConvergenceError(RuntimeError):
    """Least-squares fit failed to converge; message carries diagnostics."""


@dataclass
class LorentzianFit:
    center_nm: float
    fwhm_uev: float
    amplitude: float
    baseline: float
    center_err_nm: float
    fwhm_err_uev: float
    n_points: int
    residual_rms: float
    covariance: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.fwhm_uev <= 0:
            raise ValueError("fitted fwhm_uev must be positive")
        if self.amplitude < 0:
            raise ValueError("fitted amplitude must be non-negative")


def fit_lorentzian(s: Spectrum, window_nm=None, init=None) -> LorentzianFit:
    """Fit a single Lorentzian plus constant baseline inside a window.

    The fit runs on energy (ueV) with bounded least squares; initial guesses
    come from the data unless ``init=(center_nm, fwhm_uev, amplitude,
    baseline)`` overrides them.  Raises FitConvergenceError when the
    optimizer gives up.
    """
    w = s.wavelengths_nm
    if window_nm is not None:
        lo, hi = window_nm
        mask = (w >= lo) & (w <= hi)
    else:
        mask = np.ones(w.size, dtype=bool)
    if mask.sum() < 8:
        raise ValueError("fit window must contain at least 8 samples")
    e = energy_uev(w[mask])
    y = s.intensities[mask]
    order = np.argsort(e)
    e, y = e[order], y[order]

    if init is not None:
        center_nm, fwhm_uev, amplitude, baseline = init
        p0 = [amplitude, energy_uev(center_nm), fwhm_uev / 2.0, baseline]
    else:
        b0 = float(y.min())
        a0 = float(y.max() - b0)
        e0 = float(e[np.argmax(y)])
        above = e[y > b0 + 0.5 * a0]
        gamma0 = max((above.max() - above.min()) / 2.0, s.resolution_uev / 2.0) if above.size else s.resolution_uev
        p0 = [max(a0, 1e-12), e0, gamma0, b0]

    bounds = ([0.0, e.min(), 1e-9, -np.inf], [np.inf, e.max(), np.inf, np.inf])
    try:
        popt, pcov = curve_fit(
            _lorentz, e, y, p0=p0, bounds=bounds, xtol=1e-8, ftol=1e-12, max_nfev=500 * 5
        )
    except RuntimeError as exc:
        raise FitConvergenceError(f"Lorentzian fit did not converge: {exc}") from exc
    amplitude, e0, gamma, baseline = popt
    perr = np.sqrt(np.maximum(np.diag(pcov), 0.0))
    center_nm = HC_UEV_NM / e0
    # dl = l^2/hc * dE
    center_err_nm = center_nm**2 * perr[1] / HC_UEV_NM
    resid = y - _lorentz(e, *popt)
    return LorentzianFit(
        center_nm=float(center_nm),
        fwhm_uev=float(2.0 * gamma),
        amplitude=float(amplitude),
        baseline=float(baseline),
        center_err_nm=float(center_err_nm),
        fwhm_err_uev=float(2.0 * perr[2]),
        n_points=int(e.size),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        covariance=pcov,
    )


@dataclass
class PolarizationResult:
    ratio: float
    axis_deg: float
    axis_defined: bool
    i_max: float
    i_min: float


def polarization_ratio(intensity_by_angle) -> PolarizationResult:
    """Degree of linear polarization from intensity-vs-angle data.

    Fits I(theta) = c0 + c1*cos(2 theta) + c2*sin(2 theta) by linear least
    squares (the cos^2 law in disguise) and reports
    ratio = (I_max - I_min)/(I_max + I_min) plus the polarization axis.
    Constant input gives ratio 0 with axis_defined False.
    """
    pairs = list(intensity_by_angle)
    if len(pairs) < 4:
        raise ValueError("need at least 4 angle samples")
    theta = np.asarray([p[0] for p in pairs], dtype=float)
    inten = np.asarray([p[1] for p in pairs], dtype=float)
    if theta.max() - theta.min() < 180.0:
        raise ValueError("angle samples must span at least 180 degrees")
    if np.any(inten < 0):
        raise ValueError("intensities must be non-negative")
    rad = np.deg2rad(theta)
    basis = np.column_stack([np.ones_like(rad), np.cos(2 * rad), np.sin(2 * rad)])
    (c0, c1, c2), *_ = np.linalg.lstsq(basis, inten, rcond=None)
    r = float(np.hypot(c1, c2))
    if c0 <= 0 or r / max(c0, 1e-300) < 1e-9:
        return PolarizationResult(0.0, 0.0, False, float(c0 + r), float(c0 - r))
    axis = np.rad2deg(0.5 * np.arctan2(c2, c1)) % 180.0
    return PolarizationResult(
        ratio=r / c0,
        axis_deg=float(axis),
        axis_defined=True,
        i_max=float(c0 + r),
        i_min=float(c0 - r),
    )


SPECTRUM_CSV_HEADER = ["wavelength_nm", "intensity"]


def spectrum_to_csv(path: str, s: Spectrum) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SPECTRUM_CSV_HEADER)
    for w, i in zip(s.wavelengths_nm, s.intensities):
        writer.writerow([repr(float(w)), repr(float(i))])
    atomic_write_bytes(path, buf.getvalue().encode())


def spectrum_from_csv(path: str, resolution_uev: float = 50.0) -> Spectrum:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SPECTRUM_CSV_HEADER:
        raise ValueError(f"expected header {SPECTRUM_CSV_HEADER}, got {rows[:1]}")
    data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]], dtype=float)
    if data.size == 0:
        raise ValueError("empty spectrum file")
    return Spectrum(data[:, 0], data[:, 1], resolution_uev)
