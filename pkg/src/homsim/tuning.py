"""Resonance tuning: nitrogen gas deposition/evaporation and local heating.

Two knobs bring emitters and cavities onto resonance.  Gas condensation
red-shifts every cavity on the chip at once, and a focused laser evaporates
the layer locally; below 5 mW the laser does nothing at all (exact
identity), above it the condensed layer decays exponentially.  Dot lines
shift with local heating, described by two monotone calibration maps
(laser power -> temperature -> wavelength shift) anchored at measured
points.  A bisection controller walks the heater power until two dots sit
within a requested energy splitting.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .reporting import parse_kv
from .spectra import detuning_uev
from .ttag import atomic_write_bytes

EVAPORATION_THRESHOLD_MW = 5.0
# 50 s at the 5 mW threshold clears the layer to 1%: tau = 50/ln(100)
EVAPORATION_TAU_5MW_S = 50.0 / math.log(100.0)
DEFAULT_RATE_SLOPE_PER_MW = 0.2
BATH_TEMPERATURE_K = 4.0


class CalibrationExtrapolationWarning(UserWarning):
    """A calibration map was evaluated outside its anchored range."""


class MonotoneMap:
    """Shape-preserving interpolation through monotone anchor points.

    PCHIP between anchors (reproduces them exactly, never overshoots),
    linear continuation outside the anchored range with a warning.
    """

    def __init__(self, anchors):
        pts = sorted((float(x), float(y)) for x, y in anchors)
        if len(pts) < 2:
            raise ValueError("need at least two anchor points")
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        if np.any(np.diff(x) <= 0):
            raise ValueError("anchor x values must be distinct")
        if np.any(np.diff(y) < 0):
            raise ValueError("anchor y values must be non-decreasing")
        self._x = x
        self._y = y
        self._interp = PchipInterpolator(x, y, extrapolate=False)
        d = self._interp.derivative()
        self._slope_lo = max(float(d(x[0])), 0.0)
        self._slope_hi = max(float(d(x[-1])), 0.0)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self._x[0]), float(self._x[-1])

    @property
    def anchors(self):
        return list(zip(self._x.tolist(), self._y.tolist()))

    def __call__(self, x: float) -> float:
        x = float(x)
        idx = int(np.searchsorted(self._x, x))
        if idx < self._x.size and self._x[idx] == x:
            # anchors reproduce exactly, bypassing polynomial round-off
            return float(self._y[idx])
        if x < self._x[0]:
            warnings.warn(
                f"input {x} below calibrated range [{self._x[0]}, {self._x[-1]}]",
                CalibrationExtrapolationWarning,
                stacklevel=2,
            )
            return float(self._y[0] + self._slope_lo * (x - self._x[0]))
        if x > self._x[-1]:
            warnings.warn(
                f"input {x} above calibrated range [{self._x[0]}, {self._x[-1]}]",
                CalibrationExtrapolationWarning,
                stacklevel=2,
            )
            return float(self._y[-1] + self._slope_hi * (x - self._x[-1]))
        return float(self._interp(x))


# ------------------------------------------------------------------- cavities


@dataclass(frozen=True)
class CavityState:
    """A photonic-crystal cavity: base resonance plus condensed-gas red-shift."""

    base_wavelength_nm: float
    gas_shift_nm: float = 0.0
    device_id: str = "cavity"

    def __post_init__(self):
        if self.gas_shift_nm < 0:
            raise ValueError("gas_shift_nm must be non-negative")

    @property
    def wavelength_nm(self) -> float:
        return self.base_wavelength_nm + self.gas_shift_nm


def deposit_gas(c: CavityState, shift_nm: float) -> CavityState:
    """Condense nitrogen: red-shift the resonance by shift_nm."""
    if shift_nm < 0:
        raise ValueError("shift_nm must be non-negative")
    if shift_nm == 0:
        return c
    return replace(c, gas_shift_nm=c.gas_shift_nm + shift_nm)


def evaporate_step(
    c: CavityState,
    laser_power_mw: float,
    dt_s: float,
    rate_slope_per_mw: float = DEFAULT_RATE_SLOPE_PER_MW,
) -> CavityState:
    """Locally evaporate condensed gas for dt_s at the given laser power.

    Below the 5 mW threshold nothing moves (returns the input state
    object).  At and above it the layer decays as exp(-dt/tau) with
    1/tau = ln(100)/50s * (1 + rate_slope * (power - 5 mW)).
    """
    if laser_power_mw < 0:
        raise ValueError("laser_power_mw must be non-negative")
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    if laser_power_mw < EVAPORATION_THRESHOLD_MW:
        return c
    rate = (1.0 / EVAPORATION_TAU_5MW_S) * (
        1.0 + rate_slope_per_mw * (laser_power_mw - EVAPORATION_THRESHOLD_MW)
    )
    return replace(c, gas_shift_nm=c.gas_shift_nm * math.exp(-rate * dt_s))


@dataclass(frozen=True)
class Chip:
    """All cavities on one sample.  Gas deposition is global; lasers are local."""

    cavities: dict

    def deposit_gas(self, shift_nm: float) -> "Chip":
        return Chip({k: deposit_gas(v, shift_nm) for k, v in self.cavities.items()})

    def evaporate_step(self, device_id: str, laser_power_mw: float, dt_s: float) -> "Chip":
        if device_id not in self.cavities:
            raise KeyError(device_id)
        out = dict(self.cavities)
        out[device_id] = evaporate_step(out[device_id], laser_power_mw, dt_s)
        return Chip(out)


# ----------------------------------------------------------------------- dots


@dataclass(frozen=True)
class DotThermalState:
    base_wavelength_nm: float
    temperature_k: float = BATH_TEMPERATURE_K
    device_id: str = "dot"

    def __post_init__(self):
        if self.temperature_k < BATH_TEMPERATURE_K:
            raise ValueError(f"temperature_k must be >= bath ({BATH_TEMPERATURE_K} K)")


@dataclass
class HeaterCalibration:
    """Monotone maps laser power -> dot temperature -> wavelength red-shift."""

    power_to_temp: MonotoneMap
    temp_to_shift: MonotoneMap

    def dot_wavelength(self, d: DotThermalState) -> float:
        return d.base_wavelength_nm + self.temp_to_shift(d.temperature_k)


@dataclass
class BackgroundCalibration:
    """Heater-induced background fraction for each dot vs laser power."""

    penalty_a: MonotoneMap
    penalty_b: MonotoneMap


def default_calibration() -> HeaterCalibration:
    return HeaterCalibration(
        power_to_temp=MonotoneMap([(0.0, 4.0), (1.25, 16.0)]),
        temp_to_shift=MonotoneMap([(4.0, 0.0), (16.0, 0.34), (25.0, 0.73)]),
    )


def default_background_calibration() -> BackgroundCalibration:
    return BackgroundCalibration(
        penalty_a=MonotoneMap([(0.0, 0.0), (1.25, 0.09)]),
        penalty_b=MonotoneMap([(0.0, 0.0), (1.25, 0.06)]),
    )


def apply_heater(d: DotThermalState, cal: HeaterCalibration, power_mw: float) -> DotThermalState:
    """Set the heating-laser power on one dot; returns its new thermal state."""
    if power_mw < 0:
        raise ValueError("power_mw must be non-negative")
    temp = max(cal.power_to_temp(power_mw), BATH_TEMPERATURE_K)
    return replace(d, temperature_k=temp)


def heater_background(power_mw: float, cal: BackgroundCalibration) -> tuple[float, float]:
    """Signal-purity penalties (dot A, dot B) induced by the heating laser."""
    if power_mw < 0:
        raise ValueError("power_mw must be non-negative")
    return cal.penalty_a(power_mw), cal.penalty_b(power_mw)


# ----------------------------------------------------------------- controller


@dataclass
class MatchResult:
    feasible: bool
    converged: bool
    power_mw: float
    achieved_detuning_uev: float
    iterations: int
    trace: list = field(default_factory=list)
    message: str = ""


def _power_for_temperature(cal: HeaterCalibration, temp_k: float) -> float:
    """Invert the (monotone) power->temperature map by expanding bisection."""
    lo, hi = 0.0, max(cal.power_to_temp.domain[1], 1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationExtrapolationWarning)
        for _ in range(200):
            if cal.power_to_temp(hi) >= temp_k:
                break
            hi *= 2.0
        else:
            raise ValueError("power_to_temp map cannot reach the requested temperature")
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if cal.power_to_temp(mid) < temp_k:
                lo = mid
            else:
                hi = mid
    return hi


def match_resonance(
    d_a: DotThermalState,
    d_b: DotThermalState,
    cal: HeaterCalibration,
    tol_uev: float,
    max_iters: int = 30,
    max_power_mw: float | None = None,
) -> MatchResult:
    """Heat dot A until its line sits within tol_uev of (unheated) dot B.

    Bisection on heater power: the wavelength response is monotone, so the
    bracket [0, max_power] halves every step.  The trace records every
    (power, detuning) the controller evaluated, starting with power 0.
    Infeasible targets (dot B blue of dot A, or beyond the calibrated shift
    range) are reported explicitly rather than returning a best effort.
    """
    if tol_uev <= 0:
        raise ValueError("tol_uev must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")

    wavelength_b = cal.dot_wavelength(d_b)

    def detuning_at(power: float) -> tuple[float, float]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CalibrationExtrapolationWarning)
            hot = apply_heater(d_a, cal, power)
            wa = cal.dot_wavelength(hot)
        return wa, detuning_uev(wa, wavelength_b)

    if max_power_mw is None:
        max_temp = cal.temp_to_shift.domain[1]
        max_power_mw = _power_for_temperature(cal, max_temp)

    wa0, det0 = detuning_at(0.0)
    trace = [(0.0, det0)]
    if det0 <= tol_uev:
        return MatchResult(True, True, 0.0, det0, 0, trace, "already within tolerance")
    if wa0 > wavelength_b:
        return MatchResult(
            False, False, 0.0, det0, 0, trace,
            "dot B is blue of dot A at zero power; heating only red-shifts",
        )
    wa_hi, det_hi = detuning_at(max_power_mw)
    if wa_hi < wavelength_b:
        return MatchResult(
            False, False, 0.0, det0, 0, trace,
            f"dot B outside tuning range: {det_hi:.2f} ueV residual at "
            f"{max_power_mw:.4g} mW",
        )

    lo, hi = 0.0, max_power_mw
    for it in range(1, max_iters + 1):
        mid = 0.5 * (lo + hi)
        wa, det = detuning_at(mid)
        trace.append((mid, det))
        if det <= tol_uev:
            return MatchResult(True, True, mid, det, it, trace, "converged")
        if wa < wavelength_b:
            lo = mid
        else:
            hi = mid
    best_power, best_det = min(trace, key=lambda t: t[1])
    return MatchResult(
        True, False, best_power, best_det, max_iters, trace,
        f"did not reach {tol_uev} ueV in {max_iters} iterations",
    )


def match_trace_to_csv(path: str, result: MatchResult) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "power_mw", "detuning_uev"])
    for i, (p, d) in enumerate(result.trace):
        writer.writerow([i, repr(float(p)), repr(float(d))])
    atomic_write_bytes(path, buf.getvalue().encode())


# ------------------------------------------------------------ calibration I/O


def _parse_anchor_list(text: str, n_fields: int):
    out = []
    for item in text.split(","):
        parts = [p.strip() for p in item.strip().split(":")]
        if len(parts) != n_fields:
            raise ValueError(f"expected {n_fields} colon-separated numbers, got {item!r}")
        out.append(tuple(float(p) for p in parts))
    return out


def load_calibration(path: str) -> tuple[HeaterCalibration, BackgroundCalibration | None]:
    """Read calibration anchors from a key-value file.

    Expected keys::

        power_to_temp = 0:4, 1.25:16
        temp_to_shift = 4:0, 16:0.34, 25:0.73
        heater_background = 0:0:0, 1.25:0.09:0.06   # optional: power:a:b
    """
    with open(path) as fh:
        raw = parse_kv(fh.read())
    for key in ("power_to_temp", "temp_to_shift"):
        if key not in raw:
            raise ValueError(f"calibration file missing {key!r}")
    cal = HeaterCalibration(
        power_to_temp=MonotoneMap(_parse_anchor_list(raw["power_to_temp"], 2)),
        temp_to_shift=MonotoneMap(_parse_anchor_list(raw["temp_to_shift"], 2)),
    )
    bg = None
    if "heater_background" in raw:
        triples = _parse_anchor_list(raw["heater_background"], 3)
        bg = BackgroundCalibration(
            penalty_a=MonotoneMap([(p, a) for p, a, _ in triples]),
            penalty_b=MonotoneMap([(p, b) for p, _, b in triples]),
        )
    unknown = set(raw) - {"power_to_temp", "temp_to_shift", "heater_background"}
    if unknown:
        raise ValueError(f"unknown calibration keys: {sorted(unknown)}")
    return cal, bg
