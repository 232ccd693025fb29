"""Experiment configuration: flat ``key = value`` files with dotted sections.

A config file fully determines a simulation run; its sha256 digest is
stamped into every artifact sidecar so that a correlation or fit can be
traced back to the exact configuration that produced its inputs.

Example::

    seed = 7
    hwp = parallel
    emitter_a.wavelength_nm = 893.9
    emitter_a.lifetime_ps = 1120
    emitter_a.coherence_time_ps = 800
    emitter_a.signal_purity_rho = 0.96
    ...
    excitation.mode = pulsed
    excitation.rep_rate_hz = 40e6
    excitation.duration_s = 0.25
    model.overlap_v = 1.0
    model.tau_c_ps = 650
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .model import EmitterSpec, InterferenceModel
from .photon_sim import DetectorSpec, ExcitationSpec
from .reporting import parse_kv


class ConfigError(ValueError):
    """Raised for unknown keys, missing required keys, or unparsable values."""


def _as_float(s: str) -> float:
    return float(s)


def _as_int(s: str) -> int:
    return int(s, 0)


def _as_str(s: str) -> str:
    return s


_REQUIRED = object()

# key -> (converter, default); _REQUIRED means the key must be present
_SCHEMA = {
    "seed": (_as_int, 1),
    "hwp": (_as_str, "parallel"),
    "excitation.mode": (_as_str, _REQUIRED),
    "excitation.duration_s": (_as_float, _REQUIRED),
    "excitation.rep_rate_hz": (_as_float, None),
    "excitation.pulse_jitter_ps": (_as_float, 30.0),
    "excitation.cw_rate_hz": (_as_float, None),
    "model.overlap_v": (_as_float, _REQUIRED),
    "model.tau_c_ps": (_as_float, None),
    "model.detuning_rad_per_ps": (_as_float, 0.0),
    "model.irf_sigma_ps": (_as_float, 0.0),
    "interfere.pairing_window_ps": (_as_float, None),
    "output.detector1": (_as_str, "detector1.ttag"),
    "output.detector2": (_as_str, "detector2.ttag"),
    "output.metadata": (_as_str, "run.meta"),
}
for _tag in ("a", "b"):
    _SCHEMA.update(
        {
            f"emitter_{_tag}.wavelength_nm": (_as_float, _REQUIRED),
            f"emitter_{_tag}.lifetime_ps": (_as_float, _REQUIRED),
            f"emitter_{_tag}.coherence_time_ps": (_as_float, _REQUIRED),
            f"emitter_{_tag}.signal_purity_rho": (_as_float, _REQUIRED),
            f"emitter_{_tag}.residual_g0": (_as_float, 0.0),
            f"emitter_{_tag}.polarization_deg": (_as_float, 0.0),
            f"emitter_{_tag}.brightness_per_pulse": (_as_float, 1.0),
        }
    )
for _det in ("detector1", "detector2"):
    _SCHEMA.update(
        {
            f"{_det}.efficiency": (_as_float, 1.0),
            f"{_det}.dark_rate_hz": (_as_float, 0.0),
            f"{_det}.jitter_fwhm_ps": (_as_float, 0.0),
            f"{_det}.dead_time_ps": (_as_int, 0),
        }
    )


@dataclass
class ExperimentConfig:
    seed: int
    hwp: str
    emitter_a: EmitterSpec
    emitter_b: EmitterSpec
    excitation: ExcitationSpec
    detector1: DetectorSpec
    detector2: DetectorSpec
    model: InterferenceModel
    pairing_window_ps: float | None
    out_detector1: str
    out_detector2: str
    out_metadata: str
    digest: str


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def parse_config(text: str) -> ExperimentConfig:
    raw = parse_kv(text)
    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values = {}
    for key, (conv, default) in _SCHEMA.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from exc
        elif default is _REQUIRED:
            raise ConfigError(f"missing required config key: {key}")
        else:
            values[key] = default

    if values["hwp"] not in ("parallel", "orthogonal"):
        raise ConfigError(f"hwp must be 'parallel' or 'orthogonal', got {values['hwp']!r}")

    def emitter(tag: str) -> EmitterSpec:
        g = lambda k: values[f"emitter_{tag}.{k}"]  # noqa: E731
        return EmitterSpec(
            id=f"dot-{tag.upper()}",
            wavelength_nm=g("wavelength_nm"),
            lifetime_ps=g("lifetime_ps"),
            coherence_time_ps=g("coherence_time_ps"),
            signal_purity_rho=g("signal_purity_rho"),
            residual_g0=g("residual_g0"),
            polarization_deg=g("polarization_deg"),
            brightness_per_pulse=g("brightness_per_pulse"),
        )

    def detector(name: str) -> DetectorSpec:
        g = lambda k: values[f"{name}.{k}"]  # noqa: E731
        return DetectorSpec(
            efficiency=g("efficiency"),
            dark_rate_hz=g("dark_rate_hz"),
            jitter_fwhm_ps=g("jitter_fwhm_ps"),
            dead_time_ps=g("dead_time_ps"),
        )

    em_a = emitter("a")
    em_b = emitter("b")
    tau_c = values["model.tau_c_ps"]
    if tau_c is None:
        # mutual coherence of two Lorentzian lines: decay rates add
        tau_c = 2.0 / (1.0 / em_a.coherence_time_ps + 1.0 / em_b.coherence_time_ps)
    model = InterferenceModel(
        overlap_v=values["model.overlap_v"],
        tau_c_ps=tau_c,
        rho_a=em_a.signal_purity_rho,
        rho_b=em_b.signal_purity_rho,
        detuning_rad_per_ps=values["model.detuning_rad_per_ps"],
        irf_sigma_ps=values["model.irf_sigma_ps"],
    )
    excitation = ExcitationSpec(
        mode=values["excitation.mode"],
        duration_s=values["excitation.duration_s"],
        rep_rate_hz=values["excitation.rep_rate_hz"],
        pulse_jitter_ps=values["excitation.pulse_jitter_ps"],
        cw_rate_hz=values["excitation.cw_rate_hz"],
        seed=values["seed"],
    )
    return ExperimentConfig(
        seed=values["seed"],
        hwp=values["hwp"],
        emitter_a=em_a,
        emitter_b=em_b,
        excitation=excitation,
        detector1=detector("detector1"),
        detector2=detector("detector2"),
        model=model,
        pairing_window_ps=values["interfere.pairing_window_ps"],
        out_detector1=values["output.detector1"],
        out_detector2=values["output.detector2"],
        out_metadata=values["output.metadata"],
        digest=config_digest(text),
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return parse_config(fh.read().decode())
