"""Timestamp-level Monte-Carlo of the two-emitter interference experiment.

Photon streams from each emitter (pulsed or CW excitation) are combined on a
50:50 beamsplitter whose routing carries the two-photon interference: photon
pairs close enough in time are routed to the *same* output arm with
probability (1 + q * V * exp(-2|dt|/tau_c)) / 2, where q = 1 only for
signal-signal pairs in the parallel polarization setting.  One arm feeds a
fiber splitter and two detectors, which is where the zero-delay coincidence
peak shows up.

All randomness flows from numpy PCG64 generators spawned deterministically
from a master seed, so identical configurations reproduce identical event
streams byte for byte.  Pulsed generation is sharded in fixed 2^20-pulse
blocks with per-block sub-streams; blocks are independent and merge by
concatenation, so they could run concurrently without changing the output.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, TYPE_CHECKING

import numpy as np
from numba import njit

from .model import EmitterSpec, InterferenceModel

if TYPE_CHECKING:  # pragma: no cover
    from .config import ExperimentConfig

SIG_A, SIG_B, BG_A, BG_B = 0, 1, 2, 3
SOURCE_LABELS = {SIG_A: "dot-A", SIG_B: "dot-B", BG_A: "background-A", BG_B: "background-B"}
_SIGNAL_CODE = {"A": SIG_A, "B": SIG_B}
_BACKGROUND_CODE = {"A": BG_A, "B": BG_B}

PULSE_BLOCK = 1 << 20


class PhotonEvent(NamedTuple):
    source: str
    time_ps: int
    polarization_deg: float
    pulse_index: int | None


@dataclass
class PhotonStream:
    """Struct-of-arrays photon record: sorted times, source codes, pulse ids.

    Polarization is constant per source (background photons carry their
    cavity's polarization), so it lives in a small per-source map instead of
    a per-event column.
    """

    times_ps: np.ndarray
    sources: np.ndarray
    pulses: np.ndarray
    pol_by_source: dict[int, float]

    def __len__(self) -> int:
        return int(self.times_ps.size)

    def event(self, i: int) -> PhotonEvent:
        code = int(self.sources[i])
        pulse = int(self.pulses[i])
        return PhotonEvent(
            source=SOURCE_LABELS[code],
            time_ps=int(self.times_ps[i]),
            polarization_deg=self.pol_by_source[code],
            pulse_index=None if pulse < 0 else pulse,
        )

    def events(self):
        return [self.event(i) for i in range(len(self))]


def _sorted_stream(times, sources, pulses, pol_by_source) -> PhotonStream:
    times = np.asarray(times, dtype=np.int64)
    sources = np.asarray(sources, dtype=np.uint8)
    pulses = np.asarray(pulses, dtype=np.int64)
    if times.size > 1 and np.any(times[1:] < times[:-1]):
        order = np.argsort(times, kind="stable")
        times, sources, pulses = times[order], sources[order], pulses[order]
    return PhotonStream(times, sources, pulses, dict(pol_by_source))


def _require_sorted(stream: PhotonStream, name: str) -> None:
    t = stream.times_ps
    if t.size > 1 and np.any(t[1:] < t[:-1]):
        raise ValueError(f"{name} must be time-sorted")


@dataclass
class DetectorSpec:
    """InGaAs APD style detector: efficiency, darks, Gaussian jitter, dead time."""

    efficiency: float = 1.0
    dark_rate_hz: float = 0.0
    jitter_fwhm_ps: float = 0.0
    dead_time_ps: int = 0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if self.dark_rate_hz < 0:
            raise ValueError("dark_rate_hz must be non-negative")
        if self.jitter_fwhm_ps < 0:
            raise ValueError("jitter_fwhm_ps must be non-negative")
        if self.dead_time_ps < 0:
            raise ValueError("dead_time_ps must be non-negative")


@dataclass
class ExcitationSpec:
    """Excitation mode and timing.  duration_s = 0 gives an empty (valid) run."""

    mode: str
    duration_s: float
    rep_rate_hz: float | None = None
    pulse_jitter_ps: float = 30.0
    cw_rate_hz: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("pulsed", "cw"):
            raise ValueError(f"mode must be 'pulsed' or 'cw', got {self.mode!r}")
        if self.duration_s < 0:
            raise ValueError("duration_s must be non-negative")
        if self.mode == "pulsed":
            if not self.rep_rate_hz or self.rep_rate_hz <= 0:
                raise ValueError("pulsed mode requires rep_rate_hz > 0")
            if self.pulse_jitter_ps < 0:
                raise ValueError("pulse_jitter_ps must be non-negative")
        else:
            if not self.cw_rate_hz or self.cw_rate_hz <= 0:
                raise ValueError("cw mode requires cw_rate_hz > 0")


def substream(seed: int, *tags) -> np.random.Generator:
    """Deterministic child generator for (seed, tags): strings are hashed."""
    entropy = [int(seed) & (2**63 - 1)]
    for tag in tags:
        if isinstance(tag, str):
            digest = hashlib.sha256(tag.encode()).digest()
            entropy.append(int.from_bytes(digest[:8], "little"))
        else:
            entropy.append(int(tag))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def calibrate_second_photon_prob(brightness: float, g0_target: float) -> float:
    """Per-cycle probability of the extra uncorrelated photon hitting a g2(0).

    With one signal photon at probability p1 and an independent extra photon
    at p2, the pulsed peak-area ratio is 2*p1*p2/(p1 + p2)^2; inverting for
    p2 (stable form) gives p2 = p1 * g / ((1 - g) + sqrt(1 - 2g)).  The
    mechanism saturates at g2(0) = 0.5.
    """
    if not 0.0 <= g0_target < 0.5:
        raise ValueError("g0_target must be in [0, 0.5) for this pair mechanism")
    if brightness <= 0:
        if g0_target > 0:
            raise ValueError("cannot target g0 > 0 with zero brightness")
        return 0.0
    if g0_target == 0.0:
        return 0.0
    g = g0_target
    return brightness * g / ((1.0 - g) + math.sqrt(1.0 - 2.0 * g))


def _pulsed_block(emitter, exc, rng, k0, k1, period_ps, p2, p_bg, sig_code, bg_code):
    n = k1 - k0
    pulse_idx = np.arange(k0, k1, dtype=np.int64)
    pulse_t = np.round(pulse_idx * period_ps).astype(np.int64)

    chunks_t, chunks_s, chunks_p = [], [], []
    for prob in (emitter.brightness_per_pulse, p2):
        mask = rng.random(n) < prob
        m = int(mask.sum())
        if m:
            t = (
                pulse_t[mask].astype(np.float64)
                + (rng.normal(0.0, exc.pulse_jitter_ps, m) if exc.pulse_jitter_ps > 0 else 0.0)
                + rng.exponential(emitter.lifetime_ps, m)
            )
            chunks_t.append(np.round(t).astype(np.int64))
            chunks_s.append(np.full(m, sig_code, dtype=np.uint8))
            chunks_p.append(pulse_idx[mask])
    if p_bg > 0:
        n_bg = rng.poisson(p_bg, n)
        total = int(n_bg.sum())
        if total:
            owners = np.repeat(np.arange(n), n_bg)
            t = pulse_t[owners] + np.floor(rng.random(total) * period_ps).astype(np.int64)
            chunks_t.append(t.astype(np.int64))
            chunks_s.append(np.full(total, bg_code, dtype=np.uint8))
            chunks_p.append(pulse_idx[owners])
    if not chunks_t:
        empty = np.array([], dtype=np.int64)
        return empty, np.array([], dtype=np.uint8), empty
    return np.concatenate(chunks_t), np.concatenate(chunks_s), np.concatenate(chunks_p)


def generate_stream(emitter: EmitterSpec, exc: ExcitationSpec, stream_tag: str = "A") -> PhotonStream:
    """Emit the photon stream of one emitter over the acquisition.

    Pulsed: per excitation cycle a signal photon fires with probability
    brightness_per_pulse at pulse time + Gaussian jitter + Exponential
    lifetime; an extra uncorrelated photon fires with the probability
    calibrated to residual_g0; background photons (Poisson count with mean
    set by 1 - signal_purity_rho) land uniformly in the cycle.

    CW: signal emissions form a renewal process with gaps
    Exponential(1/cw_rate) + Exponential(lifetime); background is an
    independent Poisson stream whose rate fixes the signal purity.
    """
    if stream_tag not in _SIGNAL_CODE:
        raise ValueError("stream_tag must be 'A' or 'B'")
    sig_code = _SIGNAL_CODE[stream_tag]
    bg_code = _BACKGROUND_CODE[stream_tag]
    pol = {sig_code: emitter.polarization_deg, bg_code: emitter.polarization_deg}

    if emitter.signal_purity_rho == 0.0:
        raise ValueError("signal_purity_rho must be > 0 to define the background rate")

    if exc.mode == "pulsed":
        period_ps = 1e12 / exc.rep_rate_hz
        n_pulses = int(round(exc.rep_rate_hz * exc.duration_s))
        p2 = calibrate_second_photon_prob(emitter.brightness_per_pulse, emitter.residual_g0)
        mean_photons = emitter.brightness_per_pulse + p2
        p_bg = (1.0 - emitter.signal_purity_rho) / emitter.signal_purity_rho * mean_photons
        parts = []
        for k0 in range(0, max(n_pulses, 0), PULSE_BLOCK):
            k1 = min(k0 + PULSE_BLOCK, n_pulses)
            rng = substream(exc.seed, "pulsed", stream_tag, k0 // PULSE_BLOCK)
            parts.append(
                _pulsed_block(emitter, exc, rng, k0, k1, period_ps, p2, p_bg, sig_code, bg_code)
            )
        if parts:
            times = np.concatenate([p[0] for p in parts])
            sources = np.concatenate([p[1] for p in parts])
            pulses = np.concatenate([p[2] for p in parts])
        else:
            times = np.array([], dtype=np.int64)
            sources = np.array([], dtype=np.uint8)
            pulses = np.array([], dtype=np.int64)
        return _sorted_stream(times, sources, pulses, pol)

    # CW renewal stream
    rng = substream(exc.seed, "cw", stream_tag)
    duration_ps = exc.duration_s * 1e12
    lam_ps = exc.cw_rate_hz * 1e-12  # excitation supply rate per ps
    mean_gap = 1.0 / lam_ps + emitter.lifetime_ps
    signal_times = []
    t_last = 0.0
    if duration_ps > 0:
        batch = int(duration_ps / mean_gap * 1.02 + 6.0 * math.sqrt(duration_ps / mean_gap) + 16)
        while t_last < duration_ps:
            gaps = rng.exponential(1.0 / lam_ps, batch) + rng.exponential(
                emitter.lifetime_ps, batch
            )
            arr = t_last + np.cumsum(gaps)
            signal_times.append(arr)
            t_last = float(arr[-1])
        signal = np.concatenate(signal_times)
        signal = signal[signal < duration_ps]
    else:
        signal = np.array([], dtype=np.float64)

    rho = emitter.signal_purity_rho
    bg_rate_ps = (1.0 - rho) / rho / mean_gap
    n_bg = rng.poisson(bg_rate_ps * duration_ps) if bg_rate_ps > 0 and duration_ps > 0 else 0
    bg = rng.random(n_bg) * duration_ps

    times = np.concatenate([np.round(signal), np.round(bg)]).astype(np.int64)
    sources = np.concatenate(
        [np.full(signal.size, sig_code, dtype=np.uint8), np.full(n_bg, bg_code, dtype=np.uint8)]
    )
    pulses = np.full(times.size, -1, dtype=np.int64)
    return _sorted_stream(times, sources, pulses, pol)


@njit(cache=True)
def _greedy_accept(order, a_idx, b_idx, used_a, used_b, accept):  # pragma: no cover
    for r in range(order.size):
        k = order[r]
        i = a_idx[k]
        j = b_idx[k]
        if not used_a[i] and not used_b[j]:
            used_a[i] = True
            used_b[j] = True
            accept[k] = True


def interfere(
    stream_a: PhotonStream,
    stream_b: PhotonStream,
    hwp: str,
    m: InterferenceModel,
    pairing_window_ps: float | None = None,
    seed: int = 0,
) -> tuple[PhotonStream, PhotonStream]:
    """Route the two streams through the 50:50 beamsplitter.

    Photons are paired greedily across the inputs, nearest time difference
    first, within pairing_window_ps (default 10 * tau_c).  A matched pair
    exits through the same arm with probability
    (1 + q * V * exp(-2|dt|/tau_c)) / 2 where q = 1 only when hwp is
    'parallel' and both photons are signal photons; everything else,
    including unmatched photons, routes 50:50 independently.  Returns the
    (arm_c, arm_d) output streams; the photon multiset is conserved.
    """
    if hwp not in ("parallel", "orthogonal"):
        raise ValueError("hwp must be 'parallel' or 'orthogonal'")
    _require_sorted(stream_a, "stream_a")
    _require_sorted(stream_b, "stream_b")
    window = 10.0 * m.tau_c_ps if pairing_window_ps is None else float(pairing_window_ps)
    if window <= 0:
        raise ValueError("pairing_window_ps must be positive")
    if window < 10.0 * m.tau_c_ps:
        warnings.warn(
            f"pairing window {window} ps below 10*tau_c={10 * m.tau_c_ps} ps "
            "truncates the interference tail",
            stacklevel=2,
        )

    ta, tb = stream_a.times_ps, stream_b.times_ps
    na, nb = ta.size, tb.size
    rng = substream(seed, "interfere")

    w = int(math.ceil(window))
    lo = np.searchsorted(tb, ta - w, side="left")
    hi = np.searchsorted(tb, ta + w, side="right")
    per_a = hi - lo
    total = int(per_a.sum())
    used_a = np.zeros(na, dtype=np.bool_)
    used_b = np.zeros(nb, dtype=np.bool_)

    if total:
        a_cand = np.repeat(np.arange(na, dtype=np.int64), per_a)
        offsets = np.cumsum(per_a) - per_a
        b_cand = np.arange(total, dtype=np.int64) - np.repeat(offsets, per_a) + np.repeat(lo, per_a)
        delta = tb[b_cand] - ta[a_cand]
        order = np.lexsort((b_cand, a_cand, np.abs(delta)))
        accept = np.zeros(total, dtype=np.bool_)
        _greedy_accept(order, a_cand, b_cand, used_a, used_b, accept)
        pa = a_cand[accept]
        pb = b_cand[accept]
        pdelta = delta[accept].astype(np.float64)
        del a_cand, b_cand, delta, order, accept
    else:
        pa = pb = np.array([], dtype=np.int64)
        pdelta = np.array([], dtype=np.float64)

    signal_a = stream_a.sources[pa] < BG_A
    signal_b = stream_b.sources[pb] < BG_A
    q = (hwp == "parallel") & signal_a & signal_b
    term = m.overlap_v * np.exp(-2.0 * np.abs(pdelta) / m.tau_c_ps)
    if m.detuning_rad_per_ps != 0.0:
        term = term * np.cos(m.detuning_rad_per_ps * pdelta)
    p_same = 0.5 * (1.0 + np.where(q, term, 0.0))

    n_pairs = pa.size
    same = rng.random(n_pairs) < p_same
    same_to_c = rng.random(n_pairs) < 0.5
    split_a_to_c = rng.random(n_pairs) < 0.5

    a_to_c = np.zeros(na, dtype=np.bool_)
    b_to_c = np.zeros(nb, dtype=np.bool_)
    a_to_c[pa] = np.where(same, same_to_c, split_a_to_c)
    b_to_c[pb] = np.where(same, same_to_c, ~split_a_to_c)
    free_a = ~used_a
    free_b = ~used_b
    a_to_c[free_a] = rng.random(int(free_a.sum())) < 0.5
    b_to_c[free_b] = rng.random(int(free_b.sum())) < 0.5

    pol = {**stream_a.pol_by_source, **stream_b.pol_by_source}

    def gather(mask_a, mask_b):
        return _sorted_stream(
            np.concatenate([ta[mask_a], tb[mask_b]]),
            np.concatenate([stream_a.sources[mask_a], stream_b.sources[mask_b]]),
            np.concatenate([stream_a.pulses[mask_a], stream_b.pulses[mask_b]]),
            pol,
        )

    arm_c = gather(a_to_c, b_to_c)
    arm_d = gather(~a_to_c, ~b_to_c)
    return arm_c, arm_d


def fiber_split(stream: PhotonStream, seed: int = 0) -> tuple[PhotonStream, PhotonStream]:
    """50:50 fiber splitter: route each photon independently."""
    _require_sorted(stream, "stream")
    rng = substream(seed, "fiber")
    to_one = rng.random(len(stream)) < 0.5

    def pick(mask):
        return PhotonStream(
            stream.times_ps[mask],
            stream.sources[mask],
            stream.pulses[mask],
            dict(stream.pol_by_source),
        )

    return pick(to_one), pick(~to_one)


@njit(cache=True)
def _dead_time_filter(times, dead, keep):  # pragma: no cover
    last = np.int64(-(2**62))
    for i in range(times.size):
        if times[i] - last >= dead:
            keep[i] = True
            last = times[i]


def detect(
    stream: PhotonStream,
    det: DetectorSpec,
    duration_s: float,
    detector_id: int = 1,
    seed: int = 0,
) -> np.ndarray:
    """Turn incident photons into detector clicks.

    Bernoulli thinning at the quantum efficiency, Gaussian timing jitter,
    Poisson dark counts uniform over the acquisition, then dead-time
    filtering (a click within dead_time_ps after an accepted click drops).
    Returns detection records sorted by time.
    """
    from .ttag import DETECTION_DTYPE  # local import keeps module deps one-way

    _require_sorted(stream, "stream")
    rng = substream(seed, "detect", detector_id)
    times = stream.times_ps
    if det.efficiency < 1.0:
        times = times[rng.random(times.size) < det.efficiency]
    t = times.astype(np.float64)
    if det.jitter_fwhm_ps > 0:
        t = t + rng.normal(0.0, det.jitter_fwhm_ps / 2.355, t.size)
    clicks = np.round(t).astype(np.int64)

    duration_ps = int(round(duration_s * 1e12))
    if det.dark_rate_hz > 0 and duration_ps > 0:
        n_dark = rng.poisson(det.dark_rate_hz * duration_s)
        darks = rng.integers(0, duration_ps, n_dark, dtype=np.int64)
        clicks = np.concatenate([clicks, darks])

    clicks.sort(kind="stable")
    if det.dead_time_ps > 0 and clicks.size:
        keep = np.zeros(clicks.size, dtype=np.bool_)
        _dead_time_filter(clicks, np.int64(det.dead_time_ps), keep)
        clicks = clicks[keep]

    rec = np.empty(clicks.size, dtype=DETECTION_DTYPE)
    rec["detector"] = detector_id
    rec["time_ps"] = clicks
    return rec


@dataclass
class RunResult:
    events_a: int
    events_b: int
    arm_c: int
    arm_d: int
    clicks_det1: int
    clicks_det2: int
    detector1_path: str
    detector2_path: str
    metadata_path: str


def run_experiment(cfg: "ExperimentConfig") -> RunResult:
    """Full pipeline: generate both streams, interfere, split, detect, write.

    Timestamp files plus key-value sidecars (carrying the config digest) and
    a run metadata report land at the configured output paths.
    """
    from .reporting import write_kv, write_sidecar
    from .ttag import write_ttag

    exc = cfg.excitation
    sa = generate_stream(cfg.emitter_a, exc, stream_tag="A")
    sb = generate_stream(cfg.emitter_b, exc, stream_tag="B")
    arm_c, arm_d = interfere(
        sa, sb, cfg.hwp, cfg.model, cfg.pairing_window_ps, seed=cfg.seed
    )
    in1, in2 = fiber_split(arm_c, seed=cfg.seed)
    rec1 = detect(in1, cfg.detector1, exc.duration_s, detector_id=1, seed=cfg.seed)
    rec2 = detect(in2, cfg.detector2, exc.duration_s, detector_id=2, seed=cfg.seed)

    write_ttag(cfg.out_detector1, rec1)
    write_ttag(cfg.out_detector2, rec2)
    for path, rec, det_id in ((cfg.out_detector1, rec1, 1), (cfg.out_detector2, rec2, 2)):
        write_sidecar(
            path,
            {
                "stage": "simulate",
                "config_digest": cfg.digest,
                "seed": cfg.seed,
                "detector": det_id,
                "count": int(rec.size),
                "duration_s": exc.duration_s,
            },
        )
    meta = {
        "format": "homsim-run",
        "version": 1,
        "config_digest": cfg.digest,
        "seed": cfg.seed,
        "hwp": cfg.hwp,
        "mode": exc.mode,
        "duration_s": exc.duration_s,
        "events.emitter_a": len(sa),
        "events.emitter_b": len(sb),
        "events.arm_c": len(arm_c),
        "events.arm_d": len(arm_d),
        "clicks.detector1": int(rec1.size),
        "clicks.detector2": int(rec2.size),
        "output.detector1": cfg.out_detector1,
        "output.detector2": cfg.out_detector2,
    }
    write_kv(cfg.out_metadata, meta)
    return RunResult(
        events_a=len(sa),
        events_b=len(sb),
        arm_c=len(arm_c),
        arm_d=len(arm_d),
        clicks_det1=int(rec1.size),
        clicks_det2=int(rec2.size),
        detector1_path=cfg.out_detector1,
        detector2_path=cfg.out_detector2,
        metadata_path=cfg.out_metadata,
    )
