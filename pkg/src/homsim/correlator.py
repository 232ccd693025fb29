"""Start-stop-free coincidence counting on timestamp streams.

cross_correlate counts *every* pair (a, b) from two click streams whose lag
b - a falls in [-max_lag, +max_lag), binned with floor semantics, using a
single linear sweep with a sliding window (O(n + m + pairs)).  The histogram
can then be normalized to g2 for CW data, reduced to a peak-area g2(0) for
pulsed data, and corrected for detector dark counts.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .ttag import atomic_write_bytes


@dataclass
class CorrelationHistogram:
    """Pair-count histogram over signed lags.

    counts[k] is the number of ordered pairs with lag in
    [min_lag_ps + k*bin_width_ps, min_lag_ps + (k+1)*bin_width_ps).
    rate1_hz/rate2_hz/acquisition_s carry the bookkeeping needed for CW
    normalization; ``normalized`` is filled by :func:`normalize_cw` or
    :func:`normalize_pulsed`.
    """

    bin_width_ps: int
    min_lag_ps: int
    max_lag_ps: int
    counts: np.ndarray
    acquisition_s: float = 0.0
    rate1_hz: float = 0.0
    rate2_hz: float = 0.0
    normalized: np.ndarray | None = None

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise ValueError("bin_width_ps must be positive")
        if (self.max_lag_ps - self.min_lag_ps) % self.bin_width_ps:
            raise ValueError("lag span must be a multiple of bin_width_ps")
        nbins = (self.max_lag_ps - self.min_lag_ps) // self.bin_width_ps
        if len(self.counts) != nbins:
            raise ValueError(f"counts length {len(self.counts)} != {nbins} bins")

    @property
    def nbins(self) -> int:
        return len(self.counts)

    def bin_centers(self) -> np.ndarray:
        return (
            self.min_lag_ps
            + self.bin_width_ps * np.arange(self.nbins, dtype=np.float64)
            + 0.5 * self.bin_width_ps
        )


@njit(cache=True)
def _sweep_count(ts1, ts2, min_lag, max_lag, bin_width, counts):  # pragma: no cover
    n2 = ts2.size
    j_lo = 0
    j_hi = 0
    for i in range(ts1.size):
        a = ts1[i]
        lo_t = a + min_lag
        hi_t = a + max_lag
        while j_lo < n2 and ts2[j_lo] < lo_t:
            j_lo += 1
        if j_hi < j_lo:
            j_hi = j_lo
        while j_hi < n2 and ts2[j_hi] < hi_t:
            j_hi += 1
        for j in range(j_lo, j_hi):
            counts[(ts2[j] - lo_t) // bin_width] += 1


def _check_sorted(ts: np.ndarray, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(ts, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    if arr.size > 1 and np.any(arr[1:] < arr[:-1]):
        raise ValueError(f"{name} must be sorted ascending")
    return arr


def cross_correlate(
    ts1,
    ts2,
    max_lag_ps: int,
    bin_width_ps: int,
    acquisition_s: float | None = None,
    exclude_self_pairs: bool = False,
) -> CorrelationHistogram:
    """Full pair-count cross-correlation of two sorted timestamp streams.

    Lags are b - a for a in ts1, b in ts2, kept when -max_lag <= lag < max_lag.
    max_lag_ps must be a positive multiple of bin_width_ps.  For an
    autocorrelation pass the same stream twice with exclude_self_pairs=True,
    which removes each event paired with itself from the zero-lag bin.

    acquisition_s fixes the rates recorded on the histogram; when omitted it
    is taken as the span of the two streams combined.
    """
    a = _check_sorted(ts1, "ts1")
    b = _check_sorted(ts2, "ts2")
    max_lag_ps = int(max_lag_ps)
    bin_width_ps = int(bin_width_ps)
    if bin_width_ps <= 0:
        raise ValueError("bin_width_ps must be positive")
    if max_lag_ps <= 0 or max_lag_ps % bin_width_ps:
        raise ValueError("max_lag_ps must be a positive multiple of bin_width_ps")
    nbins = 2 * max_lag_ps // bin_width_ps
    counts = np.zeros(nbins, dtype=np.int64)
    if a.size and b.size:
        _sweep_count(a, b, -max_lag_ps, max_lag_ps, bin_width_ps, counts)

    if exclude_self_pairs:
        if a.size != b.size or (a.size and not np.array_equal(a, b)):
            raise ValueError("exclude_self_pairs requires identical streams")
        counts[max_lag_ps // bin_width_ps] -= a.size

    if acquisition_s is None:
        if a.size and b.size:
            span_ps = max(a[-1], b[-1]) - min(a[0], b[0])
            acquisition_s = float(span_ps) * 1e-12
        else:
            acquisition_s = 0.0
    rate1 = a.size / acquisition_s if acquisition_s > 0 else 0.0
    rate2 = b.size / acquisition_s if acquisition_s > 0 else 0.0
    return CorrelationHistogram(
        bin_width_ps=bin_width_ps,
        min_lag_ps=-max_lag_ps,
        max_lag_ps=max_lag_ps,
        counts=counts,
        acquisition_s=acquisition_s,
        rate1_hz=rate1,
        rate2_hz=rate2,
    )


def cross_correlate_bruteforce(ts1, ts2, max_lag_ps: int, bin_width_ps: int) -> np.ndarray:
    """O(n*m) reference: enumerate all pair lags by outer difference.

    Independent oracle for the sweep kernel; returns the counts array only.
    """
    a = np.asarray(ts1, dtype=np.int64)
    b = np.asarray(ts2, dtype=np.int64)
    nbins = 2 * max_lag_ps // bin_width_ps
    counts = np.zeros(nbins, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return counts
    lags = (b[None, :] - a[:, None]).ravel()
    keep = (lags >= -max_lag_ps) & (lags < max_lag_ps)
    idx = (lags[keep] + max_lag_ps) // bin_width_ps
    np.add.at(counts, idx, 1)
    return counts


def cross_correlate_segmented(
    ts1, ts2, max_lag_ps: int, bin_width_ps: int, n_segments: int, acquisition_s: float | None = None
) -> CorrelationHistogram:
    """Segment ts1 in time and correlate each piece against a window of ts2.

    Each ts1 event lands in exactly one segment and its partner window
    overlaps the segment by max_lag on both sides, so every pair is counted
    exactly once and the merged result equals the whole-stream correlation.
    This is the shard-and-merge path for concurrent or streaming operation.
    """
    a = _check_sorted(ts1, "ts1")
    b = _check_sorted(ts2, "ts2")
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if a.size == 0 or n_segments == 1:
        return cross_correlate(a, b, max_lag_ps, bin_width_ps, acquisition_s)
    edges = np.linspace(0, a.size, n_segments + 1).astype(np.int64)
    merged = None
    for k in range(n_segments):
        seg = a[edges[k] : edges[k + 1]]
        if seg.size == 0:
            continue
        lo = np.searchsorted(b, seg[0] - max_lag_ps, side="left")
        hi = np.searchsorted(b, seg[-1] + max_lag_ps, side="right")
        part = cross_correlate(seg, b[lo:hi], max_lag_ps, bin_width_ps, acquisition_s=1.0)
        merged = part if merged is None else histogram_merge(merged, part)
    # Rebuild the stream-level bookkeeping that per-segment runs cannot see.
    if acquisition_s is None:
        span_ps = max(a[-1], b[-1] if b.size else a[-1]) - min(a[0], b[0] if b.size else a[0])
        acquisition_s = float(span_ps) * 1e-12
    rate1 = a.size / acquisition_s if acquisition_s > 0 else 0.0
    rate2 = b.size / acquisition_s if acquisition_s > 0 else 0.0
    return CorrelationHistogram(
        bin_width_ps=int(bin_width_ps),
        min_lag_ps=-int(max_lag_ps),
        max_lag_ps=int(max_lag_ps),
        counts=merged.counts,
        acquisition_s=acquisition_s,
        rate1_hz=rate1,
        rate2_hz=rate2,
    )


def normalize_cw(hist: CorrelationHistogram) -> CorrelationHistogram:
    """Attach g2 normalization counts / (rate1 * rate2 * bin_width_s * acq_s).

    A histogram with no counts at all normalizes to zeros; otherwise zero
    rates or zero acquisition are an error.
    """
    total = int(hist.counts.sum())
    if total == 0:
        return replace(hist, normalized=np.zeros(hist.nbins, dtype=np.float64))
    if hist.acquisition_s <= 0 or hist.rate1_hz <= 0 or hist.rate2_hz <= 0:
        raise ValueError("normalization requires positive rates and acquisition")
    denom = hist.rate1_hz * hist.rate2_hz * (hist.bin_width_ps * 1e-12) * hist.acquisition_s
    return replace(hist, normalized=hist.counts / denom)


@dataclass
class PulsedG2:
    """Peak-area g2(0) estimate with Poisson uncertainty."""

    value: float
    sigma: float
    center_area: int
    side_areas: list[int] = field(default_factory=list)


def pulsed_g2_zero(hist: CorrelationHistogram, rep_period_ps: int, n_side_peaks: int = 4) -> PulsedG2:
    """g2(0) = center-peak area / mean side-peak area for pulsed excitation.

    Each peak is integrated over a full period window centered on
    k * rep_period (bins assigned by bin center).  The histogram must span
    the +-(n_side_peaks + 0.5) period windows completely; n_side_peaks >= 2.
    """
    if n_side_peaks < 2:
        raise ValueError("n_side_peaks must be >= 2")
    if rep_period_ps <= 0:
        raise ValueError("rep_period_ps must be positive")
    half = 0.5 * rep_period_ps
    need = (n_side_peaks + 0.5) * rep_period_ps
    if hist.min_lag_ps > -need or hist.max_lag_ps < need:
        raise ValueError(
            f"histogram spans [{hist.min_lag_ps}, {hist.max_lag_ps}) ps but "
            f"+-{need:.0f} ps is required for {n_side_peaks} side peaks"
        )
    centers = hist.bin_centers()
    areas = {}
    for k in range(-n_side_peaks, n_side_peaks + 1):
        mid = k * rep_period_ps
        sel = (centers >= mid - half) & (centers < mid + half)
        areas[k] = int(hist.counts[sel].sum())
    center = areas.pop(0)
    side = list(areas.values())
    side_total = sum(side)
    if center == 0:
        return PulsedG2(0.0, 0.0, 0, side)
    if side_total == 0:
        raise ValueError("no side-peak counts; cannot normalize")
    mean_side = side_total / len(side)
    value = center / mean_side
    sigma = value * np.sqrt(1.0 / center + 1.0 / side_total)
    return PulsedG2(float(value), float(sigma), center, side)


def normalize_pulsed(hist: CorrelationHistogram, rep_period_ps: int, n_side_peaks: int = 4) -> CorrelationHistogram:
    """Scale counts so the mean side-peak *area per period window* is one.

    normalized[k] = counts[k] * rep_period / (mean side area * bin width); a
    full-window integral of the normalized curve times bin/period then reads
    directly as a peak-area ratio.
    """
    g = pulsed_g2_zero(hist, rep_period_ps, n_side_peaks)
    side_total = sum(g.side_areas)
    if side_total == 0:
        raise ValueError("no side-peak counts; cannot normalize")
    mean_side = side_total / len(g.side_areas)
    scale = rep_period_ps / (mean_side * hist.bin_width_ps)
    return replace(hist, normalized=hist.counts * scale)


def dark_correct_g2(g_raw: float, dark_fraction: float) -> float:
    """Remove the dark-count floor: (g_raw - 2x) / (1 - x)^2, x = I_D/I_M.

    Uncorrelated dark counts at intensity fraction x add 2x(1 - x) + x^2 of
    flat coincidences; dropping the small x^2 term gives this correction.  A
    negative numerator (raw value consistent with pure darks) clamps to 0
    with a warning.
    """
    if not 0.0 <= dark_fraction < 1.0:
        raise ValueError("dark_fraction must be in [0, 1)")
    numerator = g_raw - 2.0 * dark_fraction
    if numerator < 0.0:
        warnings.warn(
            f"dark-corrected numerator {numerator:.4g} < 0; clamping g2 to 0",
            stacklevel=2,
        )
        return 0.0
    return numerator / (1.0 - dark_fraction) ** 2


def histogram_merge(h1: CorrelationHistogram, h2: CorrelationHistogram) -> CorrelationHistogram:
    """Add two histograms of identical binning (shard merge).

    Counts and acquisition add; rates combine as acquisition-weighted means
    (equal to total counts over total time).  Any normalization is dropped;
    renormalize after merging.
    """
    for name in ("bin_width_ps", "min_lag_ps", "max_lag_ps"):
        if getattr(h1, name) != getattr(h2, name):
            raise ValueError(f"binning mismatch: {name}")
    acq = h1.acquisition_s + h2.acquisition_s
    if acq > 0:
        rate1 = (h1.rate1_hz * h1.acquisition_s + h2.rate1_hz * h2.acquisition_s) / acq
        rate2 = (h1.rate2_hz * h1.acquisition_s + h2.rate2_hz * h2.acquisition_s) / acq
    else:
        rate1 = rate2 = 0.0
    return CorrelationHistogram(
        bin_width_ps=h1.bin_width_ps,
        min_lag_ps=h1.min_lag_ps,
        max_lag_ps=h1.max_lag_ps,
        counts=h1.counts + h2.counts,
        acquisition_s=acq,
        rate1_hz=rate1,
        rate2_hz=rate2,
    )


# --- CSV interface ----------------------------------------------------------

CSV_HEADER = ["lag_ps", "counts", "normalized"]


def histogram_to_csv(hist: CorrelationHistogram, path: str) -> None:
    """Write ``lag_ps,counts,normalized`` rows (lag = bin center), atomically."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    centers = hist.bin_centers()
    norm = hist.normalized
    for k in range(hist.nbins):
        n = "" if norm is None else repr(float(norm[k]))
        writer.writerow([repr(float(centers[k])), int(hist.counts[k]), n])
    atomic_write_bytes(path, buf.getvalue().encode())


def histogram_from_csv(path: str) -> CorrelationHistogram:
    """Rebuild a histogram from its CSV form (binning inferred from centers)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
    body = rows[1:]
    if len(body) < 2:
        raise ValueError(f"{path}: need at least two bins")
    centers = np.array([float(r[0]) for r in body])
    counts = np.array([int(r[1]) for r in body], dtype=np.int64)
    norm_cells = [r[2] for r in body]
    widths = np.diff(centers)
    width = widths[0]
    if width <= 0 or not np.allclose(widths, width, rtol=1e-9, atol=0.0):
        raise ValueError(f"{path}: bin centers are not uniform")
    bin_width = int(round(width))
    min_lag = int(round(centers[0] - 0.5 * width))
    max_lag = int(round(centers[-1] + 0.5 * width))
    normalized = None
    if all(c != "" for c in norm_cells):
        normalized = np.array([float(c) for c in norm_cells])
    return CorrelationHistogram(
        bin_width_ps=bin_width,
        min_lag_ps=min_lag,
        max_lag_ps=max_lag,
        counts=counts,
        normalized=normalized,
    )
