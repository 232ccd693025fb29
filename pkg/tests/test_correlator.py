import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homsim.correlator import (
    CorrelationHistogram,
    cross_correlate,
    cross_correlate_bruteforce,
    cross_correlate_segmented,
    dark_correct_g2,
    histogram_from_csv,
    histogram_merge,
    histogram_to_csv,
    normalize_cw,
    normalize_pulsed,
    pulsed_g2_zero,
)

sorted_streams = st.lists(
    st.integers(min_value=-(10**6), max_value=10**6), min_size=0, max_size=120
).map(lambda xs: np.array(sorted(xs), dtype=np.int64))


def test_two_click_example():
    h = cross_correlate(
        np.array([0, 100], dtype=np.int64),
        np.array([50], dtype=np.int64),
        max_lag_ps=200,
        bin_width_ps=100,
    )
    # lag +50 lands in [0, 100), lag -50 in [-100, 0)
    assert list(h.counts) == [0, 1, 1, 0]
    assert h.min_lag_ps == -200 and h.max_lag_ps == 200


def test_empty_streams_give_zero_counts():
    empty = np.array([], dtype=np.int64)
    h = cross_correlate(empty, np.array([5], dtype=np.int64), 100, 10)
    assert h.counts.sum() == 0
    assert normalize_cw(h).normalized.sum() == 0.0


def test_rejects_unsorted_input():
    with pytest.raises(ValueError, match="sorted"):
        cross_correlate(np.array([5, 1], dtype=np.int64), np.array([0], dtype=np.int64), 100, 10)


def test_rejects_bad_binning():
    ts = np.array([0], dtype=np.int64)
    with pytest.raises(ValueError):
        cross_correlate(ts, ts, max_lag_ps=100, bin_width_ps=33)
    with pytest.raises(ValueError):
        cross_correlate(ts, ts, max_lag_ps=0, bin_width_ps=1)


@settings(max_examples=120, deadline=None)
@given(ts1=sorted_streams, ts2=sorted_streams)
def test_matches_bruteforce_oracle(ts1, ts2):
    h = cross_correlate(ts1, ts2, max_lag_ps=4096, bin_width_ps=16)
    brute = cross_correlate_bruteforce(ts1, ts2, max_lag_ps=4096, bin_width_ps=16)
    np.testing.assert_array_equal(h.counts, brute)


@settings(max_examples=60, deadline=None)
@given(ts1=sorted_streams, ts2=sorted_streams)
def test_pair_conservation(ts1, ts2):
    max_lag = 512
    h = cross_correlate(ts1, ts2, max_lag_ps=max_lag, bin_width_ps=2)
    lags = (ts2[None, :] - ts1[:, None]).ravel() if ts1.size and ts2.size else np.array([])
    n_in_range = int(np.sum((lags >= -max_lag) & (lags < max_lag))) if lags.size else 0
    assert int(h.counts.sum()) == n_in_range


@settings(max_examples=60, deadline=None)
@given(ts=sorted_streams)
def test_autocorrelation_symmetry(ts):
    # bin width 1 so every lag owns a bin; mirror of bin k is nbins - k
    max_lag = 64
    inner = ts[(ts > -10**6 + max_lag) & (ts < 10**6 - max_lag)]
    h = cross_correlate(inner, inner, max_lag_ps=max_lag, bin_width_ps=1, exclude_self_pairs=True)
    c = h.counts
    n = h.nbins
    for k in range(1, n):
        assert c[k] == c[n - k]
    assert c[n // 2] >= 0  # self pairs removed, never negative


def test_exclude_self_pairs_requires_identical_streams():
    with pytest.raises(ValueError):
        cross_correlate(
            np.array([0], dtype=np.int64),
            np.array([1], dtype=np.int64),
            64,
            1,
            exclude_self_pairs=True,
        )


@settings(max_examples=40, deadline=None)
@given(ts1=sorted_streams, ts2=sorted_streams)
def test_lag_reversal_matches_swapped_streams(ts1, ts2):
    # with unit bins, lag L sits at index L + max in h12 and -L at -L + max
    # in h21; mirroring around the zero-lag bin maps one onto the other
    max_lag = 128
    h12 = cross_correlate(ts1, ts2, max_lag, 1).counts
    h21 = cross_correlate(ts2, ts1, max_lag, 1).counts
    n = h12.size
    for k in range(1, n):
        assert h12[k] == h21[n - k]


def test_segmented_equals_whole():
    rng = np.random.default_rng(42)
    ts1 = np.sort(rng.integers(0, 10**7, 4000)).astype(np.int64)
    ts2 = np.sort(rng.integers(0, 10**7, 3000)).astype(np.int64)
    whole = cross_correlate(ts1, ts2, 2048, 16, acquisition_s=1e-5)
    for n_seg in (2, 3, 7):
        parts = cross_correlate_segmented(ts1, ts2, 2048, 16, n_seg, acquisition_s=1e-5)
        np.testing.assert_array_equal(parts.counts, whole.counts)
        assert parts.rate1_hz == whole.rate1_hz


def test_merge_identity_and_associativity():
    rng = np.random.default_rng(3)

    def mk(seed):
        c = rng.integers(0, 50, 8)
        return CorrelationHistogram(16, -64, 64, c, acquisition_s=1.0, rate1_hz=10, rate2_hz=20)

    h1, h2, h3 = mk(1), mk(2), mk(3)
    left = histogram_merge(histogram_merge(h1, h2), h3)
    right = histogram_merge(h1, histogram_merge(h2, h3))
    np.testing.assert_array_equal(left.counts, right.counts)
    assert left.acquisition_s == pytest.approx(right.acquisition_s)
    assert left.rate1_hz == pytest.approx(right.rate1_hz)

    zero = CorrelationHistogram(16, -64, 64, np.zeros(8, dtype=np.int64))
    same = histogram_merge(h1, zero)
    np.testing.assert_array_equal(same.counts, h1.counts)


def test_merge_rejects_binning_mismatch():
    h1 = CorrelationHistogram(16, -64, 64, np.zeros(8, dtype=np.int64))
    h2 = CorrelationHistogram(8, -64, 64, np.zeros(16, dtype=np.int64))
    with pytest.raises(ValueError, match="binning"):
        histogram_merge(h1, h2)


def test_normalize_cw_poisson_flat():
    # two independent Poisson streams must normalize to 1 in every bin
    rng = np.random.default_rng(11)
    duration_ps = 10**9
    rate_hz = 2e8  # 2e-4 per ps
    n = rng.poisson(rate_hz * duration_ps * 1e-12)
    ts1 = np.sort(rng.integers(0, duration_ps, n)).astype(np.int64)
    ts2 = np.sort(rng.integers(0, duration_ps, n)).astype(np.int64)
    h = normalize_cw(cross_correlate(ts1, ts2, 6400, 64, acquisition_s=duration_ps * 1e-12))
    sigma = np.sqrt(np.maximum(h.counts, 1)) / (
        h.rate1_hz * h.rate2_hz * h.bin_width_ps * 1e-12 * h.acquisition_s
    )
    within = np.abs(h.normalized - 1.0) <= 3.0 * sigma
    assert within.mean() >= 0.99


def test_normalize_cw_rejects_zero_rates_with_counts():
    h = CorrelationHistogram(16, -64, 64, np.ones(8, dtype=np.int64))
    with pytest.raises(ValueError):
        normalize_cw(h)


# --- pulsed reduction --------------------------------------------------------


def _pulsed_hist(center_area, side_area, rep=1000, n_side=3, bw=10):
    max_lag = int((n_side + 0.5) * rep)
    nbins = 2 * max_lag // bw
    counts = np.zeros(nbins, dtype=np.int64)
    h = CorrelationHistogram(bw, -max_lag, max_lag, counts)
    centers = h.bin_centers()
    for k in range(-n_side, n_side + 1):
        sel = np.argmin(np.abs(centers - k * rep))
        counts[sel] = center_area if k == 0 else side_area
    return h


def test_pulsed_g2_equal_peaks_is_one():
    h = _pulsed_hist(500, 500)
    g = pulsed_g2_zero(h, rep_period_ps=1000, n_side_peaks=3)
    assert g.value == pytest.approx(1.0)
    assert g.center_area == 500
    assert g.side_areas == [500] * 6


def test_pulsed_g2_zero_center():
    g = pulsed_g2_zero(_pulsed_hist(0, 400), 1000, 3)
    assert g.value == 0.0 and g.sigma == 0.0


def test_pulsed_g2_quarter():
    g = pulsed_g2_zero(_pulsed_hist(100, 400), 1000, 3)
    assert g.value == pytest.approx(0.25)
    assert g.sigma == pytest.approx(0.25 * np.sqrt(1 / 100 + 1 / 2400))


def test_pulsed_g2_requires_span():
    h = _pulsed_hist(10, 10, n_side=2)
    with pytest.raises(ValueError, match="side peaks"):
        pulsed_g2_zero(h, rep_period_ps=1000, n_side_peaks=4)


def test_normalize_pulsed_side_level():
    h = _pulsed_hist(100, 400)
    out = normalize_pulsed(h, 1000, 3)
    # each side peak is one bin of 400 counts; its window integral times
    # bin/period must be 1
    centers = out.bin_centers()
    sel = np.argmin(np.abs(centers - 1000))
    window = out.normalized[np.abs(centers - 1000) <= 500]
    assert window.sum() * h.bin_width_ps / 1000 == pytest.approx(1.0)
    assert out.normalized[sel] > 0


# --- dark correction ----------------------------------------------------------


def test_dark_correct_identity_at_zero_fraction():
    assert dark_correct_g2(0.25, 0.0) == 0.25


def test_dark_correct_typical_hbt_values():
    # raw 0.25 at 9% dark fraction lands near 0.085
    out = dark_correct_g2(0.25, 0.09)
    assert out == pytest.approx((0.25 - 0.18) / 0.91**2)
    assert 0.059 <= out <= 0.093


def test_dark_correct_clamps_negative_numerator():
    with pytest.warns(UserWarning, match="clamping"):
        assert dark_correct_g2(0.19, 0.10) == 0.0


def test_dark_correct_rejects_bad_fraction():
    with pytest.raises(ValueError):
        dark_correct_g2(0.5, 1.0)
    with pytest.raises(ValueError):
        dark_correct_g2(0.5, -0.01)


@settings(max_examples=50, deadline=None)
@given(g=st.floats(0, 2), x=st.floats(0, 0.99))
def test_dark_correct_never_negative_and_monotone(g, x):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = dark_correct_g2(g, x)
    assert out >= 0.0
    assert out <= max(g / (1 - x) ** 2, 0.0) + 1e-12


# --- CSV round trip -----------------------------------------------------------


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    counts = rng.integers(0, 100, 16)
    h = CorrelationHistogram(16, -128, 128, counts, acquisition_s=2.0, rate1_hz=10, rate2_hz=10)
    h = normalize_cw(h) if counts.sum() else h
    path = str(tmp_path / "hist.csv")
    histogram_to_csv(h, path)
    first = open(path).readline().strip()
    assert first == "lag_ps,counts,normalized"
    back = histogram_from_csv(path)
    assert back.bin_width_ps == 16
    assert back.min_lag_ps == -128 and back.max_lag_ps == 128
    np.testing.assert_array_equal(back.counts, h.counts)
    np.testing.assert_allclose(back.normalized, h.normalized)


def test_csv_without_normalization(tmp_path):
    h = CorrelationHistogram(10, -50, 50, np.arange(10, dtype=np.int64))
    path = str(tmp_path / "h.csv")
    histogram_to_csv(h, path)
    back = histogram_from_csv(path)
    assert back.normalized is None
    np.testing.assert_array_equal(back.counts, h.counts)


def test_csv_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="header"):
        histogram_from_csv(str(p))


# --- throughput ---------------------------------------------------------------


def test_sweep_throughput_regression():
    # soft bound from the module contract: >= 1e7 events/s single threaded
    # for sparse coincidences
    rng = np.random.default_rng(123)
    n = 2 * 10**6
    duration_ps = 2 * 10**12  # 1e6 events/s per stream -> sparse pairs
    ts1 = np.sort(rng.integers(0, duration_ps, n)).astype(np.int64)
    ts2 = np.sort(rng.integers(0, duration_ps, n)).astype(np.int64)
    cross_correlate(ts1[:100], ts2[:100], 1600, 16)  # warm the JIT
    t0 = time.perf_counter()
    h = cross_correlate(ts1, ts2, 1600, 16, acquisition_s=2.0)
    elapsed = time.perf_counter() - t0
    events_per_s = 2 * n / elapsed
    assert h.counts.sum() > 0
    assert events_per_s >= 1e7, f"only {events_per_s:.3g} events/s"
