#!/usr/bin/env python3
"""Full two-emitter interference run: simulate both wave-plate settings,
correlate the split-arm detectors, fit the histogram pair, print visibility.

Defaults reproduce the headline configuration (V = 0.96, tau_c = 115 ps,
signal purities 0.91/0.94); the post-selected visibility comes out near 1/3.
Histograms land as CSV next to the report so they can be plotted directly.

    python3 scripts/run_hom_experiment.py --duration-s 0.05 --outdir out/
"""

import argparse
import os
import sys
import time

import numpy as np

from homsim.correlator import cross_correlate, histogram_to_csv, normalize_cw
from homsim.fitting import fit_hom_histograms
from homsim.model import InterferenceModel, hom_visibility
from homsim.photon_sim import (
    DetectorSpec,
    EmitterSpec,
    ExcitationSpec,
    detect,
    fiber_split,
    generate_stream,
    interfere,
)


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration-s", type=float, default=0.05)
    ap.add_argument("--rate-hz", type=float, default=5e7,
                    help="CW excitation rate per emitter")
    ap.add_argument("--overlap-v", type=float, default=0.96)
    ap.add_argument("--tau-c-ps", type=float, default=115.0)
    ap.add_argument("--rho-a", type=float, default=0.91)
    ap.add_argument("--rho-b", type=float, default=0.94)
    ap.add_argument("--lifetime-ps", type=float, default=100.0)
    ap.add_argument("--max-lag-ps", type=int, default=6000)
    ap.add_argument("--bin-ps", type=int, default=16)
    ap.add_argument("--det-jitter-fwhm-ps", type=float, default=0.0,
                    help="per-detector timing jitter; washes out the dip")
    ap.add_argument("--irf-sigma-ps", type=float, default=0.0,
                    help="coincidence-lag IRF sigma assumed by the fit")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--outdir", default="hom_out")
    return ap.parse_args()


def main():
    args = parse_args()
    os.makedirs(args.outdir, exist_ok=True)
    lam_ps = args.rate_hz * 1e-12
    em_a = EmitterSpec(id="dot-A", wavelength_nm=1250.40, lifetime_ps=args.lifetime_ps,
                       coherence_time_ps=args.tau_c_ps, signal_purity_rho=args.rho_a)
    em_b = EmitterSpec(id="dot-B", wavelength_nm=1250.40, lifetime_ps=args.lifetime_ps,
                       coherence_time_ps=args.tau_c_ps, signal_purity_rho=args.rho_b)
    exc = ExcitationSpec(mode="cw", duration_s=args.duration_s,
                         cw_rate_hz=args.rate_hz, seed=args.seed)
    m = InterferenceModel(overlap_v=args.overlap_v, tau_c_ps=args.tau_c_ps,
                          rho_a=args.rho_a, rho_b=args.rho_b)

    print(f"duration {args.duration_s} s, CW rate {args.rate_hz:.3g} Hz/emitter, "
          f"V = {args.overlap_v}, tau_c = {args.tau_c_ps} ps")
    hists = {}
    for hwp in ("parallel", "orthogonal"):
        t0 = time.monotonic()
        sa = generate_stream(em_a, exc, "A")
        sb = generate_stream(em_b, exc, "B")
        arm_c, _ = interfere(sa, sb, hwp, m, seed=args.seed)
        s1, s2 = fiber_split(arm_c, seed=args.seed)
        det = DetectorSpec(jitter_fwhm_ps=args.det_jitter_fwhm_ps)
        d1 = detect(s1, det, args.duration_s, 1, seed=args.seed)
        d2 = detect(s2, det, args.duration_s, 2, seed=args.seed)
        h = normalize_cw(cross_correlate(d1["time_ps"], d2["time_ps"],
                                         args.max_lag_ps, args.bin_ps,
                                         acquisition_s=args.duration_s))
        hists[hwp] = h
        path = os.path.join(args.outdir, f"g2_{hwp}.csv")
        histogram_to_csv(h, path)
        k0 = h.nbins // 2
        print(f"  {hwp:>10}: {sa.times_ps.size + sb.times_ps.size} photons, "
              f"{int(h.counts.sum())} coincidences, g2(0) ~ "
              f"{float(np.mean(h.normalized[k0 - 1:k0 + 2])):.3f} "
              f"[{time.monotonic() - t0:.1f} s] -> {path}")

    fit = fit_hom_histograms(hists["parallel"], hists["orthogonal"],
                             rho_a=args.rho_a, rho_b=args.rho_b,
                             irf_sigma_ps=args.irf_sigma_ps)
    print(f"fit: V = {fit.overlap_v:.4f} +- {fit.overlap_v_err:.4f}, "
          f"tau_c = {fit.tau_c_ps:.1f} +- {fit.tau_c_err:.1f} ps")
    print(f"     g_par(0) = {fit.g_parallel_zero:.4f}, "
          f"g_orth(0) = {fit.g_orthogonal_zero:.4f}")
    print(f"visibility = {fit.visibility:.4f}   "
          f"(for comparison, zero-delay levels 0.96/0.72 give "
          f"{hom_visibility(0.96, 0.72):.4f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
