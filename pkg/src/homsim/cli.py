"""Command-line pipeline: simulate, correlate, fit, tune, budget, report.

Exit codes are part of the contract: 0 success, 2 invalid input,
3 physically infeasible target, 4 numerical non-convergence.  Every output
artifact gets a ``.meta`` sidecar carrying the originating config digest so
the report stage can verify that a histogram, fit, and simulation actually
belong together.  Nothing here writes timestamps: rerunning any stage with
the same inputs must produce byte-identical files.
"""

from __future__ import annotations

import os
import sys

import click

from . import __version__
from .budget import budget_report
from .config import ConfigError, load_config
from .correlator import (
    cross_correlate,
    histogram_from_csv,
    histogram_to_csv,
    normalize_cw,
    normalize_pulsed,
    pulsed_g2_zero,
)
from .fitting import FitConvergenceError, fit_hom_histograms
from .photon_sim import run_experiment
from .reporting import read_kv, read_sidecar, write_kv, write_sidecar
from .spectra import detuning_uev
from .ttag import read_ttag
from .tuning import DotThermalState, load_calibration, match_resonance, match_trace_to_csv

EXIT_INVALID_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _gather_digests(*paths):
    """Collect config digests from the sidecars of the given artifacts."""
    digests = {}
    for p in paths:
        meta = read_sidecar(p)
        if meta and "config_digest" in meta:
            digests[p] = meta["config_digest"]
    return digests


def _single_digest(digests: dict) -> str:
    values = sorted(set(digests.values()))
    if len(values) > 1:
        _fail(
            EXIT_INVALID_INPUT,
            "config digest mismatch across inputs: "
            + ", ".join(f"{os.path.basename(k)}={v[:12]}" for k, v in sorted(digests.items())),
        )
    return values[0] if values else "unknown"


@click.group()
@click.version_option(version=__version__, prog_name="homsim")
def main():
    """Two-emitter photon-interference simulation and analysis."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def simulate(config_path):
    """Run the full Monte-Carlo experiment described by CONFIG_PATH."""
    try:
        cfg = load_config(config_path)
        for out in (cfg.out_detector1, cfg.out_detector2, cfg.out_metadata):
            _ensure_parent(out)
        result = run_experiment(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        _fail(EXIT_INVALID_INPUT, str(exc))
    click.echo(
        f"simulate: {result.clicks_det1} clicks -> {result.detector1_path}, "
        f"{result.clicks_det2} clicks -> {result.detector2_path}"
    )
    click.echo(f"simulate: metadata -> {result.metadata_path}")


@main.command()
@click.argument("file1", type=click.Path(exists=True, dir_okay=False))
@click.argument("file2", type=click.Path(exists=True, dir_okay=False))
@click.option("--bin-ps", default=16, show_default=True, help="Histogram bin width (ps).")
@click.option("--max-lag-ps", default=16000, show_default=True, help="Histogram half-span (ps).")
@click.option(
    "--normalize",
    type=click.Choice(["cw", "pulsed"]),
    default=None,
    help="Normalization mode for the g2 column.",
)
@click.option("--rep-ps", default=None, type=int, help="Repetition period (ps), pulsed mode.")
@click.option("--n-side-peaks", default=4, show_default=True, help="Side peaks for pulsed g2(0).")
@click.option("-o", "--output", default="histogram.csv", show_default=True)
def correlate(file1, file2, bin_ps, max_lag_ps, normalize, rep_ps, n_side_peaks, output):
    """Cross-correlate two timestamp files into a histogram CSV."""
    try:
        rec1 = read_ttag(file1)
        rec2 = read_ttag(file2)
        digests = _gather_digests(file1, file2)
        digest = _single_digest(digests)
        acquisition = None
        durations = set()
        for p in (file1, file2):
            meta = read_sidecar(p)
            if meta and "duration_s" in meta:
                durations.add(float(meta["duration_s"]))
        if len(durations) == 1:
            acquisition = durations.pop()
        hist = cross_correlate(
            rec1["time_ps"],
            rec2["time_ps"],
            max_lag_ps=max_lag_ps,
            bin_width_ps=bin_ps,
            acquisition_s=acquisition,
        )
        sidecar = {
            "stage": "correlate",
            "config_digest": digest,
            "bin_width_ps": bin_ps,
            "max_lag_ps": max_lag_ps,
            "events_1": int(rec1.size),
            "events_2": int(rec2.size),
            "total_pairs": int(hist.counts.sum()),
        }
        if normalize == "cw":
            hist = normalize_cw(hist)
        elif normalize == "pulsed":
            if not rep_ps:
                _fail(EXIT_INVALID_INPUT, "--normalize pulsed requires --rep-ps")
            g2 = pulsed_g2_zero(hist, rep_period_ps=rep_ps, n_side_peaks=n_side_peaks)
            hist = normalize_pulsed(hist, rep_period_ps=rep_ps, n_side_peaks=n_side_peaks)
            sidecar["g2_zero"] = g2.value
            sidecar["g2_zero_sigma"] = g2.sigma
            click.echo(f"g2_zero = {g2.value!r}")
            click.echo(f"g2_zero_sigma = {g2.sigma!r}")
        _ensure_parent(output)
        histogram_to_csv(hist, output)
        write_sidecar(output, sidecar)
    except (ValueError, OSError) as exc:
        _fail(EXIT_INVALID_INPUT, str(exc))
    click.echo(f"correlate: {int(hist.counts.sum())} pairs -> {output}")


@main.command("fit-hom")
@click.argument("parallel_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("orthogonal_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--rho-a", default=1.0, show_default=True, help="Signal purity of emitter A.")
@click.option("--rho-b", default=1.0, show_default=True, help="Signal purity of emitter B.")
@click.option("--irf-sigma-ps", default=0.0, show_default=True, help="Gaussian IRF sigma (ps).")
@click.option("-o", "--output", default="hom_fit.report", show_default=True)
def fit_hom(parallel_csv, orthogonal_csv, rho_a, rho_b, irf_sigma_ps, output):
    """Joint fit of parallel/orthogonal histograms: V, tau_c, visibility."""
    try:
        par = histogram_from_csv(parallel_csv)
        orth = histogram_from_csv(orthogonal_csv)
        # The two histograms come from *different* runs (the wave-plate
        # setting differs), so each contributes its own config digest.
        digests = _gather_digests(parallel_csv, orthogonal_csv)
        fit = fit_hom_histograms(par, orth, rho_a=rho_a, rho_b=rho_b, irf_sigma_ps=irf_sigma_ps)
    except FitConvergenceError as exc:
        _fail(EXIT_NO_CONVERGENCE, str(exc))
    except (ValueError, OSError) as exc:
        _fail(EXIT_INVALID_INPUT, str(exc))
    report = {
        "stage": "fit-hom",
        "config_digest_parallel": digests.get(parallel_csv, "unknown"),
        "config_digest_orthogonal": digests.get(orthogonal_csv, "unknown"),
        "overlap_v": fit.overlap_v,
        "overlap_v_err": fit.overlap_v_err,
        "tau_c_ps": fit.tau_c_ps,
        "tau_c_err": fit.tau_c_err,
        "g0_a": fit.g0_a,
        "g0_b": fit.g0_b,
        "recovery_ps": fit.recovery_ps,
        "rho_a": rho_a,
        "rho_b": rho_b,
        "irf_sigma_ps": irf_sigma_ps,
        "g_parallel_zero": fit.g_parallel_zero,
        "g_orthogonal_zero": fit.g_orthogonal_zero,
        "visibility": fit.visibility,
        "cost": fit.cost,
        "n_points": fit.n_points,
    }
    _ensure_parent(output)
    write_kv(output, report)
    click.echo(f"overlap_v = {fit.overlap_v!r} +- {fit.overlap_v_err!r}")
    click.echo(f"tau_c_ps = {fit.tau_c_ps!r} +- {fit.tau_c_err!r}")
    click.echo(f"visibility = {fit.visibility!r}")
    click.echo(f"fit-hom: report -> {output}")


@main.command()
@click.argument("calibration_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("dot_a_nm", type=float)
@click.argument("dot_b_nm", type=float)
@click.option("--tol-uev", default=3.0, show_default=True)
@click.option("--max-iters", default=30, show_default=True)
@click.option("--trace", default="tune_trace.csv", show_default=True)
@click.option("-o", "--output", default="tune.report", show_default=True)
def tune(calibration_path, dot_a_nm, dot_b_nm, tol_uev, max_iters, trace, output):
    """Match dot A to dot B by heating, via bisection on laser power."""
    try:
        cal, _bg = load_calibration(calibration_path)
        d_a = DotThermalState(dot_a_nm, device_id="dot-A")
        d_b = DotThermalState(dot_b_nm, device_id="dot-B")
        result = match_resonance(d_a, d_b, cal, tol_uev=tol_uev, max_iters=max_iters)
        _ensure_parent(trace)
        match_trace_to_csv(trace, result)
        report = {
            "stage": "tune",
            "feasible": result.feasible,
            "converged": result.converged,
            "power_mw": result.power_mw,
            "detuning_uev": result.achieved_detuning_uev,
            "iterations": result.iterations,
            "tol_uev": tol_uev,
            "dot_a_nm": dot_a_nm,
            "dot_b_nm": dot_b_nm,
            "initial_detuning_uev": detuning_uev(dot_a_nm, dot_b_nm),
            "message": result.message,
        }
        _ensure_parent(output)
        write_kv(output, report)
    except (ValueError, OSError) as exc:
        _fail(EXIT_INVALID_INPUT, str(exc))
    click.echo(f"power_mw = {result.power_mw!r}")
    click.echo(f"detuning_uev = {result.achieved_detuning_uev!r}")
    click.echo(f"tune: trace -> {trace}, report -> {output}")
    if not result.feasible:
        _fail(EXIT_INFEASIBLE, result.message)
    if not result.converged:
        _fail(EXIT_NO_CONVERGENCE, result.message)


@main.command()
@click.option("--tau-on-a", default=1120.0, show_default=True, help="Dot A lifetime (ps).")
@click.option("--tau-on-b", default=1060.0, show_default=True, help="Dot B lifetime (ps).")
@click.option("--tau-off", default=3200.0, show_default=True, help="Reference lifetime (ps).")
@click.option("--rate-a", default=6000.0, show_default=True, help="Dot A count rate (Hz).")
@click.option("--rate-b", default=7800.0, show_default=True, help="Dot B count rate (Hz).")
@click.option("--rep-rate", default=5e6, show_default=True, help="Excitation rate (Hz).")
@click.option("-o", "--output", default="budget.report", show_default=True)
def budget(tau_on_a, tau_on_b, tau_off, rate_a, rate_b, rep_rate, output):
    """Efficiency budget: beta factors, system chain, collection efficiency."""
    try:
        report = budget_report(
            tau_on_a_ps=tau_on_a,
            tau_on_b_ps=tau_on_b,
            tau_off_ps=tau_off,
            count_rate_a_hz=rate_a,
            count_rate_b_hz=rate_b,
            rep_rate_hz=rep_rate,
        )
    except ValueError as exc:
        _fail(EXIT_INVALID_INPUT, str(exc))
    report = {"stage": "budget", **report}
    _ensure_parent(output)
    write_kv(output, report)
    for key in ("beta.dot_a", "beta.dot_b", "system_efficiency",
                "collection.dot_a", "collection.dot_b"):
        click.echo(f"{key} = {report[key]!r}")
    click.echo(f"budget: report -> {output}")


_REPORT_SECTIONS = ("simulate", "budget", "fit", "tune")


@main.command()
@click.option("--simulate-meta", "simulate_meta", default=None, type=click.Path(dir_okay=False))
@click.option("--budget-report", "budget_path", default=None, type=click.Path(dir_okay=False))
@click.option("--fit-report", "fit_path", default=None, type=click.Path(dir_okay=False))
@click.option("--tune-report", "tune_path", default=None, type=click.Path(dir_okay=False))
@click.option("-o", "--output", default="consolidated.report", show_default=True)
def report(simulate_meta, budget_path, fit_path, tune_path, output):
    """Aggregate stage reports into one document, cross-checking digests."""
    sections = {
        "simulate": simulate_meta,
        "budget": budget_path,
        "fit": fit_path,
        "tune": tune_path,
    }
    out = {"stage": "report"}
    missing = [name for name, path in sections.items() if path and not os.path.exists(path)]
    if missing:
        _fail(
            EXIT_INVALID_INPUT,
            "missing inputs: " + ", ".join(f"{m} ({sections[m]})" for m in sorted(missing)),
        )
    try:
        for name, path in sections.items():
            if path is None:
                out[f"section.{name}"] = "absent"
                continue
            data = read_kv(path)
            out[f"section.{name}"] = "present"
            for k, v in data.items():
                out[f"{name}.{k}"] = v
    except (ValueError, OSError) as exc:
        _fail(EXIT_INVALID_INPUT, str(exc))

    # Cross-check: the simulation run feeding the fit must be one of the two
    # runs the fit actually consumed (parallel or orthogonal leg).
    sim_digest = out.get("simulate.config_digest")
    fit_digests = {
        out.get("fit.config_digest_parallel"),
        out.get("fit.config_digest_orthogonal"),
        out.get("fit.config_digest"),
    } - {None, "unknown"}
    if sim_digest not in (None, "unknown"):
        if fit_digests and sim_digest not in fit_digests:
            _fail(
                EXIT_INVALID_INPUT,
                f"config digest mismatch: simulation {sim_digest[:12]} is not "
                "among the runs the fit consumed",
            )
        out["config_digest"] = sim_digest
    else:
        out["config_digest"] = "unknown"
    if "fit.visibility" in out:
        out["visibility"] = out["fit.visibility"]
    _ensure_parent(output)
    write_kv(output, out)
    click.echo(f"report: -> {output}")


if __name__ == "__main__":
    main()
