"""Scenario pipelines: spectrum, correlation shape, simulated detection and analysis.

Each preset reproduces one measurement of the source and writes CSV tables
plus a ``name=value unit`` report into the output directory.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT

from . import io
from .analysis import (
    coincidence_rate,
    cross_correlation_histogram,
    enhancement_factor,
    estimate_mode_count,
    fit_double_exponential,
    g2_zero_from_histogram,
    heralding_efficiency,
    oscillation_modulation,
    spectral_brightness,
)
from .correlation import (
    CorrelationConfig,
    CorrelationTrace,
    ModeTemplate,
    analytic_g2,
    convolve_response,
    fringe_contrast,
    g1_signal,
    oscillation_period,
    peak_fwhm,
    peak_width_vs_modes,
    predict_g2_zero,
    uniform_grid,
)
from .errors import CespdcError, ValidationError
from .montecarlo import DetectionChain, SourceRateModel, simulate_stream
from .spectral import (
    MGO_CLN_EXTRAORDINARY,
    CavityModel,
    ClusterSpectrum,
    DispersionModel,
    FilterCavity,
    PhaseMatchingEnvelope,
    cluster_stats,
    dominant_mode_frequency,
    filtered_spectrum,
    idler_fsr_for_spacing,
    joint_spectrum,
    spectral_transmission,
    suppress_side_clusters,
    transit_time_difference,
)


@dataclass(frozen=True)
class Components:
    cavity: CavityModel
    dispersion: DispersionModel
    envelope: PhaseMatchingEnvelope
    pump_frequency: float
    transit_time_diff: float
    spectrum: ClusterSpectrum
    filter: FilterCavity | None
    chain_s: DetectionChain
    chain_i: DetectionChain
    params: dict

    def correlation_config(self, spectrum: ClusterSpectrum | None = None) -> CorrelationConfig:
        cav = self.cavity
        return CorrelationConfig(spectrum if spectrum is not None else self.spectrum,
                                 cav.damping_signal, cav.damping_idler, cav.fsr_signal, cav.fsr_idler,
                                 self.transit_time_diff, self.params["spectrum"]["truncation"])

    def mode_template(self) -> ModeTemplate:
        cav = self.cavity
        return ModeTemplate(cav.damping_signal, cav.damping_idler, cav.fsr_signal,
                            self.envelope.center_signal_frequency, self.pump_frequency,
                            self.transit_time_diff)


def _cavity(p) -> CavityModel:
    cp = p["cavity"]
    fsr_s = cp["fsr_signal"]
    if (cp["fsr_idler"] is None) == (cp["cluster_spacing"] is None):
        raise ValidationError("cavity: give exactly one of fsr_idler and cluster_spacing")
    fsr_i = cp["fsr_idler"] if cp["fsr_idler"] is not None else idler_fsr_for_spacing(fsr_s, cp["cluster_spacing"])
    extra = dict(internal_loss=cp["internal_loss"], output_coupler_transmission=cp["output_coupler_transmission"])
    if cp["finesse_signal"] is None and cp["finesse_idler"] is None:
        return CavityModel.from_linewidths(fsr_s, fsr_i, cp["damping_signal"], cp["damping_idler"], **extra)
    fin_s = cp["finesse_signal"] if cp["finesse_signal"] is not None else fsr_s / cp["damping_signal"]
    fin_i = cp["finesse_idler"] if cp["finesse_idler"] is not None else fsr_i / cp["damping_idler"]
    return CavityModel(fsr_s, fsr_i, fin_s, fin_i, cp["damping_signal"], cp["damping_idler"], **extra)


def _chain(cp) -> DetectionChain:
    return DetectionChain(**cp)


def build_components(p: dict) -> Components:
    """Construct every domain object described by a validated parameter tree."""
    cavity = _cavity(p)
    dp = p["dispersion"]
    dispersion = DispersionModel(MGO_CLN_EXTRAORDINARY, dp["crystal_length"], dp["air_path_length"],
                                 dp["temperature"])
    lam_s, lam_i = p["source"]["signal_wavelength"], p["source"]["idler_wavelength"]
    if not (lam_s > 0 and lam_i > 0):
        raise ValidationError("source: wavelengths must be > 0")
    nu_s, nu_i = C_LIGHT / lam_s, C_LIGHT / lam_i
    tau0 = dp["transit_time_diff"]
    if tau0 is None:
        tau0 = transit_time_difference(dispersion, lam_s, lam_i)
    envelope = PhaseMatchingEnvelope(nu_s, p["envelope"]["fwhm"], p["envelope"]["shape"])
    sp = p["spectrum"]
    detuning = sp["detuning_signal"]
    if detuning is None:
        # half a Vernier step: two central modes sit symmetrically about exact double resonance
        detuning = (cavity.fsr_idler - cavity.fsr_signal) / 2
    spectrum = joint_spectrum(cavity, envelope, nu_s + nu_i, detuning, sp["span"], kappa=sp["kappa"],
                              gap_threshold=sp["gap_threshold"], weight_model=sp["weight_model"])
    if sp["side_cluster_suppression"] is not None and len(spectrum.clusters) > 1:
        spectrum = suppress_side_clusters(spectrum, sp["side_cluster_suppression"])
    fp = p["filter"]
    fc = None
    if fp["enabled"]:
        if spectrum.is_empty:
            raise ValidationError("filter: no modes to centre the filter on")
        fc = FilterCavity(fp["fsr"], fp["linewidth"], fp["peak_transmission"], dominant_mode_frequency(spectrum))
        if not 0 < fp["fiber_coupling"] <= 1 or not 0 < fp["reference_fiber_coupling"] <= 1:
            raise ValidationError("filter: fiber couplings must be in (0, 1]")
    rp = p["rates"]
    SourceRateModel(rp["pair_rate_per_mw"] or 0.0, 0.0, rp["duty_cycle_measurement"], rp["escape_signal"],
                    rp["escape_idler"], rp["gate_period"])
    if (rp["pair_rate_per_mw"] is None) == (rp["target_coincidence_rate_per_mw"] is None):
        raise ValidationError("rates: give exactly one of pair_rate_per_mw and target_coincidence_rate_per_mw")
    m = p["measurement"]
    if not m["pump_powers"] or any(not x > 0 for x in m["pump_powers"]):
        raise ValidationError("measurement.pump_powers: need positive powers")
    if not m["duration"] > 0:
        raise ValidationError("measurement.duration must be > 0")
    return Components(cavity, dispersion, envelope, nu_s + nu_i, tau0, spectrum, fc,
                      _chain(p["signal_chain"]), _chain(p["idler_chain"]), p)


# --- shared pipeline pieces -------------------------------------------------


def delay_pdf(comp: Components, spectrum: ClusterSpectrum | None = None) -> CorrelationTrace:
    """Unit-area delay distribution on a grid fine enough to resolve inter-cluster beats."""
    cav = comp.cavity
    reach = 5 / (2 * np.pi * min(cav.damping_signal, cav.damping_idler))
    grid = uniform_grid(reach, comp.params["grids"]["pdf_step"])
    return analytic_g2(comp.correlation_config(spectrum), grid).normalized("unit_area_pdf")


def window_fraction(pdf: CorrelationTrace, window: float) -> float:
    """Probability mass of the delay distribution within ``window`` centred on its peak."""
    center = pdf.tau_grid[np.argmax(pdf.values)]
    inside = np.abs(pdf.tau_grid - center) <= window / 2
    return float(np.sum(pdf.values[inside]) * pdf.step)


def binned_pdf_peak(pdf: CorrelationTrace, bin_width: float) -> float:
    """Largest mean density over any window of one histogram bin."""
    n = max(int(round(bin_width / pdf.step)), 1)
    cum = np.concatenate(([0.0], np.cumsum(pdf.values)))
    return float(np.max(cum[n:] - cum[:-n]) / n)


def reference_chains(comp: Components):
    """Signal and idler chains of the unfiltered setup used for rate calibration."""
    p = comp.params
    chain_s = comp.chain_s
    if comp.filter is not None:
        ratio = p["filter"]["reference_fiber_coupling"] / p["filter"]["fiber_coupling"]
        chain_s = replace(chain_s, path_transmission=min(chain_s.path_transmission * ratio, 1.0))
    return chain_s, comp.chain_i


def pair_rate_per_mw(comp: Components, pdf: CorrelationTrace) -> float:
    """Generated pairs per mW such that the windowed detected coincidence rate hits the target.

    The target refers to the unfiltered setup, optionally with a different
    idler detector efficiency. Rates are per wall-clock second, so the duty
    cycle enters the calibration.
    """
    rp = comp.params["rates"]
    if rp["pair_rate_per_mw"] is not None:
        return rp["pair_rate_per_mw"]
    chain_s, chain_i = reference_chains(comp)
    if rp["calibration_idler_efficiency"] is not None:
        chain_i = replace(chain_i, detector_efficiency=rp["calibration_idler_efficiency"])
    fw = window_fraction(pdf, comp.params["measurement"]["coincidence_window"])
    per_pair = (rp["duty_cycle_measurement"] * rp["escape_signal"] * rp["escape_idler"]
                * chain_s.survival * chain_i.survival * fw)
    if not per_pair > 0:
        raise ValidationError("rates: detection chain has zero survival, cannot calibrate")
    return rp["target_coincidence_rate_per_mw"] / per_pair


def rate_model(comp: Components, kappa: float, power: float) -> SourceRateModel:
    rp = comp.params["rates"]
    return SourceRateModel(kappa, power, rp["duty_cycle_measurement"], rp["escape_signal"],
                           rp["escape_idler"], rp["gate_period"])


@dataclass
class PointResult:
    power: float
    duration: float
    singles_signal: float
    singles_idler: float
    coincidence_rate: float  # Hz per mW, background subtracted
    g2_raw: float
    g2_dark_subtracted: float
    predicted_g2: float
    histogram: object
    fit: object
    streams: tuple = field(default=(), repr=False)


def measure_point(comp: Components, kappa: float, power: float, pdf: CorrelationTrace, duration: float,
                  seed: int, stream_id: int, chain_s=None, chain_i=None, keep_streams=False) -> PointResult:
    """Simulate one operating point and analyse it as the experiment would."""
    m = comp.params["measurement"]
    chain_s = chain_s or comp.chain_s
    chain_i = chain_i or comp.chain_i
    rates = rate_model(comp, kappa, power)
    s, i = simulate_stream(rates, chain_s, chain_i, pdf, duration, seed, stream_id=stream_id)
    hist = cross_correlation_histogram(s, i, m["bin_width"], tuple(m["tau_range"]))
    fit = fit_double_exponential(hist)
    ss, si = len(s) / duration, len(i) / duration
    duty = rates.duty_cycle_measurement
    darks = (chain_s.dark_count_rate * duty, chain_i.dark_count_rate * duty)
    raw, sub = g2_zero_from_histogram(hist, tuple(m["accidental_window"]), fit=fit,
                                      singles=(ss, si), dark_rates=darks)
    rate = coincidence_rate(hist, duration, power, m["coincidence_window"], fit.tau_peak,
                            tuple(m["accidental_window"]))
    # accidental statistics follow the in-gate rates
    pred = predict_g2_zero(rate * power / duty, binned_pdf_peak(pdf, m["bin_width"]), ss / duty, si / duty)
    return PointResult(power, duration, ss, si, rate, raw, sub, pred, hist, fit, (s, i) if keep_streams else ())


def _histogram_rows(hist):
    return [(float(x), int(n)) for x, n in zip(hist.centers, hist.counts)]


@dataclass
class ReportBundle:
    preset: str
    output_dir: Path
    metrics: dict
    files: list
    data: dict = field(default_factory=dict, repr=False)


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p


def report_header(preset: str, seed: int) -> str:
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"cespdc scenario={preset} seed={seed} generated={stamp}"


# --- presets ----------------------------------------------------------------


def spectrum_metrics(comp: Components, metrics: dict):
    stats = cluster_stats(comp.spectrum)
    metrics["clusters_count"] = (stats.clusters_count, "")
    metrics["cluster_spacing"] = (stats.cluster_spacing / 1e9, "GHz")
    metrics["modes_in_dominant_cluster"] = (stats.modes_per_cluster[stats.dominant_cluster], "")
    metrics["fsr_idler"] = (comp.cavity.fsr_idler / 1e6, "MHz")
    metrics["transit_time_diff"] = (comp.transit_time_diff * 1e12, "ps")


def run_fig2(comp: Components, seed: int, w: _Writer) -> tuple[dict, dict]:
    p = comp.params
    m = p["measurement"]
    pdf = delay_pdf(comp)
    kappa = pair_rate_per_mw(comp, pdf)
    metrics: dict = {}
    spectrum_metrics(comp, metrics)
    metrics["pair_rate_per_mw"] = (kappa, "Hz/mW")
    points = []
    for k, power in enumerate(m["pump_powers"]):
        points.append(measure_point(comp, kappa, power, pdf, m["duration"], seed, k, keep_streams=(k == 0)))
    total = points[0].histogram
    for pt in points[1:]:
        total = total + pt.histogram
    fit = fit_double_exponential(total)
    powers = np.array([pt.power for pt in points])
    rates = np.array([pt.coincidence_rate * pt.power for pt in points])
    c_slope = float(np.dot(powers, rates) / np.dot(powers, powers))
    eta_s = comp.chain_s.detector_efficiency
    rows = []
    for pt in points:
        eta_h = heralding_efficiency(pt.coincidence_rate * pt.power, pt.singles_idler, eta_s)
        rows.append((pt.power, pt.coincidence_rate * pt.power, pt.coincidence_rate, pt.singles_signal,
                     pt.singles_idler, pt.g2_raw, pt.g2_dark_subtracted, pt.predicted_g2, eta_h))
    io.write_table(rows, ("pump_power_mw", "coincidence_rate_hz", "coincidence_rate_per_mw", "singles_signal_hz",
                          "singles_idler_hz", "g2_raw", "g2_dark_subtracted", "g2_predicted",
                          "heralding_efficiency"), w.path("g2_vs_power.csv"))
    io.write_table(_histogram_rows(total), ("tau_center_s", "counts"), w.path("histogram_sum.csv"))
    for pt in points:
        io.write_table(_histogram_rows(pt.histogram), ("tau_center_s", "counts"),
                       w.path(f"histogram_{pt.power:g}mW.csv"))
    s, i = points[0].streams
    io.write_timetags(s, w.path(f"stream_signal_{points[0].power:g}mW.ttag"))
    io.write_timetags(i, w.path(f"stream_idler_{points[0].power:g}mW.ttag"))

    metrics["coincidence_rate_per_mw"] = (c_slope, "Hz/mW")
    metrics["linewidth_signal_fit"] = (fit.linewidth_signal / 1e6, "MHz")
    metrics["linewidth_idler_fit"] = (fit.linewidth_idler / 1e6, "MHz")
    metrics["linewidth_signal_fit_sigma"] = (fit.uncertainties["linewidth_signal"] / 1e6, "MHz")
    metrics["linewidth_idler_fit_sigma"] = (fit.uncertainties["linewidth_idler"] / 1e6, "MHz")
    metrics["fit_reduced_chi2"] = (fit.goodness, "")
    for row in rows:
        tag = f"{row[0]:g}mW"
        metrics[f"g2_raw_{tag}"] = (row[5], "")
        metrics[f"g2_dark_subtracted_{tag}"] = (row[6], "")
        metrics[f"g2_predicted_{tag}"] = (row[7], "")
        metrics[f"heralding_efficiency_{tag}"] = (row[8], "")
        metrics[f"singles_idler_{tag}"] = (row[4], "Hz")
    return metrics, {"points": points, "fit": fit, "pdf": pdf, "kappa": kappa}


def g1_grid(p):
    g = p["grids"]
    n = int(round((g["g1_stop"] - g["g1_start"]) / g["g1_step"]))
    return g["g1_start"] + g["g1_step"] * np.arange(n + 1)


def run_fig3(comp: Components, seed: int, w: _Writer) -> tuple[dict, dict]:
    p = comp.params
    m = p["measurement"]
    cav = comp.cavity
    metrics: dict = {}
    spectrum_metrics(comp, metrics)
    period = 1 / cav.fsr_signal
    resp = p["modes"]["response_fwhm"]
    # central region of the analytic correlation, 1 ps grid
    grid = uniform_grid(6 * period, 1e-12, comp.transit_time_diff / 2)
    trace = analytic_g2(comp.correlation_config(), grid, check_coverage=False).normalized("peak")
    smeared = convolve_response(trace, resp)
    io.write_trace(trace, w.path("g2_analytic.csv"))
    io.write_trace(smeared, w.path("g2_convolved.csv"))
    # the tau > tau0/2 flank beats at the signal FSR; smoothing removes the 22 ps cluster ripple
    right = smeared.tau_grid >= comp.transit_time_diff / 2
    flank = CorrelationTrace(smeared.tau_grid[right], smeared.values[right], smeared.normalization)
    metrics["oscillation_period"] = (oscillation_period(flank, period) * 1e9, "ns")
    metrics["peak_fwhm_convolved"] = (peak_fwhm(smeared, comp.transit_time_diff / 2) * 1e12, "ps")

    g1 = g1_signal(comp.spectrum, cav.damping_signal, g1_grid(p))
    g1_noisy = g1_signal(comp.spectrum, cav.damping_signal, g1_grid(p), p["g1"]["background_fraction"])
    io.write_trace(g1, w.path("g1_signal.csv"), column="dt_s")
    io.write_trace(g1_noisy, w.path("g1_signal_with_background.csv"), column="dt_s")
    spacing = cluster_stats(comp.spectrum).cluster_spacing
    metrics["g1_period"] = (oscillation_period(g1, 1 / spacing) * 1e12, "ps")
    metrics["g1_contrast"] = (fringe_contrast(g1), "")
    metrics["g1_peak_visibility_with_background"] = (float(g1_noisy.values.max()), "")

    pdf = delay_pdf(comp)
    kappa = pair_rate_per_mw(comp, pdf)
    power = m["pump_powers"][0]
    pt = measure_point(comp, kappa, power, pdf, m["duration"], seed, 0, keep_streams=True)
    s, i = pt.streams
    fine = cross_correlation_histogram(s, i, m["fine_bin_width"],
                                       (pt.fit.tau_peak - m["fine_half_range"], pt.fit.tau_peak + m["fine_half_range"]))
    depth, sigma = oscillation_modulation(fine, pt.fit, period, m["modulation_exclusion"])
    io.write_table(_histogram_rows(fine), ("tau_center_s", "counts"), w.path("histogram_fine.csv"))
    metrics["modulation_depth"] = (depth, "")
    metrics["modulation_depth_sigma"] = (sigma, "")
    return metrics, {"trace": trace, "smeared": smeared, "g1": g1, "point": pt}


def run_fig4(comp: Components, seed: int, w: _Writer) -> tuple[dict, dict]:
    p = comp.params
    m = p["measurement"]
    cav = comp.cavity
    fc = comp.filter
    if fc is None:
        raise ValidationError("fig4_filtered requires filter.enabled: true")
    fp = p["filter"]
    metrics: dict = {}
    spectrum_metrics(comp, metrics)
    t_spec = spectral_transmission(comp.spectrum, fc)
    fsp = filtered_spectrum(comp.spectrum, fc)
    io.write_spectrum(fsp, w.path("spectrum_filtered.csv"))
    pdf_ref = delay_pdf(comp)
    pdf_filt = delay_pdf(comp, fsp)
    kappa = pair_rate_per_mw(comp, pdf_ref)
    metrics["pair_rate_per_mw"] = (kappa, "Hz/mW")
    metrics["filter_spectral_transmission"] = (t_spec, "")
    metrics["filter_mean_transmission"] = (fc.mean_transmission(), "")

    power = m["pump_powers"][0]
    chain_f = replace(comp.chain_s,
                      extra_filter_transmission=comp.chain_s.extra_filter_transmission * t_spec,
                      background_rate_per_mw=comp.chain_s.background_rate_per_mw * fc.mean_transmission())
    filt = measure_point(comp, kappa, power, pdf_filt, m["duration"], seed, 0, chain_s=chain_f, keep_streams=True)
    ref_s, ref_i = reference_chains(comp)
    ref = measure_point(comp, kappa, power, pdf_ref, m["reference_duration"], seed, 1, chain_s=ref_s, chain_i=ref_i)
    coupling = fp["fiber_coupling"] / fp["reference_fiber_coupling"]
    corrected = filt.coincidence_rate / fp["peak_transmission"] / coupling
    reduction = ref.coincidence_rate / corrected
    metrics["coincidence_rate_filtered_per_mw"] = (filt.coincidence_rate, "Hz/mW")
    metrics["coincidence_rate_reference_per_mw"] = (ref.coincidence_rate, "Hz/mW")
    metrics["coincidence_reduction"] = (reduction, "")
    metrics["g2_raw_filtered"] = (filt.g2_raw, "")

    s, i = filt.streams
    period = 1 / cav.fsr_signal
    fine = cross_correlation_histogram(s, i, m["fine_bin_width"],
                                       (filt.fit.tau_peak - m["fine_half_range"], filt.fit.tau_peak + m["fine_half_range"]))
    depth, sigma = oscillation_modulation(fine, filt.fit, period, m["modulation_exclusion"])
    metrics["modulation_depth"] = (depth, "")
    metrics["modulation_depth_sigma"] = (sigma, "")
    metrics["modulation_excess"] = (max(depth - 2 * sigma, 0.0), "")
    io.write_table(_histogram_rows(filt.histogram), ("tau_center_s", "counts"), w.path("histogram_filtered.csv"))
    io.write_table(_histogram_rows(fine), ("tau_center_s", "counts"), w.path("histogram_filtered_fine.csv"))
    io.write_table(_histogram_rows(ref.histogram), ("tau_center_s", "counts"), w.path("histogram_reference.csv"))

    grid = g1_grid(p)
    g1 = g1_signal(fsp, cav.damping_signal, grid)
    g1_noisy = g1_signal(fsp, cav.damping_signal, grid, p["g1"]["background_fraction"])
    io.write_trace(g1, w.path("g1_filtered.csv"), column="dt_s")
    io.write_trace(g1_noisy, w.path("g1_filtered_with_background.csv"), column="dt_s")
    metrics["g1_filtered_min"] = (float(g1.values.min()), "")
    metrics["g1_filtered_with_background_mean"] = (float(g1_noisy.values.mean()), "")

    # brightness and enhancement from the filtered coincidence rate
    bp = p["brightness"]
    linewidth = bp["linewidth_mhz"] or (cav.damping_signal + cav.damping_idler) / 2 / 1e6
    rp = p["rates"]
    eta_s, eta_i = comp.chain_s.detector_efficiency, comp.chain_i.detector_efficiency
    detected = spectral_brightness(filt.coincidence_rate, 1.0, linewidth)
    in_fiber = detected / (eta_s * eta_i)
    losses = (comp.chain_s.path_transmission, comp.chain_i.path_transmission, fp["peak_transmission"],
              rp["escape_signal"], rp["escape_idler"], rp["duty_cycle_measurement"])
    corrected_b = in_fiber / float(np.prod(losses))
    single_pass = bp["single_pass_rate_per_mw"] / bp["single_pass_bandwidth_mhz"]
    b = enhancement_factor(detected, single_pass,
                           [fp["peak_transmission"], rp["escape_signal"], rp["escape_idler"],
                            rp["duty_cycle_measurement"], eta_i / bp["single_pass_idler_efficiency"]])
    metrics["brightness_linewidth"] = (linewidth, "MHz")
    metrics["spectral_brightness_in_fiber"] = (in_fiber, "pairs/(s*mW*MHz)")
    metrics["spectral_brightness_corrected"] = (corrected_b, "pairs/(s*mW*MHz)")
    metrics["enhancement_factor"] = (b, "")
    return metrics, {"filtered": filt, "reference": ref, "g1": g1, "g1_noisy": g1_noisy, "fine": fine}


def run_fig5(comp: Components, seed: int, w: _Writer) -> tuple[dict, dict]:
    mp = comp.params["modes"]
    template = comp.mode_template()
    counts = [int(n) for n in mp["counts"]]
    bare = peak_width_vs_modes(counts, template)
    smeared = peak_width_vs_modes(counts, template, mp["response_fwhm"])
    rows = [(n, wb, ws) for (n, wb), (_, ws) in zip(bare, smeared)]
    io.write_table(rows, ("n_modes", "fwhm_s", "fwhm_convolved_s"), w.path("peak_width_vs_modes.csv"))
    metrics: dict = {}
    for n, wb, ws in rows:
        metrics[f"peak_fwhm_{n}_modes"] = (wb * 1e12, "ps")
        metrics[f"peak_fwhm_convolved_{n}_modes"] = (ws * 1e12, "ps")
    n_est = estimate_mode_count(mp["measured_peak_fwhm"], mp["response_fwhm"], template, mp["max_modes"])
    metrics["estimated_mode_count"] = (n_est, "")
    return metrics, {"rows": rows}


def run_custom(comp: Components, seed: int, w: _Writer) -> tuple[dict, dict]:
    """Custom trees run the unfiltered pipeline, or the filtered one when a filter is enabled."""
    return (run_fig4 if comp.filter is not None else run_fig2)(comp, seed, w)


RUNNERS = {
    "fig2_unfiltered": run_fig2,
    "fig3_oscillations": run_fig3,
    "fig4_filtered": run_fig4,
    "fig5_modes": run_fig5,
    "custom": run_custom,
}


def run_scenario(cfg) -> ReportBundle:
    """Run a scenario and write its tables and ``report.txt`` to ``cfg.output_dir``."""
    comp = build_components(cfg.params)
    w = _Writer(Path(cfg.output_dir))
    io.write_spectrum(comp.spectrum, w.path("spectrum.csv"))
    try:
        metrics, data = RUNNERS[cfg.preset](comp, cfg.seed, w)
    except CespdcError as exc:
        exc.args = (f"scenario {cfg.preset}: {exc}",) + exc.args[1:]
        raise
    io.write_report(metrics, w.path("report.txt"), header=report_header(cfg.preset, cfg.seed))
    return ReportBundle(cfg.preset, Path(cfg.output_dir), metrics, w.files, data)
