import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cespdc.analysis import (
    FitResult,
    Histogram,
    SourceMetrics,
    coincidence_rate,
    cross_correlation_histogram,
    double_exponential,
    enhancement_factor,
    escape_efficiency,
    fit_double_exponential,
    g2_zero_from_histogram,
    heralding_efficiency,
    oscillation_modulation,
    spectral_brightness,
    visibility_from_fringes,
)
from cespdc.correlation import single_mode_g2, uniform_grid
from cespdc.errors import (
    CoverageError,
    DomainError,
    FitDegenerateError,
    RangeError,
    ValidationError,
)
from cespdc.montecarlo import DetectionChain, SourceRateModel, TimeTagStream, simulate_stream
from cespdc.scenarios import delay_pdf, pair_rate_per_mw, rate_model

GS, GI = 2.9e6, 1.7e6


def _brute_histogram(ts, ti, bw_ps, lo_ps, n):
    counts = np.zeros(n, dtype=np.int64)
    for a in ts:
        for b in ti:
            k = int(np.floor((b - a - lo_ps) / bw_ps))
            if 0 <= k < n:
                counts[k] += 1
    return counts


sorted_ps = st.lists(st.integers(0, 50_000), max_size=40, unique=True).map(sorted)


@settings(max_examples=60, deadline=None)
@given(sorted_ps, sorted_ps, st.integers(1, 5_000), st.integers(-20_000, 0), st.integers(1, 30))
def test_histogram_matches_brute_force(ts, ti, bw_ps, lo_ps, n):
    hist = cross_correlation_histogram(np.array(ts, dtype=np.int64), np.array(ti, dtype=np.int64),
                                       bw_ps * 1e-12, (lo_ps * 1e-12, (lo_ps + n * bw_ps) * 1e-12), chunk=7)
    assert np.array_equal(hist.counts, _brute_histogram(ts, ti, bw_ps, lo_ps, n))
    assert hist.total_starts == len(ts)


def test_histogram_three_events():
    ts = np.array([0, 1000, 5000])
    ti = np.array([500, 1200, 9000])
    hist = cross_correlation_histogram(ts, ti, 1e-9, (-10e-9, 10e-9))
    # pairs: 500, 1200, 9000, -500, 200, 8000, -4500, -3800, 4000 ps
    expected = np.zeros(20, dtype=int)
    for tau in (500, 1200, 9000, -500, 200, 8000, -4500, -3800, 4000):
        expected[(tau + 10_000) // 1000] += 1
    assert np.array_equal(hist.counts, expected)


def test_histogram_errors():
    with pytest.raises(RangeError):
        cross_correlation_histogram(np.array([1]), np.array([2]), 0.0)
    with pytest.raises(RangeError):
        cross_correlation_histogram(np.array([1]), np.array([2]), 1e-9, (1e-9, -1e-9))
    empty = cross_correlation_histogram(np.array([], dtype=np.int64), np.array([5]), 1e-9, (-5e-9, 5e-9))
    assert empty.counts.sum() == 0


def test_uncorrelated_streams_flat(rng):
    dur = 10.0
    ts = np.unique(rng.integers(0, int(dur * 1e12), 200_000))
    ti = np.unique(rng.integers(0, int(dur * 1e12), 200_000))
    hist = cross_correlation_histogram(ts, ti, 10e-9, (-2.5e-6, 2.5e-6))
    mean = hist.counts.mean()
    assert np.all(np.abs(hist.counts - mean) < 4 * np.sqrt(mean) + 1)
    # zero-amplitude model pinned to the bin at tau = 0
    zero = float(hist.counts[hist.n_bins // 2])
    fit = FitResult(GS, GI, 0.0, zero, hist.centers[hist.n_bins // 2], {}, 0.0, 0)
    raw, sub = g2_zero_from_histogram(hist, (1.5e-6, 2.5e-6), fit=fit)
    assert abs(raw - 1) < 4 * np.sqrt(mean) / mean
    assert sub == raw


def _synthetic_hist(rng, amp, bg, gs, gi, bw=10e-9, tp=0.0):
    hist = Histogram(bw, -2.5e-6, np.zeros(500))
    fit = FitResult(gs, gi, amp, bg, tp, {}, 0.0, 0)
    lam = double_exponential(fit, hist.centers)
    return Histogram(bw, -2.5e-6, rng.poisson(lam))


def test_fit_recovers_linewidths_on_simulation():
    tau = uniform_grid(5 / (2 * np.pi * GI), 0.1e-9)
    pdf = single_mode_g2(GS, GI, tau).normalized("unit_area_pdf")
    chain = DetectionChain(1.0, 1.0, dark_count_rate=2000.0, jitter_fwhm=484e-12)
    rates = SourceRateModel(20_000.0, 1.0, duty_cycle_measurement=1.0)
    good = 0
    seeds = range(20)
    for seed in seeds:
        s, i = simulate_stream(rates, chain, chain, pdf, 0.6, seed=seed)
        fit = fit_double_exponential(cross_correlation_histogram(s, i, 10e-9))
        ok_s = abs(fit.linewidth_signal / GS - 1) < 0.05
        ok_i = abs(fit.linewidth_idler / GI - 1) < 0.05
        good += ok_s and ok_i
    assert good >= 0.95 * len(seeds)


def test_fit_symmetric_histogram(rng):
    hist = _synthetic_hist(rng, 2000.0, 50.0, 2e6, 2e6, tp=35e-9)
    fit = fit_double_exponential(hist)
    u = fit.uncertainties
    diff = abs(fit.linewidth_signal - fit.linewidth_idler)
    assert diff < 3 * np.hypot(u["linewidth_signal"], u["linewidth_idler"])
    assert fit.tau_peak == pytest.approx(35e-9, abs=10e-9)


def test_fit_flat_histogram_degenerate(rng):
    hist = Histogram(10e-9, -2.5e-6, rng.poisson(100.0, 500))
    with pytest.raises(FitDegenerateError):
        fit_double_exponential(hist)
    with pytest.raises(FitDegenerateError):
        fit_double_exponential(Histogram(10e-9, 0.0, [0, 100, 0]))


def test_g2_dark_subtraction(rng):
    hist = _synthetic_hist(rng, 3000.0, 100.0, GS, GI)
    fit = fit_double_exponential(hist)
    raw, sub = g2_zero_from_histogram(hist, fit=fit, singles=(1e4, 1e3), dark_rates=(0.0, 0.0))
    assert raw == sub
    prev = raw
    for dark_i in (100.0, 300.0, 600.0):
        raw2, sub2 = g2_zero_from_histogram(hist, fit=fit, singles=(1e4, 1e3), dark_rates=(250.0, dark_i))
        assert raw2 == raw
        assert sub2 >= raw2 and sub2 > prev
        prev = sub2
    with pytest.raises(DomainError):
        g2_zero_from_histogram(hist, fit=fit, singles=(1e4, 1e3), dark_rates=(2e4, 0.0))
    with pytest.raises(ValidationError):
        g2_zero_from_histogram(hist, fit=fit, peak="mean")


def test_coincidence_rate_basics():
    counts = np.full(500, 10)
    counts[245:255] += 100
    hist = Histogram(10e-9, -2.5e-6, counts)
    assert coincidence_rate(hist, 10.0, tau_peak=0.0) == pytest.approx(100.0)
    assert coincidence_rate(hist, 10.0, 2.0, tau_peak=0.0) == pytest.approx(50.0)
    with pytest.raises(RangeError):
        coincidence_rate(hist, 0.0)
    with pytest.raises(RangeError):
        coincidence_rate(hist, 1.0, window=6e-6, tau_peak=0.0)


def test_heralding_efficiency_values():
    assert heralding_efficiency(0.0, 1000.0, 0.6) == 0.0
    assert heralding_efficiency(100.0, 1282.0, 0.6) == pytest.approx(0.13, abs=0.001)
    with pytest.raises(DomainError):
        heralding_efficiency(1.0, 0.0, 0.6)


def test_heralding_matches_ground_truth():
    tau = uniform_grid(5 / (2 * np.pi * GI), 0.1e-9)
    pdf = single_mode_g2(GS, GI, tau).normalized("unit_area_pdf")
    lossless = DetectionChain(1.0, 1.0)
    idler = DetectionChain(0.5, 0.5)
    rates = SourceRateModel(20_000.0, 1.0, duty_cycle_measurement=1.0, escape_signal=0.4, escape_idler=0.6)
    s, i, truth = simulate_stream(rates, lossless, idler, pdf, 5.0, seed=9, return_truth=True)
    hist = cross_correlation_histogram(s, i, 10e-9)
    c = coincidence_rate(hist, 5.0, window=1.5e-6)
    eta = heralding_efficiency(c, len(i) / 5.0, 1.0)
    expected = truth.both_detected / truth.idler_from_pairs
    assert expected == pytest.approx(0.4, abs=0.01)
    assert eta == pytest.approx(expected, abs=3 * np.sqrt(expected * (1 - expected) / truth.idler_from_pairs) + 0.005)


def test_escape_efficiency():
    assert escape_efficiency(0.015, 0.01) == pytest.approx(0.6)
    assert escape_efficiency(0.015, 0.0225) == pytest.approx(0.4)
    assert escape_efficiency(0.015, 0.0) == 1.0
    with pytest.raises(DomainError):
        escape_efficiency(0.0, 0.0)


def test_brightness_and_enhancement():
    b = spectral_brightness(29.0, 1.0, 2.5)
    assert b == pytest.approx(11.6)
    assert enhancement_factor(b, 2.0, [1, 1, 1]) == pytest.approx(b / 2.0)
    assert enhancement_factor(b, 2.0, [0.5, 0.1]) == pytest.approx(b / 0.05 / 2.0)
    with pytest.raises(DomainError):
        spectral_brightness(1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        enhancement_factor(b, 2.0, [0.0])


def test_visibility_recovery(rng):
    phi = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    counts = rng.poisson(2000 * (1 + 0.88 * np.cos(phi + 0.3)))
    v, sigma = visibility_from_fringes(phi, counts)
    assert v == pytest.approx(0.88, abs=0.05)
    assert 0 < sigma < 0.05
    assert visibility_from_fringes(phi, np.full(40, 500))[0] == pytest.approx(0.0, abs=1e-12)
    perfect = 1000 * (1 + np.cos(phi))
    assert visibility_from_fringes(phi, perfect)[0] == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(CoverageError):
        visibility_from_fringes(phi[:10], counts[:10])


def test_oscillation_modulation_detects_known_depth(rng):
    bw = 0.1e-9
    centers = -40e-9 + bw * (np.arange(800) + 0.5)
    fit = FitResult(GS, GI, 2000.0, 0.0, 0.0, {}, 0.0, 0)
    shape = double_exponential(fit, centers)
    flat = Histogram(bw, -40e-9, rng.poisson(shape))
    mod = Histogram(bw, -40e-9, rng.poisson(shape * (1 + 0.1 * np.cos(2 * np.pi * centers / 2.4e-9))))
    d0, s0 = oscillation_modulation(flat, fit, 2.4e-9)
    d1, s1 = oscillation_modulation(mod, fit, 2.4e-9)
    assert d0 < 3 * s0 + 1e-3
    assert d1 == pytest.approx(0.2, abs=3 * s1)


def test_source_metrics_validation():
    with pytest.raises(ValidationError):
        SourceMetrics(-1.0, 1.0, 100.0, 1000.0)


@pytest.fixture(scope="module")
def default_point(components):
    pdf = delay_pdf(components)
    kappa = pair_rate_per_mw(components, pdf)
    duration = 20.0
    s, i = simulate_stream(rate_model(components, kappa, 1.0), components.chain_s, components.chain_i,
                           pdf, duration, seed=31)
    hist = cross_correlation_histogram(s, i, 10e-9)
    return s, i, hist, duration


def test_default_unfiltered_point(default_point):
    s, i, hist, duration = default_point
    fit = fit_double_exponential(hist)
    c = coincidence_rate(hist, duration, 1.0, tau_peak=fit.tau_peak)
    assert c == pytest.approx(100.0, rel=0.10)
    raw, _ = g2_zero_from_histogram(hist, fit=fit)
    assert raw == pytest.approx(9.3, rel=0.30)
    eta = heralding_efficiency(c, len(i) / duration, 0.6)
    assert eta == pytest.approx(0.13, abs=0.02)
    above = hist.centers[hist.counts - fit.background_level >= 0.5 * fit.peak_amplitude]
    assert above[-1] - above[0] + hist.bin_width == pytest.approx(104e-9, rel=0.05)
