"""Coincidence histograms, double-exponential fits and derived source metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .correlation import ModeTemplate, peak_width_vs_modes
from .errors import (
    ConvergenceError,
    CoverageError,
    DivisionDegenerateError,
    DomainError,
    FitDegenerateError,
    InfeasibleError,
    RangeError,
    ValidationError,
)
from .montecarlo import TimeTagStream

PS = 1e-12


@dataclass(frozen=True)
class Histogram:
    """Counts of ``tau = t_idler - t_signal`` in uniform bins starting at ``tau_min``."""

    bin_width: float
    tau_min: float
    counts: np.ndarray
    total_starts: int = 0

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if not self.bin_width > 0:
            raise ValidationError("Histogram: bin_width must be > 0")

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def tau_max(self) -> float:
        return self.tau_min + self.n_bins * self.bin_width

    @property
    def edges(self) -> np.ndarray:
        return self.tau_min + self.bin_width * np.arange(self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.tau_min + self.bin_width * (np.arange(self.n_bins) + 0.5)

    @property
    def range(self):
        return (self.tau_min, self.tau_max)

    def __add__(self, other: "Histogram") -> "Histogram":
        if (other.bin_width, other.tau_min, other.n_bins) != (self.bin_width, self.tau_min, self.n_bins):
            raise ValidationError("Histogram: cannot add histograms with different binning")
        return Histogram(self.bin_width, self.tau_min, self.counts + other.counts,
                         self.total_starts + other.total_starts)


def _as_ps(x):
    if isinstance(x, TimeTagStream):
        return x.timestamps
    return np.asarray(x, dtype=np.int64)


def cross_correlation_histogram(signal, idler, bin_width: float, tau_range=(-2.5e-6, 2.5e-6),
                                chunk: int = 200_000) -> Histogram:
    """Histogram every signal-idler pair whose delay falls inside ``tau_range``.

    Both inputs are sorted integer-picosecond timestamps (or streams). For each
    signal event the matching idler events are located with two binary
    searches, which is the vectorised form of a two-pointer sweep.
    """
    if not bin_width > 0:
        raise RangeError("cross_correlation_histogram: bin_width must be > 0")
    lo_tau, hi_tau = tau_range
    if not hi_tau > lo_tau:
        raise RangeError("cross_correlation_histogram: empty tau range")
    # bins are whole picoseconds so that edges match integer timestamps exactly
    bw_ps = int(round(bin_width / PS))
    lo_ps = int(round(lo_tau / PS))
    if bw_ps < 1:
        raise RangeError("cross_correlation_histogram: bin_width must be at least 1 ps")
    n_bins = int(round((hi_tau - lo_tau) / bin_width))
    if n_bins < 1:
        raise RangeError("cross_correlation_histogram: range narrower than one bin")
    ts, ti = _as_ps(signal), _as_ps(idler)
    hi_ps = lo_ps + n_bins * bw_ps
    counts = np.zeros(n_bins, dtype=np.int64)
    for start in range(0, len(ts), chunk):
        s = ts[start:start + chunk]
        a = np.searchsorted(ti, s + lo_ps, side="left")
        b = np.searchsorted(ti, s + hi_ps, side="left")
        n = b - a
        total = int(n.sum())
        if total == 0:
            continue
        # indices of all matching idler events, flattened per signal event
        offsets = np.repeat(a - np.concatenate(([0], np.cumsum(n)[:-1])), n)
        idx = np.arange(total) + offsets
        tau = ti[idx] - np.repeat(s, n)
        counts += np.bincount((tau - lo_ps) // bw_ps, minlength=n_bins)
    return Histogram(bw_ps * PS, lo_ps * PS, counts, len(ts))


@dataclass(frozen=True)
class FitResult:
    linewidth_signal: float  # Hz, decay for tau > tau_peak
    linewidth_idler: float  # Hz, rise for tau < tau_peak
    peak_amplitude: float
    background_level: float
    tau_peak: float
    uncertainties: dict = field(default_factory=dict)
    goodness: float = float("nan")
    iterations: int = 0


# internal units: microseconds and MHz, so 2*pi*nu*tau is of order one
_US = 1e-6


def _model(p, t):
    bg, amp, tp, nu_p, nu_m = p
    d = t - tp
    right = d >= 0
    e = np.where(right, np.exp(-2 * np.pi * nu_p * np.where(right, d, 0)),
                 np.exp(2 * np.pi * nu_m * np.where(right, 0, d)))
    return bg + amp * e, e, right, d


def _jacobian(p, t):
    bg, amp, tp, nu_p, nu_m = p
    _, e, right, d = _model(p, t)
    jac = np.empty((len(t), 5))
    jac[:, 0] = 1.0
    jac[:, 1] = e
    jac[:, 2] = np.where(right, 2 * np.pi * nu_p, -2 * np.pi * nu_m) * amp * e
    jac[:, 3] = np.where(right, -2 * np.pi * d * amp * e, 0.0)
    jac[:, 4] = np.where(right, 0.0, 2 * np.pi * d * amp * e)
    return jac


def _flank_rate(t, y, bg, amp, side):
    """Log-linear estimate of the decay rate on one flank, in MHz."""
    sel = (y - bg > 0.1 * amp) & (y - bg > 0)
    sel &= (t > 0) if side > 0 else (t < 0)
    if np.count_nonzero(sel) >= 2:
        slope = np.polyfit(t[sel], np.log(y[sel] - bg), 1)[0]
        if side * slope < 0:
            return abs(slope) / (2 * np.pi)
    above = (y - bg > 0.5 * amp) & ((t > 0) if side > 0 else (t < 0))
    half = max(np.abs(t[above]).max() if above.any() else 0.05, 0.005)
    return np.log(2) / (2 * np.pi * half)


def fit_double_exponential(hist: Histogram, max_iter: int = 200, xtol: float = 1e-8) -> FitResult:
    """Fit ``bg + A exp(-2 pi dnu_+ (tau - tau_p))`` (right) and ``exp(+2 pi dnu_- ...)`` (left).

    Damped least squares with an analytic Jacobian. Residuals are weighted by
    the Poisson standard deviation of the preceding model so that sparse bins
    are not biased low; the fit is repeated once with refreshed weights.
    """
    y = hist.counts.astype(float)
    if len(y) < 6:
        raise FitDegenerateError("fit_double_exponential: need at least 6 bins")
    if not y.max() > 5 * np.median(y):
        raise FitDegenerateError("fit_double_exponential: no clear coincidence peak")
    t_abs = hist.centers / _US
    k = int(np.argmax(y))
    tp0 = t_abs[k]
    t = t_abs - tp0
    edge = np.abs(t) >= 0.6 * np.abs(t).max()
    bg0 = float(np.mean(y[edge])) if edge.any() else float(np.min(y))
    amp0 = float(y[k] - bg0)
    p0 = np.array([bg0, amp0, 0.0, _flank_rate(t, y, bg0, amp0, 1), _flank_rate(t, y, bg0, amp0, -1)])
    lower = [0.0, 0.0, t.min(), 1e-9, 1e-9]
    upper = [np.inf, np.inf, t.max(), np.inf, np.inf]

    p = p0
    nfev_total = 0
    for _ in range(2):
        sigma = np.sqrt(np.maximum(_model(p, t)[0], 1.0))
        res = least_squares(
            lambda q: (_model(q, t)[0] - y) / sigma,
            p, jac=lambda q: _jacobian(q, t) / sigma[:, None],
            bounds=(lower, upper), method="trf", x_scale="jac",
            xtol=xtol, ftol=1e-12, gtol=1e-12, max_nfev=max_iter,
        )
        nfev_total += res.nfev
        if res.status <= 0:
            bg, amp, tp, nu_p, nu_m = res.x
            last = np.array([bg, amp, (tp + tp0) * _US, nu_p / _US, nu_m / _US])
            raise ConvergenceError("fit_double_exponential: did not converge", last_iterate=last)
        p = res.x

    jw = res.jac
    dof = max(len(y) - 5, 1)
    try:
        cov = np.linalg.inv(jw.T @ jw)
        err = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        err = np.full(5, np.nan)
    bg, amp, tp, nu_p, nu_m = p
    return FitResult(
        linewidth_signal=nu_p / _US,
        linewidth_idler=nu_m / _US,
        peak_amplitude=amp,
        background_level=bg,
        tau_peak=(tp + tp0) * _US,
        uncertainties={
            "background_level": err[0],
            "peak_amplitude": err[1],
            "tau_peak": err[2] * _US,
            "linewidth_signal": err[3] / _US,
            "linewidth_idler": err[4] / _US,
        },
        goodness=float(2 * res.cost / dof),
        iterations=nfev_total,
    )


def double_exponential(fit: FitResult, tau):
    """Evaluate the fitted model (counts per bin of the fitted histogram) at ``tau``."""
    d = np.asarray(tau, dtype=float) - fit.tau_peak
    right = d >= 0
    e = np.where(right, np.exp(-2 * np.pi * fit.linewidth_signal * np.where(right, d, 0)),
                 np.exp(2 * np.pi * fit.linewidth_idler * np.where(right, 0, d)))
    return fit.background_level + fit.peak_amplitude * e


def oscillation_modulation(hist: Histogram, fit: FitResult, period: float, exclusion: float = 1.5e-9):
    """Peak-to-valley depth of a periodic modulation riding on the fitted peak.

    Counts are modelled as ``s(tau) (a + b cos(2 pi tau / T) + c sin(...))``
    with ``s`` the double-exponential shape from ``fit`` (which may come from a
    coarser histogram). Bins closer than ``exclusion`` to the peak, where the
    detector response rounds the cusp, are skipped. Returns ``(depth,
    sigma)`` with ``depth = 2 sqrt(b^2 + c^2) / a``.
    """
    if not period > 0:
        raise DomainError("oscillation_modulation: period must be > 0")
    x = hist.centers
    sel = np.abs(x - fit.tau_peak) >= exclusion
    if np.count_nonzero(sel) < 4:
        raise RangeError("oscillation_modulation: too few bins outside the exclusion zone")
    x, y = x[sel], hist.counts[sel].astype(float)
    shape = double_exponential(fit, x)
    phase = 2 * np.pi * (x - fit.tau_peak) / period
    design = np.column_stack((shape, shape * np.cos(phase), shape * np.sin(phase)))
    # Poisson weights from the scaled smooth model
    scale = max(y.sum(), 1.0) / shape.sum()
    w = 1 / np.sqrt(np.maximum(shape * scale, 1.0))
    dw = design * w[:, None]
    coef, *_ = np.linalg.lstsq(dw, y * w, rcond=None)
    a, b, c = coef
    if not a > 0:
        raise DivisionDegenerateError("oscillation_modulation: no counts under the peak")
    amp = np.hypot(b, c)
    cov = np.linalg.pinv(dw.T @ dw)
    if amp > 0:
        grad = 2 * np.array([-amp / a**2, b / (amp * a), c / (amp * a)])
    else:
        grad = np.array([0.0, 2 / a, 0.0])
    return float(2 * amp / a), float(np.sqrt(max(grad @ cov @ grad, 0.0)))


def _accidental_bins(hist: Histogram, tau_peak: float, window):
    lo, hi = window
    d = np.abs(hist.centers - tau_peak)
    sel = (d >= lo) & (d <= hi)
    if not sel.any():
        raise RangeError("accidental window lies outside the histogram")
    return hist.counts[sel].astype(float)


def g2_zero_from_histogram(
    hist: Histogram,
    accidental_window=(1.5e-6, 2.5e-6),
    fit: FitResult | None = None,
    peak: str = "fit",
    singles=None,
    dark_rates=None,
    dark_reference: Histogram | None = None,
):
    """Return ``(raw, dark_subtracted)`` normalised cross-correlation at the peak.

    ``raw`` is the peak (fit ``A + bg`` or the maximum bin) over the mean
    accidental level. Dark subtraction removes the part of the accidental
    level involving dark counts, either from a measured ``dark_reference``
    histogram or from the singles and dark rates of both detectors.
    """
    if peak not in ("fit", "max"):
        raise ValidationError("peak must be 'fit' or 'max'")
    if fit is None:
        fit = fit_double_exponential(hist)
    acc = _accidental_bins(hist, fit.tau_peak, accidental_window).mean()
    if not acc > 0:
        raise DivisionDegenerateError("g2_zero_from_histogram: zero accidental level")
    top = fit.peak_amplitude + fit.background_level if peak == "fit" else float(hist.counts.max())
    raw = top / acc

    if dark_reference is not None:
        dark = _accidental_bins(dark_reference, fit.tau_peak, accidental_window).mean()
    elif singles is not None and dark_rates is not None:
        (s_s, s_i), (d_s, d_i) = singles, dark_rates
        if not (s_s > 0 and s_i > 0):
            raise DivisionDegenerateError("g2_zero_from_histogram: zero singles rate")
        if d_s > s_s or d_i > s_i or d_s < 0 or d_i < 0:
            raise DomainError("g2_zero_from_histogram: dark rates must lie in [0, singles]")
        true_fraction = (1 - d_s / s_s) * (1 - d_i / s_i)
        dark = acc * (1 - true_fraction)
    else:
        dark = 0.0
    if not acc - dark > 0:
        raise DivisionDegenerateError("g2_zero_from_histogram: accidentals are all dark counts")
    subtracted = raw if dark == 0 else (top - dark) / (acc - dark)
    return raw, subtracted


def coincidence_rate(hist: Histogram, measurement_time: float, pump_power: float | None = None,
                     window: float = 500e-9, tau_peak: float | None = None,
                     accidental_window=(1.5e-6, 2.5e-6), subtract_background: bool = True) -> float:
    """Coincidences per second inside ``window`` centred on the peak, optionally per mW.

    Bins whose centres fall inside the window are summed. With
    ``subtract_background`` the mean accidental level per bin is removed.
    """
    if not measurement_time > 0:
        raise RangeError("coincidence_rate: measurement_time must be > 0")
    if tau_peak is None:
        tau_peak = float(hist.centers[np.argmax(hist.counts)])
    if tau_peak - window / 2 < hist.tau_min or tau_peak + window / 2 > hist.tau_max:
        raise RangeError("coincidence_rate: window exceeds histogram range")
    inside = np.abs(hist.centers - tau_peak) <= window / 2
    total = float(hist.counts[inside].sum())
    if subtract_background:
        total -= _accidental_bins(hist, tau_peak, accidental_window).mean() * np.count_nonzero(inside)
    rate = total / measurement_time
    if pump_power is not None:
        if not pump_power > 0:
            raise DomainError("coincidence_rate: pump_power must be > 0")
        rate /= pump_power
    return rate


def heralding_efficiency(coincidence_rate: float, idler_singles: float, detector_efficiency_signal: float) -> float:
    """``C / S_idler / eta_det,signal``."""
    if not idler_singles > 0:
        raise DomainError("heralding_efficiency: idler singles must be > 0")
    if not 0 < detector_efficiency_signal <= 1:
        raise DomainError("heralding_efficiency: detector efficiency must be in (0, 1]")
    return coincidence_rate / idler_singles / detector_efficiency_signal


def spectral_brightness(pair_rate: float, pump_power: float, linewidth: float) -> float:
    """Pairs per (s mW MHz); ``pump_power`` in mW and ``linewidth`` in MHz."""
    if not linewidth > 0:
        raise DomainError("spectral_brightness: linewidth must be > 0")
    if not pump_power > 0 or pair_rate < 0:
        raise DomainError("spectral_brightness: need positive pump power and rate")
    return pair_rate / (pump_power * linewidth)


def enhancement_factor(cavity_brightness: float, single_pass_brightness: float, corrections=()) -> float:
    """Cavity over single-pass brightness after dividing the cavity value by each correction."""
    if not single_pass_brightness > 0 or not cavity_brightness > 0:
        raise DomainError("enhancement_factor: brightness values must be > 0")
    value = cavity_brightness
    for c in corrections:
        if not c > 0:
            raise DomainError("enhancement_factor: corrections must be > 0")
        value /= c
    return value / single_pass_brightness


def escape_efficiency(output_coupler_transmission: float, internal_loss: float) -> float:
    t, loss = output_coupler_transmission, internal_loss
    if not (0 <= t < 1 and 0 <= loss < 1):
        raise DomainError("escape_efficiency: inputs must lie in [0, 1)")
    if t + loss == 0:
        raise DomainError("escape_efficiency: transmission and loss are both zero")
    return t / (t + loss)


def visibility_from_fringes(phases, counts, dark_level: float = 0.0):
    """Fit ``a + b cos(phi) + c sin(phi)`` and return ``(V, sigma_V)``.

    ``V = sqrt(b^2 + c^2) / (a - dark_level)``, clamped to [0, 1]. Residuals
    are Poisson weighted and the uncertainty is propagated from the linear
    least-squares covariance.
    """
    phi = np.asarray(phases, dtype=float)
    y = np.asarray(counts, dtype=float)
    if phi.shape != y.shape or len(phi) < 3:
        raise CoverageError("visibility_from_fringes: need at least 3 points")
    order = np.sort(phi)
    step = np.median(np.diff(order)) if len(order) > 1 else 0.0
    if order[-1] - order[0] + step < 2 * np.pi * (1 - 1e-9):
        raise CoverageError("visibility_from_fringes: scan covers less than one fringe period")
    design = np.column_stack((np.ones_like(phi), np.cos(phi), np.sin(phi)))
    w = 1 / np.sqrt(np.maximum(y, 1.0))
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    a, b, c = coef
    offset = a - dark_level
    if not offset > 0:
        raise DivisionDegenerateError("visibility_from_fringes: offset not above dark level")
    amp = np.hypot(b, c)
    vis = amp / offset
    cov = np.linalg.pinv((design * w[:, None]).T @ (design * w[:, None]))
    if amp > 0:
        grad = np.array([-amp / offset**2, b / (amp * offset), c / (amp * offset)])
    else:
        grad = np.array([0.0, 1 / offset, 0.0])
    sigma = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    return float(np.clip(vis, 0.0, 1.0)), sigma


def estimate_mode_count(measured_peak_fwhm: float, response_fwhm: float, template: ModeTemplate,
                        n_max: int = 12, step: float = 1e-12) -> int:
    """Number of equal-height modes whose convolved central-peak width best matches the measurement."""
    if not measured_peak_fwhm > 0 or not response_fwhm >= 0:
        raise DomainError("estimate_mode_count: widths must be positive")
    if measured_peak_fwhm < response_fwhm:
        raise InfeasibleError("estimate_mode_count: measured width is below the detector response")
    widths = peak_width_vs_modes(range(1, n_max + 1), template, response_fwhm or None, step)
    err = np.array([abs(w - measured_peak_fwhm) for _, w in widths])
    # argmin returns the first minimum, i.e. ties go to the smaller n
    return int(widths[int(np.argmin(err))][0])


@dataclass(frozen=True)
class SourceMetrics:
    """Figures of merit of one operating point; optional entries stay ``None`` when not measured."""

    g2_zero_raw: float
    g2_zero_dark_subtracted: float
    coincidence_rate_per_mw: float
    singles_idler: float
    heralding_efficiency: float | None = None
    spectral_brightness: float | None = None
    enhancement_factor: float | None = None

    def __post_init__(self):
        for name in ("g2_zero_raw", "g2_zero_dark_subtracted", "singles_idler"):
            if getattr(self, name) < 0:
                raise ValidationError(f"SourceMetrics: {name} must be >= 0")

