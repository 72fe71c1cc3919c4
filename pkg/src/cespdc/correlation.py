"""Analytic second- and first-order correlation functions of the cavity source."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve, find_peaks

from .errors import DomainError, EmptyInputError, GridError, PreconditionError, ValidationError
from .spectral import ClusterSpectrum, make_spectrum

NORMALIZATIONS = ("raw_arbitrary", "unit_area_pdf", "tail_normalized_g2", "peak")
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class CorrelationTrace:
    tau_grid: np.ndarray
    values: np.ndarray
    normalization: str = "raw_arbitrary"

    def __post_init__(self):
        tau = np.asarray(self.tau_grid, dtype=float)
        val = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "tau_grid", tau)
        object.__setattr__(self, "values", val)
        if tau.shape != val.shape or tau.ndim != 1:
            raise ValidationError("CorrelationTrace: grid and values must be 1-D of equal length")
        if self.normalization not in NORMALIZATIONS:
            raise ValidationError(f"CorrelationTrace: unknown normalization {self.normalization!r}")
        if len(tau) > 1 and np.any(np.diff(tau) <= 0):
            raise ValidationError("CorrelationTrace: grid must be strictly increasing")
        if np.any(val < 0):
            raise ValidationError("CorrelationTrace: values must be non-negative")

    @property
    def step(self) -> float:
        return float(self.tau_grid[1] - self.tau_grid[0]) if len(self.tau_grid) > 1 else 0.0

    def is_uniform(self, rtol: float = 1e-6) -> bool:
        if len(self.tau_grid) < 3:
            return True
        d = np.diff(self.tau_grid)
        return bool(np.all(np.abs(d - d.mean()) <= rtol * d.mean()))

    def normalized(self, kind: str) -> "CorrelationTrace":
        """Return a copy scaled to ``peak`` (max = 1) or ``unit_area_pdf``."""
        if kind == "peak":
            return replace(self, values=self.values / self.values.max(), normalization="peak")
        if kind == "unit_area_pdf":
            area = np.trapezoid(self.values, self.tau_grid)
            if not area > 0:
                raise DomainError("cannot normalise a trace with zero area")
            return replace(self, values=self.values / area, normalization="unit_area_pdf")
        raise ValidationError(f"unsupported normalisation {kind!r}")


def uniform_grid(half_width: float, step: float, center: float = 0.0) -> np.ndarray:
    n = int(np.ceil(half_width / step))
    return center + step * np.arange(-n, n + 1)


@dataclass(frozen=True)
class CorrelationConfig:
    """Inputs of the doubly-resonant mode sum.

    ``truncation`` drops mode pairs whose weight is below that fraction of the
    maximum weight.
    """

    modes: ClusterSpectrum
    damping_signal: float
    damping_idler: float
    fsr_signal: float
    fsr_idler: float
    transit_time_diff: float = 0.0
    truncation: float = 1e-4

    def __post_init__(self):
        if not (self.damping_signal > 0 and self.damping_idler > 0):
            raise ValidationError("CorrelationConfig: dampings must be > 0")
        if not self.transit_time_diff >= 0:
            raise ValidationError("CorrelationConfig: transit_time_diff must be >= 0")


def complex_sinc(z):
    """sin(z)/z for complex z, evaluated as sinh(-iz)/(-iz) with a series near 0."""
    z = np.asarray(z, dtype=complex)
    y = -1j * z
    out = np.ones_like(y)
    big = np.abs(y) >= 1e-6
    out[big] = np.sinh(y[big]) / y[big]
    small = ~big
    out[small] = 1 + y[small] ** 2 / 6
    return out


def _mode_terms(cfg: CorrelationConfig):
    sp = cfg.modes
    if sp.is_empty:
        raise EmptyInputError("analytic_g2: mode list is empty")
    keep = sp.weight >= cfg.truncation * sp.weight.max()
    w = sp.weight[keep]
    gamma_s = cfg.damping_signal / 2 + 1j * sp.m_signal[keep] * cfg.fsr_signal
    gamma_i = cfg.damping_idler / 2 + 1j * sp.m_idler[keep] * cfg.fsr_idler
    omega_s = 2 * np.pi * sp.signal_frequency[keep]
    omega_i = 2 * np.pi * sp.idler_frequency[keep]
    prefactor = np.sqrt(cfg.damping_signal * cfg.damping_idler * omega_s * omega_i) / (gamma_s + gamma_i)
    amp = np.sqrt(w) * prefactor
    tau0 = cfg.transit_time_diff
    right = amp * complex_sinc(1j * np.pi * tau0 * gamma_s)
    left = amp * complex_sinc(1j * np.pi * tau0 * gamma_i)
    return gamma_s, gamma_i, right, left


def analytic_g2(cfg: CorrelationConfig, tau_grid, check_coverage: bool = True) -> CorrelationTrace:
    """Mode-sum cross-correlation, up to an overall constant.

    For ``tau >= tau0/2`` each mode pair decays with its signal pole
    ``Gamma_s = gamma_s/2 + i m_s FSR_s``; for ``tau < tau0/2`` it grows with the
    idler pole. Each term carries ``sqrt(gamma_s gamma_i omega_s omega_i) /
    (Gamma_s + Gamma_i)``, the complex sinc of the crystal transit-time
    difference, and the square root of the mode's spectral weight.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if check_coverage:
        reach = 5 / (2 * np.pi * min(cfg.damping_signal, cfg.damping_idler))
        if tau[0] > -reach * (1 - 1e-9) or tau[-1] < reach * (1 - 1e-9):
            raise PreconditionError(f"analytic_g2: grid must cover +/-{reach:.3e} s")
    gamma_s, gamma_i, right, left = _mode_terms(cfg)
    t = tau - cfg.transit_time_diff / 2
    amp = np.zeros(tau.shape, dtype=complex)
    pos = t >= 0
    tp, tn = t[pos], t[~pos]
    acc_p = np.zeros(tp.shape, dtype=complex)
    acc_n = np.zeros(tn.shape, dtype=complex)
    for k in range(len(right)):
        acc_p += right[k] * np.exp(-2 * np.pi * gamma_s[k] * tp)
        acc_n += left[k] * np.exp(2 * np.pi * gamma_i[k] * tn)
    amp[pos] = acc_p
    amp[~pos] = acc_n
    return CorrelationTrace(tau, np.abs(amp) ** 2, "raw_arbitrary")


def single_mode_g2(damping_signal: float, damping_idler: float, tau_grid) -> CorrelationTrace:
    """Two-sided exponential with unit peak at tau = 0."""
    if not (damping_signal > 0 and damping_idler > 0):
        raise DomainError("single_mode_g2: dampings must be > 0")
    tau = np.asarray(tau_grid, dtype=float)
    values = np.where(tau >= 0, np.exp(-2 * np.pi * damping_signal * np.abs(tau)),
                      np.exp(-2 * np.pi * damping_idler * np.abs(tau)))
    return CorrelationTrace(tau, values, "peak")


def single_mode_fwhm(damping_signal: float, damping_idler: float) -> float:
    return np.log(2) / (2 * np.pi) * (1 / damping_signal + 1 / damping_idler)


def single_mode_pdf_peak(damping_signal: float, damping_idler: float) -> float:
    """Peak value (1/s) of the unit-area two-sided exponential."""
    return 2 * np.pi / (1 / damping_signal + 1 / damping_idler)


def g1_signal(spectrum: ClusterSpectrum, damping_signal: float, dt_grid,
              background_fraction: float = 0.0) -> CorrelationTrace:
    """First-order coherence modulus of the signal field.

    Each mode contributes a Lorentzian line, ``exp(2 pi i nu_k dt -
    pi damping |dt|)``, weighted by its spectral weight. An uncorrelated
    broadband background with ``background_fraction`` of the signal power
    scales the visibility by ``1 / (1 + background_fraction)``.
    """
    if spectrum.is_empty:
        raise EmptyInputError("g1_signal: spectrum is empty")
    dt = np.asarray(dt_grid, dtype=float)
    w = spectrum.weight
    offsets = spectrum.signal_frequency - spectrum.signal_frequency[np.argmax(w)]
    field = np.zeros(dt.shape, dtype=complex)
    for wk, fk in zip(w, offsets):
        field += wk * np.exp(2j * np.pi * fk * dt)
    values = np.abs(field) / w.sum() * np.exp(-np.pi * damping_signal * np.abs(dt))
    values = np.minimum(values, 1.0) / (1 + background_fraction)
    values[dt == 0] = 1.0 / (1 + background_fraction)
    return CorrelationTrace(dt, values, "peak")


def gaussian_kernel(step: float, fwhm: float) -> np.ndarray:
    sigma = fwhm * FWHM_TO_SIGMA
    half = max(int(np.ceil(6 * sigma / step)), 1)
    x = step * np.arange(-half, half + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def convolve_response(trace: CorrelationTrace, response_fwhm: float, shape: str = "gaussian") -> CorrelationTrace:
    """Convolve with a unit-area detector response; zero padding at the edges."""
    if shape != "gaussian":
        raise ValidationError(f"convolve_response: unsupported shape {shape!r}")
    if not response_fwhm > 0:
        raise DomainError("convolve_response: response_fwhm must be > 0")
    if not trace.is_uniform():
        raise GridError("convolve_response: grid is not uniform")
    kernel = gaussian_kernel(trace.step, response_fwhm)
    out = fftconvolve(trace.values, kernel, mode="same")
    if len(kernel) > len(trace.values):
        # 'same' centres on the longer input; trim back to the trace
        start = (len(out) - len(trace.values)) // 2
        out = out[start:start + len(trace.values)]
    return replace(trace, values=np.clip(out, 0.0, None))


def peak_fwhm(trace: CorrelationTrace, center: float | None = None) -> float:
    """Full width at half maximum of the peak nearest ``center`` (global max if None).

    Half-maximum crossings are located by linear interpolation, searching
    outward from the peak sample.
    """
    tau, v = trace.tau_grid, trace.values
    if center is None:
        i = int(np.argmax(v))
    else:
        j = int(np.argmin(np.abs(tau - center)))
        # climb to the local maximum
        i = j
        while i + 1 < len(v) and v[i + 1] > v[i]:
            i += 1
        while i > 0 and v[i - 1] > v[i]:
            i -= 1
    half = v[i] / 2
    right = np.flatnonzero(v[i:] < half)
    left = np.flatnonzero(v[:i + 1][::-1] < half)
    if len(right) == 0 or len(left) == 0:
        raise DomainError("peak_fwhm: half-maximum crossing outside the grid")
    r = i + right[0]
    l = i - left[0]
    tr = tau[r - 1] + (v[r - 1] - half) / (v[r - 1] - v[r]) * (tau[r] - tau[r - 1])
    tl = tau[l + 1] - (v[l + 1] - half) / (v[l + 1] - v[l]) * (tau[l + 1] - tau[l])
    return float(tr - tl)


@dataclass(frozen=True)
class ModeTemplate:
    """Cavity parameters for the equal-height n-mode study."""

    damping_signal: float
    damping_idler: float
    fsr: float
    signal_frequency: float
    pump_frequency: float
    transit_time_diff: float = 0.0


def equal_mode_config(n_modes: int, template: ModeTemplate) -> CorrelationConfig:
    """n adjacent, equal-weight mode pairs with matched combs (so every pair is exactly resonant)."""
    if n_modes < 1:
        raise DomainError("n_modes must be >= 1")
    m = np.arange(n_modes) - (n_modes - 1) // 2
    spectrum = make_spectrum(template.pump_frequency, m, -m,
                             template.signal_frequency + m * template.fsr,
                             np.ones(n_modes), template.fsr)
    return CorrelationConfig(spectrum, template.damping_signal, template.damping_idler,
                             template.fsr, template.fsr, template.transit_time_diff, truncation=0.0)


def central_peak_trace(n_modes: int, template: ModeTemplate, response_fwhm: float | None = None,
                       step: float = 1e-12) -> CorrelationTrace:
    """Correlation around tau = 0 for an equal-height n-mode cluster, optionally convolved."""
    cfg = equal_mode_config(n_modes, template)
    if n_modes == 1:
        reach = 6 / (2 * np.pi * min(template.damping_signal, template.damping_idler))
        tau = uniform_grid(reach, max(step, 1e-10), template.transit_time_diff / 2)
    else:
        period = 1 / template.fsr
        pad = 3 * response_fwhm if response_fwhm else 0.0
        tau = uniform_grid(1.5 * period + pad, step, template.transit_time_diff / 2)
    trace = analytic_g2(cfg, tau, check_coverage=(n_modes == 1))
    if response_fwhm:
        trace = convolve_response(trace, response_fwhm)
    return trace


def peak_width_vs_modes(n_modes_list, template: ModeTemplate, response_fwhm: float | None = None,
                        step: float = 1e-12):
    """FWHM of the central correlation peak for each mode count."""
    out = []
    for n in n_modes_list:
        trace = central_peak_trace(int(n), template, response_fwhm, step)
        out.append((int(n), peak_fwhm(trace, center=template.transit_time_diff / 2)))
    return out


def predict_g2_zero(pair_rate_detected: float, pdf_peak: float, singles_signal: float,
                    singles_idler: float) -> float:
    """Poisson accidental model: ``1 + R_c p(0) / (S_s S_i)``."""
    if singles_signal <= 0 or singles_idler <= 0:
        raise DomainError("predict_g2_zero: singles rates must be > 0")
    if pair_rate_detected < 0 or pdf_peak < 0:
        raise DomainError("predict_g2_zero: rates must be >= 0")
    return 1.0 + pair_rate_detected * pdf_peak / (singles_signal * singles_idler)


def oscillation_period(trace: CorrelationTrace, expected: float) -> float:
    """Mean spacing between successive local maxima separated by at least half of ``expected``."""
    v, tau = trace.values, trace.tau_grid
    distance = max(int(0.5 * expected / trace.step), 1)
    peaks, _ = find_peaks(v, distance=distance, prominence=0.05 * v.max())
    if len(peaks) < 2:
        raise DomainError("oscillation_period: fewer than two peaks found")
    return float(np.mean(np.diff(tau[peaks])))


def fringe_contrast(trace: CorrelationTrace) -> float:
    """``(max - min) / (max + min)`` of the trace values."""
    v = trace.values
    top, bottom = float(v.max()), float(v.min())
    if top + bottom == 0:
        raise DomainError("fringe_contrast: trace is identically zero")
    return (top - bottom) / (top + bottom)
