"""Cavity mode combs, phase matching and the doubly-resonant cluster spectrum.

Frequencies are in Hz, lengths in meters. The signal comb is locked to a
reference frequency (the centre of the phase-matching envelope) and the idler
comb to its energy conjugate, so the double resonance sits at mode index 0 of
both combs unless a signal detuning is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.optimize import brentq

from .errors import EmptyInputError, PreconditionError, RangeError, ValidationError

# Extraordinary index of 5 mol% MgO-doped congruent LiNbO3 (Gayer et al.,
# Appl. Phys. B 91, 343 (2008)). Order: a1..a6, b1..b4.
MGO_CLN_EXTRAORDINARY = (
    5.756, 0.0983, 0.2020, 189.32, 12.52, 1.32e-2,
    2.860e-6, 4.700e-8, 6.113e-8, 1.516e-4,
)

WAVELENGTH_RANGE = (0.4e-6, 1.6e-6)


@dataclass(frozen=True)
class DispersionModel:
    """Temperature-dependent Sellmeier model of the crystal plus cavity geometry.

    ``n^2 = a1 + b1 f + (a2 + b2 f)/(l^2 - (a3 + b3 f)^2)
             + (a4 + b4 f)/(l^2 - a5^2) - a6 l^2``

    with ``l`` in micrometres and ``f = (T - 24.5)(T + 570.82)``, T in Celsius.
    Setting every coefficient but ``a1`` to zero gives a constant index.
    """

    coefficients: tuple = MGO_CLN_EXTRAORDINARY
    crystal_length: float = 0.02
    air_path_length: float = 0.68
    temperature: float | None = None  # kelvin; None means the 24.5 C reference

    def __post_init__(self):
        if len(self.coefficients) != 10:
            raise ValidationError("DispersionModel: expected 10 Sellmeier coefficients")
        if not self.crystal_length > 0:
            raise ValidationError("DispersionModel: crystal_length must be > 0")
        if not self.air_path_length >= 0:
            raise ValidationError("DispersionModel: air_path_length must be >= 0")

    @classmethod
    def constant(cls, n0: float, **kwargs) -> "DispersionModel":
        return cls(coefficients=(n0 ** 2,) + (0.0,) * 9, **kwargs)


def refractive_index(model: DispersionModel, wavelength):
    """Refractive index at vacuum ``wavelength`` (m). Accepts scalars or arrays."""
    lam = np.asarray(wavelength, dtype=float)
    lo, hi = WAVELENGTH_RANGE
    if np.any(lam < lo * (1 - 1e-12)) or np.any(lam > hi * (1 + 1e-12)):
        raise RangeError(f"wavelength outside supported range [{lo}, {hi}] m")
    a1, a2, a3, a4, a5, a6, b1, b2, b3, b4 = model.coefficients
    t_c = 24.5 if model.temperature is None else model.temperature - 273.15
    f = (t_c - 24.5) * (t_c + 570.82)
    l2 = (lam * 1e6) ** 2
    n2 = a1 + b1 * f - a6 * l2
    if a2 or b2:
        n2 = n2 + (a2 + b2 * f) / (l2 - (a3 + b3 * f) ** 2)
    if a4 or b4:
        n2 = n2 + (a4 + b4 * f) / (l2 - a5 ** 2)
    n = np.sqrt(n2)
    return float(n) if n.ndim == 0 else n


def group_index(model: DispersionModel, wavelength: float, step: float = 1e-10) -> float:
    """n_g = n - lambda dn/dlambda by central difference."""
    n = refractive_index(model, wavelength)
    lo, hi = WAVELENGTH_RANGE
    a, b = max(wavelength - step, lo), min(wavelength + step, hi)
    dn = (refractive_index(model, b) - refractive_index(model, a)) / (b - a)
    return n - wavelength * dn


def round_trip_fsr(model: DispersionModel, wavelength: float) -> float:
    """Free spectral range of the ring (bow-tie) cavity at ``wavelength``."""
    optical_length = group_index(model, wavelength) * model.crystal_length + model.air_path_length
    return C_LIGHT / optical_length


def transit_time_difference(model: DispersionModel, wl_signal: float, wl_idler: float) -> float:
    """Group-delay difference between signal and idler through the crystal (s, >= 0)."""
    dn = group_index(model, wl_signal) - group_index(model, wl_idler)
    return abs(dn) * model.crystal_length / C_LIGHT


@dataclass(frozen=True)
class CavityModel:
    """Per-branch cavity parameters. Dampings are full linewidths in Hz."""

    fsr_signal: float
    fsr_idler: float
    finesse_signal: float
    finesse_idler: float
    damping_signal: float
    damping_idler: float
    mirror_reflectivities: tuple = (0.9999, 0.9999, 0.9999, 0.985)
    internal_loss: float = 0.01
    output_coupler_transmission: float = 0.015

    def __post_init__(self):
        for name in ("fsr_signal", "fsr_idler", "finesse_signal", "finesse_idler",
                     "damping_signal", "damping_idler"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"CavityModel: {name} must be > 0")
        for branch in ("signal", "idler"):
            fsr = getattr(self, f"fsr_{branch}")
            expected = fsr / getattr(self, f"finesse_{branch}")
            if abs(getattr(self, f"damping_{branch}") - expected) > 1e-9 * expected:
                raise ValidationError(
                    f"CavityModel invariant violated: damping_{branch} != fsr_{branch}/finesse_{branch}"
                )
        if len(self.mirror_reflectivities) != 4 or not all(0 < r <= 1 for r in self.mirror_reflectivities):
            raise ValidationError("CavityModel: mirror_reflectivities must be four values in (0, 1]")
        if not 0 < self.internal_loss < 1:
            raise ValidationError("CavityModel: internal_loss must be in (0, 1)")
        if not 0 < self.output_coupler_transmission < 1:
            raise ValidationError("CavityModel: output_coupler_transmission must be in (0, 1)")

    @classmethod
    def from_linewidths(cls, fsr_signal, fsr_idler, damping_signal, damping_idler, **kwargs):
        return cls(
            fsr_signal=fsr_signal,
            fsr_idler=fsr_idler,
            finesse_signal=fsr_signal / damping_signal,
            finesse_idler=fsr_idler / damping_idler,
            damping_signal=damping_signal,
            damping_idler=damping_idler,
            **kwargs,
        )

    def fsr(self, branch: str) -> float:
        return self.fsr_signal if branch == "signal" else self.fsr_idler

    def damping(self, branch: str) -> float:
        return self.damping_signal if branch == "signal" else self.damping_idler


def vernier_spacing(fsr_signal: float, fsr_idler: float) -> float:
    """Cluster spacing FSR_s FSR_i / |FSR_s - FSR_i| (inf for equal combs)."""
    diff = abs(fsr_signal - fsr_idler)
    return np.inf if diff == 0 else fsr_signal * fsr_idler / diff


def idler_fsr_for_spacing(fsr_signal: float, spacing: float, idler_larger: bool = True) -> float:
    """Back-solve the idler FSR that yields a given Vernier cluster spacing."""
    if idler_larger:
        return fsr_signal + fsr_signal ** 2 / (spacing - fsr_signal)
    return fsr_signal - fsr_signal ** 2 / (spacing + fsr_signal)


@lru_cache(maxsize=None)
def _sinc2_half_point() -> float:
    return brentq(lambda x: np.sinc(x) ** 2 - 0.5, 0.1, 0.9, xtol=1e-15)


@dataclass(frozen=True)
class PhaseMatchingEnvelope:
    center_signal_frequency: float
    fwhm: float
    shape: str = "sinc2"

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValidationError("PhaseMatchingEnvelope: fwhm must be > 0")
        if self.shape not in ("sinc2", "gaussian"):
            raise ValidationError(f"PhaseMatchingEnvelope: unknown shape {self.shape!r}")

    def __call__(self, frequency):
        d = np.asarray(frequency, dtype=float) - self.center_signal_frequency
        if self.shape == "sinc2":
            return np.sinc(2 * _sinc2_half_point() * d / self.fwhm) ** 2
        return np.exp(-4 * np.log(2) * (d / self.fwhm) ** 2)


@dataclass(frozen=True)
class ClusterSpectrum:
    """Doubly-resonant mode pairs sorted by signal frequency.

    ``clusters`` holds half-open ``(start, stop)`` index ranges into the mode
    arrays. Idler frequencies are stored as ``pump - signal`` so that energy
    conservation holds exactly in floating point.
    """

    pump_frequency: float
    m_signal: np.ndarray
    m_idler: np.ndarray
    signal_frequency: np.ndarray
    idler_frequency: np.ndarray
    weight: np.ndarray
    clusters: tuple = field(default=())

    def __post_init__(self):
        n = len(self.weight)
        for name in ("m_signal", "m_idler", "signal_frequency", "idler_frequency"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"ClusterSpectrum: {name} length mismatch")
        if n:
            if np.any(self.weight < 0) or np.any(self.weight > 1 + 1e-12):
                raise ValidationError("ClusterSpectrum: weights must lie in [0, 1]")
            if np.any(np.diff(self.signal_frequency) <= 0):
                raise ValidationError("ClusterSpectrum: modes must be ordered by signal frequency")

    def __len__(self):
        return len(self.weight)

    @property
    def is_empty(self) -> bool:
        return len(self.weight) == 0

    def cluster_ids(self) -> np.ndarray:
        ids = np.empty(len(self), dtype=int)
        for k, (a, b) in enumerate(self.clusters):
            ids[a:b] = k
        return ids


def _group_clusters(signal_frequency, fsr_signal, gap_threshold):
    if len(signal_frequency) == 0:
        return ()
    breaks = np.flatnonzero(np.diff(signal_frequency) > gap_threshold * fsr_signal) + 1
    edges = np.concatenate(([0], breaks, [len(signal_frequency)]))
    return tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))


def make_spectrum(pump_frequency, m_signal, m_idler, signal_frequency, weight,
                  fsr_signal, gap_threshold=10.0, normalize=True) -> ClusterSpectrum:
    """Assemble a ClusterSpectrum from raw mode data (sorted, grouped, normalised)."""
    signal_frequency = np.asarray(signal_frequency, dtype=float)
    order = np.argsort(signal_frequency, kind="stable")
    signal_frequency = signal_frequency[order]
    weight = np.asarray(weight, dtype=float)[order]
    if normalize and len(weight) and weight.max() > 0:
        weight = weight / weight.max()
    return ClusterSpectrum(
        pump_frequency=float(pump_frequency),
        m_signal=np.asarray(m_signal, dtype=np.int64)[order],
        m_idler=np.asarray(m_idler, dtype=np.int64)[order],
        signal_frequency=signal_frequency,
        idler_frequency=pump_frequency - signal_frequency,
        weight=weight,
        clusters=_group_clusters(signal_frequency, fsr_signal, gap_threshold),
    )


def mode_comb(cavity: CavityModel, branch: str, center: float, span: float):
    """Uniform comb ``center + m FSR`` holding ``floor(span/FSR) + 1`` modes.

    Returns ``(mode_index, frequency)`` arrays; index 0 sits at ``center``.
    """
    if not span > 0:
        raise PreconditionError("mode_comb: span must be > 0")
    fsr = cavity.fsr(branch)
    n = int(np.floor(span / fsr)) + 1
    m = np.arange(-((n - 1) // 2), n // 2 + 1, dtype=np.int64)
    return m, center + m * fsr


def joint_spectrum(
    cavity: CavityModel,
    envelope: PhaseMatchingEnvelope,
    pump_frequency: float,
    detuning_signal: float = 0.0,
    span: float | None = None,
    *,
    kappa: float = 5.0,
    gap_threshold: float = 10.0,
    weight_model: str = "lorentzian",
    min_weight: float = 1e-3,
    max_span_fwhm: float = 6.0,
) -> ClusterSpectrum:
    """Scan the signal comb and keep modes whose energy-conjugate idler is resonant.

    A signal mode is kept when the idler frequency ``pump - nu_s`` lies within
    ``kappa * damping_idler`` of an idler comb line. Weight is the envelope
    times a Lorentzian of the residual idler mismatch (half-width
    ``damping_idler / 2``), or the envelope alone for ``weight_model="equal"``.
    Modes below ``min_weight`` of the maximum are dropped.
    """
    if span is None:
        span = 2 * envelope.fwhm
    if span > max_span_fwhm * envelope.fwhm:
        raise PreconditionError("joint_spectrum: span exceeds the configured envelope cap")
    if weight_model not in ("lorentzian", "equal"):
        raise ValidationError(f"joint_spectrum: unknown weight model {weight_model!r}")

    fsr_s, fsr_i = cavity.fsr_signal, cavity.fsr_idler
    gamma_i = cavity.damping_idler
    ref_s = envelope.center_signal_frequency
    m_s, _ = mode_comb(cavity, "signal", ref_s, span)
    # offsets from the locked references, kept small to avoid cancellation
    offset_s = detuning_signal + m_s * fsr_s
    offset_i = -offset_s
    m_i = np.rint(offset_i / fsr_i).astype(np.int64)
    mismatch = offset_i - m_i * fsr_i

    keep = np.abs(mismatch) <= kappa * gamma_i
    m_s, m_i, offset_s, mismatch = m_s[keep], m_i[keep], offset_s[keep], mismatch[keep]
    nu_s = ref_s + offset_s
    weight = np.asarray(envelope(nu_s), dtype=float)
    if weight_model == "lorentzian":
        weight = weight / (1 + (2 * mismatch / gamma_i) ** 2)
    if len(weight) and weight.max() > 0:
        keep = weight >= min_weight * weight.max()
        m_s, m_i, nu_s, weight = m_s[keep], m_i[keep], nu_s[keep], weight[keep]
    else:
        m_s, m_i, nu_s, weight = m_s[:0], m_i[:0], nu_s[:0], weight[:0]
    return make_spectrum(pump_frequency, m_s, m_i, nu_s, weight, fsr_s, gap_threshold)


@dataclass(frozen=True)
class ClusterStats:
    cluster_spacing: float
    clusters_count: int
    modes_per_cluster: list
    dominant_cluster: int
    centroids: list


def cluster_stats(spectrum: ClusterSpectrum) -> ClusterStats:
    if spectrum.is_empty:
        raise EmptyInputError("cluster_stats: spectrum is empty")
    centroids, totals, counts = [], [], []
    for a, b in spectrum.clusters:
        w = spectrum.weight[a:b]
        nu = spectrum.signal_frequency[a:b]
        tot = w.sum()
        # weighted mean about the first mode keeps precision at 1e14 Hz
        centroids.append(nu[0] + float(np.dot(w, nu - nu[0]) / tot) if tot > 0 else float(nu.mean()))
        totals.append(tot)
        counts.append(b - a)
    spacing = float(np.mean(np.diff(centroids))) if len(centroids) > 1 else 0.0
    return ClusterStats(
        cluster_spacing=spacing,
        clusters_count=len(centroids),
        modes_per_cluster=counts,
        dominant_cluster=int(np.argmax(totals)),
        centroids=centroids,
    )


def modes_above_half_max(spectrum: ClusterSpectrum, cluster: int) -> int:
    a, b = spectrum.clusters[cluster]
    w = spectrum.weight[a:b]
    return int(np.count_nonzero(w >= 0.5 * w.max()))


def dominant_mode_frequency(spectrum: ClusterSpectrum) -> float:
    """Signal frequency of the strongest mode (the one nearest the cluster centroid on ties)."""
    stats = cluster_stats(spectrum)
    a, b = spectrum.clusters[stats.dominant_cluster]
    w = spectrum.weight[a:b]
    nu = spectrum.signal_frequency[a:b]
    candidates = np.flatnonzero(w >= w.max() * (1 - 1e-12))
    centroid = stats.centroids[stats.dominant_cluster]
    best = candidates[np.argmin(np.abs(nu[candidates] - centroid))]
    return float(nu[best])


def suppress_side_clusters(spectrum: ClusterSpectrum, suppression: float) -> ClusterSpectrum:
    """Rescale every non-dominant cluster to ``1 - suppression`` of the dominant cluster's total weight."""
    if not 0 <= suppression <= 1:
        raise ValidationError("suppression must lie in [0, 1]")
    stats = cluster_stats(spectrum)
    a0, b0 = spectrum.clusters[stats.dominant_cluster]
    main_total = spectrum.weight[a0:b0].sum()
    w = spectrum.weight.copy()
    for k, (a, b) in enumerate(spectrum.clusters):
        if k != stats.dominant_cluster:
            w[a:b] *= (1 - suppression) * main_total / w[a:b].sum()
    return replace(spectrum, weight=w / w.max())


@dataclass(frozen=True)
class FilterCavity:
    fsr: float
    linewidth: float
    peak_transmission: float
    center_frequency: float

    def __post_init__(self):
        if not 0 < self.linewidth < self.fsr:
            raise ValidationError("FilterCavity: require 0 < linewidth < fsr")
        if not 0 < self.peak_transmission <= 1:
            raise ValidationError("FilterCavity: require 0 < peak_transmission <= 1")

    @property
    def finesse(self) -> float:
        return self.fsr / self.linewidth

    def mean_transmission(self) -> float:
        """Transmission averaged over one FSR, i.e. seen by broadband light."""
        coeff = (2 * self.finesse / np.pi) ** 2
        return self.peak_transmission / np.sqrt(1 + coeff)


def filter_transfer(fc: FilterCavity, frequency):
    """Airy transmission of the filter cavity."""
    d = np.asarray(frequency, dtype=float) - fc.center_frequency
    coeff = (2 * fc.finesse / np.pi) ** 2
    # reduce the phase modulo pi first: sin^2 is pi-periodic and d/fsr can be ~1e4
    phase = np.pi * np.remainder(d / fc.fsr, 1.0)
    return fc.peak_transmission / (1 + coeff * np.sin(phase) ** 2)


def spectral_transmission(spectrum: ClusterSpectrum, fc: FilterCavity) -> float:
    """Fraction of emitted pairs whose signal photon passes the filter."""
    if spectrum.is_empty:
        raise EmptyInputError("spectral_transmission: spectrum is empty")
    t = filter_transfer(fc, spectrum.signal_frequency)
    return float(np.dot(spectrum.weight, t) / spectrum.weight.sum())


def filtered_spectrum(spectrum: ClusterSpectrum, fc: FilterCavity) -> ClusterSpectrum:
    """Multiply each weight by the filter transmission at its signal frequency and renormalise.

    Cluster grouping depends only on mode frequencies, which the filter leaves
    untouched, so the grouping carries over.
    """
    w = spectrum.weight * filter_transfer(fc, spectrum.signal_frequency)
    if len(w) and w.max() > 0:
        w = w / w.max()
    return replace(spectrum, weight=w)
