"""Synthetic time-tag streams for the signal and idler detectors.

Randomness comes from numpy's PCG64. The simulated interval is cut into
fixed-length blocks and block ``b`` draws from
``PCG64(SeedSequence([seed, b]))``, so output does not depend on how blocks are
grouped into chunks for processing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationTrace
from .errors import PreconditionError, ValidationError

PS = 1e-12


@dataclass(frozen=True)
class SourceRateModel:
    """Pair generation inside the cavity.

    ``pair_rate_per_mw`` is the rate of pairs created per mW of pump during
    measurement gates; each photon then leaves the cavity with its escape
    probability. Gates alternate with lock periods of length
    ``(1 - duty_cycle_measurement) * gate_period``.
    """

    pair_rate_per_mw: float
    pump_power: float
    duty_cycle_measurement: float = 0.55
    escape_signal: float = 1.0
    escape_idler: float = 1.0
    gate_period: float = 10e-3

    def __post_init__(self):
        if not self.pair_rate_per_mw >= 0 or not self.pump_power >= 0:
            raise ValidationError("SourceRateModel: rates must be non-negative")
        if not 0 < self.duty_cycle_measurement <= 1:
            raise ValidationError("SourceRateModel: duty_cycle_measurement must be in (0, 1]")
        for name in ("escape_signal", "escape_idler"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"SourceRateModel: {name} must be in [0, 1]")
        if not self.gate_period > 0:
            raise ValidationError("SourceRateModel: gate_period must be > 0")

    @property
    def pair_rate(self) -> float:
        return self.pair_rate_per_mw * self.pump_power

    def gate_intervals(self, start: float, stop: float) -> np.ndarray:
        """Measurement intervals intersected with ``[start, stop)``, shape (n, 2)."""
        p = self.gate_period
        on = self.duty_cycle_measurement * p
        k0 = int(np.floor(start / p))
        k1 = int(np.ceil(stop / p))
        k = np.arange(k0, k1 + 1)
        a = np.maximum(k * p, start)
        b = np.minimum(k * p + on, stop)
        keep = b > a
        return np.column_stack((a[keep], b[keep]))

    def gated_time(self, duration: float) -> float:
        iv = self.gate_intervals(0.0, duration)
        return float(np.sum(iv[:, 1] - iv[:, 0]))

    def in_gate(self, t):
        phase = np.remainder(np.asarray(t, dtype=float), self.gate_period)
        return phase < self.duty_cycle_measurement * self.gate_period


@dataclass(frozen=True)
class DetectionChain:
    """One detection arm. ``background_rate_per_mw`` is uncorrelated pump-induced noise."""

    path_transmission: float
    detector_efficiency: float
    dark_count_rate: float = 0.0
    jitter_fwhm: float = 0.0
    extra_filter_transmission: float = 1.0
    background_rate_per_mw: float = 0.0
    dead_time: float = 0.0

    def __post_init__(self):
        for name in ("path_transmission", "detector_efficiency", "extra_filter_transmission"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"DetectionChain: {name} must be in [0, 1]")
        for name in ("dark_count_rate", "jitter_fwhm", "background_rate_per_mw", "dead_time"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"DetectionChain: {name} must be >= 0")

    @property
    def survival(self) -> float:
        return self.path_transmission * self.detector_efficiency * self.extra_filter_transmission

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm / (2 * np.sqrt(2 * np.log(2)))


@dataclass(frozen=True)
class TimeTagStream:
    channel: int
    timestamps: np.ndarray  # int64 picoseconds
    duration_ps: int
    seed: int | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        if len(ts) and (np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] > self.duration_ps):
            raise ValidationError("TimeTagStream: timestamps must be strictly increasing within [0, duration]")

    def __len__(self):
        return len(self.timestamps)

    def rate(self, measurement_time: float) -> float:
        return len(self) / measurement_time


@dataclass
class SimulationTruth:
    """Bookkeeping of what the simulation generated (for oracle checks)."""

    pairs: int = 0
    signal_from_pairs: int = 0
    idler_from_pairs: int = 0
    both_detected: int = 0
    gated_time: float = 0.0
    per_block: list = field(default_factory=list)


def _check_pdf(pdf: CorrelationTrace):
    if pdf.normalization != "unit_area_pdf":
        raise PreconditionError("delay pdf must be tagged unit_area_pdf")
    if not pdf.is_uniform():
        raise PreconditionError("delay pdf grid must be uniform")
    if len(pdf.values) > 1:
        area = np.trapezoid(pdf.values, pdf.tau_grid)
        if abs(area - 1) > 1e-6:
            raise PreconditionError(f"delay pdf is not normalised (area {area:.9f})")


def delay_cdf(pdf: CorrelationTrace, x):
    """CDF of the distribution sampled by :func:`sample_delay`.

    Each grid value is the density over a bin of one grid step centred on
    that grid point, so the CDF is piecewise linear between bin edges.
    """
    tau, p = pdf.tau_grid, pdf.values
    h = pdf.step if len(tau) > 1 else 1.0
    mass = p * h
    cum = np.concatenate(([0.0], np.cumsum(mass))) / mass.sum()
    edges = np.concatenate((tau - h / 2, [tau[-1] + h / 2]))
    return np.interp(x, edges, cum)


def sample_delay(pdf: CorrelationTrace, rng: np.random.Generator, size=None):
    """Inverse-CDF samples of the delay distribution described by ``pdf``."""
    _check_pdf(pdf)
    tau, p = pdf.tau_grid, pdf.values
    if len(tau) == 1:
        return float(tau[0]) if size is None else np.full(size, tau[0])
    h = pdf.step
    cum = np.cumsum(p)
    cum = cum / cum[-1]
    n = 1 if size is None else size
    u = rng.random(n)
    k = np.searchsorted(cum, u, side="right")
    k = np.minimum(k, len(tau) - 1)
    x = tau[k] - h / 2 + h * rng.random(n)
    return float(x[0]) if size is None else x


def _uniform_in_gates(rng, intervals, count):
    lengths = intervals[:, 1] - intervals[:, 0]
    cum = np.concatenate(([0.0], np.cumsum(lengths)))
    u = rng.random(count) * cum[-1]
    j = np.minimum(np.searchsorted(cum, u, side="right") - 1, len(lengths) - 1)
    return intervals[j, 0] + (u - cum[j])


def block_seed_sequence(seed: int, block: int, stream_id: int | None = None) -> np.random.SeedSequence:
    """Seed of one time block: ``SeedSequence([seed, block])`` or ``[seed, stream_id, block]``."""
    key = [seed, block] if stream_id is None else [seed, stream_id, block]
    return np.random.SeedSequence(key)


def _simulate_block(b, t0, t1, rates, chain_s, chain_i, pdf, seed, stream_id):
    rng = np.random.Generator(np.random.PCG64(block_seed_sequence(seed, b, stream_id)))
    intervals = rates.gate_intervals(t0, t1)
    t_gate = float(np.sum(intervals[:, 1] - intervals[:, 0])) if len(intervals) else 0.0
    empty = np.empty(0)
    if t_gate == 0:
        return empty, empty, (0, 0, 0, 0, 0.0)

    n_pairs = int(rng.poisson(rates.pair_rate * t_gate))
    # thin pairs by outcome class; multinomial counts are equivalent to per-pair Bernoulli draws
    p_s = rates.escape_signal * chain_s.survival
    p_i = rates.escape_idler * chain_i.survival
    n_both, n_s_only, n_i_only, _ = rng.multinomial(
        n_pairs, [p_s * p_i, p_s * (1 - p_i), (1 - p_s) * p_i, (1 - p_s) * (1 - p_i)])
    both = _uniform_in_gates(rng, intervals, n_both)
    s_only = _uniform_in_gates(rng, intervals, n_s_only)
    i_only = _uniform_in_gates(rng, intervals, n_i_only)
    n_s, n_i = n_both + n_s_only, n_both + n_i_only
    ts = np.concatenate((both, s_only)) + chain_s.jitter_sigma * rng.standard_normal(n_s)
    delays = sample_delay(pdf, rng, n_i) if n_i else empty
    ti = np.concatenate((both, i_only)) + delays + chain_i.jitter_sigma * rng.standard_normal(n_i)

    noise = []
    for chain in (chain_s, chain_i):
        rate = chain.dark_count_rate + chain.background_rate_per_mw * rates.pump_power
        n = rng.poisson(rate * t_gate)
        noise.append(_uniform_in_gates(rng, intervals, n))
    truth = (n_pairs, int(n_s), int(n_i), int(n_both), t_gate)
    return np.concatenate((ts, noise[0])), np.concatenate((ti, noise[1])), truth


def _finalize(times, rates, duration, dead_time):
    times = times[(times >= 0) & (times <= duration)]
    times = times[rates.in_gate(times)]
    ps = np.unique(np.rint(times / PS).astype(np.int64))
    if dead_time > 0 and len(ps):
        ps = _apply_dead_time(ps, int(round(dead_time / PS)))
    return ps


def _apply_dead_time(ps, dead_ps):
    keep = np.zeros(len(ps), dtype=bool)
    last = None
    for k, t in enumerate(ps):
        if last is None or t - last >= dead_ps:
            keep[k] = True
            last = t
    return ps[keep]


def simulate_stream(
    rates: SourceRateModel,
    chain_s: DetectionChain,
    chain_i: DetectionChain,
    delay_pdf: CorrelationTrace,
    duration: float,
    seed: int,
    *,
    block_length: float = 1.0,
    chunks: int = 1,
    stream_id: int | None = None,
    return_truth: bool = False,
):
    """Simulate both detectors over ``duration`` seconds of wall-clock time.

    Signal events are ``creation + jitter``; idler events are ``creation +
    delay + jitter`` with the delay drawn from ``delay_pdf``. Dark counts and
    background are Poisson over gated time, and events falling in lock periods
    are discarded. ``stream_id`` separates independent runs sharing one seed.
    """
    if not duration > 0:
        raise PreconditionError("simulate_stream: duration must be > 0")
    if not block_length > 0:
        raise PreconditionError("simulate_stream: block_length must be > 0")
    _check_pdf(delay_pdf)
    n_blocks = int(np.ceil(duration / block_length))
    groups = np.array_split(np.arange(n_blocks), max(1, min(chunks, n_blocks)))
    sig, idl = [], []
    truth = SimulationTruth()
    for group in groups:
        for b in group:
            t0, t1 = b * block_length, min((b + 1) * block_length, duration)
            s, i, tr = _simulate_block(int(b), t0, t1, rates, chain_s, chain_i, delay_pdf, seed, stream_id)
            sig.append(s)
            idl.append(i)
            truth.pairs += tr[0]
            truth.signal_from_pairs += tr[1]
            truth.idler_from_pairs += tr[2]
            truth.both_detected += tr[3]
            truth.gated_time += tr[4]
            truth.per_block.append(tr)
    dur_ps = int(round(duration / PS))
    streams = (
        TimeTagStream(0, _finalize(np.concatenate(sig), rates, duration, chain_s.dead_time), dur_ps, seed),
        TimeTagStream(1, _finalize(np.concatenate(idl), rates, duration, chain_i.dead_time), dur_ps, seed),
    )
    if return_truth:
        return streams + (truth,)
    return streams
