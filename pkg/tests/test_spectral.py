import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cespdc.errors import EmptyInputError, RangeError, ValidationError
from cespdc.spectral import (
    CavityModel,
    DispersionModel,
    FilterCavity,
    PhaseMatchingEnvelope,
    cluster_stats,
    filter_transfer,
    filtered_spectrum,
    joint_spectrum,
    make_spectrum,
    mode_comb,
    modes_above_half_max,
    refractive_index,
    vernier_spacing,
)

# 5 mol% MgO:congruent LiNbO3, extraordinary, 24.5 C, evaluated once by hand
N_E_1064 = 2.1481542422227045


def _sellmeier_oracle(lam_um):
    a = (5.756, 0.0983, 0.2020, 189.32, 12.52, 1.32e-2)
    l2 = lam_um ** 2
    return math.sqrt(a[0] + a[1] / (l2 - a[2] ** 2) + a[3] / (l2 - a[4] ** 2) - a[5] * l2)


def test_sellmeier_default_value():
    assert _sellmeier_oracle(1.064) == pytest.approx(N_E_1064, rel=1e-14)
    assert refractive_index(DispersionModel(), 1.064e-6) == pytest.approx(N_E_1064, rel=1e-12)


def test_sellmeier_range_error():
    with pytest.raises(RangeError):
        refractive_index(DispersionModel(), 0.39e-6)


@given(st.floats(0.4e-6, 1.6e-6))
def test_constant_index_model(lam):
    assert refractive_index(DispersionModel.constant(2.2), lam) == pytest.approx(2.2, rel=1e-14)


def test_cavity_invariant():
    with pytest.raises(ValidationError, match="invariant"):
        CavityModel(414e6, 418e6, 100.0, 245.0, 2.9e6, 1.7e6)
    with pytest.raises(ValidationError):
        CavityModel.from_linewidths(414e6, 418e6, 2.9e6, 1.7e6, internal_loss=1.0)


def test_mode_comb_count_and_spacing(cavity):
    m, nu = mode_comb(cavity, "signal", 494.6e12, 2e9)
    assert len(m) == 5
    assert np.allclose(np.diff(nu), 414e6, rtol=0, atol=1e-3)
    m1, nu1 = mode_comb(cavity, "signal", 494.6e12, 2e9)
    assert np.array_equal(nu, nu1) and np.array_equal(m, m1)
    assert len(mode_comb(cavity, "signal", 494.6e12, 300e6)[0]) == 1


def test_default_spectrum_clusters(components):
    s = components.spectrum
    stats = cluster_stats(s)
    assert stats.clusters_count == 3
    assert stats.cluster_spacing == pytest.approx(44.5e9, rel=0.02)
    assert modes_above_half_max(s, stats.dominant_cluster) == 4
    cav = components.cavity
    assert stats.cluster_spacing == pytest.approx(vernier_spacing(cav.fsr_signal, cav.fsr_idler), rel=0.02)


def test_energy_conservation_exact(spectrum):
    # idler frequencies are stored as pump - signal, so the identity holds bitwise
    assert np.array_equal(spectrum.idler_frequency, spectrum.pump_frequency - spectrum.signal_frequency)
    assert spectrum.weight.max() == 1.0
    assert np.all((spectrum.weight >= 0) & (spectrum.weight <= 1))


def test_equal_fsr_gives_one_cluster(components):
    cav = CavityModel.from_linewidths(414e6, 414e6, 2.9e6, 1.7e6)
    s = joint_spectrum(cav, components.envelope, components.pump_frequency)
    stats = cluster_stats(s)
    assert stats.clusters_count == 1
    assert stats.cluster_spacing == 0.0
    assert len(s) == len(mode_comb(cav, "signal", 0.0, 2 * components.envelope.fwhm)[0])


def test_narrow_envelope_single_cluster(components):
    env = PhaseMatchingEnvelope(components.envelope.center_signal_frequency, 5e9)
    s = joint_spectrum(components.cavity, env, components.pump_frequency)
    assert cluster_stats(s).clusters_count == 1


def test_clusters_merge_as_fsr_difference_shrinks(components):
    counts, widest = [], []
    for dfsr in (16e6, 8e6, 4e6, 2e6, 1e6, 0.1e6, 0.0):
        cav = CavityModel.from_linewidths(414e6, 414e6 + dfsr, 2.9e6, 1.7e6)
        s = joint_spectrum(cav, components.envelope, components.pump_frequency, weight_model="equal")
        stats = cluster_stats(s)
        counts.append(stats.clusters_count)
        widest.append(max(stats.modes_per_cluster))
    assert counts == sorted(counts, reverse=True)
    assert counts[-1] == 1
    assert widest == sorted(widest)


def test_joint_spectrum_deterministic(components):
    args = (components.cavity, components.envelope, components.pump_frequency)
    a, b = joint_spectrum(*args), joint_spectrum(*args)
    assert np.array_equal(a.signal_frequency, b.signal_frequency)
    assert np.array_equal(a.weight, b.weight)


def test_empty_spectrum_is_not_an_error(components):
    # no idler line within kappa damping anywhere in the span
    cav = CavityModel.from_linewidths(414e6, 414e6, 2.9e6, 1.7e6)
    s = joint_spectrum(cav, components.envelope, components.pump_frequency, detuning_signal=200e6)
    assert s.is_empty
    with pytest.raises(EmptyInputError):
        cluster_stats(s)


def test_cluster_stats_synthetic():
    nu = np.array([0.0, 0.4e9, 10.0e9, 10.4e9]) + 5e14
    s = make_spectrum(7e14, [0, 1, 2, 3], [0, -1, -2, -3], nu, np.ones(4), 414e6)
    stats = cluster_stats(s)
    assert stats.clusters_count == 2
    assert stats.cluster_spacing == pytest.approx(10e9, rel=1e-9)
    single = make_spectrum(7e14, [0], [0], [5e14], [1.0], 414e6)
    assert cluster_stats(single).clusters_count == 1
    assert cluster_stats(single).cluster_spacing == 0.0


@pytest.fixture(scope="module")
def fc(components):
    return FilterCavity(16.8e9, 80e6, 0.11, components.envelope.center_signal_frequency)


def _airy(fc, d):
    f = fc.fsr / fc.linewidth
    return fc.peak_transmission / (1 + (2 * f / math.pi) ** 2 * math.sin(math.pi * d / fc.fsr) ** 2)


def test_filter_transfer_values(fc):
    c = fc.center_frequency
    assert filter_transfer(fc, c) == pytest.approx(0.11, rel=1e-12)
    f = fc.finesse
    assert filter_transfer(fc, c + fc.fsr / 2) < 0.11 / (f ** 2 / 4)
    adjacent = filter_transfer(fc, c + 414e6)
    assert adjacent == pytest.approx(_airy(fc, 414e6), rel=1e-9)
    assert adjacent < 0.01 * 0.11


@given(st.floats(-50e9, 50e9), st.integers(-20, 20))
def test_filter_transfer_periodic_and_bounded(d, k):
    fc = FilterCavity(16.8e9, 80e6, 0.11, 4.947e14)
    t0 = filter_transfer(fc, fc.center_frequency + d)
    t1 = filter_transfer(fc, fc.center_frequency + d + k * fc.fsr)
    assert 0 < t0 <= 0.11
    assert t1 == pytest.approx(t0, rel=1e-6)


def test_filtered_spectrum_single_mode(filtered_components):
    comp = filtered_components
    out = filtered_spectrum(comp.spectrum, comp.filter)
    rel = out.weight / out.weight.max()
    assert np.count_nonzero(rel >= 0.9) == 1
    assert np.all(np.sort(rel)[:-1] < 0.01)


def test_identity_filter_single_mode():
    s = make_spectrum(7e14, [0], [0], [5e14], [1.0], 414e6)
    fc = FilterCavity(16.8e9, 16.8e9 / 2, 1.0, 5e14)
    out = filtered_spectrum(s, fc)
    assert np.array_equal(out.weight, s.weight)
    assert np.array_equal(out.signal_frequency, s.signal_frequency)


def test_filter_off_every_mode(spectrum):
    fc = FilterCavity(16.8e9, 80e6, 1.0, spectrum.signal_frequency[0] + 8.4e9 + 207e6)
    t = filter_transfer(fc, spectrum.signal_frequency)
    assert np.all(spectrum.weight * t < 1e-2 * spectrum.weight.max())


@settings(max_examples=25, deadline=None)
@given(st.floats(1e9, 30e9))
def test_vernier_law(spacing):
    from cespdc.spectral import idler_fsr_for_spacing

    fsr_i = idler_fsr_for_spacing(414e6, spacing)
    assert vernier_spacing(414e6, fsr_i) == pytest.approx(spacing, rel=1e-9)
