import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cespdc import io
from cespdc.correlation import CorrelationTrace, g1_signal
from cespdc.errors import FormatError
from cespdc.montecarlo import TimeTagStream

stamps = st.lists(st.integers(0, 2 ** 62), max_size=200, unique=True).map(sorted)


@settings(max_examples=40, deadline=None)
@given(stamps, st.integers(0, 7))
def test_binary_timetags_round_trip(tmp_path_factory, ts, channel):
    path = tmp_path_factory.mktemp("tt") / "s.ttag"
    stream = TimeTagStream(channel, np.array(ts, dtype=np.int64), 2 ** 62 + 1)
    io.write_timetags(stream, path)
    back = io.read_timetags(path)
    assert back.channel == channel
    assert back.duration_ps == stream.duration_ps
    assert np.array_equal(back.timestamps, stream.timestamps)
    assert back.timestamps.dtype == np.int64


def test_binary_timetags_bad_input(tmp_path):
    p = tmp_path / "bad.ttag"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(FormatError):
        io.read_timetags(p)
    p.write_bytes(b"TTAG")
    with pytest.raises(FormatError):
        io.read_timetags(p)
    io.write_timetags(TimeTagStream(0, np.array([1, 2]), 10), p)
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        io.read_timetags(p)


def test_csv_timetags_round_trip(tmp_path):
    s = TimeTagStream(0, np.array([3, 10, 99]), 100)
    i = TimeTagStream(1, np.array([4, 50]), 100)
    path = tmp_path / "tags.csv"
    io.write_timetags_csv([s, i], path)
    back = io.read_timetags_csv(path, duration_ps=100)
    assert np.array_equal(back[0].timestamps, s.timestamps)
    assert np.array_equal(back[1].timestamps, i.timestamps)
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        io.read_timetags_csv(tmp_path / "x.csv")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_subnormal=False), min_size=1, max_size=50))
def test_trace_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("tr") / "t.csv"
    tau = np.arange(len(values)) * 1.7e-12 - 3.3e-9
    trace = CorrelationTrace(tau, np.array(values), "peak")
    io.write_trace(trace, path)
    back = io.read_trace(path)
    assert back.normalization == "peak"
    assert np.array_equal(back.tau_grid, trace.tau_grid)
    assert np.array_equal(back.values, trace.values)


def test_trace_bad_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("tau_s,value\n0,1\n")
    with pytest.raises(FormatError):
        io.read_trace(p)


def test_spectrum_round_trip(tmp_path, spectrum):
    path = tmp_path / "spectrum.csv"
    io.write_spectrum(spectrum, path)
    back = io.read_spectrum(path)
    assert back.pump_frequency == spectrum.pump_frequency
    assert back.clusters == spectrum.clusters
    for name in ("m_signal", "m_idler", "signal_frequency", "weight"):
        assert np.array_equal(getattr(back, name), getattr(spectrum, name))
    # idler column is pump - signal, so rereading reproduces it bit for bit
    assert np.array_equal(back.idler_frequency, spectrum.idler_frequency)
    dt = np.linspace(0, 100e-12, 11)
    assert np.array_equal(g1_signal(back, 2.9e6, dt).values, g1_signal(spectrum, 2.9e6, dt).values)


def test_report_round_trip(tmp_path):
    metrics = {"rate": (100.25, "Hz/mW"), "count": (4, ""), "flag": (True, "")}
    path = tmp_path / "report.txt"
    io.write_report(metrics, path, header="run at noon")
    lines = path.read_text().splitlines()
    assert lines[0] == "# run at noon"
    assert lines[1:] == ["rate=100.25 Hz/mW", "count=4", "flag=true"]
    back = io.read_report(path)
    assert back["rate"] == ("100.25", "Hz/mW")
    assert float(back["rate"][0]) == 100.25
