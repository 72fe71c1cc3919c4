"""File formats: time tags (binary and CSV), correlation traces, spectra and reports."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .correlation import NORMALIZATIONS, CorrelationTrace
from .errors import FormatError
from .montecarlo import TimeTagStream
from .spectral import ClusterSpectrum

MAGIC = b"TTAG"
VERSION = 1
_HEADER = struct.Struct("<4sHHQ")
SPECTRUM_COLUMNS = ("m_s", "m_i", "nu_s_hz", "nu_i_hz", "weight", "cluster_id")


def write_timetags(stream: TimeTagStream, path) -> None:
    """Little-endian binary: 16-byte header then one u64 per timestamp in ps."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, stream.channel, stream.duration_ps))
        fh.write(np.asarray(stream.timestamps, dtype="<u8").tobytes())


def read_timetags(path, seed: int | None = None) -> TimeTagStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, channel, duration = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = data[_HEADER.size:]
    if len(body) % 8:
        raise FormatError(f"{path}: body is not a whole number of u64 records")
    ts = np.frombuffer(body, dtype="<u8").astype(np.int64)
    return TimeTagStream(channel, ts, duration, seed)


def write_timetags_csv(streams, path) -> None:
    """CSV with header ``channel,timestamp_ps``; several streams may share a file."""
    if isinstance(streams, TimeTagStream):
        streams = [streams]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channel", "timestamp_ps"])
        for st in streams:
            for t in st.timestamps:
                w.writerow([st.channel, int(t)])


def read_timetags_csv(path, duration_ps: int | None = None) -> dict:
    """Return ``{channel: TimeTagStream}``; duration defaults to the last timestamp."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["channel", "timestamp_ps"]:
            raise FormatError(f"{path}: expected header channel,timestamp_ps")
        rows = [(int(a), int(b)) for a, b in r]
    by_channel: dict = {}
    for ch, t in rows:
        by_channel.setdefault(ch, []).append(t)
    out = {}
    for ch, ts in by_channel.items():
        ts = np.array(ts, dtype=np.int64)
        out[ch] = TimeTagStream(ch, ts, duration_ps if duration_ps is not None else int(ts.max(initial=0)))
    return out


def write_trace(trace: CorrelationTrace, path, column: str = "tau_s") -> None:
    with open(path, "w") as fh:
        fh.write(f"# normalization={trace.normalization}\n")
        fh.write(f"{column},value\n")
        for x, v in zip(trace.tau_grid, trace.values):
            fh.write(f"{x:.17g},{v:.17g}\n")


def read_trace(path) -> CorrelationTrace:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# normalization="):
        raise FormatError(f"{path}: missing normalization comment")
    norm = lines[0].split("=", 1)[1].strip()
    if norm not in NORMALIZATIONS:
        raise FormatError(f"{path}: unknown normalization {norm!r}")
    if len(lines) < 2 or lines[1] not in ("tau_s,value", "dt_s,value"):
        raise FormatError(f"{path}: bad column header")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:] if ln], dtype=float)
    data = data.reshape(-1, 2)
    return CorrelationTrace(data[:, 0], data[:, 1], norm)


def write_spectrum(spectrum: ClusterSpectrum, path) -> None:
    ids = spectrum.cluster_ids()
    with open(path, "w") as fh:
        fh.write(f"# pump_frequency_hz={spectrum.pump_frequency:.17g}\n")
        fh.write(",".join(SPECTRUM_COLUMNS) + "\n")
        for k in range(len(spectrum)):
            fh.write(f"{spectrum.m_signal[k]},{spectrum.m_idler[k]},{spectrum.signal_frequency[k]:.17g},"
                     f"{spectrum.idler_frequency[k]:.17g},{spectrum.weight[k]:.17g},{ids[k]}\n")


def read_spectrum(path) -> ClusterSpectrum:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# pump_frequency_hz="):
        raise FormatError(f"{path}: missing pump frequency comment")
    pump = float(lines[0].split("=", 1)[1])
    if len(lines) < 2 or lines[1] != ",".join(SPECTRUM_COLUMNS):
        raise FormatError(f"{path}: bad column header")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    m_s = np.array([int(r[0]) for r in rows], dtype=np.int64)
    m_i = np.array([int(r[1]) for r in rows], dtype=np.int64)
    nu_s = np.array([float(r[2]) for r in rows])
    nu_i = np.array([float(r[3]) for r in rows])
    w = np.array([float(r[4]) for r in rows])
    ids = np.array([int(r[5]) for r in rows], dtype=np.int64)
    bounds = np.flatnonzero(np.diff(ids)) + 1
    starts = np.concatenate(([0], bounds)) if len(ids) else np.array([], dtype=int)
    stops = np.concatenate((bounds, [len(ids)])) if len(ids) else np.array([], dtype=int)
    return ClusterSpectrum(pump, m_s, m_i, nu_s, nu_i, w,
                           tuple((int(a), int(b)) for a, b in zip(starts, stops)))


def write_report(metrics, path, header: str | None = None) -> None:
    """``name=value unit`` lines. ``metrics`` maps name to ``(value, unit)``.

    Only the optional header line may vary between identical runs.
    """
    with open(path, "w") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        for name, (value, unit) in metrics.items():
            fh.write(f"{name}={format_value(value)} {unit}".rstrip() + "\n")


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def read_report(path) -> dict:
    out = {}
    for ln in Path(path).read_text().splitlines():
        if not ln or ln.startswith("#"):
            continue
        name, rest = ln.split("=", 1)
        value, _, unit = rest.partition(" ")
        out[name] = (value, unit)
    return out


def write_table(rows, columns, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) if not isinstance(v, float) else f"{v:.17g}" for v in row) + "\n")


__all__ = [
    "write_timetags", "read_timetags", "write_timetags_csv", "read_timetags_csv",
    "write_trace", "read_trace", "write_spectrum", "read_spectrum",
    "write_report", "read_report", "write_table",
]
