"""Command-line interface: ``cespdc <verb> [--config FILE] [--out DIR] [--seed N]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .analysis import coincidence_rate, cross_correlation_histogram, fit_double_exponential, g2_zero_from_histogram
from .config import PRESETS, ScenarioConfig, load_config, load_preset
from .correlation import analytic_g2, convolve_response, g1_signal, uniform_grid
from .errors import CespdcError, FormatError, ValidationError
from .montecarlo import simulate_stream
from .scenarios import (
    build_components,
    delay_pdf,
    g1_grid,
    pair_rate_per_mw,
    rate_model,
    report_header,
    run_scenario,
    spectrum_metrics,
)
from .spectral import filtered_spectrum


def _resolve(args, preset: str = "fig2_unfiltered") -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else load_preset(preset)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, params={**cfg.params, "seed": args.seed})
    if args.out:
        cfg = replace(cfg, output_dir=Path(args.out))
    return cfg


def _finish(cfg: ScenarioConfig, name: str, metrics: dict) -> None:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output_dir / "report.txt"
    io.write_report(metrics, path, header=report_header(name, cfg.seed))
    for key, (value, unit) in metrics.items():
        print(f"{key}={io.format_value(value)} {unit}".rstrip())
    print(f"report={path}")


def _spectrum_for(comp):
    return filtered_spectrum(comp.spectrum, comp.filter) if comp.filter is not None else comp.spectrum


def cmd_spectrum(args) -> int:
    cfg = _resolve(args)
    comp = build_components(cfg.params)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    io.write_spectrum(comp.spectrum, cfg.output_dir / "spectrum.csv")
    metrics: dict = {"modes": (len(comp.spectrum), "")}
    spectrum_metrics(comp, metrics)
    _finish(cfg, "spectrum", metrics)
    return 0


def cmd_g2(args) -> int:
    cfg = _resolve(args)
    comp = build_components(cfg.params)
    cav = comp.cavity
    reach = 5 / (2 * np.pi * min(cav.damping_signal, cav.damping_idler))
    grid = uniform_grid(reach, args.step)
    trace = analytic_g2(comp.correlation_config(_spectrum_for(comp)), grid)
    if args.response:
        trace = convolve_response(trace, args.response)
    trace = trace.normalized("peak")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    io.write_trace(trace, cfg.output_dir / "g2.csv")
    _finish(cfg, "g2", {"points": (len(grid), ""), "step": (args.step, "s")})
    return 0


def cmd_g1(args) -> int:
    cfg = _resolve(args)
    comp = build_components(cfg.params)
    trace = g1_signal(_spectrum_for(comp), comp.cavity.damping_signal, g1_grid(cfg.params),
                      cfg.params["g1"]["background_fraction"])
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    io.write_trace(trace, cfg.output_dir / "g1.csv", column="dt_s")
    _finish(cfg, "g1", {"g1_min": (float(trace.values.min()), ""), "g1_max": (float(trace.values.max()), "")})
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    comp = build_components(cfg.params)
    m = cfg.params["measurement"]
    pdf = delay_pdf(comp, _spectrum_for(comp))
    kappa = pair_rate_per_mw(comp, delay_pdf(comp))
    power = args.power if args.power is not None else m["pump_powers"][0]
    duration = args.duration if args.duration is not None else m["duration"]
    s, i = simulate_stream(rate_model(comp, kappa, power), comp.chain_s, comp.chain_i, pdf, duration, cfg.seed)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        io.write_timetags_csv([s, i], cfg.output_dir / "timetags.csv")
    else:
        io.write_timetags(s, cfg.output_dir / "signal.ttag")
        io.write_timetags(i, cfg.output_dir / "idler.ttag")
    _finish(cfg, "simulate", {
        "pump_power": (power, "mW"),
        "duration": (duration, "s"),
        "pair_rate_per_mw": (kappa, "Hz/mW"),
        "singles_signal": (len(s) / duration, "Hz"),
        "singles_idler": (len(i) / duration, "Hz"),
    })
    return 0


def _read_streams(args):
    if args.timetags:
        streams = io.read_timetags_csv(args.timetags)
        if 0 not in streams or 1 not in streams:
            raise FormatError("time-tag CSV must hold channels 0 (signal) and 1 (idler)")
        return streams[0], streams[1]
    if not (args.signal and args.idler):
        raise FormatError("analyze needs --signal and --idler, or --timetags")
    return io.read_timetags(args.signal), io.read_timetags(args.idler)


def cmd_analyze(args) -> int:
    cfg = _resolve(args)
    m = cfg.params["measurement"]
    s, i = _read_streams(args)
    duration = args.duration if args.duration is not None else max(s.duration_ps, i.duration_ps) * 1e-12
    power = args.power if args.power is not None else m["pump_powers"][0]
    hist = cross_correlation_histogram(s, i, m["bin_width"], tuple(m["tau_range"]))
    fit = fit_double_exponential(hist)
    raw, _ = g2_zero_from_histogram(hist, tuple(m["accidental_window"]), fit=fit)
    rate = coincidence_rate(hist, duration, power, m["coincidence_window"], fit.tau_peak,
                            tuple(m["accidental_window"]))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    io.write_table([(float(x), int(n)) for x, n in zip(hist.centers, hist.counts)],
                   ("tau_center_s", "counts"), cfg.output_dir / "histogram.csv")
    _finish(cfg, "analyze", {
        "coincidence_rate_per_mw": (rate, "Hz/mW"),
        "g2_raw": (raw, ""),
        "linewidth_signal_fit": (fit.linewidth_signal / 1e6, "MHz"),
        "linewidth_idler_fit": (fit.linewidth_idler / 1e6, "MHz"),
        "tau_peak": (fit.tau_peak * 1e9, "ns"),
        "singles_signal": (len(s) / duration, "Hz"),
        "singles_idler": (len(i) / duration, "Hz"),
    })
    return 0


def cmd_scenario(args) -> int:
    cfg = _resolve(args, args.preset)
    if args.config and cfg.preset != args.preset:
        raise ValidationError(f"config preset {cfg.preset!r} does not match requested {args.preset!r}")
    bundle = run_scenario(cfg)
    for key, (value, unit) in bundle.metrics.items():
        print(f"{key}={io.format_value(value)} {unit}".rstrip())
    print(f"report={bundle.output_dir / 'report.txt'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file (defaults to the fig2_unfiltered preset)")
    common.add_argument("--out", help="output directory (overrides config and $CESPDC_OUT)")
    common.add_argument("--seed", type=int, help="random seed override")

    parser = argparse.ArgumentParser(prog="cespdc", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("spectrum", parents=[common], help="doubly resonant mode spectrum")
    p = sub.add_parser("g2", parents=[common], help="analytic cross-correlation trace")
    p.add_argument("--step", type=float, default=10e-12, help="grid step in seconds")
    p.add_argument("--response", type=float, default=None, help="detector response FWHM in seconds")
    sub.add_parser("g1", parents=[common], help="signal first-order coherence")
    p = sub.add_parser("simulate", parents=[common], help="simulate detector time tags")
    p.add_argument("--power", type=float, help="pump power in mW")
    p.add_argument("--duration", type=float, help="measurement time in seconds")
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p = sub.add_parser("analyze", parents=[common], help="analyse recorded time tags")
    p.add_argument("--signal", help="signal time tags (binary)")
    p.add_argument("--idler", help="idler time tags (binary)")
    p.add_argument("--timetags", help="time tags in CSV form (channels 0 and 1)")
    p.add_argument("--power", type=float, help="pump power in mW")
    p.add_argument("--duration", type=float, help="measurement time in seconds")
    p = sub.add_parser("scenario", parents=[common], help="run a preset scenario")
    p.add_argument("preset", choices=PRESETS + ("custom",))
    return parser


COMMANDS = {
    "spectrum": cmd_spectrum,
    "g2": cmd_g2,
    "g1": cmd_g1,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "scenario": cmd_scenario,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except CespdcError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
