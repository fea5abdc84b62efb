"""Command-line entry point: simulate, analyze, predict, compare, records.

One INI configuration file drives every subcommand; command-line flags
override config keys.  Each run writes a manifest whose hash covers the
reproducibility-relevant inputs (config snapshot, seed, package version)
and is embedded in every output artifact; rerunning with the same manifest
reproduces the outputs byte for byte.

Exit status: 0 on success (and all requested comparisons passing),
1 on tolerance violations, 2 on bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .correlation import (AnalysisError, FitError, fft_spectrum,
                          filter_by_jump_count, fit_damped_cosine, g2_estimate,
                          time_filter)
from .params import ConfigError, PhysicalParams, params_from_dict, read_config
from .records import (Channel, RecordParseError, RecordValidationError,
                      merge_records, read_record, validate_record, write_record)
from .theory import (PAIR_PLUS_MINUS, PAIR_PM_ZERO, light_shift, pair_rates,
                     shift_report)
from .trajectory import (AtomModel, FeedbackProtocol, TrajectoryConfig,
                         default_jobs, run_ensemble)


# --------------------------------------------------------------------------
# Config plumbing
# --------------------------------------------------------------------------


def _load_sections(path) -> dict:
    if path is None:
        return {}
    return read_config(path)


def _params_from_sections(sections) -> PhysicalParams:
    return params_from_dict(sections.get("model", {}))


def _bool(text) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _feedback_from_sections(sections, args) -> FeedbackProtocol:
    raw = dict(sections.get("feedback", {}))
    kwargs = {
        "enabled": _bool(raw.get("enabled", "false")),
        "trigger_channel": raw.get("trigger_channel", "H"),
        "electronic_latency": float(raw.get("electronic_latency", 50e-9)),
        "delay_after_detection": float(raw.get("delay_after_detection", 0.0)),
        "window_duration": float(raw.get("window_duration", 3e-6)),
        "attenuation_factor": float(raw.get("attenuation_factor", 0.05)),
    }
    if getattr(args, "fb_delay", None) is not None:
        kwargs["delay_after_detection"] = args.fb_delay
        kwargs["enabled"] = True
    if getattr(args, "fb_window", None) is not None:
        kwargs["window_duration"] = args.fb_window
        kwargs["enabled"] = True
    if getattr(args, "fb_atten", None) is not None:
        kwargs["attenuation_factor"] = args.fb_atten
        kwargs["enabled"] = True
    return FeedbackProtocol(**kwargs)


def _trajectory_from_sections(sections, args) -> tuple[TrajectoryConfig, int]:
    raw = dict(sections.get("trajectory", {}))
    atom = AtomModel(kind=raw.get("atom_model", "fixed_max_coupled"),
                     mean_transit=float(raw.get("mean_transit", 5e-6)),
                     arrival_rate=float(raw.get("arrival_rate", 0.0)))
    init = raw.get("initial_atom_state", "g_zero")
    if "," in init:
        init = tuple(float(x) for x in init.split(","))
    config = TrajectoryConfig(
        duration=float(raw.get("duration", 100e-6)),
        dt_max=float(raw.get("dt_max", 1e-9)),
        seed=int(args.seed if args.seed is not None else raw.get("seed", 0)),
        n_max_v=int(raw.get("n_max_v", 2)),
        n_max_h=int(raw.get("n_max_h", 2)),
        atom_model=atom,
        initial_atom_state=init,
        feedback=_feedback_from_sections(sections, args),
    )
    n_traj = int(args.n_traj if getattr(args, "n_traj", None) is not None
                 else raw.get("n_traj", 1))
    return config, n_traj


def _manifest(sections, args, extra, info=None) -> dict:
    """Manifest whose hash covers only reproducibility-relevant inputs.

    `info` entries (paths, timing) are written to the manifest file but do
    not enter the hash, so identical inputs give identical artifacts no
    matter where the files live.
    """
    reproducible = {
        "version": __version__,
        "config": sections,
        "seed": getattr(args, "seed", None),
        **extra,
    }
    blob = json.dumps(reproducible, sort_keys=True, default=str)
    digest = hashlib.sha256(blob.encode()).hexdigest()[:16]
    return {"manifest_hash": digest, **reproducible, **(info or {})}


def _write_manifest(manifest, out_dir, timing_s) -> None:
    payload = dict(manifest)
    payload["wall_clock_s"] = timing_s  # informational; not part of the hash
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def _channel(name: str) -> Channel:
    try:
        return Channel[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown channel {name!r}")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    sections = _load_sections(args.config)
    params = _params_from_sections(sections)
    config, n_traj = _trajectory_from_sections(sections, args)
    manifest = _manifest(sections, args, {"command": "simulate",
                                          "n_traj": n_traj,
                                          "resolved_seed": config.seed})
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    result = run_ensemble(params, config, n_traj, jobs=args.jobs)
    ext = "qbr" if args.binary else "txt"
    for i, rec in enumerate(result.records):
        rec.metadata["manifest_hash"] = manifest["manifest_hash"]
        write_record(rec, os.path.join(args.out, f"record_{i:05d}.{ext}"))
    _write_manifest(manifest, args.out, time.time() - t0)
    print(f"wrote {n_traj} record(s) to {args.out}")
    return 0


def _parse_filter(spec_text: str):
    kind, _, rest = spec_text.partition(":")
    parts = [p for p in rest.split(",") if p]
    if kind == "jump-count":
        max_jumps = float(parts[0])
        window = float(parts[1]) if len(parts) > 1 else None
        return ("jump-count", max_jumps, window)
    if kind == "time":
        if len(parts) != 2:
            raise ConfigError("time filter needs window_ns,skip_us")
        return ("time", float(parts[0]) * 1e-9, float(parts[1]) * 1e-6)
    raise ConfigError(f"unknown filter {spec_text!r} "
                      "(use jump-count:N[,window_s] or time:window_ns,skip_us)")


def cmd_analyze(args) -> int:
    sections = _load_sections(args.config)
    analysis = dict(sections.get("analysis", {}))
    bin_ns = args.bin_ns if args.bin_ns is not None else float(analysis.get("bin_ns", 10))
    tau_max_us = (args.tau_max_us if args.tau_max_us is not None
                  else float(analysis.get("tau_max_us", 6.0)))
    start = _channel(args.start_channel or analysis.get("start_channel", "H_det_A"))
    stop = _channel(args.stop_channel or analysis.get("stop_channel", "H_det_B"))

    records = [read_record(p) for p in args.records]
    offsets, shift = [], 0
    for rec in records:
        offsets.append(shift)
        shift += rec.duration_ns
    record = merge_records(records, offsets) if len(records) > 1 else records[0]

    if args.filter:
        kind, *fargs = _parse_filter(args.filter)
        if kind == "jump-count":
            max_jumps, window = fargs
            gamma = _params_from_sections(sections).gamma if args.config else None
            record = filter_by_jump_count(record, max_jumps, window,
                                          gamma=gamma,
                                          start_channels=(start,))
        else:
            window, skip = fargs
            channels = (start, stop) if start != stop else (start,)
            record = time_filter(record, window, skip, channels=channels)

    corr = g2_estimate(record, (start,), (stop,), bin_width=bin_ns * 1e-9,
                       tau_max=tau_max_us * 1e-6,
                       conditioning=args.conditioning)

    digests = []
    for path in args.records:
        with open(path, "rb") as fh:
            digests.append(hashlib.sha256(fh.read()).hexdigest()[:16])
    manifest = _manifest(sections, args,
                         {"command": "analyze", "record_hashes": digests},
                         info={"records": list(args.records)})
    os.makedirs(args.out, exist_ok=True)
    tag = f"# manifest_hash={manifest['manifest_hash']}\n"
    with open(os.path.join(args.out, "g2.csv"), "w", encoding="utf-8") as fh:
        fh.write(tag + "tau_s,g2,stderr\n")
        for t, g, s in zip(corr.tau, corr.g2, corr.stderr):
            fh.write(f"{float(t)!r},{float(g)!r},{float(s)!r}\n")
    freqs, power = fft_spectrum(corr)
    with open(os.path.join(args.out, "spectrum.csv"), "w", encoding="utf-8") as fh:
        fh.write(tag + "freq_hz,power\n")
        for f, pw in zip(freqs, power):
            fh.write(f"{float(f)!r},{float(pw)!r}\n")
    fit_path = os.path.join(args.out, "fit.json")
    try:
        fit = fit_damped_cosine(corr, tau_range=(args.fit_from * 1e-6,
                                                 tau_max_us * 1e-6))
        payload = {"manifest_hash": manifest["manifest_hash"], **fit.as_dict()}
        status = 0
    except (FitError, AnalysisError) as exc:
        payload = {"manifest_hash": manifest["manifest_hash"], "error": str(exc),
                   "residual_norm": getattr(exc, "residual_norm", None)}
        status = 1
    with open(fit_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    _write_manifest(manifest, args.out, 0.0)
    print(f"analysis written to {args.out} "
          f"(n_starts={corr.n_starts}, pairs={int(corr.counts.sum())})")
    return status


def cmd_predict(args) -> int:
    sections = _load_sections(args.config)
    params = _params_from_sections(sections)
    alpha = args.alpha if args.alpha is not None else None
    report = shift_report(params, alpha)
    payload = {"alpha_sq": abs(alpha) ** 2 if alpha is not None
               else abs(params.drive_amplitude) ** 2,
               **report.as_dict()}
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        for key, value in payload.items():
            print(f"{key} = {value!r}")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_compare(args) -> int:
    sections = _load_sections(args.config)
    params = _params_from_sections(sections)
    with open(args.fit, "r", encoding="utf-8") as fh:
        fit = json.load(fh)
    if "error" in fit:
        print(f"error: fit file {args.fit} holds no converged fit", file=sys.stderr)
        return 2

    alpha = args.alpha
    geometry = args.geometry
    if geometry == "auto":
        geometry = PAIR_PM_ZERO if abs(params.lo_mix) > 0 else PAIR_PLUS_MINUS
    shift = light_shift(params, alpha)
    factor = 2.0 if geometry == PAIR_PLUS_MINUS else 1.0
    freq_pred = factor * (params.delta_g + shift)
    decay_pred = pair_rates(params, alpha, geometry)[1]

    dev_freq = abs(fit["freq"] - freq_pred) / abs(freq_pred)
    dev_decay = (abs(fit["decay"] - decay_pred) / abs(decay_pred)
                 if decay_pred else math.inf)
    ok_freq = dev_freq <= args.freq_tol
    ok_decay = dev_decay <= args.decay_tol
    summary = {
        "geometry": geometry,
        "freq_fit": fit["freq"], "freq_pred": freq_pred,
        "freq_rel_dev": dev_freq, "freq_tol": args.freq_tol, "freq_pass": ok_freq,
        "decay_fit": fit["decay"], "decay_pred": decay_pred,
        "decay_rel_dev": dev_decay, "decay_tol": args.decay_tol,
        "decay_pass": ok_decay,
    }
    print(json.dumps(summary, indent=2))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return 0 if (ok_freq and ok_decay) else 1


def cmd_records(args) -> int:
    if args.records_cmd == "validate":
        status = 0
        for path in args.paths:
            try:
                rec = read_record(path)
                validate_record(rec)
                print(f"{path}: OK ({rec.n_events} events, "
                      f"{rec.duration_ns} ns)")
            except (RecordParseError, RecordValidationError, OSError) as exc:
                print(f"{path}: INVALID: {exc}", file=sys.stderr)
                status = 1
        return status
    if args.records_cmd == "merge":
        records = [read_record(p) for p in args.paths]
        offsets = None
        if args.offsets_ns:
            offsets = [int(x) for x in args.offsets_ns.split(",")]
        merged = merge_records(records, offsets)
        write_record(merged, args.out)
        print(f"merged {len(records)} record(s) -> {args.out} "
              f"({merged.n_events} events)")
        return 0
    raise ConfigError("records subcommand required (validate | merge)")


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbeats",
        description="Conditional quantum-beat simulation and photon-record analysis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded trajectory ensembles")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    sim.add_argument("--n-traj", dest="n_traj", type=int, default=None)
    sim.add_argument("--jobs", type=int, default=None,
                     help=f"worker processes (default QBEATS_JOBS={default_jobs()})")
    sim.add_argument("--out", required=True)
    sim.add_argument("--binary", action="store_true",
                     help="write compact binary records (.qbr)")
    sim.add_argument("--fb-delay", type=float, default=None,
                     help="feedback delay after detection (s)")
    sim.add_argument("--fb-window", type=float, default=None,
                     help="feedback window duration (s)")
    sim.add_argument("--fb-atten", type=float, default=None,
                     help="feedback attenuation factor in [0,1]")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="g2, spectrum and damped-cosine fit")
    ana.add_argument("records", nargs="+", help="record file(s)")
    ana.add_argument("--config", default=None)
    ana.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    ana.add_argument("--out", required=True)
    ana.add_argument("--bin-ns", dest="bin_ns", type=float, default=None)
    ana.add_argument("--tau-max-us", dest="tau_max_us", type=float, default=None)
    ana.add_argument("--start-channel", default=None)
    ana.add_argument("--stop-channel", default=None)
    ana.add_argument("--conditioning", choices=("all_pairs", "start_stop"),
                     default="all_pairs")
    ana.add_argument("--fit-from", dest="fit_from", type=float, default=0.5,
                     help="fit window start (us)")
    ana.add_argument("--filter", default=None,
                     help="jump-count:N[,window_s] or time:window_ns,skip_us")
    ana.set_defaults(func=cmd_analyze)

    pre = sub.add_parser("predict", help="closed-form shift/decoherence report")
    pre.add_argument("--config", required=True)
    pre.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    pre.add_argument("--alpha", type=complex, default=None,
                     help="override the steady field amplitude")
    pre.add_argument("--format", choices=("text", "json"), default="text")
    pre.add_argument("--json-out", dest="json_out", default=None)
    pre.set_defaults(func=cmd_predict)

    cmp_ = sub.add_parser("compare", help="fit vs prediction with tolerances")
    cmp_.add_argument("--config", required=True)
    cmp_.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    cmp_.add_argument("--fit", required=True, help="fit.json from analyze")
    cmp_.add_argument("--alpha", type=complex, default=None,
                      help="field amplitude for the prediction (e.g. measured)")
    cmp_.add_argument("--geometry", choices=("auto", PAIR_PLUS_MINUS, PAIR_PM_ZERO),
                      default="auto")
    cmp_.add_argument("--freq-tol", dest="freq_tol", type=float, default=0.10)
    cmp_.add_argument("--decay-tol", dest="decay_tol", type=float, default=0.25)
    cmp_.add_argument("--json-out", dest="json_out", default=None)
    cmp_.set_defaults(func=cmd_compare)

    rec = sub.add_parser("records", help="record file utilities")
    rec_sub = rec.add_subparsers(dest="records_cmd", required=True)
    val = rec_sub.add_parser("validate")
    val.add_argument("paths", nargs="+")
    mrg = rec_sub.add_parser("merge")
    mrg.add_argument("paths", nargs="+")
    mrg.add_argument("--out", required=True)
    mrg.add_argument("--offsets-ns", dest="offsets_ns", default=None,
                     help="comma-separated per-record offsets")
    rec.set_defaults(func=cmd_records)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RecordParseError, RecordValidationError,
            AnalysisError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
