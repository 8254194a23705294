"""Operator entry points.

Subcommands: ``serve`` (run the middleware), ``simulate`` (write a scenario
recording plus its ground-truth file), ``calibrate`` (run a solver offline
over a recording), ``replay`` (serve a recording), and ``report`` (accuracy
vs ground truth, guidance latency, frame counts).

Exit codes: 0 success, 1 usage error, 2 data or solver error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import protocol as proto
from .calibration import CalibrationError
from .calibration.results import NeedleCalibration
from .config import ConfigError, ServerConfig, load_config
from .guidance import apply_needle_calibration, compute_guidance
from .history import PoseBuffer
from .recording import message_to_record, read_records, record_to_message, write_records
from .routines import run_calibration_routine
from .simulator import BODY_NEEDLE, NoiseModel, Simulator, make_scenario

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    p = _Parser(prog="needleguide", description=__doc__)
    sub = p.add_subparsers(dest="command")

    serve = sub.add_parser("serve", help="run the tracking middleware")
    serve.add_argument("--config", help="flat key-value config file")
    serve.add_argument("--tcp-host")
    serve.add_argument("--tcp-port", type=int)
    serve.add_argument("--ws-host")
    serve.add_argument("--ws-port", type=int)
    serve.add_argument("--source", help="simulator:<scenario> | recording:<path> | tcp:<host>:<port>")
    serve.add_argument("--magnification", type=float)
    serve.add_argument("--seed", type=int)
    serve.add_argument("--rate", type=float, dest="rate_hz")
    serve.add_argument("--noise-sigma", type=float, dest="noise_sigma_mm", help="mm")
    serve.add_argument("--noise-angle-deg", type=float, dest="noise_angle_deg")
    serve.add_argument("--sim-pace", type=float, dest="sim_pace")
    serve.add_argument("--no-handedness-conversion", action="store_true")

    sim = sub.add_parser("simulate", help="generate a scenario recording")
    sim.add_argument("--scenario", required=True,
                     help="static | pivot | axis_spin | handeye | us_sweep | insertion")
    sim.add_argument("--noise-sigma", type=float, default=0.0, help="position noise, mm")
    sim.add_argument("--noise-angle-deg", type=float, default=0.0,
                     help="orientation noise, degrees")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--rate", type=float, default=120.0)
    sim.add_argument("--frames", type=int, help="frame/motion/pair count override")
    sim.add_argument("--out", required=True, help="recording file (JSON Lines)")
    sim.add_argument("--truth", help="ground-truth file (default: <out>.truth.jsonl)")

    cal = sub.add_parser("calibrate", help="run a calibration routine over a recording")
    cal.add_argument("--routine", required=True,
                     choices=["sphere", "circle", "tip", "axis", "handeye", "usplane"])
    cal.add_argument("--input", required=True)
    cal.add_argument("--truth", help="compare against this ground-truth file")
    cal.add_argument("--spacing", type=float,
                     help="known pixel spacing (m/px) for usplane; omit to estimate")
    cal.add_argument("--json", action="store_true", dest="as_json")

    rep = sub.add_parser("replay", help="serve a recording to clients")
    rep.add_argument("--input", required=True)
    rep.add_argument("--rate", type=float, default=1.0, help="speed multiplier; 0 = unpaced")
    rep.add_argument("--tcp-host", default="127.0.0.1")
    rep.add_argument("--tcp-port", type=int, default=9750)
    rep.add_argument("--ws-host", default="127.0.0.1")
    rep.add_argument("--ws-port", type=int, default=9751)

    report = sub.add_parser("report", help="accuracy/latency report for a recording")
    report.add_argument("--input", required=True)
    report.add_argument("--truth", required=True)
    report.add_argument("--json", action="store_true", dest="as_json")

    return p


# --------------------------------------------------------------------------
# subcommands

def _cmd_simulate(args) -> int:
    kwargs = {}
    if args.frames is not None:
        name = args.scenario.lower()
        if name in ("handeye", "hand_eye"):
            kwargs["n_motions"] = args.frames
        elif name in ("us_sweep", "usplane", "us"):
            kwargs["n_pairs"] = args.frames
        else:
            kwargs["n_frames"] = args.frames
    scenario = make_scenario(args.scenario, seed=args.seed, **kwargs)
    noise = NoiseModel(
        position_sigma=args.noise_sigma * 1e-3,
        orientation_sigma=math.radians(args.noise_angle_deg),
        seed=args.seed,
    )
    sim = Simulator(scenario, noise=noise, rate_hz=args.rate)

    records = []
    for event in sim.events():
        records.append(event if isinstance(event, dict) else message_to_record(event))
    n = write_records(args.out, records)
    truth_path = args.truth or f"{args.out}.truth.jsonl"
    write_records(truth_path, sim.truth_records())
    print(f"wrote {n} records to {args.out}, ground truth to {truth_path}")
    return 0


def _cmd_calibrate(args) -> int:
    summary = run_calibration_routine(args.routine, args.input, args.truth, args.spacing)
    if args.as_json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        for key, value in summary.items():
            print(f"{key}: {value}")
    return 0


def _cmd_replay(args) -> int:
    from .server import run as run_server

    cfg = ServerConfig(
        tcp_host=args.tcp_host, tcp_port=args.tcp_port,
        ws_host=args.ws_host, ws_port=args.ws_port,
        source=f"recording:{args.input}", replay_rate=args.rate,
    )
    if not Path(args.input).exists():
        raise FileNotFoundError(f"recording not found: {args.input}")
    run_server(cfg)
    return 0


def _cmd_serve(args) -> int:
    from .server import run as run_server

    cfg = load_config(args.config) if args.config else ServerConfig()
    for key in ("tcp_host", "tcp_port", "ws_host", "ws_port", "source",
                "magnification", "seed", "rate_hz", "noise_sigma_mm",
                "noise_angle_deg", "sim_pace"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if args.no_handedness_conversion:
        cfg.handedness_conversion = False
    cfg.validate()
    run_server(cfg)
    return 0


def _guidance_latency_probe(input_path: str) -> Optional[dict]:
    """Replays needle frames through history + guidance + encode in-process
    and reports per-frame latency percentiles."""
    plan = None
    tip_offset = axis_dir = None
    needle_frames = []
    for rec in read_records(input_path):
        msg = record_to_message(rec)
        if isinstance(msg, proto.PlanUpdate):
            plan = msg.to_plan()
        elif isinstance(msg, proto.CalibrationResult):
            if msg.kind == proto.CalibrationKind.TIP:
                tip_offset = msg.vector
            elif msg.kind == proto.CalibrationKind.AXIS:
                axis_dir = msg.vector
        elif isinstance(msg, proto.RigidBodyFrame) and msg.body_id == BODY_NEEDLE:
            needle_frames.append(msg)
    if plan is None or tip_offset is None or axis_dir is None or not needle_frames:
        return None
    calib = NeedleCalibration(tip_offset=tip_offset, axis_dir=axis_dir,
                              tip_rms=0.0, axis_rms=0.0)
    buffer = PoseBuffer(BODY_NEEDLE)
    samples = []
    for frame in needle_frames:
        t0 = time.perf_counter()
        buffer.push(frame.pose())
        state = compute_guidance(plan, apply_needle_calibration(frame.pose(), calib))
        proto.encode(proto.Guidance(state=state))
        samples.append(time.perf_counter() - t0)
    lat = sorted(samples)

    def pct(p: float) -> float:
        return lat[min(len(lat) - 1, int(p * len(lat)))] * 1e3

    return {
        "frames": len(lat),
        "p50_ms": pct(0.50),
        "p90_ms": pct(0.90),
        "p99_ms": pct(0.99),
        "max_ms": lat[-1] * 1e3,
    }


_ROUTINES_BY_SCENARIO = {
    "pivot": ("tip",),
    "axis_spin": ("axis",),
    "handeye": ("handeye",),
    "us_sweep": ("usplane",),
}


def _cmd_report(args) -> int:
    scenarios = [rec["scenario"] for rec in read_records(args.truth)
                 if rec.get("type") == "truth"]
    routines: dict[str, dict] = {}
    for scenario in scenarios:
        for routine in _ROUTINES_BY_SCENARIO.get(scenario, ()):
            routines[routine] = run_calibration_routine(
                routine, args.input, args.truth
            )

    frame_counts: dict[str, int] = {}
    rejects = 0
    buffers: dict[int, PoseBuffer] = {}
    video = 0
    for rec in read_records(args.input):
        t = rec.get("type")
        if t == "rigid_body_frame":
            key = f"body_{rec['body_id']}"
            frame_counts[key] = frame_counts.get(key, 0) + 1
            buf = buffers.setdefault(rec["body_id"], PoseBuffer(rec["body_id"]))
            if not buf.push(record_to_message(rec).pose()):
                rejects += 1
        elif t == "video_frame":
            video += 1

    summary = {
        "routines": routines,
        "frames": {**frame_counts, "video": video, "out_of_order_rejected": rejects},
    }
    latency = _guidance_latency_probe(args.input)
    if latency is not None:
        summary["guidance_latency_ms"] = latency

    if args.as_json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        for routine, data in routines.items():
            errs = {k: v for k, v in data.items()
                    if k.endswith(("_error_mm", "_error_deg", "_rel_error", "rms_mm"))}
            print(f"{routine}: " + ", ".join(f"{k}={v:.6g}" for k, v in errs.items()))
        print(f"frames: {summary['frames']}")
        if latency is not None:
            print("guidance latency (ms): "
                  f"p50={latency['p50_ms']:.3f} p90={latency['p90_ms']:.3f} "
                  f"p99={latency['p99_ms']:.3f} max={latency['max_ms']:.3f}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE_ERROR
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    handlers = {
        "serve": _cmd_serve,
        "simulate": _cmd_simulate,
        "calibrate": _cmd_calibrate,
        "replay": _cmd_replay,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (CalibrationError, ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
