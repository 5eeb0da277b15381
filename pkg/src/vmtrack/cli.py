"""Command-line front end.

    vmtrack simulate  --spec scenario.json --out DIR
    vmtrack track     --frames frames.jsonl --out DIR [filter options]
    vmtrack evaluate  --est trajectories.csv --truth truth.csv --out DIR
    vmtrack plot-data --est trajectories.csv [--truth truth.csv] --out DIR

Exit codes: 0 success, 2 I/O problem, 3 invalid input, 4 internal error.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings

from . import io as vio
from .evaluation import evaluate
from .model import FilterConfig, FrameOrderError, MalformedInputError, ModelParams
from .simulator import ScenarioSpec, generate
from .track_manager import Tracker
from .vem_filter import EmptyFrameWarning

logger = logging.getLogger("vmtrack")

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_INTERNAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _require_file(path):
    if not os.path.isfile(path):
        raise CliError(f"cannot read {path}: no such file", EXIT_IO)


def _prepare_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc.strerror}", EXIT_IO)
    if not os.access(path, os.W_OK):
        raise CliError(f"output directory {path} is not writable", EXIT_IO)


def cmd_simulate(args):
    _require_file(args.spec)
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec_dict = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.spec}: not valid JSON ({exc.msg})", EXIT_INVALID)
    if args.seed is not None:
        spec_dict["rng_seed"] = args.seed
    try:
        spec = ScenarioSpec.from_dict(spec_dict)
    except (TypeError, ValueError) as exc:
        raise CliError(f"{args.spec}: {exc}", EXIT_INVALID)
    _prepare_out(args.out)
    frames, truth = generate(spec)
    vio.write_frames_jsonl(os.path.join(args.out, "frames.jsonl"), frames, fps=spec.fps)
    vio.write_truth_csv(os.path.join(args.out, "truth.csv"), truth)
    with open(os.path.join(args.out, "scenario.json"), "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{len(frames)} frames, {spec.n_sources} sources -> {args.out}")
    return EXIT_OK


def _read_frames(path):
    _require_file(path)
    if path.endswith(".csv"):
        return vio.read_frames_csv(path), vio.DEFAULT_FPS
    return vio.read_frames_jsonl(path)


def _filter_config(args):
    return FilterConfig(
        birth_window_L=args.L,
        birth_threshold_tau0=args.tau0,
        vad_window_D=args.D,
        vad_threshold_delta=args.delta,
        death_frames=args.death_frames,
        record_elbo_trace=args.dump_vem,
    )


def cmd_track(args):
    frames, fps = _read_frames(args.frames)
    try:
        config = _filter_config(args)
        params = ModelParams(args.kappa_y, args.kappa_d)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID)
    _prepare_out(args.out)
    tracker = Tracker(params, config)
    outputs, diagnostics = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyFrameWarning)
        for frame in frames:
            out = tracker.step(frame)
            outputs.append(out)
            if args.dump_vem:
                st = tracker.last_state
                diagnostics.append({
                    "t": out.t, "n_iter": st.n_iter, "converged": st.converged,
                    "elbo_trace": st.elbo_trace, "kappa_y": st.params.kappa_y,
                    "kappa_d": st.params.kappa_d, "weights": list(st.params.weights)})
    with open(os.path.join(args.out, "frame_outputs.jsonl"), "w", encoding="utf-8") as fh:
        for out in outputs:
            fh.write(json.dumps(out.to_record()) + "\n")
    vio.write_trajectories_csv(os.path.join(args.out, "trajectories.csv"), outputs)
    if args.dump_vem:
        with open(os.path.join(args.out, "vem_diagnostics.jsonl"), "w", encoding="utf-8") as fh:
            for d in diagnostics:
                fh.write(json.dumps(d) + "\n")
    n_ids = len({tr.id for out in outputs for tr in out.tracks})
    print(f"{len(frames)} frames at {fps:g} fps, {n_ids} tracks -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    _require_file(args.est)
    _require_file(args.truth)
    est = vio.read_trajectories_csv(args.est)
    truth = vio.read_truth_csv(args.truth)
    _prepare_out(args.out)
    report = evaluate(est, truth, gate_deg=args.gate_deg, fa_denominator=args.fa_denominator)
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json(indent=2, sort_keys=True) + "\n")
    print(report.summary_line())
    return EXIT_OK


def sample_frames(n_frames, fps, hz):
    """Frame indices at ``hz`` samples per second for a ``fps`` sequence."""
    if hz <= 0 or fps <= 0:
        raise ValueError("rates must be positive")
    step = fps / hz
    out, k = [], 0
    while True:
        t = int(math.floor(k * step + 1e-9))
        if t >= n_frames:
            return out
        out.append(t)
        k += 1


def cmd_plot_data(args):
    _require_file(args.est)
    series = [("track", tr) for tr in vio.read_trajectories_csv(args.est)]
    if args.truth:
        _require_file(args.truth)
        series += [("truth", tr) for tr in vio.read_truth_csv(args.truth)]
    _prepare_out(args.out)
    n_frames = max((int(s.t.max()) + 1 for _, s in series if s.t.size), default=0)
    try:
        keep = set(sample_frames(n_frames, args.fps, args.hz))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID)
    path = os.path.join(args.out, "plot_data.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "kind", "id", "azimuth_rad", "active"])
        for kind, s in series:
            for t, az, on in zip(s.t, s.azimuth, s.active):
                if int(t) in keep:
                    w.writerow([repr(int(t) / args.fps), kind, s.id, repr(float(az)), int(on)])
    print(f"{len(keep)} sample times -> {path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vmtrack", description="Von Mises multi-source direction tracker")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scenario")
    s.add_argument("--spec", required=True, help="scenario JSON file")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    d = FilterConfig()
    t = sub.add_parser("track", help="run the tracker on an observation file")
    t.add_argument("--frames", required=True, help="frames .jsonl (or .csv)")
    t.add_argument("--out", required=True)
    t.add_argument("--kappa-y", type=float, default=10.0)
    t.add_argument("--kappa-d", type=float, default=100.0)
    t.add_argument("--tau0", type=float, default=d.birth_threshold_tau0)
    t.add_argument("--L", type=int, default=d.birth_window_L)
    t.add_argument("--delta", type=float, default=d.vad_threshold_delta)
    t.add_argument("--D", type=int, default=d.vad_window_D)
    t.add_argument("--death-frames", type=int, default=d.death_frames)
    t.add_argument("--dump-vem", action="store_true", help="write per-frame VEM diagnostics")
    t.add_argument("--seed", type=int, default=0,
                   help="accepted for reproducible pipelines; the tracker itself is deterministic")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="score trajectories against ground truth")
    e.add_argument("--est", required=True, help="trajectories.csv from 'track'")
    e.add_argument("--truth", required=True, help="truth.csv from 'simulate'")
    e.add_argument("--out", required=True)
    e.add_argument("--gate-deg", type=float, default=15.0)
    e.add_argument("--fa-denominator", choices=("estimates", "truth"), default="estimates")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("plot-data", help="downsample trajectories for plotting")
    g.add_argument("--est", required=True)
    g.add_argument("--truth", default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--hz", type=float, default=12.0)
    g.add_argument("--fps", type=float, default=vio.DEFAULT_FPS)
    g.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FrameOrderError, MalformedInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
