"""Command line entry point: ``segpass run | gain | converge``."""

import argparse
import csv
import sys

import numpy as np

from .exceptions import ConfigError, SegpassError
from .experiment import (
    default_config_path,
    emit_csv,
    framework_channel,
    load_config,
    run_experiment,
    trial_unit_positions,
    _positions,
)
from .geometry import avg_gain_conventional, avg_gain_segmented, gain_ratio
from .mse_solver import SolverConfig, ao_mmse
from .wsr_solver import ao_wmmse


def parse_int_range(text):
    """Parse ``"1..8"``, ``"1,2,4"`` or ``"4"`` into a list of ints."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer range {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("segment counts must be >= 1")
    return values


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="segpass",
                                     description="Segmented pinching-antenna uplink simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo comparison, written as CSV")
    run.add_argument("--config", help="TOML experiment file (default: bundled desk-scale setup)")
    run.add_argument("--out", default="-", help="CSV output path, '-' for stdout")
    run.add_argument("--seed", type=_u64)
    run.add_argument("--trials", type=int)
    run.add_argument("--segments", type=int, help="override the number of segments M")
    run.add_argument("--length", type=float, help="override the waveguide length area_x in meters")
    run.add_argument("--protocol", choices=["SS", "SA", "SM"],
                     help="run only the segmented framework with this protocol")
    run.add_argument("--objective", choices=["MSE", "WSR"])
    run.add_argument("--loss-case", choices=["CaseI", "CaseII"])

    gain = sub.add_parser("gain", help="average in-waveguide gain table")
    gain.add_argument("--alpha", type=float, default=0.0092, help="attenuation in nepers per meter")
    gain.add_argument("--length", type=float, default=20.0, help="total waveguide length in meters")
    gain.add_argument("--segments", type=parse_int_range, default=parse_int_range("1..8"),
                      help="segment counts, e.g. 1..8 or 1,2,4")

    conv = sub.add_parser("converge", help="per-iteration traces of one seeded trial")
    conv.add_argument("--config")
    conv.add_argument("--out", default="-")
    conv.add_argument("--seed", type=_u64)
    conv.add_argument("--trial", type=int, default=0)
    conv.add_argument("--objective", choices=["MSE", "WSR"])
    conv.add_argument("--protocol", choices=["SS", "SA", "SM"], action="append",
                      help="protocol(s) to trace (default: all three)")
    return parser


def _load_spec(args):
    spec = load_config(args.config if args.config else default_config_path())
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "objective", None) is not None:
        changes["objective"] = args.objective
    if getattr(args, "loss_case", None) is not None:
        changes["loss_case"] = args.loss_case
    scen = {}
    if getattr(args, "segments", None) is not None:
        scen["num_segments"] = args.segments
        scen["feed_x"] = None
    if getattr(args, "length", None) is not None:
        scen["area_x"] = args.length
        scen["feed_x"] = None
    if scen:
        try:
            changes["scenario"] = spec.scenario.replace(**scen)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), "scenario") from exc
    if isinstance(getattr(args, "protocol", None), str):
        changes["frameworks"] = (f"JCC-{args.protocol}",)
    return spec.replace(**changes) if changes else spec


def cmd_run(args):
    spec = _load_spec(args)
    emit_csv(run_experiment(spec), args.out)
    return 0


def cmd_gain(args):
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["M", "avg_gain_segmented", "avg_gain_conventional", "gain_ratio"])
    conventional = avg_gain_conventional(args.alpha, args.length)
    for m in args.segments:
        writer.writerow([m, f"{avg_gain_segmented(args.alpha, args.length, m):.10g}",
                         f"{conventional:.10g}", f"{gain_ratio(args.alpha, args.length, m):.10g}"])
    return 0


def cmd_converge(args):
    spec = _load_spec(args)
    protocols = args.protocol or ["SS", "SA", "SM"]
    sc = spec.scenario_at(spec.points[0][1]) if spec.points else spec.scenario_at(None)
    ues = _positions(trial_unit_positions(spec.seed, args.trial, sc.num_ues), sc)
    rows = []
    for prot in protocols:
        eff = framework_channel(f"JCC-{prot}", ues, sc, spec.placement_resolution)
        cfg_kw = dict(max_iters=spec.max_iters, tol_rel=spec.tol_rel)
        if spec.objective == "MSE":
            rep = ao_mmse(eff, sc.p_max, SolverConfig(rate_targets=sc.rate_targets, **cfg_kw))
        else:
            rep = ao_wmmse(eff, sc.p_max, sc.theta, sc.mse_budget, SolverConfig(**cfg_kw))
        for i, mse in enumerate(rep.mse_trace):
            wsr = rep.wsr_trace[i] if rep.wsr_trace else float(np.sum(sc.theta * np.log2(1 + rep.sinr_trace[i])))
            sur = rep.surrogate_trace[i] if rep.surrogate_trace else ""
            rows.append([prot, spec.objective, i + 1, repr(float(mse)), repr(float(wsr)),
                         repr(float(sur)) if sur != "" else ""])
    header = ["protocol", "objective", "iteration", "mse", "wsr", "surrogate"]
    fh = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "gain": cmd_gain, "converge": cmd_converge}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"segpass: config error: {exc}", file=sys.stderr)
        return 2
    except (SegpassError, OSError) as exc:
        print(f"segpass: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
