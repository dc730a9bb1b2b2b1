"""Command line interface: ``multifilter {simulate,calibrate,detect,experiment}``.

Every flag may also come from a JSON file given with ``--config``; keys
are the flag names with dashes replaced by underscores.  Flags on the
command line win over the file.  The exit code is 0 whenever the
command ran to completion, whatever the test decided.
"""

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import plotting
from .detector import sequential_pipeline
from .experiments import EXPERIMENTS, ALIASES, ExperimentSpec, run_experiment
from .filtered_derivative import write_processes_csv
from .limit_law import DEFAULT_N_SIMS, Grid, calibrate
from .renewal_sim import (
    BOTH,
    PRESETS,
    RATE,
    VARIANCE,
    ChangePointModel,
    LifetimeLaw,
    sample_composite,
)
from .series import read_events, write_events

log = logging.getLogger("multifilter")


def floats(text):
    """``"25,50,75"`` -> ``[25.0, 50.0, 75.0]``."""
    try:
        return [float(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _as_floats(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(x) for x in value]
    return floats(value)


# -- model handling ---------------------------------------------------------

def model_from_dict(data):
    """``{"T": .., "change_points": [..], "laws": [{"mean": .., "sd"|"variance": ..}]}``."""
    laws = []
    for entry in data["laws"]:
        family = entry.get("family", "gamma")
        if "variance" in entry:
            laws.append(LifetimeLaw.from_variance(entry["mean"], entry["variance"], family))
        else:
            laws.append(LifetimeLaw(entry["mean"], entry["sd"], family))
    return ChangePointModel(float(data["T"]), tuple(data.get("change_points", ())), tuple(laws))


def _change_kind(a, b):
    rate, var = a.mean != b.mean, a.variance != b.variance
    return BOTH if rate and var else RATE if rate else VARIANCE


def truth_dict(model, seed):
    return {
        "T": model.T,
        "seed": seed,
        "change_points": [
            {"time": c, "kind": _change_kind(model.laws[j], model.laws[j + 1])}
            for j, c in enumerate(model.change_points)
        ],
        "segments": [
            {"start": a, "end": b, "mean": law.mean, "sd": law.sd, "variance": law.variance,
             "family": law.family}
            for a, b, law in model.segments()
        ],
    }


def _build_model(args):
    if args.preset:
        if args.preset not in PRESETS:
            raise ValueError(f"unknown preset {args.preset!r}; valid: {', '.join(PRESETS)}")
        return PRESETS[args.preset](args.T if args.T is not None else 2000.0)
    if args.model:
        data = args.model if isinstance(args.model, dict) else json.loads(Path(args.model).read_text())
        if args.T is not None:
            data = {**data, "T": args.T}
        return model_from_dict(data)
    if args.mean is None or args.sd is None or args.T is None:
        raise ValueError("give --preset, --model, or all of --mean, --sd and --T")
    return ChangePointModel(float(args.T), (), (LifetimeLaw(args.mean, args.sd),))


# -- commands ---------------------------------------------------------------

def cmd_simulate(args):
    model = _build_model(args)
    series = sample_composite(model, args.seed)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_events(series, out)
    truth = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    truth.write_text(json.dumps(truth_dict(model, args.seed), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(series)} events to {out} (truth: {truth})")


def _grid(T, windows, delta, resolution):
    if delta is not None:
        grid = Grid.regular(T, delta)
        for h in windows:
            grid.index(h, "window")
    else:
        grid = Grid.for_windows(T, windows, resolution)
    grid.check_windows(windows)
    return grid


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")


def cmd_calibrate(args):
    windows = _as_floats(args.windows)
    if not windows:
        raise ValueError("--windows is required")
    if args.T is None:
        raise ValueError("--T is required")
    _check_alpha(args.alpha)
    grid = _grid(args.T, windows, args.delta, args.resolution)
    q = calibrate(windows, grid, args.alpha, args.n_sims, args.seed, args.cache, args.workers)
    print(f"fingerprint {q.fingerprint}")
    print(f"Q {q.Q!r}")
    print(f"delta {grid.delta!r}")


def cmd_detect(args):
    if not args.input:
        raise ValueError("--input is required")
    series = read_events(args.input, args.T)
    rate_w = _as_floats(args.rate_windows)
    if not rate_w:
        raise ValueError("--rate-windows is required")
    var_w = _as_floats(args.var_windows) or rate_w
    _check_alpha(args.alpha)
    grid = _grid(series.T, sorted(set(rate_w) | set(var_w)), args.delta, args.resolution)
    q_rate = calibrate(rate_w, grid, args.alpha, args.n_sims, args.seed, args.cache, args.workers)
    q_var = calibrate(var_w, grid, args.alpha, args.n_sims, args.seed, args.cache, args.workers)
    result = sequential_pipeline(series, rate_w, var_w, grid, q_rate, q_var,
                                 correct_rate=not args.skip_rate_correction)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    doc = result.to_dict()
    doc["config"]["input"] = str(args.input)
    doc["config"]["alpha"] = args.alpha
    doc["config"]["n_sims"] = args.n_sims
    doc["config"]["seed"] = args.seed
    (out / "result.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    write_processes_csv(result.rate.processes, out / "rate_G.csv")
    write_processes_csv(result.variance.processes, out / "variance_G.csv")
    plotting.pipeline_figure(result, out / "processes.svg")
    for name, stage in (("rate", result.rate), ("variance", result.variance)):
        cps = ", ".join(f"{c.time:g}" for c in stage.change_points) or "no change points"
        print(f"{name}: M={stage.test.M:.3f} Q={stage.test.Q:.3f} -> {cps}")
    print(f"results in {out}")


def cmd_experiment(args):
    name = ALIASES.get(args.name, args.name)
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {args.name!r}; valid names: {', '.join(EXPERIMENTS)}")
    fields = {"experiment": name}
    for key in ("means", "sds", "window_multiples", "variance_factors", "mean_factors"):
        value = _as_floats(getattr(args, key))
        if value:
            fields[key] = tuple(value)
    for key in ("n_sims", "seed", "scale", "T", "alpha", "q_sims", "resolution"):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    spec = ExperimentSpec(**fields)
    report = run_experiment(spec, workers=args.workers, cache=args.cache)
    paths = report.write(args.outdir)
    print(f"{name}: {len(report.rows)} rows in {report.runtime:.1f} s")
    for p in paths:
        print(f"  {p}")


# -- argument parsing -------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON file supplying any of the flags")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")


def _calibration_flags(p):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-sims", type=int, default=DEFAULT_N_SIMS, help="Monte-Carlo paths for Q")
    p.add_argument("--delta", type=float, help="grid step (default: derived from the windows)")
    p.add_argument("--resolution", type=int, default=200, help="grid points per smallest window")
    p.add_argument("--cache", help="calibration cache (JSON)")


def build_parser():
    parser = argparse.ArgumentParser(prog="multifilter",
                                     description="Multiple filter detection of rate and variance changes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an event file and its ground truth")
    _common(p)
    p.add_argument("--output", "-o", required=True, help="event file to write")
    p.add_argument("--truth", help="ground truth JSON (default: <output>.truth.json)")
    p.add_argument("--preset", help=f"named model: {', '.join(PRESETS)}")
    p.add_argument("--model", help="JSON model file")
    p.add_argument("--mean", type=float, help="life time mean (single renewal process)")
    p.add_argument("--sd", type=float, help="life time sd (single renewal process)")
    p.add_argument("--T", type=float, help="horizon")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="compute or load the rejection threshold Q")
    _common(p)
    _calibration_flags(p)
    p.add_argument("--windows", type=floats, help="comma separated window sizes")
    p.add_argument("--T", type=float, help="horizon")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="run the rate and variance stages on an event file")
    _common(p)
    _calibration_flags(p)
    p.add_argument("--input", "-i", help="event file")
    p.add_argument("--T", type=float, help="horizon (overrides the file header)")
    p.add_argument("--rate-windows", type=floats)
    p.add_argument("--var-windows", type=floats, help="default: the rate windows")
    p.add_argument("--skip-rate-correction", action="store_true",
                   help="variance stage ignores detected rate change points")
    p.add_argument("--outdir", "-o", default="detect_out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("experiment", help="run a simulation study")
    _common(p)
    p.add_argument("name", nargs="?", help=f"one of: {', '.join(EXPERIMENTS)}")
    p.add_argument("--means", type=floats)
    p.add_argument("--sds", type=floats)
    p.add_argument("--window-multiples", type=floats)
    p.add_argument("--mean-factors", type=floats)
    p.add_argument("--variance-factors", type=floats)
    p.add_argument("--n-sims", type=int)
    p.add_argument("--q-sims", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--resolution", type=int)
    p.add_argument("--cache")
    p.add_argument("--outdir", "-o", default="experiment_out")
    p.set_defaults(func=cmd_experiment)
    return parser


def parse_args(argv):
    """Parse ``argv``; values from ``--config`` become the parser defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"{args.config}: top level must be an object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"{args.config}: unknown keys {', '.join(unknown)}")
        sub.set_defaults(**data)
        args = parser.parse_args(argv)
    return args


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "experiment" and not args.name:
        print(f"error: experiment name required; valid names: {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = _show_warning
            args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
