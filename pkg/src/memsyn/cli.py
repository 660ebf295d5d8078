"""Command-line entry point: ``memsyn <subcommand> [options]``.

Every subcommand writes its CSV (and JSON where relevant) plus a
``manifest.json`` into ``--out``; ``--svg`` adds a plot. Exit status is 0
on success, 1 for invalid input and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .device import (DeviceParams, DeviceState, ProgrammingError, PulseSpec, apply_pulse,
                     conductance_of, iv_sweep, step_gap)
from .experiments import (FREQ_GRID, STDP_DTS, Bench, init_g_sweep, run_from_state)
from .fitting import (CALIBRATION_TARGETS, DatasetError, FitError, calibrate_device, dataset_rows,
                      fit_triplet, load_dataset_csv, residuals, synthetic_dataset,
                      DATASET_COLUMNS)
from .harness import ConfigError, ExperimentConfig, Outputs, map_points, point_seed, run_experiment
from .protocols import (ProtocolError, TripletOrder, gen_frequency_pairs, gen_pair, gen_quadruplet,
                        gen_tetanic, gen_triplet, ms_to_s)
from .rcb import RcbDynamicsParams, SingularLatticeError, apply_bias_step, cycle_states, \
    equivalent_resistance, synthesize_state
from .triplet import TripletParams

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

DEFAULT_RCB_TARGETS = (150.0, 400.0, 1200.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _global_flags(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=default(None),
                        help="JSON config (device/bench sections are used by every subcommand)")
    parser.add_argument("--seed", type=int, default=default(42), help="master seed")
    parser.add_argument("--out", type=Path, default=default(Path("results")),
                        help="output directory")
    parser.add_argument("--svg", action="store_true", default=default(False),
                        help="also render an SVG plot")
    parser.add_argument("--workers", type=int, default=default(1),
                        help="process-pool size for sweeps")


# -- context -----------------------------------------------------------------

class Context:
    def __init__(self, args):
        self.args = args
        self.params = DeviceParams()
        self.bench = Bench()
        self.config = None
        if args.config is not None:
            if not args.config.exists():
                raise FileNotFoundError(f"config file not found: {args.config}")
            self.config = ExperimentConfig.load(args.config)
            self.params, self.bench = self.config.device, self.config.bench
        self.out = Outputs(args.out) if args.command != "run" else None

    def inputs(self) -> dict:
        echo = {}
        for k, v in sorted(vars(self.args).items()):
            if k == "func":
                continue
            echo[k] = str(v) if isinstance(v, Path) else v
        return {"args": echo, "device": self.params.to_dict(), "bench": self.bench.to_dict()}

    def finish(self, extra: dict | None = None):
        self.out.manifest(self.args.command, self.inputs(), self.args.seed, extra)


def _x0(args, default):
    return default if args.x0 is None else args.x0


def _dg_point(item, params):
    program, x0 = item
    dg, _, traj = run_from_state(program, DeviceState(x0), params)
    return dg, traj


def _sweep(ctx, programs, x0):
    fn = partial(_dg_point, params=ctx.params)
    return map_points(fn, [(p, x0) for p in programs], ctx.args.workers)


# -- subcommands -------------------------------------------------------------

def cmd_stdp_pairs(ctx, a):
    dts = a.dt_ms or [s * d for d in (1e3 * t for t in STDP_DTS) for s in (-1, 1)]
    dts = sorted(dts)
    x0 = _x0(a, ctx.bench.stdp_x0)
    progs = [gen_pair(ms_to_s(d), a.n_reps, a.freq_hz) for d in dts]
    res = _sweep(ctx, progs, x0)
    rows = [(d, dg) for d, (dg, _) in zip(dts, res)]
    ctx.out.csv("stdp_pairs.csv", rows, ["dt_ms", "dG_percent"])
    if a.svg:
        ctx.out.svg("stdp_pairs.svg", [(dts, [r[1] for r in rows], "pairs")],
                    xlabel="dt (ms)", ylabel="dG (%)")


def cmd_triplets(ctx, a):
    timings = list(zip(a.dt1_ms, a.dt2_ms))
    if len(a.dt1_ms) != len(a.dt2_ms):
        raise UsageError("--dt1-ms and --dt2-ms need the same number of values")
    x0 = _x0(a, ctx.bench.stdp_x0)
    items = [(o, d1, d2) for o in TripletOrder for d1, d2 in timings]
    progs = [gen_triplet(o, ms_to_s(d1), ms_to_s(d2), a.n_reps, timing=a.timing)
             for o, d1, d2 in items]
    res = _sweep(ctx, progs, x0)
    rows = [(o.value, d1, d2, dg) for (o, d1, d2), (dg, _) in zip(items, res)]
    ctx.out.csv("triplets.csv", rows, ["order", "dt1_ms", "dt2_ms", "dG_percent"])
    if a.svg:
        series = []
        for o in TripletOrder:
            sel = [r for r in rows if r[0] == o.value]
            series.append((list(range(len(sel))), [r[3] for r in sel], o.value))
        ctx.out.svg("triplets.svg", series, xlabel="timing index", ylabel="dG (%)")


def cmd_quadruplets(ctx, a):
    Ts = sorted(a.T_ms)
    x0 = _x0(a, ctx.bench.stdp_x0)
    progs = [gen_quadruplet(ms_to_s(T), ms_to_s(a.dt_ms), a.n_reps) for T in Ts]
    res = _sweep(ctx, progs, x0)
    rows = [(T, a.dt_ms, dg) for T, (dg, _) in zip(Ts, res)]
    ctx.out.csv("quadruplets.csv", rows, ["T_ms", "dt_ms", "dG_percent"])
    if a.svg:
        ctx.out.svg("quadruplets.svg", [(Ts, [r[2] for r in rows], "quadruplets")],
                    xlabel="T (ms)", ylabel="dG (%)")


def cmd_freq_sweep(ctx, a):
    x0 = _x0(a, ctx.bench.stdp_x0)
    items = [(d, f) for d in a.dt_ms for f in a.freq_hz]
    progs = [gen_frequency_pairs(f, ms_to_s(d), a.n_reps) for d, f in items]
    res = _sweep(ctx, progs, x0)
    rows = [(f, d, dg) for (d, f), (dg, _) in zip(items, res)]
    ctx.out.csv("freq_sweep.csv", rows, ["freq_hz", "dt_ms", "dG_percent"])
    if a.svg:
        series = [([r[0] for r in rows if r[1] == d], [r[2] for r in rows if r[1] == d],
                   f"dt = {d:g} ms") for d in a.dt_ms]
        ctx.out.svg("freq_sweep.svg", series, xlabel="frequency (Hz)", ylabel="dG (%)")


def cmd_tetanic(ctx, a):
    b = ctx.bench
    amp = b.tetanic_amp if a.amp is None else a.amp
    width = b.tetanic_width if a.width_us is None else a.width_us * 1e-6
    period = b.tetanic_period if a.period_ms is None else ms_to_s(a.period_ms)
    x0s = a.x0 or [b.tetanic_low_x0, b.tetanic_high_x0]
    prog = gen_tetanic(a.n_spikes, width, period, amp)
    res = map_points(partial(_dg_point, params=ctx.params), [(prog, x) for x in x0s], a.workers)
    rows = [(x, conductance_of(DeviceState(x), ctx.params), dg) for x, (dg, _) in zip(x0s, res)]
    ctx.out.csv("tetanic.csv", rows, ["x0", "g_initial_s", "dG_percent"])
    traj = [(k, i, t, g) for k, (_, tr) in enumerate(res) for i, (t, g) in enumerate(tr)]
    ctx.out.csv("tetanic_trajectory.csv", traj, ["run", "pulse", "t_s", "g_s"])
    if a.svg:
        series = [([p[1] for p in traj if p[0] == k], [p[3] for p in traj if p[0] == k],
                   f"x0 = {x:g}") for k, x in enumerate(x0s)]
        ctx.out.svg("tetanic.svg", series, xlabel="pulse", ylabel="G (S)")


def cmd_pulse_train(ctx, a):
    state = DeviceState(a.x0)
    width, interval = ms_to_s(a.width_ms), ms_to_s(a.interval_ms)
    if not interval > width:
        raise UsageError("--interval-ms must exceed --width-ms")
    rows = []
    for k in range(a.n_pulses):
        t = k * interval
        state = step_gap(state, t - state.t_last, ctx.params) if k else state
        state, rep = apply_pulse(state, PulseSpec(t, a.amp, width), ctx.params)
        rows.append((k, t, a.amp, conductance_of(state, ctx.params), rep.dx_field, rep.dx_thermal))
    ctx.out.csv("pulse_train.csv", rows, ["pulse", "t_s", "v", "g_s", "dx_field", "dx_thermal"])
    if a.svg:
        ctx.out.svg("pulse_train.svg", [([r[0] for r in rows], [r[3] for r in rows], "G")],
                    xlabel="pulse", ylabel="G (S)")


def cmd_iv_sweep(ctx, a):
    b = ctx.bench
    dwell = b.iv_dwell if a.dwell_ms is None else ms_to_s(a.dwell_ms)
    gap = b.iv_gap if a.gap_ms is None else ms_to_s(a.gap_ms)
    x0 = _x0(a, b.iv_x0)
    curve, _ = iv_sweep(DeviceState(x0), a.v_peak, a.step, dwell, ctx.params, gap=gap)
    ctx.out.csv("iv_sweep.csv", zip(curve.v.tolist(), curve.i.tolist()), ["v", "i_a"])
    if a.svg:
        ctx.out.svg("iv_sweep.svg", [(curve.v, curve.i, f"+-{a.v_peak:g} V")],
                    xlabel="V (V)", ylabel="I (A)")
    return {"loop_area": curve.loop_area()}


def cmd_init_g_sweep(ctx, a):
    rows = []
    for d in a.dt_ms:
        for g0, dg in init_g_sweep(ms_to_s(d), ctx.params, ctx.bench, a.points):
            rows.append((d, g0, dg))
    ctx.out.csv("init_g_sweep.csv", rows, ["dt_ms", "g_initial_s", "dG_percent"])
    if a.svg:
        series = [([r[1] for r in rows if r[0] == d], [abs(r[2]) for r in rows if r[0] == d],
                   f"dt = {d:g} ms") for d in a.dt_ms]
        ctx.out.svg("init_g_sweep.svg", series, logx=True, xlabel="initial G (S)",
                    ylabel="|dG| (%)")


def cmd_rcb(ctx, a):
    lattices = [synthesize_state(t, a.rows, a.cols, a.r_on, a.r_off) for t in a.targets_ohm]
    log = cycle_states(lattices, a.cycles)
    ctx.out.csv("rcb_cycles.csv", log, ["cycle", "state_index", "resistance_ohm"])
    ctx.out.json("rcb_lattices.json", [lat.to_dict() for lat in lattices])
    extra = {"state_resistance_ohm": [equivalent_resistance(l)[0] for l in lattices]}
    if a.bias_steps:
        dyn = RcbDynamicsParams(seed=a.seed)
        rng = np.random.default_rng(point_seed(a.seed, 0))
        lat = lattices[0]
        rows = []
        for k in range(a.bias_steps):
            lat = apply_bias_step(lat, a.bias_v, dyn, rng)
            rows.append((k, int(lat.states().sum()), equivalent_resistance(lat)[0]))
        ctx.out.csv("rcb_bias.csv", rows, ["step", "n_on", "resistance_ohm"])
    if a.svg:
        series = [([r[0] for r in log if r[1] == k], [r[2] for r in log if r[1] == k],
                   f"state {k}") for k in range(len(lattices))]
        ctx.out.svg("rcb_cycles.svg", series, xlabel="cycle", ylabel="R (ohm)")
    return extra


def cmd_fit(ctx, a):
    if a.dataset is not None:
        data = load_dataset_csv(a.dataset)
    else:
        data = synthetic_dataset(TripletParams(), a.synthetic_scale)
        ctx.out.csv("fit_dataset.csv", dataset_rows(data), DATASET_COLUMNS)
    res = fit_triplet(data, seed=a.seed, restarts=a.restarts)
    ctx.out.json("fit.json", res.to_dict())
    r = residuals(res.params, res.scale, data)
    rows = [(k, rec.protocol.kind.value, rec.measured, rec.measured + rr / rec.weight)
            for k, (rec, rr) in enumerate(zip(data, r))]
    ctx.out.csv("fit_residuals.csv", rows, ["index", "kind", "measured", "model"])
    if a.svg:
        ctx.out.svg("fit.svg", [([x[0] for x in rows], [x[2] for x in rows], "measured"),
                                ([x[0] for x in rows], [x[3] for x in rows], "fit")],
                    xlabel="record", ylabel="dG (%)")


def cmd_calibrate(ctx, a):
    space = {}
    for name in a.free:
        val = getattr(ctx.params, name, None)
        if val is None:
            raise UsageError(f"unknown device parameter {name!r}")
        space[name] = (0.05, 0.99) if name == "x_sat" else (val / a.span, val * a.span)
    rep = calibrate_device(a.targets, space, a.seed, ctx.params, ctx.bench, a.restarts, a.maxfev)
    ctx.out.json("calibration.json", rep.to_dict())
    return {"loss": rep.loss}


def cmd_run(ctx, a):
    if ctx.config is None:
        raise UsageError("run needs --config")
    config = replace(ctx.config, seed=a.seed if a.seed_given else ctx.config.seed,
                     workers=max(a.workers, ctx.config.workers))
    run_experiment(config, a.out if a.out_given else None)
    return None


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="memsyn", description="Memristive synapse plasticity laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="<command>")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("stdp-pairs", cmd_stdp_pairs, "pair STDP window (dt = t_post - t_pre)")
    p.add_argument("--dt-ms", type=float, nargs="+", help="timings in ms (default +-5..100)")
    p.add_argument("--x0", type=float)
    p.add_argument("--n-reps", type=int, default=60)
    p.add_argument("--freq-hz", type=float, default=1.0)

    p = add("triplets", cmd_triplets, "pre-post-pre and post-pre-post triplets")
    p.add_argument("--dt1-ms", type=float, nargs="+", default=[5.0, 5.0, 15.0])
    p.add_argument("--dt2-ms", type=float, nargs="+", default=[5.0, 15.0, 5.0])
    p.add_argument("--timing", choices=["consecutive", "from_first"], default="consecutive")
    p.add_argument("--x0", type=float)
    p.add_argument("--n-reps", type=int, default=60)

    p = add("quadruplets", cmd_quadruplets, "quadruplet protocol over T")
    p.add_argument("--T-ms", dest="T_ms", type=float, nargs="+",
                   default=[-80.0, -40.0, -20.0, 20.0, 40.0, 80.0])
    p.add_argument("--dt-ms", type=float, default=5.0)
    p.add_argument("--x0", type=float)
    p.add_argument("--n-reps", type=int, default=60)

    p = add("freq-sweep", cmd_freq_sweep, "pair repetition-frequency sweep")
    p.add_argument("--freq-hz", type=float, nargs="+", default=list(FREQ_GRID))
    p.add_argument("--dt-ms", type=float, nargs="+", default=[-10.0, 10.0])
    p.add_argument("--x0", type=float)
    p.add_argument("--n-reps", type=int, default=60)

    p = add("tetanic", cmd_tetanic, "presynaptic tetanic burst from several initial states")
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--amp", type=float)
    p.add_argument("--width-us", type=float)
    p.add_argument("--period-ms", type=float)
    p.add_argument("--n-spikes", type=int, default=9)

    p = add("pulse-train", cmd_pulse_train, "identical pulses with per-pulse state report")
    p.add_argument("--amp", type=float, default=-2.0, help="signed net voltage")
    p.add_argument("--width-ms", type=float, default=30.0)
    p.add_argument("--interval-ms", type=float, default=1000.0)
    p.add_argument("--n-pulses", type=int, default=10)
    p.add_argument("--x0", type=float, default=0.2)

    p = add("iv-sweep", cmd_iv_sweep, "staircase I-V sweep")
    p.add_argument("--v-peak", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--dwell-ms", type=float)
    p.add_argument("--gap-ms", type=float)
    p.add_argument("--x0", type=float)

    p = add("init-g-sweep", cmd_init_g_sweep, "pair response versus programmed initial G")
    p.add_argument("--dt-ms", type=float, nargs="+", default=[1.0, -1.0])
    p.add_argument("--points", type=int, default=8)

    p = add("rcb", cmd_rcb, "random circuit breaker multi-state cycling")
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--r-on", type=float, default=100.0)
    p.add_argument("--r-off", type=float, default=1e6)
    p.add_argument("--targets-ohm", type=float, nargs="+", default=list(DEFAULT_RCB_TARGETS))
    p.add_argument("--cycles", type=int, default=200)
    p.add_argument("--bias-steps", type=int, default=0,
                   help="also evolve the first state under a constant bias")
    p.add_argument("--bias-v", type=float, default=1.0)

    p = add("fit", cmd_fit, "fit the triplet rule to a dataset CSV")
    p.add_argument("--dataset", type=Path, help="dataset CSV (default: synthetic data)")
    p.add_argument("--synthetic-scale", type=float, default=100.0)
    p.add_argument("--restarts", type=int, default=4)

    p = add("calibrate", cmd_calibrate, "search device constants against plasticity laws")
    p.add_argument("--targets", nargs="+", default=list(CALIBRATION_TARGETS))
    p.add_argument("--free", nargs="+", default=["kappa", "tau_s"],
                   help="device parameters to search")
    p.add_argument("--span", type=float, default=3.0, help="bounds are value/span .. value*span")
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--maxfev", type=int, default=200)

    add("run", cmd_run, "run a full JSON config")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    args.seed_given = any(t == "--seed" or t.startswith("--seed=") for t in argv)
    args.out_given = any(t == "--out" or t.startswith("--out=") for t in argv)
    try:
        ctx = Context(args)
        extra = args.func(ctx, args)
        if args.command != "run":
            ctx.finish(extra)
    except (UsageError, ConfigError, ProtocolError, DatasetError, FitError, FileNotFoundError,
            KeyError, ValueError) as exc:
        print(f"memsyn: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ProgrammingError, SingularLatticeError, RuntimeError, OSError) as exc:
        print(f"memsyn: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
