"""Plasticity experiments on the device model and the checks built on them.

Each experiment starts from a relaxed device (no thermal energy, no
sensitization) at a given filament fraction, drives it with a compiled
stimulation program and reports the conductance change in percent.

:class:`Bench` collects the experimental conditions that are not part of
the device itself (starting state, tetanic pulse shape, sweep timing,
programming pulses). :func:`property_margins` evaluates the named
plasticity laws as signed margins, positive when the law holds; the
calibration search and the acceptance suite both use them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, fields
from typing import Callable, Sequence

import numpy as np

from .device import (PROGRAM_AMP, PROGRAM_INTERVAL, PROGRAM_WIDTH, DeviceParams, DeviceState,
                     IvCurve, PulseReport, PulseSpec, apply_pulse, conductance_of,
                     delta_g_percent, g_to_x, iv_sweep, program_to_target, run_waveform, step_gap,
                     x_to_g)
from .protocols import (TETANIC_AMP, TETANIC_PERIOD, TETANIC_WIDTH, ProtocolSpec, SpikeProgram, TripletOrder, compile_waveform,
                        gen_frequency_pairs, gen_pair, gen_quadruplet, gen_tetanic, gen_triplet)

STDP_DTS = (5e-3, 10e-3, 20e-3, 50e-3, 100e-3)
FREQ_GRID = (1.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0)


@dataclass(frozen=True)
class Bench:
    """Experimental conditions shared by the standard experiments."""

    stdp_x0: float = 0.406
    tetanic_amp: float = TETANIC_AMP
    tetanic_width: float = TETANIC_WIDTH
    tetanic_period: float = TETANIC_PERIOD
    tetanic_low_x0: float = 0.2
    tetanic_high_x0: float = 0.95
    accumulation_x0: float = 0.2
    accumulation_amp: float = 3.5
    accumulation_width: float = 50e-6
    accumulation_interval: float = 10.0
    iv_x0: float = 0.3
    iv_step: float = 0.05
    iv_dwell: float = 1e-3
    iv_gap: float = 1.0
    program_amp: float = PROGRAM_AMP
    program_width: float = PROGRAM_WIDTH
    program_interval: float = PROGRAM_INTERVAL
    program_tol: float = 0.01
    program_max_pulses: int = 100000

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Bench":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown bench setting(s): {', '.join(sorted(unknown))}")
        return cls(**d)


def run_program(program: SpikeProgram, x0: float, params: DeviceParams
                ) -> tuple[float, DeviceState, list[tuple[float, float]]]:
    """Run ``program`` from a relaxed device at ``x0``; returns ``(dG%, state, trajectory)``."""
    return run_from_state(program, DeviceState(x0), params)


def run_from_state(program: SpikeProgram, state: DeviceState, params: DeviceParams
                   ) -> tuple[float, DeviceState, list[tuple[float, float]]]:
    pulses = compile_waveform(program)
    g0 = conductance_of(state, params)
    if pulses:
        # the program clock starts at the first onset
        state = DeviceState(state.x, state.u, state.s, min(state.t_last, pulses[0].t))
    final, traj = run_waveform(state, pulses, params)
    return delta_g_percent(g0, conductance_of(final, params)), final, traj


def delta_g(spec: ProtocolSpec | SpikeProgram, x0: float, params: DeviceParams) -> float:
    program = spec.build() if isinstance(spec, ProtocolSpec) else spec
    return run_program(program, x0, params)[0]


def stdp_window(dts: Sequence[float], x0: float, params: DeviceParams, **kw) -> list[float]:
    return [delta_g(gen_pair(dt, **kw), x0, params) for dt in dts]


def frequency_sweep(freqs: Sequence[float], dt: float, x0: float, params: DeviceParams
                    ) -> list[float]:
    return [delta_g(gen_frequency_pairs(f, dt), x0, params) for f in freqs]


def tetanic_change(x0: float, params: DeviceParams, bench: Bench) -> float:
    prog = gen_tetanic(9, bench.tetanic_width, bench.tetanic_period, bench.tetanic_amp)
    return delta_g(prog, x0, params)


def accumulation_steps(params: DeviceParams, bench: Bench, n_pulses: int = 10,
                       x0: float | None = None) -> list[float]:
    """Per-pulse ``|dx|`` of identical potentiating (negative) pulses.

    Steps are taken from the pulse reports (field plus thermal) rather than
    from differences of ``x``, which would lose the small steps to rounding.
    """
    return [abs(r.dx_field + r.dx_thermal) for r in accumulation_reports(params, bench, n_pulses, x0)]


def accumulation_reports(params: DeviceParams, bench: Bench, n_pulses: int = 10,
                         x0: float | None = None) -> list[PulseReport]:
    """Pulse reports of the accumulation train, one per pulse."""
    state = DeviceState(bench.accumulation_x0 if x0 is None else x0)
    reports = []
    for k in range(n_pulses):
        t = k * bench.accumulation_interval
        state = step_gap(state, t - state.t_last, params) if k else state
        state, rep = apply_pulse(state, PulseSpec(t, -bench.accumulation_amp,
                                                  bench.accumulation_width), params)
        reports.append(rep)
    return reports


def hysteresis(v_peak: float, params: DeviceParams, bench: Bench) -> IvCurve:
    curve, _ = iv_sweep(DeviceState(bench.iv_x0), v_peak, bench.iv_step, bench.iv_dwell, params,
                        gap=bench.iv_gap)
    return curve


def init_g_grid(params: DeviceParams, n_points: int = 8) -> np.ndarray:
    """Log-spaced initial conductances across ``[2 g_min, g_max / 2]``."""
    return np.geomspace(2 * params.g_min, params.g_max / 2, n_points)


def program_device(g_target: float, params: DeviceParams, bench: Bench,
                   start: DeviceState | None = None) -> tuple[DeviceState, int]:
    """Closed-loop write to ``g_target`` followed by full relaxation of the volatile state."""
    if start is None:
        # begin at the nearer rail
        start = DeviceState(1.0 if g_to_x(g_target, params) > 0.5 else 0.0)
    state, used = program_to_target(start, g_target, bench.program_tol, bench.program_max_pulses,
                                    params, bench.program_amp, bench.program_width,
                                    bench.program_interval)
    return state.relaxed(), used


def init_g_sweep(dt: float, params: DeviceParams, bench: Bench, n_points: int = 8
                 ) -> list[tuple[float, float]]:
    """``(G_initial, dG%)`` of a pair program at ``dt`` over :func:`init_g_grid`."""
    out = []
    for g in init_g_grid(params, n_points):
        state, _ = program_device(float(g), params, bench)
        dg, _, _ = run_from_state(gen_pair(dt), state, params)
        out.append((conductance_of(state, params), dg))
    return out


# -- plasticity laws as margins ----------------------------------------------

def _decreasing(values) -> list[float]:
    a = [abs(v) for v in values]
    return [a[i] - a[i + 1] for i in range(len(a) - 1)]


def _stdp_sign(p, b):
    pos = stdp_window(STDP_DTS, b.stdp_x0, p)
    neg = stdp_window([-d for d in STDP_DTS], b.stdp_x0, p)
    return pos + [-v for v in neg]


def _stdp_decay(p, b):
    pos = stdp_window(STDP_DTS, b.stdp_x0, p)
    neg = stdp_window([-d for d in STDP_DTS], b.stdp_x0, p)
    return _decreasing(pos) + _decreasing(neg)


def _triplet(p, b):
    ppp = delta_g(gen_triplet(TripletOrder.PRE_POST_PRE, 5e-3, 5e-3), b.stdp_x0, p)
    popp = delta_g(gen_triplet(TripletOrder.POST_PRE_POST, 5e-3, 5e-3), b.stdp_x0, p)
    return [popp - ppp, 0.25 * popp - ppp]


def _quadruplet(p, b):
    q = {T: delta_g(gen_quadruplet(T, 5e-3), b.stdp_x0, p) for T in (20e-3, -20e-3, 80e-3)}
    return [q[20e-3] - q[-20e-3], q[-20e-3], q[20e-3] - q[80e-3]]


def _frequency(p, b):
    neg = dict(zip(FREQ_GRID, frequency_sweep(FREQ_GRID, -10e-3, b.stdp_x0, p)))
    pos = dict(zip(FREQ_GRID, frequency_sweep(FREQ_GRID, 10e-3, b.stdp_x0, p)))
    m = [-neg[f] for f in FREQ_GRID if f <= 10] + [neg[f] for f in FREQ_GRID if f >= 40]
    m += list(pos.values())
    rising = (1.0, 10.0, 20.0, 30.0, 40.0)
    m += [pos[hi] - pos[lo] for lo, hi in zip(rising, rising[1:])]
    return m


def _normalization(p, b):
    return [tetanic_change(b.tetanic_low_x0, p, b), -tetanic_change(b.tetanic_high_x0, p, b)]


def _inverse(p, b):
    m = []
    for dt in (1e-3, -1e-3):
        m += _decreasing([dg for _, dg in init_g_sweep(dt, p, b)])
    return m


def _inverse_grid(p, b):
    """Inverse law on the exact log grid (no closed-loop programming)."""
    m = []
    for dt in (1e-3, -1e-3):
        xs = [g_to_x(float(g), p) for g in init_g_grid(p)]
        m += _decreasing([delta_g(gen_pair(dt), x, p) for x in xs])
    return m


def _accumulation(p, b):
    # scaled so that typical per-pulse steps register as margins of order one
    reps = accumulation_reports(p, b)
    steps = [abs(r.dx_field + r.dx_thermal) for r in reps]
    sub_unipolar = 1.0 if all(r.dx_thermal == 0.0 for r in reps) else -1.0
    return [1e3 * d for d in _decreasing(steps)] + [1e3 * min(steps), sub_unipolar]


def _hysteresis(p, b):
    big, small = hysteresis(2.0, p, b), hysteresis(1.0, p, b)
    g0 = x_to_g(b.iv_x0, p)
    flat = small.loop_area()
    return [big.loop_area() / g0, 1.0 if flat == 0.0 else -flat / g0]


PROPERTIES: dict[str, Callable[[DeviceParams, Bench], list[float]]] = {
    "stdp_sign": _stdp_sign,
    "stdp_decay": _stdp_decay,
    "triplet_asymmetry": _triplet,
    "quadruplet_asymmetry": _quadruplet,
    "frequency_crossover": _frequency,
    "normalization": _normalization,
    "initial_g_inverse": _inverse,
    "initial_g_inverse_grid": _inverse_grid,
    "accumulation": _accumulation,
    "hysteresis": _hysteresis,
}


def property_margins(params: DeviceParams, bench: Bench, targets: Sequence[str] | None = None
                     ) -> dict[str, list[float]]:
    """Signed margins per named property; every entry must be > 0 for the law to hold."""
    targets = list(PROPERTIES) if targets is None else list(targets)
    unknown = [t for t in targets if t not in PROPERTIES]
    if unknown:
        raise KeyError(f"unknown property target(s): {', '.join(unknown)}")
    return {name: PROPERTIES[name](params, bench) for name in targets}


def hinge(margins: dict[str, list[float]], floor: float = 0.0) -> float:
    """Sum of violations; a margin counts as violated unless it exceeds ``floor``."""
    total = 0.0
    for vals in margins.values():
        for m in vals:
            if not math.isfinite(m):
                return math.inf
            if m <= floor:
                total += floor - m + 1e-12
    return total
