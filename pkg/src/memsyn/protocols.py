"""Stimulation programs for the plasticity experiments.

Every generator returns a :class:`SpikeProgram`: a time-sorted list of
pre/post square pulses. :func:`compile_waveform` turns a program into the
net device voltage (top electrode minus bottom electrode) as a list of
non-overlapping constant segments that the device model consumes.

Times are in seconds, amplitudes in volts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterable, Sequence

from .device import PulseSpec

SPIKE_AMP = 3.5
SPIKE_WIDTH = 50e-6
N_REPS = 60
REP_FREQ = 1.0

TETANIC_AMP = 25.0
TETANIC_WIDTH = 5e-6
TETANIC_PERIOD = 1e-3


class Terminal(str, Enum):
    PRE = "PRE"
    POST = "POST"


class ProtocolKind(str, Enum):
    PAIR = "PAIR"
    TRIPLET = "TRIPLET"
    QUADRUPLET = "QUADRUPLET"
    FREQ_PAIR = "FREQ_PAIR"
    TETANIC = "TETANIC"


class TripletOrder(str, Enum):
    PRE_POST_PRE = "PRE_POST_PRE"
    POST_PRE_POST = "POST_PRE_POST"


class ProtocolError(ValueError):
    """Raised for protocol parameters that cannot produce a valid program."""


@dataclass(frozen=True)
class SpikeEvent:
    t: float
    terminal: Terminal
    amp: float = SPIKE_AMP
    width: float = SPIKE_WIDTH

    def __post_init__(self):
        if not self.width > 0:
            raise ProtocolError(f"spike width must be positive, got {self.width}")
        if not self.amp > 0:
            raise ProtocolError(f"spike amplitude must be positive, got {self.amp}")


@dataclass(frozen=True)
class SpikeProgram:
    events: tuple[SpikeEvent, ...]
    kind: str = "CUSTOM"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ts = [e.t for e in self.events]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ProtocolError("spike program must be sorted by time")

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def end_time(self) -> float:
        """Time at which the last pulse ends (0 for an empty program)."""
        return max((e.t + e.width for e in self.events), default=0.0)

    def spike_times(self) -> list[tuple[float, Terminal]]:
        return [(e.t, e.terminal) for e in self.events]


def _repeat(template, kind, params, n_reps, rep_freq, amp, width) -> SpikeProgram:
    if n_reps < 1:
        raise ProtocolError(f"n_reps must be >= 1, got {n_reps}")
    if not rep_freq > 0:
        raise ProtocolError(f"rep_freq must be positive, got {rep_freq}")
    span = max(t for t, _ in template) + width
    period = 1.0 / rep_freq
    if not period > span:
        raise ProtocolError(
            f"repetition period {period:g} s does not exceed the {span:g} s span of one repetition")
    template = sorted(template, key=lambda e: e[0])
    events = []
    for k in range(n_reps):
        offset = k / rep_freq
        events.extend(SpikeEvent(t + offset, term, amp, width) for t, term in template)
    params = dict(params, n_reps=n_reps, rep_freq=rep_freq, amp=amp, width=width)
    return SpikeProgram(tuple(events), kind, params)


def gen_pair(dt: float, n_reps: int = N_REPS, rep_freq: float = REP_FREQ,
             amp: float = SPIKE_AMP, width: float = SPIKE_WIDTH) -> SpikeProgram:
    """Pre/post spike pairs with ``dt = t_post - t_pre``, repeated at ``rep_freq``."""
    if dt == 0:
        raise ProtocolError("dt = 0 is a coincidence; build the program explicitly")
    if abs(dt) < width:
        raise ProtocolError(f"|dt| = {abs(dt):g} s is shorter than the pulse width {width:g} s")
    t_pre, t_post = (0.0, dt) if dt > 0 else (-dt, 0.0)
    template = [(t_pre, Terminal.PRE), (t_post, Terminal.POST)]
    return _repeat(template, ProtocolKind.PAIR.value, {"dt": dt}, n_reps, rep_freq, amp, width)


def gen_triplet(order: TripletOrder | str, dt1: float, dt2: float, n_reps: int = N_REPS,
                rep_freq: float = REP_FREQ, amp: float = SPIKE_AMP, width: float = SPIKE_WIDTH,
                timing: str = "consecutive") -> SpikeProgram:
    """Three-spike protocol.

    With ``timing="consecutive"`` (default) ``dt1`` and ``dt2`` are the two
    successive inter-spike intervals, so spikes sit at ``0, dt1, dt1 + dt2``.
    With ``timing="from_first"`` both are offsets from the first spike and
    the spikes sit at ``0, dt1, dt2`` (requires ``dt2 > dt1``).
    """
    order = TripletOrder(order)
    if not (dt1 > 0 and dt2 > 0):
        raise ProtocolError(f"triplet intervals must be positive, got ({dt1}, {dt2})")
    if timing == "consecutive":
        times = (0.0, dt1, dt1 + dt2)
    elif timing == "from_first":
        if not dt2 > dt1:
            raise ProtocolError("from_first timing needs dt2 > dt1")
        times = (0.0, dt1, dt2)
    else:
        raise ProtocolError(f"unknown triplet timing {timing!r}")
    if order is TripletOrder.PRE_POST_PRE:
        terms = (Terminal.PRE, Terminal.POST, Terminal.PRE)
    else:
        terms = (Terminal.POST, Terminal.PRE, Terminal.POST)
    if min(b - a for a, b in zip(times, times[1:])) < width:
        raise ProtocolError("triplet spikes closer than one pulse width")
    params = {"order": order.value, "dt1": dt1, "dt2": dt2, "timing": timing}
    return _repeat(list(zip(times, terms)), ProtocolKind.TRIPLET.value, params,
                   n_reps, rep_freq, amp, width)


def gen_quadruplet(T: float, dt: float, n_reps: int = N_REPS, rep_freq: float = REP_FREQ,
                   amp: float = SPIKE_AMP, width: float = SPIKE_WIDTH) -> SpikeProgram:
    """A post-pre pair and a pre-post pair, each ``dt`` wide.

    For ``T > 0`` the post-pre pair comes first and the pre-post pair starts
    ``T`` later; for ``T < 0`` the pre-post pair leads by ``|T|``.
    """
    if not dt > 0:
        raise ProtocolError(f"dt must be positive, got {dt}")
    if not abs(T) > dt:
        raise ProtocolError(f"|T| = {abs(T):g} s must exceed dt = {dt:g} s (pairs would interleave)")
    if dt < width or abs(T) - dt < width:
        raise ProtocolError("quadruplet spikes closer than one pulse width")
    a = abs(T)
    if T > 0:
        template = [(0.0, Terminal.POST), (dt, Terminal.PRE), (a, Terminal.PRE), (a + dt, Terminal.POST)]
    else:
        template = [(0.0, Terminal.PRE), (dt, Terminal.POST), (a, Terminal.POST), (a + dt, Terminal.PRE)]
    return _repeat(template, ProtocolKind.QUADRUPLET.value, {"T": T, "dt": dt},
                   n_reps, rep_freq, amp, width)


def gen_frequency_pairs(f: float, dt: float, n_reps: int = N_REPS, amp: float = SPIKE_AMP,
                        width: float = SPIKE_WIDTH) -> SpikeProgram:
    """Pairs at fixed ``dt`` repeated every ``1/f`` seconds."""
    if not f > 0:
        raise ProtocolError(f"frequency must be positive, got {f}")
    if not 1.0 / f > abs(dt) + width:
        raise ProtocolError(f"at {f:g} Hz the pairs collide (1/f = {1.0 / f:g} s <= |dt| + width)")
    prog = gen_pair(dt, n_reps=n_reps, rep_freq=f, amp=amp, width=width)
    return SpikeProgram(prog.events, ProtocolKind.FREQ_PAIR.value, dict(prog.params, f=f))


def gen_tetanic(n_spikes: int = 9, width: float = TETANIC_WIDTH, period: float = TETANIC_PERIOD,
                amp: float = TETANIC_AMP, terminal: Terminal | str = Terminal.PRE) -> SpikeProgram:
    """A burst of ``n_spikes`` identical pulses on one terminal."""
    if n_spikes < 1:
        raise ProtocolError(f"n_spikes must be >= 1, got {n_spikes}")
    if not period > width:
        raise ProtocolError(f"period {period:g} s must exceed the width {width:g} s")
    terminal = Terminal(terminal)
    events = tuple(SpikeEvent(k * period, terminal, amp, width) for k in range(n_spikes))
    params = {"n_spikes": n_spikes, "width": width, "period": period, "amp": amp,
              "terminal": terminal.value}
    return SpikeProgram(events, ProtocolKind.TETANIC.value, params)


def compile_waveform(program: SpikeProgram | Iterable[SpikeEvent]) -> list[PulseSpec]:
    """Net device voltage ``V_pre(t) - V_post(t)`` as sorted constant segments.

    PRE pulses drive the top electrode (+amp), POST pulses the bottom
    electrode (-amp). Overlapping pulses superpose; intervals where the net
    voltage is zero are dropped and abutting equal-voltage intervals merged.
    """
    events = list(program)
    if not events:
        return []
    edges = sorted({e.t for e in events} | {e.t + e.width for e in events})
    segments: list[PulseSpec] = []
    # events are sorted by onset, so a moving window keeps the active scan short
    first = 0
    for lo, hi in zip(edges, edges[1:]):
        while first < len(events) and events[first].t + events[first].width <= lo:
            first += 1
        active = []
        for e in events[first:]:
            if e.t > lo:
                break
            if e.t + e.width > lo:
                active.append(e)
        v = math.fsum(e.amp if e.terminal is Terminal.PRE else -e.amp for e in active)
        if v == 0.0:
            continue
        d = hi - lo
        if len(active) == 1 and active[0].t == lo and active[0].t + active[0].width == hi:
            # a lone pulse keeps its exact width rather than (t + w) - t
            d = active[0].width
        if segments and segments[-1].v == v and segments[-1].t + segments[-1].d == lo:
            prev = segments[-1]
            segments[-1] = PulseSpec(prev.t, v, hi - prev.t)
        else:
            segments.append(PulseSpec(lo, v, d))
    return segments


# -- ProtocolSpec: the serializable description used by configs and datasets --

@dataclass(frozen=True)
class ProtocolSpec:
    """Parameters of one protocol run; times in seconds.

    ``dt`` is used by PAIR and FREQ_PAIR (and as the pair width of
    QUADRUPLET), ``dt1``/``dt2`` by TRIPLET, ``T`` by QUADRUPLET.
    """

    kind: ProtocolKind
    dt: float | None = None
    dt1: float | None = None
    dt2: float | None = None
    T: float | None = None
    order: TripletOrder | None = None
    n_reps: int = N_REPS
    rep_freq: float = REP_FREQ
    amp: float | None = None
    width: float | None = None
    n_spikes: int = 9
    period: float = TETANIC_PERIOD

    def __post_init__(self):
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        tetanic = self.kind is ProtocolKind.TETANIC
        if self.amp is None:
            object.__setattr__(self, "amp", TETANIC_AMP if tetanic else SPIKE_AMP)
        if self.width is None:
            object.__setattr__(self, "width", TETANIC_WIDTH if tetanic else SPIKE_WIDTH)
        if self.order is not None:
            object.__setattr__(self, "order", TripletOrder(self.order))

    def build(self) -> SpikeProgram:
        k = self.kind
        try:
            if k is ProtocolKind.PAIR:
                return gen_pair(_need(self.dt, "dt"), self.n_reps, self.rep_freq, self.amp, self.width)
            if k is ProtocolKind.FREQ_PAIR:
                return gen_frequency_pairs(self.rep_freq, _need(self.dt, "dt"), self.n_reps,
                                           self.amp, self.width)
            if k is ProtocolKind.TRIPLET:
                return gen_triplet(_need(self.order, "order"), _need(self.dt1, "dt1"),
                                   _need(self.dt2, "dt2"), self.n_reps, self.rep_freq,
                                   self.amp, self.width)
            if k is ProtocolKind.QUADRUPLET:
                return gen_quadruplet(_need(self.T, "T"), _need(self.dt, "dt"), self.n_reps,
                                      self.rep_freq, self.amp, self.width)
            return gen_tetanic(self.n_spikes, self.width, self.period, self.amp)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ProtocolError):
                raise
            raise ProtocolError(str(exc)) from exc

    # JSON uses milliseconds for spike timing, matching the dataset CSV columns
    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind.value}
        for name in ("dt", "dt1", "dt2", "T"):
            val = getattr(self, name)
            if val is not None:
                d[name + "_ms"] = s_to_ms(val)
        if self.order is not None:
            d["order"] = self.order.value
        d.update(n_reps=self.n_reps, rep_freq=self.rep_freq, amp=self.amp, width=self.width)
        if self.kind is ProtocolKind.TETANIC:
            d.update(n_spikes=self.n_spikes, period=self.period)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolSpec":
        kw = {}
        for name in ("dt", "dt1", "dt2", "T"):
            if d.get(name + "_ms") is not None:
                kw[name] = ms_to_s(d[name + "_ms"])
        for name in ("order", "n_reps", "rep_freq", "amp", "width", "n_spikes", "period"):
            if d.get(name) is not None:
                kw[name] = d[name]
        return cls(kind=d["kind"], **kw)


def _need(val, name):
    if val is None:
        raise ProtocolError(f"protocol parameter {name!r} is required")
    return val


def ms_to_s(v: float) -> float:
    return float(v) / 1000.0


def s_to_ms(v: float) -> float:
    # through the shortest decimal repr so that ms -> s -> ms round-trips exactly
    return float(Decimal(repr(float(v))) * 1000)


def write_program_csv(program: SpikeProgram, path) -> None:
    """Export a program for external replay (``t_s,terminal,amp_v,width_s``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "terminal", "amp_v", "width_s"])
        for e in program:
            w.writerow([repr(e.t), e.terminal.value, repr(e.amp), repr(e.width)])


def program_from_pulses(pulses: Sequence[tuple[float, Terminal | str]], amp: float = SPIKE_AMP,
                        width: float = SPIKE_WIDTH) -> SpikeProgram:
    """Build an ad-hoc program from ``(t, terminal)`` tuples."""
    events = tuple(SpikeEvent(t, Terminal(term), amp, width)
                   for t, term in sorted(pulses, key=lambda p: p[0]))
    return SpikeProgram(events)

