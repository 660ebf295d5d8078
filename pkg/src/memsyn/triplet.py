"""Spike-based triplet plasticity rule with exponential traces.

Presynaptic detectors ``r1`` (tau_plus) and ``r2`` (tau_x), postsynaptic
detectors ``o1`` (tau_minus) and ``o2`` (tau_y). Integration is exact and
event driven: traces are decayed analytically to each spike, then

* at a presynaptic spike ``w -= o1 * (a2_minus + a3_minus * r2)``, then
  ``r1``/``r2`` are incremented,
* at a postsynaptic spike ``w += r1 * (a2_plus + a3_plus * o2)``, then
  ``o1``/``o2`` are incremented.

``r2`` and ``o2`` enter with their values just before the spike. In
``NEAREST`` mode a spike resets its traces to 1 instead of adding 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Sequence

from .protocols import Terminal


class InteractionMode(str, Enum):
    ALL_TO_ALL = "ALL_TO_ALL"
    NEAREST = "NEAREST"


@dataclass(frozen=True)
class TripletParams:
    a2_plus: float = 5e-3
    a2_minus: float = 7e-3
    a3_plus: float = 6.2e-3
    a3_minus: float = 2.3e-4
    tau_plus: float = 16.8e-3
    tau_minus: float = 33.7e-3
    tau_x: float = 101e-3
    tau_y: float = 125e-3
    mode: InteractionMode = InteractionMode.ALL_TO_ALL

    def __post_init__(self):
        object.__setattr__(self, "mode", InteractionMode(self.mode))
        for name in ("a2_plus", "a2_minus", "a3_plus", "a3_minus"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("tau_plus", "tau_minus", "tau_x", "tau_y"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def amplitudes(self) -> tuple[float, float, float, float]:
        return (self.a2_plus, self.a3_plus, self.a2_minus, self.a3_minus)

    @property
    def taus(self) -> tuple[float, float, float, float]:
        return (self.tau_plus, self.tau_minus, self.tau_x, self.tau_y)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TripletParams":
        return cls(**d)


@dataclass(frozen=True)
class TraceState:
    r1: float = 0.0
    r2: float = 0.0
    o1: float = 0.0
    o2: float = 0.0
    t_last: float = 0.0


def decay_traces(tr: TraceState, delta: float, p: TripletParams) -> TraceState:
    if delta < 0:
        raise ValueError(f"negative time step {delta}")
    return TraceState(tr.r1 * math.exp(-delta / p.tau_plus),
                      tr.r2 * math.exp(-delta / p.tau_x),
                      tr.o1 * math.exp(-delta / p.tau_minus),
                      tr.o2 * math.exp(-delta / p.tau_y),
                      tr.t_last + delta)


def rule_components(spikes: Sequence[tuple[float, Terminal | str]], p: TripletParams
                    ) -> tuple[float, float, float, float]:
    """Weight change per unit amplitude: ``(pair+, triplet+, pair-, triplet-)``.

    The total change is ``a2_plus*c[0] + a3_plus*c[1] - a2_minus*c[2] - a3_minus*c[3]``,
    which is why the rule is linear in its four amplitudes.
    """
    nearest = p.mode is InteractionMode.NEAREST
    r1 = r2 = o1 = o2 = 0.0
    s2p = s3p = s2m = s3m = 0.0
    t_prev = None
    for t, term in spikes:
        if t_prev is not None:
            gap = t - t_prev
            if gap < 0:
                raise ValueError("spike list must be sorted by time")
            if gap > 0:
                r1 *= math.exp(-gap / p.tau_plus)
                r2 *= math.exp(-gap / p.tau_x)
                o1 *= math.exp(-gap / p.tau_minus)
                o2 *= math.exp(-gap / p.tau_y)
        t_prev = t
        if term == Terminal.PRE:
            s2m += o1
            s3m += o1 * r2
            if nearest:
                r1 = r2 = 1.0
            else:
                r1 += 1.0
                r2 += 1.0
        elif term == Terminal.POST:
            s2p += r1
            s3p += r1 * o2
            if nearest:
                o1 = o2 = 1.0
            else:
                o1 += 1.0
                o2 += 1.0
        else:
            raise ValueError(f"unknown terminal {term!r}")
    return s2p, s3p, s2m, s3m


def simulate_rule(spikes: Sequence[tuple[float, Terminal | str]], p: TripletParams,
                  w0: float = 0.0) -> float:
    """Total weight change ``w - w0`` produced by a sorted spike list."""
    c2p, c3p, c2m, c3m = rule_components(spikes, p)
    w = w0
    w += p.a2_plus * c2p + p.a3_plus * c3p
    w -= p.a2_minus * c2m + p.a3_minus * c3m
    return w - w0


def pair_window_closed_form(dt: float, p: TripletParams, n_pairs: int = 1,
                            rep_freq: float = 1.0) -> float:
    """Pair-STDP prediction assuming pairs do not interact (low ``rep_freq``)."""
    if dt == 0:
        raise ValueError("dt = 0 has no pair-window prediction")
    if dt > 0:
        return n_pairs * p.a2_plus * math.exp(-dt / p.tau_plus)
    return -n_pairs * p.a2_minus * math.exp(dt / p.tau_minus)
