"""Phenomenological TiO2 memristor.

The device state is a filament fraction ``x`` in [0, 1] (non-volatile), a
thermal energy ``u`` that decays with ``tau_th`` and a sensitization trace
``s`` that decays with ``tau_s``. Conductance is log-linear in ``x`` so the
full range spans ``g_max / g_min``.

A square pulse of net voltage ``v`` and width ``d`` is applied in a fixed
order:

1. field term. Above ``v_set`` the filament shrinks (window ``x``), below
   ``-v_reset`` it grows (window ``1 - x``); both scaled by ``1 + kappa*s``.
2. Joule deposit ``u += c_j * v**2 * G(x) * d`` using the pre-pulse ``G``.
3. thermal term. If ``u > u_th`` the state relaxes toward ``x_sat`` by
   ``eta_t * (u - u_th) * (x_sat - x)`` and the surplus energy is consumed.
4. clamp ``x`` to [0, 1].
5. ``s += 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, fields
from typing import NamedTuple, Sequence

import numpy as np


class PulseSpec(NamedTuple):
    """Constant net voltage ``v`` (TE minus BE) from ``t`` for ``d`` seconds."""

    t: float
    v: float
    d: float


@dataclass(frozen=True)
class DeviceParams:
    g_min: float = 1e-6
    g_max: float = 1e-3
    v_set: float = 1.7
    v_reset: float = 1.8
    eta_f: float = 1.953e-6
    eta_t: float = 0.3872
    tau_th: float = 7.641e-3
    tau_s: float = 39.75e-3
    kappa: float = 1.316e6
    c_j: float = 5.924e7
    u_th: float = 1.0
    x_sat: float = 0.3489

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.g_max > self.g_min > 0:
            raise ValueError(f"need g_max > g_min > 0, got g_min={self.g_min}, g_max={self.g_max}")
        for name in ("v_set", "v_reset", "eta_f", "eta_t", "tau_th", "tau_s", "kappa", "c_j", "u_th"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if not 0 < self.x_sat < 1:
            raise ValueError(f"x_sat must lie in (0, 1), got {self.x_sat}")

    @property
    def log_ratio(self) -> float:
        return math.log(self.g_max / self.g_min)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown device parameter(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class DeviceState:
    x: float
    u: float = 0.0
    s: float = 0.0
    t_last: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"x must lie in [0, 1], got {self.x}")
        if self.u < 0 or self.s < 0:
            raise ValueError("thermal energy and sensitization must be non-negative")

    def relaxed(self, t: float = 0.0) -> "DeviceState":
        """Same filament state with volatile variables fully decayed, clock at ``t``."""
        return DeviceState(self.x, 0.0, 0.0, t)


class PulseReport(NamedTuple):
    dx_field: float
    dx_thermal: float


class ProgrammingError(RuntimeError):
    """Closed-loop programming did not reach the target; carries the final state."""

    def __init__(self, msg, state: DeviceState, pulses_used: int):
        super().__init__(msg)
        self.state = state
        self.pulses_used = pulses_used


def x_to_g(x: float, params: DeviceParams) -> float:
    return params.g_min * math.exp(params.log_ratio * x)


def g_to_x(g: float, params: DeviceParams) -> float:
    return math.log(g / params.g_min) / params.log_ratio


def conductance_of(state: DeviceState, params: DeviceParams) -> float:
    return x_to_g(state.x, params)


def step_gap(state: DeviceState, delta: float, params: DeviceParams) -> DeviceState:
    """Let the volatile variables decay for ``delta`` seconds."""
    if delta < 0:
        raise ValueError(f"negative time step {delta}")
    if delta == 0:
        return state
    return DeviceState(state.x,
                       state.u * math.exp(-delta / params.tau_th),
                       state.s * math.exp(-delta / params.tau_s),
                       state.t_last + delta)


def _kick(x, u, s, v, d, p: DeviceParams):
    """One pulse on raw floats; returns (x, u, s, dx_field, dx_thermal)."""
    if v > p.v_set:
        dxf = -p.eta_f * (v - p.v_set) * d * x * (1.0 + p.kappa * s)
    elif v < -p.v_reset:
        dxf = p.eta_f * (-v - p.v_reset) * d * (1.0 - x) * (1.0 + p.kappa * s)
    else:
        dxf = 0.0
    u = u + p.c_j * v * v * (p.g_min * math.exp(p.log_ratio * x)) * d
    dxt = 0.0
    if u > p.u_th:
        dxt = p.eta_t * (u - p.u_th) * (p.x_sat - x)
        u = p.u_th
    x = min(1.0, max(0.0, x + dxf + dxt))
    return x, u, s + 1.0, dxf, dxt


def apply_pulse(state: DeviceState, pulse: PulseSpec, params: DeviceParams
                ) -> tuple[DeviceState, PulseReport]:
    """Apply one pulse to a state already decayed to the pulse onset."""
    x, u, s, dxf, dxt = _kick(state.x, state.u, state.s, pulse.v, pulse.d, params)
    return DeviceState(x, u, s, pulse.t + pulse.d), PulseReport(dxf, dxt)


def run_waveform(state: DeviceState, program: Sequence[PulseSpec], params: DeviceParams
                 ) -> tuple[DeviceState, list[tuple[float, float]]]:
    """Drive the device through sorted, non-overlapping pulses.

    Returns the final state and ``(t_end, G)`` after every pulse.
    """
    x, u, s, t_last = state.x, state.u, state.s, state.t_last
    exp, tau_th, tau_s = math.exp, params.tau_th, params.tau_s
    traj = []
    for k, (t, v, d) in enumerate(program):
        gap = t - t_last
        if gap < 0:
            raise ValueError(f"pulse {k} at t={t} starts before the previous one ended ({t_last})")
        if not d > 0:
            raise ValueError(f"pulse {k} has non-positive width {d}")
        if gap > 0:
            u *= exp(-gap / tau_th)
            s *= exp(-gap / tau_s)
        x, u, s, _, _ = _kick(x, u, s, v, d, params)
        t_last = t + d
        traj.append((t_last, x_to_g(x, params)))
    return DeviceState(x, u, s, t_last), traj


def delta_g_percent(g_initial: float, g_final: float) -> float:
    return 100.0 * (g_final - g_initial) / g_initial


@dataclass(frozen=True)
class IvCurve:
    v: np.ndarray
    i: np.ndarray

    def __len__(self):
        return len(self.v)

    def loop_area(self) -> float:
        """Sum of the absolute areas enclosed by the positive and negative lobes.

        Each lobe is integrated with the trapezoid rule and summed exactly
        (``math.fsum``), so a loop that retraces its own samples has area 0.0.
        """
        zeros = np.flatnonzero(self.v == 0.0)
        area = 0.0
        for a, b in zip(zeros, zeros[1:]):
            vv, ii = self.v[a:b + 1].tolist(), self.i[a:b + 1].tolist()
            terms = [(vv[k + 1] - vv[k]) * (ii[k + 1] + ii[k]) for k in range(len(vv) - 1)]
            area += 0.5 * abs(math.fsum(terms))
        return float(area)


def staircase(v_peak: float, step: float) -> list[float]:
    """0 -> +v_peak -> 0 -> -v_peak -> 0 in increments of ``step``."""
    n = int(round(v_peak / step))
    up = [k * step for k in range(n + 1)]
    if up[-1] < v_peak - 1e-12:
        up.append(v_peak)
        n += 1
    half = up + up[-2::-1]
    return half + [-v for v in half[1:]]


def iv_sweep(state: DeviceState, v_peak: float, step: float, dwell: float, params: DeviceParams,
             gap: float | None = None) -> tuple[IvCurve, DeviceState]:
    """Triangular staircase sweep; each non-zero step is a pulse of width ``dwell``.

    Steps are separated by ``gap`` seconds (defaults to ``dwell``). The
    current of each sample is read with the conductance at the end of its
    step, and zero-voltage samples carry exactly zero current.
    """
    if not v_peak > 0 or not step > 0:
        raise ValueError("v_peak and step must be positive")
    gap = dwell if gap is None else gap
    t = state.t_last
    vs, cur = [], []
    for v in staircase(v_peak, step):
        if v != 0.0:
            state = step_gap(state, t - state.t_last, params)
            state, _ = apply_pulse(state, PulseSpec(t, v, dwell), params)
            cur.append(v * conductance_of(state, params))
        else:
            cur.append(0.0)
        vs.append(v)
        t += dwell + gap
    return IvCurve(np.array(vs), np.array(cur)), state


# short, closely spaced pulses: sensitization gives usable steps while the
# Joule deposit per pulse stays below threshold near g_max
PROGRAM_AMP = 2.5
PROGRAM_WIDTH = 2e-6
PROGRAM_INTERVAL = 5e-3


def program_to_target(state: DeviceState, g_target: float, tol: float, max_pulses: int,
                      params: DeviceParams, amp: float = PROGRAM_AMP, width: float = PROGRAM_WIDTH,
                      interval: float = PROGRAM_INTERVAL) -> tuple[DeviceState, int]:
    """Closed-loop write: pulse toward ``g_target`` until within ``tol`` (relative).

    Positive pulses lower the conductance, negative pulses raise it. Raises
    :class:`ProgrammingError` (with the final state) when ``max_pulses`` runs out.
    """
    if not params.g_min * (1 + tol) < g_target < params.g_max * (1 - tol):
        raise ValueError(f"target {g_target:g} S outside the programmable window "
                         f"({params.g_min * (1 + tol):g}, {params.g_max * (1 - tol):g}) S")
    if amp <= max(params.v_set, params.v_reset):
        raise ValueError("programming amplitude must exceed both switching thresholds")
    used = 0
    while True:
        g = conductance_of(state, params)
        if abs(g - g_target) / g_target <= tol:
            return state, used
        if used >= max_pulses:
            raise ProgrammingError(f"no convergence to {g_target:g} S within {max_pulses} pulses "
                                   f"(at {g:g} S)", state, used)
        v = amp if g > g_target else -amp
        t = state.t_last + interval
        state = step_gap(state, interval, params)
        state, _ = apply_pulse(state, PulseSpec(t, v, width), params)
        used += 1
