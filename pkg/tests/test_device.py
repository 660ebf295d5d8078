import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from memsyn.device import (DeviceParams, DeviceState, ProgrammingError, PulseSpec, apply_pulse,
                           conductance_of, delta_g_percent, g_to_x, iv_sweep, program_to_target,
                           run_waveform, staircase, step_gap, x_to_g)
from memsyn.experiments import Bench, run_program
from memsyn.protocols import gen_pair

P = DeviceParams()

# e^-1 and 1e-6 * 10**1.5, evaluated at 30 digits with mpmath
E_INV = 0.36787944117144233
G_HALF = 3.1622776601683794e-05


def test_conductance_bounds():
    assert conductance_of(DeviceState(0.0), P) == pytest.approx(1e-6, rel=1e-15)
    assert conductance_of(DeviceState(1.0), P) == pytest.approx(1e-3, rel=1e-13)


def test_conductance_midpoint():
    assert conductance_of(DeviceState(0.5), P) == pytest.approx(G_HALF, rel=1e-13)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_conductance_monotone(a, b):
    assume(b - a > 1e-12)
    assert x_to_g(a, P) < x_to_g(b, P)


@given(st.floats(0.0, 1.0))
def test_g_to_x_inverts(x):
    assert g_to_x(x_to_g(x, P), P) == pytest.approx(x, abs=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        DeviceParams(g_min=1e-3, g_max=1e-6)
    with pytest.raises(ValueError):
        DeviceParams(x_sat=1.0)
    with pytest.raises(ValueError):
        DeviceParams(kappa=0.0)
    with pytest.raises(ValueError):
        DeviceParams.from_dict({"bogus": 1.0})
    assert DeviceParams.from_dict(P.to_dict()) == P


def test_state_validation():
    with pytest.raises(ValueError):
        DeviceState(1.5)
    with pytest.raises(ValueError):
        DeviceState(0.5, u=-1.0)


def test_step_gap_identity():
    st0 = DeviceState(0.4, 0.7, 2.0, 3.0)
    assert step_gap(st0, 0.0, P) == st0


def test_step_gap_one_time_constant():
    out = step_gap(DeviceState(0.5, 1.0, 0.0), P.tau_th, P)
    assert out.u == pytest.approx(E_INV, rel=1e-14)


def test_step_gap_negative():
    with pytest.raises(ValueError):
        step_gap(DeviceState(0.5), -1e-3, P)


@given(st.floats(0.0, 1.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.floats(0.0, 1.0))
def test_step_gap_non_volatile(x, u, s, delta):
    assert step_gap(DeviceState(x, u, s), delta, P).x == x


@given(st.floats(0.0, 5.0), st.floats(0.0, 50.0), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_step_gap_composition(u, s, a, b):
    st0 = DeviceState(0.3, u, s)
    two = step_gap(step_gap(st0, a, P), b, P)
    one = step_gap(st0, a + b, P)
    assert two.u == pytest.approx(one.u, rel=1e-12, abs=1e-300)
    assert two.s == pytest.approx(one.s, rel=1e-12, abs=1e-300)


def test_sub_threshold_pulse_is_inert():
    st1, rep = apply_pulse(DeviceState(0.5), PulseSpec(0.0, 1.0, 50e-6), P)
    assert rep.dx_field == 0.0 and rep.dx_thermal == 0.0
    assert st1.x == 0.5
    assert st1.s == 1.0


def test_positive_pulse_depresses():
    _, rep = apply_pulse(DeviceState(0.5), PulseSpec(0.0, 2.0, 10e-6), P)
    assert rep.dx_field < 0
    assert rep.dx_thermal == 0.0


def test_field_term_closed_form():
    x, s, v, d = 0.3, 2.0, -2.4, 20e-6
    _, rep = apply_pulse(DeviceState(x, 0.0, s), PulseSpec(0.0, v, d), P)
    expect = P.eta_f * (abs(v) - P.v_reset) * d * (1 - x) * (1 + P.kappa * s)
    assert rep.dx_field == pytest.approx(expect, rel=1e-14)


def test_thermal_term_closed_form():
    p = DeviceParams(x_sat=0.9)
    x, u0, v, d = 0.2, 0.9, 1.0, 1e-3
    st1, rep = apply_pulse(DeviceState(x, u0), PulseSpec(0.0, v, d), p)
    u = u0 + p.c_j * v * v * x_to_g(x, p) * d
    assert u > p.u_th
    assert rep.dx_thermal == pytest.approx(p.eta_t * (u - p.u_th) * (p.x_sat - x), rel=1e-12)
    assert st1.u == p.u_th


def test_thermal_attractor_sign():
    # a hot train moves x toward x_sat from either side
    p = DeviceParams(x_sat=0.9)
    hot = [PulseSpec(k * 1e-4, 1.0, 1e-3) for k in range(3)]
    for x0, sign in ((0.2, 1), (0.95, -1)):
        st0 = DeviceState(x0, u=0.999)
        _, rep = apply_pulse(st0, hot[0], p)
        assert math.copysign(1, rep.dx_thermal) == sign


def test_accumulation_closed_form():
    # sub-threshold thermal, fully decayed sensitization: 1 - x shrinks geometrically
    v, d, x0, n = -2.0, 50e-6, 0.2, 10
    a = P.eta_f * (abs(v) - P.v_reset) * d
    state, steps = DeviceState(x0), []
    for k in range(n):
        state = step_gap(state, k * 100.0 - state.t_last, P) if k else state
        state, rep = apply_pulse(state, PulseSpec(k * 100.0, v, d), P)
        assert rep.dx_thermal == 0.0
        steps.append(rep.dx_field)
    expect = [a * (1 - a) ** k * (1 - x0) for k in range(n)]
    assert steps == pytest.approx(expect, rel=1e-9)
    assert all(steps[i] > steps[i + 1] for i in range(n - 1))


@given(st.floats(0.0, 1.0), st.floats(-30.0, 30.0), st.floats(1e-7, 1e-2),
       st.floats(0.0, 100.0), st.floats(0.0, 5.0))
def test_clamp(x, v, d, s, u):
    st1, _ = apply_pulse(DeviceState(x, u, s), PulseSpec(0.0, v, d), P)
    assert 0.0 <= st1.x <= 1.0
    assert st1.u >= 0.0
    assert st1.s == s + 1.0


def test_run_waveform_empty():
    st0 = DeviceState(0.4)
    out, traj = run_waveform(st0, [], P)
    assert out == st0 and traj == []


def test_run_waveform_single_sub_threshold():
    st0 = DeviceState(0.4)
    _, traj = run_waveform(st0, [PulseSpec(0.0, 0.5, 1e-6)], P)
    assert len(traj) == 1
    assert traj[0][1] == conductance_of(st0, P)


def test_run_waveform_rejects_overlap():
    with pytest.raises(ValueError):
        run_waveform(DeviceState(0.4), [PulseSpec(0.0, 2.0, 1e-3), PulseSpec(5e-4, 2.0, 1e-3)], P)
    with pytest.raises(ValueError):
        run_waveform(DeviceState(0.4), [PulseSpec(0.0, 2.0, 0.0)], P)


def test_run_waveform_matches_stepwise():
    pulses = [PulseSpec(0.0, -3.5, 50e-6), PulseSpec(0.01, 3.5, 50e-6), PulseSpec(0.5, -2.5, 1e-4)]
    st0 = DeviceState(0.4)
    out, _ = run_waveform(st0, pulses, P)
    state = st0
    for p in pulses:
        state = step_gap(state, p.t - state.t_last, P)
        state, _ = apply_pulse(state, p, P)
    assert out == state


def test_stdp_pair_potentiates():
    # the bench operating point sits mid-range, below the Joule onset of a 3.5 V pair
    dg, _, traj = run_program(gen_pair(10e-3), Bench().stdp_x0, P)
    assert dg > 0
    assert len(traj) == 120


def test_deterministic():
    a = run_program(gen_pair(-20e-3), 0.6, P)
    b = run_program(gen_pair(-20e-3), 0.6, P)
    assert a == b


def test_delta_g_percent():
    assert delta_g_percent(2.0, 3.0) == 50.0


def test_staircase_shape():
    v = staircase(0.2, 0.05)
    assert v[0] == 0.0 and v[-1] == 0.0 and max(v) == pytest.approx(0.2) and min(v) == pytest.approx(-0.2)
    assert sum(1 for x in v if x == 0.0) == 3


def test_iv_sub_threshold_is_linear():
    # below v_set and with the Joule deposit per step under u_th
    curve, _ = iv_sweep(DeviceState(0.3), 1.0, 0.05, 1e-3, P, gap=1.0)
    g0 = x_to_g(0.3, P)
    assert np.array_equal(curve.i, curve.v * g0)
    assert curve.loop_area() == 0.0


def test_iv_pinched_and_switching():
    p = DeviceParams(x_sat=0.9)
    curve, _ = iv_sweep(DeviceState(0.9), 2.0, 0.05, 30e-3, p)
    assert all(i == 0.0 for v, i in zip(curve.v, curve.i) if v == 0.0)
    assert curve.loop_area() > 0
    n = len(curve) // 2
    pos_g = curve.i[1:n] / curve.v[1:n]
    assert pos_g[-1] < x_to_g(0.9, p)


def test_iv_validation():
    with pytest.raises(ValueError):
        iv_sweep(DeviceState(0.5), -1.0, 0.05, 1e-3, P)


def test_program_already_there():
    st0 = DeviceState(0.5)
    out, used = program_to_target(st0, conductance_of(st0, P), 0.01, 10, P)
    assert used == 0 and out == st0


def test_program_mid_range():
    out, used = program_to_target(DeviceState(0.0), G_HALF, 0.05, 100000, P)
    assert used >= 1
    assert abs(conductance_of(out, P) - G_HALF) / G_HALF <= 0.05


def test_program_rejects_bounds():
    with pytest.raises(ValueError):
        program_to_target(DeviceState(0.0), P.g_max, 0.01, 10, P)
    with pytest.raises(ValueError):
        program_to_target(DeviceState(0.0), 1e-4, 0.01, 10, P, amp=1.0)


def test_program_runs_out():
    with pytest.raises(ProgrammingError) as err:
        program_to_target(DeviceState(0.0), 1e-4, 0.01, 5, P)
    assert err.value.pulses_used == 5
    assert err.value.state.x > 0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9))
def test_program_converges(xt):
    g = x_to_g(xt, P)
    start = DeviceState(1.0 if xt > 0.5 else 0.0)
    out, _ = program_to_target(start, g, 0.01, 200000, P)
    assert abs(conductance_of(out, P) - g) / g <= 0.01
