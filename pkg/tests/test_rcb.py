import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memsyn.rcb import (RcbDynamicsParams, RcbLattice, SingularLatticeError, apply_bias_step,
                        cycle_states, equivalent_resistance, filament_lattice, synthesize_state)
from oracles import closed_form_sp, kron_resistance, series_parallel_resistance


def n_branches(rows, cols):
    return rows * cols + (rows - 1) * (cols - 1)


def test_single_on_branch():
    lat = RcbLattice.uniform(1, 1, on=True)
    assert equivalent_resistance(lat)[0] == pytest.approx(100.0, rel=1e-15)


def test_two_parallel_branches():
    lat = RcbLattice.uniform(1, 2, on=True)
    assert equivalent_resistance(lat)[0] == pytest.approx(50.0, rel=1e-15)


def test_series_column():
    lat = RcbLattice.from_states(3, 1, [1, 0, 1])
    assert equivalent_resistance(lat)[0] == pytest.approx(100 + 1e6 + 100, rel=1e-12)


@pytest.mark.parametrize("shape", [(1, 1), (1, 2), (1, 3), (2, 1), (3, 1), (2, 2), (2, 3), (3, 2)])
def test_exhaustive_small_lattices_match_exact_reduction(shape):
    rows, cols = shape
    for states in itertools.product([False, True], repeat=n_branches(rows, cols)):
        r = equivalent_resistance(RcbLattice.from_states(rows, cols, states))[0]
        exact = float(kron_resistance(rows, cols, states))
        assert abs(r - exact) <= 1e-9 * exact


def test_exhaustive_3x3_matches_exact_reduction():
    for states in itertools.product([False, True], repeat=n_branches(3, 3)):
        r = equivalent_resistance(RcbLattice.from_states(3, 3, states))[0]
        exact = float(kron_resistance(3, 3, states))
        assert abs(r - exact) <= 1e-9 * exact


def test_series_parallel_families_only():
    # bridges appear as soon as both dimensions exceed one
    assert series_parallel_resistance(2, 2, [1] * 5) is None
    for states in itertools.product([0, 1], repeat=3):
        assert series_parallel_resistance(1, 3, states) == closed_form_sp(1, 3, states)
        assert series_parallel_resistance(3, 1, states) == closed_form_sp(3, 1, states)


def test_random_4x4_against_exact_reduction():
    rng = np.random.default_rng(7)
    for _ in range(30):
        states = rng.random(n_branches(4, 4)) < 0.5
        r = equivalent_resistance(RcbLattice.from_states(4, 4, states))[0]
        exact = float(kron_resistance(4, 4, states))
        assert abs(r - exact) <= 1e-9 * exact


def test_drops_sum_along_a_column():
    lat = RcbLattice.from_states(3, 1, [1, 0, 1])
    _, drops = equivalent_resistance(lat, 2.0)
    assert drops.sum() == pytest.approx(2.0, rel=1e-12)
    assert drops[1] == pytest.approx(2.0 * 1e6 / (1e6 + 200), rel=1e-12)


def test_zero_bias_gives_zero_drops():
    lat = filament_lattice(3, 3, [1])
    r, drops = equivalent_resistance(lat, 0.0)
    assert r > 0 and not drops.any()


def test_invalid_resistances_rejected():
    with pytest.raises(ValueError):
        RcbLattice.uniform(2, 2, r_on=10, r_off=5)


lattices = st.tuples(st.integers(1, 4), st.integers(1, 4)).flatmap(
    lambda rc: st.tuples(st.just(rc[0]), st.just(rc[1]),
                         st.lists(st.booleans(), min_size=n_branches(*rc),
                                  max_size=n_branches(*rc))))


@settings(max_examples=150, deadline=None)
@given(lattices)
def test_bounds_between_all_on_and_all_off(lat):
    rows, cols, states = lat
    r = equivalent_resistance(RcbLattice.from_states(rows, cols, states))[0]
    lo = equivalent_resistance(RcbLattice.uniform(rows, cols, True))[0]
    hi = equivalent_resistance(RcbLattice.uniform(rows, cols, False))[0]
    assert lo * (1 - 1e-12) <= r <= hi * (1 + 1e-12)


@settings(max_examples=150, deadline=None)
@given(lattices, st.integers(0, 10**6))
def test_turning_a_branch_on_never_raises_resistance(lat, pick):
    rows, cols, states = lat
    states = list(states)
    k = pick % len(states)
    states[k] = False
    before = equivalent_resistance(RcbLattice.from_states(rows, cols, states))[0]
    states[k] = True
    after = equivalent_resistance(RcbLattice.from_states(rows, cols, states))[0]
    assert after <= before * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(lattices, st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3))
def test_resistance_independent_of_bias(lat, v):
    rows, cols, states = lat
    L = RcbLattice.from_states(rows, cols, states)
    r1, d1 = equivalent_resistance(L, 1.0)
    rv, dv = equivalent_resistance(L, v)
    assert rv == r1
    np.testing.assert_allclose(dv, v * d1, rtol=1e-12, atol=1e-15)


def test_bias_step_zero_voltage_is_identity():
    lat = filament_lattice(4, 4, [0])
    out = apply_bias_step(lat, 0.0, RcbDynamicsParams(), np.random.default_rng(0))
    assert out == lat


def test_bias_step_forced_set():
    lat = RcbLattice.uniform(1, 1, on=False)
    dyn = RcbDynamicsParams(v_set_branch=0.5, p_set=1.0, p_crit=1e9)
    out = apply_bias_step(lat, 1.0, dyn, np.random.default_rng(0))
    assert out.states().all()


def test_bias_step_forced_reset():
    lat = RcbLattice.uniform(1, 1, on=True)
    dyn = RcbDynamicsParams(p_crit=1e-3, p_reset=1.0)
    # 1 V over 100 ohm dissipates 10 mW
    out = apply_bias_step(lat, 1.0, dyn, np.random.default_rng(0))
    assert not out.states().any()


def _trajectory(seed, steps=100):
    rng = np.random.default_rng(seed)
    dyn = RcbDynamicsParams(v_set_branch=0.2, p_crit=2e-4, p_set=0.3, p_reset=0.3)
    lat = RcbLattice.uniform(4, 4, on=False)
    out = []
    for _ in range(steps):
        lat = apply_bias_step(lat, 1.5, dyn, rng)
        out.append(lat.states().copy())
    return np.array(out)


def test_bias_trajectory_deterministic_under_seed():
    a, b = _trajectory(3), _trajectory(3)
    assert np.array_equal(a, b)
    assert a.any(axis=1).any()


def test_disconnected_rails_raise():
    lat = RcbLattice(np.zeros((1, 1), bool), np.zeros((0, 0), bool), r_on=1.0, r_off=2.0)
    assert equivalent_resistance(lat)[0] == pytest.approx(2.0)
    with pytest.raises(SingularLatticeError):
        equivalent_resistance(RcbLattice(np.zeros((1, 1), bool), np.zeros((0, 0), bool),
                                         r_on=1.0, r_off=np.inf))


def test_synthesize_extremes():
    on = RcbLattice.uniform(8, 8, True)
    off = RcbLattice.uniform(8, 8, False)
    assert synthesize_state(equivalent_resistance(off)[0], 8, 8) == off
    assert synthesize_state(equivalent_resistance(on)[0], 8, 8) == on


def test_synthesize_unreachable_target():
    with pytest.raises(ValueError):
        synthesize_state(1.0, 8, 8)


@pytest.mark.parametrize("target", [150.0, 400.0, 1200.0, 3000.0, 2e4, 5e4, 9e4])
def test_synthesize_within_ten_percent(target):
    lat = synthesize_state(target, 8, 8, r_on=100, r_off=1e5)
    r = equivalent_resistance(lat)[0]
    assert abs(r - target) / target <= 0.10


def test_three_states_pairwise_separated():
    rs = [equivalent_resistance(synthesize_state(t, 8, 8))[0] for t in (150.0, 400.0, 1200.0)]
    for a, b in itertools.combinations(sorted(rs), 2):
        assert b / a >= 2.0


def test_cycle_states_shapes():
    lat = filament_lattice(3, 3, [0])
    assert len(cycle_states([lat], 1)) == 1
    lats = [filament_lattice(3, 3, range(k)) for k in (1, 2, 3)]
    log = cycle_states(lats, 200)
    assert len(log) == 600
    for k in range(3):
        assert len({r for _, i, r in log if i == k}) == 1
    with pytest.raises(ValueError):
        cycle_states([], 3)


def test_json_round_trip():
    lat = synthesize_state(400.0, 5, 4)
    again = RcbLattice.from_dict(json.loads(lat.to_json()))
    assert again == lat and hash(again) == hash(lat)


def test_snake_path_resistance_grows_with_detour():
    from memsyn.rcb import snake_lattice
    rs = [equivalent_resistance(snake_lattice(8, 8, k))[0] for k in range(0, 20)]
    assert all(b > a for a, b in zip(rs, rs[1:]))
    assert rs[4] == pytest.approx(1200.0, rel=0.02)
