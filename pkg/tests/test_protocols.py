import math

import pytest
from hypothesis import given, settings, strategies as st

from memsyn.device import PulseSpec
from memsyn.protocols import (ProtocolError, ProtocolKind, ProtocolSpec, SpikeEvent, SpikeProgram,
                              Terminal, TripletOrder, compile_waveform, gen_frequency_pairs,
                              gen_pair, gen_quadruplet, gen_tetanic, gen_triplet, ms_to_s,
                              program_from_pulses, s_to_ms, write_program_csv)

PRE, POST = Terminal.PRE, Terminal.POST

# 59 * 1 s + 10 ms + 50 us
PAIR_SPAN = 59.01005


def _rel_times(prog, per_rep, period):
    return [[(round(e.t - k * period, 12), e.terminal) for e in prog.events[k * per_rep:(k + 1) * per_rep]]
            for k in range(len(prog) // per_rep)]


def test_pair_layout():
    p = gen_pair(10e-3)
    assert len(p) == 120
    assert p.events[0].t == 0.0 and p.events[0].terminal is PRE
    assert p.events[1].t == pytest.approx(0.010) and p.events[1].terminal is POST
    assert p.events[118].t == 59.0
    assert p.end_time == pytest.approx(PAIR_SPAN, abs=1e-12)


def test_pair_negative_dt():
    p = gen_pair(-10e-3)
    for a, b in zip(p.events[::2], p.events[1::2]):
        assert a.terminal is POST and b.terminal is PRE
        assert b.t - a.t == pytest.approx(10e-3)


def test_pair_rejects():
    with pytest.raises(ProtocolError):
        gen_pair(0.0)
    with pytest.raises(ProtocolError):
        gen_pair(10e-6)
    with pytest.raises(ProtocolError):
        gen_pair(10e-3, n_reps=0)
    with pytest.raises(ProtocolError):
        gen_pair(0.9, rep_freq=2.0)


@given(st.floats(1e-3, 0.4), st.booleans())
def test_pair_mirror(dt, neg):
    a, b = gen_pair(dt), gen_pair(-dt)
    assert [e.t for e in a] == [e.t for e in b]
    assert [e.terminal for e in a] == [POST if e.terminal is PRE else PRE for e in b]


def test_triplet_layouts():
    p = gen_triplet(TripletOrder.PRE_POST_PRE, 5e-3, 5e-3)
    assert len(p) == 180
    assert [e.terminal for e in p.events[:3]] == [PRE, POST, PRE]
    assert [e.t for e in p.events[:3]] == pytest.approx([0.0, 5e-3, 10e-3])
    q = gen_triplet("POST_PRE_POST", 15e-3, 5e-3)
    assert [e.terminal for e in q.events[:3]] == [POST, PRE, POST]
    assert [e.t for e in q.events[:3]] == pytest.approx([0.0, 15e-3, 20e-3])


def test_triplet_from_first():
    p = gen_triplet(TripletOrder.POST_PRE_POST, 5e-3, 15e-3, timing="from_first")
    assert [e.t for e in p.events[:3]] == pytest.approx([0.0, 5e-3, 15e-3])
    with pytest.raises(ProtocolError):
        gen_triplet(TripletOrder.POST_PRE_POST, 15e-3, 5e-3, timing="from_first")
    with pytest.raises(ProtocolError):
        gen_triplet(TripletOrder.POST_PRE_POST, 0.0, 5e-3)
    with pytest.raises(ProtocolError):
        gen_triplet(TripletOrder.POST_PRE_POST, 5e-3, 5e-3, timing="sideways")


def test_quadruplet_layouts():
    p = gen_quadruplet(20e-3, 5e-3)
    assert len(p) == 240
    assert [(round(e.t, 12), e.terminal) for e in p.events[:4]] == [
        (0.0, POST), (0.005, PRE), (0.02, PRE), (0.025, POST)]
    q = gen_quadruplet(-20e-3, 5e-3)
    assert [(round(e.t, 12), e.terminal) for e in q.events[:4]] == [
        (0.0, PRE), (0.005, POST), (0.02, POST), (0.025, PRE)]
    with pytest.raises(ProtocolError):
        gen_quadruplet(4e-3, 5e-3)


def test_frequency_pairs():
    assert gen_frequency_pairs(1.0, 10e-3).events == gen_pair(10e-3).events
    p = gen_frequency_pairs(40.0, -10e-3)
    assert p.events[-1].t - p.events[0].t == pytest.approx(59 * 0.025 + 0.010)
    with pytest.raises(ProtocolError):
        gen_frequency_pairs(200.0, -10e-3)


def test_tetanic():
    p = gen_tetanic()
    assert len(p) == 9 and all(e.terminal is PRE for e in p)
    assert len(gen_tetanic(1)) == 1
    a, b = gen_tetanic(width=1e-6), gen_tetanic(width=5e-6)
    assert [e.t for e in a] == [e.t for e in b]
    assert all(e.width == 5e-6 for e in b)
    with pytest.raises(ProtocolError):
        gen_tetanic(period=1e-6, width=5e-6)


@pytest.mark.parametrize("prog,per_rep,period", [
    (gen_pair(-30e-3), 2, 1.0),
    (gen_triplet("PRE_POST_PRE", 5e-3, 15e-3), 3, 1.0),
    (gen_quadruplet(-40e-3, 10e-3, rep_freq=5.0), 4, 0.2),
    (gen_frequency_pairs(30.0, 10e-3), 2, 1 / 30),
])
def test_repetitions_are_shifts(prog, per_rep, period):
    reps = _rel_times(prog, per_rep, period)
    assert all(r == reps[0] for r in reps)
    ts = [e.t for e in prog]
    assert ts == sorted(ts)


def test_compile_cancellation():
    prog = SpikeProgram((SpikeEvent(0.0, PRE), SpikeEvent(0.0, POST)))
    assert compile_waveform(prog) == []


def test_compile_lone_pre():
    assert compile_waveform([SpikeEvent(1.0, PRE)]) == [PulseSpec(1.0, 3.5, 50e-6)]


def test_compile_pair():
    segs = compile_waveform(program_from_pulses([(0.0, PRE), (10e-3, POST)]))
    assert len(segs) == 2
    assert segs[0] == PulseSpec(0.0, 3.5, 50e-6)
    assert segs[1].t == 10e-3 and segs[1].v == -3.5 and segs[1].d == pytest.approx(50e-6)


def test_compile_overlap_superposes():
    segs = compile_waveform([SpikeEvent(0.0, PRE, 3.0, 2e-3), SpikeEvent(1e-3, POST, 1.0, 2e-3)])
    assert [(s.t, s.v) for s in segs] == [(0.0, 3.0), (1e-3, 2.0), (2e-3, -1.0)]


def test_compile_empty():
    assert compile_waveform([]) == []


def _integral(segs):
    return math.fsum(s.v * s.d for s in segs)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 200), st.booleans()), min_size=1, max_size=30, unique_by=lambda x: x[0]))
def test_compile_conserves_integral(slots):
    # 1 ms slots with 50 us pulses never overlap
    prog = program_from_pulses([(k * 1e-3, PRE if pre else POST) for k, pre in slots])
    segs = compile_waveform(prog)
    n_pre = sum(1 for _, pre in slots if pre)
    expect = 3.5 * 50e-6 * (n_pre - (len(slots) - n_pre))
    assert _integral(segs) == pytest.approx(expect, abs=1e-15)
    for a, b in zip(segs, segs[1:]):
        assert a.t + a.d <= b.t


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1e-2), st.booleans(), st.floats(0.5, 5.0), st.floats(1e-6, 3e-3)),
                min_size=1, max_size=12))
def test_compile_segments_disjoint(spikes):
    events = sorted((SpikeEvent(t, PRE if pre else POST, a, w) for t, pre, a, w in spikes),
                    key=lambda e: e.t)
    segs = compile_waveform(SpikeProgram(tuple(events)))
    for s in segs:
        assert s.d > 0 and s.v != 0.0
    for a, b in zip(segs, segs[1:]):
        assert a.t + a.d <= b.t + 1e-15
    # superposed integral equals the signed sum of the pulse areas
    expect = math.fsum((e.amp if e.terminal is PRE else -e.amp) * e.width for e in events)
    assert _integral(segs) == pytest.approx(expect, abs=1e-12)


def test_spec_round_trip():
    specs = [ProtocolSpec(ProtocolKind.PAIR, dt=-0.01),
             ProtocolSpec("TRIPLET", dt1=0.005, dt2=0.015, order="POST_PRE_POST"),
             ProtocolSpec("QUADRUPLET", T=0.02, dt=0.005),
             ProtocolSpec("FREQ_PAIR", dt=0.01, rep_freq=40.0),
             ProtocolSpec("TETANIC")]
    for s in specs:
        again = ProtocolSpec.from_dict(s.to_dict())
        assert again == s
        assert again.build().events == s.build().events


def test_spec_defaults_and_errors():
    assert ProtocolSpec("PAIR", dt=0.01).amp == 3.5
    assert ProtocolSpec("TETANIC").build().kind == "TETANIC"
    with pytest.raises(ProtocolError):
        ProtocolSpec("PAIR").build()
    with pytest.raises(ValueError):
        ProtocolSpec("WALTZ")


@given(st.floats(-1e3, 1e3).filter(lambda v: v == round(v, 3)))
def test_ms_round_trip(ms):
    assert s_to_ms(ms_to_s(ms)) == ms


def test_program_csv(tmp_path):
    path = tmp_path / "p.csv"
    write_program_csv(gen_pair(10e-3, n_reps=2), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,terminal,amp_v,width_s"
    assert lines[2] == "0.01,POST,3.5,5e-05"
    assert len(lines) == 5
