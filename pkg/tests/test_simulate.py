import pytest

from flowattest.cfg import BlockTrace, load_cfg, split_trace, validate_trace
from flowattest.errors import WalkError
from flowattest.events import delta_map
from flowattest.simulate import measure, measure_segment, random_valid_walk
from flowattest.vectors import vadd, vscale, vsub, vsum

from .conftest import LOOP1, straight_line_doc, two_loop_chain_doc
from .randcfg import random_cfg_and_table


def test_straight_line_delta_uses_exit_convention(tiny_table):
    cfg = load_cfg(straight_line_doc())
    (m,) = measure(cfg, tiny_table, None, BlockTrace(("s.0", "s.1", "s.2")))
    # delta(s.1) + delta(s.2); the start snapshot block is excluded.
    assert m.delta == (3, 0, 1)
    assert (m.start, m.end) == ("s.0", "s.2")


def test_loop_taken_twice_adds_two_loop_vectors(tiny_table):
    cfg = load_cfg(two_loop_chain_doc())
    trace = BlockTrace(("A", "B", "D", "E", "B", "D", "E", "B", "C"))
    (m,) = measure(cfg, tiny_table, None, trace)
    assert m.delta == vadd((3, 1, 0), vscale(2, LOOP1))


def test_long_trace_matches_naive_accumulator():
    from flowattest.demos import signer_cfg, signer_trace
    from flowattest.events import default_event_table

    cfg = load_cfg(signer_cfg(True))
    table = default_event_table()
    trace = BlockTrace(tuple(signer_trace(1700, 7, True)))
    assert len(trace.steps) > 10_000
    measurements = measure(cfg, table, None, trace)
    # Independent pass: accumulate per step, snapshotting at measurement
    # points exactly like the monitor would.
    deltas = delta_map(cfg, table)
    acc = [0] * table.dimension
    naive = []
    for step in trace.steps[1:]:
        acc = [a + d for a, d in zip(acc, deltas[step])]
        if cfg.is_measurement_point(step):
            naive.append(tuple(acc))
            acc = [0] * table.dimension
    assert [m.delta for m in measurements] == naive


def test_measure_is_deterministic(tiny_table):
    cfg = load_cfg(two_loop_chain_doc())
    trace = BlockTrace(("A", "B", "D", "E", "B", "C"))
    assert measure(cfg, tiny_table, None, trace) == measure(cfg, tiny_table, None, trace)


def test_offset_is_added_per_snapshot(tiny_table):
    cfg = load_cfg(two_loop_chain_doc())
    trace = BlockTrace(("A", "B", "C"))
    plain = measure(cfg, tiny_table, None, trace)
    shifted = measure(cfg, tiny_table, None, trace, offset=(3, 0, 1))
    assert [m.delta for m in shifted] == [vadd(m.delta, (3, 0, 1)) for m in plain]
    assert [vsub(m.delta, (3, 0, 1)) for m in shifted] == [m.delta for m in plain]


def test_segment_deltas_sum_to_whole_trace(tiny_table):
    cfg = load_cfg(two_loop_chain_doc())
    trace = BlockTrace(("A", "B", "D", "F", "G", "D", "E", "B", "C"))
    measurements = measure(cfg, tiny_table, None, trace)
    deltas = delta_map(cfg, tiny_table)
    whole = vsum((deltas[s] for s in trace.steps), cfg.dimension)
    start_part = deltas[trace.steps[0]]
    assert vsum((m.delta for m in measurements), cfg.dimension) == vsub(whole, start_part)


def test_walks_are_seed_deterministic():
    cfg, _table = random_cfg_and_table(3)
    a = random_valid_walk(cfg, 42)
    b = random_valid_walk(cfg, 42)
    assert a == b


def test_zero_loop_iterations_never_enter_the_loop(tiny_table):
    cfg = load_cfg(two_loop_chain_doc())
    for seed in range(10):
        trace = random_valid_walk(cfg, seed, max_loop_iterations=0)
        assert "D" not in trace.steps


def test_hundred_walks_all_validate():
    cfg, _table = random_cfg_and_table(77, max_blocks=30)
    for seed in range(100):
        trace = random_valid_walk(cfg, seed, min_segments=1, max_segments=5)
        assert validate_trace(cfg, trace)
        assert len(split_trace(cfg, trace)) >= 1


def test_unsatisfiable_constraints_raise(tiny_table):
    cfg = load_cfg(straight_line_doc())
    with pytest.raises(WalkError):
        # The line has exactly one segment; five are impossible and even a
        # one-segment prefix cannot appear five times.
        random_valid_walk(cfg, 0, min_segments=5, max_segments=5, attempts=10)


def test_measure_segment_handles_invalid_sequences(tiny_table):
    cfg = load_cfg(two_loop_chain_doc())
    broken = BlockTrace(("A", "D", "C"))  # no A->D edge
    assert not validate_trace(cfg, broken)
    m = measure_segment(cfg, tiny_table, None, broken)
    deltas = delta_map(cfg, tiny_table)
    assert m.delta == vadd(deltas["D"], deltas["C"])
