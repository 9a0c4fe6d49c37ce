"""Deterministic replay of block traces into measurement sequences.

The simulator never interprets instruction semantics: which blocks ran is
all that matters, so a trace is replayed by summing block deltas.  Branch
decisions exist only in the walk generator, which picks edges.

A snapshot is taken when a measurement-point block finishes, so a segment's
delta covers every step after the starting snapshot block up to and
including the ending one (the same convention the preprocessor uses for
candidate base vectors).  The optional per-snapshot ``offset`` models a
fixed monitor footprint added to every measurement; verification subtracts
the same constant.
"""

from __future__ import annotations

import random
from collections import Counter

from .cfg import AnnotatedCfg, BlockTrace, Measurement, split_trace, validate_trace
from .errors import SchemaError, WalkError
from .events import CounterConfig, EventTable, delta_map, project
from .vectors import Vec, vadd, vsum


def measure_segment(
    cfg: AnnotatedCfg,
    table: EventTable,
    config: CounterConfig | None,
    segment: BlockTrace,
    *,
    offset: Vec | None = None,
    deltas: dict[str, Vec] | None = None,
) -> Measurement:
    """One measurement for a block sequence running between two snapshots.

    Unlike :func:`measure` this does not require the sequence to be a valid
    walk; the attack harness uses it to observe deliberately broken ones.
    """
    if deltas is None:
        deltas = delta_map(cfg, table)
    raw = vsum((deltas[s] for s in segment.steps[1:]), cfg.dimension)
    value = project(config, raw) if config is not None else raw
    if offset is not None:
        value = vadd(value, offset)
    return Measurement(start=segment.steps[0], end=segment.steps[-1], delta=value)


def measure(
    cfg: AnnotatedCfg,
    table: EventTable,
    config: CounterConfig | None,
    trace: BlockTrace,
    *,
    offset: Vec | None = None,
) -> list[Measurement]:
    """One measurement per segment of the trace; bit-for-bit deterministic."""
    if not validate_trace(cfg, trace):
        raise SchemaError("refusing to measure an invalid trace")
    deltas = delta_map(cfg, table)
    return [
        measure_segment(cfg, table, config, segment, offset=offset, deltas=deltas)
        for segment in split_trace(cfg, trace)
    ]


def _legal_steps(cfg: AnnotatedCfg, block: str, stack: tuple[str, ...]):
    """(next block, next stack) pairs reachable in one step with call/return
    matching, mirroring the preprocessor's expansion rules."""
    out = []
    fn = cfg.blocks[block].function
    for edge in cfg.succ[block]:
        dst_fn = cfg.blocks[edge.dst].function
        if edge.kind == "call" or (edge.kind == "indirect" and dst_fn != fn):
            out.append((edge.dst, stack + (block,)))
        elif edge.kind == "return":
            if stack and cfg.blocks[stack[-1]].function == dst_fn:
                out.append((edge.dst, stack[:-1]))
        else:
            out.append((edge.dst, stack))
    return out


def random_valid_walk(
    cfg: AnnotatedCfg,
    seed: int,
    *,
    min_segments: int = 1,
    max_segments: int = 4,
    max_loop_iterations: int = 8,
    attempts: int = 200,
    step_budget: int = 50_000,
) -> BlockTrace:
    """A random trace that validate_trace accepts, reproducible per seed.

    The walk starts at the program entry, follows edges with call/return
    matching, and visits no node more than ``max_loop_iterations + 1`` times
    within one segment.  Attempts that dead-end off a measurement point or
    exhaust their step budget are retried with fresh randomness (still
    derived from the seed); constraints that cannot be met within the
    attempt budget raise :class:`WalkError`.
    """
    if min_segments < 1 or max_segments < min_segments:
        raise WalkError("segment constraints are inconsistent")
    rng = random.Random(seed)
    for _ in range(attempts):
        target = rng.randint(min_segments, max_segments)
        steps = [cfg.program_entry]
        stack: tuple[str, ...] = ()
        visits: Counter = Counter({(cfg.program_entry, stack): 1})
        done = 0
        budget = step_budget
        failed = False
        while done < target:
            options = [
                (blk, stk)
                for blk, stk in _legal_steps(cfg, steps[-1], stack)
                if visits[(blk, stk)] <= max_loop_iterations
            ]
            if not options or budget <= 0:
                # Accept a short walk that already ended on a snapshot.
                failed = not (
                    done >= min_segments and cfg.is_measurement_point(steps[-1])
                )
                break
            blk, stack = rng.choice(options)
            steps.append(blk)
            budget -= 1
            if cfg.is_measurement_point(blk):
                done += 1
                visits = Counter()
            visits[(blk, stack)] += 1
        if not failed and done >= min_segments:
            trace = BlockTrace(steps=tuple(steps))
            if validate_trace(cfg, trace):
                return trace
    raise WalkError(
        f"no valid walk satisfying {min_segments}..{max_segments} segments "
        f"within {attempts} attempts (seed {seed})"
    )
