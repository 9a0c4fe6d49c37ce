"""Mutation experiments and reliability metrics.

Five mutation classes probe the verifier with traces whose control flow has
genuinely been violated: block-level edits (replace, replace-with-unique,
insert-unique, remove) are re-measured through the simulator, while
``random_change`` perturbs the measured counter values directly, modeling
injected code.  Block-level mutants that would still be structurally valid
walks are discarded - those are not violations.  Mutants are deduplicated
and seed-deterministic; when a segment admits fewer distinct mutants than
the requested repetitions, all of them are used.

Reliability is "fraction of mutants the verifier rejects", summarized two
ways: ``metric_uniform`` averages per-segment rates evenly and
``metric_weighted`` weighs each segment by its original instruction count,
which exposes a single long undefended segment that the uniform average
hides.  Segments that repeat (in-loop measurement points) are evaluated
once and weighted by their occurrence frequency.

``random_change`` perturbs each counter independently by a uniform integer
in [-floor(v/10), +floor(v/10)]; this per-counter policy is recorded in the
report header.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .cfg import (
    AnnotatedCfg,
    BlockTrace,
    Measurement,
    segment_instruction_counts,
    split_trace,
    validate_trace,
)
from .database import SegmentDatabase
from .errors import FlowAttestError, SchemaError
from .events import CounterConfig, EventTable, delta_map, project
from .expand import CallStack
from .simulate import measure, measure_segment
from .vectors import Vec
from .verify import SessionState, new_session, verify_segment

MUTATION_KINDS = (
    "replace_block",
    "replace_unique",
    "insert_unique",
    "remove_block",
    "random_change",
)

RANDOM_CHANGE_POLICY = "independent-per-counter"

_DEFAULT_REPS = {
    "replace_block": 1000,
    "replace_unique": 1000,
    "insert_unique": 100,
    "remove_block": 100,
    "random_change": 100,
}


@dataclass(frozen=True)
class MutationSpec:
    kind: str
    repetitions: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MUTATION_KINDS:
            raise SchemaError(f"unknown mutation kind '{self.kind}'")
        if self.repetitions is not None and self.repetitions < 1:
            raise SchemaError("repetitions must be >= 1")

    @property
    def reps(self) -> int:
        return self.repetitions if self.repetitions is not None else _DEFAULT_REPS[self.kind]


@dataclass(frozen=True)
class Mutant:
    """Either a rewritten block sequence or a directly-perturbed measurement."""

    steps: tuple[str, ...] | None = None
    measurement: Measurement | None = None


@dataclass
class SegmentOutcome:
    first_index: int
    frequency: int
    instruction_count: int
    attempted: int
    detected: int
    excluded: bool = False
    exclusion_reason: str | None = None

    @property
    def rate(self) -> Fraction:
        return Fraction(self.detected, self.attempted) if self.attempted else Fraction(0)


@dataclass
class ReliabilityReport:
    kind: str
    seed: int
    per_segment: dict[int, SegmentOutcome]
    metric_uniform: Fraction
    metric_weighted: Fraction
    random_change_policy: str = RANDOM_CHANGE_POLICY


def combine_rates(outcomes: list[SegmentOutcome]) -> tuple[Fraction, Fraction]:
    """Both reliability metrics over the included segments, exactly.

    Frequencies multiply through both sums, so evaluating a repeated
    segment once is identical to scoring every occurrence.
    """
    included = [o for o in outcomes if not o.excluded]
    if not included:
        return Fraction(0), Fraction(0)
    total_freq = sum(o.frequency for o in included)
    uniform = sum((o.rate * o.frequency for o in included), Fraction(0)) / total_freq
    weight = sum(o.frequency * o.instruction_count for o in included)
    if weight == 0:
        return uniform, Fraction(0)
    weighted = (
        sum((o.rate * o.frequency * o.instruction_count for o in included), Fraction(0))
        / weight
    )
    return uniform, weighted


def _projected_deltas(
    cfg: AnnotatedCfg, table: EventTable, config: CounterConfig | None
) -> dict[str, Vec]:
    full = delta_map(cfg, table)
    if config is None:
        return full
    return {bid: project(config, v) for bid, v in full.items()}


def _unique_delta_blocks(
    cfg: AnnotatedCfg, table: EventTable, config: CounterConfig | None
) -> list[str]:
    """Non-measurement blocks whose projected delta no other block shares."""
    deltas = _projected_deltas(cfg, table, config)
    tally: dict[Vec, int] = {}
    for v in deltas.values():
        tally[v] = tally.get(v, 0) + 1
    return sorted(
        bid
        for bid, v in deltas.items()
        if tally[v] == 1 and not cfg.is_measurement_point(bid)
    )


def _block_pool(cfg: AnnotatedCfg) -> list[str]:
    return sorted(bid for bid in cfg.blocks if not cfg.is_measurement_point(bid))


def _sequence_variants(cfg: AnnotatedCfg, segment: BlockTrace, kind: str, pool: list[str]):
    """All candidate edited sequences, in a deterministic order."""
    steps = segment.steps
    interior = range(1, len(steps) - 1)
    if kind == "remove_block":
        for pos in interior:
            yield steps[:pos] + steps[pos + 1 :]
    elif kind in ("replace_block", "replace_unique"):
        for pos in interior:
            for bid in pool:
                if bid != steps[pos]:
                    yield steps[:pos] + (bid,) + steps[pos + 1 :]
    elif kind == "insert_unique":
        for gap in range(1, len(steps)):
            for bid in pool:
                yield steps[:gap] + (bid,) + steps[gap:]
    else:  # pragma: no cover - guarded by MutationSpec
        raise SchemaError(f"'{kind}' has no sequence variants")


def _structurally_invalid(cfg: AnnotatedCfg, steps: tuple[str, ...]) -> bool:
    return not validate_trace(cfg, BlockTrace(steps=steps))


def mutate(
    cfg: AnnotatedCfg,
    table: EventTable,
    segment: BlockTrace,
    spec: MutationSpec,
    *,
    config: CounterConfig | None = None,
    measurement: Measurement | None = None,
) -> list[Mutant]:
    """Distinct, seed-deterministic mutants of one valid segment.

    Block-level kinds edit interior positions only (endpoints identify the
    segment) and keep only edits that break structural validity; the
    unique-delta kinds additionally restrict the drawn blocks to those with
    a projected delta no other block shares.  ``random_change`` needs the
    segment's measurement and perturbs it directly.  An empty result means
    the segment admits no applicable mutation.
    """
    rng = random.Random(spec.seed)
    reps = spec.reps
    if spec.kind == "random_change":
        if measurement is None:
            raise SchemaError("random_change mutation needs the segment's measurement")
        bounds = [v // 10 for v in measurement.delta]
        space = 1
        for b in bounds:
            space *= 2 * b + 1
        space -= 1  # the all-zero perturbation is not a change
        if space <= 0:
            return []
        if space <= reps:
            perturbations = []
            def enumerate_all(prefix, idx):
                if idx == len(bounds):
                    if any(prefix):
                        perturbations.append(tuple(prefix))
                    return
                for u in range(-bounds[idx], bounds[idx] + 1):
                    enumerate_all(prefix + [u], idx + 1)
            enumerate_all([], 0)
        else:
            seen: set[tuple[int, ...]] = set()
            perturbations = []
            while len(perturbations) < reps:
                u = tuple(rng.randint(-b, b) for b in bounds)
                if any(u) and u not in seen:
                    seen.add(u)
                    perturbations.append(u)
        return [
            Mutant(
                measurement=Measurement(
                    start=measurement.start,
                    end=measurement.end,
                    delta=tuple(v + du for v, du in zip(measurement.delta, u)),
                )
            )
            for u in perturbations
        ]

    if spec.kind in ("replace_unique", "insert_unique"):
        pool = _unique_delta_blocks(cfg, table, config)
    else:
        pool = _block_pool(cfg)
    variants: list[tuple[str, ...]] = []
    seen_steps: set[tuple[str, ...]] = set()
    for steps in _sequence_variants(cfg, segment, spec.kind, pool):
        if steps not in seen_steps and _structurally_invalid(cfg, steps):
            seen_steps.add(steps)
            variants.append(steps)
    if len(variants) > reps:
        variants = rng.sample(variants, reps)
    return [Mutant(steps=steps) for steps in variants]


@dataclass
class _SegmentClass:
    segment: BlockTrace
    measurement: Measurement
    feasible: frozenset[CallStack] | None
    first_index: int
    instruction_count: int
    frequency: int = 1


def _segment_classes(
    cfg: AnnotatedCfg,
    db: SegmentDatabase,
    table: EventTable,
    trace: BlockTrace,
    config: CounterConfig | None,
) -> list[_SegmentClass]:
    """Group the trace's segments by (steps, measurement, feasible state),
    replaying the valid run to capture the session state each segment sees."""
    segments = split_trace(cfg, trace)
    measurements = measure(cfg, table, config, trace)
    counts = segment_instruction_counts(cfg, segments)
    state = new_session(db, config)
    classes: dict[tuple, _SegmentClass] = {}
    ordered: list[_SegmentClass] = []
    for index, (segment, m) in enumerate(zip(segments, measurements)):
        key = (segment.steps, m.delta, state.feasible)
        existing = classes.get(key)
        if existing is not None:
            existing.frequency += 1
        else:
            cls = _SegmentClass(
                segment=segment,
                measurement=m,
                feasible=state.feasible,
                first_index=index,
                instruction_count=counts[index],
            )
            classes[key] = cls
            ordered.append(cls)
        result = verify_segment(state, m)
        if result.verdict != "accepted":
            raise FlowAttestError(
                f"the supposedly valid trace was rejected at segment {index}; "
                "the database does not match the trace"
            )
    return ordered


def _verify_mutant(
    cfg: AnnotatedCfg,
    db: SegmentDatabase,
    table: EventTable,
    config: CounterConfig | None,
    cls: _SegmentClass,
    mutant: Mutant,
    deltas: dict[str, Vec],
    cache: dict,
) -> bool:
    """True when the verifier rejects the mutant (detection).

    Distinct mutants frequently produce identical observations (removing
    any one of many equal-delta blocks, say), so all probes share one
    dedup-keyed cache; the key covers endpoints, values, and feasible
    stacks, making the sharing verdict-neutral.
    """
    if mutant.measurement is not None:
        observed = mutant.measurement
    else:
        observed = measure_segment(
            cfg, table, config, BlockTrace(steps=mutant.steps), deltas=deltas
        )
    probe = SessionState(
        db=db, config=config, use_cache=True, feasible=cls.feasible, cache=cache
    )
    result = verify_segment(probe, observed)
    return result.verdict == "rejected"


def evaluate(
    cfg: AnnotatedCfg,
    db: SegmentDatabase,
    table: EventTable,
    trace: BlockTrace,
    specs: list[MutationSpec],
    *,
    config: CounterConfig | None = None,
) -> dict[str, ReliabilityReport]:
    """Run every mutation experiment over every segment of a valid trace."""
    classes = _segment_classes(cfg, db, table, trace, config)
    deltas = delta_map(cfg, table)
    probe_cache: dict = {}
    reports: dict[str, ReliabilityReport] = {}
    for spec in specs:
        outcomes: list[SegmentOutcome] = []
        for cls in classes:
            mutants = mutate(
                cfg,
                table,
                cls.segment,
                spec,
                config=config,
                measurement=cls.measurement,
            )
            outcome = SegmentOutcome(
                first_index=cls.first_index,
                frequency=cls.frequency,
                instruction_count=cls.instruction_count,
                attempted=len(mutants),
                detected=0,
            )
            if not mutants:
                outcome.excluded = True
                outcome.exclusion_reason = "no applicable mutation"
            else:
                for mutant in mutants:
                    if _verify_mutant(
                        cfg, db, table, config, cls, mutant, deltas, probe_cache
                    ):
                        outcome.detected += 1
            outcomes.append(outcome)
        uniform, weighted = combine_rates(outcomes)
        reports[spec.kind] = ReliabilityReport(
            kind=spec.kind,
            seed=spec.seed,
            per_segment={o.first_index: o for o in outcomes},
            metric_uniform=uniform,
            metric_weighted=weighted,
        )
    return reports


def default_specs(seed: int = 0, repetitions: int | None = None) -> list[MutationSpec]:
    return [
        MutationSpec(kind=kind, repetitions=repetitions, seed=seed)
        for kind in MUTATION_KINDS
    ]


def report_row(reports: dict[str, ReliabilityReport]) -> dict[str, str]:
    return {
        kind: f"{float(r.metric_uniform):.3f}, {float(r.metric_weighted):.3f}"
        for kind, r in reports.items()
    }


def reliability_document(label: str, reports: dict[str, ReliabilityReport]) -> dict:
    """Machine-readable form with exact rationals serialized as strings."""
    out: dict = {
        "label": label,
        "random_change_policy": RANDOM_CHANGE_POLICY,
        "experiments": {},
    }
    for kind, report in sorted(reports.items()):
        out["experiments"][kind] = {
            "seed": report.seed,
            "metric_uniform": str(report.metric_uniform),
            "metric_weighted": str(report.metric_weighted),
            "segments": [
                {
                    "first_index": o.first_index,
                    "frequency": o.frequency,
                    "instruction_count": o.instruction_count,
                    "attempted": o.attempted,
                    "detected": o.detected,
                    "rate": str(o.rate),
                    "excluded": o.excluded,
                }
                for o in sorted(report.per_segment.values(), key=lambda o: o.first_index)
            ],
        }
    return out


def render_table(rows: list[tuple[str, dict[str, ReliabilityReport]]]) -> str:
    """Aligned text table: one row per experiment, one column per mutation
    kind, each cell 'uniform, weighted'."""
    headers = ["experiment"] + list(MUTATION_KINDS)
    table_rows = []
    for label, reports in rows:
        cells = report_row(reports)
        table_rows.append([label] + [cells.get(kind, "-") for kind in MUTATION_KINDS])
    widths = [
        max(len(headers[c]), *(len(r[c]) for r in table_rows)) if table_rows else len(headers[c])
        for c in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in table_rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
    lines.append(f"cells: uniform, weighted; random change: {RANDOM_CHANGE_POLICY}")
    return "\n".join(lines)
