"""Online segment verification against a precomputed database.

A session walks a measurement sequence in order, keeping the set of call
stacks the program could feasibly be in.  Each measurement is accepted when
some candidate path whose entry stack is feasible explains the counter
delta exactly (integer-cone membership); the feasible set then becomes the
union of the exit stacks of *all* accepting candidates, so the outcome
never depends on candidate iteration order.  The first rejection freezes
the session.

Identical observations (same endpoints, same measured values, same feasible
entry stacks) are answered from a cache keyed by content, including the
feasible-set update, so replay is verdict-identical with the cache on or
off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .cfg import Measurement
from .cone import solve_cone
from .database import SegmentDatabase, dedup_key
from .errors import SchemaError
from .events import CounterConfig, project
from .expand import CallStack
from .vectors import Vec, is_nonneg, vsub


@dataclass(frozen=True)
class VerificationResult:
    verdict: str  # "accepted" | "rejected"
    reason: str | None
    accepting: tuple[str, ...]
    witness: tuple[int, ...] | None
    cache_hit: bool
    candidates_tried: int
    solver_calls: int
    solver_nodes: int
    elapsed: float


@dataclass
class _CacheEntry:
    result: VerificationResult
    feasible_after: frozenset[CallStack] | None


@dataclass
class SessionState:
    """Mutable per-session verification state; single-writer by contract."""

    db: SegmentDatabase
    config: CounterConfig | None = None
    use_cache: bool = True
    feasible: frozenset[CallStack] | None = field(default_factory=lambda: frozenset({()}))
    rejected: bool = False
    cache: dict[str, _CacheEntry] = field(default_factory=dict)
    cache_hits: int = 0
    cache_lookups: int = 0

    def __post_init__(self):
        if self.config is not None and self.config.counter_names != self.db.counters:
            raise SchemaError(
                "counter config was built for a different counter list than the database"
            )

    @property
    def measurement_dimension(self) -> int:
        return self.config.dimension if self.config is not None else self.db.dimension

    def project(self, v: Vec) -> Vec:
        return project(self.config, v) if self.config is not None else v


def new_session(
    db: SegmentDatabase,
    config: CounterConfig | None = None,
    *,
    use_cache: bool = True,
) -> SessionState:
    return SessionState(db=db, config=config, use_cache=use_cache)


def _project_generators(state: SessionState, loops: tuple[Vec, ...]):
    """Deduplicated nonzero projected loop vectors plus the witness remap:
    for each unique generator, the first original loop index carrying it."""
    unique: list[Vec] = []
    owner: list[int] = []
    seen: dict[Vec, int] = {}
    for j, loop in enumerate(loops):
        pv = state.project(loop)
        if all(x == 0 for x in pv):
            continue
        if pv not in seen:
            seen[pv] = len(unique)
            unique.append(pv)
            owner.append(j)
    return tuple(unique), owner


def verify_segment(state: SessionState, m: Measurement) -> VerificationResult:
    """Decide one measurement and fold its effect into the session."""
    if state.rejected:
        raise RuntimeError("session is already rejected; state is frozen")
    if len(m.delta) != state.measurement_dimension:
        raise SchemaError(
            f"measurement delta has dimension {len(m.delta)}, "
            f"session expects {state.measurement_dimension}"
        )
    started = time.perf_counter()
    key = (m.start, m.end)
    db = state.db

    if key in db.skip_segments:
        # Recursion workaround regions verify vacuously; the feasible set
        # becomes whatever the candidates say, or unconstrained if the
        # database never connected the pair.
        candidates = db.entries.get(key, ())
        if candidates:
            state.feasible = frozenset(c.end.stack for c in candidates)
            accepting = tuple(db.candidate_id(key, i) for i in range(len(candidates)))
        else:
            state.feasible = None
            accepting = ()
        return VerificationResult(
            verdict="accepted",
            reason="skip",
            accepting=accepting,
            witness=None,
            cache_hit=False,
            candidates_tried=0,
            solver_calls=0,
            solver_nodes=0,
            elapsed=time.perf_counter() - started,
        )

    cache_key = None
    if state.use_cache:
        cache_key = dedup_key(m.start, m.end, m.delta, state.feasible)
        state.cache_lookups += 1
        hit = state.cache.get(cache_key)
        if hit is not None:
            state.cache_hits += 1
            if hit.result.verdict == "accepted":
                state.feasible = hit.feasible_after
            else:
                state.rejected = True
            return VerificationResult(
                verdict=hit.result.verdict,
                reason=hit.result.reason,
                accepting=hit.result.accepting,
                witness=hit.result.witness,
                cache_hit=True,
                candidates_tried=0,
                solver_calls=0,
                solver_nodes=0,
                elapsed=time.perf_counter() - started,
            )

    candidates = db.entries.get(key)
    if candidates is None:
        # A measurement between points the database never connected is
        # itself a control-flow violation, not a lookup error.
        result = VerificationResult(
            verdict="rejected",
            reason="no-such-segment",
            accepting=(),
            witness=None,
            cache_hit=False,
            candidates_tried=0,
            solver_calls=0,
            solver_nodes=0,
            elapsed=time.perf_counter() - started,
        )
        state.rejected = True
        if cache_key is not None:
            state.cache[cache_key] = _CacheEntry(result=result, feasible_after=None)
        return result

    tried = 0
    solver_calls = 0
    solver_nodes = 0
    accepting: list[str] = []
    exits: set[CallStack] = set()
    witness: tuple[int, ...] | None = None
    have_witness = False
    for index, cand in enumerate(candidates):
        if state.feasible is not None and cand.start.stack not in state.feasible:
            continue
        tried += 1
        target = vsub(m.delta, state.project(cand.base))
        if not is_nonneg(target):
            continue
        generators, owner = _project_generators(state, cand.loops)
        solver_calls += 1
        solution = solve_cone(target, generators)
        solver_nodes += solution.lp_solves
        if solution.witness is None:
            continue
        accepting.append(db.candidate_id(key, index))
        exits.add(cand.end.stack)
        if not have_witness:
            full = [0] * len(cand.loops)
            for value, j in zip(solution.witness, owner):
                full[j] = value
            witness = tuple(full)
            have_witness = True

    if accepting:
        feasible_after = frozenset(exits)
        state.feasible = feasible_after
        result = VerificationResult(
            verdict="accepted",
            reason=None,
            accepting=tuple(accepting),
            witness=witness,
            cache_hit=False,
            candidates_tried=tried,
            solver_calls=solver_calls,
            solver_nodes=solver_nodes,
            elapsed=time.perf_counter() - started,
        )
    else:
        feasible_after = None
        reason = "cone-infeasible" if tried else "no-feasible-stack"
        result = VerificationResult(
            verdict="rejected",
            reason=reason,
            accepting=(),
            witness=None,
            cache_hit=False,
            candidates_tried=tried,
            solver_calls=solver_calls,
            solver_nodes=solver_nodes,
            elapsed=time.perf_counter() - started,
        )
        state.rejected = True
    if cache_key is not None:
        state.cache[cache_key] = _CacheEntry(result=result, feasible_after=feasible_after)
    return result


@dataclass
class SessionReport:
    results: list[VerificationResult]
    measurements: list[Measurement]
    rejected_at: int | None
    state: SessionState

    @property
    def accepted(self) -> bool:
        return self.rejected_at is None

    @property
    def accepted_count(self) -> int:
        return sum(1 for r in self.results if r.verdict == "accepted")


def verify_trace_measurements(
    db: SegmentDatabase,
    measurements: list[Measurement],
    *,
    config: CounterConfig | None = None,
    use_cache: bool = True,
) -> SessionReport:
    """Fold a measurement sequence through a fresh session, stopping at the
    first rejection.

    The sequence must be contiguous (each segment starts where the previous
    one ended); a gap indicates a malformed file rather than an attack and
    raises instead of rejecting.
    """
    for a, b in zip(measurements, measurements[1:]):
        if a.end != b.start:
            raise SchemaError(
                f"measurement sequence is not contiguous: segment ending at "
                f"'{a.end}' is followed by one starting at '{b.start}'"
            )
    state = new_session(db, config, use_cache=use_cache)
    results: list[VerificationResult] = []
    rejected_at: int | None = None
    for index, m in enumerate(measurements):
        result = verify_segment(state, m)
        results.append(result)
        if result.verdict == "rejected":
            rejected_at = index
            break
    return SessionReport(
        results=results,
        measurements=measurements,
        rejected_at=rejected_at,
        state=state,
    )


def report_document(report: SessionReport, *, include_timings: bool = False) -> dict:
    """Machine-readable session report.

    Timings are excluded by default so that identical inputs produce
    byte-identical output.
    """
    segments = []
    for index, (result, m) in enumerate(zip(report.results, report.measurements)):
        record: dict = {
            "index": index,
            "start": m.start,
            "end": m.end,
            "verdict": result.verdict,
            "candidates_tried": result.candidates_tried,
            "solver_calls": result.solver_calls,
            "solver_nodes": result.solver_nodes,
            "cache_hit": result.cache_hit,
        }
        if result.reason is not None:
            record["reason"] = result.reason
        if result.witness is not None:
            record["witness"] = list(result.witness)
        if include_timings:
            record["elapsed"] = result.elapsed
        segments.append(record)
    state = report.state
    lookups = state.cache_lookups
    summary = {
        "segments": len(report.measurements),
        "accepted": report.accepted_count,
        "rejected_at": report.rejected_at,
        "cache_hits": state.cache_hits,
        "cache_lookups": lookups,
        "cache_hit_ratio": (
            f"{state.cache_hits / lookups:.6f}" if lookups else "0.000000"
        ),
        "solver_calls": sum(r.solver_calls for r in report.results),
        "solver_nodes": sum(r.solver_nodes for r in report.results),
    }
    return {"segments": segments, "summary": summary}


def render_report(report: SessionReport) -> str:
    lines = []
    for index, (result, m) in enumerate(zip(report.results, report.measurements)):
        extra = f" ({result.reason})" if result.reason else ""
        cached = " [cached]" if result.cache_hit else ""
        lines.append(
            f"segment {index:4d}  {m.start} -> {m.end}  {result.verdict}{extra}{cached}  "
            f"tried={result.candidates_tried} solver_calls={result.solver_calls} "
            f"nodes={result.solver_nodes} elapsed={result.elapsed * 1000:.2f}ms"
        )
    state = report.state
    verdict = "ACCEPTED" if report.accepted else f"REJECTED at segment {report.rejected_at}"
    ratio = state.cache_hits / state.cache_lookups if state.cache_lookups else 0.0
    lines.append(
        f"session: {verdict}; {report.accepted_count}/{len(report.measurements)} segments "
        f"accepted; cache hit ratio {ratio:.4f}"
    )
    return "\n".join(lines)
