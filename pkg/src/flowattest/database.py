"""One-time segment preprocessing: paths and loop closures between
measurement points.

For every ordered pair of measurement-point expanded nodes that execution
can connect without crossing another measurement point, the database holds
one candidate per simple path.  Each candidate carries the path's counter
delta (excluding the start snapshot block, including the end one), plus the
transitive closure of simple cycles touching it: every cycle sharing a node
with the path, or with an already-included cycle, iterated to a fixed
point.  Cycles never contain a measurement point - a walk looping through
one would have been split into two segments.

Any walk between consecutive measurement points therefore decomposes into
one of these simple paths plus a multiset of its attached cycles, which is
what makes online verification sound.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import networkx as nx

from .cfg import AnnotatedCfg, canonical_json
from .errors import BudgetError, DigestMismatchError, SchemaError
from .events import EventTable, delta_map
from .expand import (
    DEFAULT_NODE_BUDGET,
    CallStack,
    ExpandedGraph,
    ExpandedNode,
    expand,
)
from .vectors import Vec, is_zero, vsum

DEFAULT_PATH_BUDGET = 100_000
DEFAULT_CYCLE_BUDGET = 10_000


@dataclass(frozen=True)
class PathCandidate:
    """One simple path between measurement points plus its loop closure."""

    start: ExpandedNode
    end: ExpandedNode
    base: Vec
    loops: tuple[Vec, ...]
    base_instruction_count: int
    loop_instruction_counts: tuple[int, ...]

    def sort_key(self):
        return (len(self.loops), self.base, self.start.stack, self.end.stack, self.loops)


@dataclass(frozen=True, eq=False)
class SegmentDatabase:
    cfg_digest: str
    counters: tuple[str, ...]
    entries: dict[tuple[str, str], tuple[PathCandidate, ...]]
    skip_segments: frozenset[tuple[str, str]]

    @property
    def dimension(self) -> int:
        return len(self.counters)

    def candidate_id(self, key: tuple[str, str], index: int) -> str:
        return f"{key[0]}->{key[1]}#{index}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SegmentDatabase):
            return NotImplemented
        return (
            self.cfg_digest == other.cfg_digest
            and self.counters == other.counters
            and self.entries == other.entries
            and self.skip_segments == other.skip_segments
        )


@dataclass(frozen=True)
class _Cycle:
    nodes: frozenset[ExpandedNode]
    delta: Vec
    instruction_count: int


def _cycle_universe(
    graph: ExpandedGraph,
    cfg: AnnotatedCfg,
    deltas: dict[str, Vec],
    cycle_budget: int,
) -> list[_Cycle]:
    """All simple cycles of the expanded graph that avoid measurement points.

    Cycles whose counter delta is zero are dropped: they cannot change any
    measurement and would only pad the generator sets.
    """
    subgraph = nx.DiGraph()
    for node, nexts in graph.succ.items():
        if cfg.is_measurement_point(node.block):
            continue
        subgraph.add_node(node)
        for nxt in nexts:
            if not cfg.is_measurement_point(nxt.block):
                subgraph.add_edge(node, nxt)
    cycles: list[_Cycle] = []
    count = 0
    for nodes in nx.simple_cycles(subgraph):
        count += 1
        if count > cycle_budget:
            raise BudgetError(
                f"loop enumeration exceeded the cycle budget (budget {cycle_budget}); "
                "add measurement points inside loop-heavy regions or raise "
                "--budget-cycles",
                budget=cycle_budget,
                reached=count,
            )
        delta = vsum((deltas[n.block] for n in nodes), cfg.dimension)
        if is_zero(delta):
            continue
        cycles.append(
            _Cycle(
                nodes=frozenset(nodes),
                delta=delta,
                instruction_count=sum(cfg.blocks[n.block].instruction_count for n in nodes),
            )
        )
    return cycles


def _closure(
    path: list[ExpandedNode],
    node_to_cycles: dict[ExpandedNode, list[int]],
    cycles: list[_Cycle],
) -> list[int]:
    """Indices of all cycles transitively touching the path, fixed point."""
    included: set[int] = set()
    frontier = list(path)
    while frontier:
        node = frontier.pop()
        for idx in node_to_cycles.get(node, ()):
            if idx not in included:
                included.add(idx)
                frontier.extend(cycles[idx].nodes)
    return sorted(included)


def _candidate_from_path(
    path: list[ExpandedNode],
    cfg: AnnotatedCfg,
    deltas: dict[str, Vec],
    node_to_cycles: dict[ExpandedNode, list[int]],
    cycles: list[_Cycle],
) -> PathCandidate:
    base = vsum((deltas[n.block] for n in path[1:]), cfg.dimension)
    base_instr = sum(cfg.blocks[n.block].instruction_count for n in path[1:])
    loop_vecs: dict[Vec, int] = {}
    for idx in _closure(path, node_to_cycles, cycles):
        cycle = cycles[idx]
        loop_vecs.setdefault(cycle.delta, cycle.instruction_count)
    ordered = sorted(loop_vecs)
    return PathCandidate(
        start=path[0],
        end=path[-1],
        base=base,
        loops=tuple(ordered),
        base_instruction_count=base_instr,
        loop_instruction_counts=tuple(loop_vecs[v] for v in ordered),
    )


def enumerate_segments(
    cfg: AnnotatedCfg,
    table: EventTable,
    *,
    path_budget: int = DEFAULT_PATH_BUDGET,
    cycle_budget: int = DEFAULT_CYCLE_BUDGET,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> SegmentDatabase:
    """Build the segment database for a validated CFG.

    One depth-first search per measurement-point expanded node enumerates
    every simple path that ends at the first measurement point it reaches
    (revisiting the source is allowed only as that terminal, which covers
    in-loop measurement points).  Path counts are capped per segment; the
    error names the offending segment because the practical remedy is
    adding measurement points there.
    """
    deltas = delta_map(cfg, table)
    graph = expand(cfg, node_budget)
    cycles = _cycle_universe(graph, cfg, deltas, cycle_budget)
    node_to_cycles: dict[ExpandedNode, list[int]] = {}
    for idx, cycle in enumerate(cycles):
        for node in cycle.nodes:
            node_to_cycles.setdefault(node, []).append(idx)

    sources = [n for n in graph.succ if cfg.is_measurement_point(n.block)]
    raw: dict[tuple[str, str], list[PathCandidate]] = {}
    per_key_count: dict[tuple[str, str], int] = {}

    for source in sources:
        # Iterative DFS; path holds the current stack, on_path its node set
        # (the source itself may be re-entered only as a terminal).
        path = [source]
        on_path = {source}
        iters = [iter(graph.succ[source])]
        while iters:
            advanced = False
            for nxt in iters[-1]:
                if cfg.is_measurement_point(nxt.block):
                    key = (source.block, nxt.block)
                    per_key_count[key] = per_key_count.get(key, 0) + 1
                    if per_key_count[key] > path_budget:
                        raise BudgetError(
                            f"segment {key[0]} -> {key[1]} exceeded the simple-path "
                            f"budget (budget {path_budget}); add measurement points "
                            "to split this region or raise --budget-paths",
                            budget=path_budget,
                            reached=per_key_count[key],
                        )
                    raw.setdefault(key, []).append(
                        _candidate_from_path(
                            path + [nxt], cfg, deltas, node_to_cycles, cycles
                        )
                    )
                elif nxt not in on_path:
                    path.append(nxt)
                    on_path.add(nxt)
                    iters.append(iter(graph.succ[nxt]))
                    advanced = True
                    break
            if not advanced:
                iters.pop()
                dropped = path.pop()
                on_path.discard(dropped)

    entries: dict[tuple[str, str], tuple[PathCandidate, ...]] = {}
    for key in sorted(raw):
        unique: dict[tuple, PathCandidate] = {}
        for cand in raw[key]:
            unique.setdefault((cand.start, cand.end, cand.base, cand.loops), cand)
        entries[key] = tuple(sorted(unique.values(), key=PathCandidate.sort_key))
    return SegmentDatabase(
        cfg_digest=cfg.digest,
        counters=cfg.counters,
        entries=entries,
        skip_segments=cfg.skip_segments,
    )


def dedup_key(
    start: str,
    end: str,
    delta: Vec,
    entry_stacks: frozenset[CallStack] | None,
) -> str:
    """Stable, content-derived cache key for a segment observation.

    Equal endpoints, measured values, and feasible entry stacks yield equal
    keys across runs and processes.  ``None`` stacks (an unconstrained
    session after a skipped region) key distinctly from every concrete set.
    """
    stacks = "*" if entry_stacks is None else sorted(list(s) for s in entry_stacks)
    payload = canonical_json([start, end, list(delta), stacks])
    return hashlib.sha256(payload.encode()).hexdigest()


def serialize_database(db: SegmentDatabase) -> dict:
    segments = []
    for (start, end), candidates in sorted(db.entries.items()):
        segments.append(
            {
                "start": start,
                "end": end,
                "candidates": [
                    {
                        "start_stack": list(c.start.stack),
                        "end_stack": list(c.end.stack),
                        "base": list(c.base),
                        "base_instructions": c.base_instruction_count,
                        "loops": [list(v) for v in c.loops],
                        "loop_instructions": list(c.loop_instruction_counts),
                    }
                    for c in candidates
                ],
            }
        )
    return {
        "cfg_digest": db.cfg_digest,
        "counters": list(db.counters),
        "dimension": db.dimension,
        "skip_segments": [{"start": s, "end": e} for s, e in sorted(db.skip_segments)],
        "segments": segments,
    }


def load_database(document: dict | str, expected_digest: str | None = None) -> SegmentDatabase:
    """Parse a database document, refusing it when the digest disagrees
    with the CFG the caller is about to verify against."""
    if isinstance(document, str):
        document = json.loads(document)
    for key in ("cfg_digest", "counters", "dimension", "skip_segments", "segments"):
        if key not in document:
            raise SchemaError(f"database document is missing key '{key}'")
    if expected_digest is not None and document["cfg_digest"] != expected_digest:
        raise DigestMismatchError(
            f"database was built for CFG {document['cfg_digest'][:12]}..., "
            f"expected {expected_digest[:12]}..."
        )
    counters = tuple(document["counters"])
    if len(counters) != document["dimension"]:
        raise SchemaError("database dimension disagrees with its counter list")
    entries: dict[tuple[str, str], tuple[PathCandidate, ...]] = {}
    for seg in document["segments"]:
        key = (seg["start"], seg["end"])
        candidates = []
        for obj in seg["candidates"]:
            loops = tuple(tuple(v) for v in obj["loops"])
            candidates.append(
                PathCandidate(
                    start=ExpandedNode(seg["start"], tuple(obj["start_stack"])),
                    end=ExpandedNode(seg["end"], tuple(obj["end_stack"])),
                    base=tuple(obj["base"]),
                    loops=loops,
                    base_instruction_count=obj["base_instructions"],
                    loop_instruction_counts=tuple(obj["loop_instructions"]),
                )
            )
        entries[key] = tuple(sorted(candidates, key=PathCandidate.sort_key))
    return SegmentDatabase(
        cfg_digest=document["cfg_digest"],
        counters=counters,
        entries=entries,
        skip_segments=frozenset(
            (obj["start"], obj["end"]) for obj in document["skip_segments"]
        ),
    )
