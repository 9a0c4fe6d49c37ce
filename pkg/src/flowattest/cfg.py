"""Annotated control-flow graphs, block traces, and counter measurements.

Documents are JSON.  The CFG document looks like::

    {
      "counters": ["instret", "cond_branch_retired", ...],
      "functions": [{"name": "main", "entry": "main.0", "blocks": ["main.0", ...]}],
      "blocks": [
        {"id": "main.0", "function": "main", "instruction_count": 3,
         "is_measurement_point": true, "instructions": ["addi", "lw", "jal"]},
        {"id": "main.1", "function": "main", "instruction_count": 2,
         "is_measurement_point": false, "delta": [2, 0, ...]}
      ],
      "edges": [{"from": "main.0", "to": "main.1", "kind": "fallthrough"}],
      "entry": "main.0",
      "skip_segments": [{"start": "rt.pre", "end": "rt.post"}]   // optional
    }

Field order is insignificant; unknown keys are rejected.  A trace document is
``{"cfg_ref": <digest>, "steps": [...]}`` and a measurement-sequence document
is ``{"cfg_ref": <digest>, "measurements": [{"start", "end", "delta"}]}``.

Loaded objects are immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import RecursionDetectedError, SchemaError, UnknownBlockError
from .vectors import Vec

EDGE_KINDS = ("fallthrough", "branch", "call", "return", "indirect")

# Edge kinds that never leave the current function.
_INTRA_KINDS = ("fallthrough", "branch")


@dataclass(frozen=True)
class BasicBlock:
    """One basic block: identity, ownership, and its counter footprint.

    Either ``instructions`` (a mnemonic list resolved through an event
    table) or ``delta`` (a precomputed counter vector) must be present;
    both are allowed when they agree under the table in use.
    ``instruction_count`` is stored independently so delta-only documents
    still support instruction-weighted metrics.
    """

    id: str
    function: str
    instruction_count: int
    is_measurement_point: bool
    instructions: tuple[str, ...] | None = None
    delta: Vec | None = None


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str


@dataclass(frozen=True)
class FunctionInfo:
    name: str
    entry: str
    blocks: frozenset[str]


@dataclass(frozen=True)
class BlockTrace:
    """An ordered record of executed blocks, first and last at measurement points."""

    steps: tuple[str, ...]


@dataclass(frozen=True)
class Measurement:
    """One snapshot-to-snapshot observation: endpoint blocks plus the counter delta."""

    start: str
    end: str
    delta: Vec


@dataclass(frozen=True, eq=False)
class AnnotatedCfg:
    counters: tuple[str, ...]
    blocks: dict[str, BasicBlock]
    functions: dict[str, FunctionInfo]
    edges: tuple[Edge, ...]
    program_entry: str
    skip_segments: frozenset[tuple[str, str]]
    # Derived, filled by the loader.
    succ: dict[str, tuple[Edge, ...]] = field(default_factory=dict)
    edge_pairs: frozenset[tuple[str, str]] = frozenset()
    digest: str = ""

    @property
    def dimension(self) -> int:
        return len(self.counters)

    @property
    def entry_function(self) -> str:
        return self.blocks[self.program_entry].function

    def is_measurement_point(self, block_id: str) -> bool:
        return self.blocks[block_id].is_measurement_point

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnnotatedCfg):
            return NotImplemented
        return (
            self.counters == other.counters
            and self.blocks == other.blocks
            and self.functions == other.functions
            and set(self.edges) == set(other.edges)
            and self.program_entry == other.program_entry
            and self.skip_segments == other.skip_segments
        )


def _require_keys(obj: dict, required: tuple[str, ...], optional: tuple[str, ...], what: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{what} must be an object, got {type(obj).__name__}")
    for key in required:
        if key not in obj:
            raise SchemaError(f"{what} is missing required key '{key}'")
    for key in obj:
        if key not in required and key not in optional:
            raise SchemaError(f"{what} has unknown key '{key}'")


def _check_int(value, what: str, minimum: int = 0) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(f"{what} must be an integer, got {value!r}")
    if value < minimum:
        raise SchemaError(f"{what} must be >= {minimum}, got {value}")
    return value


def _check_vector(value, dim: int, what: str) -> Vec:
    if not isinstance(value, list) or len(value) != dim:
        raise SchemaError(f"{what} must be an array of {dim} integers")
    return tuple(_check_int(x, f"{what}[{i}]") for i, x in enumerate(value))


def _parse_block(obj: dict, dim: int) -> BasicBlock:
    _require_keys(
        obj,
        required=("id", "function", "instruction_count", "is_measurement_point"),
        optional=("instructions", "delta"),
        what="block",
    )
    block_id = obj["id"]
    if not isinstance(block_id, str) or not block_id:
        raise SchemaError(f"block id must be a non-empty string, got {block_id!r}")
    if not isinstance(obj["is_measurement_point"], bool):
        raise SchemaError(f"block '{block_id}': is_measurement_point must be a boolean")
    count = _check_int(obj["instruction_count"], f"block '{block_id}': instruction_count")
    instructions = None
    if "instructions" in obj:
        raw = obj["instructions"]
        if not isinstance(raw, list) or not all(isinstance(m, str) for m in raw):
            raise SchemaError(f"block '{block_id}': instructions must be an array of strings")
        instructions = tuple(raw)
        if len(instructions) != count:
            raise SchemaError(
                f"block '{block_id}': instruction_count {count} does not match "
                f"{len(instructions)} listed instructions"
            )
    delta = None
    if "delta" in obj:
        delta = _check_vector(obj["delta"], dim, f"block '{block_id}': delta")
    if instructions is None and delta is None:
        raise SchemaError(f"block '{block_id}': needs 'instructions' or 'delta'")
    return BasicBlock(
        id=block_id,
        function=obj["function"],
        instruction_count=count,
        is_measurement_point=obj["is_measurement_point"],
        instructions=instructions,
        delta=delta,
    )


def _call_graph(blocks: dict[str, BasicBlock], edges: tuple[Edge, ...]) -> dict[str, list[str]]:
    graph: dict[str, list[str]] = {}
    for edge in edges:
        src_fn = blocks[edge.src].function
        dst_fn = blocks[edge.dst].function
        if edge.kind == "call" or (edge.kind == "indirect" and src_fn != dst_fn):
            graph.setdefault(src_fn, [])
            if dst_fn not in graph[src_fn]:
                graph[src_fn].append(dst_fn)
    return graph


def _find_call_cycle(graph: dict[str, list[str]]) -> tuple[str, ...] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {fn: WHITE for fn in graph}
    for root in graph:
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(root, 0)]
        path = [root]
        color[root] = GREY
        while stack:
            node, idx = stack[-1]
            succs = graph.get(node, ())
            if idx < len(succs):
                stack[-1] = (node, idx + 1)
                nxt = succs[idx]
                state = color.get(nxt, WHITE)
                if state == GREY:
                    where = path.index(nxt)
                    return tuple(path[where:])
                if state == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, 0))
                    path.append(nxt)
            else:
                color[node] = BLACK
                stack.pop()
                path.pop()
    return None


def load_cfg(document: dict | str) -> AnnotatedCfg:
    """Parse and validate a CFG document (JSON text or an already-parsed dict).

    Raises :class:`SchemaError` for structural violations (duplicate ids,
    dangling edges, ill-typed fields) and :class:`RecursionDetectedError`
    when the function-level call graph is cyclic.
    """
    if isinstance(document, str):
        document = json.loads(document)
    _require_keys(
        document,
        required=("counters", "functions", "blocks", "edges", "entry"),
        optional=("skip_segments",),
        what="CFG document",
    )
    counters_raw = document["counters"]
    if not isinstance(counters_raw, list) or not counters_raw or not all(
        isinstance(c, str) for c in counters_raw
    ):
        raise SchemaError("'counters' must be a non-empty array of strings")
    if len(set(counters_raw)) != len(counters_raw):
        raise SchemaError("'counters' contains duplicate names")
    counters = tuple(counters_raw)
    dim = len(counters)

    blocks: dict[str, BasicBlock] = {}
    for obj in document["blocks"]:
        block = _parse_block(obj, dim)
        if block.id in blocks:
            raise SchemaError(f"duplicate block id '{block.id}'")
        blocks[block.id] = block

    functions: dict[str, FunctionInfo] = {}
    claimed: dict[str, str] = {}
    for obj in document["functions"]:
        _require_keys(obj, required=("name", "entry", "blocks"), optional=(), what="function")
        name = obj["name"]
        if name in functions:
            raise SchemaError(f"duplicate function '{name}'")
        members = obj["blocks"]
        if not isinstance(members, list) or not members:
            raise SchemaError(f"function '{name}': blocks must be a non-empty array")
        for bid in members:
            if bid not in blocks:
                raise SchemaError(f"function '{name}' lists unknown block '{bid}'")
            if bid in claimed:
                raise SchemaError(f"block '{bid}' claimed by both '{claimed[bid]}' and '{name}'")
            claimed[bid] = name
            if blocks[bid].function != name:
                raise SchemaError(
                    f"block '{bid}' declares function '{blocks[bid].function}' "
                    f"but is listed under '{name}'"
                )
        if obj["entry"] not in members:
            raise SchemaError(f"function '{name}': entry '{obj['entry']}' not among its blocks")
        functions[name] = FunctionInfo(name=name, entry=obj["entry"], blocks=frozenset(members))
    for bid in blocks:
        if bid not in claimed:
            raise SchemaError(f"block '{bid}' belongs to no function")

    edges: list[Edge] = []
    seen_edges: set[tuple[str, str, str]] = set()
    for obj in document["edges"]:
        _require_keys(obj, required=("from", "to", "kind"), optional=(), what="edge")
        src, dst, kind = obj["from"], obj["to"], obj["kind"]
        if kind not in EDGE_KINDS:
            raise SchemaError(f"edge {src}->{dst}: unknown kind '{kind}'")
        for endpoint in (src, dst):
            if endpoint not in blocks:
                raise SchemaError(f"edge {src}->{dst}: dangling endpoint '{endpoint}'")
        src_fn, dst_fn = blocks[src].function, blocks[dst].function
        if kind in _INTRA_KINDS and src_fn != dst_fn:
            raise SchemaError(f"edge {src}->{dst}: '{kind}' edge crosses function boundary")
        if kind == "call":
            if dst != functions[dst_fn].entry:
                raise SchemaError(f"call edge {src}->{dst}: target is not a function entry")
        if kind == "indirect" and src_fn != dst_fn and dst != functions[dst_fn].entry:
            raise SchemaError(
                f"indirect edge {src}->{dst}: cross-function target is not a function entry"
            )
        if kind == "return" and src_fn == dst_fn:
            raise SchemaError(f"return edge {src}->{dst}: does not leave its function")
        key = (src, dst, kind)
        if key in seen_edges:
            raise SchemaError(f"duplicate edge {src}->{dst} ({kind})")
        seen_edges.add(key)
        edges.append(Edge(src=src, dst=dst, kind=kind))

    # Return edges must answer an actual call relationship.
    call_graph = _call_graph(blocks, tuple(edges))
    for edge in edges:
        if edge.kind != "return":
            continue
        caller = blocks[edge.dst].function
        callee = blocks[edge.src].function
        if callee not in call_graph.get(caller, ()):
            raise SchemaError(
                f"return edge {edge.src}->{edge.dst}: '{caller}' never calls '{callee}'"
            )

    entry = document["entry"]
    if entry not in blocks:
        raise SchemaError(f"entry block '{entry}' does not exist")
    if not blocks[entry].is_measurement_point:
        raise SchemaError(f"entry block '{entry}' must be a measurement point")

    skip: set[tuple[str, str]] = set()
    for obj in document.get("skip_segments", ()):
        _require_keys(obj, required=("start", "end"), optional=(), what="skip segment")
        for endpoint in (obj["start"], obj["end"]):
            if endpoint not in blocks:
                raise SchemaError(f"skip segment references unknown block '{endpoint}'")
            if not blocks[endpoint].is_measurement_point:
                raise SchemaError(
                    f"skip segment endpoint '{endpoint}' is not a measurement point"
                )
        skip.add((obj["start"], obj["end"]))

    cycle = _find_call_cycle(call_graph)
    if cycle is not None:
        raise RecursionDetectedError(cycle)

    succ: dict[str, list[Edge]] = {bid: [] for bid in blocks}
    for edge in edges:
        succ[edge.src].append(edge)

    cfg = AnnotatedCfg(
        counters=counters,
        blocks=blocks,
        functions=functions,
        edges=tuple(edges),
        program_entry=entry,
        skip_segments=frozenset(skip),
        succ={bid: tuple(out) for bid, out in succ.items()},
        edge_pairs=frozenset((e.src, e.dst) for e in edges),
    )
    object.__setattr__(cfg, "digest", cfg_digest(cfg))
    return cfg


def serialize_cfg(cfg: AnnotatedCfg) -> dict:
    """Canonical document form; load(serialize(x)) equals x structurally."""
    blocks = []
    for bid in sorted(cfg.blocks):
        block = cfg.blocks[bid]
        obj: dict = {
            "id": block.id,
            "function": block.function,
            "instruction_count": block.instruction_count,
            "is_measurement_point": block.is_measurement_point,
        }
        if block.instructions is not None:
            obj["instructions"] = list(block.instructions)
        if block.delta is not None:
            obj["delta"] = list(block.delta)
        blocks.append(obj)
    doc = {
        "counters": list(cfg.counters),
        "functions": [
            {
                "name": name,
                "entry": cfg.functions[name].entry,
                "blocks": sorted(cfg.functions[name].blocks),
            }
            for name in sorted(cfg.functions)
        ],
        "blocks": blocks,
        "edges": [
            {"from": e.src, "to": e.dst, "kind": e.kind}
            for e in sorted(cfg.edges, key=lambda e: (e.src, e.dst, e.kind))
        ],
        "entry": cfg.program_entry,
    }
    if cfg.skip_segments:
        doc["skip_segments"] = [
            {"start": s, "end": e} for s, e in sorted(cfg.skip_segments)
        ]
    return doc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def cfg_digest(cfg: AnnotatedCfg) -> str:
    """Content hash of the graph, independent of document field order."""
    return hashlib.sha256(canonical_json(serialize_cfg(cfg)).encode()).hexdigest()


def validate_trace(cfg: AnnotatedCfg, trace: BlockTrace) -> bool:
    """True iff the trace starts/ends at measurement points and follows edges.

    Blocks with a zero instruction count may not appear in a trace.
    Raises on degenerate input (empty trace, unknown block ids) rather
    than reporting it as mere invalidity.
    """
    if not trace.steps:
        raise SchemaError("trace is empty")
    for step in trace.steps:
        if step not in cfg.blocks:
            raise UnknownBlockError(f"trace references unknown block '{step}'")
    if not cfg.is_measurement_point(trace.steps[0]):
        return False
    if not cfg.is_measurement_point(trace.steps[-1]):
        return False
    if any(cfg.blocks[s].instruction_count == 0 for s in trace.steps):
        return False
    for a, b in zip(trace.steps, trace.steps[1:]):
        if (a, b) not in cfg.edge_pairs:
            return False
    return True


def split_trace(cfg: AnnotatedCfg, trace: BlockTrace) -> list[BlockTrace]:
    """Cut a valid trace at measurement points.

    Each segment runs from one measurement point to the next, sharing its
    endpoints with its neighbours; interiors contain no measurement point.
    A single-point trace yields no segments.
    """
    if not validate_trace(cfg, trace):
        raise SchemaError("cannot split an invalid trace")
    marks = [i for i, s in enumerate(trace.steps) if cfg.is_measurement_point(s)]
    return [
        BlockTrace(steps=trace.steps[a : b + 1])
        for a, b in zip(marks, marks[1:])
    ]


def trace_instruction_count(cfg: AnnotatedCfg, trace: BlockTrace) -> int:
    return sum(cfg.blocks[s].instruction_count for s in trace.steps)


def segment_instruction_counts(cfg: AnnotatedCfg, segments: list[BlockTrace]) -> list[int]:
    """Per-segment instruction totals under the shared-endpoint convention.

    A measurement point's instructions belong to the segment it terminates;
    the first segment additionally absorbs the trace's start block, so the
    per-segment counts sum to the whole-trace total.
    """
    counts = []
    for index, segment in enumerate(segments):
        total = sum(cfg.blocks[s].instruction_count for s in segment.steps[1:])
        if index == 0:
            total += cfg.blocks[segment.steps[0]].instruction_count
        counts.append(total)
    return counts


def serialize_trace(cfg: AnnotatedCfg, trace: BlockTrace) -> dict:
    return {"cfg_ref": cfg.digest, "steps": list(trace.steps)}


def load_trace(document: dict | str, cfg: AnnotatedCfg | None = None) -> BlockTrace:
    if isinstance(document, str):
        document = json.loads(document)
    _require_keys(document, required=("cfg_ref", "steps"), optional=(), what="trace document")
    steps = document["steps"]
    if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
        raise SchemaError("'steps' must be an array of block ids")
    if cfg is not None and document["cfg_ref"] != cfg.digest:
        from .errors import DigestMismatchError

        raise DigestMismatchError(
            f"trace refers to CFG {document['cfg_ref'][:12]}..., "
            f"loaded CFG is {cfg.digest[:12]}..."
        )
    return BlockTrace(steps=tuple(steps))


def serialize_measurements(cfg_ref: str, measurements: list[Measurement]) -> dict:
    return {
        "cfg_ref": cfg_ref,
        "measurements": [
            {"start": m.start, "end": m.end, "delta": list(m.delta)} for m in measurements
        ],
    }


def load_measurements(document: dict | str) -> tuple[str, list[Measurement]]:
    if isinstance(document, str):
        document = json.loads(document)
    _require_keys(
        document, required=("cfg_ref", "measurements"), optional=(), what="measurement document"
    )
    out = []
    for obj in document["measurements"]:
        _require_keys(obj, required=("start", "end", "delta"), optional=(), what="measurement")
        delta = obj["delta"]
        if not isinstance(delta, list):
            raise SchemaError("measurement delta must be an array of integers")
        out.append(
            Measurement(
                start=obj["start"],
                end=obj["end"],
                delta=tuple(_check_int(x, "measurement delta entry") for x in delta),
            )
        )
    return document["cfg_ref"], out
