"""Batch command-line front end.

Every command is deterministic given its inputs (seeds are explicit flags
or manifest fields), and machine-readable output is byte-identical across
runs: JSON is emitted with sorted keys and no timestamps.  The process exit
status encodes the verifier verdict so pipelines can gate on it:

* 0: success / full acceptance
* 1: a measurement was rejected
* 2: usage, schema, or input errors
* 3: digest mismatch between artifacts
* 4: an enumeration budget was exceeded
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import attacks, demos, protocol
from .cfg import (
    load_cfg,
    load_measurements,
    load_trace,
    serialize_measurements,
    serialize_trace,
)
from .database import (
    DEFAULT_CYCLE_BUDGET,
    DEFAULT_PATH_BUDGET,
    enumerate_segments,
    load_database,
    serialize_database,
)
from .errors import BudgetError, DigestMismatchError, FlowAttestError
from .events import load_event_table, parse_register_spec
from .expand import DEFAULT_NODE_BUDGET
from .simulate import measure, random_valid_walk
from .vectors import vsub
from .verify import render_report, report_document, verify_trace_measurements

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_ERROR = 2
EXIT_DIGEST = 3
EXIT_BUDGET = 4


def _read_json(path: str):
    return json.loads(Path(path).read_text())


def _emit(doc, fmt: str, text_renderer=None) -> None:
    if fmt == "json":
        sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    else:
        sys.stdout.write((text_renderer() if text_renderer else str(doc)) + "\n")


def _write_json(path: str, doc) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_config(table, spec: str | None):
    return parse_register_spec(table, spec) if spec else None


def _parse_offset(text: str | None):
    if not text:
        return None
    return tuple(int(x) for x in text.split(","))


def cmd_preprocess(args) -> int:
    cfg = load_cfg(_read_json(args.cfg))
    table = load_event_table(_read_json(args.table))
    db = enumerate_segments(
        cfg,
        table,
        path_budget=args.budget_paths,
        cycle_budget=args.budget_cycles,
        node_budget=args.budget_nodes,
    )
    _write_json(args.out, serialize_database(db))
    stats = {
        "cfg_digest": db.cfg_digest,
        "segments": len(db.entries),
        "candidates": sum(len(c) for c in db.entries.values()),
        "per_segment": [
            {
                "start": start,
                "end": end,
                "paths": len(cands),
                "loops": max((len(c.loops) for c in cands), default=0),
            }
            for (start, end), cands in sorted(db.entries.items())
        ],
    }
    _emit(
        stats,
        args.format,
        lambda: "\n".join(
            [f"database written to {args.out}"]
            + [
                f"  {s['start']} -> {s['end']}: {s['paths']} paths, <= {s['loops']} loops"
                for s in stats["per_segment"]
            ]
            + [f"{stats['segments']} segments, {stats['candidates']} candidates"]
        ),
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    db = load_database(_read_json(args.db))
    cfg_ref, measurements = load_measurements(_read_json(args.measurements))
    if cfg_ref != db.cfg_digest:
        raise DigestMismatchError(
            f"measurements refer to CFG {cfg_ref[:12]}..., database was built "
            f"for {db.cfg_digest[:12]}..."
        )
    table = load_event_table(_read_json(args.table)) if args.table else None
    config = _load_config(table, args.counters) if table else None
    offset = _parse_offset(args.offset)
    if offset is not None:
        measurements = [
            m.__class__(start=m.start, end=m.end, delta=vsub(m.delta, offset))
            for m in measurements
        ]
    report = verify_trace_measurements(
        db, measurements, config=config, use_cache=not args.no_cache
    )
    _emit(
        report_document(report, include_timings=args.timings),
        args.format,
        lambda: render_report(report),
    )
    return EXIT_OK if report.accepted else EXIT_REJECTED


def cmd_simulate(args) -> int:
    cfg = load_cfg(_read_json(args.cfg))
    table = load_event_table(_read_json(args.table))
    config = _load_config(table, args.counters)
    trace = load_trace(_read_json(args.trace), cfg)
    measurements = measure(cfg, table, config, trace, offset=_parse_offset(args.offset))
    doc = serialize_measurements(cfg.digest, measurements)
    if args.out:
        _write_json(args.out, doc)
        print(f"{len(measurements)} measurements written to {args.out}")
    else:
        _emit(doc, args.format)
    return EXIT_OK


def cmd_walk(args) -> int:
    cfg = load_cfg(_read_json(args.cfg))
    trace = random_valid_walk(
        cfg,
        args.seed,
        min_segments=args.min_segments,
        max_segments=args.max_segments,
        max_loop_iterations=args.max_loop_iterations,
    )
    doc = serialize_trace(cfg, trace)
    if args.out:
        _write_json(args.out, doc)
        print(f"walk with {len(trace.steps)} steps written to {args.out}")
    else:
        _emit(doc, args.format)
    return EXIT_OK


def _run_manifest(path: str, reps_override: int | None = None):
    manifest = _read_json(path)
    base = Path(path).parent

    def resolve(name):
        value = manifest.get(name)
        return None if value is None else base / value

    cfg = load_cfg(_read_json(resolve("cfg")))
    table = load_event_table(_read_json(resolve("table")))
    trace = load_trace(_read_json(resolve("trace")), cfg)
    budgets = manifest.get("budgets") or {}
    db_path = resolve("db")
    if db_path is not None and db_path.exists():
        db = load_database(_read_json(db_path), expected_digest=cfg.digest)
    else:
        db = enumerate_segments(
            cfg,
            table,
            path_budget=budgets.get("paths", DEFAULT_PATH_BUDGET),
            cycle_budget=budgets.get("cycles", DEFAULT_CYCLE_BUDGET),
            node_budget=budgets.get("nodes", DEFAULT_NODE_BUDGET),
        )
        if db_path is not None:
            _write_json(db_path, serialize_database(db))
    config = _load_config(table, manifest.get("counters"))
    reps = reps_override if reps_override is not None else manifest.get("reps")
    specs = attacks.default_specs(seed=manifest.get("seed", 0), repetitions=reps)
    reports = attacks.evaluate(cfg, db, table, trace, specs, config=config)
    return manifest.get("label", Path(path).stem), reports


def cmd_attack_eval(args) -> int:
    rows = [_run_manifest(path, args.reps) for path in args.manifest]
    doc = [attacks.reliability_document(label, reports) for label, reports in rows]
    _emit(doc, args.format, lambda: attacks.render_table(rows))
    return EXIT_OK


def cmd_protocol(args) -> int:
    if args.explore:
        world = protocol.tandem_world(sm_mediated=args.sm_mediated)
        report = protocol.explore(
            world, protocol.standard_tandem_alphabet(), depth=args.depth
        )
        doc = {
            "states": report.states,
            "depth": report.depth,
            "violations": [
                {
                    "description": v.description,
                    "trace": [
                        {"kind": e.kind, "actor": e.actor, "target": e.target, "value": e.value}
                        for e in v.trace
                    ],
                }
                for v in report.violations
            ],
            "successful_reads_outside_verified": report.successful_reads_outside_verified,
        }
        _emit(
            doc,
            args.format,
            lambda: (
                f"explored {report.states} states to depth {report.depth}: "
                f"{len(report.violations)} violations, "
                f"{report.successful_reads_outside_verified} reads outside VERIFIED"
            ),
        )
        return EXIT_OK if not report.violations else EXIT_REJECTED
    events = protocol.load_scenario(_read_json(args.scenario))
    if args.db and args.measurements:
        # Integration mode: the verifier supplies the verdicts for events
        # scripted with value "auto".
        db = load_database(_read_json(args.db))
        cfg_ref, measurements = load_measurements(_read_json(args.measurements))
        if cfg_ref != db.cfg_digest:
            raise DigestMismatchError(
                "scenario measurements and database refer to different CFGs"
            )
        report = verify_trace_measurements(db, measurements)
        events = protocol.bind_verdicts(
            events, [r.verdict == "accepted" for r in report.results]
        )
    world = protocol.World(sm_mediated=args.sm_mediated)
    world, log = protocol.run_scenario(world, events)
    doc = {
        "effects": [
            {
                "event": {"kind": e.kind, "actor": e.actor, "target": e.target, "value": e.value},
                "effects": [list(effect) for effect in effects],
            }
            for e, effects in log
        ],
        "context_switches": world.context_switches,
    }
    _emit(
        doc,
        args.format,
        lambda: "\n".join(
            f"{e.kind}({e.actor}) -> {'; '.join(','.join(eff) for eff in effects)}"
            for e, effects in log
        )
        + f"\ncontext switches: {world.context_switches}",
    )
    return EXIT_OK


def cmd_demo(args) -> int:
    written = demos.write_demo(args.name, args.out, iterations=args.iterations)
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowattest",
        description="Preprocess, verify, simulate, and attack control-flow "
        "attestation artifacts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_output(p):
        p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("preprocess", help="build the segment database for a CFG")
    p.add_argument("--cfg", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget-paths", type=int, default=DEFAULT_PATH_BUDGET)
    p.add_argument("--budget-cycles", type=int, default=DEFAULT_CYCLE_BUDGET)
    p.add_argument("--budget-nodes", type=int, default=DEFAULT_NODE_BUDGET)
    common_output(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("verify", help="verify a measurement sequence against a database")
    p.add_argument("--db", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--table", help="needed only with --counters")
    p.add_argument("--counters", help="register spec, e.g. 'instret,a+b,c'")
    p.add_argument("--offset", help="per-snapshot footprint to subtract, e.g. '3,0,1'")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument(
        "--timings",
        action="store_true",
        help="include elapsed times in JSON output (breaks byte-stability)",
    )
    common_output(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="replay a trace into measurements")
    p.add_argument("--cfg", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--counters")
    p.add_argument("--offset")
    p.add_argument("--out")
    common_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("walk", help="generate a random valid trace")
    p.add_argument("--cfg", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-segments", type=int, default=1)
    p.add_argument("--max-segments", type=int, default=4)
    p.add_argument("--max-loop-iterations", type=int, default=8)
    p.add_argument("--out")
    common_output(p)
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("attack-eval", help="run the mutation experiments from manifests")
    p.add_argument("manifest", nargs="+")
    p.add_argument("--reps", type=int, help="override each manifest's repetition count")
    common_output(p)
    p.set_defaults(func=cmd_attack_eval)

    p = sub.add_parser("protocol", help="run a protocol scenario or explore the state space")
    p.add_argument("--scenario")
    p.add_argument("--explore", action="store_true")
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--sm-mediated", action="store_true")
    p.add_argument("--db", help="with --measurements: verdicts for 'auto' events")
    p.add_argument("--measurements")
    common_output(p)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("demo", help="write a shipped demo into a directory")
    p.add_argument("--name", choices=demos.DEMO_NAMES, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=60)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "protocol" and not args.explore and not args.scenario:
        parser.error("protocol needs --scenario or --explore")
    try:
        return args.func(args)
    except DigestMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIGEST
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (FlowAttestError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
