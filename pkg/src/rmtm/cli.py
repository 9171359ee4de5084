"""Command-line front end: validate schemas and data, classify models,
evaluate serialized view expressions, apply rewrites, run the benchmark.

View files are serialized expression trees, never query text; loading
one re-runs every construction-time check. Errors leave machine-readable
JSON diagnostics on stderr and a nonzero exit status.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .core import Map, Symbol
from .engine import Store, load_database, save_database
from .errors import RmtmError
from .schema import (
    Database,
    DatabaseSchema,
    build_relmap,
    classify_database,
    classify_schema,
    swizzle,
    validate_database,
)
from .serialize import decode, dumps, loads
from .starbench import CSV_COLUMNS, StarConfig, run_suite, write_csv
from .types import MapType, MapTypeDomain
from .validate import ValidationReport
from .views_eval import eval_out_of_place
from .views_io import loads_view


def _fail(kind: str, message: str, details=None, code: int = 1):
    payload = {"error": kind, "message": message}
    if details:
        payload["details"] = details
    print(json.dumps(payload), file=sys.stderr)
    return code


def _report_details(report: ValidationReport, line_index=None):
    out = []
    for v in report.violations:
        row = {
            "kind": v.kind,
            "path": [str(p) for p in v.path],
            "key": None if v.key is None else str(v.key),
            "message": v.message,
        }
        if line_index and len(v.path) >= 2:
            loc = line_index.get((str(v.path[0]), repr(v.path[1])))
            if loc:
                row["file"], row["line"] = loc
        out.append(row)
    return out


def _load_schema(path) -> DatabaseSchema:
    with open(path) as f:
        t = loads(f.read())
    if not isinstance(t, MapType):
        raise RmtmError(f"{path} does not hold a map type")
    return DatabaseSchema([(e.key, e.domain.map_type) for e in t.entries
                           if isinstance(e.domain, MapTypeDomain)])


def _read_records(path):
    """One JSON object per line; a reserved $key member carries explicit
    entry keys for declared-key relations."""
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            if not isinstance(raw, dict):
                raise RmtmError(f"{path}:{lineno}: records are JSON objects")
            explicit = raw.pop("$key", None)
            rec = decode(raw)
            key = None if explicit is None else decode(explicit)
            records.append(((rec, key), lineno))
    return records


def _build_db(schema: DatabaseSchema, data_paths):
    relmaps = {}
    line_index = {}
    for path in data_paths:
        name = os.path.splitext(os.path.basename(path))[0]
        if not schema.has(name):
            raise RmtmError(f"schema has no relation named {name!r} for {path}")
        rows = _read_records(path)
        relmap, keys = build_relmap(schema, name, [r for r, _ in rows])
        for key, (_, lineno) in zip(keys, rows):
            line_index[(name, repr(key))] = (path, lineno)
        relmaps[name] = relmap
    return Database.from_relmaps(schema, relmaps), line_index


def cmd_validate(args) -> int:
    schema = _load_schema(args.schema)
    db, line_index = _build_db(schema, args.data)
    report = validate_database(db)
    print(json.dumps({
        "conforms": report.conforms,
        "violations": _report_details(report, line_index),
    }, indent=2))
    return 0 if report.conforms else 1


def cmd_classify(args) -> int:
    schema = _load_schema(args.schema)
    if args.data:
        db, _ = _build_db(schema, args.data)
        mc = classify_database(db)
    else:
        db = Database.from_relmaps(schema, {})
        mc = classify_database(db)
    print(json.dumps({
        "is_rmtm": mc.is_rmtm,
        "is_rm": mc.is_rm,
        "is_erm": mc.is_erm,
        "relmaps": {n.name: c for n, c in mc.per_relmap},
    }, indent=2))
    return 0


def cmd_load(args) -> int:
    schema = _load_schema(args.schema)
    db, line_index = _build_db(schema, args.data)
    if args.swizzle:
        db = swizzle(db)
    report = validate_database(db)
    if not report.conforms:
        return _fail("referential violation" if any(
            v.kind in ("referential violation", "dangling reference")
            for v in report.violations) else "validation",
            "data does not conform to the schema",
            _report_details(report, line_index))
    store = Store()
    name = args.name or os.path.splitext(os.path.basename(args.schema))[0]
    store.create_database(name, db)
    save_database(store, name, args.store)
    sizes = {n.name: len(v) for n, v in db.content.items() if isinstance(v, Map)}
    print(json.dumps({"store": args.store, "database": name, "version": 1,
                      "relmaps": sizes}))
    return 0


def cmd_query(args) -> int:
    store, name = load_database(args.store)
    with open(args.view) as f:
        view = loads_view(f.read())
    snap = store.begin_snapshot(name)
    result = eval_out_of_place(view, snap, keep_refs=args.keep_refs)
    text = dumps(result, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_apply(args) -> int:
    store, name = load_database(args.store)
    with open(args.view) as f:
        view = loads_view(f.read())
    version = store.commit_in_place(name, view)
    save_database(store, name, args.store)
    print(json.dumps({"database": name, "version": version}))
    return 0


def cmd_bench(args) -> int:
    lo, _, hi = args.dims.partition(":")
    dims = range(int(lo), int(hi or lo) + 1)
    cfg = StarConfig(args.facts, max(dims), args.dim_size, args.seed)
    def progress(row):
        print(json.dumps({c: getattr(row, c) for c in CSV_COLUMNS}), flush=True)
    rows = run_suite(cfg, dims=dims, repetitions=args.reps, progress=progress)
    if args.csv:
        write_csv(rows, args.csv)
        print(json.dumps({"csv": args.csv, "rows": len(rows)}))
    return 0 if all(r.checksum_match for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rmtm",
        description="embedded map-typed database engine",
    )
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check record files against a schema")
    v.add_argument("--schema", required=True)
    v.add_argument("--data", nargs="+", required=True,
                   help="record files (one JSON object per line); file stem names the relation")
    v.set_defaults(fn=cmd_validate)

    c = sub.add_parser("classify", help="model classification of a schema")
    c.add_argument("--schema", required=True)
    c.add_argument("--data", nargs="*", default=())
    c.set_defaults(fn=cmd_classify)

    l = sub.add_parser("load", help="load record files into a fresh store")
    l.add_argument("--schema", required=True)
    l.add_argument("--data", nargs="+", required=True)
    l.add_argument("--store", default=os.environ.get("RMTM_STORE", "store"))
    l.add_argument("--name", default=None, help="database name (default: schema file stem)")
    l.add_argument("--swizzle", action="store_true",
                   help="replace foreign keys by direct links before committing")
    l.set_defaults(fn=cmd_load)

    q = sub.add_parser("query", help="evaluate a view file against the latest version")
    q.add_argument("--store", default=os.environ.get("RMTM_STORE", "store"))
    q.add_argument("--view", required=True)
    q.add_argument("--out", default=None)
    q.add_argument("--keep-refs", action="store_true")
    q.set_defaults(fn=cmd_query)

    a = sub.add_parser("apply", help="commit a view file as an in-place rewrite")
    a.add_argument("--store", default=os.environ.get("RMTM_STORE", "store"))
    a.add_argument("--view", required=True)
    a.set_defaults(fn=cmd_apply)

    b = sub.add_parser("bench", help="run the star-join comparison")
    b.add_argument("--facts", type=int, default=1_000_000)
    b.add_argument("--dims", default="1:10", help="dimension count or range lo:hi")
    b.add_argument("--dim-size", type=int, default=100)
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--csv", default=None)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except RmtmError as exc:
        report = getattr(exc, "report", None)
        details = _report_details(report) if report is not None else None
        return _fail(type(exc).__name__, str(exc), details)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
