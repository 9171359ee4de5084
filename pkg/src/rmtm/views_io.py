"""Canonical serialization of view expression trees.

The on-disk form is tagged-node JSON: data, not a query language.
Decoding re-runs the same constructors as the in-process builders, so a
deserialized tree passes exactly the same construction-time checks and a
hostile payload inside a literal stays a literal.
"""
from __future__ import annotations

import json

from .errors import SerializationError
from .serialize import decode, encode, _decode_path, _encode_path
from .types import MapType
from .views import (
    AggSpec,
    Aggregate,
    And,
    Cmp,
    Compute,
    ComputeSpec,
    Denormalize,
    EntitySpec,
    EntryKeyTerm,
    Factorize,
    FactorizeSpec,
    Filter,
    Func,
    GroupSpec,
    InSet,
    Join,
    KeyTerm,
    LinkEdge,
    Lit,
    Mutation,
    Not,
    Or,
    Partition,
    Project,
    Rename,
    Replication,
    SetOp,
    Source,
    SubdbReduce,
    TruePred,
    ViewExpr,
    make_aggregate,
    make_compute,
    make_filter,
    make_join,
    make_mutation,
    make_normalize,
    make_partition,
    make_project,
    make_rename,
    make_set_op,
    make_subdb_reduce,
    source,
)


def _enc_term(t):
    if isinstance(t, Lit):
        return {"$term": "lit", "value": encode(t.value)}
    if isinstance(t, KeyTerm):
        return {"$term": "key", "path": _encode_path(t.path)}
    if isinstance(t, EntryKeyTerm):
        return {"$term": "entry_key"}
    if isinstance(t, Func):
        return {"$term": "func", "name": t.name, "args": [_enc_term(a) for a in t.args]}
    raise SerializationError(f"cannot encode term {t!r}")


def _dec_term(d):
    kind = d["$term"]
    if kind == "lit":
        return Lit(decode(d["value"]))
    if kind == "key":
        return KeyTerm(_decode_path(d["path"]))
    if kind == "entry_key":
        return EntryKeyTerm()
    if kind == "func":
        return Func(d["name"], tuple(_dec_term(a) for a in d["args"]))
    raise SerializationError(f"unknown term tag {kind!r}")


def _enc_pred(p):
    if isinstance(p, TruePred):
        return {"$pred": "true"}
    if isinstance(p, Cmp):
        return {"$pred": "cmp", "op": p.op,
                "left": _enc_term(p.left), "right": _enc_term(p.right)}
    if isinstance(p, InSet):
        return {"$pred": "in", "term": _enc_term(p.term),
                "literals": [encode(v) for v in p.literals]}
    if isinstance(p, And):
        return {"$pred": "and", "parts": [_enc_pred(q) for q in p.parts]}
    if isinstance(p, Or):
        return {"$pred": "or", "parts": [_enc_pred(q) for q in p.parts]}
    if isinstance(p, Not):
        return {"$pred": "not", "part": _enc_pred(p.part)}
    raise SerializationError(f"cannot encode predicate {p!r}")


def _dec_pred(d):
    kind = d["$pred"]
    if kind == "true":
        return TruePred()
    if kind == "cmp":
        return Cmp(d["op"], _dec_term(d["left"]), _dec_term(d["right"]))
    if kind == "in":
        return InSet(_dec_term(d["term"]), tuple(decode(v) for v in d["literals"]))
    if kind == "and":
        return And(tuple(_dec_pred(q) for q in d["parts"]))
    if kind == "or":
        return Or(tuple(_dec_pred(q) for q in d["parts"]))
    if kind == "not":
        return Not(_dec_pred(d["part"]))
    raise SerializationError(f"unknown predicate tag {kind!r}")


def _enc_edges(edges):
    return [
        {"source": _encode_path(e.source), "keys": _encode_path(e.keys),
         "target": _encode_path(e.target)}
        for e in edges
    ]


def _dec_edges(raw):
    return tuple(
        LinkEdge(_decode_path(e["source"]), _decode_path(e["keys"]),
                 _decode_path(e["target"]))
        for e in raw
    )


def _enc_spec(spec: ComputeSpec):
    return [[_encode_path((k,))[0], _enc_term(t)] for k, t in spec.outputs]


def _dec_spec(raw):
    return ComputeSpec(tuple((_decode_path((k,))[0], _dec_term(t)) for k, t in raw))


def encode_view(v: ViewExpr) -> dict:
    if isinstance(v, Source):
        return {"$view": "source", "type": encode(v.input_type)}
    child = encode_view(v.child)
    if isinstance(v, Filter):
        return {"$view": "filter", "child": child, "path": _encode_path(v.path),
                "predicate": _enc_pred(v.predicate)}
    if isinstance(v, Project):
        return {"$view": "project", "child": child, "path": _encode_path(v.path),
                "keys": _encode_path(v.keys), "distinct": v.distinct}
    if isinstance(v, Compute):
        return {"$view": "compute", "child": child, "path": _encode_path(v.path),
                "spec": _enc_spec(v.spec)}
    if isinstance(v, Rename):
        return {"$view": "rename", "child": child, "path": _encode_path(v.path),
                "mapping": [[_encode_path((a,))[0], _encode_path((b,))[0]]
                            for a, b in v.mapping]}
    if isinstance(v, Join):
        on = None
        if isinstance(v.on, tuple):
            on = {"$on": "links", "edges": _enc_edges(v.on)}
        elif v.on is not None:
            on = {"$on": "predicate", "predicate": _enc_pred(v.on)}
        return {"$view": "join", "child": child, "kind": v.join_kind,
                "inputs": [_encode_path(p) for p in v.inputs], "on": on,
                "outer_sides": [_encode_path(p) for p in v.outer_sides],
                "preserved": _encode_path(v.preserved) if v.preserved else None}
    if isinstance(v, SetOp):
        return {"$view": "set_op", "child": child, "op": v.op,
                "inputs": [_encode_path(p) for p in v.inputs]}
    if isinstance(v, Aggregate):
        return {"$view": "aggregate", "child": child, "groups": [
            {"name": _encode_path((g.name,))[0], "path": _encode_path(g.path),
             "by": _encode_path(g.by),
             "aggs": [{"func": a.func,
                       "source": None if a.source is None else _encode_path((a.source,))[0],
                       "out": _encode_path((a.out,))[0]} for a in g.aggs]}
            for g in v.groups
        ]}
    if isinstance(v, Partition):
        return {"$view": "partition", "child": child, "path": _encode_path(v.path),
                "pf": None if v.pf is None else _enc_term(v.pf),
                "replication": {"kind": v.replication.kind,
                                "copies": v.replication.copies,
                                "assignments": [
                                    [encode(pid), [encode(x) for x in extras]]
                                    for pid, extras in v.replication.assignments
                                ]}}
    if isinstance(v, Denormalize):
        return {"$view": "denormalize", "child": child,
                "links": _enc_edges(v.links), "root": _encode_path(v.root)}
    if isinstance(v, Factorize):
        return {"$view": "factorize", "child": child, "path": _encode_path(v.path),
                "spec": {"central": _encode_path((v.spec.central,))[0],
                         "entities": [
                             {"name": _encode_path((e.name,))[0],
                              "attrs": _encode_path(e.attrs),
                              "key": _encode_path(e.key)}
                             for e in v.spec.entities
                         ]}}
    if isinstance(v, SubdbReduce):
        return {"$view": "subdb_reduce", "child": child, "mode": v.mode,
                "filters": [[_encode_path(p), _enc_pred(pred)]
                            for p, pred, _ in v.filters],
                "links": _enc_edges(v.links),
                "outer_inputs": [_encode_path(p) for p in v.outer_inputs]}
    if isinstance(v, Mutation):
        return {"$view": "mutation", "child": child, "op": v.op,
                "path": _encode_path(v.path),
                "payload": None if v.payload is None else encode(v.payload),
                "key": None if v.explicit_key is None else encode(v.explicit_key),
                "predicate": None if v.predicate is None else _enc_pred(v.predicate),
                "spec": None if v.spec is None else _enc_spec(v.spec),
                "relmap_type": None if v.relmap_type is None else encode(v.relmap_type)}
    raise SerializationError(f"cannot encode view {v!r}")


def decode_view(data: dict) -> ViewExpr:
    kind = data.get("$view")
    if kind == "source":
        t = decode(data["type"])
        if not isinstance(t, MapType):
            raise SerializationError("source type must be a map type")
        return source(t)
    child = decode_view(data["child"])
    if kind == "filter":
        return make_filter(child, _decode_path(data["path"]), _dec_pred(data["predicate"]))
    if kind == "project":
        return make_project(child, _decode_path(data["path"]),
                            _decode_path(data["keys"]), bool(data.get("distinct")))
    if kind == "compute":
        return make_compute(child, _dec_spec(data["spec"]), _decode_path(data["path"]))
    if kind == "rename":
        mapping = tuple((_decode_path((a,))[0], _decode_path((b,))[0])
                        for a, b in data["mapping"])
        return make_rename(child, mapping, _decode_path(data["path"]))
    if kind == "join":
        on = data.get("on")
        if on is not None:
            on = _dec_edges(on["edges"]) if on["$on"] == "links" else _dec_pred(on["predicate"])
        return make_join(
            child, data["kind"], [_decode_path(p) for p in data["inputs"]], on=on,
            outer_sides=[_decode_path(p) for p in data.get("outer_sides", [])],
            preserved=None if data.get("preserved") is None else _decode_path(data["preserved"]),
        )
    if kind == "set_op":
        return make_set_op(child, data["op"], [_decode_path(p) for p in data["inputs"]])
    if kind == "aggregate":
        groups = []
        for g in data["groups"]:
            aggs = tuple(
                AggSpec(a["func"],
                        None if a.get("source") is None else _decode_path((a["source"],))[0],
                        _decode_path((a["out"],))[0])
                for a in g["aggs"]
            )
            groups.append(GroupSpec(_decode_path((g["name"],))[0],
                                    _decode_path(g["path"]),
                                    _decode_path(g["by"]), aggs))
        return make_aggregate(child, groups)
    if kind == "partition":
        rep = data.get("replication") or {}
        replication = Replication(
            rep.get("kind", "none"), rep.get("copies"),
            tuple((decode(pid), tuple(decode(x) for x in extras))
                  for pid, extras in rep.get("assignments", ())),
        )
        pf = None if data.get("pf") is None else _dec_term(data["pf"])
        return make_partition(child, pf, _decode_path(data["path"]), replication)
    if kind == "denormalize":
        return make_normalize(child, "denormalize", links=_dec_edges(data["links"]),
                              root_name=_decode_path(data["root"]))
    if kind == "factorize":
        raw = data["spec"]
        spec = FactorizeSpec(
            _decode_path((raw["central"],))[0],
            tuple(EntitySpec(_decode_path((e["name"],))[0],
                             _decode_path(e["attrs"]), _decode_path(e["key"]))
                  for e in raw["entities"]),
        )
        return make_normalize(child, "factorize", spec=spec,
                              path=_decode_path(data["path"]))
    if kind == "subdb_reduce":
        return make_subdb_reduce(
            child, data["mode"],
            filters=[(_decode_path(p), _dec_pred(pred)) for p, pred in data["filters"]],
            links=_dec_edges(data["links"]),
            outer_inputs=[_decode_path(p) for p in data.get("outer_inputs", [])],
        )
    if kind == "mutation":
        return make_mutation(
            child, data["op"], _decode_path(data["path"]),
            payload=None if data.get("payload") is None else decode(data["payload"]),
            key=None if data.get("key") is None else decode(data["key"]),
            predicate=None if data.get("predicate") is None else _dec_pred(data["predicate"]),
            spec=None if data.get("spec") is None else _dec_spec(data["spec"]),
            relmap_type=None if data.get("relmap_type") is None else decode(data["relmap_type"]),
        )
    raise SerializationError(f"unknown view tag {kind!r}")


def dumps_view(v: ViewExpr, indent=None) -> str:
    return json.dumps(encode_view(v), indent=indent, ensure_ascii=False)


def loads_view(text: str) -> ViewExpr:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SerializationError(f"bad JSON: {exc}") from exc
    return decode_view(data)
