"""Canonical JSON-compatible serialization of values, maps, and types.

Maps with symbolic keys serialize as plain JSON objects; anything else
uses tagged objects ({"$map": ...}, {"$ref": [path, key]}, {"$sym": ...},
{"$type": ...}). Round-trips are lossless, including key kinds and
optionality marks. Deserialized links come back symbolic (unresolved) and
are re-attached when they join a database version.
"""
from __future__ import annotations

import json
from datetime import date

from .core import Map, Ref, Symbol, scalar_kind
from .errors import SerializationError
from .types import (
    EnumerationDomain,
    ForeignKeyDomain,
    KeyPolicy,
    MapType,
    MapTypeDomain,
    OneOfConstraint,
    ProjectKey,
    ProjectKeyTuple,
    RangeConstraint,
    ScalarDomain,
    SurrogateCounter,
    TypeEntry,
)

_TAGS = ("$sym", "$date", "$tuple", "$ref", "$map", "$type")


def encode(obj):
    """Encode a value, map, or map type into JSON-compatible data."""
    if isinstance(obj, Map):
        return _encode_map(obj)
    if isinstance(obj, Ref):
        return {"$ref": [_encode_path(obj.path), encode(obj.key)]}
    if isinstance(obj, MapType):
        return {"$type": _encode_type(obj)}
    return _encode_scalar(obj)


def _encode_scalar(v):
    kind = scalar_kind(v)
    if kind in ("int", "float", "text", "bool"):
        return v
    if kind == "symbol":
        return {"$sym": v.name}
    if kind == "date":
        return {"$date": v.isoformat()}
    if kind == "composite":
        return {"$tuple": [encode(x) for x in v]}
    raise SerializationError(f"cannot encode {v!r}")


def _encode_path(path):
    return [p.name if isinstance(p, Symbol) else encode(p) for p in path]


def _plain_object_safe(m: Map) -> bool:
    if m.key_kind != "symbolic":
        return False
    return all(
        isinstance(k, Symbol) and not k.name.startswith("$") for k in m.keys()
    )


def _encode_map(m: Map):
    if _plain_object_safe(m):
        return {k.name: encode(v) for k, v in m.items()}
    return {
        "$map": {
            "kind": m.key_kind,
            "entries": [[encode(k), encode(v)] for k, v in m.items()],
        }
    }


def _encode_domain(d):
    if isinstance(d, ScalarDomain):
        return {"$domain": "scalar", "kind": d.kind}
    if isinstance(d, MapTypeDomain):
        return {"$domain": "map_type", "type": _encode_type(d.map_type)}
    if isinstance(d, EnumerationDomain):
        return {"$domain": "enumeration", "target": _encode_path(d.target)}
    if isinstance(d, ForeignKeyDomain):
        return {"$domain": "foreign_key", "target": _encode_path(d.target),
                "key_kind": d.key_kind}
    raise SerializationError(f"cannot encode domain {d!r}")


def _encode_pi(pi):
    if pi is None:
        return None
    if isinstance(pi, ProjectKey):
        return {"$pi": "project", "attr": encode(pi.attr)}
    if isinstance(pi, ProjectKeyTuple):
        return {"$pi": "project_tuple", "attrs": [encode(a) for a in pi.attrs]}
    if isinstance(pi, SurrogateCounter):
        return {"$pi": "surrogate"}
    raise SerializationError(f"cannot encode key spec {pi!r}")


def _encode_constraint(c):
    if isinstance(c, RangeConstraint):
        return {"$constraint": "range", "key": None if c.key is None else encode(c.key),
                "lo": encode(c.lo), "hi": encode(c.hi)}
    if isinstance(c, OneOfConstraint):
        return {"$constraint": "one_of", "key": None if c.key is None else encode(c.key),
                "literals": [encode(x) for x in c.literals]}
    raise SerializationError(f"cannot encode constraint {c!r}")


def _encode_type(t: MapType):
    return {
        "n": t.n,
        "key_domain": None if t.key_domain is None else _encode_domain(t.key_domain),
        "entries": [
            [encode(e.key), _encode_domain(e.domain), e.optional] for e in t.entries
        ],
        "value_domain": None if t.value_domain is None else _encode_domain(t.value_domain),
        "constraints": [_encode_constraint(c) for c in t.constraints],
        "key_policy": {"kind": t.key_policy.kind, "pi": _encode_pi(t.key_policy.pi)},
    }


# --------------------------------------------------------------------------

def decode(data):
    """Decode JSON-compatible data produced by `encode`."""
    t = type(data)
    if t is dict:
        if "$sym" in data:
            return Symbol(data["$sym"])
        if "$date" in data:
            return parse_date(data["$date"])
        if "$tuple" in data:
            return tuple(decode(x) for x in data["$tuple"])
        if "$ref" in data:
            path_raw, key_raw = data["$ref"]
            return Ref(_decode_path(path_raw), decode(key_raw))
        if "$map" in data:
            body = data["$map"]
            return Map(
                ((decode(k), decode(v)) for k, v in body["entries"]),
                kind=body.get("kind", "symbolic"),
            )
        if "$type" in data:
            return _decode_type(data["$type"])
        for k in data:
            if k.startswith("$"):
                raise SerializationError(f"unknown tag {k!r}")
        return Map((Symbol(k), decode(v)) for k, v in data.items())
    if t in (int, float, bool, str):
        return data
    if data is None:
        raise SerializationError("null is not a value: absence is the only missing state")
    raise SerializationError(f"cannot decode {data!r}")


def _decode_path(raw):
    return tuple(Symbol(p) if isinstance(p, str) else decode(p) for p in raw)


def _decode_domain(data):
    kind = data["$domain"]
    if kind == "scalar":
        return ScalarDomain(data["kind"])
    if kind == "map_type":
        return MapTypeDomain(_decode_type(data["type"]))
    if kind == "enumeration":
        return EnumerationDomain(_decode_path(data["target"]))
    if kind == "foreign_key":
        return ForeignKeyDomain(_decode_path(data["target"]), data.get("key_kind"))
    raise SerializationError(f"unknown domain tag {kind!r}")


def _decode_pi(data):
    if data is None:
        return None
    kind = data["$pi"]
    if kind == "project":
        return ProjectKey(decode(data["attr"]))
    if kind == "project_tuple":
        return ProjectKeyTuple(tuple(decode(a) for a in data["attrs"]))
    if kind == "surrogate":
        return SurrogateCounter()
    raise SerializationError(f"unknown key spec tag {kind!r}")


def _decode_constraint(data):
    kind = data["$constraint"]
    key = None if data.get("key") is None else decode(data["key"])
    if kind == "range":
        return RangeConstraint(decode(data["lo"]), decode(data["hi"]), key)
    if kind == "one_of":
        return OneOfConstraint(tuple(decode(x) for x in data["literals"]), key)
    raise SerializationError(f"unknown constraint tag {kind!r}")


def _decode_type(body):
    pol = body.get("key_policy") or {"kind": "declared", "pi": None}
    return MapType(
        n=body.get("n"),
        key_domain=None if body.get("key_domain") is None else _decode_domain(body["key_domain"]),
        entries=tuple(
            TypeEntry(decode(k), _decode_domain(d), bool(opt))
            for k, d, opt in body.get("entries", [])
        ),
        value_domain=None if body.get("value_domain") is None else _decode_domain(body["value_domain"]),
        constraints=tuple(_decode_constraint(c) for c in body.get("constraints", [])),
        key_policy=KeyPolicy(pol["kind"], _decode_pi(pol.get("pi"))),
    )


# --------------------------------------------------------------------------

def dumps(obj, indent=None) -> str:
    try:
        return json.dumps(encode(obj), indent=indent, ensure_ascii=False, allow_nan=False)
    except ValueError as exc:
        raise SerializationError(str(exc)) from exc


def loads(text: str):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SerializationError(f"bad JSON: {exc}") from exc
    return decode(data)


def parse_date(text: str) -> date:
    """Accept ISO-8601 (preferred) or day-month-year with dashes; always
    normalize to a calendar date."""
    try:
        return date.fromisoformat(text)
    except ValueError:
        pass
    parts = text.split("-")
    if len(parts) == 3 and len(parts[2]) == 4:
        try:
            d, m, y = (int(p) for p in parts)
            return date(y, m, d)
        except ValueError:
            pass
    raise SerializationError(f"cannot parse date {text!r}")
