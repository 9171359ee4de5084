"""The universal map core: scalars, keys, maps, and swizzled links.

Everything the engine stores is a map from scalar keys to values, where a
value is a scalar, a nested map, or a link (`Ref`) into another map. Maps
are immutable, insertion-ordered, and hashable; mutation always goes
through the versioned store. Tuples, relations, databases, and sets of
databases are all the same `Map` class at different nesting depths.
"""
from __future__ import annotations

import sys
from datetime import date
from typing import Any, Iterable, Iterator, Optional

from .errors import MapKeyError, ScalarError

MASK64 = (1 << 64) - 1

SCALAR_KINDS = ("int", "float", "text", "bool", "date", "symbol", "composite")

KEY_KIND_SYMBOLIC = "symbolic"
KEY_KIND_COMPUTED = "computed"
KEY_KIND_SURROGATE = "surrogate"
KEY_KINDS = (KEY_KIND_SYMBOLIC, KEY_KIND_COMPUTED, KEY_KIND_SURROGATE)


class Symbol:
    """An interned identifier, distinct from text.

    Attribute names, relation names, and enumeration members of the
    symbolic domain are symbols; comparing a symbol against a text value
    is a variant error, never a silent match.
    """

    __slots__ = ("name", "_h")

    def __init__(self, name: str):
        if not isinstance(name, str):
            raise ScalarError(f"symbol name must be str, got {type(name).__name__}")
        object.__setattr__(self, "name", sys.intern(name))
        object.__setattr__(self, "_h", hash(("rmtm.sym", name)))

    def __setattr__(self, *_):
        raise AttributeError("Symbol is immutable")

    def __eq__(self, other):
        return type(other) is Symbol and self.name == other.name

    def __ne__(self, other):
        return not self.__eq__(other)

    def __lt__(self, other):
        if type(other) is not Symbol:
            return NotImplemented
        return self.name < other.name

    def __hash__(self):
        return self._h

    def __repr__(self):
        return f"Symbol({self.name!r})"


def sym(name: str) -> Symbol:
    return Symbol(name)


def scalar_kind(v) -> str:
    """Classify a scalar value, raising for anything that is not a scalar.

    There is deliberately no representation of NULL: None is not a value.
    """
    t = type(v)
    if t is bool:
        return "bool"
    if t is int:
        return "int"
    if t is float:
        return "float"
    if t is str:
        return "text"
    if t is Symbol:
        return "symbol"
    if t is date:
        return "date"
    if t is tuple:
        for item in v:
            scalar_kind(item)
        return "composite"
    raise ScalarError(f"not a scalar: {v!r} ({t.__name__})")


def is_scalar(v) -> bool:
    try:
        scalar_kind(v)
        return True
    except ScalarError:
        return False


def norm_scalar(v):
    """Normalized, hashable form of a scalar that keeps variants apart
    (so int 1, bool True and float 1.0 never collide as map keys)."""
    k = scalar_kind(v)
    if k == "composite":
        return ("composite", tuple(norm_scalar(x) for x in v))
    return (k, v)


def scalar_eq(a, b) -> bool:
    """Equality within a variant; comparing across variants is an error."""
    ka, kb = scalar_kind(a), scalar_kind(b)
    if ka != kb:
        raise ScalarError(f"cannot compare {ka} with {kb}")
    if ka == "composite":
        if len(a) != len(b):
            return False
        return all(scalar_eq(x, y) for x, y in zip(a, b))
    return a == b


def scalar_lt(a, b) -> bool:
    ka, kb = scalar_kind(a), scalar_kind(b)
    if ka != kb:
        raise ScalarError(f"cannot order {ka} against {kb}")
    if ka == "symbol":
        return a.name < b.name
    if ka == "composite":
        for x, y in zip(a, b):
            if scalar_lt(x, y):
                return True
            if scalar_lt(y, x):
                return False
        return len(a) < len(b)
    return a < b


class Key:
    """A map key together with how it came to be: externally declared
    (symbolic), derived from the value (computed), or engine-assigned
    (surrogate)."""

    __slots__ = ("value", "kind")

    def __init__(self, value, kind: str = KEY_KIND_SYMBOLIC):
        if kind not in KEY_KINDS:
            raise MapKeyError(f"unknown key kind {kind!r}")
        scalar_kind(value)  # keys must be scalars; maps as keys are rejected
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, *_):
        raise AttributeError("Key is immutable")

    def __eq__(self, other):
        return (
            type(other) is Key
            and self.kind == other.kind
            and norm_scalar(self.value) == norm_scalar(other.value)
        )

    def __hash__(self):
        return hash((self.kind, norm_scalar(self.value)))

    def __repr__(self):
        return f"Key({self.value!r}, {self.kind})"


_LINEAR_SCAN_LIMIT = 8


class Map:
    """An immutable, insertion-ordered collection of unique-key assignments.

    `_keys` is shared between maps of the same shape (all members of one
    relation point at the same keys tuple), so a map costs one values
    tuple plus a header. Equality and hashing are content-based and
    order-insensitive; iteration order is insertion order.
    """

    __slots__ = ("_keys", "_values", "_kind", "_hash", "_index")

    def __init__(self, entries: Iterable = (), kind: str = KEY_KIND_SYMBOLIC):
        if kind not in KEY_KINDS:
            raise MapKeyError(f"unknown key kind {kind!r}")
        keys = []
        values = []
        seen = set()
        for k, v in entries:
            nk = self._check_key(k)
            if nk in seen:
                raise MapKeyError(f"duplicate key {k!r}")
            seen.add(nk)
            keys.append(k)
            values.append(_check_value(v))
        self._keys = tuple(keys)
        self._values = tuple(values)
        self._kind = kind
        self._hash = None
        self._index = None

    @staticmethod
    def _check_key(k):
        if isinstance(k, (Map, Ref)):
            raise MapKeyError("map-valued keys are not supported")
        return norm_scalar(k)

    @classmethod
    def _raw(cls, keys: tuple, values: tuple, kind: str = KEY_KIND_SYMBOLIC) -> "Map":
        """Trusted constructor: caller guarantees scalar, unique keys."""
        m = cls.__new__(cls)
        m._keys = keys
        m._values = values
        m._kind = kind
        m._hash = None
        m._index = None
        return m

    @property
    def key_kind(self) -> str:
        return self._kind

    def __len__(self) -> int:
        return len(self._keys)

    def __iter__(self) -> Iterator:
        return iter(self._keys)

    def keys(self) -> tuple:
        return self._keys

    def values(self) -> tuple:
        return self._values

    def items(self):
        return zip(self._keys, self._values)

    def typed_keys(self) -> Iterator[Key]:
        for k in self._keys:
            yield Key(k, self._kind)

    def _build_index(self):
        idx = {}
        for i, k in enumerate(self._keys):
            idx[norm_scalar(k)] = i
        self._index = idx
        return idx

    def position(self, key) -> Optional[int]:
        nk = norm_scalar(key)
        idx = self._index
        if idx is None:
            if len(self._keys) <= _LINEAR_SCAN_LIMIT:
                for i, k in enumerate(self._keys):
                    if norm_scalar(k) == nk:
                        return i
                return None
            idx = self._build_index()
        return idx.get(nk)

    def get(self, key, default=None):
        pos = self.position(key)
        return default if pos is None else self._values[pos]

    def __contains__(self, key) -> bool:
        return self.position(key) is not None

    def with_entry(self, key, value) -> "Map":
        if key in self:
            raise MapKeyError(f"duplicate key {key!r}")
        self._check_key(key)
        return Map._raw(
            self._keys + (key,), self._values + (_check_value(value),), self._kind
        )

    def with_value(self, key, value) -> "Map":
        """Replace the value under an existing key."""
        pos = self.position(key)
        if pos is None:
            raise MapKeyError(f"no such key {key!r}")
        vals = list(self._values)
        vals[pos] = _check_value(value)
        return Map._raw(self._keys, tuple(vals), self._kind)

    def without_keys(self, keys) -> "Map":
        drop = {norm_scalar(k) for k in keys}
        pairs = [
            (k, v) for k, v in zip(self._keys, self._values)
            if norm_scalar(k) not in drop
        ]
        return Map._raw(
            tuple(k for k, _ in pairs), tuple(v for _, v in pairs), self._kind
        )

    def content_hash(self) -> int:
        """Cached, order-insensitive 64-bit content hash."""
        h = self._hash
        if h is None:
            acc = len(self._keys) * 1099511628211
            for k, v in zip(self._keys, self._values):
                acc ^= hash((norm_scalar(k), _norm_value(v))) & MASK64
            h = (acc ^ hash(self._kind)) & MASK64
            self._hash = h
        return h

    def __hash__(self):
        return self.content_hash()

    def __eq__(self, other):
        if self is other:
            return True
        if type(other) is not Map:
            return NotImplemented
        if self._kind != other._kind or len(self._keys) != len(other._keys):
            return False
        mine = {
            norm_scalar(k): _norm_value(v) for k, v in zip(self._keys, self._values)
        }
        theirs = {
            norm_scalar(k): _norm_value(v) for k, v in zip(other._keys, other._values)
        }
        return mine == theirs

    def __repr__(self):
        inner = ", ".join(f"{k!r}: {v!r}" for k, v in self.items())
        return "{" + inner + "}"


class Ref:
    """A swizzled link: a non-exclusive reference to an entry of another
    map, named by target path and target key.

    A ref may be symbolic (freshly deserialized, target not yet attached)
    or resolved. Resolved refs alias their target's values tuple and
    content hash so that following the link costs one slot read — which
    is the entire point of swizzling.
    """

    __slots__ = ("path", "key", "target", "_values", "_thash")

    def __init__(self, path, key, target: Optional[Map] = None):
        self.path = tuple(
            Symbol(p) if isinstance(p, str) else p for p in path
        )
        self.key = key
        scalar_kind(key)
        self.target = target
        if target is None:
            self._values = None
            self._thash = None
        else:
            self._values = target._values
            self._thash = target.content_hash()

    @property
    def resolved(self) -> bool:
        return self.target is not None

    def __eq__(self, other):
        return (
            type(other) is Ref
            and self.path == other.path
            and norm_scalar(self.key) == norm_scalar(other.key)
        )

    def __hash__(self):
        return hash(
            ("rmtm.ref", tuple(norm_scalar(p) for p in self.path), norm_scalar(self.key))
        )

    def __repr__(self):
        return f"Ref({'/'.join(str(p) for p in self.path)}, {self.key!r})"


def _check_value(v):
    if isinstance(v, (Map, Ref)):
        return v
    scalar_kind(v)
    return v


def _norm_value(v):
    """Variant-safe comparison form of a value (1 must not equal True)."""
    if isinstance(v, (Map, Ref)):
        return v
    return norm_scalar(v)


def record(**attrs) -> Map:
    """Build an order-0 map with symbol keys from keyword arguments."""
    return Map((Symbol(k), v) for k, v in attrs.items())


def map_of(entries: Iterable, kind: str = KEY_KIND_SYMBOLIC) -> Map:
    """Build a map from (key, value) pairs, coercing str keys to symbols."""
    return Map(
        ((Symbol(k) if isinstance(k, str) else k, v) for k, v in entries), kind=kind
    )


def instance_order(v) -> int:
    """Nesting depth of an instance: 0 for a map of scalars/links, else
    1 + the deepest nested map. Links do not nest."""
    if isinstance(v, Map):
        sub = -1
        for inner in v._values:
            if isinstance(inner, Map):
                o = instance_order(inner)
                if o > sub:
                    sub = o
        return sub + 1
    return 0
