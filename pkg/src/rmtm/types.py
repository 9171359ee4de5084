"""Map types: the constraint descriptors that type maps.

A map type can constrain the entry count (Cn), the key domain (CKD), the
per-key value domains (CVD), the required keys themselves (CK), and the
value instances (CV). Tuple types (fixed symbolic keys), relation types
(uniform element type), database schemas, and set-of-database types are
all the one `MapType` class with different constraints, which is what
lets the view algebra operate at every nesting depth with one mechanism.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .core import Key, Map, Symbol, norm_scalar, scalar_kind
from .errors import (
    CyclicTypeError,
    KeyComputationError,
    SchemaError,
)

# --------------------------------------------------------------------------
# Domains

SCALAR_DOMAIN_KINDS = ("int", "float", "text", "bool", "date", "symbol", "composite")


@dataclass(frozen=True)
class ScalarDomain:
    """Case 1: any instance of one scalar variant."""

    kind: str

    def __post_init__(self):
        if self.kind not in SCALAR_DOMAIN_KINDS:
            raise SchemaError(f"unknown scalar domain {self.kind!r}")


@dataclass(frozen=True)
class MapTypeDomain:
    """Case 3: any map conforming to the given type (owned, exclusive)."""

    map_type: "MapType"


@dataclass(frozen=True)
class EnumerationDomain:
    """Case 4: a concrete entry of the map at `target` — a link.

    Membership is checked against the live target map at validation time,
    so the enumeration tracks the map.
    """

    target: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "target",
            tuple(Symbol(p) if isinstance(p, str) else p for p in self.target),
        )


@dataclass(frozen=True)
class ForeignKeyDomain:
    """Case 2: a scalar that must exist as a key of the map at `target`.

    The relational encoding of a link; `swizzle` turns these into refs.
    """

    target: tuple
    key_kind: Optional[str] = None  # scalar variant of the referenced key

    def __post_init__(self):
        object.__setattr__(
            self,
            "target",
            tuple(Symbol(p) if isinstance(p, str) else p for p in self.target),
        )
        if self.key_kind is not None and self.key_kind not in SCALAR_DOMAIN_KINDS:
            raise SchemaError(f"unknown key kind {self.key_kind!r}")


Domain = Union[ScalarDomain, MapTypeDomain, EnumerationDomain, ForeignKeyDomain]


def is_link_domain(d) -> bool:
    return isinstance(d, (EnumerationDomain, ForeignKeyDomain))


# --------------------------------------------------------------------------
# Value constraints (CV) — named predicate specs, so types stay serializable

@dataclass(frozen=True)
class RangeConstraint:
    """Value under `key` (or every value if key is None) lies in [lo, hi]."""

    lo: object
    hi: object
    key: Optional[object] = None

    def __post_init__(self):
        if isinstance(self.key, str):
            object.__setattr__(self, "key", Symbol(self.key))


@dataclass(frozen=True)
class OneOfConstraint:
    """Value under `key` (or every value) is one of the listed literals."""

    literals: tuple
    key: Optional[object] = None

    def __post_init__(self):
        object.__setattr__(self, "literals", tuple(self.literals))
        if isinstance(self.key, str):
            object.__setattr__(self, "key", Symbol(self.key))


ValueConstraint = Union[RangeConstraint, OneOfConstraint]


# --------------------------------------------------------------------------
# Key computation specs and policies

@dataclass(frozen=True)
class ProjectKey:
    """pi returning the value of one attribute."""

    attr: object

    def __post_init__(self):
        if isinstance(self.attr, str):
            object.__setattr__(self, "attr", Symbol(self.attr))


@dataclass(frozen=True)
class ProjectKeyTuple:
    """pi returning a composite of several attribute values."""

    attrs: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "attrs",
            tuple(Symbol(a) if isinstance(a, str) else a for a in self.attrs),
        )


@dataclass(frozen=True)
class SurrogateCounter:
    """pi drawing the next engine-unique key from an allocator."""


KeySpec = Union[ProjectKey, ProjectKeyTuple, SurrogateCounter]

POLICY_DECLARED = "declared"
POLICY_COMPUTED = "computed"
POLICY_SURROGATE = "surrogate"


@dataclass(frozen=True)
class KeyPolicy:
    kind: str = POLICY_DECLARED
    pi: Optional[KeySpec] = None

    def __post_init__(self):
        if self.kind not in (POLICY_DECLARED, POLICY_COMPUTED, POLICY_SURROGATE):
            raise SchemaError(f"unknown key policy {self.kind!r}")
        if self.kind == POLICY_COMPUTED and not isinstance(
            self.pi, (ProjectKey, ProjectKeyTuple)
        ):
            raise SchemaError("computed key policy needs a projection spec")
        if self.kind != POLICY_COMPUTED and self.pi is not None:
            raise SchemaError(f"{self.kind} key policy takes no spec")


DECLARED = KeyPolicy(POLICY_DECLARED)
SURROGATE = KeyPolicy(POLICY_SURROGATE)


def computed(pi: Union[KeySpec, str, tuple]) -> KeyPolicy:
    if isinstance(pi, str):
        pi = ProjectKey(pi)
    elif isinstance(pi, tuple):
        pi = ProjectKeyTuple(pi)
    return KeyPolicy(POLICY_COMPUTED, pi)


class SurrogateAllocator:
    """Monotone counter handing out never-reused surrogate keys."""

    __slots__ = ("_next",)

    def __init__(self, start: int = 0):
        self._next = start

    def peek(self) -> int:
        return self._next

    def allocate(self) -> int:
        n = self._next
        self._next = n + 1
        return n


def compute_key(pi: KeySpec, value, allocator: Optional[SurrogateAllocator] = None) -> Key:
    """Apply a key computation spec to a value.

    Projection specs need a map value carrying the named attributes; the
    surrogate spec draws from `allocator` (a fresh one if omitted, whose
    first key is 0).
    """
    if isinstance(pi, ProjectKey):
        if not isinstance(value, Map):
            raise KeyComputationError("key computation failed: value is not a map")
        v = value.get(pi.attr)
        if v is None:
            raise KeyComputationError(f"key computation failed: no attribute {pi.attr!r}")
        scalar_kind(v)
        return Key(v, "computed")
    if isinstance(pi, ProjectKeyTuple):
        if not isinstance(value, Map):
            raise KeyComputationError("key computation failed: value is not a map")
        parts = []
        for a in pi.attrs:
            v = value.get(a)
            if v is None:
                raise KeyComputationError(f"key computation failed: no attribute {a!r}")
            parts.append(v)
        return Key(tuple(parts), "computed")
    if isinstance(pi, SurrogateCounter):
        alloc = allocator if allocator is not None else SurrogateAllocator()
        return Key(alloc.allocate(), "surrogate")
    raise KeyComputationError(f"unsupported key spec {pi!r}")


# --------------------------------------------------------------------------
# Map types

@dataclass(frozen=True)
class TypeEntry:
    key: object
    domain: Domain
    optional: bool = False

    def __post_init__(self):
        if isinstance(self.key, str):
            object.__setattr__(self, "key", Symbol(self.key))
        scalar_kind(self.key)


@dataclass(frozen=True)
class MapType:
    """A constraint descriptor over a single map.

    `entries` are the declared keys (CK) with their value domains (CVD);
    `value_domain` uniformly constrains every value regardless of key
    (how relation types say "all members share one tuple type"); when
    entries are declared and no uniform domain is given, the key set is
    closed. Optional entries may be omitted entirely by a conforming map;
    there is no NULL.
    """

    n: Optional[int] = None
    key_domain: Optional[ScalarDomain] = None
    entries: tuple = ()
    value_domain: Optional[Domain] = None
    constraints: tuple = ()
    key_policy: KeyPolicy = DECLARED

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.key_domain is not None and not isinstance(self.key_domain, ScalarDomain):
            raise SchemaError("key domains are restricted to scalar variants")
        seen = set()
        for e in self.entries:
            if not isinstance(e, TypeEntry):
                raise SchemaError("entries must be TypeEntry instances")
            nk = norm_scalar(e.key)
            if nk in seen:
                raise SchemaError(f"duplicate declared key {e.key!r}")
            seen.add(nk)
        if self.n is not None:
            if self.n < 0:
                raise SchemaError("n constraint must be non-negative")
            if self.entries:
                mand = sum(1 for e in self.entries if not e.optional)
                if not (mand <= self.n <= len(self.entries)):
                    raise SchemaError(
                        f"n={self.n} outside [{mand}, {len(self.entries)}] "
                        "spanned by mandatory and declared keys"
                    )

    # -- introspection ----------------------------------------------------

    def entry(self, key) -> Optional[TypeEntry]:
        if isinstance(key, str):
            key = Symbol(key)
        nk = norm_scalar(key)
        for e in self.entries:
            if norm_scalar(e.key) == nk:
                return e
        return None

    def declared_keys(self) -> tuple:
        return tuple(e.key for e in self.entries)

    def mandatory_keys(self) -> tuple:
        return tuple(e.key for e in self.entries if not e.optional)

    @property
    def closed(self) -> bool:
        """Whether the declared keys are the only admissible keys."""
        return bool(self.entries) and self.value_domain is None

    def domain_for(self, key) -> Optional[Domain]:
        e = self.entry(key)
        if e is not None:
            return e.domain
        return self.value_domain


def rmt_entries(*pairs, optional=()) -> tuple:
    opt = {Symbol(o) if isinstance(o, str) else o for o in optional}
    out = []
    for k, d in pairs:
        key = Symbol(k) if isinstance(k, str) else k
        out.append(TypeEntry(key, _as_domain(d), key in opt))
    return tuple(out)


def _as_domain(d) -> Domain:
    if isinstance(d, str):
        return ScalarDomain(d)
    if isinstance(d, MapType):
        return MapTypeDomain(d)
    if isinstance(d, (ScalarDomain, MapTypeDomain, EnumerationDomain, ForeignKeyDomain)):
        return d
    raise SchemaError(f"cannot interpret {d!r} as a domain")


def rmt(entries, optional=(), constraints=(), key_policy: KeyPolicy = DECLARED) -> MapType:
    """A tuple type: fixed arity, symbolic keys, all keys declared.

    `entries` is a sequence of (name, domain) pairs; names listed in
    `optional` carry the bracket mark and may be omitted by instances.
    """
    ents = rmt_entries(*entries, optional=optional)
    if not ents:
        raise SchemaError("a tuple type needs at least one declared key")
    return MapType(
        n=len(ents),
        key_domain=ScalarDomain("symbol"),
        entries=ents,
        constraints=tuple(constraints),
        key_policy=key_policy,
    )


def rhomt(
    element: MapType,
    key_domain: Optional[ScalarDomain] = None,
    key_policy: KeyPolicy = DECLARED,
) -> MapType:
    """A relation type: every value conforms to one element tuple type."""
    return MapType(
        key_domain=key_domain,
        value_domain=MapTypeDomain(element),
        key_policy=key_policy,
    )


def is_rmt(t: MapType) -> bool:
    return (
        t.n is not None
        and t.n > 0
        and t.key_domain == ScalarDomain("symbol")
        and bool(t.entries)
        and t.value_domain is None
    )


def is_rhomt(t: MapType) -> bool:
    return isinstance(t.value_domain, MapTypeDomain) and not t.entries


def element_type(t: MapType) -> MapType:
    if not isinstance(t.value_domain, MapTypeDomain):
        raise SchemaError("not a relation type: no uniform element type")
    return t.value_domain.map_type


# --------------------------------------------------------------------------
# Order

def order(t: MapType) -> int:
    """Nesting depth of a type: 0 when no domain is a map type, else one
    more than the deepest nested type. Links do not nest."""
    return _order(t, [])


def _order(t: MapType, stack: list) -> int:
    for seen in stack:
        if seen is t:
            raise CyclicTypeError("cyclic map type")
    stack.append(t)
    try:
        deepest = -1
        for e in t.entries:
            if isinstance(e.domain, MapTypeDomain):
                o = _order(e.domain.map_type, stack)
                if o > deepest:
                    deepest = o
        if isinstance(t.value_domain, MapTypeDomain):
            o = _order(t.value_domain.map_type, stack)
            if o > deepest:
                deepest = o
        return deepest + 1
    finally:
        stack.pop()


# --------------------------------------------------------------------------
# Structural subset (the "constraining" test)

def schema_subset(sub: MapType, sup: MapType) -> bool:
    """Whether `sub` constrains a subset of what `sup` does: every
    declared key of `sub` appears in `sup` with the same (or nested
    subset) domain, and uniform domains agree."""
    if sub is sup or sub == sup:
        return True
    for e in sub.entries:
        other = sup.entry(e.key)
        if other is None:
            return False
        if not _domain_subset(e.domain, other.domain):
            return False
    if sub.value_domain is not None:
        if sup.value_domain is None:
            return False
        if not _domain_subset(sub.value_domain, sup.value_domain):
            return False
    return True


def _domain_subset(a: Domain, b: Domain) -> bool:
    if a == b:
        return True
    if isinstance(a, MapTypeDomain) and isinstance(b, MapTypeDomain):
        return schema_subset(a.map_type, b.map_type)
    return False


def occurs_within(needle: MapType, hay: MapType) -> bool:
    """Whether `needle` is `hay` itself, a subset of it, or nested
    anywhere inside it (a relation type occurs within its database
    schema)."""
    if schema_subset(needle, hay):
        return True
    for e in hay.entries:
        if isinstance(e.domain, MapTypeDomain) and occurs_within(needle, e.domain.map_type):
            return True
    if isinstance(hay.value_domain, MapTypeDomain):
        if occurs_within(needle, hay.value_domain.map_type):
            return True
    return False
