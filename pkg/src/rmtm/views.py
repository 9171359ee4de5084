"""The functional map-view algebra: immutable expression trees from map
to map, at any nesting depth.

Every operation here builds a `ViewExpr` node; nothing is parsed from
text, parameters are typed data, and every key or function a parameter
names is checked when the node is constructed — a parameter that merely
*contains* query-looking text stays an ordinary literal, which is what
makes injection impossible by construction.

Views are classified constraining (output schema and entries are subsets
of the input) or transforming (new schema), and increase / decrease /
same-order by the nesting-depth delta.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .core import Map, Ref, Symbol, norm_scalar, scalar_kind
from .errors import SchemaError, ViewConstructionError
from .validate import validate
from .ybr import build_join_forest
from .types import (
    Domain,
    EnumerationDomain,
    ForeignKeyDomain,
    KeyPolicy,
    MapType,
    MapTypeDomain,
    POLICY_COMPUTED,
    POLICY_SURROGATE,
    ProjectKey,
    ProjectKeyTuple,
    ScalarDomain,
    TypeEntry,
    computed,
    is_rhomt,
    order,
    element_type as rhomt_element,
    schema_subset,
    occurs_within,
)

# --------------------------------------------------------------------------
# Registered functions (host-extensible, referenced by name)

class _Registry:
    def __init__(self):
        self._fns: dict = {}

    def register(self, name: str, fn: Callable, result: Union[str, Callable]):
        """Register a pure function usable inside compute and predicate
        specs. `result` is a scalar kind or a callable from argument
        kinds to a kind (raising ViewConstructionError on mismatch)."""
        self._fns[name] = (fn, result)

    def lookup(self, name: str):
        if name not in self._fns:
            raise ViewConstructionError(f"no registered function {name!r}")
        return self._fns[name]


registry = _Registry()


def _numeric_result(name):
    def rule(kinds):
        if not kinds or any(k not in ("int", "float") for k in kinds):
            raise ViewConstructionError(f"{name} needs numeric arguments, got {kinds}")
        return "float" if "float" in kinds else "int"
    return rule


def _to_text(v):
    k = scalar_kind(v)
    if k == "text":
        return v
    if k == "symbol":
        return v.name
    if k == "bool":
        return "true" if v else "false"
    if k == "date":
        return v.isoformat()
    return str(v)


registry.register("add", lambda *a: sum(a), _numeric_result("add"))
registry.register("sub", lambda a, b: a - b, _numeric_result("sub"))
registry.register("mul", lambda a, b: a * b, _numeric_result("mul"))
registry.register("div", lambda a, b: a / b, lambda kinds: _numeric_result("div")(kinds) and "float")
registry.register("neg", lambda a: -a, _numeric_result("neg"))
registry.register(
    "concat",
    lambda *a: "".join(a),
    lambda kinds: "text" if all(k == "text" for k in kinds) else _bad_concat(kinds),
)
registry.register("to_text", _to_text, lambda kinds: "text")
registry.register("length", len, lambda kinds: "int" if kinds == ["text"] else _bad_len(kinds))


def _bad_concat(kinds):
    raise ViewConstructionError(f"concat needs text arguments, got {kinds}")


def _bad_len(kinds):
    raise ViewConstructionError(f"length needs one text argument, got {kinds}")


def register_function(name: str, fn: Callable, result: Union[str, Callable]):
    registry.register(name, fn, result)


# --------------------------------------------------------------------------
# Terms and predicates

@dataclass(frozen=True)
class KeyTerm:
    """The value under an attribute path of the element being examined;
    path steps that cross link domains follow the link."""

    path: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "path",
            tuple(Symbol(p) if isinstance(p, str) else p for p in self.path),
        )


@dataclass(frozen=True)
class EntryKeyTerm:
    """The entry's own key. Rejected at construction when the container
    hides its identities (surrogate keys are not queryable)."""


@dataclass(frozen=True)
class Lit:
    value: object

    def __post_init__(self):
        scalar_kind(self.value)


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple


def key(*path) -> KeyTerm:
    return KeyTerm(tuple(path))


def entry_key() -> EntryKeyTerm:
    return EntryKeyTerm()


def lit(v) -> Lit:
    return Lit(v)


def fn(name, *args) -> Func:
    return Func(name, tuple(_as_term(a) for a in args))


def _as_term(x):
    if isinstance(x, (KeyTerm, EntryKeyTerm, Lit, Func)):
        return x
    return Lit(x)


_CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object

    def __post_init__(self):
        if self.op not in _CMP_OPS:
            raise ViewConstructionError(f"unknown comparison {self.op!r}")
        object.__setattr__(self, "left", _as_term(self.left))
        object.__setattr__(self, "right", _as_term(self.right))


@dataclass(frozen=True)
class InSet:
    term: object
    literals: tuple

    def __post_init__(self):
        object.__setattr__(self, "term", _as_term(self.term))
        for v in self.literals:
            scalar_kind(v)


@dataclass(frozen=True)
class And:
    parts: tuple


@dataclass(frozen=True)
class Or:
    parts: tuple


@dataclass(frozen=True)
class Not:
    part: object


@dataclass(frozen=True)
class TruePred:
    pass


Predicate = Union[Cmp, InSet, And, Or, Not, TruePred]


def eq(l, r) -> Cmp:
    return Cmp("==", l, r)


def ne(l, r) -> Cmp:
    return Cmp("!=", l, r)


def lt(l, r) -> Cmp:
    return Cmp("<", l, r)


def le(l, r) -> Cmp:
    return Cmp("<=", l, r)


def gt(l, r) -> Cmp:
    return Cmp(">", l, r)


def ge(l, r) -> Cmp:
    return Cmp(">=", l, r)


def and_(*parts) -> And:
    return And(tuple(parts))


def or_(*parts) -> Or:
    return Or(tuple(parts))


def not_(p) -> Not:
    return Not(p)


def in_set(term, literals) -> InSet:
    return InSet(term, tuple(literals))


@dataclass(frozen=True)
class ComputeSpec:
    """Named output keys with the terms that produce them."""

    outputs: tuple  # ((Symbol, Term), ...)

    def __post_init__(self):
        object.__setattr__(
            self,
            "outputs",
            tuple(
                (Symbol(k) if isinstance(k, str) else k, _as_term(t))
                for k, t in self.outputs
            ),
        )


def compute_fields(**outputs) -> ComputeSpec:
    return ComputeSpec(tuple(outputs.items()))


# --------------------------------------------------------------------------
# Join / reduction / normalization specs

@dataclass(frozen=True)
class LinkEdge:
    """`source`'s attributes `keys` reference entries of `target`."""

    source: tuple
    keys: tuple
    target: tuple

    def __post_init__(self):
        object.__setattr__(self, "source", _as_path(self.source))
        object.__setattr__(
            self, "keys",
            tuple(Symbol(k) if isinstance(k, str) else k for k in self.keys),
        )
        object.__setattr__(self, "target", _as_path(self.target))


def link(source, key_name, target) -> LinkEdge:
    return LinkEdge(_as_path(source), (key_name,), _as_path(target))


@dataclass(frozen=True)
class EntitySpec:
    name: object
    attrs: tuple
    key: tuple

    def __post_init__(self):
        object.__setattr__(self, "name", Symbol(self.name) if isinstance(self.name, str) else self.name)
        object.__setattr__(self, "attrs", tuple(Symbol(a) if isinstance(a, str) else a for a in self.attrs))
        object.__setattr__(self, "key", tuple(Symbol(a) if isinstance(a, str) else a for a in self.key))
        for k in self.key:
            if k not in self.attrs:
                raise ViewConstructionError(f"entity key {k!r} must be among its attributes")


@dataclass(frozen=True)
class FactorizeSpec:
    central: object
    entities: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "central",
            Symbol(self.central) if isinstance(self.central, str) else self.central,
        )


@dataclass(frozen=True)
class Replication:
    kind: str = "none"  # none | full | partial
    copies: Optional[int] = None
    assignments: tuple = ()  # ((partition id, (extra ids...)), ...)

    def __post_init__(self):
        if self.kind not in ("none", "full", "partial"):
            raise ViewConstructionError(f"unknown replication {self.kind!r}")
        if self.kind == "full" and (self.copies is None or self.copies < 1):
            raise ViewConstructionError("full replication needs a positive copy count")


def _as_path(p) -> tuple:
    if isinstance(p, (str, Symbol)):
        p = (p,)
    return tuple(Symbol(c) if isinstance(c, str) else c for c in p)


# --------------------------------------------------------------------------
# View expression nodes

@dataclass(frozen=True)
class ViewExpr:
    input_type: MapType = field(repr=False)
    output_type: MapType = field(repr=False)

    @property
    def kind(self) -> str:
        return type(self).__name__.lower()

    def children(self) -> tuple:
        c = getattr(self, "child", None)
        return (c,) if c is not None else ()

    def contains_mutation(self) -> bool:
        if isinstance(self, Mutation):
            return True
        return any(c.contains_mutation() for c in self.children())


@dataclass(frozen=True)
class Source(ViewExpr):
    """Identity leaf: the map the expression is evaluated against."""


@dataclass(frozen=True)
class Filter(ViewExpr):
    child: ViewExpr = None
    path: tuple = ()
    predicate: object = None
    plans: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class Project(ViewExpr):
    child: ViewExpr = None
    path: tuple = ()
    keys: tuple = ()
    distinct: bool = False
    element_wise: bool = field(default=False, repr=False)


@dataclass(frozen=True)
class Compute(ViewExpr):
    child: ViewExpr = None
    path: tuple = ()
    spec: ComputeSpec = None
    plans: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class Rename(ViewExpr):
    child: ViewExpr = None
    path: tuple = ()
    mapping: tuple = ()
    element_wise: bool = field(default=False, repr=False)


@dataclass(frozen=True)
class Join(ViewExpr):
    child: ViewExpr = None
    join_kind: str = "inner"  # inner | semi | outer | cross
    inputs: tuple = ()
    on: object = None  # tuple[LinkEdge] or Predicate or None
    outer_sides: tuple = ()
    preserved: tuple = ()
    plans: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class SetOp(ViewExpr):
    child: ViewExpr = None
    op: str = "union"  # union | intersect | minus
    inputs: tuple = ()


@dataclass(frozen=True)
class AggSpec:
    func: str  # count | sum | min | max | avg
    source: Optional[object] = None  # None only for count
    out: object = "value"

    def __post_init__(self):
        if self.func not in ("count", "sum", "min", "max", "avg"):
            raise ViewConstructionError(f"unknown aggregate {self.func!r}")
        if isinstance(self.source, str):
            object.__setattr__(self, "source", Symbol(self.source))
        if isinstance(self.out, str):
            object.__setattr__(self, "out", Symbol(self.out))
        if self.func != "count" and self.source is None:
            raise ViewConstructionError(f"{self.func} needs a source key")


@dataclass(frozen=True)
class GroupSpec:
    name: object
    path: tuple
    by: tuple
    aggs: tuple

    def __post_init__(self):
        object.__setattr__(self, "name", Symbol(self.name) if isinstance(self.name, str) else self.name)
        object.__setattr__(self, "path", _as_path(self.path) if self.path else ())
        object.__setattr__(self, "by", tuple(Symbol(b) if isinstance(b, str) else b for b in self.by))


@dataclass(frozen=True)
class Aggregate(ViewExpr):
    child: ViewExpr = None
    groups: tuple = ()


@dataclass(frozen=True)
class Partition(ViewExpr):
    child: ViewExpr = None
    path: tuple = ()
    pf: object = None  # Term or None (replication-only)
    replication: Replication = Replication()
    plan: object = field(default=None, repr=False)


@dataclass(frozen=True)
class Denormalize(ViewExpr):
    child: ViewExpr = None
    links: tuple = ()
    root: tuple = ()


@dataclass(frozen=True)
class Factorize(ViewExpr):
    child: ViewExpr = None
    spec: FactorizeSpec = None
    path: tuple = ()


@dataclass(frozen=True)
class SubdbReduce(ViewExpr):
    child: ViewExpr = None
    mode: str = "inner"
    filters: tuple = ()  # ((path, predicate, plans), ...)
    links: tuple = ()
    outer_inputs: tuple = ()
    tree: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class Mutation(ViewExpr):
    child: ViewExpr = None
    op: str = "insert"  # insert | update | delete
    path: tuple = ()
    payload: object = None
    explicit_key: object = None
    predicate: object = None
    spec: ComputeSpec = None
    relmap_type: object = None
    plans: tuple = field(default=(), repr=False)
    spec_plans: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class ViewClass:
    shape: str  # constraining | transforming
    order_delta: str  # increase | decrease | same


# --------------------------------------------------------------------------
# Construction helpers

def source(input_type: MapType) -> Source:
    return Source(input_type, input_type)


def _as_view(src) -> ViewExpr:
    if isinstance(src, ViewExpr):
        return src
    if isinstance(src, MapType):
        return source(src)
    # duck-type: schemas and databases offer a map type
    mt = getattr(src, "map_type", None)
    if isinstance(mt, MapType):
        return source(mt)
    sch = getattr(src, "schema", None)
    if sch is not None and isinstance(getattr(sch, "map_type", None), MapType):
        return source(sch.map_type)
    raise ViewConstructionError(f"cannot use {src!r} as a view input")


def _type_at(t: MapType, path: tuple, root: MapType) -> MapType:
    """Navigate declared keys; link-domain steps land on the target's
    relation type resolved against the root type."""
    cur = t
    for comp in path:
        e = cur.entry(comp)
        if e is None:
            raise ViewConstructionError(f"no declared key {comp!r} on this level")
        d = e.domain
        if isinstance(d, MapTypeDomain):
            cur = d.map_type
        elif isinstance(d, (EnumerationDomain, ForeignKeyDomain)):
            cur = _target_type(root, d.target)
        else:
            raise ViewConstructionError(f"{comp!r} is scalar-typed, cannot navigate into it")
    return cur


def _target_type(root: MapType, target: tuple) -> MapType:
    cur = root
    for comp in target:
        e = cur.entry(comp)
        if e is None or not isinstance(e.domain, MapTypeDomain):
            raise ViewConstructionError(
                "link target " + "/".join(str(c) for c in target) + " is not in scope"
            )
        cur = e.domain.map_type
    return cur


def _is_relation_like(t: MapType) -> bool:
    return isinstance(t.value_domain, MapTypeDomain)


def _resolve_term(term, et: MapType, container: Optional[MapType], root: MapType):
    """Type-check a term against the element type; returns
    (plan-or-spec, scalar kind or None when statically unknown)."""
    if isinstance(term, Lit):
        return ("lit", term.value), scalar_kind(term.value)
    if isinstance(term, EntryKeyTerm):
        if container is not None and container.key_policy.kind == POLICY_SURROGATE:
            raise ViewConstructionError("entry keys are hidden here (surrogate identity)")
        kd = container.key_domain if container is not None else None
        return ("entry_key",), (kd.kind if kd is not None else None)
    if isinstance(term, KeyTerm):
        steps = []
        cur = et
        last_kind = None
        for i, comp in enumerate(term.path):
            e = cur.entry(comp)
            if e is None:
                raise ViewConstructionError(f"no key {comp!r} in the element type")
            d = e.domain
            terminal = i == len(term.path) - 1
            if isinstance(d, ScalarDomain):
                if not terminal:
                    raise ViewConstructionError(f"{comp!r} is scalar, cannot navigate further")
                steps.append((comp, None))
                last_kind = d.kind
            elif isinstance(d, (EnumerationDomain, ForeignKeyDomain)):
                if terminal:
                    raise ViewConstructionError(
                        f"{comp!r} is a link; compare one of its attributes instead"
                    )
                steps.append((comp, d.target))
                tt = _target_type(root, d.target)
                if not _is_relation_like(tt):
                    raise ViewConstructionError(f"link target of {comp!r} is not a relation")
                cur = rhomt_element(tt)
            elif isinstance(d, MapTypeDomain):
                steps.append((comp, None))
                if terminal:
                    raise ViewConstructionError(
                        f"{comp!r} is map-valued; name one of its attributes"
                    )
                cur = d.map_type
            else:
                raise ViewConstructionError(f"cannot navigate {comp!r}")
        return ("key", tuple(steps)), last_kind
    if isinstance(term, Func):
        fn_, result = registry.lookup(term.name)
        plans = []
        kinds = []
        for a in term.args:
            p, k = _resolve_term(a, et, container, root)
            plans.append(p)
            kinds.append(k)
        if callable(result):
            kind = result(kinds)
        else:
            kind = result
        return ("func", term.name, tuple(plans)), kind
    raise ViewConstructionError(f"unknown term {term!r}")


def _resolve_predicate(p, et: MapType, container: Optional[MapType], root: MapType):
    """Type-check a predicate, returning an evaluable plan tree."""
    if isinstance(p, TruePred):
        return ("true",)
    if isinstance(p, Cmp):
        lp, lk = _resolve_term(p.left, et, container, root)
        rp, rk = _resolve_term(p.right, et, container, root)
        if lk is not None and rk is not None and lk != rk:
            raise ViewConstructionError(
                f"type mismatch in comparison: {lk} {p.op} {rk}"
            )
        if p.op not in ("==", "!=") and lk == "bool":
            raise ViewConstructionError("booleans are not ordered")
        return ("cmp", p.op, lp, rp)
    if isinstance(p, InSet):
        tp, tk = _resolve_term(p.term, et, container, root)
        for v in p.literals:
            if tk is not None and scalar_kind(v) != tk:
                raise ViewConstructionError(
                    f"membership literal {v!r} is {scalar_kind(v)}, key is {tk}"
                )
        return ("in", tp, tuple(norm_scalar(v) for v in p.literals))
    if isinstance(p, And):
        return ("and", tuple(_resolve_predicate(q, et, container, root) for q in p.parts))
    if isinstance(p, Or):
        return ("or", tuple(_resolve_predicate(q, et, container, root) for q in p.parts))
    if isinstance(p, Not):
        return ("not", _resolve_predicate(p.part, et, container, root))
    raise ViewConstructionError(f"unknown predicate {p!r}")


def _term_kind(term, et, container, root):
    return _resolve_term(term, et, container, root)[1]


def _rebuild(t: MapType, **kw) -> MapType:
    base = dict(
        n=t.n, key_domain=t.key_domain, entries=t.entries,
        value_domain=t.value_domain, constraints=t.constraints,
        key_policy=t.key_policy,
    )
    base.update(kw)
    return MapType(**base)


def _replace_at(root_t: MapType, path: tuple, new_leaf: MapType) -> MapType:
    """Rebuild a type with the node at `path` replaced."""
    if not path:
        return new_leaf
    head, rest = path[0], path[1:]
    entries = []
    for e in root_t.entries:
        if norm_scalar(e.key) == norm_scalar(head):
            if not isinstance(e.domain, MapTypeDomain):
                raise ViewConstructionError(f"cannot rewrite through {head!r}")
            inner = _replace_at(e.domain.map_type, rest, new_leaf)
            entries.append(TypeEntry(e.key, MapTypeDomain(inner), e.optional))
        else:
            entries.append(e)
    return _rebuild(root_t, entries=tuple(entries))


# --------------------------------------------------------------------------
# Constructors for each operation

def make_filter(src, path, predicate) -> Filter:
    """Constraining, same-order: keep the entries of the map at `path`
    that satisfy the predicate; keys are preserved."""
    child = _as_view(src)
    path = _as_path(path) if path else ()
    root = child.output_type
    target = _type_at(root, path, root)
    if _is_relation_like(target):
        et = rhomt_element(target)
    else:
        # filtering the entries of a declared-key map (e.g. whole relations
        # out of a database): the entry values have no common tuple type,
        # so only entry-key predicates can be checked
        et = MapType()
    plan = _resolve_predicate(predicate, et, target, root)
    out = _type_at(root, path, root)
    return Filter(child.input_type, out, child, path, predicate, (plan,))


def make_project(src, path, keys, distinct: bool = False) -> Project:
    """Constraining on schema. On a relation, reduce every element map to
    the named keys (`distinct=True` re-keys by the projected value, so
    duplicates collapse); on a declared-key map (a tuple, a database),
    keep the named keys of the map itself."""
    child = _as_view(src)
    path = _as_path(path) if path else ()
    root = child.output_type
    target = _type_at(root, path, root)
    keys = tuple(Symbol(k) if isinstance(k, str) else k for k in keys)
    if not keys:
        raise ViewConstructionError("projection needs at least one key")

    if _is_relation_like(target):
        et = rhomt_element(target)
        kept = _project_entries(et, keys, target)
        all_mandatory = all(not e.optional for e in kept)
        if distinct and all_mandatory:
            pi = ProjectKey(keys[0]) if len(keys) == 1 else ProjectKeyTuple(keys)
            policy = KeyPolicy(POLICY_COMPUTED, pi)
            key_domain = None
        elif distinct:
            policy = KeyPolicy(POLICY_SURROGATE)
            key_domain = ScalarDomain("int")
        else:
            policy = target.key_policy
            key_domain = target.key_domain
        new_et = MapType(
            n=len(kept), key_domain=ScalarDomain("symbol"), entries=kept,
            key_policy=et.key_policy,
        )
        out = MapType(
            key_domain=key_domain, value_domain=MapTypeDomain(new_et),
            key_policy=policy,
        )
        return Project(child.input_type, out, child, path, keys, distinct, True)

    kept = _project_entries(target, keys, target)
    out = _rebuild(
        target, entries=kept, n=len(kept) if target.n is not None else None
    )
    return Project(child.input_type, out, child, path, keys, distinct, False)


def _project_entries(t: MapType, keys, container) -> tuple:
    if not t.entries:
        raise ViewConstructionError("projection target has no declared keys")
    hidden = container.key_policy.kind == POLICY_SURROGATE
    kept = []
    nkeys = {norm_scalar(k) for k in keys}
    for e in t.entries:
        if norm_scalar(e.key) in nkeys:
            kept.append(e)
            nkeys.discard(norm_scalar(e.key))
    if nkeys:
        missing = ", ".join(repr(k) for k in keys if norm_scalar(k) in nkeys)
        raise ViewConstructionError(f"no such key(s): {missing}")
    del hidden
    return tuple(kept)


def make_compute(src, spec: ComputeSpec, path=()) -> Compute:
    """Transforming, same-order: add or replace computed entries on every
    element of the relation at `path`."""
    child = _as_view(src)
    path = _as_path(path) if path else ()
    root = child.output_type
    target = _type_at(root, path, root)
    if not _is_relation_like(target):
        raise ViewConstructionError("compute runs over the elements of a relation")
    et = rhomt_element(target)
    plans = []
    new_entries = list(et.entries)
    for out_key, term in spec.outputs:
        plan, kind = _resolve_term(term, et, target, root)
        plans.append((out_key, plan))
        if kind is None:
            raise ViewConstructionError(
                f"cannot infer the type of computed key {out_key!r}"
            )
        optional = _term_can_be_absent(term, et)
        replaced = False
        for i, e in enumerate(new_entries):
            if norm_scalar(e.key) == norm_scalar(out_key):
                new_entries[i] = TypeEntry(out_key, ScalarDomain(kind), optional)
                replaced = True
                break
        if not replaced:
            new_entries.append(TypeEntry(out_key, ScalarDomain(kind), optional))
    new_et = _rebuild(et, entries=tuple(new_entries),
                      n=len(new_entries) if et.n is not None else None)
    out = _rebuild(target, value_domain=MapTypeDomain(new_et))
    return Compute(child.input_type, out, child, path, spec, tuple(plans))


def _term_can_be_absent(term, et: MapType) -> bool:
    if isinstance(term, KeyTerm):
        e = et.entry(term.path[0])
        return bool(e and e.optional)
    if isinstance(term, Func):
        return any(_term_can_be_absent(a, et) for a in term.args)
    return False


def make_rename(src, mapping, path=()) -> Rename:
    """Transforming, same-order: re-key. On a relation the element maps
    are re-keyed; on a declared-key map its own keys are renamed (a
    renamed relation keeps its content, and link domains that pointed at
    the old name follow it)."""
    child = _as_view(src)
    path = _as_path(path) if path else ()
    root = child.output_type
    target = _type_at(root, path, root)
    if isinstance(mapping, dict):
        mapping = tuple(mapping.items())
    mapping = tuple(
        (Symbol(a) if isinstance(a, str) else a, Symbol(b) if isinstance(b, str) else b)
        for a, b in mapping
    )

    element_wise = _is_relation_like(target)
    t = rhomt_element(target) if element_wise else target
    if not t.entries:
        raise ViewConstructionError("rename target has no declared keys")
    names = {norm_scalar(e.key) for e in t.entries}
    for old, new in mapping:
        if norm_scalar(old) not in names:
            raise ViewConstructionError(f"no such key {old!r}")
        names.discard(norm_scalar(old))
        if norm_scalar(new) in names:
            raise ViewConstructionError(f"rename collision on {new!r}")
        names.add(norm_scalar(new))

    lookup = {norm_scalar(a): b for a, b in mapping}
    renamed = tuple(
        TypeEntry(lookup.get(norm_scalar(e.key), e.key), e.domain, e.optional)
        for e in t.entries
    )
    new_t = _rebuild(t, entries=renamed)
    if element_wise:
        out = _rebuild(target, value_domain=MapTypeDomain(new_t))
    else:
        out = _retarget_links(new_t, mapping) if not path else new_t
    return Rename(child.input_type, out, child, path, mapping, element_wise)


def _retarget_links(t: MapType, mapping) -> MapType:
    """After renaming database-level keys, link domains that named the
    old keys follow the rename."""
    lookup = {norm_scalar(a): b for a, b in mapping}

    def fix_path(p):
        if p and norm_scalar(p[0]) in lookup:
            return (lookup[norm_scalar(p[0])],) + tuple(p[1:])
        return p

    def fix_domain(d):
        if isinstance(d, EnumerationDomain):
            return EnumerationDomain(fix_path(d.target))
        if isinstance(d, ForeignKeyDomain):
            return ForeignKeyDomain(fix_path(d.target), d.key_kind)
        if isinstance(d, MapTypeDomain):
            return MapTypeDomain(fix_type(d.map_type))
        return d

    def fix_type(tt: MapType) -> MapType:
        return _rebuild(
            tt,
            entries=tuple(TypeEntry(e.key, fix_domain(e.domain), e.optional) for e in tt.entries),
            value_domain=None if tt.value_domain is None else fix_domain(tt.value_domain),
        )

    return fix_type(t)


def make_join(src, kind, inputs, on=None, outer_sides=(), preserved=None) -> Join:
    """n-ary joins over relations of a database.

    inner/outer/cross are transforming (concatenated element type with
    input-name prefixes); semi is constraining and returns exactly one
    preserved input reduced to its participating entries. When the link
    attributes are swizzled, evaluation follows them directly instead of
    building hash indexes.
    """
    child = _as_view(src)
    root = child.output_type
    if kind not in ("inner", "semi", "outer", "cross"):
        raise ViewConstructionError(f"unknown join kind {kind!r}")
    inputs = tuple(_as_path(p) for p in inputs)
    if len(inputs) < 2:
        raise ViewConstructionError("joins need at least two inputs")
    if len({p[-1] for p in inputs}) != len(inputs):
        raise ViewConstructionError("join inputs must have distinct names (rename first)")
    rels = []
    for p in inputs:
        rt = _type_at(root, p, root)
        if not _is_relation_like(rt):
            raise ViewConstructionError(f"join input {p} is not a relation")
        rels.append((p, rt, rhomt_element(rt)))

    outer_sides = tuple(_as_path(p) for p in outer_sides)
    for p in outer_sides:
        if p not in inputs:
            raise ViewConstructionError("outer sides must be among the join inputs")
    if kind == "outer" and not outer_sides:
        raise ViewConstructionError("an outer join names its preserved sides")
    if kind != "outer" and outer_sides:
        raise ViewConstructionError("outer sides only apply to outer joins")

    if kind == "cross":
        if on is not None:
            raise ViewConstructionError("cross products take no condition")
    elif kind != "cross" and on is None:
        raise ViewConstructionError(f"{kind} joins need a link spec or predicate")

    plans = ()
    if isinstance(on, LinkEdge):
        on = (on,)
    if isinstance(on, (tuple, list)) and on and all(isinstance(e, LinkEdge) for e in on):
        on = tuple(on)
        _check_edges(on, {p: et for p, _, et in rels}, root)
    elif on is not None and not isinstance(on, (Cmp, InSet, And, Or, Not, TruePred)):
        raise ViewConstructionError("join condition must be link edges or a predicate")

    concat_et = _concat_type(rels, outer_sides) if kind in ("inner", "outer", "cross") else None
    if isinstance(on, (Cmp, InSet, And, Or, Not, TruePred)):
        check_et = concat_et if concat_et is not None else _concat_type(rels, ())
        plans = (_resolve_predicate(on, check_et, None, root),)

    if kind == "semi":
        if preserved is None:
            raise ViewConstructionError("semi joins name their preserved input")
        preserved = _as_path(preserved)
        if preserved not in inputs:
            raise ViewConstructionError("preserved input must be among the join inputs")
        out = _type_at(root, preserved, root)
        return Join(child.input_type, out, child, kind, inputs, on, (), preserved, plans)

    out = MapType(
        key_domain=ScalarDomain("int"),
        value_domain=MapTypeDomain(concat_et),
        key_policy=KeyPolicy(POLICY_SURROGATE),
    )
    return Join(child.input_type, out, child, kind, inputs, on, outer_sides, (), plans)


def _check_edges(edges, elements_by_path, root):
    for e in edges:
        if e.source not in elements_by_path or e.target not in elements_by_path:
            raise ViewConstructionError("link edges must connect join inputs")
        et = elements_by_path[e.source]
        for k in e.keys:
            ent = et.entry(k)
            if ent is None:
                raise ViewConstructionError(f"no key {k!r} on link source")
            if isinstance(ent.domain, (EnumerationDomain, ForeignKeyDomain)):
                if tuple(ent.domain.target) != tuple(e.target):
                    raise ViewConstructionError(
                        f"{k!r} links to {ent.domain.target}, not {e.target}"
                    )
            elif not isinstance(ent.domain, ScalarDomain):
                raise ViewConstructionError(f"{k!r} cannot act as a link attribute")


def _concat_type(rels, outer_sides) -> MapType:
    entries = []
    seen = set()
    outer_others = bool(outer_sides)
    for p, rt, et in rels:
        prefix = p[-1].name if isinstance(p[-1], Symbol) else str(p[-1])
        optional_side = outer_others and any(q != p for q in outer_sides)
        for e in et.entries:
            name = Symbol(f"{prefix}.{e.key.name if isinstance(e.key, Symbol) else e.key}")
            if norm_scalar(name) in seen:
                raise ViewConstructionError(f"ambiguous concatenated key {name!r}")
            seen.add(norm_scalar(name))
            entries.append(TypeEntry(name, e.domain, e.optional or optional_side))
    return MapType(
        n=len(entries), key_domain=ScalarDomain("symbol"), entries=tuple(entries)
    )


def make_set_op(src, op, inputs, key_mode: str = "preserve") -> SetOp:
    """n-ary union/intersect/minus over same-typed inputs; on databases
    the operation recurses name-wise."""
    child = _as_view(src)
    root = child.output_type
    if op not in ("union", "intersect", "minus"):
        raise ViewConstructionError(f"unknown set operation {op!r}")
    inputs = tuple(_as_path(p) for p in inputs)
    if len(inputs) < 2:
        raise ViewConstructionError("set operations need at least two inputs")
    types = [_type_at(root, p, root) for p in inputs]
    first = types[0]
    for t in types[1:]:
        if not _set_compatible(first, t):
            raise ViewConstructionError(
                "set operation inputs need compatible schemas (rename first)"
            )
    if key_mode != "preserve":
        raise ViewConstructionError("only key-preserving set semantics are implemented")
    return SetOp(child.input_type, first, child, op, inputs)


def _set_compatible(a: MapType, b: MapType) -> bool:
    if _is_relation_like(a) and _is_relation_like(b):
        return rhomt_element(a) == rhomt_element(b)
    return a == b


def make_aggregate(src, groups) -> Aggregate:
    """Grouped aggregation. One group returns a single relation; several
    groups return a database holding one separately-schemed relation per
    output name — no padding entries exist or are needed."""
    child = _as_view(src)
    root = child.output_type
    specs = []
    for g in groups:
        if not isinstance(g, GroupSpec):
            name, path, by, aggs = g
            g = GroupSpec(name, _as_path(path) if path else (), tuple(by),
                          tuple(a if isinstance(a, AggSpec) else AggSpec(*a) for a in aggs))
        specs.append(g)
    if not specs:
        raise ViewConstructionError("aggregation needs at least one group")
    names = [norm_scalar(g.name) for g in specs]
    if len(set(names)) != len(names):
        raise ViewConstructionError("duplicate aggregate output names")

    out_rts = []
    for g in specs:
        target = _type_at(root, g.path, root)
        if not _is_relation_like(target):
            raise ViewConstructionError("aggregation runs over the elements of a relation")
        et = rhomt_element(target)
        entries = []
        for b in g.by:
            e = et.entry(b)
            if e is None:
                raise ViewConstructionError(f"no grouping key {b!r}")
            if not isinstance(e.domain, ScalarDomain):
                raise ViewConstructionError(f"grouping key {b!r} must be scalar")
            entries.append(TypeEntry(b, e.domain, False))
        seen_out = {norm_scalar(b) for b in g.by}
        for a in g.aggs:
            if norm_scalar(a.out) in seen_out:
                raise ViewConstructionError(f"duplicate output key {a.out!r}")
            seen_out.add(norm_scalar(a.out))
            kind = _agg_kind(a, et)
            entries.append(TypeEntry(a.out, ScalarDomain(kind), False))
        out_et = MapType(
            n=len(entries), key_domain=ScalarDomain("symbol"), entries=tuple(entries)
        )
        if g.by:
            pi = ProjectKey(g.by[0]) if len(g.by) == 1 else ProjectKeyTuple(g.by)
            policy = KeyPolicy(POLICY_COMPUTED, pi)
            kd = None
        else:
            policy = KeyPolicy(POLICY_SURROGATE)
            kd = ScalarDomain("int")
        out_rts.append(MapType(key_domain=kd, value_domain=MapTypeDomain(out_et),
                               key_policy=policy))

    if len(specs) == 1:
        out = out_rts[0]
    else:
        out = MapType(entries=tuple(
            TypeEntry(g.name, MapTypeDomain(rt)) for g, rt in zip(specs, out_rts)
        ))
    return Aggregate(child.input_type, out, child, tuple(specs))


def _agg_kind(a: AggSpec, et: MapType) -> str:
    if a.func == "count":
        if a.source is not None:
            if et.entry(a.source) is None:
                raise ViewConstructionError(f"no key {a.source!r} to count")
        return "int"
    e = et.entry(a.source)
    if e is None:
        raise ViewConstructionError(f"no key {a.source!r} to aggregate")
    if not isinstance(e.domain, ScalarDomain):
        raise ViewConstructionError(f"cannot aggregate non-scalar {a.source!r}")
    k = e.domain.kind
    if a.func in ("sum", "avg") and k not in ("int", "float"):
        raise ViewConstructionError(f"{a.func} over non-numeric {a.source!r}")
    if a.func == "avg":
        return "float"
    return k


def make_partition(src, pf=None, path=(), replication: Replication = Replication()) -> Partition:
    """Increase view: split the map at `path` into a map of sub-maps
    named by the partition function; full replication yields copies,
    partial replication assigns extra homes per partition id. The inverse
    decrease is union."""
    child = _as_view(src)
    path = _as_path(path) if path else ()
    root = child.output_type
    target = _type_at(root, path, root)
    plan = None
    if replication.kind == "full":
        if pf is not None:
            raise ViewConstructionError("full replication copies the whole map; no partition function")
        out_inner = target
        kd = ScalarDomain("int")
    else:
        if pf is None:
            raise ViewConstructionError("partitioning needs a partition function")
        if isinstance(pf, (str, Symbol)):
            pf = KeyTerm((pf,))
        if not _is_relation_like(target):
            raise ViewConstructionError("partitioning runs over the elements of a relation")
        et = rhomt_element(target)
        plan, kind = _resolve_term(pf, et, target, root)
        if kind == "composite":
            raise ViewConstructionError("partition ids must be plain scalars")
        out_inner = target
        kd = ScalarDomain(kind) if kind is not None else None
    out = MapType(
        key_domain=kd,
        value_domain=MapTypeDomain(out_inner),
    )
    return Partition(child.input_type, out, child, path, pf, replication, plan)


def make_normalize(src, direction, spec=None, links=None, root_name=None, path=()) -> ViewExpr:
    """denormalize: inner-join a linked database down to one wide
    relation (decrease); factorize: split a wide relation into a linked
    database such that denormalize(factorize(m)) == m (increase)."""
    child = _as_view(src)
    root = child.output_type
    if direction == "denormalize":
        edges = _normalize_edges(root, spec, links)
        root_path = _denormalize_root(root, edges, root_name)
        wide_et, _ = _denormalize_type(root, edges, root_path)
        rt = _type_at(root, root_path, root)
        out = MapType(
            key_domain=rt.key_domain,
            value_domain=MapTypeDomain(wide_et),
            key_policy=rt.key_policy,
        )
        return Denormalize(child.input_type, out, child, edges, root_path)
    if direction == "factorize":
        if not isinstance(spec, FactorizeSpec):
            raise ViewConstructionError("factorize needs a FactorizeSpec")
        path = _as_path(path) if path else ()
        target = _type_at(root, path, root)
        if not _is_relation_like(target):
            raise ViewConstructionError("factorize runs over a relation")
        out = _factorize_type(target, spec)
        return Factorize(child.input_type, out, child, spec, path)
    raise ViewConstructionError(f"unknown direction {direction!r}")


def _normalize_edges(root: MapType, spec, links):
    if links is not None:
        return tuple(links)
    if isinstance(spec, FactorizeSpec):
        return tuple(
            LinkEdge((spec.central,), e.key, (e.name,)) for e in spec.entities
        )
    # derive from the schema's link domains
    edges = []
    for e in root.entries:
        if not isinstance(e.domain, MapTypeDomain):
            continue
        rt = e.domain.map_type
        if not _is_relation_like(rt):
            continue
        for a in rhomt_element(rt).entries:
            if isinstance(a.domain, (EnumerationDomain, ForeignKeyDomain)):
                edges.append(LinkEdge((e.key,), (a.key,), a.domain.target))
    return tuple(edges)


def _denormalize_root(root: MapType, edges, root_name):
    if root_name is not None:
        return _as_path(root_name)
    targets = {tuple(e.target) for e in edges}
    sources = {tuple(e.source) for e in edges}
    roots = [p for p in sources if p not in targets]
    if len(roots) == 1:
        return roots[0]
    if not edges:
        names = [e.key for e in root.entries if isinstance(e.domain, MapTypeDomain)]
        if len(names) == 1:
            return (names[0],)
    raise ViewConstructionError("cannot infer the central relation; pass root_name")


def _denormalize_type(root: MapType, edges, root_path):
    """The flat tuple type plus a merge plan.

    Foreign-key columns stay in the wide output as their underlying
    scalars; reference-valued link columns are consumed by their edges
    and drop out. A merged attribute name that would collide anywhere in
    the output is prefixed with its relation name (deterministically, on
    every colliding occurrence)."""
    rt = _type_at(root, root_path, root)
    if not _is_relation_like(rt):
        raise ViewConstructionError("denormalize root is not a relation")
    by_source = {}
    for e in edges:
        by_source.setdefault(tuple(e.source), []).append(e)
    covered = set()
    for e in edges:
        for k in e.keys:
            covered.add((tuple(e.source), norm_scalar(k)))

    # walk the absorb order once to find name collisions
    order_of_merge = []

    def walk(path):
        for e in by_source.get(tuple(path), ()):
            tt = _type_at(root, e.target, root)
            if not _is_relation_like(tt):
                raise ViewConstructionError("link target is not a relation")
            order_of_merge.append(e)
            walk(e.target)

    walk(root_path)

    tallies = {}
    root_et = rhomt_element(rt)
    for a in root_et.entries:
        if not isinstance(a.domain, EnumerationDomain):
            tallies[norm_scalar(a.key)] = tallies.get(norm_scalar(a.key), 0) + 1
    for e in order_of_merge:
        tet = rhomt_element(_type_at(root, e.target, root))
        drop = {norm_scalar(k) for k in e.keys}
        for a in tet.entries:
            if norm_scalar(a.key) in drop:
                continue
            if isinstance(a.domain, (EnumerationDomain, ForeignKeyDomain)):
                if (tuple(e.target), norm_scalar(a.key)) in covered:
                    continue  # consumed by a chained edge
            tallies[norm_scalar(a.key)] = tallies.get(norm_scalar(a.key), 0) + 1

    entries = []
    seen = set()

    def out_name(rel_path, a_key):
        if tallies.get(norm_scalar(a_key), 0) > 1:
            prefix = rel_path[-1]
            base = a_key.name if isinstance(a_key, Symbol) else str(a_key)
            pname = prefix.name if isinstance(prefix, Symbol) else str(prefix)
            return Symbol(f"{pname}.{base}")
        return a_key

    for a in root_et.entries:
        if isinstance(a.domain, EnumerationDomain):
            if (tuple(root_path), norm_scalar(a.key)) not in covered:
                raise ViewConstructionError(
                    f"{a.key!r} is a link not covered by the link spec"
                )
            continue
        dom = a.domain
        if isinstance(dom, ForeignKeyDomain):
            dom = _fk_scalar_domain(root, dom)
        name = out_name(root_path, a.key)
        if norm_scalar(name) in seen:
            raise ViewConstructionError(f"denormalization collision on {name!r}")
        seen.add(norm_scalar(name))
        entries.append(TypeEntry(name, dom, a.optional))

    merge_plan = []
    for e in order_of_merge:
        tet = rhomt_element(_type_at(root, e.target, root))
        drop = {norm_scalar(k) for k in e.keys}
        src_et = rhomt_element(_type_at(root, e.source, root))
        src_opt = any(
            src_et.entry(k) is not None and src_et.entry(k).optional for k in e.keys
        )
        added = []
        for a in tet.entries:
            if norm_scalar(a.key) in drop:
                continue
            dom = a.domain
            if isinstance(dom, (EnumerationDomain, ForeignKeyDomain)):
                if (tuple(e.target), norm_scalar(a.key)) in covered:
                    continue
                if isinstance(dom, EnumerationDomain):
                    raise ViewConstructionError(
                        f"{a.key!r} is a link not covered by the link spec"
                    )
                dom = _fk_scalar_domain(root, dom)
            if isinstance(dom, MapTypeDomain):
                raise ViewConstructionError(
                    "nested map attributes do not denormalize"
                )
            name = out_name(e.target, a.key)
            if norm_scalar(name) in seen:
                raise ViewConstructionError(f"denormalization collision on {name!r}")
            seen.add(norm_scalar(name))
            entries.append(TypeEntry(name, dom, a.optional or src_opt))
            added.append((a.key, name))
        merge_plan.append((e, tuple(added)))

    et = MapType(n=len(entries), key_domain=ScalarDomain("symbol"),
                 entries=tuple(entries))
    return et, tuple(merge_plan)


def _fk_scalar_domain(root: MapType, dom: ForeignKeyDomain) -> ScalarDomain:
    if dom.key_kind is not None:
        return ScalarDomain(dom.key_kind)
    tt = _target_type(root, dom.target)
    if tt.key_domain is not None:
        return tt.key_domain
    raise ViewConstructionError(
        "cannot type a foreign-key column without a declared key kind"
    )


def _factorize_type(target: MapType, spec: FactorizeSpec) -> MapType:
    et = rhomt_element(target)
    claimed = set()
    out_entries = []
    for ent in spec.entities:
        ent_entries = []
        for a in ent.attrs:
            e = et.entry(a)
            if e is None:
                raise ViewConstructionError(f"no key {a!r} to factor out")
            if not isinstance(e.domain, ScalarDomain):
                raise ViewConstructionError(f"only scalar attributes factor out ({a!r})")
            if norm_scalar(a) in claimed:
                raise ViewConstructionError(f"{a!r} claimed by two entities")
            if norm_scalar(a) not in {norm_scalar(k) for k in ent.key}:
                claimed.add(norm_scalar(a))
            ent_entries.append(TypeEntry(a, e.domain, False))
        pi = ProjectKey(ent.key[0]) if len(ent.key) == 1 else ProjectKeyTuple(ent.key)
        ent_et = MapType(n=len(ent_entries), key_domain=ScalarDomain("symbol"),
                         entries=tuple(ent_entries))
        out_entries.append(
            (ent.name, MapType(value_domain=MapTypeDomain(ent_et),
                               key_policy=KeyPolicy(POLICY_COMPUTED, pi)))
        )
    central_entries = []
    for e in et.entries:
        if norm_scalar(e.key) in claimed:
            continue
        dom = e.domain
        for ent in spec.entities:
            if len(ent.key) == 1 and norm_scalar(e.key) == norm_scalar(ent.key[0]):
                dom = ForeignKeyDomain((ent.name,),
                                       dom.kind if isinstance(dom, ScalarDomain) else None)
        central_entries.append(TypeEntry(e.key, dom, e.optional))
    central_et = MapType(n=len(central_entries), key_domain=ScalarDomain("symbol"),
                         entries=tuple(central_entries))
    central_rt = MapType(key_domain=target.key_domain,
                         value_domain=MapTypeDomain(central_et),
                         key_policy=target.key_policy)
    entries = [TypeEntry(spec.central, MapTypeDomain(central_rt))]
    entries += [TypeEntry(n, MapTypeDomain(rt)) for n, rt in out_entries]
    return MapType(entries=tuple(entries))


def make_subdb_reduce(src, mode="inner", filters=(), links=None, outer_inputs=()) -> SubdbReduce:
    """Constraining at database order: reduce every relation to the
    entries that participate in at least one full join result satisfying
    all filters (the classic semi-join full reduction). The join graph
    must be acyclic; cyclic graphs are refused, never silently joined."""
    child = _as_view(src)
    root = child.output_type
    if mode not in ("inner", "outer"):
        raise ViewConstructionError(f"unknown reduction mode {mode!r}")
    edges = _normalize_edges(root, None, links)
    rel_names = [e.key for e in root.entries if isinstance(e.domain, MapTypeDomain)]
    forest = build_join_forest([(n,) for n in rel_names], edges)

    fplans = []
    for p, pred in filters:
        p = _as_path(p)
        rt = _type_at(root, p, root)
        if not _is_relation_like(rt):
            raise ViewConstructionError("filters apply to relations")
        plan = _resolve_predicate(pred, rhomt_element(rt), rt, root)
        fplans.append((p, pred, plan))

    outer_inputs = tuple(_as_path(p) for p in outer_inputs)
    if mode == "inner" and outer_inputs:
        raise ViewConstructionError("outer inputs only apply to the outer mode")
    if mode == "outer" and not outer_inputs:
        raise ViewConstructionError("the outer mode names which inputs keep non-participants")
    for p in outer_inputs:
        if len(p) != 1 or root.entry(p[0]) is None:
            raise ViewConstructionError(f"unknown outer input {p}")

    out = root
    if mode == "outer":
        out = _subdb_outer_type(root, edges, outer_inputs)
    return SubdbReduce(child.input_type, out, child, mode, tuple(fplans), edges, outer_inputs, forest)


def _subdb_outer_type(root: MapType, edges, outer_inputs) -> MapType:
    outer_names = {norm_scalar(p[0]) for p in outer_inputs}
    link_keys = {}
    for e in edges:
        link_keys.setdefault(norm_scalar(e.source[0]), set()).update(
            norm_scalar(k) for k in e.keys
        )
    entries = []
    for e in root.entries:
        if norm_scalar(e.key) in outer_names and isinstance(e.domain, MapTypeDomain):
            rt = e.domain.map_type
            et = rhomt_element(rt)
            marks = link_keys.get(norm_scalar(e.key), set())
            new_entries = tuple(
                TypeEntry(a.key, a.domain, a.optional or norm_scalar(a.key) in marks)
                for a in et.entries
            )
            new_et = _rebuild(et, entries=new_entries)
            entries.append(TypeEntry(e.key, MapTypeDomain(
                _rebuild(rt, value_domain=MapTypeDomain(new_et))), e.optional))
        else:
            entries.append(e)
    return _rebuild(root, entries=tuple(entries))


def make_mutation(src, op, path=(), payload=None, key=None, predicate=None,
                  spec=None, relmap_type=None) -> Mutation:
    """In-place-only views: insert / update / delete at any depth (a
    tuple into a relation, a relation into a database). Rejected by
    out-of-place evaluation; referential damage surfaces when the engine
    validates the rewrite at commit."""
    child = _as_view(src)
    if not isinstance(child, Source):
        raise ViewConstructionError("mutations apply directly to the stored database")
    root = child.output_type
    path = _as_path(path) if path else ()
    target = _type_at(root, path, root)
    if op not in ("insert", "update", "delete"):
        raise ViewConstructionError(f"unknown mutation {op!r}")

    plans = ()
    spec_plans = ()
    out = root
    if op == "insert":
        if payload is None:
            raise ViewConstructionError("insert needs a payload")
        if _is_relation_like(target):
            et = rhomt_element(target)
            report = validate(payload, et, check_links=False)
            if not report.conforms:
                raise ViewConstructionError(
                    f"payload does not conform: {report.summary()}"
                )
            if target.key_policy.kind == POLICY_SURROGATE and key is not None:
                raise ViewConstructionError("this relation assigns identities internally")
            if target.key_policy.kind == "declared" and key is None:
                raise ViewConstructionError("declared-key relations need an explicit key")
        else:
            # schema-changing insert: a new relation under a database
            if key is None or relmap_type is None:
                raise ViewConstructionError(
                    "inserting a relation needs its name (key) and relation type"
                )
            if isinstance(key, str):
                key = Symbol(key)
            if target.entry(key) is not None:
                raise ViewConstructionError(f"{key!r} already exists")
            if not (isinstance(relmap_type, MapType) and _is_relation_like(relmap_type)):
                raise ViewConstructionError("relmap_type must be a relation type")
            report = validate(payload, relmap_type, check_links=False)
            if not report.conforms:
                raise ViewConstructionError(
                    f"payload does not conform: {report.summary()}"
                )
            new_entries = target.entries + (TypeEntry(key, MapTypeDomain(relmap_type)),)
            out = _replace_at(root, path, _rebuild(target, entries=new_entries))
    elif op == "update":
        if predicate is None or spec is None:
            raise ViewConstructionError("update needs a predicate and a compute spec")
        if not _is_relation_like(target):
            raise ViewConstructionError("update rewrites the elements of a relation")
        et = rhomt_element(target)
        plans = (_resolve_predicate(predicate, et, target, root),)
        sp = []
        for out_key, term in spec.outputs:
            if et.entry(out_key) is None:
                raise ViewConstructionError(
                    f"update writes {out_key!r}, which is not in the element type"
                )
            plan, kind = _resolve_term(term, et, target, root)
            want = et.entry(out_key).domain
            if isinstance(want, ScalarDomain) and kind is not None and kind != want.kind:
                raise ViewConstructionError(
                    f"update writes {kind} into {want.kind} key {out_key!r}"
                )
            sp.append((out_key, plan))
        spec_plans = tuple(sp)
    else:  # delete
        if predicate is None:
            raise ViewConstructionError("delete needs a predicate")
        if _is_relation_like(target):
            et = rhomt_element(target)
            plans = (_resolve_predicate(predicate, et, target, root),)
        else:
            # database level: dropping relations changes the schema, so the
            # predicate must statically name its victims
            names = _static_delete_names(predicate, target)
            keep = tuple(e for e in target.entries if norm_scalar(e.key) not in names)
            out = _replace_at(root, path, _rebuild(target, entries=keep))
            plans = (_resolve_predicate(predicate, MapType(), target, root),)
    return Mutation(child.input_type, out, child, op, path, payload, key, predicate,
                    spec, relmap_type, plans, spec_plans)


def _static_delete_names(pred, target: MapType) -> set:
    def names_of(p):
        if isinstance(p, Cmp) and p.op == "==":
            sides = (p.left, p.right)
            keys = [s for s in sides if isinstance(s, EntryKeyTerm)]
            lits = [s for s in sides if isinstance(s, Lit)]
            if len(keys) == 1 and len(lits) == 1:
                return {norm_scalar(lits[0].value)}
        if isinstance(p, Or):
            out = set()
            for q in p.parts:
                out |= names_of(q)
            return out
        raise ViewConstructionError(
            "dropping relations needs entry-key equality predicates"
        )
    names = names_of(pred)
    for n in names:
        if not any(norm_scalar(e.key) == n for e in target.entries):
            raise ViewConstructionError(f"no relation {n!r} to drop")
    return names


# --------------------------------------------------------------------------
# Classification

def classify(v: ViewExpr) -> ViewClass:
    """Shape from the structural schema-subset test; order delta from the
    nesting depths of the inferred input and output types."""
    d_in = order(v.input_type)
    d_out = order(v.output_type)
    if d_out > d_in:
        delta = "increase"
    elif d_out < d_in:
        delta = "decrease"
    else:
        delta = "same"
    shape = "constraining" if occurs_within(v.output_type, v.input_type) else "transforming"
    return ViewClass(shape, delta)


def eval_out_of_place(view, snapshot, *, keep_refs: bool = False):
    """Evaluate a view expression against a snapshot (or database),
    returning a detached copy. See `views_eval.eval_out_of_place`."""
    from .views_eval import eval_out_of_place as _impl
    return _impl(view, snapshot, keep_refs=keep_refs)
