"""Database schemas, databases, model classifiers, and pointer swizzling.

A database schema is itself a map type of order 2 (names to relation
types); a database is a map conforming to it. The classifiers decide, per
relation type, whether it is a relational variable, an entity type, a
relationship type, or a general map type — which makes "the relational
model and the ER model are restrictions of the map model" an executable
statement rather than a slogan.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import Map, Ref, Symbol, norm_scalar, scalar_kind
from .errors import (
    IdentityError,
    ReferentialViolationError,
    SchemaError,
)
from .serialize import parse_date
from .types import (
    EnumerationDomain,
    ForeignKeyDomain,
    MapType,
    MapTypeDomain,
    POLICY_COMPUTED,
    POLICY_DECLARED,
    POLICY_SURROGATE,
    ScalarDomain,
    SurrogateAllocator,
    TypeEntry,
    compute_key,
    element_type,
    is_rhomt,
)
from .validate import DANGLING, ValidationReport, Violation, resolve_path, validate

CLASS_RV = "RV"
CLASS_ENTITY = "EntT"
CLASS_RELATIONSHIP = "RelT"
CLASS_GENERAL = "general"


class DatabaseSchema:
    """Named relation types plus an optional registry of reusable tuple
    types. The same tuple type may back several names."""

    def __init__(self, relmaps, named_types=None):
        entries = []
        self._relmaps = {}
        for name, t in relmaps:
            if isinstance(name, str):
                name = Symbol(name)
            if not isinstance(t, MapType) or not is_rhomt(t):
                raise SchemaError(f"{name!r} must map to a relation type")
            if norm_scalar(name) in {norm_scalar(k) for k in self._relmaps}:
                raise SchemaError(f"duplicate relation name {name!r}")
            self._relmaps[name] = t
            entries.append(TypeEntry(name, MapTypeDomain(t)))
        self.map_type = MapType(entries=tuple(entries))
        self.named_types = dict(named_types or {})

    def names(self):
        return tuple(self._relmaps.keys())

    def relmap_type(self, name) -> MapType:
        if isinstance(name, str):
            name = Symbol(name)
        t = self._relmaps.get(name)
        if t is None:
            raise SchemaError(f"no relation named {name!r}")
        return t

    def element_type(self, name) -> MapType:
        return element_type(self.relmap_type(name))

    def has(self, name) -> bool:
        if isinstance(name, str):
            name = Symbol(name)
        return name in self._relmaps

    def items(self):
        return tuple(self._relmaps.items())

    def with_relmap(self, name, t: MapType) -> "DatabaseSchema":
        return DatabaseSchema(self.items() + ((name, t),), self.named_types)

    def without_relmap(self, name) -> "DatabaseSchema":
        if isinstance(name, str):
            name = Symbol(name)
        return DatabaseSchema(
            tuple((n, t) for n, t in self.items() if n != name), self.named_types
        )

    def __eq__(self, other):
        return isinstance(other, DatabaseSchema) and self.map_type == other.map_type

    def __hash__(self):
        return hash(self.map_type)

    def __repr__(self):
        return f"DatabaseSchema({', '.join(n.name for n in self.names())})"


class Database:
    """An immutable database version: a map from names to relation maps,
    governed by a schema. Link targets are attached eagerly where stable
    so that following a link is a pointer read."""

    __slots__ = ("schema", "content")

    def __init__(self, schema: DatabaseSchema, content: Map, attach: bool = True):
        if not isinstance(content, Map):
            raise SchemaError("database content must be a map")
        self.schema = schema
        self.content = attach_links(content) if attach else content

    @classmethod
    def from_relmaps(cls, schema: DatabaseSchema, relmaps: dict) -> "Database":
        by_name = {
            (Symbol(k) if isinstance(k, str) else k): v for k, v in relmaps.items()
        }
        entries = []
        for name in schema.names():
            entries.append((name, by_name.get(name, Map())))
        return cls(schema, Map(entries))

    def relmap(self, name) -> Map:
        if isinstance(name, str):
            name = Symbol(name)
        m = self.content.get(name)
        if m is None:
            raise SchemaError(f"no relation named {name!r}")
        return m

    def deref(self, ref: Ref) -> Map:
        if ref.resolved:
            return ref.target
        target = resolve_path(self.content, ref.path)
        if target is None:
            raise ReferentialViolationError(f"dangling reference {ref!r}")
        entry = target.get(ref.key)
        if entry is None:
            raise ReferentialViolationError(f"dangling reference {ref!r}")
        return entry

    def with_relmap(self, name, relmap: Map) -> "Database":
        if isinstance(name, str):
            name = Symbol(name)
        if name in self.content:
            content = self.content.with_value(name, relmap)
        else:
            content = self.content.with_entry(name, relmap)
        return Database(self.schema, content)

    def __eq__(self, other):
        return (
            isinstance(other, Database)
            and self.schema == other.schema
            and self.content == other.content
        )

    def __hash__(self):
        return hash((self.schema, self.content))

    def __repr__(self):
        sizes = ", ".join(f"{n.name}:{len(v)}" for n, v in self.content.items()
                          if isinstance(v, Map))
        return f"Database({sizes})"


# --------------------------------------------------------------------------
# Link attachment

def contains_refs(m: Map) -> bool:
    for v in m.values():
        if isinstance(v, Ref):
            return True
        if isinstance(v, Map) and contains_refs(v):
            return True
    return False


def attach_links(content: Map) -> Map:
    """Resolve link targets inside one database version.

    Only links whose target entry is itself link-free are attached (their
    target object is final); anything else stays symbolic and is followed
    through the content on demand.
    """
    targets = {}

    def target_map(path):
        if path not in targets:
            targets[path] = resolve_path(content, path)
        return targets[path]

    def rebuild(m: Map) -> Map:
        changed = False
        values = list(m.values())
        for i, v in enumerate(values):
            if isinstance(v, Ref):
                target = target_map(v.path)
                entry = target.get(v.key) if target is not None else None
                if entry is not None and not contains_refs(entry):
                    if not (v.resolved and v.target is entry):
                        values[i] = Ref(v.path, v.key, entry)
                        changed = True
            elif isinstance(v, Map):
                nv = rebuild(v)
                if nv is not v:
                    values[i] = nv
                    changed = True
        if not changed:
            return m
        return Map._raw(m.keys(), tuple(values), m.key_kind)

    return rebuild(content)


def iter_links(m: Map, path=()):
    """Yield (path, key, ref) for every link value anywhere inside m."""
    for k, v in m.items():
        if isinstance(v, Ref):
            yield path, k, v
        elif isinstance(v, Map):
            yield from iter_links(v, path + (k,))


# --------------------------------------------------------------------------
# Database validation

def validate_database(db: Database) -> ValidationReport:
    """Schema conformance for every relation map plus global link
    resolution: foreign keys must exist as target keys, links must point
    at current entries of in-database maps."""
    report = validate(db.content, db.schema.map_type, ctx=db.content)
    extra = []
    for path, key, ref in iter_links(db.content):
        target = resolve_path(db.content, ref.path)
        if target is None or ref.key not in target:
            extra.append(
                Violation(DANGLING, key=key, path=path,
                          message=f"{ref!r} does not resolve inside this database")
            )
    if extra:
        seen = set(report.violations)
        merged = list(report.violations) + [v for v in extra if v not in seen]
        return ValidationReport(conforms=False, violations=tuple(merged))
    return report


# --------------------------------------------------------------------------
# Model classification

@dataclass(frozen=True)
class ModelClass:
    is_rmtm: bool
    is_rm: bool
    is_erm: bool
    per_relmap: tuple  # ((name, class), ...)

    def relmap_class(self, name) -> str:
        if isinstance(name, str):
            name = Symbol(name)
        for n, c in self.per_relmap:
            if n == name:
                return c
        raise SchemaError(f"no relation named {name!r}")


def _link_target_name(domain, schema: DatabaseSchema):
    if not isinstance(domain, (EnumerationDomain, ForeignKeyDomain)):
        return None
    if len(domain.target) == 1 and schema.has(domain.target[0]):
        return domain.target[0]
    return None


def _classify_one(t: MapType, schema: DatabaseSchema, classes: dict) -> str:
    has_enum = False
    has_nested = False
    fk_targets = []
    for e in t.entries:
        d = e.domain
        if isinstance(d, EnumerationDomain):
            has_enum = True
        elif isinstance(d, MapTypeDomain):
            has_nested = True
        elif isinstance(d, ForeignKeyDomain):
            fk_targets.append(_link_target_name(d, schema))
    if has_enum:
        # non-exclusive assignment in the open: not a relational variable
        return CLASS_GENERAL
    if has_nested:
        # structured attribute: outside the flat relational restriction
        return CLASS_GENERAL
    if not fk_targets:
        return CLASS_ENTITY
    entity_refs = sum(
        1 for name in fk_targets if name is not None and classes.get(name) == CLASS_ENTITY
    )
    rel_refs = any(
        name is not None and classes.get(name) == CLASS_RELATIONSHIP
        for name in fk_targets
    )
    if (t.n or 0) > 2 and entity_refs >= 2 and not rel_refs:
        return CLASS_RELATIONSHIP
    return CLASS_RV


def classify_schema(schema: DatabaseSchema) -> dict:
    """Classify every relation type in the schema, to fixpoint."""
    classes = {name: None for name in schema.names()}
    for _ in range(len(classes) + 2):
        changed = False
        for name in schema.names():
            c = _classify_one(schema.element_type(name), schema, classes)
            if classes[name] != c:
                classes[name] = c
                changed = True
        if not changed:
            break
    return classes


def classify_type(t_or_name, ctx: DatabaseSchema) -> str:
    """Classify one registered relation type within its schema."""
    classes = classify_schema(ctx)
    if isinstance(t_or_name, (str, Symbol)):
        name = Symbol(t_or_name) if isinstance(t_or_name, str) else t_or_name
        if name not in classes:
            raise SchemaError(f"no relation named {name!r}")
        return classes[name]
    for name in ctx.names():
        if ctx.element_type(name) == t_or_name:
            return classes[name]
    raise SchemaError("type is not registered in the schema")


def classify_database(db: Database) -> ModelClass:
    """Model containment flags for a validated database."""
    classes = classify_schema(db.schema)
    rv_like = {CLASS_RV, CLASS_ENTITY, CLASS_RELATIONSHIP}
    is_rm = all(c in rv_like for c in classes.values())
    is_erm = all(c in (CLASS_ENTITY, CLASS_RELATIONSHIP) for c in classes.values())
    if is_erm:
        for name in db.schema.names():
            if classes[name] != CLASS_RELATIONSHIP:
                continue
            for e in db.schema.element_type(name).entries:
                tname = _link_target_name(e.domain, db.schema)
                if isinstance(e.domain, (ForeignKeyDomain, EnumerationDomain)):
                    if tname is None or classes.get(tname) != CLASS_ENTITY:
                        is_erm = False
                        break
            if not is_erm:
                break
    return ModelClass(
        is_rmtm=True,
        is_rm=is_rm,
        is_erm=is_erm,
        per_relmap=tuple(classes.items()),
    )


# --------------------------------------------------------------------------
# Swizzling

def swizzle(db: Database) -> Database:
    """Replace every foreign-key scalar with a direct link to the target
    entry, flipping the schema's foreign-key domains to enumeration
    domains. Dangling foreign keys are detected here and refuse the
    whole operation."""
    new_schemas = []
    for name, rt in db.schema.items():
        et = element_type(rt)
        entries = []
        changed = False
        for e in et.entries:
            if isinstance(e.domain, ForeignKeyDomain):
                target_rt = _target_relmap_type(db.schema, e.domain.target)
                if target_rt is not None and target_rt.key_policy.kind == POLICY_SURROGATE:
                    raise IdentityError(
                        f"foreign keys cannot reference the hidden identity of "
                        f"{'/'.join(str(p) for p in e.domain.target)}"
                    )
                entries.append(TypeEntry(e.key, EnumerationDomain(e.domain.target), e.optional))
                changed = True
            else:
                entries.append(e)
        new_et = MapType(
            n=et.n, key_domain=et.key_domain, entries=tuple(entries),
            value_domain=et.value_domain, constraints=et.constraints,
            key_policy=et.key_policy,
        ) if changed else et
        new_rt = MapType(
            n=rt.n, key_domain=rt.key_domain, entries=rt.entries,
            value_domain=MapTypeDomain(new_et), constraints=rt.constraints,
            key_policy=rt.key_policy,
        ) if changed else rt
        new_schemas.append((name, new_rt))
    new_schema = DatabaseSchema(new_schemas, db.schema.named_types)

    out_relmaps = {}
    for name, rt in db.schema.items():
        et = element_type(rt)
        fk_keys = {
            norm_scalar(e.key): e.domain
            for e in et.entries
            if isinstance(e.domain, ForeignKeyDomain)
        }
        relmap = db.relmap(name)
        if not fk_keys:
            out_relmaps[name] = relmap
            continue
        new_values = []
        for entry_key, member in relmap.items():
            vals = list(member.values())
            for i, k in enumerate(member.keys()):
                dom = fk_keys.get(norm_scalar(k))
                if dom is None:
                    continue
                v = vals[i]
                target = resolve_path(db.content, dom.target)
                if target is None or v not in target:
                    raise ReferentialViolationError(
                        f"referential violation: {name.name}[{entry_key!r}].{k!r} = {v!r} "
                        "has no matching target key"
                    )
                vals[i] = Ref(dom.target, v)
            new_values.append(Map._raw(member.keys(), tuple(vals), member.key_kind))
        out_relmaps[name] = Map._raw(relmap.keys(), tuple(new_values), relmap.key_kind)

    return Database.from_relmaps(new_schema, out_relmaps)


def unswizzle(db: Database) -> Database:
    """Replace every link with the target's key as a foreign-key scalar,
    flipping enumeration domains back to foreign-key domains."""
    new_schemas = []
    for name, rt in db.schema.items():
        et = element_type(rt)
        entries = []
        changed = False
        for e in et.entries:
            if isinstance(e.domain, EnumerationDomain):
                fk_kind = _external_key_kind(db.schema, e.domain.target)
                entries.append(
                    TypeEntry(e.key, ForeignKeyDomain(e.domain.target, fk_kind), e.optional)
                )
                changed = True
            else:
                entries.append(e)
        new_et = MapType(
            n=et.n, key_domain=et.key_domain, entries=tuple(entries),
            value_domain=et.value_domain, constraints=et.constraints,
            key_policy=et.key_policy,
        ) if changed else et
        new_rt = MapType(
            n=rt.n, key_domain=rt.key_domain, entries=rt.entries,
            value_domain=MapTypeDomain(new_et), constraints=rt.constraints,
            key_policy=rt.key_policy,
        ) if changed else rt
        new_schemas.append((name, new_rt))
    new_schema = DatabaseSchema(new_schemas, db.schema.named_types)

    out_relmaps = {}
    for name, rt in db.schema.items():
        et = element_type(rt)
        link_keys = {
            norm_scalar(e.key): e.domain
            for e in et.entries
            if isinstance(e.domain, EnumerationDomain)
        }
        relmap = db.relmap(name)
        if not link_keys:
            out_relmaps[name] = relmap
            continue
        new_values = []
        for member in relmap.values():
            vals = list(member.values())
            for i, k in enumerate(member.keys()):
                dom = link_keys.get(norm_scalar(k))
                if dom is None:
                    continue
                vals[i] = _externalize(db, dom, vals[i])
            new_values.append(Map._raw(member.keys(), tuple(vals), member.key_kind))
        out_relmaps[name] = Map._raw(relmap.keys(), tuple(new_values), relmap.key_kind)

    return Database.from_relmaps(new_schema, out_relmaps)


def _target_relmap_type(schema: DatabaseSchema, path):
    if len(path) == 1 and schema.has(path[0]):
        return schema.relmap_type(path[0])
    return None


def _external_key_kind(schema: DatabaseSchema, path):
    rt = _target_relmap_type(schema, path)
    if rt is not None and rt.key_domain is not None:
        return rt.key_domain.kind
    return None


def _externalize(db: Database, dom: EnumerationDomain, v):
    rt = _target_relmap_type(db.schema, dom.target)
    if rt is not None and rt.key_policy.kind == POLICY_SURROGATE:
        raise IdentityError("identity not externalizable: target uses hidden keys")
    if isinstance(v, Ref):
        return v.key
    if isinstance(v, Map):
        if rt is not None and rt.key_policy.kind == POLICY_COMPUTED:
            return compute_key(rt.key_policy.pi, v).value
        target = resolve_path(db.content, dom.target)
        if target is not None:
            for k, member in target.items():
                if member is v or member == v:
                    return k
        raise IdentityError("identity not externalizable: value is not a current member")
    return v


# --------------------------------------------------------------------------
# Record ingestion

def coerce_record(rec: Map, et: MapType) -> Map:
    """Normalize a decoded record against its tuple type: date strings
    become dates, strings under symbol domains become symbols."""
    values = list(rec.values())
    changed = False
    for i, (k, v) in enumerate(rec.items()):
        dom = et.domain_for(k)
        if isinstance(dom, ScalarDomain) and isinstance(v, str):
            if dom.kind == "date":
                values[i] = parse_date(v)
                changed = True
            elif dom.kind == "symbol":
                values[i] = Symbol(v)
                changed = True
    if not changed:
        return rec
    return Map._raw(rec.keys(), tuple(values), rec.key_kind)


def build_relmap(schema: DatabaseSchema, name, records, allocator=None):
    """Assemble a relation map from element records, keying each record
    per the relation's key policy. Returns (relmap, key_for_record list).

    Records may carry an explicit key (required for declared-key
    relations, forbidden for surrogate ones)."""
    rt = schema.relmap_type(name)
    et = schema.element_type(name)
    policy = rt.key_policy
    alloc = allocator if allocator is not None else SurrogateAllocator()
    entries = []
    keys_out = []
    for rec, explicit_key in records:
        rec = coerce_record(rec, et)
        if policy.kind == POLICY_COMPUTED:
            key = compute_key(policy.pi, rec).value
        elif policy.kind == POLICY_SURROGATE:
            if explicit_key is not None:
                raise IdentityError(f"{name!r} assigns identities internally")
            key = alloc.allocate()
        else:
            if explicit_key is None:
                raise SchemaError(f"records for {name!r} need explicit keys")
            key = explicit_key
        entries.append((key, rec))
        keys_out.append(key)
    kind = {
        POLICY_COMPUTED: "computed",
        POLICY_SURROGATE: "surrogate",
        POLICY_DECLARED: "symbolic",
    }[policy.kind]
    return Map(entries, kind=kind), keys_out
