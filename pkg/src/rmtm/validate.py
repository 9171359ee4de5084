"""Conformance checking of maps against map types.

A validation report lists one violation per broken constraint, naming the
constraint kind (Cn, CKD, CVD, CK, CV, or a referential kind), the
offending key, and what was expected. An unresolvable link target is an
error, not a violation: the type itself cannot be checked.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import Map, Ref, Symbol, norm_scalar, scalar_eq, scalar_kind, scalar_lt
from .errors import ScalarError, UnresolvedDomainError
from .types import (
    EnumerationDomain,
    ForeignKeyDomain,
    MapType,
    MapTypeDomain,
    OneOfConstraint,
    POLICY_COMPUTED,
    POLICY_SURROGATE,
    RangeConstraint,
    ScalarDomain,
    compute_key,
)

C_N = "Cn"
C_KD = "CKD"
C_VD = "CVD"
C_K = "CK"
C_V = "CV"
REFERENTIAL = "referential violation"
DANGLING = "dangling reference"


@dataclass(frozen=True)
class Violation:
    kind: str
    key: object = None
    message: str = ""
    path: tuple = ()

    def __str__(self):
        where = "/".join(str(p) for p in self.path) or "."
        return f"[{self.kind}] at {where} key={self.key!r}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    conforms: bool
    violations: tuple = ()

    def summary(self) -> str:
        if self.conforms:
            return "conforms"
        return "; ".join(str(v) for v in self.violations)


def resolve_path(root, path):
    """Walk `root` down the key path, returning the map there or None."""
    cur = root
    for comp in path:
        if not isinstance(cur, Map):
            return None
        cur = cur.get(comp)
        if cur is None:
            return None
    return cur if isinstance(cur, Map) else None


def enumeration_of(root: Map, path) -> EnumerationDomain:
    """The live enumeration domain of the map registered at `path`."""
    path = tuple(Symbol(p) if isinstance(p, str) else p for p in path)
    if resolve_path(root, path) is None:
        raise UnresolvedDomainError(
            f"unresolved domain target {'/'.join(str(p) for p in path)}"
        )
    return EnumerationDomain(path)


def validate(m: Map, t: MapType, ctx: Map = None, *, check_links: bool = True) -> ValidationReport:
    """Check a map against a type; link domains resolve inside `ctx`.

    With check_links=False, enumeration and foreign-key membership is
    skipped (used for payloads validated before they join a database).
    """
    out: list = []
    _validate_into(m, t, ctx, (), out, check_links)
    return ValidationReport(conforms=not out, violations=tuple(out))


def _validate_into(m, t, ctx, path, out, check_links):
    if not isinstance(m, Map):
        out.append(Violation(C_VD, message=f"expected a map, got {m!r}", path=path))
        return

    # CKD
    if t.key_domain is not None:
        want = t.key_domain.kind
        for k in m.keys():
            if scalar_kind(k) != want:
                out.append(
                    Violation(C_KD, key=k, path=path,
                              message=f"key domain is {want}, got {scalar_kind(k)}")
                )

    # CK: mandatory keys present; closed types admit only declared keys
    if t.entries:
        declared = {norm_scalar(e.key) for e in t.entries}
        present = {norm_scalar(k) for k in m.keys()}
        for e in t.entries:
            if not e.optional and norm_scalar(e.key) not in present:
                out.append(
                    Violation(C_K, key=e.key, path=path, message="mandatory key missing")
                )
        if t.closed:
            for k in m.keys():
                if norm_scalar(k) not in declared:
                    out.append(
                        Violation(C_K, key=k, path=path, message="key not declared")
                    )

    # Cn: optional declared keys may be omitted, nothing else may vary
    if t.n is not None:
        if t.entries:
            lo = len(t.mandatory_keys())
            hi = t.n
        else:
            lo = hi = t.n
        if not (lo <= len(m) <= hi):
            out.append(
                Violation(C_N, path=path,
                          message=f"entry count {len(m)} outside [{lo}, {hi}]")
            )

    # CVD: declared domains first, the uniform domain for everything else
    for k, v in m.items():
        e = t.entry(k) if t.entries else None
        if e is not None:
            _check_domain(v, e.domain, ctx, path, k, out, check_links)
        elif t.value_domain is not None:
            _check_domain(v, t.value_domain, ctx, path, k, out, check_links)

    # CV
    for c in t.constraints:
        _check_constraint(m, c, path, out)

    # key policy
    kp = t.key_policy
    if kp.kind == POLICY_COMPUTED:
        for k, v in m.items():
            try:
                expect = compute_key(kp.pi, v).value
            except Exception as exc:
                out.append(Violation(C_K, key=k, path=path, message=str(exc)))
                continue
            if norm_scalar(expect) != norm_scalar(k):
                out.append(
                    Violation(C_K, key=k, path=path,
                              message=f"computed key mismatch: pi(value)={expect!r}")
                )
    elif kp.kind == POLICY_SURROGATE:
        for k in m.keys():
            if scalar_kind(k) != "int":
                out.append(
                    Violation(C_K, key=k, path=path, message="surrogate keys are integers")
                )


def _resolve_target(domain, ctx):
    target = resolve_path(ctx, domain.target) if ctx is not None else None
    if target is None:
        raise UnresolvedDomainError(
            "unresolved domain target "
            + "/".join(str(p) for p in domain.target)
        )
    return target


def _check_domain(v, domain, ctx, path, key, out, check_links):
    if isinstance(domain, ScalarDomain):
        if isinstance(v, (Map, Ref)):
            out.append(
                Violation(C_VD, key=key, path=path,
                          message=f"expected {domain.kind} scalar, got {type(v).__name__}")
            )
        elif scalar_kind(v) != domain.kind:
            out.append(
                Violation(C_VD, key=key, path=path,
                          message=f"expected {domain.kind}, got {scalar_kind(v)}")
            )
        return

    if isinstance(domain, MapTypeDomain):
        if not isinstance(v, Map):
            out.append(
                Violation(C_VD, key=key, path=path,
                          message=f"expected a nested map, got {type(v).__name__}")
            )
            return
        _validate_into(v, domain.map_type, ctx, path + (key,), out, check_links)
        return

    if isinstance(domain, EnumerationDomain):
        if not check_links:
            return
        target = _resolve_target(domain, ctx)
        if isinstance(v, Ref):
            if v.path != domain.target:
                out.append(
                    Violation(C_VD, key=key, path=path,
                              message=f"link points at {v.path}, domain wants {domain.target}")
                )
                return
            entry = target.get(v.key)
            if entry is None:
                out.append(
                    Violation(DANGLING, key=key, path=path,
                              message=f"no entry {v.key!r} in target map")
                )
            elif v.resolved and entry is not v.target and entry != v.target:
                out.append(
                    Violation(DANGLING, key=key, path=path,
                              message="stale link: resolved target is not the current entry")
                )
            return
        if isinstance(v, Map):
            for member in target.values():
                if member is v or member == v:
                    return
            out.append(
                Violation(DANGLING, key=key, path=path,
                          message="map value is not a member of the target enumeration")
            )
            return
        out.append(
            Violation(C_VD, key=key, path=path,
                      message="enumeration domains hold links or member maps, not scalars")
        )
        return

    if isinstance(domain, ForeignKeyDomain):
        if isinstance(v, (Map, Ref)):
            out.append(
                Violation(C_VD, key=key, path=path,
                          message="foreign keys are scalars")
            )
            return
        if domain.key_kind is not None and scalar_kind(v) != domain.key_kind:
            out.append(
                Violation(C_VD, key=key, path=path,
                          message=f"foreign key kind is {domain.key_kind}, got {scalar_kind(v)}")
            )
            return
        if not check_links:
            return
        target = _resolve_target(domain, ctx)
        if v not in target:
            out.append(
                Violation(REFERENTIAL, key=key, path=path,
                          message=f"value {v!r} is not a key of the target map")
            )
        return

    raise UnresolvedDomainError(f"unknown domain {domain!r}")


def _check_constraint(m, c, path, out):
    if isinstance(c, RangeConstraint):
        targets = _constraint_targets(m, c.key)
        for k, v in targets:
            try:
                bad = scalar_lt(v, c.lo) or scalar_lt(c.hi, v)
            except ScalarError as exc:
                out.append(Violation(C_V, key=k, path=path, message=str(exc)))
                continue
            if bad:
                out.append(
                    Violation(C_V, key=k, path=path,
                              message=f"value {v!r} outside [{c.lo!r}, {c.hi!r}]")
                )
    elif isinstance(c, OneOfConstraint):
        for k, v in _constraint_targets(m, c.key):
            ok = False
            for lit in c.literals:
                try:
                    if scalar_eq(v, lit):
                        ok = True
                        break
                except ScalarError:
                    continue
            if not ok:
                out.append(
                    Violation(C_V, key=k, path=path,
                              message=f"value {v!r} not one of {list(c.literals)!r}")
                )


def _constraint_targets(m, key):
    if key is None:
        return [(k, v) for k, v in m.items() if not isinstance(v, (Map, Ref))]
    v = m.get(key)
    if v is None or isinstance(v, (Map, Ref)):
        return []
    return [(key, v)]
