"""Out-of-place evaluation and in-place application of view expressions.

Evaluation is naive bottom-up with one deliberate fast path: joins whose
link attributes are swizzled follow the references directly instead of
building hash indexes. Every expression evaluates against exactly one
database version, so a whole composed query can never mix versions.
"""
from __future__ import annotations

import itertools

from .core import Key, Map, Ref, Symbol, norm_scalar, scalar_eq, scalar_kind, scalar_lt
from .errors import (
    EvalError,
    FactorizationConflictError,
    InPlaceOnlyError,
    MapKeyError,
    RejectedRewriteError,
    ScalarError,
)
from .types import (
    EnumerationDomain,
    MapType,
    MapTypeDomain,
    POLICY_COMPUTED,
    POLICY_DECLARED,
    POLICY_SURROGATE,
    compute_key,
)
from .validate import resolve_path
from .views import (
    Aggregate,
    Compute,
    Denormalize,
    Factorize,
    Filter,
    Join,
    Mutation,
    Partition,
    Project,
    Rename,
    SetOp,
    Source,
    SubdbReduce,
    ViewExpr,
    registry,
    _type_at,
)


def eval_out_of_place(view: ViewExpr, snapshot, *, keep_refs: bool = False) -> Map:
    """Evaluate a view against a snapshot, returning a detached result.

    Links in the result are materialized as embedded copies of their
    targets unless keep_refs is set. Mutation nodes are refused: they
    only make sense as rewrite rules applied through the store.
    """
    if view.contains_mutation():
        raise InPlaceOnlyError("in-place only: the view contains mutation nodes")
    root, input_type = _snapshot_root(snapshot)
    if input_type is not None and input_type != view.input_type:
        raise EvalError("view input signature does not match the snapshot's type")
    result = _eval(view, root)
    if keep_refs:
        return result
    return _materialize(result, root)


def _snapshot_root(snapshot):
    db = getattr(snapshot, "database", None)
    if db is not None and hasattr(db, "content"):
        return db.content, db.schema.map_type
    if hasattr(snapshot, "content") and hasattr(snapshot, "schema"):
        return snapshot.content, snapshot.schema.map_type
    if isinstance(snapshot, Map):
        return snapshot, None
    raise EvalError(f"cannot evaluate against {snapshot!r}")


def _materialize(value, ctx, _active=()):
    if isinstance(value, Ref):
        target = _deref(value, ctx)
        if id(target) in _active:
            return value  # cyclic link chain: keep the reference
        return _materialize(target, ctx, _active + (id(target),))
    if isinstance(value, Map):
        vals = list(value.values())
        changed = False
        for i, v in enumerate(vals):
            nv = _materialize(v, ctx, _active)
            if nv is not v:
                vals[i] = nv
                changed = True
        if not changed:
            return value
        return Map._raw(value.keys(), tuple(vals), value.key_kind)
    return value


def _deref(ref: Ref, ctx):
    if ref.resolved:
        return ref.target
    target = resolve_path(ctx, ref.path)
    entry = target.get(ref.key) if target is not None else None
    if entry is None:
        raise EvalError(f"dangling reference {ref!r}")
    return entry


def _follow(v, target_path, ctx):
    """Resolve one link-typed value to its target element."""
    if isinstance(v, Ref):
        return _deref(v, ctx)
    if isinstance(v, Map):
        return v
    target = resolve_path(ctx, target_path)
    entry = target.get(v) if target is not None else None
    if entry is None:
        raise EvalError(f"dangling foreign key {v!r}")
    return entry


def _link_key(v):
    """The normalized target key named by a link value, or None when the
    value is an embedded member (matched by identity instead)."""
    if isinstance(v, Ref):
        return norm_scalar(v.key)
    if isinstance(v, Map):
        return None
    return norm_scalar(v)


def _nav(value, path):
    cur = value
    for comp in path:
        if not isinstance(cur, Map):
            raise EvalError(f"cannot navigate into {cur!r}")
        nxt = cur.get(comp)
        if nxt is None:
            raise EvalError(f"nothing at {comp!r}")
        cur = nxt
    return cur


# --------------------------------------------------------------------------
# Term and predicate plans

def _eval_term(plan, entry_key, element, ctx):
    tag = plan[0]
    if tag == "lit":
        return plan[1]
    if tag == "entry_key":
        return entry_key
    if tag == "key":
        cur = element
        for comp, link_target in plan[1]:
            if not isinstance(cur, Map):
                raise EvalError(f"cannot read {comp!r} from a scalar")
            v = cur.get(comp)
            if v is None:
                return None  # absent propagates; there is no NULL to carry
            cur = v if link_target is None else _follow(v, link_target, ctx)
        return cur
    if tag == "func":
        fn, _ = registry.lookup(plan[1])
        args = []
        for p in plan[2]:
            a = _eval_term(p, entry_key, element, ctx)
            if a is None:
                return None
            args.append(a)
        try:
            out = fn(*args)
        except Exception as exc:
            raise EvalError(f"registered function {plan[1]!r} failed: {exc}") from exc
        scalar_kind(out)
        return out
    raise EvalError(f"bad term plan {plan!r}")


def _eval_pred(plan, entry_key, element, ctx) -> bool:
    tag = plan[0]
    if tag == "true":
        return True
    if tag == "cmp":
        l = _eval_term(plan[2], entry_key, element, ctx)
        r = _eval_term(plan[3], entry_key, element, ctx)
        if l is None or r is None:
            return False  # absent satisfies nothing
        op = plan[1]
        try:
            if op == "==":
                return scalar_eq(l, r)
            if op == "!=":
                return not scalar_eq(l, r)
            if op == "<":
                return scalar_lt(l, r)
            if op == "<=":
                return not scalar_lt(r, l)
            if op == ">":
                return scalar_lt(r, l)
            return not scalar_lt(l, r)  # >=
        except ScalarError as exc:
            raise EvalError(str(exc)) from exc
    if tag == "in":
        v = _eval_term(plan[1], entry_key, element, ctx)
        if v is None:
            return False
        return norm_scalar(v) in plan[2]
    if tag == "and":
        return all(_eval_pred(p, entry_key, element, ctx) for p in plan[1])
    if tag == "or":
        return any(_eval_pred(p, entry_key, element, ctx) for p in plan[1])
    if tag == "not":
        return not _eval_pred(plan[1], entry_key, element, ctx)
    raise EvalError(f"bad predicate plan {plan!r}")


# --------------------------------------------------------------------------
# Node evaluation

def _eval(node: ViewExpr, root: Map):
    if isinstance(node, Source):
        return root
    child = _eval(node.child, root) if node.child is not None else root
    if isinstance(node, Filter):
        return _eval_filter(node, child, root)
    if isinstance(node, Project):
        return _eval_project(node, child, root)
    if isinstance(node, Compute):
        return _eval_compute(node, child, root)
    if isinstance(node, Rename):
        return _eval_rename(node, child, root)
    if isinstance(node, Join):
        return _eval_join(node, child, root)
    if isinstance(node, SetOp):
        return _eval_set_op(node, child, root)
    if isinstance(node, Aggregate):
        return _eval_aggregate(node, child, root)
    if isinstance(node, Partition):
        return _eval_partition(node, child, root)
    if isinstance(node, Denormalize):
        return _eval_denormalize(node, child, root)
    if isinstance(node, Factorize):
        return _eval_factorize(node, child, root)
    if isinstance(node, SubdbReduce):
        return _eval_subdb(node, child, root)
    if isinstance(node, Mutation):
        raise InPlaceOnlyError("in-place only")
    raise EvalError(f"cannot evaluate {node!r}")


def _eval_filter(node: Filter, child, root_map):
    target = _nav(child, node.path)
    plan = node.plans[0]
    keys = []
    values = []
    for k, v in target.items():
        if _eval_pred(plan, k, v, root_map):
            keys.append(k)
            values.append(v)
    if len(keys) == len(target):
        return target
    return Map._raw(tuple(keys), tuple(values), target.key_kind)


def _eval_project(node: Project, child, root_map):
    target = _nav(child, node.path)
    wanted = {norm_scalar(k) for k in node.keys}
    if not node.element_wise:
        pairs = [(k, v) for k, v in target.items() if norm_scalar(k) in wanted]
        return Map._raw(
            tuple(k for k, _ in pairs), tuple(v for _, v in pairs), target.key_kind
        )

    policy = node.output_type.key_policy
    projected = []
    for k, elem in target.items():
        pairs = [(ek, ev) for ek, ev in elem.items() if norm_scalar(ek) in wanted]
        projected.append(
            (k, Map._raw(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs),
                         elem.key_kind))
        )
    if policy.kind == POLICY_COMPUTED:
        out = {}
        for _, p in projected:
            k = compute_key(policy.pi, p).value
            nk = norm_scalar(k)
            if nk not in out:
                out[nk] = (k, p)
        return Map._raw(
            tuple(k for k, _ in out.values()),
            tuple(p for _, p in out.values()),
            "computed",
        )
    if policy.kind == POLICY_SURROGATE and node.distinct:
        seen = []
        for _, p in projected:
            if not any(p == q for q in seen):
                seen.append(p)
        return Map._raw(tuple(range(len(seen))), tuple(seen), "surrogate")
    return Map._raw(
        tuple(k for k, _ in projected), tuple(p for _, p in projected), target.key_kind
    )


def _eval_compute(node: Compute, child, root_map):
    target = _nav(child, node.path)
    out_values = []
    for k, elem in target.items():
        keys = list(elem.keys())
        values = list(elem.values())
        positions = {norm_scalar(ek): i for i, ek in enumerate(keys)}
        for out_key, plan in node.plans:
            v = _eval_term(plan, k, elem, root_map)
            pos = positions.get(norm_scalar(out_key))
            if v is None:
                if pos is not None:
                    del keys[pos], values[pos]
                    positions = {norm_scalar(ek): i for i, ek in enumerate(keys)}
                continue
            if pos is None:
                positions[norm_scalar(out_key)] = len(keys)
                keys.append(out_key)
                values.append(v)
            else:
                values[pos] = v
        out_values.append(Map._raw(tuple(keys), tuple(values), elem.key_kind))
    return Map._raw(target.keys(), tuple(out_values), target.key_kind)


def _eval_rename(node: Rename, child, root_map):
    target = _nav(child, node.path)
    lookup = {norm_scalar(a): b for a, b in node.mapping}

    def rename_keys(m: Map) -> Map:
        keys = tuple(lookup.get(norm_scalar(k), k) for k in m.keys())
        return Map._raw(keys, m.values(), m.key_kind)

    if node.element_wise:
        return Map._raw(
            target.keys(),
            tuple(rename_keys(e) for e in target.values()),
            target.key_kind,
        )
    out = rename_keys(target)
    if not node.path:
        out = _retarget_ref_paths(out, lookup)
    return out


def _retarget_ref_paths(m: Map, lookup):
    def fix(v):
        if isinstance(v, Ref) and v.path and norm_scalar(v.path[0]) in lookup:
            return Ref((lookup[norm_scalar(v.path[0])],) + v.path[1:], v.key, v.target)
        if isinstance(v, Map):
            vals = tuple(fix(x) for x in v.values())
            if vals == v.values():
                return v
            return Map._raw(v.keys(), vals, v.key_kind)
        return v
    return fix(m)


# -- joins ------------------------------------------------------------------

def _input_name(path):
    last = path[-1]
    return last.name if isinstance(last, Symbol) else str(last)


def _prefixed(name, elem: Map) -> list:
    return [
        (Symbol(f"{name}.{k.name if isinstance(k, Symbol) else k}"), v)
        for k, v in elem.items()
    ]


def _eval_join(node: Join, child, root_map):
    rels = [(p, _input_name(p), _nav(child, p)) for p in node.inputs]
    edges = node.on if isinstance(node.on, tuple) else ()
    pred_plan = node.plans[0] if node.plans else None

    if node.join_kind == "cross":
        combos = _cross_combos(rels)
    elif edges:
        combos = _link_combos(rels, edges, root_map, node.join_kind, node.outer_sides)
    else:
        combos = _pred_combos(rels, pred_plan, root_map)

    if node.join_kind == "semi":
        idx = [i for i, (p, _, _) in enumerate(rels) if p == node.preserved][0]
        relmap = rels[idx][2]
        hit = set()
        for combo in combos:
            row = combo[idx][1]
            hit.add(id(row))
        keys, values = [], []
        for k, v in relmap.items():
            if id(v) in hit:
                keys.append(k)
                values.append(v)
        if len(keys) == len(relmap):
            return relmap
        return Map._raw(tuple(keys), tuple(values), relmap.key_kind)

    out_rows = []
    matched = [set() for _ in rels]
    for combo in combos:
        pairs = []
        for i, (p, name, _) in enumerate(rels):
            bound = combo[i]
            if bound is None:
                continue
            matched[i].add(id(bound[1]))
            pairs.extend(_prefixed(name, bound[1]))
        out_rows.append(pairs)

    if node.join_kind == "outer":
        for i, (p, name, relmap) in enumerate(rels):
            if p not in node.outer_sides:
                continue
            for v in relmap.values():
                if id(v) not in matched[i]:
                    out_rows.append(_prefixed(name, v))

    values = tuple(
        Map._raw(tuple(k for k, _ in row), tuple(v for _, v in row)) for row in out_rows
    )
    return Map._raw(tuple(range(len(values))), values, "surrogate")


def _cross_combos(rels):
    lists = [[(k, v) for k, v in r.items()] for _, _, r in rels]
    for combo in itertools.product(*lists):
        yield combo


def _pred_combos(rels, plan, root_map):
    lists = [[(k, v) for k, v in r.items()] for _, _, r in rels]
    names = [name for _, name, _ in rels]
    for combo in itertools.product(*lists):
        pairs = []
        for name, (_, row) in zip(names, combo):
            pairs.extend(_prefixed(name, row))
        candidate = Map._raw(tuple(k for k, _ in pairs), tuple(v for _, v in pairs))
        if plan is None or _eval_pred(plan, None, candidate, root_map):
            yield combo


def _link_combos(rels, edges, root_map, kind, outer_sides):
    """Expand link edges from a root input outward when they span all
    inputs as a directed tree (no index build: links are followed); fall
    back to the general nested-loop strategy otherwise."""
    paths = [p for p, _, _ in rels]
    index_of = {p: i for i, p in enumerate(paths)}
    out_edges = {}
    for e in edges:
        out_edges.setdefault(e.source, []).append(e)

    for root_path in paths:
        ordered = _spanning_order(root_path, paths, out_edges)
        if ordered is not None:
            return _follow_combos(rels, index_of, ordered, root_map)
    return _edge_nested_combos(rels, edges, index_of, root_map)


def _spanning_order(root_path, paths, out_edges):
    seen = {root_path}
    order = []
    frontier = [root_path]
    while frontier:
        cur = frontier.pop(0)
        for e in out_edges.get(cur, ()):  # follow link direction only
            if e.target in seen:
                return None  # re-entering a bound input: not a tree
            seen.add(e.target)
            order.append(e)
            frontier.append(e.target)
    if len(seen) != len(paths):
        return None
    return tuple(order)


def _follow_combos(rels, index_of, ordered_edges, root_map):
    root_idx = index_of[ordered_edges[0].source] if ordered_edges else 0
    n = len(rels)
    root_relmap = rels[root_idx][2]
    for k, row in root_relmap.items():
        combo = [None] * n
        combo[root_idx] = (k, row)
        ok = True
        for e in ordered_edges:
            src = combo[index_of[e.source]]
            if src is None:
                ok = False
                break
            bound = _probe(src[1], e, rels[index_of[e.target]][2], root_map)
            if bound is None:
                ok = False
                break
            combo[index_of[e.target]] = bound
        if ok:
            yield tuple(combo)


def _probe(src_row, edge, target_relmap, root_map):
    """Resolve one link edge from a source row into (key, row) or None."""
    vals = []
    for kname in edge.keys:
        v = src_row.get(kname)
        if v is None:
            return None
        vals.append(v)
    if len(vals) == 1:
        v = vals[0]
        if isinstance(v, Ref):
            row = v.target
            if row is None:
                row = target_relmap.get(v.key)
                if row is None:
                    return None
            return (v.key, row)
        if isinstance(v, Map):
            for k, member in target_relmap.items():
                if member is v:
                    return (k, member)
            for k, member in target_relmap.items():
                if member == v:
                    return (k, member)
            return None
        row = target_relmap.get(v)
        return None if row is None else (v, row)
    key = tuple(x.key if isinstance(x, Ref) else x for x in vals)
    row = target_relmap.get(key)
    return None if row is None else (key, row)


def _edge_nested_combos(rels, edges, index_of, root_map):
    lists = [[(k, v) for k, v in r.items()] for _, _, r in rels]
    for combo in itertools.product(*lists):
        ok = True
        for e in edges:
            src_row = combo[index_of[e.source]][1]
            bound = _probe(src_row, e, rels[index_of[e.target]][2], root_map)
            if bound is None or bound[1] is not combo[index_of[e.target]][1]:
                ok = False
                break
        if ok:
            yield tuple(combo)


# -- set operations ----------------------------------------------------------

def _eval_set_op(node: SetOp, child, root_map):
    targets = [_nav(child, p) for p in node.inputs]
    base = node.child.output_type
    t = _type_at(base, node.inputs[0], base)
    return _set_op(node.op, targets, t)


def _set_op(op, targets, t: MapType):
    # databases recurse name-wise; relations use assignment semantics
    if t.entries and all(isinstance(e.domain, MapTypeDomain) for e in t.entries) and t.entries:
        first = targets[0]
        keys = first.keys()
        out_values = []
        for k in keys:
            e = t.entry(k)
            subs = [m.get(k) for m in targets]
            if any(s is None for s in subs):
                raise EvalError(f"missing {k!r} in a set operation input")
            out_values.append(_set_op(op, subs, e.domain.map_type))
        return Map._raw(keys, tuple(out_values), first.key_kind)

    first = targets[0]
    if op == "union":
        keys, values = list(first.keys()), list(first.values())
        seen = {norm_scalar(k): i for i, k in enumerate(keys)}
        for m in targets[1:]:
            for k, v in m.items():
                nk = norm_scalar(k)
                if nk in seen:
                    if values[seen[nk]] != v:
                        raise EvalError(f"union conflict under key {k!r}")
                    continue
                seen[nk] = len(keys)
                keys.append(k)
                values.append(v)
        return Map._raw(tuple(keys), tuple(values), first.key_kind)
    if op == "intersect":
        keys, values = [], []
        for k, v in first.items():
            if all(_holds(m, k, v) for m in targets[1:]):
                keys.append(k)
                values.append(v)
        return Map._raw(tuple(keys), tuple(values), first.key_kind)
    # minus
    keys, values = [], []
    for k, v in first.items():
        if not any(_holds(m, k, v) for m in targets[1:]):
            keys.append(k)
            values.append(v)
    return Map._raw(tuple(keys), tuple(values), first.key_kind)


def _holds(m: Map, k, v) -> bool:
    w = m.get(k)
    return w is not None and w == v


# -- aggregation --------------------------------------------------------------

def _eval_aggregate(node: Aggregate, child, root_map):
    results = []
    for g in node.groups:
        target = _nav(child, g.path)
        results.append(_aggregate_one(g, target, node, root_map))
    if len(results) == 1:
        return results[0]
    return Map._raw(tuple(g.name for g in node.groups), tuple(results))


def _aggregate_one(g, target: Map, node: Aggregate, root_map):
    buckets = {}
    order = []
    for _, elem in target.items():
        if g.by:
            key_vals = []
            skip = False
            for b in g.by:
                v = elem.get(b)
                if v is None:
                    skip = True
                    break
                key_vals.append(v)
            if skip:
                continue
            bk = tuple(norm_scalar(v) for v in key_vals)
        else:
            key_vals = []
            bk = ()
        if bk not in buckets:
            buckets[bk] = (key_vals, [])
            order.append(bk)
        buckets[bk][1].append(elem)
    if not g.by and not buckets:
        buckets[()] = ([], [])
        order.append(())

    out_entries = []
    for bk in order:
        key_vals, rows = buckets[bk]
        pairs = list(zip(g.by, key_vals))
        for a in g.aggs:
            v = _fold(a, rows)
            if v is not None:
                pairs.append((a.out, v))
        row = Map._raw(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))
        if g.by:
            key = key_vals[0] if len(key_vals) == 1 else tuple(key_vals)
            kind = "computed"
        else:
            key = len(out_entries)
            kind = "surrogate"
        out_entries.append((key, row, kind))
    kind = out_entries[0][2] if out_entries else ("computed" if g.by else "surrogate")
    return Map._raw(
        tuple(e[0] for e in out_entries), tuple(e[1] for e in out_entries), kind
    )


def _fold(a, rows):
    if a.func == "count":
        if a.source is None:
            return len(rows)
        return sum(1 for r in rows if r.get(a.source) is not None)
    vals = [v for v in (r.get(a.source) for r in rows) if v is not None]
    if a.func == "sum":
        return sum(vals) if vals else 0
    if not vals:
        return None  # absent, never NULL
    if a.func == "min":
        out = vals[0]
        for v in vals[1:]:
            if scalar_lt(v, out):
                out = v
        return out
    if a.func == "max":
        out = vals[0]
        for v in vals[1:]:
            if scalar_lt(out, v):
                out = v
        return out
    return sum(vals) / len(vals)  # avg


# -- partitioning --------------------------------------------------------------

def _eval_partition(node: Partition, child, root_map):
    target = _nav(child, node.path)
    rep = node.replication
    if rep.kind == "full":
        return Map._raw(tuple(range(rep.copies)), (target,) * rep.copies, "symbolic")
    buckets = {}
    order = []
    extras = {norm_scalar(pid): tuple(x) for pid, x in rep.assignments} if rep.kind == "partial" else {}
    for k, elem in target.items():
        pid = _eval_term(node.plan, k, elem, root_map)
        if pid is None:
            raise EvalError("partition function must be total over the elements")
        homes = [pid]
        for extra in extras.get(norm_scalar(pid), ()):
            homes.append(extra)
        for h in homes:
            nh = norm_scalar(h)
            if nh not in buckets:
                buckets[nh] = (h, [], [])
                order.append(nh)
            buckets[nh][1].append(k)
            buckets[nh][2].append(elem)
    keys = []
    values = []
    for nh in order:
        pid, ks, vs = buckets[nh]
        keys.append(pid)
        values.append(Map._raw(tuple(ks), tuple(vs), target.key_kind))
    return Map._raw(tuple(keys), tuple(values), "symbolic")


# -- normalization --------------------------------------------------------------

def _eval_denormalize(node: Denormalize, child, root_map):
    from .views import _denormalize_type, _type_at as type_at

    base = node.child.output_type
    wide_et, merge_plan = _denormalize_type(base, node.links, node.root)
    central = _nav(child, node.root)
    root_et = type_at(base, node.root, base)
    drop_refs = {
        norm_scalar(e.key)
        for e in root_et.value_domain.map_type.entries
        if isinstance(e.domain, EnumerationDomain)
    }
    out_values = []
    for _, row in central.items():
        rows_by_path = {tuple(node.root): row}
        pairs = [
            (k, v.key if isinstance(v, Ref) else v)
            for k, v in row.items()
            if norm_scalar(k) not in drop_refs
        ]
        for edge, added in merge_plan:
            src_row = rows_by_path.get(tuple(edge.source))
            if src_row is None:
                continue
            target_relmap = _nav(child, edge.target)
            bound = _probe(src_row, edge, target_relmap, root_map)
            if bound is None:
                if all(src_row.get(k) is None for k in edge.keys):
                    continue  # optional link absent: wide row simply lacks those keys
                raise EvalError(
                    f"dangling link while denormalizing via {edge.keys!r}"
                )
            rows_by_path[tuple(edge.target)] = bound[1]
            trow = bound[1]
            for attr, out_name in added:
                v = trow.get(attr)
                if v is not None:
                    if isinstance(v, Ref):
                        v = v.key
                    pairs.append((out_name, v))
        out_values.append(
            Map._raw(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs),
                     row.key_kind)
        )
    return Map._raw(central.keys(), tuple(out_values), central.key_kind)


def _eval_factorize(node: Factorize, child, root_map):
    target = _nav(child, node.path)
    spec = node.spec
    entity_maps = {}
    for ent in spec.entities:
        rows = {}
        order = []
        for _, elem in target.items():
            pairs = [(a, elem.get(a)) for a in ent.attrs if elem.get(a) is not None]
            proj = Map._raw(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))
            kvals = [elem.get(k) for k in ent.key]
            if any(v is None for v in kvals):
                raise EvalError("factorize needs the determinant keys present")
            key = kvals[0] if len(kvals) == 1 else tuple(kvals)
            nk = norm_scalar(key)
            if nk in rows:
                if rows[nk][1] != proj:
                    raise FactorizationConflictError(
                        f"factorization conflict in {ent.name!r}: key {key!r} "
                        "does not determine its attributes",
                        witnesses=(rows[nk][1], proj),
                    )
                continue
            rows[nk] = (key, proj)
            order.append(nk)
        entity_maps[ent.name] = Map._raw(
            tuple(rows[nk][0] for nk in order),
            tuple(rows[nk][1] for nk in order),
            "computed",
        )
    claimed = set()
    for ent in spec.entities:
        keyset = {norm_scalar(k) for k in ent.key}
        for a in ent.attrs:
            if norm_scalar(a) not in keyset:
                claimed.add(norm_scalar(a))
    central_values = []
    for _, elem in target.items():
        pairs = [(k, v) for k, v in elem.items() if norm_scalar(k) not in claimed]
        central_values.append(
            Map._raw(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs),
                     elem.key_kind)
        )
    central = Map._raw(target.keys(), tuple(central_values), target.key_kind)
    names = [spec.central] + [ent.name for ent in spec.entities]
    values = [central] + [entity_maps[ent.name] for ent in spec.entities]
    return Map._raw(tuple(names), tuple(values))


# -- semi-join full reduction ---------------------------------------------------

def _eval_subdb(node: SubdbReduce, child, root_map):
    relmaps = {}
    names = []
    for k, v in child.items():
        relmaps[(k,)] = v
        names.append(k)

    survivors = {}
    for p, relmap in relmaps.items():
        survivors[p] = {norm_scalar(k): (k, row) for k, row in relmap.items()}
    for p, _, plan in node.filters:
        surv = survivors[tuple(p)]
        survivors[tuple(p)] = {
            nk: (k, row) for nk, (k, row) in surv.items()
            if _eval_pred(plan, k, row, root_map)
        }

    removals, roots = node.tree
    edges = node.links

    def reduce_pair(keep_path, by_path, edge_ids):
        keep = survivors[keep_path]
        out = {}
        for nk, (k, row) in keep.items():
            ok = True
            for i in edge_ids:
                e = edges[i]
                if tuple(e.source) == keep_path:
                    if not _link_survives(row, e, survivors[tuple(e.target)]):
                        ok = False
                        break
                else:
                    if not _reverse_survives(k, row, e, survivors[tuple(e.source)]):
                        ok = False
                        break
            if ok:
                out[nk] = (k, row)
        survivors[keep_path] = out

    for chi, par, edge_ids in removals:          # leaf-to-root
        reduce_pair(par, chi, edge_ids)
    for chi, par, edge_ids in reversed(removals):  # root-to-leaf
        reduce_pair(chi, par, edge_ids)

    # participation is across the whole join: one empty relation means no
    # full join result exists at all
    if any(not s for s in survivors.values()) and any(s for s in survivors.values()):
        for p in survivors:
            survivors[p] = {}

    out_values = []
    outer = {tuple(p) for p in node.outer_inputs}
    for name in names:
        p = (name,)
        relmap = relmaps[p]
        surv = survivors[p]
        if node.mode == "outer" and p in outer:
            out_values.append(_outer_relmap(relmap, surv, p, node, survivors))
            continue
        if len(surv) == len(relmap):
            out_values.append(relmap)
            continue
        out_values.append(
            Map._raw(
                tuple(k for k, _ in surv.values()),
                tuple(row for _, row in surv.values()),
                relmap.key_kind,
            )
        )
    return Map._raw(child.keys(), tuple(out_values), child.key_kind)


def _link_survives(row, edge, target_survivors):
    vals = [row.get(k) for k in edge.keys]
    if any(v is None for v in vals):
        return False
    if len(vals) == 1:
        v = vals[0]
        nk = _link_key(v)
        if nk is None:  # embedded member: match by identity
            return any(t is v or t == v for _, t in target_survivors.values())
        return nk in target_survivors
    key = tuple(x.key if isinstance(x, Ref) else x for x in vals)
    return norm_scalar(key) in target_survivors


def _reverse_survives(k, row, edge, source_survivors):
    for _, src_row in source_survivors.values():
        vals = [src_row.get(kk) for kk in edge.keys]
        if any(v is None for v in vals):
            continue
        if len(vals) == 1:
            v = vals[0]
            nk = _link_key(v)
            if nk is None:
                if v is row or v == row:
                    return True
            elif nk == norm_scalar(k):
                return True
        else:
            key = tuple(x.key if isinstance(x, Ref) else x for x in vals)
            if norm_scalar(key) == norm_scalar(k):
                return True
    return False


def _outer_relmap(relmap, surv, path, node, survivors):
    """Outer mode keeps non-participants but drops their now-dangling
    link attributes (the output schema marks those keys optional)."""
    link_keys = {}
    for e in node.links:
        if tuple(e.source) == path:
            for k in e.keys:
                link_keys[norm_scalar(k)] = e
    out_vals = []
    for k, row in relmap.items():
        if norm_scalar(k) in surv:
            out_vals.append(row)
            continue
        pairs = []
        for ak, av in row.items():
            e = link_keys.get(norm_scalar(ak))
            if e is not None and not _link_survives(row, e, survivors[tuple(e.target)]):
                continue
            pairs.append((ak, av))
        out_vals.append(
            Map._raw(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs),
                     row.key_kind)
        )
    return Map._raw(relmap.keys(), tuple(out_vals), relmap.key_kind)


# --------------------------------------------------------------------------
# In-place application

def apply_in_place(db, view: ViewExpr, allocators=None):
    """Apply a view as a rewrite rule, returning the next database value
    (not yet validated or published; the store does both)."""
    from .schema import Database

    if isinstance(view, Mutation):
        return _apply_mutation(db, view, allocators or {})
    if view.contains_mutation():
        raise RejectedRewriteError(
            "rejected rewrite: mutations cannot be nested inside other views"
        )
    if view.output_type != db.schema.map_type:
        raise RejectedRewriteError(
            "rejected rewrite: the view does not produce this database's schema"
        )
    result = _eval(view, db.content)
    shared = []
    for k, v in result.items():
        old = db.content.get(k)
        shared.append(old if old is v or old == v else v)
    content = Map._raw(result.keys(), tuple(shared), result.key_kind)
    return Database(db.schema, content)


def _apply_mutation(db, node: Mutation, allocators):
    from .schema import Database

    content = db.content
    schema = db.schema
    if node.op == "insert":
        if node.path:
            relmap = _nav(content, node.path)
            rt = _type_at(node.input_type, node.path, node.input_type)
            key = node.explicit_key
            if rt.key_policy.kind == POLICY_COMPUTED:
                key = compute_key(rt.key_policy.pi, node.payload).value
            elif rt.key_policy.kind == POLICY_SURROGATE:
                alloc = allocators.get(tuple(node.path))
                if alloc is None:
                    raise RejectedRewriteError(
                        "rejected rewrite: no identity allocator for this relation"
                    )
                key = alloc.allocate()
            try:
                new_relmap = relmap.with_entry(key, node.payload)
            except MapKeyError as exc:
                raise RejectedRewriteError(f"rejected rewrite: {exc}") from exc
            content = _replace_value(content, node.path, new_relmap)
        else:
            schema = schema.with_relmap(node.explicit_key, node.relmap_type)
            content = content.with_entry(node.explicit_key, node.payload)
        return Database(schema, content)

    if node.op == "update":
        relmap = _nav(content, node.path)
        rt = _type_at(node.input_type, node.path, node.input_type)
        plan = node.plans[0]
        keys = list(relmap.keys())
        values = list(relmap.values())
        for i, (k, elem) in enumerate(relmap.items()):
            if not _eval_pred(plan, k, elem, content):
                continue
            ekeys = list(elem.keys())
            evals = list(elem.values())
            pos = {norm_scalar(x): j for j, x in enumerate(ekeys)}
            for out_key, tplan in node.spec_plans:
                v = _eval_term(tplan, k, elem, content)
                j = pos.get(norm_scalar(out_key))
                if v is None:
                    continue
                if j is None:
                    pos[norm_scalar(out_key)] = len(ekeys)
                    ekeys.append(out_key)
                    evals.append(v)
                else:
                    evals[j] = v
            new_elem = Map._raw(tuple(ekeys), tuple(evals), elem.key_kind)
            values[i] = new_elem
            if rt.key_policy.kind == POLICY_COMPUTED:
                keys[i] = compute_key(rt.key_policy.pi, new_elem).value
        try:
            new_relmap = Map(zip(keys, values), kind=relmap.key_kind)
        except MapKeyError as exc:
            raise RejectedRewriteError(f"rejected rewrite: {exc}") from exc
        return Database(schema, _replace_value(content, node.path, new_relmap))

    # delete
    if node.path:
        relmap = _nav(content, node.path)
        plan = node.plans[0]
        pairs = [
            (k, v) for k, v in relmap.items() if not _eval_pred(plan, k, v, content)
        ]
        new_relmap = Map._raw(
            tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), relmap.key_kind
        )
        return Database(schema, _replace_value(content, node.path, new_relmap))
    plan = node.plans[0]
    keep = [(k, v) for k, v in content.items() if not _eval_pred(plan, k, v, content)]
    gone = [k for k, _ in content.items() if k not in [p[0] for p in keep]]
    for name in gone:
        schema = schema.without_relmap(name)
    return Database(
        schema,
        Map._raw(tuple(k for k, _ in keep), tuple(v for _, v in keep), content.key_kind),
    )


def _replace_value(root: Map, path, new_value):
    if not path:
        return new_value
    head, rest = path[0], path[1:]
    pos = root.position(head)
    if pos is None:
        raise EvalError(f"nothing at {head!r}")
    values = list(root.values())
    values[pos] = _replace_value(values[pos], rest, new_value)
    return Map._raw(root.keys(), tuple(values), root.key_kind)
