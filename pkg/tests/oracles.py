"""Independent brute-force oracles the engine is checked against.

Everything here works on plain Python dicts and lists, never on the
engine's evaluator, so a bug cannot hide on both sides of a comparison.
"""
from __future__ import annotations

import itertools
import json

from rmtm.core import Map, Ref, Symbol, scalar_kind


def plain_scalar(v):
    k = scalar_kind(v)
    if k == "symbol":
        return ["sym", v.name]
    if k == "date":
        return ["date", v.isoformat()]
    if k == "composite":
        return ["tuple", [plain_scalar(x) for x in v]]
    return [k, v]


def plain(v):
    """Normal form: links collapse to their target keys."""
    if isinstance(v, Ref):
        return ["link", plain_scalar(v.key)]
    if isinstance(v, Map):
        return {
            json.dumps(plain_scalar(k)): plain(val) for k, val in v.items()
        }
    return plain_scalar(v)


def plain_rows(relmap: Map):
    """Multiset normal form of a relation's rows (keys dropped)."""
    return sorted(json.dumps(plain(row), sort_keys=True) for row in relmap.values())


def plain_entries(relmap: Map):
    """Key-aware normal form."""
    return sorted(
        json.dumps([plain_scalar(k), plain(v)], sort_keys=True)
        for k, v in relmap.items()
    )


def rows_of(relmap: Map):
    """Rows as (key, {attr-name: normalized scalar}) with links collapsed
    to keys, for the brute-force join loops."""
    out = []
    for k, row in relmap.items():
        attrs = {}
        for a, v in row.items():
            name = a.name if isinstance(a, Symbol) else str(a)
            if isinstance(v, Ref):
                attrs[name] = json.dumps(plain_scalar(v.key))
            elif isinstance(v, Map):
                attrs[name] = json.dumps(plain(v), sort_keys=True)
            else:
                attrs[name] = json.dumps(plain_scalar(v))
        out.append((k, attrs))
    return out


def key_token(k):
    return json.dumps(plain_scalar(k))


def oracle_join(relmaps, edges, kind, preserved=None, outer_sides=(), predicate=None):
    """Nested-loop n-ary join over plain rows.

    relmaps: {name: Map}; edges: (src_name, attr, tgt_name) triples where
    attr holds the target's key (links already collapse to keys).
    Returns a sorted multiset of concatenated rows for inner/outer/cross,
    or the sorted participating key tokens for semi.
    """
    names = list(relmaps)
    tables = {n: rows_of(relmaps[n]) for n in names}
    key_of = {n: [key_token(k) for k, _ in tables[n]] for n in names}

    combos = []
    for combo in itertools.product(*(range(len(tables[n])) for n in names)):
        pos = dict(zip(names, combo))
        ok = True
        for s, attr, t in edges:
            srow = tables[s][pos[s]][1]
            if attr not in srow or srow[attr] != key_of[t][pos[t]]:
                ok = False
                break
        if ok and predicate is not None:
            merged = {}
            for n in names:
                for a, v in tables[n][pos[n]][1].items():
                    merged[f"{n}.{a}"] = v
            if not predicate(merged):
                ok = False
        if ok:
            combos.append(pos)

    if kind == "semi":
        hit = {key_of[preserved][pos[preserved]] for pos in combos}
        return sorted(hit)

    rows = []
    for pos in combos:
        merged = {}
        for n in names:
            for a, v in tables[n][pos[n]][1].items():
                merged[f"{n}.{a}"] = v
        rows.append(merged)
    if kind == "outer":
        for n in outer_sides:
            matched = {pos[n] for pos in combos}
            for i, (k, attrs) in enumerate(tables[n]):
                if i not in matched:
                    rows.append({f"{n}.{a}": v for a, v in attrs.items()})
    return sorted(json.dumps(r, sort_keys=True) for r in rows)


def engine_join_rows(relmap: Map):
    """The engine's join output in the oracle's comparison form."""
    rows = []
    for row in relmap.values():
        merged = {}
        for a, v in row.items():
            name = a.name if isinstance(a, Symbol) else str(a)
            if isinstance(v, Ref):
                merged[name] = json.dumps(plain_scalar(v.key))
            elif isinstance(v, Map):
                merged[name] = json.dumps(plain(v), sort_keys=True)
            else:
                merged[name] = json.dumps(plain_scalar(v))
        rows.append(merged)
    return sorted(json.dumps(r, sort_keys=True) for r in rows)


def oracle_participation(relmaps, edges, row_filters=None):
    """Brute-force full-join participation sets.

    Returns {name: sorted key tokens that appear in at least one full
    join result across the whole database}. An empty relation (or one
    emptied by its filter) annihilates everything: no full result exists.
    """
    names = list(relmaps)
    row_filters = row_filters or {}
    tables = {}
    keys = {}
    for n in names:
        rows = rows_of(relmaps[n])
        flt = row_filters.get(n)
        idx = [i for i, (k, attrs) in enumerate(rows) if flt is None or flt(attrs)]
        tables[n] = rows
        keys[n] = idx
    participating = {n: set() for n in names}
    for combo in itertools.product(*(keys[n] for n in names)):
        pos = dict(zip(names, combo))
        ok = True
        for s, attr, t in edges:
            srow = tables[s][pos[s]][1]
            if attr not in srow or srow[attr] != key_token(tables[t][pos[t]][0]):
                ok = False
                break
        if ok:
            for n in names:
                participating[n].add(key_token(tables[n][pos[n]][0]))
    return {n: sorted(participating[n]) for n in names}


def reduced_key_tokens(relmap: Map):
    return sorted(key_token(k) for k in relmap.keys())
