"""Star-join benchmark: classic hash-probe joins over foreign keys
versus pointer-follow joins over swizzled links, on one generated star
schema.

Both algorithms run over the same engine data structures and must emit
identical (count, checksum) pairs; the checksum is an order-independent
add-fold of per-row digests built from the fact measure and the content
hashes of the joined dimension rows. Timed regions run with the garbage
collector paused; unfiltered joins use generated, loop-unrolled kernels
(one per dimension count), filtered joins a generic loop.
"""
from __future__ import annotations

import csv
import gc
import random
import statistics
import time
from dataclasses import dataclass

from .core import MASK64, Map, Ref, Symbol
from .errors import RmtmError
from .schema import Database, DatabaseSchema, swizzle
from .types import (
    EnumerationDomain,
    ForeignKeyDomain,
    MapTypeDomain,
    ScalarDomain,
    rhomt,
    rmt,
)

PAYLOAD = Symbol("payload")


@dataclass(frozen=True)
class StarConfig:
    n_facts: int
    n_dims: int
    dim_size: int
    seed: int = 7
    measures: int = 1

    def __post_init__(self):
        if not (1 <= self.n_dims <= 10):
            raise RmtmError("n_dims must be between 1 and 10")
        if self.dim_size < 1:
            raise RmtmError("dim_size must be at least 1")
        if self.n_facts < 0 or self.measures < 1:
            raise RmtmError("bad star configuration")


@dataclass(frozen=True)
class JoinResult:
    count: int
    checksum: int
    elapsed_ms: float


@dataclass(frozen=True)
class BenchRow:
    n_dims: int
    n_facts: int
    dim_size: int
    rm_build_ms: float
    rmtm_build_ms: float
    swizzle_ms: float
    rm_join_ms: float
    rmtm_join_ms: float
    improvement: float
    checksum_match: bool


# --------------------------------------------------------------------------
# Schema and data generation

def star_schema(cfg: StarConfig, linked: bool) -> DatabaseSchema:
    dim_names = [Symbol(f"dim_{d}") for d in range(cfg.n_dims)]
    relmaps = []
    for name in dim_names:
        relmaps.append(
            (name, rhomt(rmt([("payload", "int")]), key_domain=ScalarDomain("int")))
        )
    fact_entries = []
    for name in dim_names:
        dom = EnumerationDomain((name,)) if linked else ForeignKeyDomain((name,), "int")
        fact_entries.append((name.name, dom))
    for m in range(cfg.measures):
        fact_entries.append((f"m{m}", "int"))
    relmaps.append(
        (Symbol("facts"), rhomt(rmt(fact_entries), key_domain=ScalarDomain("int")))
    )
    return DatabaseSchema(relmaps)


def _generate_columns(cfg: StarConfig):
    """Seed-deterministic raw data: dimension payloads, per-fact foreign
    keys, and measures. Generation is never part of a timed region."""
    rng = random.Random(cfg.seed)
    dim_payloads = [
        [rng.randrange(1_000_000) for _ in range(cfg.dim_size)]
        for _ in range(cfg.n_dims)
    ]
    fk_rows = [
        tuple(rng.randrange(cfg.dim_size) for _ in range(cfg.n_dims))
        for _ in range(cfg.n_facts)
    ]
    measure_rows = [
        tuple(rng.randrange(1_000_000) for _ in range(cfg.measures))
        for _ in range(cfg.n_facts)
    ]
    return dim_payloads, fk_rows, measure_rows


def _build_dims(cfg: StarConfig, dim_payloads):
    dim_keys = (PAYLOAD,)
    dims = []
    for payloads in dim_payloads:
        rows = tuple(Map._raw(dim_keys, (p,)) for p in payloads)
        for r in rows:
            r.content_hash()  # prime: row hashes feed the join checksums
        dims.append(Map._raw(tuple(range(cfg.dim_size)), rows))
    return dims


def _fact_keys(cfg: StarConfig) -> tuple:
    return tuple(Symbol(f"dim_{d}") for d in range(cfg.n_dims)) + tuple(
        Symbol(f"m{m}") for m in range(cfg.measures)
    )


def _build_rm_facts(cfg, fact_keys, fk_rows, measure_rows):
    """Timed: materialize the foreign-key fact table from the raw keys."""
    gc_was = gc.isenabled()
    gc.disable()
    t0 = time.perf_counter()
    raw = Map._raw
    values = []
    ap = values.append
    i = 0
    for fks in fk_rows:
        ap(raw(fact_keys, fks + measure_rows[i]))
        i += 1
    relmap = Map._raw(tuple(range(len(values))), tuple(values))
    dt = (time.perf_counter() - t0) * 1000.0
    if gc_was:
        gc.enable()
    return relmap, dt


def _build_rmtm_facts(cfg, fact_keys, fk_rows, measure_rows, ref_lists):
    """Timed: same loop, but each dense key is swapped for its interned
    reference — the pointer-creation cost the build comparison isolates."""
    getitem = list.__getitem__
    gc_was = gc.isenabled()
    gc.disable()
    t0 = time.perf_counter()
    raw = Map._raw
    values = []
    ap = values.append
    i = 0
    for fks in fk_rows:
        ap(raw(fact_keys, tuple(map(getitem, ref_lists, fks)) + measure_rows[i]))
        i += 1
    relmap = Map._raw(tuple(range(len(values))), tuple(values))
    dt = (time.perf_counter() - t0) * 1000.0
    if gc_was:
        gc.enable()
    return relmap, dt


def _ref_lists(cfg: StarConfig, dims):
    """One interned, resolved reference per dimension row; dense integer
    keys make a flat list the natural intern table."""
    out = []
    for d, dim in enumerate(dims):
        path = (Symbol(f"dim_{d}"),)
        rows = dim.values()
        out.append([Ref(path, k, rows[k]) for k in range(len(rows))])
    return out


def generate_star(cfg: StarConfig):
    """Deterministic pair of databases over the same logical star: the
    foreign-key encoding and its swizzled counterpart."""
    dim_payloads, fk_rows, measure_rows = _generate_columns(cfg)
    dims = _build_dims(cfg, dim_payloads)
    fact_keys = _fact_keys(cfg)
    rm_facts, _ = _build_rm_facts(cfg, fact_keys, fk_rows, measure_rows)
    relmaps = {Symbol(f"dim_{d}"): dims[d] for d in range(cfg.n_dims)}
    relmaps[Symbol("facts")] = rm_facts
    rm_db = Database.from_relmaps(star_schema(cfg, linked=False), relmaps)
    rmtm_db = swizzle(rm_db)
    return rm_db, rmtm_db


# --------------------------------------------------------------------------
# Join kernels

def _star_parts(db: Database):
    """Locate the fact relation and its dimension order from the schema's
    link domains."""
    fact_name = None
    dim_targets = None
    for name, rt in db.schema.items():
        et = rt.value_domain.map_type
        links = [
            (e.key, e.domain.target)
            for e in et.entries
            if isinstance(e.domain, (EnumerationDomain, ForeignKeyDomain))
        ]
        if links:
            if fact_name is not None:
                raise RmtmError("not a star: several relations carry links")
            fact_name = name
            dim_targets = links
            measure_pos = len(links)
    if fact_name is None:
        raise RmtmError("not a star: no relation carries links")
    facts = db.relmap(fact_name)
    dims = [db.relmap(t[0]) for _, t in dim_targets]
    keys0 = _fact_keys_check(db, fact_name, dim_targets)
    return facts, dims, len(dim_targets), measure_pos, keys0


def _fact_keys_check(db, fact_name, dim_targets):
    et = db.schema.element_type(fact_name)
    declared = tuple(e.key for e in et.entries)
    facts = db.relmap(fact_name)
    values = facts.values()
    if values:
        k0 = values[0]._keys
        for row in values:
            if row._keys is not k0 and row._keys != declared:
                raise RmtmError("fact rows must share the declared key order")
    return declared


def _allowed_ids(dims, filters):
    """Per-dimension sets of admissible row objects (by id). `filters`
    maps dimension index to a collection of admissible dimension keys."""
    if not filters:
        return None
    allowed = [None] * len(dims)
    for d, keep in filters.items():
        keep = set(keep)
        allowed[d] = {id(row) for k, row in dims[d].items() if k in keep}
    return allowed


_RM_KERNELS = {}
_RMTM_KERNELS = {}


def _rm_kernel(nd: int, mpos: int):
    """Unrolled probe chain for one dimension count (unfiltered runs)."""
    key = (nd, mpos)
    k = _RM_KERNELS.get(key)
    if k is not None:
        return k
    lines = ["def kernel(rows, getters, MASK64):"]
    lines.append("    " + "; ".join(f"g{d} = getters[{d}]" for d in range(nd)))
    lines.append("    count = 0; acc = 0")
    lines.append("    for fact in rows:")
    lines.append("        vals = fact._values")
    indent = "        "
    for d in range(nd):
        lines.append(f"{indent}r{d} = g{d}(vals[{d}])")
        lines.append(f"{indent}if r{d} is None: continue")
    digest = f"vals[{mpos}]"
    for d in range(nd):
        digest = f"({digest} * 31 + r{d}._hash)"
    lines.append(f"{indent}acc = (acc + {digest}) & MASK64")
    lines.append(f"{indent}count += 1")
    lines.append("    return count, acc")
    ns = {}
    exec("\n".join(lines), ns)  # noqa: S102 - generated from integers only
    k = ns["kernel"]
    _RM_KERNELS[key] = k
    return k


def _rmtm_kernel(nd: int, mpos: int):
    key = (nd, mpos)
    k = _RMTM_KERNELS.get(key)
    if k is not None:
        return k
    lines = ["def kernel(rows, MASK64):"]
    lines.append("    count = 0; acc = 0")
    lines.append("    for fact in rows:")
    lines.append("        vals = fact._values")
    digest = f"vals[{mpos}]"
    for d in range(nd):
        digest = f"({digest} * 31 + vals[{d}]._thash)"
    lines.append(f"        acc = (acc + {digest}) & MASK64")
    lines.append("        count += 1")
    lines.append("    return count, acc")
    ns = {}
    exec("\n".join(lines), ns)  # noqa: S102 - generated from integers only
    k = ns["kernel"]
    _RMTM_KERNELS[key] = k
    return k


def run_rm_star_join(db: Database, filters=None) -> JoinResult:
    """Hash star join: build one hash index per dimension on its key,
    then probe every fact's foreign keys in sequence, short-circuiting
    on the first miss."""
    facts, dims, nd, mpos, _ = _star_parts(db)
    allowed = _allowed_ids(dims, filters)
    rows = facts.values()
    gc_was = gc.isenabled()
    gc.disable()
    t0 = time.perf_counter()
    if allowed is None:
        indexes = [dict(dim.items()) for dim in dims]
        getters = [ix.get for ix in indexes]
        count, acc = _rm_kernel(nd, mpos)(rows, getters, MASK64)
    else:
        indexes = []
        for d, dim in enumerate(dims):
            ok = allowed[d]
            if ok is None:
                indexes.append(dict(dim.items()))
            else:
                indexes.append({k: r for k, r in dim.items() if id(r) in ok})
        getters = [ix.get for ix in indexes]
        count = 0
        acc = 0
        rng_nd = range(nd)
        for fact in rows:
            vals = fact._values
            digest = vals[mpos]
            hit = True
            for d in rng_nd:
                row = getters[d](vals[d])
                if row is None:
                    hit = False
                    break
                digest = digest * 31 + row._hash
            if hit:
                count += 1
                acc = (acc + digest) & MASK64
    dt = (time.perf_counter() - t0) * 1000.0
    if gc_was:
        gc.enable()
    return JoinResult(count, acc, dt)


def run_rmtm_star_join(db: Database, filters=None) -> JoinResult:
    """Pointer star join: no index build; every fact's dimension links
    are dereferenced directly."""
    facts, dims, nd, mpos, _ = _star_parts(db)
    allowed = _allowed_ids(dims, filters)
    rows = facts.values()
    if rows:
        first = rows[0]._values
        for d in range(nd):
            if not isinstance(first[d], Ref) or first[d].target is None:
                raise RmtmError("links are not swizzled; run the hash join instead")
    gc_was = gc.isenabled()
    gc.disable()
    t0 = time.perf_counter()
    if allowed is None:
        count, acc = _rmtm_kernel(nd, mpos)(rows, MASK64)
    else:
        count = 0
        acc = 0
        rng_nd = range(nd)
        for fact in rows:
            vals = fact._values
            digest = vals[mpos]
            hit = True
            for d in rng_nd:
                ref = vals[d]
                ok = allowed[d]
                if ok is not None and id(ref.target) not in ok:
                    hit = False
                    break
                digest = digest * 31 + ref._thash
            if hit:
                count += 1
                acc = (acc + digest) & MASK64
    dt = (time.perf_counter() - t0) * 1000.0
    if gc_was:
        gc.enable()
    return JoinResult(count, acc, dt)


# --------------------------------------------------------------------------
# Suite

def run_suite(cfg_template: StarConfig, dims=range(1, 11), repetitions: int = 10,
              csv_path=None, filters=None, progress=None):
    """Medians over `repetitions` per dimension count. Build timings
    cover fact-table materialization only (dimensions and raw data are
    shared, untimed inputs); the swizzle overhead is their difference."""
    if repetitions < 1:
        raise RmtmError("repetitions must be at least 1")
    rows_out = []
    for nd in dims:
        cfg = StarConfig(cfg_template.n_facts, nd, cfg_template.dim_size,
                         cfg_template.seed, cfg_template.measures)
        dim_payloads, fk_rows, measure_rows = _generate_columns(cfg)
        dims_maps = _build_dims(cfg, dim_payloads)
        fact_keys = _fact_keys(cfg)
        ref_lists = _ref_lists(cfg, dims_maps)
        schema_rm = star_schema(cfg, linked=False)
        schema_rmtm = star_schema(cfg, linked=True)
        base = {Symbol(f"dim_{d}"): dims_maps[d] for d in range(nd)}

        rm_b, rmtm_b, rm_j, rmtm_j = [], [], [], []
        match = True
        for _ in range(repetitions):
            rm_facts, t_rm_b = _build_rm_facts(cfg, fact_keys, fk_rows, measure_rows)
            rm_db = _wrap(schema_rm, base, rm_facts)
            rmtm_facts, t_rmtm_b = _build_rmtm_facts(
                cfg, fact_keys, fk_rows, measure_rows, ref_lists
            )
            rmtm_db = _wrap(schema_rmtm, base, rmtm_facts)
            r1 = run_rm_star_join(rm_db, filters)
            r2 = run_rmtm_star_join(rmtm_db, filters)
            match = match and (r1.count, r1.checksum) == (r2.count, r2.checksum)
            rm_b.append(t_rm_b)
            rmtm_b.append(t_rmtm_b)
            rm_j.append(r1.elapsed_ms)
            rmtm_j.append(r2.elapsed_ms)
            del rm_facts, rmtm_facts, rm_db, rmtm_db
            gc.collect()
        row = BenchRow(
            n_dims=nd,
            n_facts=cfg.n_facts,
            dim_size=cfg.dim_size,
            rm_build_ms=statistics.median(rm_b),
            rmtm_build_ms=statistics.median(rmtm_b),
            swizzle_ms=statistics.median(rmtm_b) - statistics.median(rm_b),
            rm_join_ms=statistics.median(rm_j),
            rmtm_join_ms=statistics.median(rmtm_j),
            improvement=statistics.median(rm_j) / statistics.median(rmtm_j),
            checksum_match=match,
        )
        rows_out.append(row)
        if progress is not None:
            progress(row)
        del dims_maps, ref_lists, fk_rows, measure_rows, base
        gc.collect()
    if csv_path is not None:
        write_csv(rows_out, csv_path)
    return rows_out


def _wrap(schema, base, facts) -> Database:
    relmaps = dict(base)
    relmaps[Symbol("facts")] = facts
    entries = [(name, relmaps[name]) for name in schema.names()]
    return Database(schema, Map(entries), attach=False)


CSV_COLUMNS = (
    "n_dims", "n_facts", "dim_size", "rm_build_ms", "rmtm_build_ms",
    "swizzle_ms", "rm_join_ms", "rmtm_join_ms", "improvement", "checksum_match",
)


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([
                r.n_dims, r.n_facts, r.dim_size,
                f"{r.rm_build_ms:.3f}", f"{r.rmtm_build_ms:.3f}",
                f"{r.swizzle_ms:.3f}", f"{r.rm_join_ms:.3f}",
                f"{r.rmtm_join_ms:.3f}", f"{r.improvement:.4f}",
                str(r.checksum_match).lower(),
            ])
