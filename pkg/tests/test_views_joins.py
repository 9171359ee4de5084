"""Joins, set operations, aggregation, partitioning, normalization —
checked against nested-loop and hand-computed oracles."""
import random

import pytest

from rmtm.core import Map, Symbol, record, sym
from rmtm.errors import EvalError, FactorizationConflictError, ViewConstructionError
from rmtm.sample import sample_db
from rmtm.schema import swizzle, validate_database
from rmtm.types import ForeignKeyDomain, ScalarDomain, rhomt, rmt
from rmtm.views import (
    EntitySpec,
    FactorizeSpec,
    LinkEdge,
    Replication,
    TruePred,
    eq,
    gt,
    key,
    lit,
    link,
    make_aggregate,
    make_join,
    make_normalize,
    make_partition,
    make_project,
    make_set_op,
    source,
)
from rmtm.views_eval import eval_out_of_place

from .generators import random_chain_db, random_star_db
from .oracles import engine_join_rows, oracle_join, plain_entries, reduced_key_tokens


GIVE_EDGES = (
    LinkEdge(("give",), ("p",), ("Professors",)),
    LinkEdge(("give",), ("l",), ("Lectures",)),
    LinkEdge(("give",), ("d",), ("Departments",)),
)


def test_inner_join_carries_both_sides(fk_db):
    v = make_join(fk_db, "inner", [("give",), ("Professors",)],
                  on=link("give", "p", "Professors"))
    out = eval_out_of_place(v, fk_db, keep_refs=True)
    assert len(out) == 4
    row = out.values()[0]
    assert sym("give.room") in row and sym("Professors.name") in row
    assert out.key_kind == "surrogate"


def test_semi_join_keeps_schema(fk_db):
    v = make_join(fk_db, "semi", [("Professors",), ("give",)],
                  on=link("give", "p", "Professors"), preserved=("Professors",))
    out = eval_out_of_place(v, fk_db, keep_refs=True)
    assert out == fk_db.relmap("Professors")  # all professors give something
    assert v.output_type == fk_db.schema.relmap_type("Professors")


def test_semi_join_reduces(fk_db):
    # drop the lecture that professor 42 gives, then 42 no longer appears
    give = fk_db.relmap("give")
    reduced = Map([(k, v) for k, v in give.items() if v.get(sym("p")) != 42],
                  kind="surrogate")
    db = fk_db.with_relmap("give", reduced)
    v = make_join(db.schema, "semi", [("Professors",), ("give",)],
                  on=link("give", "p", "Professors"), preserved=("Professors",))
    out = eval_out_of_place(v, db, keep_refs=True)
    assert sorted(out.keys()) == [31, 32]


def test_cross_product_cardinality(fk_db):
    v = make_join(fk_db, "cross", [("Lectures",), ("Departments",)])
    out = eval_out_of_place(v, fk_db)
    assert len(out) == 4  # 2 x 2
    v3 = make_join(fk_db, "cross", [("Lectures",), ("Departments",), ("Professors",)])
    assert len(eval_out_of_place(v3, fk_db)) == 12


def test_outer_join_keeps_non_matching(fk_db):
    give = fk_db.relmap("give")
    reduced = Map([(k, v) for k, v in give.items() if v.get(sym("p")) != 42],
                  kind="surrogate")
    db = fk_db.with_relmap("give", reduced)
    v = make_join(db.schema, "outer", [("Professors",), ("give",)],
                  on=link("give", "p", "Professors"),
                  outer_sides=[("Professors",)])
    out = eval_out_of_place(v, db, keep_refs=True)
    luke_rows = [r for r in out.values() if r.get(sym("Professors.name")) == "Luke"]
    assert len(luke_rows) == 1
    assert sym("give.room") not in luke_rows[0]  # absent, not NULL
    # outer marks the other side's keys optional
    et = v.output_type.value_domain.map_type
    assert et.entry(sym("give.room")).optional
    assert validate_database  # keep import used


def test_predicate_join(fk_db):
    v = make_join(fk_db, "inner", [("Professors",), ("Departments",)],
                  on=gt(key("Professors.age"), key("Departments.size")))
    out = eval_out_of_place(v, fk_db)
    expected = oracle_join(
        {"Professors": fk_db.relmap("Professors"),
         "Departments": fk_db.relmap("Departments")},
        [], "inner",
        predicate=lambda row: _num(row["Professors.age"]) > _num(row["Departments.size"]),
    )
    assert engine_join_rows(out) == expected


def _num(token):
    import json
    return json.loads(token)[1]


def test_join_construction_errors(fk_db):
    with pytest.raises(ViewConstructionError):
        make_join(fk_db, "inner", [("give",)], on=link("give", "p", "Professors"))
    with pytest.raises(ViewConstructionError):
        make_join(fk_db, "semi", [("Professors",), ("give",)],
                  on=link("give", "p", "Professors"))  # no preserved input
    with pytest.raises(ViewConstructionError):
        make_join(fk_db, "cross", [("give",), ("give",)])  # ambiguous names
    with pytest.raises(ViewConstructionError):
        make_join(fk_db, "outer", [("give",), ("Professors",)],
                  on=link("give", "p", "Professors"),
                  outer_sides=[("Lectures",)])


def test_link_join_equals_fk_join(fk_db, link_db):
    """Probing foreign keys and following swizzled links produce the same
    join, row for row."""
    for db in (fk_db, link_db):
        v = make_join(db.schema, "inner",
                      [("give",), ("Professors",), ("Lectures",), ("Departments",)],
                      on=GIVE_EDGES)
        out = eval_out_of_place(v, db, keep_refs=True)
        oracle = oracle_join(
            {n.name: db.relmap(n) for n in db.schema.names()},
            [("give", "p", "Professors"), ("give", "l", "Lectures"),
             ("give", "d", "Departments")],
            "inner",
        )
        assert engine_join_rows(out) == oracle


def test_randomized_join_oracle_equivalence():
    """Inner, semi, outer, and cross joins match the nested-loop oracle
    on randomized databases in both encodings."""
    rng = random.Random(20250810)
    for trial in range(60):
        db, edges = random_star_db(rng, max_rows=25)
        if rng.random() < 0.5:
            db = swizzle(db)
        names = [n.name for n in db.schema.names()]
        relmaps = {n: db.relmap(n) for n in names}
        view_edges = [LinkEdge((s,), (a,), (t,)) for s, a, t in edges]
        inputs = [(n,) for n in names]

        inner = make_join(db.schema, "inner", inputs, on=view_edges)
        assert engine_join_rows(eval_out_of_place(inner, db, keep_refs=True)) == \
            oracle_join(relmaps, edges, "inner")

        preserved = rng.choice(names)
        semi = make_join(db.schema, "semi", inputs, on=view_edges,
                         preserved=(preserved,))
        got = eval_out_of_place(semi, db, keep_refs=True)
        assert reduced_key_tokens(got) == oracle_join(relmaps, edges, "semi",
                                                      preserved=preserved)

        outer_side = rng.choice(names)
        outer = make_join(db.schema, "outer", inputs, on=view_edges,
                          outer_sides=[(outer_side,)])
        assert engine_join_rows(eval_out_of_place(outer, db, keep_refs=True)) == \
            oracle_join(relmaps, edges, "outer", outer_sides=[outer_side])

    for trial in range(15):
        db, _ = random_star_db(rng, n_rels=2, max_rows=12)
        names = [n.name for n in db.schema.names()]
        cross = make_join(db.schema, "cross", [(n,) for n in names])
        assert engine_join_rows(eval_out_of_place(cross, db, keep_refs=True)) == \
            oracle_join({n: db.relmap(n) for n in names}, [], "cross")


# ---------------------------------------------------------------------------
# set operations

def _profs_relmap(db):
    return db.schema.relmap_type("Professors")


def test_minus_self_is_empty(fk_db):
    both = Map([
        (sym("a"), fk_db.relmap("Professors")),
        (sym("b"), fk_db.relmap("Professors")),
    ])
    t = rmt([("a", _profs_relmap(fk_db)), ("b", _profs_relmap(fk_db))])
    v = make_set_op(source(t), "minus", [("a",), ("b",)])
    assert len(eval_out_of_place(v, both)) == 0


def test_union_restores_partitions(fk_db):
    profs = fk_db.relmap("Professors")
    part_view = make_partition(source(_profs_relmap(fk_db)), key("age"))
    parts = eval_out_of_place(part_view, profs)
    t = rmt([("p25", _profs_relmap(fk_db)), ("p35", _profs_relmap(fk_db))])
    holder = Map([(sym("p25"), parts.get(25)), (sym("p35"), parts.get(35))])
    v = make_set_op(source(t), "union", [("p25",), ("p35",)])
    assert eval_out_of_place(v, holder) == profs


def test_nary_intersect_equals_pairwise_fold(fk_db):
    rng = random.Random(99)
    profs = fk_db.relmap("Professors")
    subsets = []
    for _ in range(3):
        subsets.append(Map([(k, v) for k, v in profs.items() if rng.random() < 0.8]))
    t = rmt([("a", _profs_relmap(fk_db)), ("b", _profs_relmap(fk_db)),
             ("c", _profs_relmap(fk_db))])
    holder = Map([(sym("a"), subsets[0]), (sym("b"), subsets[1]), (sym("c"), subsets[2])])
    nary = eval_out_of_place(make_set_op(source(t), "intersect",
                                         [("a",), ("b",), ("c",)]), holder)
    t2 = rmt([("x", _profs_relmap(fk_db)), ("y", _profs_relmap(fk_db))])
    step = eval_out_of_place(
        make_set_op(source(t2), "intersect", [("x",), ("y",)]),
        Map([(sym("x"), subsets[0]), (sym("y"), subsets[1])]))
    folded = eval_out_of_place(
        make_set_op(source(t2), "intersect", [("x",), ("y",)]),
        Map([(sym("x"), step), (sym("y"), subsets[2])]))
    assert nary == folded


def test_set_op_incompatible_schemas_rejected(fk_db):
    t = rmt([("a", _profs_relmap(fk_db)),
             ("b", fk_db.schema.relmap_type("Lectures"))])
    with pytest.raises(ViewConstructionError):
        make_set_op(source(t), "union", [("a",), ("b",)])


def test_database_level_union(fk_db):
    half1 = {"Professors": Map([(42, fk_db.relmap("Professors").get(42))]),
             "Lectures": fk_db.relmap("Lectures")}
    half2 = {"Professors": Map([(31, fk_db.relmap("Professors").get(31)),
                                (32, fk_db.relmap("Professors").get(32))]),
             "Lectures": Map()}
    small_schema = rmt([
        ("Professors", _profs_relmap(fk_db)),
        ("Lectures", fk_db.schema.relmap_type("Lectures")),
    ])
    def wrap(h):
        return Map([(sym("Professors"), h["Professors"]), (sym("Lectures"), h["Lectures"])])
    holder = Map([(sym("d1"), wrap(half1)), (sym("d2"), wrap(half2))])
    t = rmt([("d1", small_schema), ("d2", small_schema)])
    v = make_set_op(source(t), "union", [("d1",), ("d2",)])
    out = eval_out_of_place(v, holder)
    assert out.get(sym("Professors")) == fk_db.relmap("Professors")
    assert out.get(sym("Lectures")) == fk_db.relmap("Lectures")


# ---------------------------------------------------------------------------
# aggregation

def test_grouping_sets_example(fk_db):
    v = make_aggregate(fk_db, [
        ("Agg1", ("give",), ("year",), (("count", None, "n"),)),
        ("Agg2", ("give",), ("room",), (("count", None, "n"),)),
    ])
    out = eval_out_of_place(v, fk_db)
    agg1 = out.get(sym("Agg1"))
    agg2 = out.get(sym("Agg2"))
    assert {(m.get(sym("year")), m.get(sym("n"))) for m in agg1.values()} == \
        {(2024, 1), (2025, 3)}
    assert {(m.get(sym("room")), m.get(sym("n"))) for m in agg2.values()} == \
        {("R1", 2), ("R2", 2)}
    # distinct schemas, no padding entries anywhere
    keys1 = {tuple(k.name for k in m.keys()) for m in agg1.values()}
    keys2 = {tuple(k.name for k in m.keys()) for m in agg2.values()}
    assert keys1 == {("year", "n")} and keys2 == {("room", "n")}


def test_count_over_empty_global_group(fk_db):
    empty = fk_db.with_relmap("give", Map(kind="surrogate"))
    v = make_aggregate(empty.schema, [("G", ("give",), (), (("count", None, "n"),))])
    out = eval_out_of_place(v, empty)
    assert len(out) == 1
    assert out.values()[0].get(sym("n")) == 0


def test_sum_by_name(fk_db):
    v = make_aggregate(fk_db, [
        ("S", ("Professors",), ("name",), (("sum", "age", "total"),)),
    ])
    out = eval_out_of_place(v, fk_db)
    got = {m.get(sym("name")): m.get(sym("total")) for m in out.values()}
    assert got == {"Luke": 35, "Horst": 50}


def test_min_max_avg(fk_db):
    v = make_aggregate(fk_db, [
        ("G", ("Professors",), (), (
            ("min", "age", "lo"), ("max", "age", "hi"), ("avg", "age", "mean"),
        )),
    ])
    row = eval_out_of_place(v, fk_db).values()[0]
    assert row.get(sym("lo")) == 25
    assert row.get(sym("hi")) == 35
    assert row.get(sym("mean")) == pytest.approx((35 + 25 + 25) / 3)


def test_avg_over_non_numeric_rejected(fk_db):
    with pytest.raises(ViewConstructionError):
        make_aggregate(fk_db, [("G", ("Professors",), (), (("avg", "name", "x"),))])


def test_aggregate_skips_absent_optional_keys():
    et = rmt([("g", "int"), ("v", "int")], optional=("v",))
    rel = rhomt(et, key_domain=ScalarDomain("int"))
    rows = Map([(0, record(g=1, v=10)), (1, record(g=1)), (2, record(g=2))])
    v = make_aggregate(source(rel), [
        ("G", (), ("g",), (("count", None, "rows"), ("count", "v", "vs"),
                           ("sum", "v", "total"))),
    ])
    out = eval_out_of_place(v, rows)
    by_g = {m.get(sym("g")): m for m in out.values()}
    assert by_g[1].get(sym("rows")) == 2
    assert by_g[1].get(sym("vs")) == 1
    assert by_g[1].get(sym("total")) == 10
    assert by_g[2].get(sym("total")) == 0


# ---------------------------------------------------------------------------
# partitioning

def test_partition_by_age(fk_db):
    v = make_partition(fk_db, key("age"), path=("Professors",))
    out = eval_out_of_place(v, fk_db)
    assert sorted(out.keys()) == [25, 35]
    assert sorted(out.get(25).keys()) == [31, 32]
    assert list(out.get(35).keys()) == [42]


def test_replicate(fk_db):
    v = make_partition(fk_db, None, path=("Professors",),
                       replication=Replication("full", copies=2))
    out = eval_out_of_place(v, fk_db)
    assert list(out.keys()) == [0, 1]
    assert out.get(0) == out.get(1) == fk_db.relmap("Professors")


def test_partial_replication(fk_db):
    v = make_partition(
        fk_db, key("age"), path=("Professors",),
        replication=Replication("partial", assignments=((25, (35,)),)),
    )
    out = eval_out_of_place(v, fk_db)
    assert sorted(out.get(35).keys()) == [31, 32, 42]  # 25-partition replicated in
    assert sorted(out.get(25).keys()) == [31, 32]


def test_union_of_partition_is_identity_randomized(fk_db):
    rng = random.Random(7)
    profs_rel = _profs_relmap(fk_db)
    for _ in range(25):
        rows = Map([(i, record(age=rng.randint(20, 24), name=rng.choice("abc")))
                    for i in range(rng.randint(0, 30))])
        part = eval_out_of_place(make_partition(source(profs_rel), key("age")), rows)
        if len(part) < 2:
            continue
        names = [f"p{i}" for i in range(len(part))]
        t = rmt([(n, profs_rel) for n in names])
        holder = Map(list(zip(map(sym, names), part.values())))
        v = make_set_op(source(t), "union", [(n,) for n in names])
        assert eval_out_of_place(v, holder) == rows


# ---------------------------------------------------------------------------
# normalization

WIDE = rmt([
    ("prof_id", "int"), ("prof_name", "text"), ("prof_age", "int"),
    ("dept", "text"), ("dept_size", "int"), ("grade", "float"),
])
WIDE_REL = rhomt(WIDE, key_domain=ScalarDomain("int"))
SPEC = FactorizeSpec("facts", (
    EntitySpec("profs", ("prof_id", "prof_name", "prof_age"), ("prof_id",)),
    EntitySpec("depts", ("dept", "dept_size"), ("dept",)),
))


def _wide_rows(rng, n=20):
    profs = [(i, f"p{i}", 30 + i % 5) for i in range(4)]
    depts = [("CS", 100), ("EE", 50), ("ME", 75)]
    rows = []
    for i in range(n):
        p = rng.choice(profs)
        d = rng.choice(depts)
        rows.append((i, record(prof_id=p[0], prof_name=p[1], prof_age=p[2],
                               dept=d[0], dept_size=d[1],
                               grade=rng.choice((1.0, 1.3, 2.0)))))
    return Map(rows)


def test_factorize_then_denormalize_is_identity():
    rng = random.Random(11)
    for _ in range(10):
        wide = _wide_rows(rng)
        fact = make_normalize(source(WIDE_REL), "factorize", spec=SPEC)
        db_out = eval_out_of_place(fact, wide)
        denorm = make_normalize(fact, "denormalize", spec=SPEC)
        back = eval_out_of_place(denorm, wide)
        assert back == wide
        # and the factorized shape is a linked database
        assert sorted(k.name for k in db_out.keys()) == ["depts", "facts", "profs"]


def test_factorize_conflict_detected():
    rows = Map([
        (0, record(prof_id=1, prof_name="a", prof_age=30, dept="CS",
                   dept_size=100, grade=1.0)),
        (1, record(prof_id=1, prof_name="b", prof_age=30, dept="CS",
                   dept_size=100, grade=1.3)),
    ])
    fact = make_normalize(source(WIDE_REL), "factorize", spec=SPEC)
    with pytest.raises(FactorizationConflictError) as exc:
        eval_out_of_place(fact, rows)
    assert len(exc.value.witnesses) == 2


def test_denormalize_single_relation_no_links(fk_db):
    t = rmt([("only", _profs_relmap(fk_db))])
    holder = Map([(sym("only"), fk_db.relmap("Professors"))])
    v = make_normalize(source(t), "denormalize")
    assert eval_out_of_place(v, holder) == fk_db.relmap("Professors")


def test_denormalize_sample_give(fk_db, link_db):
    """Flattening the whole sample joins give with every linked side;
    colliding attribute names pick up their relation prefix, foreign-key
    columns stay as plain scalars, reference columns are consumed."""
    for db in (fk_db, link_db):
        v = make_normalize(db, "denormalize")
        out = eval_out_of_place(v, db)
        assert len(out) == 4
        row = out.get(0)
        assert row.get(sym("room")) == "R1"
        assert row.get(sym("size")) == 120
        assert row.get(sym("Professors.name")) == "Horst"
        assert row.get(sym("Lectures.name")) == "Databases are great"
        assert row.get(sym("Departments.name")) == "CS"
    flat_fk = eval_out_of_place(make_normalize(fk_db, "denormalize"), fk_db)
    assert flat_fk.get(0).get(sym("p")) == 31  # foreign keys survive flat


def test_denormalize_partial_links(fk_db):
    flat = eval_out_of_place(
        make_normalize(fk_db, "denormalize",
                       links=(GIVE_EDGES[0], GIVE_EDGES[2])),
        fk_db, keep_refs=True)
    row = flat.get(0)
    assert len(flat) == 4
    # Lectures not absorbed: its key column remains a scalar, and the
    # professor/department names need no prefix without the third source
    assert row.get(sym("l")) == 17
    assert row.get(sym("Professors.name")) == "Horst"
    assert row.get(sym("Departments.name")) == "CS"
