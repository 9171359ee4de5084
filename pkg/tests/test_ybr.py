"""Semi-join full reduction: acyclicity, participation correctness,
idempotence, the outer variant."""
import random

import pytest

from rmtm.core import Map, Symbol, record, sym
from rmtm.errors import CyclicJoinGraphError
from rmtm.schema import Database, DatabaseSchema, swizzle, validate_database
from rmtm.types import ForeignKeyDomain, ScalarDomain, rhomt, rmt
from rmtm.views import LinkEdge, and_, eq, key, lit, make_subdb_reduce
from rmtm.views_eval import eval_out_of_place
from rmtm.ybr import build_join_forest

from .generators import random_chain_db, random_star_db
from .oracles import oracle_participation, reduced_key_tokens


def _edges_for(edges):
    return tuple(LinkEdge((s,), (a,), (t,)) for s, a, t in edges)


def test_forest_construction():
    edges = _edges_for([("alpha", "x", "beta"), ("beta", "y", "gamma")])
    removals, roots = build_join_forest(
        [("alpha",), ("beta",), ("gamma",)], edges)
    assert len(removals) == 2
    assert len(roots) == 1


def test_cycle_detected():
    edges = _edges_for([
        ("alpha", "x", "beta"), ("beta", "y", "gamma"), ("gamma", "z", "alpha"),
    ])
    with pytest.raises(CyclicJoinGraphError):
        build_join_forest([("alpha",), ("beta",), ("gamma",)], edges)


def test_self_link_rejected():
    edges = _edges_for([("alpha", "x", "alpha")])
    with pytest.raises(CyclicJoinGraphError):
        build_join_forest([("alpha",)], edges)


def test_isolated_nodes_are_their_own_roots():
    removals, roots = build_join_forest([("a",), ("b",)], ())
    assert removals == ()
    assert roots == (("a",), ("b",))


def test_cyclic_schema_refused_by_the_view(fk_db):
    schema = DatabaseSchema([
        ("a", rhomt(rmt([("x", ForeignKeyDomain(("b",), "int"))]),
                    key_domain=ScalarDomain("int"))),
        ("b", rhomt(rmt([("y", ForeignKeyDomain(("a",), "int"))]),
                    key_domain=ScalarDomain("int"))),
    ])
    with pytest.raises(CyclicJoinGraphError):
        make_subdb_reduce(schema)


def test_no_filters_dangling_free_is_unchanged(fk_db):
    v = make_subdb_reduce(fk_db.schema)
    out = eval_out_of_place(v, fk_db, keep_refs=True)
    assert out == fk_db.content
    # untouched relations come back as the same objects
    assert out.get(sym("give")) is fk_db.relmap("give")


def test_sample_reduction_with_filters(fk_db):
    """Professors.age == 42 matches nobody, so nothing participates in
    any full join result: every relation reduces to empty."""
    v = make_subdb_reduce(fk_db.schema, filters=[
        (("Professors",), eq(key("age"), lit(42))),
        (("give",), eq(key("year"), lit(2025))),
    ])
    out = eval_out_of_place(v, fk_db, keep_refs=True)
    assert all(len(out.get(n)) == 0 for n in fk_db.schema.names())


def test_sample_reduction_selective(fk_db):
    v = make_subdb_reduce(fk_db.schema, filters=[
        (("give",), eq(key("year"), lit(2024))),
    ])
    out = eval_out_of_place(v, fk_db, keep_refs=True)
    assert sorted(out.get(sym("Professors")).keys()) == [31]
    assert sorted(out.get(sym("Lectures")).keys()) == [17]
    assert sorted(out.get(sym("Departments")).keys()) == [1]
    assert sorted(out.get(sym("give")).keys()) == [0]


def test_unreferenced_rows_are_dangling(fk_db):
    extra = fk_db.relmap("Lectures").with_entry(99, record(name="Unloved"))
    db = fk_db.with_relmap("Lectures", extra)
    assert validate_database(db).conforms
    v = make_subdb_reduce(db.schema)
    out = eval_out_of_place(v, db, keep_refs=True)
    assert 99 not in out.get(sym("Lectures"))
    assert sorted(out.get(sym("Lectures")).keys()) == [17, 66]


def test_idempotent(fk_db):
    v = make_subdb_reduce(fk_db.schema, filters=[
        (("give",), eq(key("year"), lit(2025))),
    ])
    once = eval_out_of_place(v, fk_db, keep_refs=True)
    again = eval_out_of_place(v, Database(fk_db.schema, once, attach=False),
                              keep_refs=True)
    assert once == again


def test_outer_mode_keeps_non_participants(fk_db):
    v = make_subdb_reduce(
        fk_db.schema, mode="outer",
        filters=[(("give",), eq(key("year"), lit(2024)))],
        outer_inputs=[("give",)],
    )
    out = eval_out_of_place(v, fk_db, keep_refs=True)
    give = out.get(sym("give"))
    assert len(give) == 4  # everything retained on the outer input
    # non-participants dropped their now-dangling professor links
    non_part = give.get(1)
    assert sym("p") not in non_part
    part = give.get(0)
    assert part.get(sym("p")) == 31
    # and the output schema marks the link keys optional
    give_et = v.output_type.entry(sym("give")).domain.map_type.value_domain.map_type
    assert give_et.entry(sym("p")).optional


def test_outer_inputs_must_be_known(fk_db):
    from rmtm.errors import ViewConstructionError
    with pytest.raises(ViewConstructionError):
        make_subdb_reduce(fk_db.schema, mode="outer", outer_inputs=[("zzz",)])
    with pytest.raises(ViewConstructionError):
        make_subdb_reduce(fk_db.schema, mode="inner", outer_inputs=[("give",)])


def test_randomized_against_participation_oracle():
    """Star- and chain-shaped acyclic databases, sometimes swizzled,
    sometimes filtered: the reducer's survivors equal the brute-force
    participation sets, and reducing twice changes nothing."""
    rng = random.Random(424242)
    for trial in range(60):
        if rng.random() < 0.5:
            db, edges = random_star_db(rng, n_rels=3, max_rows=25)
        else:
            db, edges = random_chain_db(rng, length=3, max_rows=25)
        if rng.random() < 0.4:
            db = swizzle(db)
        filters = []
        row_filters = {}
        if rng.random() < 0.6:
            name = rng.choice([n.name for n in db.schema.names()])
            attr = f"{name}_v" if name != "alpha" else "m"
            et = db.schema.element_type(name)
            if et.entry(attr) is not None:
                cut = rng.randint(0, 9)
                filters.append(((name,), eq(key(attr), lit(cut))))
                row_filters[name] = (
                    lambda attrs, a=attr, c=cut: attrs.get(a) == f'["int", {c}]'
                )
        v = make_subdb_reduce(db.schema, filters=filters)
        out = eval_out_of_place(v, db, keep_refs=True)
        expected = oracle_participation(
            {n.name: db.relmap(n) for n in db.schema.names()},
            edges, row_filters,
        )
        for n in db.schema.names():
            assert reduced_key_tokens(out.get(n)) == expected[n.name], (
                trial, n.name)
        again = eval_out_of_place(
            v, Database(db.schema, out, attach=False), keep_refs=True)
        assert again == out
