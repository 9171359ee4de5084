"""Databases, model classification, swizzling."""
import pytest

from rmtm.core import Map, Ref, Symbol, record, sym
from rmtm.errors import IdentityError, ReferentialViolationError, SchemaError
from rmtm.sample import sample_db, sample_schema
from rmtm.schema import (
    Database,
    DatabaseSchema,
    build_relmap,
    classify_database,
    classify_schema,
    classify_type,
    swizzle,
    unswizzle,
    validate_database,
)
from rmtm.serialize import dumps
from rmtm.types import (
    EnumerationDomain,
    ForeignKeyDomain,
    MapTypeDomain,
    ScalarDomain,
    TypeEntry,
    computed,
    rhomt,
    rmt,
)


def test_sample_db_conforms(fk_db, link_db):
    assert validate_database(fk_db).conforms
    assert validate_database(link_db).conforms


def test_dangling_link_reported(link_db):
    give = link_db.relmap("give")
    first = give.values()[0].with_value(sym("p"), Ref(("Professors",), 999))
    bad_give = give.with_value(0, first)
    bad = Database(link_db.schema, link_db.content.with_value(sym("give"), bad_give))
    report = validate_database(bad)
    assert not report.conforms
    assert any(v.kind == "dangling reference" for v in report.violations)


def test_dangling_foreign_key_reported(fk_db):
    give = fk_db.relmap("give")
    first = give.values()[0].with_value(sym("p"), 999)
    bad_give = give.with_value(0, first)
    bad = Database(fk_db.schema, fk_db.content.with_value(sym("give"), bad_give))
    report = validate_database(bad)
    assert not report.conforms
    assert any(v.kind == "referential violation" for v in report.violations)


def test_empty_db_over_empty_schema_conforms():
    db = Database.from_relmaps(DatabaseSchema([]), {})
    assert validate_database(db).conforms


# ---------------------------------------------------------------------------
# classification

def test_entity_classification(fk_schema):
    assert classify_type("Professors", fk_schema) == "EntT"
    assert classify_type(fk_schema.element_type("Professors"), fk_schema) == "EntT"


def test_give_is_relationship_under_foreign_keys(fk_schema):
    assert classify_type("give", fk_schema) == "RelT"


def test_give_is_general_under_links(link_schema):
    assert classify_type("give", link_schema) == "general"


def test_structured_attribute_is_general():
    inner = rmt([("id", "int"), ("name", "text"), ("age", "int")])
    outer = rmt([("a", "int"), ("b", inner)])
    schema = DatabaseSchema([
        ("profs", rhomt(inner, key_domain=ScalarDomain("int"))),
        ("weird", rhomt(outer, key_domain=ScalarDomain("int"))),
    ])
    assert classify_type("weird", schema) == "general"
    assert classify_type("profs", schema) == "EntT"


def test_flat_rv_that_is_neither_entity_nor_relationship():
    schema = DatabaseSchema([
        ("people", rhomt(rmt([("name", "text")]), key_domain=ScalarDomain("int"))),
        ("likes", rhomt(rmt([
            ("who", ForeignKeyDomain(("people",), "int")),
            ("note", "text"),
        ]), key_domain=ScalarDomain("int"))),
    ])
    # single entity reference, arity 2: a relational variable, nothing more
    assert classify_type("likes", schema) == "RV"


def test_unregistered_type_errors(fk_schema):
    with pytest.raises(SchemaError):
        classify_type("Nope", fk_schema)
    with pytest.raises(SchemaError):
        classify_type(rmt([("zzz", "int")]), fk_schema)


def test_model_containment_flags(fk_db, link_db):
    fk = classify_database(fk_db)
    assert (fk.is_rmtm, fk.is_rm, fk.is_erm) == (True, True, True)
    linked = classify_database(link_db)
    assert (linked.is_rmtm, linked.is_rm, linked.is_erm) == (True, False, False)


def test_single_scalar_relmap_is_a_degenerate_erdb():
    schema = DatabaseSchema([
        ("only", rhomt(rmt([("v", "int")]), key_domain=ScalarDomain("int")))
    ])
    db = Database.from_relmaps(schema, {"only": Map([(0, record(v=1))])})
    assert validate_database(db).conforms
    mc = classify_database(db)
    assert (mc.is_rm, mc.is_erm) == (True, True)
    assert mc.relmap_class("only") == "EntT"


def test_rv_but_not_erm_database():
    schema = DatabaseSchema([
        ("people", rhomt(rmt([("name", "text")]), key_domain=ScalarDomain("int"))),
        ("likes", rhomt(rmt([
            ("who", ForeignKeyDomain(("people",), "int")),
            ("note", "text"),
        ]), key_domain=ScalarDomain("int"))),
    ])
    db = Database.from_relmaps(schema, {
        "people": Map([(0, record(name="a"))]),
        "likes": Map([(0, Map([(sym("who"), 0), (sym("note"), "hi")]))]),
    })
    mc = classify_database(db)
    assert mc.is_rm and not mc.is_erm


# ---------------------------------------------------------------------------
# swizzling

def test_swizzle_replaces_foreign_keys_with_links(fk_db, link_db):
    sw = swizzle(fk_db)
    assert validate_database(sw).conforms
    assert sw == link_db
    p = sw.relmap("give").values()[0].get(sym("p"))
    assert isinstance(p, Ref) and p.resolved
    assert p.target is sw.relmap("Professors").get(p.key)


def test_swizzle_without_foreign_keys_is_identity(link_db):
    again = swizzle(link_db)
    assert again == link_db
    # untouched relation maps are shared, not copied
    assert again.relmap("Professors") is link_db.relmap("Professors")


def test_swizzle_detects_dangling(fk_db):
    give = fk_db.relmap("give")
    bad_give = give.with_value(0, give.values()[0].with_value(sym("p"), 999))
    bad = Database(fk_db.schema, fk_db.content.with_value(sym("give"), bad_give))
    with pytest.raises(ReferentialViolationError):
        swizzle(bad)


def test_unswizzle_restores_foreign_keys(fk_db):
    assert unswizzle(swizzle(fk_db)) == fk_db
    assert dumps(unswizzle(swizzle(fk_db)).content) == dumps(fk_db.content)


def test_swizzle_unswizzle_on_linked_side(link_db):
    assert swizzle(unswizzle(link_db)) == link_db


def test_unswizzle_refuses_hidden_identities():
    from rmtm.types import KeyPolicy
    hidden = DatabaseSchema([
        ("things", rhomt(rmt([("v", "int")]), key_domain=ScalarDomain("int"),
                         key_policy=KeyPolicy("surrogate"))),
        ("uses", rhomt(rmt([("t", EnumerationDomain(("things",)))]),
                       key_domain=ScalarDomain("int"))),
    ])
    things = Map([(0, record(v=1))], kind="surrogate")
    uses = Map([(0, Map([(sym("t"), Ref(("things",), 0))]))])
    db = Database.from_relmaps(hidden, {"things": things, "uses": uses})
    assert validate_database(db).conforms
    with pytest.raises(IdentityError):
        unswizzle(db)


def test_swizzle_refuses_foreign_keys_into_hidden_identities():
    from rmtm.types import KeyPolicy
    schema = DatabaseSchema([
        ("things", rhomt(rmt([("v", "int")]), key_domain=ScalarDomain("int"),
                         key_policy=KeyPolicy("surrogate"))),
        ("uses", rhomt(rmt([("t", ForeignKeyDomain(("things",), "int"))]),
                       key_domain=ScalarDomain("int"))),
    ])
    things = Map([(0, record(v=1))], kind="surrogate")
    uses = Map([(0, Map([(sym("t"), 0)]))])
    db = Database(schema, Map([(sym("things"), things), (sym("uses"), uses)]))
    with pytest.raises(IdentityError):
        swizzle(db)


# ---------------------------------------------------------------------------
# record ingestion

def test_build_relmap_computed_keys():
    schema = DatabaseSchema([
        ("profs", rhomt(rmt([("id", "int"), ("name", "text")]),
                        key_policy=computed("id"))),
    ])
    relmap, keys = build_relmap(
        schema, "profs",
        [(record(id=42, name="Luke"), None), (record(id=31, name="Horst"), None)],
    )
    assert keys == [42, 31]
    assert relmap.key_kind == "computed"
    assert relmap.get(42).get(sym("name")) == "Luke"


def test_build_relmap_surrogate_keys():
    from rmtm.types import KeyPolicy
    schema = DatabaseSchema([
        ("log", rhomt(rmt([("msg", "text")]), key_policy=KeyPolicy("surrogate"))),
    ])
    relmap, keys = build_relmap(
        schema, "log", [(record(msg="a"), None), (record(msg="b"), None)]
    )
    assert keys == [0, 1]
    with pytest.raises(IdentityError):
        build_relmap(schema, "log", [(record(msg="x"), 5)])


def test_build_relmap_coerces_dates_and_symbols():
    from datetime import date
    schema = DatabaseSchema([
        ("p", rhomt(rmt([("dob", "date"), ("tag", "symbol")]),
                    key_policy=computed("tag"))),
    ])
    relmap, _ = build_relmap(
        schema, "p", [(record(dob="21-6-1979", tag="hero"), None)]
    )
    row = relmap.values()[0]
    assert row.get(sym("dob")) == date(1979, 6, 21)
    assert row.get(sym("tag")) == sym("hero")
