"""Canonical serialization round-trips, lossless for key kinds and
optionality marks."""
from datetime import date

import pytest

from rmtm.core import Map, Ref, record, sym
from rmtm.errors import SerializationError
from rmtm.sample import profs_element_v2, sample_db, sample_schema
from rmtm.serialize import dumps, loads, parse_date
from rmtm.types import computed, rhomt


def roundtrip(obj):
    return loads(dumps(obj))


def test_scalar_roundtrips():
    for v in (0, -3, 2.5, True, False, "text", sym("symbol"),
              date(1979, 6, 21), (1, "a", sym("b"))):
        assert roundtrip(Map([(sym("k"), v)])) == Map([(sym("k"), v)])


def test_int_float_distinction_survives():
    m = record(a=1, b=1.0)
    r = roundtrip(m)
    assert isinstance(r.get(sym("a")), int)
    assert isinstance(r.get(sym("b")), float)
    assert r == m


def test_symbol_vs_text_values():
    m = record(a="name", b=sym("name"))
    r = roundtrip(m)
    assert r.get(sym("a")) == "name"
    assert r.get(sym("b")) == sym("name")


def test_plain_object_form_for_symbolic_maps():
    s = dumps(record(name="Luke", age=35))
    assert s == '{"name": "Luke", "age": 35}'


def test_tagged_form_for_non_symbol_keys():
    m = Map([(42, record(name="Luke"))], kind="computed")
    s = dumps(m)
    assert '"$map"' in s
    r = roundtrip(m)
    assert r == m
    assert r.key_kind == "computed"


def test_key_kind_survives():
    for kind in ("symbolic", "computed", "surrogate"):
        m = Map([(0, record(a=1))], kind=kind)
        assert roundtrip(m).key_kind == kind


def test_ref_form():
    r = Ref(("Professors",), 31)
    s = dumps(Map([(sym("p"), r)]))
    assert '"$ref"' in s
    back = roundtrip(Map([(sym("p"), r)]))
    assert back.get(sym("p")) == r
    assert not back.get(sym("p")).resolved


def test_resolved_refs_serialize_symbolically(link_db):
    back = loads(dumps(link_db.content))
    give = back.get(sym("give"))
    p = give.values()[0].get(sym("p"))
    assert isinstance(p, Ref) and not p.resolved
    assert back == link_db.content  # refs compare by path+key


def test_map_type_roundtrip_keeps_optionality():
    t = profs_element_v2()
    r = roundtrip(t)
    assert r == t
    assert r.entry(sym("dob")).optional


def test_map_type_roundtrip_keeps_key_policy():
    t = rhomt(profs_element_v2(), key_policy=computed("id"))
    r = roundtrip(t)
    assert r == t
    assert r.key_policy.kind == "computed"


def test_schema_and_database_roundtrip(fk_db, link_db):
    for db in (fk_db, link_db):
        assert roundtrip(db.schema.map_type) == db.schema.map_type
        assert roundtrip(db.content) == db.content


def test_null_rejected():
    with pytest.raises(SerializationError):
        loads('{"a": null}')


def test_unknown_tags_rejected():
    with pytest.raises(SerializationError):
        loads('{"$bogus": 1}')


def test_parse_date_normalizes():
    assert parse_date("1979-06-21") == date(1979, 6, 21)
    assert parse_date("21-6-1979") == date(1979, 6, 21)
    with pytest.raises(SerializationError):
        parse_date("21/6/1979")


def test_canonical_text_is_stable(fk_db):
    assert dumps(fk_db.content) == dumps(loads(dumps(fk_db.content)))
