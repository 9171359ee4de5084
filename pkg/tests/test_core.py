"""Map, scalar, key, and link fundamentals."""
import pytest
from datetime import date

from hypothesis import given, strategies as st

from rmtm.core import (
    Key,
    Map,
    Ref,
    Symbol,
    instance_order,
    map_of,
    record,
    scalar_eq,
    scalar_kind,
    scalar_lt,
    sym,
)
from rmtm.errors import MapKeyError, ScalarError


def test_scalar_kinds():
    assert scalar_kind(1) == "int"
    assert scalar_kind(True) == "bool"
    assert scalar_kind(1.5) == "float"
    assert scalar_kind("x") == "text"
    assert scalar_kind(sym("x")) == "symbol"
    assert scalar_kind(date(1979, 6, 21)) == "date"
    assert scalar_kind((1, "a")) == "composite"


def test_none_is_not_a_value():
    with pytest.raises(ScalarError):
        scalar_kind(None)
    with pytest.raises(ScalarError):
        Map([(sym("a"), None)])


def test_cross_variant_comparison_is_an_error():
    with pytest.raises(ScalarError):
        scalar_eq(1, "1")
    with pytest.raises(ScalarError):
        scalar_lt(1, 1.0)
    with pytest.raises(ScalarError):
        scalar_eq(1, True)
    assert scalar_eq(2, 2)
    assert scalar_lt(sym("a"), sym("b"))


def test_symbol_is_not_text():
    assert sym("name") != "name"
    assert sym("name") == sym("name")
    assert hash(sym("a")) != hash("a")


def test_map_insertion_order_and_lookup():
    m = map_of([("b", 1), ("a", 2)])
    assert list(m) == [sym("b"), sym("a")]
    assert m.get(sym("a")) == 2
    assert sym("b") in m
    assert m.get(sym("zz")) is None


def test_duplicate_keys_rejected():
    with pytest.raises(MapKeyError):
        Map([(sym("a"), 1), (sym("a"), 2)])
    m = record(a=1)
    with pytest.raises(MapKeyError):
        m.with_entry(sym("a"), 3)
    assert len(m) == 1 and m.get(sym("a")) == 1


def test_int_and_bool_keys_do_not_collide():
    m = Map([(1, "one"), (True, "yes")])
    assert m.get(1) == "one"
    assert m.get(True) == "yes"
    assert len(m) == 2


def test_map_valued_keys_rejected_with_distinct_error():
    with pytest.raises(MapKeyError):
        Map([(record(a=1), 2)])


def test_map_equality_is_order_insensitive_and_variant_strict():
    a = map_of([("x", 1), ("y", 2)])
    b = map_of([("y", 2), ("x", 1)])
    assert a == b
    assert hash(a) == hash(b)
    assert map_of([("x", 1)]) != map_of([("x", True)])
    assert map_of([("x", 1)]) != map_of([("x", 1)], kind="computed")


def test_map_immutable_updates():
    m = record(a=1)
    m2 = m.with_entry(sym("b"), 2)
    assert len(m) == 1 and len(m2) == 2
    m3 = m2.with_value(sym("a"), 9)
    assert m2.get(sym("a")) == 1 and m3.get(sym("a")) == 9
    m4 = m3.without_keys([sym("a")])
    assert list(m4) == [sym("b")]


def test_key_kinds():
    k = Key(42, "computed")
    assert k.value == 42 and k.kind == "computed"
    with pytest.raises(MapKeyError):
        Key(1, "weird")
    assert Key(1, "symbolic") != Key(1, "computed")


def test_ref_identity_and_resolution():
    target = record(name="Luke")
    r1 = Ref(("Professors",), 42, target)
    r2 = Ref(("Professors",), 42)
    assert r1 == r2  # identity is path + key, resolution is a cache
    assert hash(r1) == hash(r2)
    assert r1.resolved and not r2.resolved
    assert r1.target is target


def test_instance_order():
    assert instance_order(record(a=1)) == 0
    rel = Map([(1, record(a=1))])
    assert instance_order(rel) == 1
    db = map_of([("R", rel)])
    assert instance_order(db) == 2
    dbs = Map([(0, db)])
    assert instance_order(dbs) == 3
    # links never nest
    with_ref = Map([(1, Map([(sym("p"), Ref(("R",), 1))]))])
    assert instance_order(with_ref) == 1


scalar_keys = st.one_of(
    st.integers(-50, 50),
    st.text(min_size=1, max_size=4),
    st.text(min_size=1, max_size=4).map(sym),
)


@given(st.lists(st.tuples(scalar_keys, st.integers()), max_size=20))
def test_map_construction_keeps_first_writer(entries):
    seen = set()
    unique = []
    for k, v in entries:
        from rmtm.core import norm_scalar
        if norm_scalar(k) in seen:
            continue
        seen.add(norm_scalar(k))
        unique.append((k, v))
    m = Map(unique)
    assert len(m) == len(unique)
    for k, v in unique:
        assert m.get(k) == v


@given(st.lists(st.tuples(st.integers(0, 10), st.integers()), min_size=1))
def test_duplicate_insert_never_grows_map(entries):
    m = Map([])
    contents = {}
    for k, v in entries:
        if k in contents:
            with pytest.raises(MapKeyError):
                m.with_entry(k, v)
        else:
            m = m.with_entry(k, v)
            contents[k] = v
    assert len(m) == len(contents)
