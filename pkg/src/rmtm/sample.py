"""A small teaching database (professors, lectures, departments, and who
gives what where) used by the test suite and the CLI demos.

The same logical schema is available in two encodings: `linked=False`
keeps classic integer foreign keys, `linked=True` links entries directly.
"""
from __future__ import annotations

from .core import Map, Ref, Symbol, record
from .schema import Database, DatabaseSchema
from .types import (
    EnumerationDomain,
    ForeignKeyDomain,
    KeyPolicy,
    MapType,
    ScalarDomain,
    rmt,
    rhomt,
)

PROFESSORS = Symbol("Professors")
LECTURES = Symbol("Lectures")
DEPARTMENTS = Symbol("Departments")
GIVE = Symbol("give")


def profs_element_v2() -> MapType:
    """Tuple type with an optional date-of-birth attribute."""
    return rmt(
        [("id", "int"), ("name", "text"), ("age", "int"), ("dob", "text")],
        optional=("dob",),
    )


def sample_schema(linked: bool = False) -> DatabaseSchema:
    profs = rmt([("name", "text"), ("age", "int")])
    lectures = rmt([("name", "text")])
    departments = rmt([("name", "text"), ("size", "int")])
    if linked:
        link = EnumerationDomain
        give = rmt(
            [
                ("p", link((PROFESSORS,))),
                ("l", link((LECTURES,))),
                ("d", link((DEPARTMENTS,))),
                ("room", "text"),
                ("year", "int"),
            ]
        )
    else:
        give = rmt(
            [
                ("p", ForeignKeyDomain((PROFESSORS,), "int")),
                ("l", ForeignKeyDomain((LECTURES,), "int")),
                ("d", ForeignKeyDomain((DEPARTMENTS,), "int")),
                ("room", "text"),
                ("year", "int"),
            ]
        )
    int_keys = ScalarDomain("int")
    return DatabaseSchema(
        [
            (PROFESSORS, rhomt(profs, key_domain=int_keys)),
            (LECTURES, rhomt(lectures, key_domain=int_keys)),
            (DEPARTMENTS, rhomt(departments, key_domain=int_keys)),
            (GIVE, rhomt(give, key_domain=int_keys,
                         key_policy=KeyPolicy("surrogate"))),
        ],
        named_types={"ProfsRMT": profs},
    )


_GIVE_ROWS = (
    # (p, l, d, room, year)
    (31, 17, 1, "R1", 2024),
    (32, 66, 1, "R2", 2025),
    (31, 66, 2, "R1", 2025),
    (42, 17, 2, "R2", 2025),
)


def sample_db(linked: bool = False) -> Database:
    schema = sample_schema(linked=linked)
    professors = Map(
        [
            (42, record(name="Luke", age=35)),
            (31, record(name="Horst", age=25)),
            (32, record(name="Horst", age=25)),
        ]
    )
    lectures = Map(
        [
            (17, record(name="Databases are great")),
            (66, record(name="NOSQL sucks")),
        ]
    )
    departments = Map(
        [
            (1, record(name="CS", size=120)),
            (2, record(name="Math", size=35)),
        ]
    )

    def link(path, key):
        return Ref((path,), key) if linked else key

    give_rows = []
    for i, (p, l, d, room, year) in enumerate(_GIVE_ROWS):
        row = Map(
            [
                (Symbol("p"), link(PROFESSORS, p)),
                (Symbol("l"), link(LECTURES, l)),
                (Symbol("d"), link(DEPARTMENTS, d)),
                (Symbol("room"), room),
                (Symbol("year"), year),
            ]
        )
        give_rows.append((i, row))
    give = Map(give_rows, kind="surrogate")

    return Database.from_relmaps(
        schema,
        {
            PROFESSORS: professors,
            LECTURES: lectures,
            DEPARTMENTS: departments,
            GIVE: give,
        },
    )
