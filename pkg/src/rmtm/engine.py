"""Versioned in-memory store: snapshot reads, atomic in-place rewrites,
and surrogate identity allocation.

Versions are immutable once published and share unchanged relation maps.
Readers take snapshots and never block; at most one in-place commit per
database is in flight (single writer). A rewrite that fails validation
publishes nothing.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass

from .core import Key, Map, Symbol, scalar_kind
from .errors import (
    IdentityError,
    RejectedRewriteError,
    UnknownDatabaseError,
    WriterBusyError,
)
from .schema import Database, DatabaseSchema, validate_database
from .serialize import decode, dumps, encode, loads
from .types import POLICY_SURROGATE, SurrogateAllocator
from .views_eval import apply_in_place


@dataclass(frozen=True)
class VersionInfo:
    version: int
    timestamp: float
    description: str


class Snapshot:
    """An immutable handle onto one committed version. All reads through
    one snapshot observe that version, no matter what commits later."""

    __slots__ = ("db_name", "version", "database")

    def __init__(self, db_name: Symbol, version: int, database: Database):
        self.db_name = db_name
        self.version = version
        self.database = database

    def relmap(self, name) -> Map:
        return self.database.relmap(name)

    def resolve(self, ref) -> Map:
        return self.database.deref(ref)

    def __repr__(self):
        return f"Snapshot({self.db_name.name}@v{self.version})"


class _DbState:
    __slots__ = ("versions", "log", "allocators", "writer", "base_version")

    def __init__(self, base_version: int = 1):
        self.versions: list = []
        self.log: list = []
        self.allocators: dict = {}
        self.writer = threading.Lock()
        self.base_version = base_version

    def latest_version(self) -> int:
        return self.base_version + len(self.versions) - 1


class Store:
    """Named databases, each a chain of immutable versions."""

    def __init__(self):
        self._lock = threading.Lock()
        self._dbs: dict = {}

    # -- lifecycle ---------------------------------------------------------

    def create_database(self, name, db: Database, *, base_version: int = 1,
                        allocators=None, log=()) -> int:
        if isinstance(name, str):
            name = Symbol(name)
        report = validate_database(db)
        if not report.conforms:
            raise RejectedRewriteError(
                f"rejected rewrite: {report.summary()}", report=report
            )
        with self._lock:
            if name in self._dbs:
                raise RejectedRewriteError(f"database {name!r} already exists")
            state = _DbState(base_version)
            state.versions.append(db)
            state.log.extend(log)
            if not log:
                state.log.append(VersionInfo(base_version, time.time(), "create"))
            self._seed_allocators(state, db, allocators or {})
            self._dbs[name] = state
        return base_version

    @staticmethod
    def _seed_allocators(state: _DbState, db: Database, given: dict):
        for rel_name, rt in db.schema.items():
            if rt.key_policy.kind != POLICY_SURROGATE:
                continue
            path = (rel_name,)
            if path in state.allocators:
                continue
            if rel_name.name in given:
                state.allocators[path] = SurrogateAllocator(given[rel_name.name])
                continue
            top = -1
            for k in db.relmap(rel_name).keys():
                if scalar_kind(k) == "int" and k > top:
                    top = k
            state.allocators[path] = SurrogateAllocator(top + 1)

    def _state(self, name) -> _DbState:
        if isinstance(name, str):
            name = Symbol(name)
        state = self._dbs.get(name)
        if state is None:
            raise UnknownDatabaseError(f"unknown database {name!r}")
        return state

    def database_names(self):
        with self._lock:
            return tuple(self._dbs.keys())

    # -- reads ---------------------------------------------------------------

    def begin_snapshot(self, db_name) -> Snapshot:
        if isinstance(db_name, str):
            db_name = Symbol(db_name)
        with self._lock:
            state = self._state(db_name)
            return Snapshot(db_name, state.latest_version(), state.versions[-1])

    def history(self, db_name):
        with self._lock:
            return tuple(self._state(db_name).log)

    # -- writes --------------------------------------------------------------

    def commit_in_place(self, db_name, view, description=None) -> int:
        """Atomically publish the rewritten database as the next version.
        Nothing is published when the rewrite fails validation."""
        if isinstance(db_name, str):
            db_name = Symbol(db_name)
        state = self._state(db_name)
        if not state.writer.acquire(blocking=False):
            raise WriterBusyError(f"writer busy on {db_name!r}")
        try:
            current = state.versions[-1]
            new_db = apply_in_place(current, view, state.allocators)
            report = validate_database(new_db)
            if not report.conforms:
                raise RejectedRewriteError(
                    f"rejected rewrite: {report.summary()}", report=report
                )
            with self._lock:
                self._seed_allocators(state, new_db, {})
                state.versions.append(new_db)
                version = state.latest_version()
                state.log.append(
                    VersionInfo(version, time.time(),
                                description or _describe(view))
                )
            return version
        finally:
            state.writer.release()

    def alloc_identity(self, db_name, relmap_path) -> Key:
        """Draw a fresh, never-reused surrogate key for a relation."""
        state = self._state(db_name)
        if isinstance(relmap_path, (str, Symbol)):
            relmap_path = (relmap_path,)
        relmap_path = tuple(
            Symbol(p) if isinstance(p, str) else p for p in relmap_path
        )
        alloc = state.allocators.get(relmap_path)
        if alloc is None:
            raise IdentityError(
                "identity allocation needs a surrogate-keyed relation"
            )
        with self._lock:
            return Key(alloc.allocate(), "surrogate")


def _describe(view) -> str:
    kind = type(view).__name__.lower()
    sub = getattr(view, "op", None) or getattr(view, "join_kind", None)
    return f"{kind}:{sub}" if sub else kind


# --------------------------------------------------------------------------
# Flat-file persistence of one database's version chain

def save_database(store: Store, db_name, dirpath) -> None:
    """Write schema, any version files not yet on disk, and the version
    log (append-only) in the canonical serialization."""
    if isinstance(db_name, str):
        db_name = Symbol(db_name)
    state = store._state(db_name)
    os.makedirs(dirpath, exist_ok=True)
    with store._lock:
        versions = list(state.versions)
        base = state.base_version
        log = list(state.log)
        allocators = {p[0].name: a.peek() for p, a in state.allocators.items()}
        latest_db = versions[-1]

    meta = {
        "name": db_name.name,
        "latest": base + len(versions) - 1,
        "schema": encode(latest_db.schema.map_type),
        "allocators": allocators,
    }
    with open(os.path.join(dirpath, "db.json"), "w") as f:
        json.dump(meta, f, indent=2)
    for i, db in enumerate(versions):
        v = base + i
        path = os.path.join(dirpath, f"version-{v:04d}.json")
        if not os.path.exists(path):
            with open(path, "w") as f:
                f.write(dumps(db.content))
    log_path = os.path.join(dirpath, "log.jsonl")
    existing = 0
    if os.path.exists(log_path):
        with open(log_path) as f:
            existing = sum(1 for _ in f)
    with open(log_path, "a") as f:
        for info in log[existing:]:
            f.write(json.dumps({
                "version": info.version,
                "timestamp": info.timestamp,
                "description": info.description,
            }) + "\n")


def load_database(dirpath) -> tuple:
    """Load the latest version of a saved database; returns
    (store, name). Earlier versions stay on disk; the log is carried
    over so later saves keep appending."""
    with open(os.path.join(dirpath, "db.json")) as f:
        meta = json.load(f)
    name = Symbol(meta["name"])
    schema_type = decode(meta["schema"])
    schema = DatabaseSchema(
        [(e.key, e.domain.map_type) for e in schema_type.entries]
    )
    latest = meta["latest"]
    with open(os.path.join(dirpath, f"version-{latest:04d}.json")) as f:
        content = loads(f.read())
    log = []
    log_path = os.path.join(dirpath, "log.jsonl")
    if os.path.exists(log_path):
        with open(log_path) as f:
            for line in f:
                row = json.loads(line)
                log.append(VersionInfo(row["version"], row["timestamp"],
                                       row["description"]))
    store = Store()
    store.create_database(
        name,
        Database(schema, content),
        base_version=latest,
        allocators=meta.get("allocators", {}),
        log=tuple(log),
    )
    return store, name
