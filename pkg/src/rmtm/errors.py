"""Exception hierarchy for the rmtm engine."""


class RmtmError(Exception):
    """Base class for all engine errors."""


class ScalarError(RmtmError):
    """A value is not a legal scalar, or two scalars of different
    variants were compared."""


class MapKeyError(RmtmError):
    """Illegal map key: duplicate within a map, or a map used as a key
    (map-valued keys are rejected outright)."""


class KeyComputationError(RmtmError):
    """A key computation spec could not produce a key for a value."""


class CyclicTypeError(RmtmError):
    """A map type nests itself, so its order is undefined."""


class UnresolvedDomainError(RmtmError):
    """An enumeration or foreign-key domain names a target path that does
    not resolve to a map. Distinct from non-conformance: the type itself
    cannot be checked."""


class UnresolvedRefError(RmtmError):
    """A symbolic link was dereferenced before being attached to a
    database version."""


class SchemaError(RmtmError):
    """Bad schema construction or an unregistered type."""


class ReferentialViolationError(RmtmError):
    """A link or foreign key points at nothing; raised by operations that
    must refuse outright (swizzling detects dangling links)."""


class IdentityError(RmtmError):
    """A hidden (surrogate) identity cannot be externalized, or identity
    allocation was requested for a map that does not use surrogate keys."""


class ViewConstructionError(RmtmError):
    """A view expression parameter names a missing or hidden key, has
    incompatible types, or is otherwise malformed. Raised at construction
    time, never at evaluation time."""


class InPlaceOnlyError(RmtmError):
    """A view containing mutation nodes was evaluated out-of-place."""


class EvalError(RmtmError):
    """Evaluation failed (registered function raised, link did not
    resolve inside the snapshot, ...)."""


class CyclicJoinGraphError(RmtmError):
    """The join graph of a reduction is cyclic; the full reducer only
    supports acyclic graphs and refuses rather than falling back."""


class FactorizationConflictError(RmtmError):
    """A factorization spec's keys do not functionally determine their
    attributes in the instance. Carries witness rows."""

    def __init__(self, message, witnesses=()):
        super().__init__(message)
        self.witnesses = tuple(witnesses)


class UnknownDatabaseError(RmtmError):
    """The store has no database under the given name."""


class WriterBusyError(RmtmError):
    """Another in-place commit is in flight for this database."""


class RejectedRewriteError(RmtmError):
    """An in-place view produced a database that fails validation; the
    store was left unchanged. Carries the validation report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SerializationError(RmtmError):
    """Canonical serialization could not encode or decode a payload."""
