"""rmtm: an embedded in-memory database engine built on typed maps.

Tuples, relations, databases, and sets of databases are all maps; queries
are immutable map-view expression trees evaluated against snapshots or
applied as atomic rewrites; links are pointer-swizzled so joins follow
references instead of probing hash tables.
"""
from .core import (
    Key,
    Map,
    Ref,
    Symbol,
    instance_order,
    map_of,
    record,
    scalar_kind,
    sym,
)
from .engine import Snapshot, Store
from .errors import RmtmError
from .schema import (
    Database,
    DatabaseSchema,
    ModelClass,
    classify_database,
    classify_type,
    swizzle,
    unswizzle,
    validate_database,
)
from .types import (
    EnumerationDomain,
    ForeignKeyDomain,
    KeyPolicy,
    MapType,
    MapTypeDomain,
    OneOfConstraint,
    ProjectKey,
    ProjectKeyTuple,
    RangeConstraint,
    ScalarDomain,
    SurrogateAllocator,
    SurrogateCounter,
    TypeEntry,
    compute_key,
    computed,
    element_type,
    order,
    rhomt,
    rmt,
)
from .validate import ValidationReport, Violation, enumeration_of, validate
from .views import (
    ComputeSpec,
    ViewClass,
    ViewExpr,
    classify,
    eval_out_of_place,
    make_aggregate,
    make_compute,
    make_filter,
    make_join,
    make_mutation,
    make_normalize,
    make_partition,
    make_project,
    make_rename,
    make_set_op,
    make_subdb_reduce,
)

__version__ = "0.1.0"
