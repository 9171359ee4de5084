"""Join-graph acyclicity and join-forest construction for semi-join
reduction.

Link edges are binary, so the classic ear-removal test specializes to
pruning nodes that share live join variables with exactly one other
node. The removal sequence doubles as the traversal order for the two
semi-join passes of the full reducer: parents are reduced by children in
removal order, then children by parents in reverse.
"""
from __future__ import annotations

from .core import Symbol
from .errors import CyclicJoinGraphError, ViewConstructionError


def _norm(path):
    return tuple(Symbol(p) if isinstance(p, str) else p for p in path)


def build_join_forest(nodes, edges):
    """Ear-removal over the join graph.

    `nodes` are relation paths; `edges` carry .source/.target paths.
    Returns (removals, roots): removals is a tuple of
    (child, parent, edge-index tuple) in leaf-to-root order, roots the
    nodes left standing (one per connected component). Raises when the
    graph is cyclic. Two nodes connected by several parallel edges are
    fine (the ear is removed under all of them at once); only cycles
    through three or more nodes are refused.
    """
    nodes = [_norm(n) for n in nodes]
    known = set(nodes)
    incidence = {n: [] for n in nodes}
    for i, e in enumerate(edges):
        s, t = _norm(e.source), _norm(e.target)
        if s not in known or t not in known:
            raise ViewConstructionError(
                f"link edge {s} -> {t} leaves the reduced database"
            )
        if s == t:
            raise CyclicJoinGraphError("cyclic schema unsupported (self link)")
        incidence[s].append((i, t))
        incidence[t].append((i, s))

    remaining = set(nodes)
    removals = []
    changed = True
    while changed:
        changed = False
        for n in nodes:
            if n not in remaining:
                continue
            owners = {}
            for i, other in incidence[n]:
                if other in remaining:
                    owners.setdefault(other, []).append(i)
            if len(owners) == 1:
                (parent, edge_ids), = owners.items()
                removals.append((n, parent, tuple(edge_ids)))
                remaining.discard(n)
                changed = True

    for i, e in enumerate(edges):
        if tuple(e.source) in remaining and tuple(e.target) in remaining:
            raise CyclicJoinGraphError("cyclic schema unsupported")

    roots = tuple(n for n in nodes if n in remaining)
    return tuple(removals), roots
