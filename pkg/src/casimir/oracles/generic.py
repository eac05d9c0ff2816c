"""Top-K inference without tree structure: BMMF over max-marginals and best-first branch and bound.

Both searches only see the model through a callable: a max-marginal provider for
BMMF, and an upper bound plus a split rule for branch and bound.
"""

from __future__ import annotations

import heapq
import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, IntegrityError
from ..graph import DEFAULT_ENUM_CAP, NEG_INF, Constraint, PotentialTable, constrain, is_feasible, score_all

_SCORE_TOL = 1e-9


@dataclass(frozen=True)
class MaxMarginals:
    """``tables[v][j]``: best score with ``y_v = j`` under the constraints (``NEG_INF`` if none)."""

    tables: tuple
    best: float


def exhaustive_max_marginals(pot: PotentialTable, constraints=(), cap: int = DEFAULT_ENUM_CAP) -> MaxMarginals:
    """Max-marginals by enumerating every labeling; the reference provider."""
    scores, ys = score_all(constrain(pot, constraints), cap)
    feasible = is_feasible(scores)
    tables = []
    for v, size in enumerate(pot.sizes):
        t = np.full(size, NEG_INF)
        np.maximum.at(t, ys[feasible, v], scores[feasible])
        tables.append(t)
    best = float(scores[feasible].max()) if feasible.any() else NEG_INF
    return MaxMarginals(tuple(tables), best)


def exhaustive_provider(pot: PotentialTable, cap: int = DEFAULT_ENUM_CAP):
    """Wrap :func:`exhaustive_max_marginals` as a ``constraints -> MaxMarginals`` callable."""
    return lambda constraints: exhaustive_max_marginals(pot, constraints, cap)


def decode_from_max_marginals(tables) -> tuple:
    """Per-node argmax of the max-marginals; the MAP labeling when scores are unambiguous."""
    tables = getattr(tables, "tables", tables)
    y = []
    for v, t in enumerate(tables):
        t = np.asarray(t)
        j = int(t.argmax())
        if np.count_nonzero(t >= t[j] - 1e-12) > 1:
            warnings.warn(f"max-marginals of node {v} are ambiguous; decoding may not be a MAP labeling")
        y.append(j)
    return tuple(y)


def bmmf_topk(provider, K: int, stats: dict | None = None) -> list:
    """K best labelings from at most ``2K - 1`` calls to a max-marginal provider.

    ``provider(constraints)`` returns :class:`MaxMarginals` for the labelings that satisfy
    every :class:`~casimir.graph.Constraint`. Scores must be pairwise distinct. If ``stats``
    is given, ``stats["calls"]`` receives the number of provider calls.
    """
    if int(K) < 1:
        raise InvalidInputError(f"K must be at least 1, got {K}")
    calls = 0

    def call(constraints):
        nonlocal calls
        calls += 1
        return provider(tuple(constraints))

    mm = call(())
    if not is_feasible(mm.best):
        raise IntegrityError("provider reports an empty output space")
    constraints = [[]]
    tables = [mm.tables]
    labelings = [decode_from_max_marginals(mm.tables)]
    scores = [mm.best]
    used = set()

    for _ in range(1, int(K)):
        pick, pick_value = None, NEG_INF
        for s, (table, y) in enumerate(zip(tables, labelings)):
            for v, t in enumerate(table):
                for j, value in enumerate(t):
                    if j == y[v] or (v, j, s) in used or not is_feasible(value):
                        continue
                    if value > pick_value:
                        pick, pick_value = (v, j, s), value
        if pick is None:
            break
        v, j, s = pick
        if pick_value > scores[-1] + _SCORE_TOL:
            raise IntegrityError(f"partition score {pick_value} exceeds the previous best {scores[-1]}")

        new_constraints = constraints[s] + [Constraint(v, j, True)]
        mm = call(new_constraints)
        if abs(mm.best - pick_value) > _SCORE_TOL * max(1.0, abs(pick_value)):
            raise IntegrityError(f"max-marginal {pick_value} disagrees with the partition maximum {mm.best}")
        constraints.append(new_constraints)
        tables.append(mm.tables)
        labelings.append(decode_from_max_marginals(mm.tables))
        scores.append(mm.best)

        used.add(pick)
        constraints[s] = constraints[s] + [Constraint(v, j, False)]
        tables[s] = call(constraints[s]).tables

    if stats is not None:
        stats["calls"] = calls
    if calls > 2 * int(K):
        raise IntegrityError(f"BMMF made {calls} provider calls, more than 2K = {2 * int(K)}")
    return [(float(sc), y) for sc, y in zip(scores, labelings)]


# --- branch and bound -------------------------------------------------------
# A subset of the output space is a tuple of allowed-label tuples, one per node.


def full_space(sizes) -> tuple:
    return tuple(tuple(range(s)) for s in sizes)


def is_singleton(space) -> bool:
    return all(len(a) == 1 for a in space)


def independent_bound(pot: PotentialTable):
    """Upper bound that maximizes every node and edge table separately over the allowed labels.

    It is exact on singletons because it then sums the same entries as :func:`casimir.graph.score`.
    """
    parent = pot.topology.parent
    edges = pot.topology.edges()

    def bound(space) -> float:
        total = 0.0
        for v, table in enumerate(pot.node_scores):
            total += float(table[list(space[v])].max())
        for v in edges:
            total += float(pot.edge_scores[v][np.ix_(space[v], space[parent[v]])].max())
        return total + pot.offset

    return bound


def split_halve(space):
    """Halve the label set of the first node that still has more than one label."""
    v = next(i for i, a in enumerate(space) if len(a) > 1)
    a = space[v]
    mid = len(a) // 2
    return (space[:v] + (a[:mid],) + space[v + 1 :], space[:v] + (a[mid:],) + space[v + 1 :])


def split_best_label(pot: PotentialTable):
    """Splitter that isolates the highest-scoring label of the node with the most remaining labels."""

    def split(space):
        v = max(range(len(space)), key=lambda i: (len(space[i]), -i))
        a = space[v]
        best = max(a, key=lambda j: (pot.node_scores[v][j], -j))
        rest = tuple(j for j in a if j != best)
        return (space[:v] + ((best,),) + space[v + 1 :], space[:v] + (rest,) + space[v + 1 :])

    return split


def branch_bound_topk(space, bound, split, K: int, stats: dict | None = None) -> list:
    """K best labelings by best-first search over subsets ordered by an upper bound.

    ``bound(subset)`` must be finite, dominate every score in the subset and equal the
    score on singletons. Queue ties are broken by insertion order. If ``stats`` is given,
    ``stats["pops"]`` receives the number of subsets taken off the queue.
    """
    if int(K) < 1:
        raise InvalidInputError(f"K must be at least 1, got {K}")
    space = tuple(tuple(a) for a in space)
    counter = itertools.count()
    root_bound = bound(space)
    heap = [(-root_bound, next(counter), space, root_bound)]
    out, pops = [], 0
    while heap and len(out) < int(K):
        neg, _, subset, parent_bound = heapq.heappop(heap)
        pops += 1
        value = -neg
        if not np.isfinite(value):
            raise IntegrityError(f"bound is not finite on {subset}")
        if is_singleton(subset):
            # A valid parent bound dominates every score inside the parent, this one included.
            if value > parent_bound + _SCORE_TOL * max(1.0, abs(parent_bound)):
                raise IntegrityError(f"score {value} of {subset} exceeds its parent's bound {parent_bound}")
            if is_feasible(value):
                out.append((float(value), tuple(a[0] for a in subset)))
            continue
        for part in split(subset):
            if not part or any(len(a) == 0 for a in part):
                raise IntegrityError("split produced an empty subset")
            heapq.heappush(heap, (-bound(part), next(counter), part, value))
    if stats is not None:
        stats["pops"] = pops
    return out
