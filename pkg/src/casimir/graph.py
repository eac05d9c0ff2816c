"""Discrete chain and tree graphical models with decomposed score tables.

A labeling ``y`` is a tuple of label indices, one per node. The score of a
labeling decomposes as::

    psi(y) = sum_v node[v][y_v] + sum_{v != root} edge[v][y_v, y_parent(v)] + offset

Edge tables are stored on the child node and indexed ``[child_label, parent_label]``.
For chains node ``v`` has parent ``v - 1``, so ``edge[v][a, b]`` scores
``y_v = a`` following ``y_{v-1} = b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptySpaceError, EnumerationCapError, InvalidInputError, InvalidTopologyError

# Finite stand-in for -inf. Kept well above float64's minimum so that sums of
# many sentinels (and sentinel + score) stay finite and never produce NaN.
NEG_INF = -np.finfo(np.float64).max / 1e8

DEFAULT_ENUM_CAP = 10**6

Labeling = tuple


def is_feasible(value) -> np.ndarray | bool:
    """True where ``value`` is a real score rather than a sentinel-derived one."""
    return np.asarray(value) > NEG_INF / 2


@dataclass(frozen=True)
class LabelDomain:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 1:
            raise InvalidInputError("label domain needs at least one node")
        if any(s < 1 for s in sizes):
            raise InvalidInputError(f"every node needs at least one label, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def num_nodes(self) -> int:
        return len(self.sizes)

    @property
    def cardinality(self) -> int:
        return int(np.prod(self.sizes, dtype=object))

    def validate(self, y) -> tuple:
        y = tuple(int(v) for v in y)
        if len(y) != len(self.sizes):
            raise InvalidInputError(f"labeling has {len(y)} entries, domain has {len(self.sizes)} nodes")
        for v, (label, size) in enumerate(zip(y, self.sizes)):
            if not 0 <= label < size:
                raise InvalidInputError(f"label {label} out of range for node {v} with {size} labels")
        return y


@dataclass(frozen=True)
class TreeTopology:
    """Rooted tree given by parent pointers (``-1`` or ``None`` marks the root)."""

    parent: tuple
    kind: str = "tree"
    root: int = field(init=False)
    children: tuple = field(init=False, repr=False, compare=False)
    order: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parent = tuple(-1 if p is None else int(p) for p in self.parent)
        p = len(parent)
        if p < 1:
            raise InvalidTopologyError("topology needs at least one node")
        if self.kind not in ("chain", "tree"):
            raise InvalidTopologyError(f"unknown topology kind {self.kind!r}")
        roots = [v for v, q in enumerate(parent) if q == -1]
        if len(roots) != 1:
            raise InvalidTopologyError(f"expected exactly one root, found {len(roots)}")
        for v, q in enumerate(parent):
            if q != -1 and not 0 <= q < p:
                raise InvalidTopologyError(f"node {v} has out-of-range parent {q}")
            if q == v:
                raise InvalidTopologyError(f"node {v} is its own parent")
        if self.kind == "chain" and parent != tuple(range(-1, p - 1)):
            raise InvalidTopologyError("chain topology requires parent[v] == v - 1")

        children = [[] for _ in range(p)]
        for v, q in enumerate(parent):
            if q != -1:
                children[q].append(v)
        # Every node must reach the root; a cycle or a detached component breaks this.
        height = [-1] * p
        seen = 0
        stack = [roots[0]]
        visit = []
        while stack:
            v = stack.pop()
            visit.append(v)
            seen += 1
            if seen > p:
                raise InvalidTopologyError("parent structure contains a cycle")
            stack.extend(children[v])
        if len(set(visit)) != p or len(visit) != p:
            raise InvalidTopologyError("parent structure is disconnected or cyclic")
        for v in reversed(visit):
            height[v] = 1 + max((height[c] for c in children[v]), default=-1)
        order = tuple(sorted(range(p), key=lambda v: (height[v], v)))

        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "root", roots[0])
        object.__setattr__(self, "children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "order", order)

    @classmethod
    def chain(cls, p: int) -> "TreeTopology":
        return cls(tuple(range(-1, p - 1)), kind="chain")

    @property
    def num_nodes(self) -> int:
        return len(self.parent)

    def edges(self):
        """Non-root nodes in index order; each stands for the edge to its parent."""
        return [v for v in range(len(self.parent)) if self.parent[v] != -1]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PotentialTable:
    topology: TreeTopology
    domain: LabelDomain
    node_scores: tuple
    edge_scores: tuple
    offset: float = 0.0

    def __post_init__(self):
        topo, dom = self.topology, self.domain
        p = topo.num_nodes
        if dom.num_nodes != p:
            raise InvalidInputError(f"domain has {dom.num_nodes} nodes, topology has {p}")
        nodes = tuple(_frozen(s) for s in self.node_scores)
        if len(nodes) != p:
            raise InvalidInputError(f"expected {p} node tables, got {len(nodes)}")
        for v, s in enumerate(nodes):
            if s.shape != (dom.sizes[v],):
                raise InvalidInputError(f"node table {v} has shape {s.shape}, expected ({dom.sizes[v]},)")
        edges = list(self.edge_scores)
        if len(edges) != p:
            raise InvalidInputError(f"expected {p} edge slots (None at the root), got {len(edges)}")
        for v in range(p):
            q = topo.parent[v]
            if q == -1:
                edges[v] = None
                continue
            e = _frozen(edges[v])
            if e.shape != (dom.sizes[v], dom.sizes[q]):
                raise InvalidInputError(
                    f"edge table {v} has shape {e.shape}, expected {(dom.sizes[v], dom.sizes[q])}"
                )
            edges[v] = e
        object.__setattr__(self, "node_scores", nodes)
        object.__setattr__(self, "edge_scores", tuple(edges))
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def chain(cls, node_scores: Sequence, edge_scores: Sequence, offset: float = 0.0) -> "PotentialTable":
        """Chain model; ``edge_scores[i]`` is the table between nodes ``i + 1`` and ``i``."""
        nodes = [np.asarray(s, dtype=np.float64) for s in node_scores]
        p = len(nodes)
        if len(edge_scores) != p - 1:
            raise InvalidInputError(f"chain with {p} nodes needs {p - 1} edge tables")
        return cls(
            TreeTopology.chain(p),
            LabelDomain(tuple(len(s) for s in nodes)),
            tuple(nodes),
            (None, *edge_scores),
            offset,
        )

    @classmethod
    def tree(cls, parent: Sequence, node_scores: Sequence, edge_scores: Sequence, offset: float = 0.0):
        nodes = [np.asarray(s, dtype=np.float64) for s in node_scores]
        return cls(
            TreeTopology(tuple(parent)),
            LabelDomain(tuple(len(s) for s in nodes)),
            tuple(nodes),
            tuple(edge_scores),
            offset,
        )

    @property
    def num_nodes(self) -> int:
        return self.topology.num_nodes

    @property
    def sizes(self) -> tuple:
        return self.domain.sizes

    def as_tree(self) -> "PotentialTable":
        """Same tables with the topology kind relaxed to ``tree``."""
        return PotentialTable(
            TreeTopology(self.topology.parent), self.domain, self.node_scores, self.edge_scores, self.offset
        )

    def replace(self, node_scores=None, edge_scores=None, offset=None) -> "PotentialTable":
        return PotentialTable(
            self.topology,
            self.domain,
            self.node_scores if node_scores is None else node_scores,
            self.edge_scores if edge_scores is None else edge_scores,
            self.offset if offset is None else offset,
        )


def score(pot: PotentialTable, y) -> float:
    """Score of one labeling: node terms, then edge terms in node order, then the offset."""
    y = pot.domain.validate(y)
    total = 0.0
    for v, table in enumerate(pot.node_scores):
        total += float(table[y[v]])
    parent = pot.topology.parent
    for v in pot.topology.edges():
        total += float(pot.edge_scores[v][y[v], y[parent[v]]])
    return total + pot.offset


def all_labelings(sizes, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Every labeling as rows of an int array, in lexicographic order."""
    total = int(np.prod(sizes, dtype=object))
    if total > cap:
        raise EnumerationCapError(total, cap)
    return np.indices(tuple(sizes)).reshape(len(sizes), -1).T


def score_all(pot: PotentialTable, cap: int = DEFAULT_ENUM_CAP):
    """Scores of all labelings (lexicographic order) using the same summation order as :func:`score`."""
    ys = all_labelings(pot.sizes, cap)
    total = np.zeros(len(ys))
    for v, table in enumerate(pot.node_scores):
        total += table[ys[:, v]]
    parent = pot.topology.parent
    for v in pot.topology.edges():
        total += pot.edge_scores[v][ys[:, v], ys[:, parent[v]]]
    return total + pot.offset, ys


def enumerate_scored(pot: PotentialTable, cap: int = DEFAULT_ENUM_CAP) -> list:
    """All ``(score, labeling)`` pairs sorted by score descending, ties lexicographic ascending."""
    scores, ys = score_all(pot, cap)
    order = np.argsort(-scores, kind="stable")
    return [(float(scores[i]), tuple(int(a) for a in ys[i])) for i in order]


class Constraint(NamedTuple):
    node: int
    label: int
    equal: bool = True  # False means "node must not take this label"


def constrain(pot: PotentialTable, constraints) -> PotentialTable:
    """Copy of ``pot`` whose node entries violating any constraint are set to :data:`NEG_INF`."""
    constraints = [c if isinstance(c, Constraint) else Constraint(*c) for c in constraints]
    if not constraints:
        return pot
    allowed = [np.ones(s, dtype=bool) for s in pot.sizes]
    for c in constraints:
        if not 0 <= c.node < pot.num_nodes or not 0 <= c.label < pot.sizes[c.node]:
            raise InvalidInputError(f"constraint {c} does not index a valid node/label")
        if c.equal:
            keep = np.zeros(pot.sizes[c.node], dtype=bool)
            keep[c.label] = True
            allowed[c.node] &= keep
        else:
            allowed[c.node][c.label] = False
    for v, mask in enumerate(allowed):
        if not mask.any():
            raise EmptySpaceError(f"constraints leave no label for node {v}")
    nodes = [np.where(mask, table, NEG_INF) for mask, table in zip(allowed, pot.node_scores)]
    return pot.replace(node_scores=tuple(nodes))


def jitter(pot: PotentialTable, seed: int, scale: float = 1e-6) -> PotentialTable:
    """Add seeded uniform noise to every table entry so that labeling scores are distinct."""
    rng = np.random.default_rng(seed)
    nodes = tuple(t + rng.uniform(-scale, scale, t.shape) for t in pot.node_scores)
    edges = tuple(None if e is None else e + rng.uniform(-scale, scale, e.shape) for e in pot.edge_scores)
    return pot.replace(node_scores=nodes, edge_scores=edges)


def random_potentials(rng, topology: TreeTopology, sizes, scale: float = 1.0) -> PotentialTable:
    """Gaussian node and edge tables on a given topology; handy for tests and demos."""
    sizes = tuple(sizes)
    nodes = tuple(scale * rng.standard_normal(s) for s in sizes)
    edges = tuple(
        None if q == -1 else scale * rng.standard_normal((sizes[v], sizes[q]))
        for v, q in enumerate(topology.parent)
    )
    return PotentialTable(topology, LabelDomain(sizes), nodes, edges)


def random_tree_topology(rng, p: int) -> TreeTopology:
    """Uniformly random parent pointers rooted at node 0 (each node attaches to an earlier one)."""
    parent = [-1] + [int(rng.integers(0, v)) for v in range(1, p)]
    return TreeTopology(tuple(parent))
