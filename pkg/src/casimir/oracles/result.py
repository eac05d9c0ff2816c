from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import PotentialTable


@dataclass(frozen=True)
class OracleResult:
    """Value of a (smoothed) max plus the occupancy weights that define its gradient.

    ``mode == "support"``: ``support`` lists ``(weight, labeling)`` pairs, e.g. the single
    argmax of the max oracle or the K labelings of the top-K oracle.
    ``mode == "marginal"``: node and edge marginals of a Gibbs distribution, with edge
    marginals stored like edge tables (on the child node, ``None`` at the root).
    """

    value: float
    mode: str
    support: tuple = ()
    scores: tuple = ()
    node_marginals: tuple = ()
    edge_marginals: tuple = ()

    def occupancy(self, pot: PotentialTable):
        """Expected node and edge indicator tables under the oracle's weights."""
        if self.mode == "marginal":
            return list(self.node_marginals), list(self.edge_marginals)
        return support_occupancy(pot, self.support)


def support_occupancy(pot: PotentialTable, support):
    sizes = pot.sizes
    parent = pot.topology.parent
    nodes = [np.zeros(s) for s in sizes]
    edges = [None if q == -1 else np.zeros((sizes[v], sizes[q])) for v, q in enumerate(parent)]
    for weight, y in support:
        if weight == 0.0:
            continue
        for v, label in enumerate(y):
            nodes[v][label] += weight
            q = parent[v]
            if q != -1:
                edges[v][label, y[q]] += weight
    return nodes, edges
