"""Message passing on rooted trees: max-product, top-K max-product and sum-product.

Nodes are visited leaves-first in increasing height (``TreeTopology.order``); the
message from ``v`` to its parent is a table over the parent's labels.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..errors import InvalidInputError
from ..graph import NEG_INF, PotentialTable, is_feasible
from .chain import _top_k_rows, topk_oracle_from_list
from .result import OracleResult


def max_product_tree(pot: PotentialTable):
    """MAP labeling of a tree and its score."""
    topo = pot.topology
    nodes, edges = pot.node_scores, pot.edge_scores
    belief = [None] * topo.num_nodes
    msg, arg = {}, {}
    for v in topo.order:
        b = nodes[v].copy()
        for c in topo.children[v]:
            b = b + msg[c]
        belief[v] = b
        if v != topo.root:
            cand = b[:, None] + edges[v]  # (y_v, y_parent)
            arg[v] = cand.argmax(axis=0)
            msg[v] = cand[arg[v], np.arange(cand.shape[1])]

    y = [0] * topo.num_nodes
    y[topo.root] = int(belief[topo.root].argmax())
    for v in reversed(topo.order):
        if v != topo.root:
            y[v] = int(arg[v][y[topo.parent[v]]])
    return float(belief[topo.root][y[topo.root]]) + pot.offset, tuple(y)


def topk_max_product_tree(pot: PotentialTable, K: int) -> list:
    """The ``min(K, |Y|)`` best ``(score, labeling)`` pairs of a tree, best first.

    Each node keeps a ``(|Y_v|, K)`` table of its K best subtree scores per label.
    Children are folded in one at a time, in index order, keeping only the K best
    partial sums after each fold.
    """
    if int(K) < 1:
        raise InvalidInputError(f"K must be at least 1, got {K}")
    K = int(K)
    topo = pot.topology
    nodes, edges = pot.node_scores, pot.edge_scores

    table = [None] * topo.num_nodes
    # folds[v]: per child, (child, prev_slot, msg_slot) arrays of shape (|Y_v|, K)
    folds = [None] * topo.num_nodes
    # msg_back[c]: (child_label, child_slot) of each message slot, shape (|Y_parent|, K)
    msg_back = [None] * topo.num_nodes
    msgs = [None] * topo.num_nodes

    for v in topo.order:
        size = len(nodes[v])
        cur = np.full((size, K), NEG_INF)
        cur[:, 0] = nodes[v]
        steps = []
        for c in topo.children[v]:
            idx, top = _top_k_rows((cur[:, :, None] + msgs[c][:, None, :]).reshape(size, -1), K)
            steps.append((c, idx // K, idx % K))
            cur = top
        table[v], folds[v] = cur, steps

        if v != topo.root:
            # message to the parent: K best over (y_v, slot) of table + edge, per parent label
            cand = table[v][:, :, None] + edges[v][:, None, :]  # (y_v, slot, y_parent)
            flat = np.moveaxis(cand, 2, 0).reshape(edges[v].shape[1], -1)
            idx, top = _top_k_rows(flat, K)
            msgs[v] = top
            msg_back[v] = (idx // K, idx % K)

    def fill(v, label, slot, y):
        y[v] = label
        for c, prev_slot, msg_slot in reversed(folds[v]):
            m = int(msg_slot[label, slot])
            slot = int(prev_slot[label, slot])
            child_label, child_slot = msg_back[c]
            fill(c, int(child_label[label, m]), int(child_slot[label, m]), y)

    idx, top = _top_k_rows(table[topo.root].reshape(-1), K)
    out = []
    for flat_index, value in zip(idx, top):
        if not is_feasible(value):
            break
        label, slot = divmod(int(flat_index), K)
        y = [0] * topo.num_nodes
        fill(topo.root, label, slot, y)
        out.append((float(value) + pot.offset, tuple(y)))
    # Exact ties come out in slot order; restore the lexicographic tie rule.
    out.sort(key=lambda r: (-r[0], r[1]))
    return out


def sum_product_tree(pot: PotentialTable, mu: float = 1.0):
    """Log-partition and marginals of ``p(y) ∝ exp(psi(y) / mu)`` on a tree.

    Same return layout as :func:`casimir.oracles.chain.forward_backward`.
    """
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    topo = pot.topology
    p = topo.num_nodes
    th_n = [t / mu for t in pot.node_scores]
    th_e = [None if e is None else e / mu for e in pot.edge_scores]

    up = [None] * p  # node table plus messages from all children
    msg = [None] * p  # log message from v to its parent, over parent labels
    for v in topo.order:
        b = th_n[v]
        for c in topo.children[v]:
            b = b + msg[c]
        up[v] = b
        if v != topo.root:
            msg[v] = logsumexp(b[:, None] + th_e[v], axis=0)
    log_z = float(logsumexp(up[topo.root]))

    # outside[v]: log-weight of everything outside v's subtree, over the parent's labels
    outside = [None] * p
    from_parent = [None] * p  # outside[v] pushed through the edge, over v's labels
    from_parent[topo.root] = np.zeros_like(th_n[topo.root])
    for v in reversed(topo.order):
        for c in topo.children[v]:
            o = th_n[v] + from_parent[v]
            for other in topo.children[v]:
                if other != c:
                    o = o + msg[other]
            outside[c] = o
            from_parent[c] = logsumexp(th_e[c] + o[None, :], axis=1)

    node_marg = tuple(np.exp(up[v] + from_parent[v] - log_z) for v in range(p))
    edge_marg = tuple(
        None if v == topo.root else np.exp(up[v][:, None] + th_e[v] + outside[v][None, :] - log_z)
        for v in range(p)
    )
    return log_z + pot.offset / mu, node_marg, edge_marg


def exp_oracle_tree(pot: PotentialTable, mu: float) -> OracleResult:
    log_z, nodes, edges = sum_product_tree(pot, mu)
    return OracleResult(value=mu * log_z, mode="marginal", node_marginals=nodes, edge_marginals=edges)


def topk_oracle_tree(pot: PotentialTable, mu: float, K: int) -> OracleResult:
    return topk_oracle_from_list(topk_max_product_tree(pot, K), mu)
