"""Chain-structured oracles: Viterbi, top-K Viterbi and forward-backward."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..errors import InvalidInputError, InvalidTopologyError
from ..graph import NEG_INF, PotentialTable, is_feasible
from ..smoothing import topk_surrogate
from .result import OracleResult


def _require_chain(pot: PotentialTable):
    if pot.topology.kind != "chain":
        raise InvalidTopologyError("this oracle needs a chain topology")


def viterbi(pot: PotentialTable):
    """Highest-scoring labeling of a chain and its score."""
    _require_chain(pot)
    nodes, edges = pot.node_scores, pot.edge_scores
    pi = nodes[0]
    back = []
    for v in range(1, len(nodes)):
        cand = pi[None, :] + edges[v]
        arg = cand.argmax(axis=1)
        pi = nodes[v] + cand[np.arange(len(arg)), arg]
        back.append(arg)
    last = int(pi.argmax())
    labels = [last]
    for arg in reversed(back):
        labels.append(int(arg[labels[-1]]))
    return float(pi[last]) + pot.offset, tuple(reversed(labels))


def _top_k_rows(flat: np.ndarray, k: int):
    # Stable sort keeps ties in (label, slot) ascending order.
    idx = np.argsort(-flat, axis=-1, kind="stable")[..., :k]
    return idx, np.take_along_axis(flat, idx, axis=-1)


def topk_viterbi(pot: PotentialTable, K: int) -> list:
    """The ``min(K, |Y|)`` best ``(score, labeling)`` pairs of a chain, best first."""
    _require_chain(pot)
    if int(K) < 1:
        raise InvalidInputError(f"K must be at least 1, got {K}")
    K = int(K)
    nodes, edges = pot.node_scores, pot.edge_scores
    pi = np.full((len(nodes[0]), K), NEG_INF)
    pi[:, 0] = nodes[0]
    back_label, back_slot = [], []
    for v in range(1, len(nodes)):
        cand = pi[None, :, :] + edges[v][:, :, None]
        idx, top = _top_k_rows(cand.reshape(cand.shape[0], -1), K)
        pi = nodes[v][:, None] + top
        back_label.append(idx // K)
        back_slot.append(idx % K)

    idx, top = _top_k_rows(pi.reshape(-1), K)
    out = []
    for flat_index, value in zip(idx, top):
        if not is_feasible(value):
            break
        label, slot = divmod(int(flat_index), K)
        labels = [label]
        for bl, bs in zip(reversed(back_label), reversed(back_slot)):
            label, slot = int(bl[label, slot]), int(bs[label, slot])
            labels.append(label)
        out.append((float(value) + pot.offset, tuple(reversed(labels))))
    # Exact ties come out in slot order; restore the lexicographic tie rule.
    out.sort(key=lambda r: (-r[0], r[1]))
    return out


def forward_backward(pot: PotentialTable, mu: float = 1.0):
    """Log-partition and marginals of ``p(y) ∝ exp(psi(y) / mu)`` on a chain, in log space.

    Returns ``(logZ, node_marginals, edge_marginals)``; ``edge_marginals[v]`` has the
    layout of ``pot.edge_scores[v]`` and is ``None`` for the first node.
    """
    _require_chain(pot)
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    th_n = [t / mu for t in pot.node_scores]
    th_e = [None if e is None else e / mu for e in pot.edge_scores]
    p = len(th_n)

    alpha = [th_n[0]]
    for v in range(1, p):
        alpha.append(th_n[v] + logsumexp(alpha[-1][None, :] + th_e[v], axis=1))
    beta = [None] * p
    beta[p - 1] = np.zeros_like(th_n[p - 1])
    for v in range(p - 2, -1, -1):
        beta[v] = logsumexp(th_e[v + 1] + (th_n[v + 1] + beta[v + 1])[:, None], axis=0)
    log_z = float(logsumexp(alpha[-1]))

    node_marg = tuple(np.exp(alpha[v] + beta[v] - log_z) for v in range(p))
    edge_marg = [None]
    for v in range(1, p):
        edge_marg.append(np.exp(alpha[v - 1][None, :] + th_e[v] + (th_n[v] + beta[v])[:, None] - log_z))
    return log_z + pot.offset / mu, node_marg, tuple(edge_marg)


def exp_oracle_chain(pot: PotentialTable, mu: float) -> OracleResult:
    """Entropy-smoothed max ``mu * logZ`` with Gibbs marginals attached."""
    log_z, nodes, edges = forward_backward(pot, mu)
    return OracleResult(value=mu * log_z, mode="marginal", node_marginals=nodes, edge_marginals=edges)


def topk_oracle_from_list(best: list, mu: float) -> OracleResult:
    scores = np.array([s for s, _ in best])
    res = topk_surrogate(scores, mu)
    support = tuple((float(u), y) for u, (_, y) in zip(res.weights, best))
    return OracleResult(value=res.value, mode="support", support=support, scores=tuple(scores.tolist()))


def topk_oracle_chain(pot: PotentialTable, mu: float, K: int) -> OracleResult:
    """Top-K surrogate of l2 smoothing from the K best labelings of a chain."""
    return topk_oracle_from_list(topk_viterbi(pot, K), mu)
