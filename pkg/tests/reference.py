"""Independent reference solver for the non-smooth objective, used only by the tests.

Block-coordinate pairwise Frank-Wolfe on the dual of the regularized structural hinge
problem. Each example keeps an active set of labelings; the dual gradient of labeling
``y`` in block ``i`` is its loss-augmented score ``H_i(y; w) / n``. Oracle passes add the
max-oracle labeling; cached passes only reshuffle mass inside the active sets. The
solver touches the model through the max oracle only and certifies its answer with the
duality gap ``primal - dual``.
"""

import numpy as np

from casimir.loss import loss_augment
from casimir.oracles import max_oracle, support_occupancy


class _Block:
    def __init__(self):
        self.labelings = []  # tuples
        self.feats = []  # (idx, vals) of Phi(y) - Phi(gold)
        self.losses = []  # Hamming loss of y
        self.alpha = []

    def scores(self, w):
        return np.array([ell + float(w[idx] @ vals) for (idx, vals), ell in zip(self.feats, self.losses)])


def _sparse(g):
    idx = np.flatnonzero(g)
    return idx, g[idx]


def bcpfw_reference(objective, gap_tol=1e-6, max_oracle_passes=200, cached_passes=50):
    """Returns ``(w, primal, dual)`` with ``dual <= F* <= primal``."""
    plain = objective.plain()
    model, examples = plain.model, plain.examples
    n, lam, d = plain.n, plain.lam, plain.d
    w = np.zeros(d)
    ell = 0.0
    blocks = []
    for ex in examples:
        b = _Block()
        gold = tuple(model.gold(ex))
        b.labelings.append(gold)
        b.feats.append((np.zeros(0, dtype=np.int64), np.zeros(0)))
        b.losses.append(0.0)
        b.alpha.append(1.0)
        blocks.append(b)

    def step(b, s, v):
        nonlocal ell
        if s == v:
            return
        (i_s, v_s), (i_v, v_v) = b.feats[s], b.feats[v]
        h_s = b.losses[s] + float(w[i_s] @ v_s)
        h_v = b.losses[v] + float(w[i_v] @ v_v)
        idx, inv = np.unique(np.concatenate([i_s, i_v]), return_inverse=True)
        diff = np.bincount(inv, weights=np.concatenate([v_s, -v_v]), minlength=idx.size)
        # a_y = -(Phi(y) - Phi(gold)) / (lam n); move gamma mass from v to s.
        sq = float(diff @ diff) / (lam * n * n)
        if sq <= 0:
            return
        gamma = min(max((h_s - h_v) / n / sq, 0.0), b.alpha[v])
        if gamma <= 0:
            return
        b.alpha[s] += gamma
        b.alpha[v] -= gamma
        w[idx] -= gamma * diff / (lam * n)
        ell += gamma * (b.losses[s] - b.losses[v]) / n

    primal = dual = None
    for _ in range(max_oracle_passes):
        for i, ex in enumerate(examples):
            b = blocks[i]
            pot = model.potentials(ex, w)
            aug = loss_augment(pot, model.gold(ex))
            y = max_oracle(aug).support[0][1]
            if y not in b.labelings:
                nodes, edges = support_occupancy(aug, ((1.0, y),))
                g_nodes, g_edges = support_occupancy(aug, ((1.0, tuple(model.gold(ex))),))
                g = model.gradient(ex, w, [a - c for a, c in zip(nodes, g_nodes)],
                                   [None if a is None else a - c for a, c in zip(edges, g_edges)])
                b.labelings.append(y)
                b.feats.append(_sparse(g))
                b.losses.append(float(sum(a != c for a, c in zip(y, model.gold(ex)))))
                b.alpha.append(0.0)
            s = b.labelings.index(y)
            h = b.scores(w)
            active = [j for j, a in enumerate(b.alpha) if a > 0]
            step(b, s, min(active, key=lambda j: h[j]))
        for _ in range(cached_passes):
            for b in blocks:
                h = b.scores(w)
                active = [j for j, a in enumerate(b.alpha) if a > 0]
                step(b, int(np.argmax(h)), min(active, key=lambda j: h[j]))
        primal = plain.value(w)
        dual = ell - 0.5 * lam * float(w @ w)
        if primal - dual <= gap_tol:
            break
    return w, primal, dual
