"""Smooth inference oracles on a small chain.

A max oracle returns the best labeling. Its smoothed cousins spread weight over several
labelings: the entropy smoother weights all of them (a Gibbs distribution) and the l2
smoother projects the score vector onto the simplex, which keeps only a few. The top-K
oracle reproduces the l2 answer from a K-best list whenever the K+1-th score is far enough
below the others.

Run: python demos/01_smooth_oracles.py
"""

import numpy as np

from casimir.graph import PotentialTable, enumerate_scored
from casimir.loss import l2_oracle_enumerated
from casimir.oracles import exp_oracle, max_oracle, topk_oracle, topk_viterbi
from casimir.smoothing import projection_sparsity, topk_exactness_holds

rng = np.random.default_rng(0)
p, T = 5, 3
nodes = [rng.standard_normal(T) for _ in range(p)]
edges = [rng.standard_normal((T, T)) for _ in range(p - 1)]
pot = PotentialTable.chain(nodes, edges)

# %% The five best labelings by k-best Viterbi, and the same rows by brute force.
print("top-5 by dynamic programming")
for s, y in topk_viterbi(pot, 5):
    print(f"  {s:8.4f}  {y}")
rows = enumerate_scored(pot)
print("enumeration agrees:", [y for _, y in rows[:5]] == [y for _, y in topk_viterbi(pot, 5)])

# %% Smoothing sandwiches the max: f <= f_mu <= f + mu * D.
f = max_oracle(pot).value
print(f"\nmax score {f:.4f}")
for mu in (0.01, 0.1, 1.0):
    ent = exp_oracle(pot, mu).value
    l2 = l2_oracle_enumerated(pot, mu).value
    print(f"  mu={mu:<5} entropy {ent:8.4f} (<= {f + mu * np.log(T ** p):.4f})   l2 {l2:8.4f} (<= {f + mu / 2:.4f})")

# %% The l2 smoother is sparse, so a short K-best list often suffices.
scores = np.array([s for s, _ in rows])
for mu in (0.1, 0.5, 2.0):
    k = projection_sparsity(scores, mu)
    K = 5
    exact = topk_exactness_holds(scores[: K + 1], mu)
    top, full = topk_oracle(pot, mu, K), l2_oracle_enumerated(pot, mu)
    print(f"mu={mu}: l2 support size {k:3d}; top-{K} exact regime {exact}; "
          f"top-K value {top.value:.6f} vs full {full.value:.6f}")
