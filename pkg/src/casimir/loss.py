"""Structural hinge losses, their smoothed versions and the score models that feed them.

A score model maps ``(example, w)`` to a :class:`~casimir.graph.PotentialTable` of
scores ``phi(x, y; w)`` and turns oracle occupancy weights back into parameter
gradients. Loss augmentation with the Hamming loss turns those scores into the
augmented score ``psi(y) = phi(y) + hamming(gold, y) - phi(gold)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import DivergenceError, InvalidInputError
from .graph import DEFAULT_ENUM_CAP, LabelDomain, PotentialTable, TreeTopology, score, score_all
from .oracles import OracleResult, exp_oracle, max_oracle, support_occupancy, topk_oracle
from .smoothing import SmoothingConfig, l2_smoothed_max


class ScoreModel(Protocol):
    d: int
    is_linear: bool

    def gold(self, ex) -> tuple: ...

    def potentials(self, ex, w) -> PotentialTable: ...

    def gradient(self, ex, w, node_occ, edge_occ) -> np.ndarray:
        """``sum_y weight(y) * grad_w phi(y; w)`` for occupancy tables of the weights."""

    def jvp(self, ex, w, dw) -> PotentialTable:
        """Tables of ``grad_w phi(y; w) . dw`` (the directional derivative of the scores)."""


@dataclass(frozen=True)
class ExampleLoss:
    value: float
    gradient: np.ndarray
    oracle_calls: int = 1


def _check_w(model, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (model.d,):
        raise InvalidInputError(f"parameter vector has shape {w.shape}, model expects ({model.d},)")
    return w


# --- score models ------------------------------------------------------------


@dataclass(frozen=True)
class ChainExample:
    """One tagged sequence: hashed unary indices ``unary[v, f, y]`` with values ``vals[v, f]``."""

    unary: np.ndarray
    vals: np.ndarray
    gold: tuple


class LinearChainModel:
    """Linear chain model with hashed unary features and a dense tag-bigram block.

    Parameters are ``w = [hashed unary block (hash_dim) | bigram block ((T+2)^2)]``.
    The bigram block is a ``(T+2, T+2)`` matrix indexed ``[previous, current]`` whose
    rows/columns ``T`` and ``T+1`` are the start and stop boundary symbols.
    """

    is_linear = True

    def __init__(self, num_tags: int, hash_dim: int):
        if num_tags < 1 or hash_dim < 1:
            raise InvalidInputError("num_tags and hash_dim must be positive")
        self.num_tags = int(num_tags)
        self.hash_dim = int(hash_dim)
        self.pair_size = (self.num_tags + 2) ** 2
        self.d = self.hash_dim + self.pair_size
        self.start, self.stop = self.num_tags, self.num_tags + 1

    def gold(self, ex: ChainExample) -> tuple:
        return ex.gold

    def _pair(self, w) -> np.ndarray:
        t = self.num_tags + 2
        return w[self.hash_dim :].reshape(t, t)

    def potentials(self, ex: ChainExample, w) -> PotentialTable:
        w = _check_w(self, w)
        T = self.num_tags
        node = np.einsum("vfy,vf->vy", w[ex.unary], ex.vals)
        pair = self._pair(w)
        node[0] += pair[self.start, :T]
        node[-1] += pair[:T, self.stop]
        p = node.shape[0]
        edge = pair[:T, :T].T  # [current, previous]
        return PotentialTable(
            TreeTopology.chain(p), LabelDomain((T,) * p), tuple(node), (None,) + (edge,) * (p - 1)
        )

    def gradient(self, ex: ChainExample, w, node_occ, edge_occ) -> np.ndarray:
        T = self.num_tags
        nodes = np.asarray(node_occ)
        out = np.zeros(self.d)
        np.add.at(out, ex.unary, ex.vals[:, :, None] * nodes[:, None, :])
        pair = self._pair(out)  # view into out
        for e in edge_occ[1:]:
            pair[:T, :T] += e.T
        pair[self.start, :T] += nodes[0]
        pair[:T, self.stop] += nodes[-1]
        return out

    def jvp(self, ex, w, dw) -> PotentialTable:
        return self.potentials(ex, dw)


@dataclass(frozen=True)
class QuadraticExample:
    """Single-node example with scores ``phi(y; w) = a[y] . w + 0.5 * w^T Q[y] w``."""

    a: np.ndarray
    Q: np.ndarray
    gold: int


def _sym(Q):
    return 0.5 * (Q + np.swapaxes(Q, -1, -2))


class QuadraticScoreModel:
    """Smooth non-linear scores on one node; a small test bed for the prox-linear method."""

    is_linear = False

    def __init__(self, d: int):
        self.d = int(d)

    def gold(self, ex: QuadraticExample) -> tuple:
        return (int(ex.gold),)

    def _table(self, node) -> PotentialTable:
        return PotentialTable(TreeTopology.chain(1), LabelDomain((len(node),)), (node,), (None,))

    def potentials(self, ex, w) -> PotentialTable:
        w = _check_w(self, w)
        return self._table(ex.a @ w + 0.5 * np.einsum("i,yij,j->y", w, ex.Q, w))

    def gradient(self, ex, w, node_occ, edge_occ) -> np.ndarray:
        occ = np.asarray(node_occ[0])
        return occ @ ex.a + np.einsum("y,yij,j->i", occ, _sym(ex.Q), w)

    def jvp(self, ex, w, dw) -> PotentialTable:
        jac = ex.a + np.einsum("yij,j->yi", _sym(ex.Q), w)
        return self._table(jac @ np.asarray(dw, dtype=np.float64))

    def smoothness(self, ex) -> float:
        """Largest spectral norm of ``Q[y] - Q[gold]``: the smoothness constant of each augmented score."""
        diff = _sym(ex.Q) - _sym(ex.Q)[ex.gold]
        return float(max(np.abs(np.linalg.eigvalsh(m)).max() for m in diff))


# --- losses ------------------------------------------------------------------


def loss_augment(pot: PotentialTable, gold) -> PotentialTable:
    """Add the Hamming loss to the node tables and shift so the gold labeling scores exactly 0."""
    gold = pot.domain.validate(gold)
    nodes = []
    for v, table in enumerate(pot.node_scores):
        t = table + 1.0
        t[gold[v]] = table[gold[v]]
        nodes.append(t)
    return pot.replace(node_scores=tuple(nodes), offset=pot.offset - score(pot, gold))


def _gold_occupancy(pot: PotentialTable, gold):
    return support_occupancy(pot, ((1.0, tuple(gold)),))


def _gradient_from(model, ex, w, pot: PotentialTable, res: OracleResult) -> np.ndarray:
    nodes, edges = res.occupancy(pot)
    g_nodes, g_edges = _gold_occupancy(pot, model.gold(ex))
    nodes = [a - b for a, b in zip(nodes, g_nodes)]
    edges = [None if a is None else a - b for a, b in zip(edges, g_edges)]
    return model.gradient(ex, w, nodes, edges)


def l2_oracle_enumerated(pot: PotentialTable, mu: float, cap: int = DEFAULT_ENUM_CAP) -> OracleResult:
    """Full l2-smoothed max over every labeling; the reference the top-K oracle approximates."""
    scores, ys = score_all(pot, cap)
    res = l2_smoothed_max(scores, mu)
    keep = np.nonzero(res.weights)[0]
    support = tuple((float(res.weights[i]), tuple(int(a) for a in ys[i])) for i in keep)
    return OracleResult(value=res.value, mode="support", support=support, scores=tuple(scores[keep].tolist()))


def run_oracle(pot: PotentialTable, smoothing: SmoothingConfig | None) -> OracleResult:
    if smoothing is None:
        return max_oracle(pot)
    if smoothing.kind == "entropy":
        return exp_oracle(pot, smoothing.mu)
    if smoothing.kind == "topk_l2":
        return topk_oracle(pot, smoothing.mu, smoothing.k)
    return l2_oracle_enumerated(pot, smoothing.mu)


def _loss_from_table(model, ex, w, base: PotentialTable, smoothing, w_grad=None) -> ExampleLoss:
    if not all(np.all(np.isfinite(t)) for t in base.node_scores + base.edge_scores if t is not None):
        raise DivergenceError("score table has non-finite entries")
    aug = loss_augment(base, model.gold(ex))
    res = run_oracle(aug, smoothing)
    value = res.value
    if smoothing is None:
        # The gold labeling scores exactly 0, so a negative max is rounding only.
        value = max(value, 0.0)
    grad = _gradient_from(model, ex, w if w_grad is None else w_grad, aug, res)
    return ExampleLoss(float(value), grad)


def hinge(ex, w, model: ScoreModel) -> ExampleLoss:
    """Structural hinge loss with a subgradient from the max oracle."""
    w = _check_w(model, w)
    return _loss_from_table(model, ex, w, model.potentials(ex, w), None)


def smoothed_hinge(ex, w, model: ScoreModel, smoothing: SmoothingConfig) -> ExampleLoss:
    """Smoothed hinge loss: exp oracle for ``entropy``, top-K oracle for ``topk_l2``, enumeration for ``l2``."""
    w = _check_w(model, w)
    return _loss_from_table(model, ex, w, model.potentials(ex, w), smoothing)


def example_loss(ex, w, model: ScoreModel, smoothing: SmoothingConfig | None) -> ExampleLoss:
    return hinge(ex, w, model) if smoothing is None else smoothed_hinge(ex, w, model, smoothing)


def _add_tables(a: PotentialTable, b: PotentialTable) -> PotentialTable:
    nodes = tuple(x + y for x, y in zip(a.node_scores, b.node_scores))
    edges = tuple(None if x is None else x + y for x, y in zip(a.edge_scores, b.edge_scores))
    return a.replace(node_scores=nodes, edge_scores=edges, offset=a.offset + b.offset)


def linearized_loss(ex, w_anchor, w, model: ScoreModel, smoothing: SmoothingConfig | None) -> ExampleLoss:
    """(Smoothed) hinge of the scores linearized at ``w_anchor``, evaluated at ``w``."""
    w_anchor = _check_w(model, w_anchor)
    w = _check_w(model, w)
    base = _add_tables(model.potentials(ex, w_anchor), model.jvp(ex, w_anchor, w - w_anchor))
    return _loss_from_table(model, ex, w, base, smoothing, w_grad=w_anchor)


def objective(model: ScoreModel, examples: Sequence, w, lam: float, smoothing: SmoothingConfig | None = None):
    """``(1/n) sum_i f_i(w) + (lam/2)||w||^2`` and its (sub)gradient, reduced in index order."""
    if lam < 0:
        raise InvalidInputError(f"lambda must be non-negative, got {lam}")
    if len(examples) == 0:
        raise InvalidInputError("objective over an empty dataset")
    w = _check_w(model, w)
    total, grad = 0.0, np.zeros(model.d)
    for ex in examples:
        el = example_loss(ex, w, model, smoothing)
        total += el.value
        grad += el.gradient
    n = len(examples)
    return total / n + 0.5 * lam * float(w @ w), grad / n + lam * w


def output_space_size(model: ScoreModel, examples: Sequence, w=None) -> int:
    """Largest ``|Y|`` over the examples (used for the entropy bound ``log|Y|``)."""
    w = np.zeros(model.d) if w is None else w
    return max(model.potentials(ex, w).domain.cardinality for ex in examples)


_DEFAULT = object()


class Objective:
    """Regularized finite sum seen by the optimizers::

        F(w) = (1/n) sum_i f_i(w) + (lam/2)||w||^2 + sum_j (c_j/2)||w - v_j||^2

    ``smoothing`` selects the oracle behind each ``f_i`` (``None`` is the plain hinge).
    With ``anchor`` set, every ``f_i`` is the hinge of scores linearized at the anchor.
    Several proximal terms may be stacked (``prox_terms`` holds ``(weight, center)`` pairs);
    the prox-linear method adds its step term and the accelerated outer loop adds another.
    """

    def __init__(self, model: ScoreModel, examples: Sequence, lam: float, smoothing=None, anchor=None,
                 prox_terms=()):
        if len(examples) == 0:
            raise InvalidInputError("objective over an empty dataset")
        if lam < 0 or any(wt < 0 for wt, _ in prox_terms):
            raise InvalidInputError(f"lambda and prox weights must be non-negative, got {lam}")
        self.model = model
        self.examples = list(examples)
        self.lam = float(lam)
        self.smoothing = smoothing
        self.anchor = None if anchor is None else _check_w(model, anchor).copy()
        self.prox_terms = tuple((float(wt), _check_w(model, c).copy()) for wt, c in prox_terms)

    @property
    def n(self) -> int:
        return len(self.examples)

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def strong_convexity(self) -> float:
        """Modulus contributed by the quadratic terms."""
        return self.lam + sum(wt for wt, _ in self.prox_terms)

    def _replace(self, **kw) -> "Objective":
        args = dict(smoothing=self.smoothing, anchor=self.anchor, prox_terms=self.prox_terms)
        args.update(kw)
        return Objective(self.model, self.examples, self.lam, **args)

    def with_smoothing(self, smoothing) -> "Objective":
        return self._replace(smoothing=smoothing)

    def with_anchor(self, anchor) -> "Objective":
        return self._replace(anchor=anchor)

    def with_prox(self, weight: float, center) -> "Objective":
        """Copy with one more term ``(weight/2)||w - center||^2``."""
        return self._replace(prox_terms=self.prox_terms + ((weight, center),))

    def plain(self) -> "Objective":
        """The unsmoothed, unlinearized objective without a proximal term."""
        return Objective(self.model, self.examples, self.lam)

    def loss(self, i: int, w, smoothing=_DEFAULT) -> ExampleLoss:
        """Loss of example ``i`` (one oracle call), without the quadratic terms."""
        smoothing = self.smoothing if smoothing is _DEFAULT else smoothing
        ex = self.examples[i]
        if self.anchor is not None:
            return linearized_loss(ex, self.anchor, w, self.model, smoothing)
        return example_loss(ex, w, self.model, smoothing)

    def _quad_grad(self, w) -> np.ndarray:
        g = self.lam * w
        for wt, c in self.prox_terms:
            g = g + wt * (w - c)
        return g

    def _quad_value(self, w) -> float:
        v = 0.5 * self.lam * float(w @ w)
        for wt, c in self.prox_terms:
            r = w - c
            v += 0.5 * wt * float(r @ r)
        return v

    def component_grad(self, i: int, w) -> np.ndarray:
        """Gradient of the i-th component, quadratic terms included."""
        return self.loss(i, w).gradient + self._quad_grad(w)

    def full(self, w, smoothing=_DEFAULT):
        """Value and gradient of ``F`` with a fixed-order reduction over examples."""
        w = _check_w(self.model, w)
        total, grad = 0.0, np.zeros(self.d)
        for i in range(self.n):
            el = self.loss(i, w, smoothing)
            total += el.value
            grad += el.gradient
        return total / self.n + self._quad_value(w), grad / self.n + self._quad_grad(w)

    def value(self, w, smoothing=_DEFAULT) -> float:
        return self.full(w, smoothing)[0]

    def bound_constant(self) -> float:
        """``D`` in ``0 <= F_mu - F <= mu * D`` for the current smoother."""
        if self.smoothing is None:
            return 0.0
        size = output_space_size(self.model, self.examples) if self.smoothing.kind == "entropy" else None
        return self.smoothing.bound_constant(size)

    def feature_scale(self) -> float:
        """Estimate of ``A = max_i ||A_i||^2``: the largest squared feature-difference row norm.

        Each example contributes the row of its loss-augmented argmax at the current
        anchor (or zero), i.e. the squared norm of its hinge subgradient there.
        """
        w = np.zeros(self.d) if self.anchor is None else self.anchor
        rows = [self.loss(i, w, None).gradient for i in range(self.n)]
        return max(float(g @ g) for g in rows) or 1.0
