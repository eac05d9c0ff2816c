"""Inexact prox-linear method for non-convex scores, with the accelerated smoothing loop as inner solver.

Iteration ``k`` linearizes every score map at ``w_{k-1}`` and approximately minimizes the convex model::

    F_eta(w; w_{k-1}) = (1/n) sum_i hinge_i(linearized at w_{k-1})(w) + (lam/2)||w||^2
                        + (1/(2 eta)) ||w - w_{k-1}||^2
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DivergenceError, InvalidInputError
from ..graph import DEFAULT_ENUM_CAP, score_all
from ..loss import Objective, loss_augment
from ..oracles import support_occupancy
from ..smoothing import SmoothingConfig, project_simplex
from .casimir import CallCounter, InnerSolverBudget, OptimizerTrace, SvrgConfig, TraceRow, casimir_run, make_schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProxLinearConfig:
    """Step length ``eta``, tolerances ``eps_k = eps0 / k`` and the inner solver settings.

    ``decay="adaptive"`` uses ``mu_k = mu / k`` and ``L_k = k L0``; ``"constant"`` keeps both fixed.
    ``inner_iters`` outer iterations of the inner solver are run per subproblem; with
    ``inner_mode="tolerance"`` more blocks follow until a certified gap ``<= eps_k``
    (at most ``max_inner_blocks`` blocks).
    """

    eta: float = 1.0
    eps0: float = 1.0
    smoothing: SmoothingConfig = SmoothingConfig("topk_l2", 1.0, 5)
    decay: str = "adaptive"
    L0: float | None = None
    inner_iters: int = 5
    inner_mode: str = "budget"
    max_inner_blocks: int = 50
    always_accept: bool = False
    track_prox_gradient: bool = False

    def __post_init__(self):
        if not self.eta > 0 or not self.eps0 > 0:
            raise ConfigError("eta and eps0 must be positive")
        if self.decay not in ("constant", "adaptive"):
            raise ConfigError(f"unknown decay {self.decay!r}")
        if self.inner_mode not in ("budget", "tolerance"):
            raise ConfigError(f"unknown inner mode {self.inner_mode!r}")
        if self.inner_iters < 1:
            raise ConfigError("inner_iters must be at least 1")


@dataclass(frozen=True)
class ProxGradient:
    vector: np.ndarray
    norm: float
    minimizer: np.ndarray
    residual: float


def _linear_pieces(objective: Objective, w, cap: int):
    """Per example: values ``c[y]`` and gradients ``G[y]`` of every augmented score at ``w``."""
    model = objective.model
    pieces = []
    for ex in objective.examples:
        aug = loss_augment(model.potentials(ex, w), model.gold(ex))
        c, ys = score_all(aug, cap)
        gold_nodes, gold_edges = support_occupancy(aug, ((1.0, tuple(model.gold(ex))),))
        rows = []
        for y in ys:
            nodes, edges = support_occupancy(aug, ((1.0, tuple(int(a) for a in y)),))
            nodes = [a - b for a, b in zip(nodes, gold_nodes)]
            edges = [None if a is None else a - b for a, b in zip(edges, gold_edges)]
            rows.append(model.gradient(ex, w, nodes, edges))
        pieces.append((c, np.array(rows)))
    return pieces


def prox_gradient(objective: Objective, w, eta: float, tol: float = 1e-8, max_iter: int = 200_000,
                  cap: int = DEFAULT_ENUM_CAP) -> ProxGradient:
    """Gradient mapping ``(w - argmin_z F_eta(z; w)) / eta`` of the non-smooth objective.

    The local model is a max of affine pieces, so it is solved through its dual (one simplex
    per example) by accelerated projected gradient ascent until the dual gradient mapping
    has norm ``<= tol``. Every labeling is enumerated, so this is meant for small problems.
    """
    if not eta > 0:
        raise InvalidInputError(f"eta must be positive, got {eta}")
    w = np.asarray(w, dtype=np.float64)
    n = objective.n
    sigma = objective.lam + 1.0 / eta
    pieces = _linear_pieces(objective, w, cap)
    # affine pieces in z: c[y] + G[y] . (z - w) = b[y] + G[y] . z
    bs = [c - G @ w for c, G in pieces]
    Gs = [G for _, G in pieces]
    lip = sum(float(np.sum(G * G)) for G in Gs) / (n * n * sigma) or 1.0

    def primal(us):
        s = sum(G.T @ u for G, u in zip(Gs, us)) / n
        return (w / eta - s) / sigma

    def grads(us):
        z = primal(us)
        return [(b + G @ z) / n for b, G in zip(bs, Gs)], z

    us = [np.full(len(b), 1.0 / len(b)) for b in bs]
    ys_, t = [u.copy() for u in us], 1.0
    residual = np.inf
    for _ in range(max_iter):
        g, _z = grads(ys_)
        new = [project_simplex(y + gi / lip) for y, gi in zip(ys_, g)]
        residual = lip * np.sqrt(sum(float(np.sum((a - y) ** 2)) for a, y in zip(new, ys_)))
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        ys_ = [a + ((t - 1.0) / t_next) * (a - u) for a, u in zip(new, us)]
        us, t = new, t_next
        if residual <= tol:
            break
    else:
        raise DivergenceError(f"prox subproblem did not converge; dual residual {residual:.3e}")
    z = primal(us)
    vec = (w - z) / eta
    return ProxGradient(vec, float(np.linalg.norm(vec)), z, float(residual))


def local_model_value(objective: Objective, w_anchor, w, eta: float, smoothing=None) -> float:
    """``F_eta(w; w_anchor)``, optionally smoothed."""
    return objective.plain().with_anchor(w_anchor).with_prox(1.0 / eta, w_anchor).with_smoothing(smoothing).value(w)


def proxlinear_run(objective: Objective, config: ProxLinearConfig, w0, K_outer: int, seed: int = 0,
                   metric: Callable | None = None):
    """Run ``K_outer`` prox-linear iterations. Returns ``(w_K, trace)``.

    ``trace.rows[k].objective`` is ``F(w_k)``. Per-iteration extras live in ``trace.extra``:
    ``eps`` (targets ``eps0 / k``), ``certificate`` (a certified upper bound on the subproblem
    gap), ``accepted``, ``model_excess`` and, with ``track_prox_gradient``, ``prox_grad_norm_sq``
    for ``w_0..w_{K-1}``.

    ``model_excess`` is ``F(w_hat) - F_eta(w_hat; w)``. It is at most zero whenever ``eta`` is
    below the inverse curvature of the scores, so a positive value flags a step length that is
    too long; such iterations are logged as warnings.
    """
    plain = objective.plain()
    rng = np.random.default_rng(seed)
    counter = CallCounter()
    trace = OptimizerTrace(extra={"eps": [], "certificate": [], "accepted": [], "model_excess": [],
                                  "prox_grad_norm_sq": []})
    t0 = time.perf_counter()
    w = np.array(w0, dtype=np.float64)
    f_w = plain.value(w)
    if not np.isfinite(f_w):
        raise DivergenceError("non-finite objective at the initial point", trace, 0)
    score = (lambda v: float(metric(v))) if metric is not None else (lambda v: float("nan"))
    trace.append(TraceRow(0, f_w, float("nan"), 0, 0, 0.0, 0.0, score(w)))
    sigma = plain.lam + 1.0 / config.eta

    for k in range(1, int(K_outer) + 1):
        if config.track_prox_gradient:
            trace.extra["prox_grad_norm_sq"].append(prox_gradient(plain, w, config.eta).norm ** 2)
        mu_k = config.smoothing.mu / k if config.decay == "adaptive" else config.smoothing.mu
        smoothing = config.smoothing.with_mu(mu_k)
        sub = plain.with_anchor(w).with_prox(1.0 / config.eta, w).with_smoothing(smoothing)
        if config.L0 is not None:
            L_k = config.L0 * k if config.decay == "adaptive" else config.L0
        else:
            L_k = sub.feature_scale() / mu_k
        ratio = L_k / sub.n
        kappa = ratio - sigma if ratio > 4.0 * sigma else sigma
        # The subproblem's own quadratic terms already supply strong convexity sigma.
        schedule = make_schedule("sc-const", sigma, kappa=kappa, mu=mu_k)
        inner = SvrgConfig(InnerSolverBudget("fixed"), lipschitz=L_k)
        eps_k = config.eps0 / k
        D = sub.bound_constant()

        w_hat, blocks = w, 0
        while True:
            w_hat, tr = casimir_run(sub, schedule, w_hat, config.inner_iters, inner, evaluate=False, rng=rng)
            counter.oracle_calls += tr.rows[-1].oracle_calls
            counter.anchor_calls += tr.rows[-1].anchor_calls
            blocks += 1
            fs, gs = sub.full(w_hat)
            cert = sub.with_smoothing(None).value(w_hat) - fs + mu_k * D + float(gs @ gs) / (2.0 * sigma)
            if config.inner_mode == "budget" or cert <= eps_k or blocks >= config.max_inner_blocks:
                break

        f_hat = plain.value(w_hat)
        if not np.isfinite(f_hat):
            raise DivergenceError(f"non-finite objective at prox-linear iteration {k}", trace, k)
        excess = f_hat - local_model_value(plain, w, w_hat, config.eta)
        if excess > 1e-9 * max(1.0, abs(f_hat)):
            log.warning("prox-linear iteration %d: objective exceeds its model by %.3e; eta may be too long", k, excess)
        accept = config.always_accept or f_hat <= f_w
        if accept:
            step = float(np.linalg.norm(w_hat - w))
            w, f_w = w_hat, f_hat
        else:
            step = 0.0
        trace.extra["eps"].append(eps_k)
        trace.extra["certificate"].append(float(cert))
        trace.extra["accepted"].append(bool(accept))
        trace.extra["model_excess"].append(float(excess))
        trace.append(TraceRow(k, f_w, float("nan"), counter.oracle_calls, counter.anchor_calls,
                              time.perf_counter() - t0, step, score(w)))
    return w, trace
