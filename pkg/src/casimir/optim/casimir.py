"""Accelerated inexact proximal point outer loop with smoothing, SVRG inner solver and an SGD baseline.

Each outer iteration ``k`` approximately minimizes the smoothed, regularized subproblem::

    F_k(w) = F_{mu_k}(w) + (kappa_k / 2) ||w - z_{k-1}||^2

and then extrapolates ``z_k = w_k + beta_k (w_k - w_{k-1})``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from ..errors import ConfigError, DivergenceError, InvalidInputError
from ..loss import Objective

log = logging.getLogger(__name__)

SCHEDULE_KINDS = ("sc-const", "sc-adaptive", "nonsc-const", "nonsc-adaptive")
WARM_STARTS = ("prox-center", "prev-iterate", "extrapolation")


def alpha_update(alpha_prev: float, kappa_k: float, kappa_next: float, lam: float) -> float:
    """Non-negative root of ``a^2 (kappa_next + lam) = (1 - a) alpha_prev^2 (kappa_k + lam) + a lam``."""
    a = kappa_next + lam
    c = alpha_prev**2 * (kappa_k + lam)
    b = c - lam
    disc = math.sqrt(b * b + 4.0 * a * c)
    # Pick the cancellation-free form of the positive root.
    return (2.0 * c) / (b + disc) if b >= 0 else (disc - b) / (2.0 * a)


def beta_coeff(alpha_prev: float, alpha: float, kappa_k: float, kappa_next: float, lam: float) -> float:
    """Extrapolation weight for ``z_k = w_k + beta_k (w_k - w_{k-1})``."""
    num = alpha_prev * (1.0 - alpha_prev) * (kappa_k + lam)
    return num / (alpha_prev**2 * (kappa_k + lam) + alpha * (kappa_next + lam))


@dataclass(frozen=True)
class CasimirSchedule:
    """Per-iteration smoothing ``mu_k``, regularization ``kappa_k`` and accuracy ``delta_k`` (``k >= 1``)."""

    kind: str
    lam: float
    kappa: float
    mu: float
    alpha0: float

    @property
    def q(self) -> float:
        return self.lam / (self.lam + self.kappa)

    def mu_k(self, k: int) -> float:
        if self.kind == "sc-adaptive":
            return self.mu * (1.0 - math.sqrt(self.q) / 2.0) ** (k / 2.0)
        if self.kind == "nonsc-adaptive":
            return self.mu / k
        return self.mu

    def kappa_k(self, k: int) -> float:
        return self.kappa * k if self.kind == "nonsc-adaptive" else self.kappa

    def delta_k(self, k: int) -> float:
        if self.kind.startswith("sc"):
            sq = math.sqrt(self.q)
            return sq / (2.0 - sq)
        return 1.0 / (k + 1) ** 2

    def alphas(self, K: int) -> np.ndarray:
        """``alpha_0, ..., alpha_K``."""
        out = [self.alpha0]
        for k in range(1, K + 1):
            out.append(alpha_update(out[-1], self.kappa_k(k), self.kappa_k(k + 1), self.lam))
        return np.array(out)


def make_schedule(kind: str, lam: float, kappa: float | None = None, mu: float | None = None,
                  epsilon: float | None = None, n: int | None = None, D: float = 0.5,
                  A: float | None = None) -> CasimirSchedule:
    """Build one of the four schedules.

    With ``epsilon`` the constant-smoothing kinds derive ``mu`` and ``kappa`` from the target
    accuracy, the smoothing bound ``D``, the feature scale ``A`` and the dataset size ``n``:
    ``sc-const`` uses ``mu = eps/(10 D)`` and ``kappa = A/(mu n) - lam`` when ``A/(mu n) > 4 lam``
    (else ``lam``); ``nonsc-const`` uses ``mu = eps/(20 D)`` and ``kappa = A/(mu (n+1))``.
    Adaptive kinds default ``kappa`` to ``lam`` (strongly convex) as is common practice.
    """
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule {kind!r}; expected one of {SCHEDULE_KINDS}")
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    strongly_convex = kind.startswith("sc")
    if strongly_convex and lam <= 0:
        raise ConfigError(f"schedule {kind} needs lambda > 0")

    if epsilon is not None and kind in ("sc-const", "nonsc-const"):
        if A is None or n is None:
            raise ConfigError("deriving mu and kappa from epsilon needs A and n")
        if kind == "sc-const":
            mu = epsilon / (10.0 * D)
            ratio = A / (mu * n)
            kappa = ratio - lam if ratio > 4.0 * lam else lam
        else:
            mu = epsilon / (20.0 * D)
            kappa = A / (mu * (n + 1))
    if kappa is None and strongly_convex:
        kappa = lam
    if mu is None or kappa is None:
        raise ConfigError(f"schedule {kind} needs mu and kappa (or epsilon, A, n)")
    if not mu > 0 or not kappa > 0:
        raise ConfigError(f"mu and kappa must be positive, got mu={mu}, kappa={kappa}")

    alpha0 = math.sqrt(lam / (lam + kappa)) if strongly_convex else (math.sqrt(5.0) - 1.0) / 2.0
    sched = CasimirSchedule(kind, float(lam), float(kappa), float(mu), alpha0)
    if alpha0**2 < lam / (lam + sched.kappa_k(1)) - 1e-15:
        raise ConfigError("alpha_0^2 >= lambda / (lambda + kappa_1) fails for this schedule")
    return sched


# --- traces -----------------------------------------------------------------


class TraceRow(NamedTuple):
    iteration: int
    objective: float
    smoothed_objective: float
    oracle_calls: int
    anchor_calls: int
    wall_time: float
    step_norm: float
    metric: float


@dataclass
class OptimizerTrace:
    """One row per outer iteration (or epoch/checkpoint for the baselines)."""

    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def append(self, row: TraceRow):
        if self.rows and row.oracle_calls < self.rows[-1].oracle_calls:
            raise InvalidInputError("oracle-call counts must be monotone")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass
class CallCounter:
    """Oracle calls by the stochastic steps and by full-gradient anchor passes."""

    oracle_calls: int = 0
    anchor_calls: int = 0


class _Recorder:
    def __init__(self, objective: Objective, evaluate: bool, metric: Callable | None, smoothing):
        self.plain = objective.plain()
        self.smoothed = self.plain.with_smoothing(smoothing) if smoothing is not None else None
        self.evaluate = evaluate
        self.metric = metric
        self.trace = OptimizerTrace()
        self.t0 = time.perf_counter()

    def record(self, k, w, counter: CallCounter, step_norm=float("nan")):
        try:
            f = self.plain.value(w) if self.evaluate else float("nan")
            fs = self.smoothed.value(w) if (self.evaluate and self.smoothed is not None) else float("nan")
        except DivergenceError as err:
            raise DivergenceError(f"iteration {k}: {err}", self.trace, k) from err
        if self.evaluate and not (np.isfinite(f) and np.all(np.isfinite(w))):
            raise DivergenceError(f"non-finite objective at iteration {k}", self.trace, k)
        m = float(self.metric(w)) if self.metric is not None else float("nan")
        self.trace.append(TraceRow(k, f, fs, counter.oracle_calls, counter.anchor_calls,
                                   time.perf_counter() - self.t0, float(step_norm), m))


# --- SVRG -------------------------------------------------------------------


@dataclass(frozen=True)
class InnerSolverBudget:
    """``fixed``: exactly ``T_budget`` stochastic steps (``None`` means ``n``).
    ``relative``: stop once ``||grad F_k(w)||^2 <= (lam + kappa) delta kappa ||w - z||^2``.
    """

    mode: str = "fixed"
    T_budget: int | None = None
    delta: float | None = None
    max_epochs: int = 100

    def __post_init__(self):
        if self.mode not in ("fixed", "relative"):
            raise ConfigError(f"unknown inner budget mode {self.mode!r}")
        if self.T_budget is not None and self.T_budget < 1:
            raise ConfigError("T_budget must be at least 1")
        if self.delta is not None and not 0 <= self.delta < 1:
            raise ConfigError("delta must lie in [0, 1)")


def svrg_solve(sub: Objective, w0, budget: InnerSolverBudget, step: float, rng,
               counter: CallCounter | None = None) -> np.ndarray:
    """SVRG on the finite sum ``sub`` (quadratic terms included in every component).

    Epochs have length ``n``. Each starts with a full gradient at the anchor, and the
    epoch's averaged iterate becomes the next anchor and the returned point. Per-example
    anchor gradients from the full pass are cached, so a stochastic step costs one oracle call.
    ``rng`` is a seeded ``numpy.random.Generator`` (or a seed).
    """
    if not step > 0:
        raise InvalidInputError(f"step must be positive, got {step}")
    rng = np.random.default_rng(rng)
    counter = CallCounter() if counter is None else counter
    n = sub.n
    w = np.array(w0, dtype=np.float64)
    total_steps = (budget.T_budget or n) if budget.mode == "fixed" else None
    done = 0
    epoch = 0
    anchor = w.copy()
    while True:
        if budget.mode == "fixed" and done >= total_steps:
            return anchor
        anchor_grads = [sub.loss(i, anchor).gradient for i in range(n)]
        counter.anchor_calls += n
        mean_grad = np.mean(anchor_grads, axis=0) + sub._quad_grad(anchor)
        if not np.all(np.isfinite(mean_grad)):
            raise DivergenceError(f"non-finite full gradient in SVRG epoch {epoch}", iteration=epoch)
        if budget.mode == "relative" and epoch > 0:
            kappa, center = sub.prox_terms[-1] if sub.prox_terms else (0.0, anchor)
            r = anchor - center
            if float(mean_grad @ mean_grad) <= sub.strong_convexity * budget.delta * kappa * float(r @ r):
                return anchor
            if epoch >= budget.max_epochs:
                return anchor

        steps = n if total_steps is None else min(n, total_steps - done)
        w = anchor.copy()
        avg = np.zeros_like(w)
        for t in range(steps):
            i = int(rng.integers(n))
            g = sub.loss(i, w).gradient - anchor_grads[i] + mean_grad + sub._quad_grad(w) - sub._quad_grad(anchor)
            w = w - step * g
            avg += (w - avg) / (t + 1)
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"non-finite iterate in SVRG epoch {epoch}", iteration=epoch)
        counter.oracle_calls += steps
        done += steps
        epoch += 1
        anchor = avg


@dataclass(frozen=True)
class SvrgConfig:
    """Inner solver settings. The step is ``1/(L + lam + kappa)`` with ``L = lipschitz`` if given,
    otherwise ``L = A / mu`` for the feature scale ``A`` of the objective."""

    budget: InnerSolverBudget = InnerSolverBudget()
    lipschitz: float | None = None
    feature_scale: float | None = None


def casimir_run(objective: Objective, schedule: CasimirSchedule, w0, K_outer: int, inner: SvrgConfig = SvrgConfig(),
                warm_start: str = "prox-center", seed: int = 0, evaluate: bool = True,
                metric: Callable | None = None, rng=None):
    """Run ``K_outer`` outer iterations. ``objective.smoothing`` fixes the smoother kind and ``K``;
    its temperature is replaced by ``schedule.mu_k(k)``. Returns ``(w_K, trace)``.

    The trace starts with a row for ``w0`` (iteration 0). ``evaluate=False`` skips the
    full-objective bookkeeping passes (they are never counted as oracle calls).
    """
    if objective.smoothing is None:
        raise ConfigError("casimir_run needs a smoothing configuration on the objective")
    if warm_start not in WARM_STARTS:
        raise ConfigError(f"unknown warm start {warm_start!r}; expected one of {WARM_STARTS}")
    rng = np.random.default_rng(seed) if rng is None else rng
    lam = objective.strong_convexity  # proximal terms already on the objective act like extra lambda
    counter = CallCounter()
    rec = _Recorder(objective, evaluate, metric, objective.smoothing.with_mu(schedule.mu_k(1)))
    w_prev = np.array(w0, dtype=np.float64)
    z_prev, z_prev2 = w_prev.copy(), w_prev.copy()
    rec.record(0, w_prev, counter, 0.0)
    A = inner.feature_scale if inner.feature_scale is not None else (
        objective.feature_scale() if inner.lipschitz is None else None)
    if A is not None:
        log.info("feature scale A = %.6g", A)
    rec.trace.extra["feature_scale"] = A

    alpha_prev = schedule.alpha0
    for k in range(1, int(K_outer) + 1):
        mu_k, kappa_k = schedule.mu_k(k), schedule.kappa_k(k)
        kappa_next = schedule.kappa_k(k + 1)
        sub = objective.with_smoothing(objective.smoothing.with_mu(mu_k)).with_prox(kappa_k, z_prev)
        if warm_start == "prox-center":
            start = z_prev
        elif warm_start == "prev-iterate":
            start = w_prev
        else:
            start = w_prev + kappa_k / (kappa_k + lam) * (z_prev - z_prev2)
        L = inner.lipschitz if inner.lipschitz is not None else A / mu_k
        budget = inner.budget
        if budget.mode == "relative":
            budget = replace(budget, delta=schedule.delta_k(k))
        try:
            w_k = svrg_solve(sub, start, budget, 1.0 / (L + lam + kappa_k), rng, counter)
        except DivergenceError as err:
            raise DivergenceError(f"outer iteration {k}: {err}", rec.trace, k) from err

        alpha = alpha_update(alpha_prev, kappa_k, kappa_next, lam)
        beta = beta_coeff(alpha_prev, alpha, kappa_k, kappa_next, lam)
        z_k = w_k + beta * (w_k - w_prev)
        step_norm = float(np.linalg.norm(w_k - z_prev))
        rec.smoothed = rec.plain.with_smoothing(objective.smoothing.with_mu(mu_k))
        rec.record(k, w_k, counter, step_norm)
        z_prev2, z_prev, w_prev, alpha_prev = z_prev, z_k, w_k, alpha
    return w_prev, rec.trace


def svrg_run(objective: Objective, step: float, w0, epochs: int, seed: int = 0, evaluate: bool = True,
             metric: Callable | None = None):
    """Plain SVRG on the smoothed objective, one trace row per epoch."""
    if objective.smoothing is None:
        raise ConfigError("svrg_run needs a smoothing configuration on the objective")
    rng = np.random.default_rng(seed)
    counter = CallCounter()
    rec = _Recorder(objective, evaluate, metric, objective.smoothing)
    w = np.array(w0, dtype=np.float64)
    rec.record(0, w, counter, 0.0)
    for e in range(1, int(epochs) + 1):
        try:
            w_new = svrg_solve(objective, w, InnerSolverBudget("fixed", objective.n), step, rng, counter)
        except DivergenceError as err:
            raise DivergenceError(f"epoch {e}: {err}", rec.trace, e) from err
        rec.record(e, w_new, counter, float(np.linalg.norm(w_new - w)))
        w = w_new
    return w, rec.trace


def sgd_run(objective: Objective, gamma0: float, t0: int, w0, epochs: int, seed: int = 0,
            evaluate: bool = True, metric: Callable | None = None, checkpoint: int | None = None):
    """Stochastic subgradient steps ``w -= gamma_t g_i`` with ``gamma_t = gamma0 / (1 + floor(t / t0))``.

    Works on the non-smooth objective. One trace row every ``checkpoint`` steps (default ``n``).
    """
    if gamma0 < 0:
        raise InvalidInputError(f"gamma0 must be non-negative, got {gamma0}")
    if t0 < 1:
        raise InvalidInputError(f"t0 must be at least 1, got {t0}")
    plain = objective.with_smoothing(None)
    rng = np.random.default_rng(seed)
    counter = CallCounter()
    rec = _Recorder(objective, evaluate, metric, None)
    checkpoint = checkpoint or objective.n
    w = np.array(w0, dtype=np.float64)
    rec.record(0, w, counter, 0.0)
    last = w.copy()
    total = int(epochs) * objective.n
    for t in range(total):
        i = int(rng.integers(objective.n))
        try:
            g = plain.component_grad(i, w)
        except DivergenceError as err:
            raise DivergenceError(f"SGD step {t}: {err}", rec.trace, t) from err
        w = w - (gamma0 / (1 + t // t0)) * g
        counter.oracle_calls += 1
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"non-finite SGD iterate at step {t}", rec.trace, t)
        if (t + 1) % checkpoint == 0:
            rec.record((t + 1) // checkpoint, w, counter, float(np.linalg.norm(w - last)))
            last = w.copy()
    return w, rec.trace
