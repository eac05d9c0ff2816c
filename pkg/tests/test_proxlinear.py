import numpy as np
import pytest

from casimir.errors import ConfigError, InvalidInputError
from casimir.loss import Objective, QuadraticExample, QuadraticScoreModel
from casimir.optim import (
    InnerSolverBudget,
    ProxLinearConfig,
    SvrgConfig,
    casimir_run,
    make_schedule,
    prox_gradient,
    proxlinear_run,
)
from casimir.optim.proxlinear import local_model_value
from casimir.smoothing import SmoothingConfig


def quad_toy(seed=0, n=6, d=2, lam=0.1):
    rng = np.random.default_rng(seed)
    exs = []
    for _ in range(n):
        Q = rng.standard_normal((2, d, d))
        exs.append(QuadraticExample(rng.standard_normal((2, d)), 0.5 * (Q + np.swapaxes(Q, 1, 2)),
                                    int(rng.integers(2))))
    model = QuadraticScoreModel(d)
    return Objective(model, exs, lam), max(model.smoothness(e) for e in exs)


def grid_values(obj, W):
    """F on the rows of ``W``, computed directly from the score formula."""
    total = np.zeros(len(W))
    for ex in obj.examples:
        s = W @ ex.a.T + 0.5 * np.einsum("ni,yij,nj->ny", W, ex.Q, W)
        ham = (np.arange(2) != ex.gold).astype(float)
        total += np.max(s + ham - s[:, [ex.gold]], axis=1)
    return total / obj.n + 0.5 * obj.lam * np.sum(W * W, axis=1)


def grid_min(obj, lo=-4.0, hi=4.0, m=801):
    g = np.linspace(lo, hi, m)
    W = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    return float(grid_values(obj, W).min())


def test_grid_values_match_objective():
    obj, _ = quad_toy()
    W = np.random.default_rng(1).standard_normal((5, 2))
    np.testing.assert_allclose(grid_values(obj, W), [obj.value(w) for w in W], atol=1e-12)


def one_dim(s, q, lam=0.2):
    ex = QuadraticExample(np.array([[0.0], [s]]), np.array([[[0.0]], [[q]]]), 0)
    return Objective(QuadraticScoreModel(1), [ex], lam)


def closed_form_prox(s, q, lam, w0, eta):
    """argmin_z max(0, b + g z) + lam/2 z^2 + (z - w0)^2 / (2 eta) for the model linearized at w0."""
    g = s + q * w0
    b = 1.0 + s * w0 + 0.5 * q * w0 * w0 - g * w0
    sigma = lam + 1.0 / eta
    z_on = (w0 / eta - g) / sigma
    if b + g * z_on >= 0:
        return z_on
    z_off = (w0 / eta) / sigma
    if b + g * z_off <= 0:
        return z_off
    return -b / g


@pytest.mark.parametrize("s,q,w0,eta", [(1.5, 0.0, 0.3, 1.0), (-2.0, 0.0, 1.0, 0.1), (0.7, 1.3, -0.4, 0.5),
                                        (2.0, -0.8, 1.1, 2.0), (-0.5, 0.4, 3.0, 0.05)])
def test_prox_gradient_one_dim_closed_form(s, q, w0, eta):
    obj = one_dim(s, q)
    pg = prox_gradient(obj, np.array([w0]), eta)
    z = closed_form_prox(s, q, obj.lam, w0, eta)
    assert pg.minimizer[0] == pytest.approx(z, abs=1e-7)
    assert pg.vector[0] == pytest.approx((w0 - z) / eta, abs=1e-6 / eta)
    assert pg.norm == abs(pg.vector[0])


def test_prox_gradient_vanishes_at_optimum():
    obj = one_dim(1.5, 0.0, lam=0.2)
    # optimum of max(0, 1 + 1.5 w) + 0.1 w^2 sits on the kink w = -2/3
    pg = prox_gradient(obj, np.array([-2.0 / 3.0]), 1.0)
    assert pg.norm <= 1e-6


def test_prox_gradient_definition_identity():
    obj, _ = quad_toy()
    w = np.array([0.5, -0.3])
    for eta in (0.1, 0.2):
        pg = prox_gradient(obj, w, eta)
        np.testing.assert_allclose(pg.vector, (w - pg.minimizer) / eta, rtol=1e-14)


def test_prox_gradient_minimizes_local_model():
    obj, _ = quad_toy()
    w, eta = np.array([0.5, -0.3]), 0.2
    pg = prox_gradient(obj, w, eta)
    best = local_model_value(obj, w, pg.minimizer, eta)
    rng = np.random.default_rng(0)
    for _ in range(50):
        other = pg.minimizer + 1e-3 * rng.standard_normal(2)
        assert local_model_value(obj, w, other, eta) >= best - 1e-10


def test_prox_gradient_rejects_bad_eta():
    obj, _ = quad_toy()
    with pytest.raises(InvalidInputError):
        prox_gradient(obj, np.zeros(2), 0.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        ProxLinearConfig(eta=0.0)
    with pytest.raises(ConfigError):
        ProxLinearConfig(decay="sometimes")


def test_zero_outer_iterations():
    obj, L = quad_toy()
    w0 = np.array([1.0, 2.0])
    w, tr = proxlinear_run(obj, ProxLinearConfig(eta=1 / L), w0, 0)
    assert np.array_equal(w, w0)
    assert len(tr) == 1


def test_trace_non_increasing_and_stationarity_bound():
    obj, L = quad_toy()
    eta, K = 1.0 / L, 10
    cfg = ProxLinearConfig(eta=eta, eps0=0.1, smoothing=SmoothingConfig("l2", 0.1), inner_mode="tolerance",
                           track_prox_gradient=True)
    _, tr = proxlinear_run(obj, cfg, np.array([2.0, -2.0]), K, seed=0)
    f = tr.column("objective")
    assert np.all(np.diff(f) <= 0)
    fstar = grid_min(obj)
    assert f[-1] >= fstar - 1e-2  # the grid is a fine but not exact oracle
    bound = 2.0 / (eta * K) * (f[0] - fstar + sum(tr.extra["eps"]))
    assert min(tr.extra["prox_grad_norm_sq"]) <= 1.05 * bound
    assert all(c <= e for c, e in zip(tr.extra["certificate"], tr.extra["eps"]))
    assert max(tr.extra["model_excess"]) <= 1e-9  # eta = 1/L keeps F below its model


def test_long_step_flags_model_excess(caplog):
    obj, L = quad_toy(seed=3)
    cfg = ProxLinearConfig(eta=1e3 / L, always_accept=True, smoothing=SmoothingConfig("l2", 0.1))
    with caplog.at_level("WARNING", logger="casimir.optim.proxlinear"):
        _, tr = proxlinear_run(obj, cfg, np.array([1.0, 1.0]), 4)
    assert max(tr.extra["model_excess"]) > 0
    assert "eta may be too long" in caplog.text


def test_always_accept_flag():
    obj, L = quad_toy(seed=3)
    cfg = ProxLinearConfig(eta=10.0 / L, always_accept=True, smoothing=SmoothingConfig("l2", 0.1))
    _, tr = proxlinear_run(obj, cfg, np.array([1.0, 1.0]), 4)
    assert all(tr.extra["accepted"])


def test_affine_scores_match_casimir_first_iterate():
    # Linear scores: the prox-linear subproblem is a proximal-point step on the convex objective.
    obj, _ = quad_toy()
    for ex in obj.examples:
        ex.Q[...] = 0.0
    eta, mu, L0 = 0.5, 0.1, 20.0
    smoothing = SmoothingConfig("l2", mu)
    cfg = ProxLinearConfig(eta=eta, smoothing=smoothing, decay="constant", L0=L0, inner_iters=3)
    w0 = np.array([0.4, -0.2])
    w_pl, tr = proxlinear_run(obj, cfg, w0, 1, seed=5)

    sigma = obj.lam + 1.0 / eta
    sub = obj.with_prox(1.0 / eta, w0).with_smoothing(smoothing)
    ratio = L0 / obj.n
    kappa = ratio - sigma if ratio > 4 * sigma else sigma
    sched = make_schedule("sc-const", sigma, kappa=kappa, mu=mu)
    rng = np.random.default_rng(5)
    w_cs, _ = casimir_run(sub, sched, w0, 3, SvrgConfig(InnerSolverBudget("fixed"), lipschitz=L0),
                          evaluate=False, rng=rng)
    if tr.extra["accepted"][0]:
        np.testing.assert_allclose(w_pl, w_cs, atol=1e-12)
    else:
        assert obj.value(w_cs) > obj.value(w0)


def test_quadratic_model_bound_on_toy():
    obj, L = quad_toy()
    rng = np.random.default_rng(2)
    w = rng.standard_normal(2)
    f_lin = obj.with_anchor(w)
    for _ in range(50):
        z = rng.standard_normal(2)
        gap = abs(obj.value(w + z) - f_lin.value(w + z))
        assert gap <= 0.5 * L * float(z @ z) + 1e-10
