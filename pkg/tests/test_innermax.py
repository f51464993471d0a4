import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdro.costs import TransportCost, parse_cost
from wdro.innermax import (
    InnerSolverConfig,
    batch_surrogate,
    prox_sup_norm,
    proximal_ascent,
    solve_surrogate,
    surrogate_maximize,
)
from wdro.nets import HEAD_SOFTMAX, HEAD_SQUARED, Sample, SmoothNet, estimate_Lzz

SQ_L2 = TransportCost("sq-l2")


# -- sup-norm prox ---------------------------------------------------------------


def prox_objective(z, w, z0, alpha_lambda):
    # the prox minimizes (al/2)||z - z0||_inf^2 + 0.5*||z - w||^2
    return 0.5 * alpha_lambda * np.max(np.abs(z - z0)) ** 2 + 0.5 * np.sum((z - w) ** 2)


def brute_force_prox_value(w, z0, alpha_lambda):
    """Independent 1-D reduction: for a sup-norm radius t, the closest point
    to w clips each displacement at t; golden-section over t."""
    v1 = float(np.max(np.abs(w - z0)))

    def g(t):
        clipped = z0 + np.clip(w - z0, -t, t)
        return 0.5 * alpha_lambda * t * t + 0.5 * float(np.sum((clipped - w) ** 2))

    lo, hi = 0.0, v1
    phi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(200):
        if g(c) < g(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    t = (a + b) / 2
    return g(t)


def lemma_residual(w, z0, alpha_lambda, beta):
    v = np.abs(np.asarray(w) - np.asarray(z0))
    return float(np.sum(np.maximum(v - beta, 0.0)) - alpha_lambda * beta)


def test_prox_worked_example():
    r = prox_sup_norm(np.array([3.0, 1.0]), np.zeros(2), 1.0)
    assert r.j_star == 1
    assert r.beta == pytest.approx(1.5, abs=1e-12)
    assert r.z_next == pytest.approx([1.5, 1.0], abs=1e-12)
    assert abs(lemma_residual([3.0, 1.0], [0.0, 0.0], 1.0, r.beta)) <= 1e-9


def test_prox_zero_penalty_is_identity():
    w = np.array([2.0, -1.0, 0.5])
    r = prox_sup_norm(w, np.zeros(3), 0.0)
    assert np.array_equal(r.z_next, w)
    assert r.beta == pytest.approx(2.0)  # threshold sits at the max displacement


def test_prox_at_center_degenerate():
    w = np.array([1.0, -2.0])
    r = prox_sup_norm(w, w, 5.0)
    assert np.array_equal(r.z_next, w)
    assert r.beta == 0.0


@given(data=st.data())
@settings(max_examples=150, deadline=None)
def test_prox_matches_brute_force_and_residual(data):
    m = data.draw(st.integers(1, 10))
    fl = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
    w = np.array(data.draw(st.lists(fl, min_size=m, max_size=m)))
    z0 = np.array(data.draw(st.lists(fl, min_size=m, max_size=m)))
    al = data.draw(st.floats(0.0, 10.0, allow_nan=False))
    r = prox_sup_norm(w, z0, al)
    ours = prox_objective(r.z_next, w, z0, al)
    best = brute_force_prox_value(w, z0, al)
    assert ours <= best + 1e-6
    if al > 0 and np.max(np.abs(w - z0)) > 0:
        assert abs(lemma_residual(w, z0, al, r.beta)) <= 1e-9


def test_prox_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        prox_sup_norm(np.array([np.inf]), np.zeros(1), 1.0)


# -- smooth ascent ----------------------------------------------------------------


def small_net(seed=0, dims=(2, 4, 2), act="elu"):
    return SmoothNet.random(list(dims), act, HEAD_SOFTMAX, seed=seed)


def test_quadratic_closed_form_maximizer():
    # loss = 0.5*||x - c||^2 (identity net, squared head, target c);
    # objective 0.5||x-c||^2 - gamma*||x-x0||^2 is concave for gamma > 1/2
    # with stationary point x* = (2*gamma*x0 - c) / (2*gamma - 1).
    c = np.array([2.0, -1.0])
    net = SmoothNet([(np.eye(2), np.zeros(2))], [], HEAD_SQUARED)
    x0 = np.array([0.3, 0.4])
    gamma = 4.0
    x_star = (2 * gamma * x0 - c) / (2 * gamma - 1)
    cfg = InnerSolverConfig(steps=400, eta0=0.1)
    res = surrogate_maximize(net, Sample(x0, c), gamma, SQ_L2, cfg)
    assert res.z_hat.x == pytest.approx(x_star, abs=1e-6)


def test_stationary_start_is_noop():
    net = SmoothNet(
        [(np.zeros((3, 2)), np.zeros(3)), (np.eye(2, 3), np.zeros(2))],
        ["elu"],
        HEAD_SOFTMAX,
    )
    z0 = Sample(np.array([0.5, -0.5]), 0)
    res = surrogate_maximize(net, z0, 1.0, SQ_L2)
    assert np.array_equal(res.z_hat.x, z0.x)
    assert res.transport_cost == 0.0
    assert res.phi_value == pytest.approx(net.loss(z0))
    assert not res.degenerate


def test_huge_gamma_limits():
    net = small_net(4)
    z0 = Sample(np.array([0.2, -0.7]), 1)
    res = surrogate_maximize(net, z0, 1e6, SQ_L2)
    assert res.transport_cost < 1e-8
    assert abs(res.phi_value - net.loss(z0)) < 1e-4


def test_surrogate_invariants_random_nets():
    rng = np.random.default_rng(0)
    for seed in range(25):
        net = small_net(seed)
        z0 = Sample(rng.standard_normal(2), int(rng.integers(2)))
        gamma = float(rng.uniform(0.5, 5))
        res = surrogate_maximize(net, z0, gamma, SQ_L2)
        assert res.phi_value == pytest.approx(res.raw_loss - gamma * res.transport_cost, abs=1e-12)
        assert res.phi_value >= net.loss(z0) - 1e-12
        assert res.z_hat.y == z0.y
        # monotone acceptance: trace never decreases
        assert all(a <= b + 1e-15 for a, b in zip(res.trace, res.trace[1:]))


def test_labels_never_perturbed_covshift():
    net = small_net(7)
    cost = parse_cost("covshift:sq-l2")
    z0 = Sample(np.array([1.0, 1.0]), 1)
    res = surrogate_maximize(net, z0, 2.0, cost)
    assert res.z_hat.y == 1
    assert np.isfinite(res.transport_cost)


def test_rejects_sup_norm_cost():
    with pytest.raises(ValueError):
        surrogate_maximize(small_net(), Sample(np.zeros(2), 0), 1.0, TransportCost("sq-linf"))


def test_gamma_must_be_positive():
    with pytest.raises(ValueError):
        surrogate_maximize(small_net(), Sample(np.zeros(2), 0), 0.0, SQ_L2)


# -- proximal ascent ---------------------------------------------------------------


def test_proximal_constant_model_noop():
    net = SmoothNet(
        [(np.zeros((3, 2)), np.zeros(3)), (np.eye(2, 3), np.zeros(2))],
        ["elu"],
        HEAD_SOFTMAX,
    )
    z0 = Sample(np.array([0.1, 0.2]), 0)
    res = proximal_ascent(net, z0, 2.0)
    assert np.array_equal(res.z_hat.x, z0.x)


def test_proximal_1d_affine_closed_form():
    # scalar squared-error head with weight w: loss 0.5*(w*x - y)^2.
    # near the start the gradient is g = w*(w*x0 - y); for the 1-D sup-norm
    # (= absolute value) the exact maximizer of loss - gamma*(x-x0)^2 solves
    # the stationarity condition; with w tiny the loss is nearly affine with
    # slope g and the maximizer approaches x0 + g/(2*gamma).
    w = 0.01
    y = -200.0  # keeps the residual essentially constant over the step
    net = SmoothNet([(np.array([[w]]), np.zeros(1))], [], HEAD_SQUARED)
    x0 = np.array([0.5])
    gamma = 3.0
    g = w * (w * x0[0] - y)
    expected = x0[0] + g / (2 * gamma)
    cfg = InnerSolverConfig(steps=300, eta0=0.5)
    res = proximal_ascent(net, Sample(x0, y), gamma, cfg)
    assert res.z_hat.x[0] == pytest.approx(expected, abs=1e-5)


def test_proximal_best_at_least_start():
    rng = np.random.default_rng(1)
    for seed in range(10):
        net = small_net(seed)
        z0 = Sample(rng.standard_normal(2), int(rng.integers(2)))
        res = proximal_ascent(net, z0, 1.5)
        assert res.phi_value >= net.loss(z0) - 1e-12
        assert max(res.trace) == pytest.approx(res.phi_value)


def test_solve_surrogate_dispatch():
    net = small_net(2)
    z0 = Sample(np.zeros(2), 0)
    assert solve_surrogate(net, z0, 1.0, parse_cost("sq-l2")).z_hat is not None
    assert solve_surrogate(net, z0, 1.0, parse_cost("covshift:sq-linf")).z_hat is not None


# -- batches -----------------------------------------------------------------------


def test_batch_empty_and_singleton():
    net = small_net(3)
    assert batch_surrogate(net, [], 1.0, SQ_L2) == []
    z = Sample(np.array([0.1, 0.2]), 0)
    single = batch_surrogate(net, [z], 1.0, SQ_L2)[0]
    direct = surrogate_maximize(net, z, 1.0, SQ_L2)
    assert single.phi_value == direct.phi_value
    assert np.array_equal(single.z_hat.x, direct.z_hat.x)


def test_batch_deterministic_and_parallel_consistent():
    net = small_net(5)
    rng = np.random.default_rng(9)
    data = [Sample(rng.standard_normal(2), int(rng.integers(2))) for _ in range(12)]
    a = batch_surrogate(net, data, 2.0, SQ_L2)
    b = batch_surrogate(net, data, 2.0, SQ_L2)
    c = batch_surrogate(net, data, 2.0, SQ_L2, workers=4)
    assert [r.phi_value for r in a] == [r.phi_value for r in b] == [r.phi_value for r in c]


# -- envelope gradient and transport-map stability ----------------------------------


def tight_cfg():
    return InnerSolverConfig(steps=200, eta0=0.5)


def test_danskin_envelope_gradient():
    # gradient of the surrogate in theta equals the plain loss gradient at
    # the inner maximizer, checked against central differences
    rng = np.random.default_rng(42)
    for seed in range(5):
        net = small_net(seed, dims=(2, 3, 2))
        z0 = Sample(rng.standard_normal(2) * 0.5, int(rng.integers(2)))
        est = estimate_Lzz(net, [z0], probes=1)
        gamma = max(2.0 * est.L_zz, 0.5)

        res = surrogate_maximize(net, z0, gamma, SQ_L2, tight_cfg())
        g_env = net.grad_theta(res.z_hat)

        theta0 = net.get_flat()
        fd = np.zeros_like(theta0)
        h = 1e-5
        probe = net.copy()
        for i in range(len(theta0)):
            tp = theta0.copy()
            tp[i] += h
            probe.set_flat(tp)
            fp = surrogate_maximize(probe, z0, gamma, SQ_L2, tight_cfg()).phi_value
            tm = theta0.copy()
            tm[i] -= h
            probe.set_flat(tm)
            fm = surrogate_maximize(probe, z0, gamma, SQ_L2, tight_cfg()).phi_value
            fd[i] = (fp - fm) / (2 * h)
        rel = np.linalg.norm(g_env - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-3


def test_transport_map_stability_in_theta():
    rng = np.random.default_rng(7)
    net = small_net(11, dims=(2, 3, 2))
    z0 = Sample(np.array([0.4, -0.2]), 0)
    est = estimate_Lzz(net, [z0], probes=1)
    gamma = max(2.0 * est.L_zz, 1.0)
    theta0 = net.get_flat()
    direction = rng.standard_normal(len(theta0))
    direction /= np.linalg.norm(direction)

    base = surrogate_maximize(net, z0, gamma, SQ_L2, tight_cfg()).z_hat.x
    disps = []
    for scale in (1e-3, 1e-4):
        probe = net.copy()
        probe.set_flat(theta0 + scale * direction)
        moved = surrogate_maximize(probe, z0, gamma, SQ_L2, tight_cfg()).z_hat.x
        disps.append(np.linalg.norm(moved - base))
    d3, d4 = disps
    assert d4 <= d3 + 1e-12  # displacement shrinks with the perturbation
    # near-linear shrinkage: the fitted slope bounds the smaller scale
    fitted = d3 / 1e-3
    assert d4 <= 2.0 * fitted * 1e-4 + 1e-12
