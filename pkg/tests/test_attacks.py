import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdro.attacks import (
    AttackSpec,
    budget_from_wrm,
    fgm,
    ifgm,
    parse_attack_spec,
    pgm,
    wrm_attack,
)
from wdro.costs import TransportCost, parse_cost
from wdro.innermax import InnerSolverConfig
from wdro.nets import HEAD_SOFTMAX, HEAD_SQUARED, Sample, SmoothNet

SQ_L2 = TransportCost("sq-l2")


def small_net(seed=0):
    return SmoothNet.random([2, 4, 2], "elu", HEAD_SOFTMAX, seed=seed)


def constant_net():
    return SmoothNet(
        [(np.zeros((3, 2)), np.zeros(3)), (np.eye(2, 3), np.zeros(2))],
        ["elu"],
        HEAD_SOFTMAX,
    )


def gradient_net(g):
    """Squared-error net whose input gradient at any x is ~constant g
    (heavily negative target keeps the residual sign fixed)."""
    g = np.asarray(g, dtype=np.float64)
    w = g[None, :] / np.linalg.norm(g) ** 0.0  # single row = g direction
    return SmoothNet([(g[None, :] , np.zeros(1))], [], HEAD_SQUARED)


class TestFGM:
    def test_l2_unit_scaling(self):
        # gradient (3,4): residual*w with w=(3,4) and unit residual
        net = SmoothNet([(np.array([[3.0, 4.0]]), np.zeros(1))], [], HEAD_SQUARED)
        x = np.zeros(2)
        z = Sample(x, -1.0)  # output 0, target -1 -> residual 1, grad = (3,4)
        out = fgm(net, z, 2, 1.0)
        assert out.x == pytest.approx([0.6, 0.8], abs=1e-12)

    def test_linf_sign_scaling(self):
        net = SmoothNet([(np.array([[-2.0, 5.0]]), np.zeros(1))], [], HEAD_SQUARED)
        z = Sample(np.zeros(2), -1.0)  # grad = (-2, 5)
        out = fgm(net, z, math.inf, 0.1)
        assert out.x == pytest.approx([-0.1, 0.1], abs=1e-12)

    def test_zero_gradient_noop(self):
        z = Sample(np.array([0.4, -0.2]), 0)
        out = fgm(constant_net(), z, 2, 0.5)
        assert np.array_equal(out.x, z.x)

    def test_label_preserved(self):
        out = fgm(small_net(), Sample(np.zeros(2), 1), 2, 0.3)
        assert out.y == 1


class TestIFGM:
    def test_single_step_equals_fgm(self):
        net = small_net(1)
        z = Sample(np.array([0.3, 0.1]), 0)
        a = ifgm(net, z, 2, 0.25, T_adv=1)
        b = fgm(net, z, 2, 0.25)
        assert np.array_equal(a.x, b.x)

    def test_linear_model_matches_fgm_l2(self):
        # constant gradient: every partial step moves along the same unit
        # direction, so T steps of eps/T reach exactly the FGM point
        net = SmoothNet([(np.array([[1.0, -2.0]]), np.zeros(1))], [], HEAD_SQUARED)
        z = Sample(np.zeros(2), -5.0)
        a = ifgm(net, z, 2, 0.5, T_adv=7)
        b = fgm(net, z, 2, 0.5)
        assert a.x == pytest.approx(b.x, abs=1e-12)

    def test_ball_membership(self):
        net = small_net(3)
        rng = np.random.default_rng(0)
        for p in (2, math.inf):
            for _ in range(20):
                z = Sample(rng.standard_normal(2), int(rng.integers(2)))
                eps = float(rng.uniform(0, 1))
                out = ifgm(net, z, p, eps, T_adv=5)
                d = out.x - z.x
                nrm = np.linalg.norm(d) if p == 2 else np.max(np.abs(d))
                assert nrm <= eps + 1e-9


class TestPGM:
    def test_zero_budget_noop(self):
        net = small_net(2)
        z = Sample(np.array([1.0, -1.0]), 0)
        out = pgm(net, z, 2, 0.0, T_adv=5)
        assert np.array_equal(out.x, z.x)

    def test_constant_model_noop(self):
        z = Sample(np.array([1.0, -1.0]), 0)
        out = pgm(constant_net(), z, math.inf, 0.3, T_adv=5)
        assert np.array_equal(out.x, z.x)

    def test_quadratic_bowl_reaches_boundary_along_center(self):
        # loss 0.5*||x - c||^2 grows away from x toward... ascent pushes away
        # from the minimum c, i.e. radially outward from c through x0; the
        # ball boundary point is x0 + eps * (x0 - c)/||x0 - c||
        c = np.array([1.0, 1.0])
        net = SmoothNet([(np.eye(2), np.zeros(2))], [], HEAD_SQUARED)
        x0 = np.array([2.0, 1.0])
        eps = 0.5
        out = pgm(net, Sample(x0, c), 2, eps, T_adv=15)
        expected = x0 + eps * np.array([1.0, 0.0])
        assert out.x == pytest.approx(expected, abs=1e-9)

    def test_ball_membership_100_cases(self):
        net = small_net(5)
        rng = np.random.default_rng(1)
        for p in (2, math.inf):
            for _ in range(50):
                z = Sample(rng.standard_normal(2), int(rng.integers(2)))
                eps = float(rng.uniform(0, 0.8))
                out = pgm(net, z, p, eps, T_adv=8)
                d = out.x - z.x
                nrm = np.linalg.norm(d) if p == 2 else np.max(np.abs(d))
                assert nrm <= eps + 1e-9

    def test_deterministic(self):
        net = small_net(6)
        z = Sample(np.array([0.2, 0.6]), 1)
        a = pgm(net, z, 2, 0.3, T_adv=15)
        b = pgm(net, z, 2, 0.3, T_adv=15)
        assert np.array_equal(a.x, b.x)


class TestWRMAttack:
    def test_huge_gamma_noop(self):
        net = small_net(8)
        z = Sample(np.array([0.1, 0.9]), 0)
        res = wrm_attack(net, z, 1e9, SQ_L2)
        assert np.array_equal(res.z_hat.x, z.x)

    def test_constant_model_noop(self):
        z = Sample(np.array([0.1, 0.9]), 0)
        res = wrm_attack(constant_net(), z, 2.0, SQ_L2)
        assert np.array_equal(res.z_hat.x, z.x)

    def test_transport_cost_monotone_in_gamma(self):
        net = small_net(9)
        z = Sample(np.array([0.5, -0.3]), 1)
        cfg = InnerSolverConfig(steps=60)
        costs = [wrm_attack(net, z, g, SQ_L2, cfg).transport_cost for g in (8.0, 4.0, 2.0, 1.0, 0.5)]
        assert all(a <= b + 1e-10 for a, b in zip(costs, costs[1:]))


class TestBudgetConversion:
    def test_noop_results_give_zero(self):
        net = constant_net()
        zs = [Sample(np.array([0.1, 0.2]), 0), Sample(np.array([-0.3, 0.5]), 1)]
        results = [wrm_attack(net, z, 2.0, SQ_L2) for z in zs]
        assert budget_from_wrm(results, 2) == 0.0
        assert budget_from_wrm(results, math.inf) == 0.0

    def test_sqrt_of_mean_cost(self):
        net = small_net(10)
        z = Sample(np.array([0.5, 0.1]), 0)
        r = wrm_attack(net, z, 1.0, SQ_L2, InnerSolverConfig(steps=40))
        assert budget_from_wrm([r], 2) == pytest.approx(np.sqrt(r.transport_cost))

    def test_mixed_batch_arithmetic(self):
        net = small_net(11)
        rng = np.random.default_rng(2)
        zs = [Sample(rng.standard_normal(2), int(rng.integers(2))) for _ in range(6)]
        rs = [wrm_attack(net, z, 1.0, SQ_L2) for z in zs]
        assert budget_from_wrm(rs, 2) == pytest.approx(
            np.sqrt(np.mean([r.transport_cost for r in rs]))
        )
        assert budget_from_wrm(rs, math.inf) == pytest.approx(
            np.mean([np.max(np.abs(r.z_hat.x - z.x)) for r, z in zip(rs, zs)])
        )

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            budget_from_wrm([], 2)


class TestSpecParsing:
    def test_examples(self):
        s = parse_attack_spec("pgm:p=inf,eps=0.1,T=15")
        assert s.method == "pgm" and s.p == math.inf and s.eps == 0.1 and s.steps == 15
        s = parse_attack_spec("wrm:gamma=2")
        assert s.method == "wrm" and s.gamma == 2.0

    def test_rejections(self):
        for bad in ("nope:eps=1", "fgm:gamma=1", "wrm:eps=1", "fgm:p=3,eps=1", "fgm:eps="):
            with pytest.raises(ValueError):
                parse_attack_spec(bad)

    def test_clip_box(self):
        net = SmoothNet([(np.array([[5.0, 5.0]]), np.zeros(1))], [], HEAD_SQUARED)
        z = Sample(np.array([0.9, 0.9]), -3.0)
        out = fgm(net, z, math.inf, 0.5, clip_box=(0.0, 1.0))
        assert np.max(out.x) <= 1.0
