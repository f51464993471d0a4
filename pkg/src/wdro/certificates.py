"""Data-dependent robustness certificates and finite-support duality oracles.

The certificate is the affine-in-rho bound gamma*rho + mean surrogate
loss: by duality it upper-bounds the worst-case expected loss over every
Wasserstein ball, and it is tight at the achieved radius rho_hat (the mean
transport cost of the inner maximizers).  The finite-support oracles
verify that duality numerically: an exact LP computes the constrained
worst case, a penalty sweep computes the Lagrangian side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .innermax import batch_surrogate, solve_surrogate
from .lp import simplex_max

MAX_BASE_POINTS = 4
MAX_SUPPORT_POINTS = 6


@dataclass
class Certificate:
    gamma: float
    mean_surrogate: float
    rho_hat: float
    curve: list = field(default_factory=list)  # (rho, bound) pairs
    n_degenerate: int = 0

    def bound_at(self, rho: float) -> float:
        return self.gamma * rho + self.mean_surrogate


@dataclass
class FiniteInstance:
    """Discrete verification substrate: a base distribution q over the
    first len(q) support points, a loss value per support point, and the
    transport cost from each base point to each support point."""

    support: np.ndarray   # (n_support, m)
    q: np.ndarray         # (n_base,)
    loss: np.ndarray      # (n_support,)
    cost: np.ndarray      # (n_base, n_support)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        self.loss = np.asarray(self.loss, dtype=np.float64)
        self.cost = np.asarray(self.cost, dtype=np.float64)
        nb, ns = self.cost.shape
        if self.q.shape != (nb,) or self.loss.shape != (ns,):
            raise ValueError("q/loss shapes do not match the cost matrix")
        if nb > MAX_BASE_POINTS or ns > MAX_SUPPORT_POINTS:
            raise ValueError(
                f"oracle instances are capped at {MAX_BASE_POINTS} base and "
                f"{MAX_SUPPORT_POINTS} support points"
            )
        if abs(self.q.sum() - 1.0) > 1e-9 or np.any(self.q < 0):
            raise ValueError("q must be a probability vector")
        if np.any(self.cost < 0):
            raise ValueError("costs must be nonnegative")
        if np.any(np.abs(np.diagonal(self.cost)) > 1e-12):
            raise ValueError("cost diagonal must be zero")

    @classmethod
    def from_points(cls, support, q, loss):
        """Squared-Euclidean costs over explicit support points."""
        support = np.asarray(support, dtype=np.float64)
        nb = len(q)
        diff = support[:nb, None, :] - support[None, :, :]
        cost = np.sum(diff * diff, axis=2)
        cost[np.arange(nb), np.arange(nb)] = 0.0
        return cls(support=support, q=q, loss=loss, cost=cost)


def penalty_oracle(inst: FiniteInstance, gamma: float) -> float:
    """Exact Lagrangian value on finite support:
    sum_i q_i * max_j (loss_j - gamma * cost_ij)."""
    return float(inst.q @ np.max(inst.loss[None, :] - gamma * inst.cost, axis=1))


def duality_oracle(inst: FiniteInstance, rho: float) -> float:
    """Exact worst-case expected loss within transport budget rho.

    LP over couplings M >= 0: maximize sum_ij M_ij loss_j subject to the
    row marginals q and sum_ij M_ij cost_ij <= rho.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    nb, ns = inst.cost.shape
    nvar = nb * ns + 1  # couplings plus one slack on the budget row
    A = np.zeros((nb + 1, nvar))
    b = np.zeros(nb + 1)
    for i in range(nb):
        A[i, i * ns : (i + 1) * ns] = 1.0
        b[i] = inst.q[i]
    A[nb, : nb * ns] = inst.cost.ravel()
    A[nb, -1] = 1.0
    b[nb] = rho
    c = np.concatenate([np.tile(inst.loss, nb), [0.0]])
    value, _ = simplex_max(A, b, c)
    return value


def dual_gamma_grid(inst: FiniteInstance, points: int = 1000) -> np.ndarray:
    """Log-spaced gamma grid spanning [1e-4, 1e4] times the instance scale
    (loss spread over max cost), augmented with gamma = 0 and with every
    kink candidate (loss_j - loss_k) / (c_ik - c_ij) of the piecewise-linear
    penalty so the sweep minimum is exact, not just bracketed."""
    spread = float(np.max(inst.loss) - np.min(inst.loss))
    max_cost = float(np.max(inst.cost))
    scale = spread / max_cost if spread > 0 and max_cost > 0 else 1.0
    grid = np.logspace(np.log10(1e-4 * scale), np.log10(1e4 * scale), points)

    kinks = []
    nb, ns = inst.cost.shape
    for i in range(nb):
        for j in range(ns):
            for k in range(j + 1, ns):
                dc = inst.cost[i, j] - inst.cost[i, k]
                if dc != 0.0:
                    g = (inst.loss[j] - inst.loss[k]) / dc
                    if g > 0 and np.isfinite(g):
                        kinks.append(g)
    return np.unique(np.concatenate([grid, np.asarray(kinks), [0.0]]))


def dual_sweep(inst: FiniteInstance, rho: float, points: int = 1000) -> float:
    """min over the gamma grid of gamma*rho + penalty_oracle(gamma)."""
    grid = dual_gamma_grid(inst, points)
    vals = [g * rho + penalty_oracle(inst, g) for g in grid]
    return float(np.min(vals))


def certificate(model, data, gamma, cost, rho_grid=(), cfg=None, workers=1) -> Certificate:
    """Certificate from the training data: runs the inner maximization on
    every point, then evaluates the affine bound on rho_grid plus the
    achieved radius rho_hat."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    results = batch_surrogate(model, data, gamma, cost, cfg, workers=workers)
    mean_surrogate = float(np.mean([r.phi_value for r in results]))
    rho_hat = float(np.mean([r.transport_cost for r in results]))
    rhos = sorted(set(float(r) for r in rho_grid) | {rho_hat})
    cert = Certificate(
        gamma=gamma,
        mean_surrogate=mean_surrogate,
        rho_hat=rho_hat,
        n_degenerate=sum(r.degenerate for r in results),
    )
    cert.curve = [(r, cert.bound_at(r)) for r in rhos]
    return cert


def test_worst_case(model, test_data, gamma_adv, cost, cfg=None):
    """Lagrangian interrogation of held-out data: returns (rho_test,
    worst_value) where rho_test is the mean distance to the adversarial
    examples and worst_value = mean surrogate + gamma_adv * rho_test."""
    results = [solve_surrogate(model, z, gamma_adv, cost, cfg) for z in test_data]
    rho_test = float(np.mean([r.transport_cost for r in results]))
    worst = float(np.mean([r.phi_value for r in results])) + gamma_adv * rho_test
    return rho_test, worst
