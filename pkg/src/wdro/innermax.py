"""Inner maximization: the robust surrogate and its transport map.

For a penalty gamma and transport cost c, solves

    phi_gamma(theta; z0) = sup_x  loss(theta; (x, y0)) - gamma * c(x, x0)

by gradient ascent with monotone acceptance when c is smooth (squared
Euclidean), and by a proximal splitting scheme when c is the squared
sup-norm.  Labels are never perturbed; the maximizer doubles as the
adversarially transported data point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import SQ_LINF, TransportCost
from .nets import NonFiniteError, Sample, SmoothNet


@dataclass
class InnerSolverConfig:
    """Ascent schedule: `steps` iterations with stepsize eta0/sqrt(t),
    starting from the natural example.  tol > 0 stops early once the ascent
    gradient norm drops below it; tol = 0 runs the full budget."""

    steps: int = 15
    eta0: float = 1.0
    tol: float = 0.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.eta0 <= 0:
            raise ValueError("eta0 must be > 0")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass
class SurrogateResult:
    """Outcome of one inner maximization.

    phi_value = raw_loss - gamma * transport_cost, evaluated at z_hat.
    trace holds the objective value at the start and after every step.
    degenerate marks a solve where every proposed step was rejected.
    """

    z_hat: Sample
    phi_value: float
    transport_cost: float
    raw_loss: float
    trace: list = field(default_factory=list)
    z0: Sample | None = None
    degenerate: bool = False

    @property
    def displacement_inf(self) -> float:
        d = self.z_hat.x - self.z0.x
        return float(np.max(np.abs(d))) if d.size else 0.0


@dataclass
class ProxResult:
    """Solution of the squared-sup-norm proximal step: threshold beta,
    active coordinate count j_star, and the shrunk point z_next."""

    beta: float
    j_star: int
    z_next: np.ndarray


def prox_sup_norm(w, z0_x, alpha_lambda) -> ProxResult:
    """Prox of (alpha*lambda/2) * ||. - z0||_inf^2 at w.

    Sorts v = |w - z0| in decreasing order, finds the largest j whose
    partial sums keep sum_{i<j} v_i - (alpha*lambda + j - 1) v_j negative,
    and solves sum_{v_i > beta} (v_i - beta) = alpha*lambda*beta on that
    active set.  The prox then clips each coordinate's displacement at
    beta.
    """
    w = np.asarray(w, dtype=np.float64)
    z0_x = np.asarray(z0_x, dtype=np.float64)
    if w.shape != z0_x.shape or w.ndim != 1:
        raise ValueError(f"shape mismatch: {w.shape} vs {z0_x.shape}")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(z0_x)) and np.isfinite(alpha_lambda)):
        raise NonFiniteError("prox inputs must be finite")
    if alpha_lambda < 0:
        raise ValueError("alpha_lambda must be >= 0")

    d = w - z0_x
    v = np.sort(np.abs(d))[::-1]
    if v.size == 0 or v[0] == 0.0:
        return ProxResult(beta=0.0, j_star=0, z_next=w.copy())
    if alpha_lambda == 0.0:
        # no penalty: prox is the identity, threshold sits at the max
        return ProxResult(beta=float(v[0]), j_star=0, z_next=w.copy())

    csum = 0.0
    j_star = 1
    for j in range(1, v.size + 1):
        # csum holds sum_{i=1}^{j-1} v_i
        if csum - (alpha_lambda + (j - 1)) * v[j - 1] < 0:
            j_star = j
        else:
            break
        csum += v[j - 1]
    beta = float(np.sum(v[:j_star]) / (j_star + alpha_lambda))
    shrink = np.maximum(np.abs(d) - beta, 0.0)
    return ProxResult(beta=beta, j_star=j_star, z_next=w - shrink * np.sign(d))


def surrogate_maximize(
    model: SmoothNet,
    z0: Sample,
    gamma: float,
    cost: TransportCost,
    cfg: InnerSolverConfig | None = None,
) -> SurrogateResult:
    """Gradient ascent on x -> loss(theta; (x, y0)) - gamma * c(x, x0).

    Monotone acceptance: a step that decreases the objective (or lands on a
    non-finite value) is rejected and the stepsize scale halves, so the
    trace never decreases and phi >= loss(z0) always holds.  Requires a
    smooth cost.
    """
    if cfg is None:
        cfg = InnerSolverConfig()
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if not cost.smooth:
        raise ValueError("cost has no smooth gradient; use proximal_ascent")

    x0 = z0.x
    x = x0.copy()
    loss0, g_loss = model.loss_and_grad_input(z0)
    obj = loss0  # c(x0, x0) = 0
    trace = [obj]
    scale = 1.0
    accepted = 0
    rejected = 0
    raw = loss0

    for t in range(1, cfg.steps + 1):
        g = g_loss - gamma * cost.feature_grad(x, x0)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.tol:
            break
        eta = scale * cfg.eta0 / np.sqrt(t)
        x_new = x + eta * g
        try:
            cand = z0.with_x(x_new)
            raw_new, g_new = model.loss_and_grad_input(cand)
            obj_new = raw_new - gamma * cost.feature_cost(x_new, x0)
            ok = np.isfinite(obj_new) and obj_new >= obj
        except NonFiniteError:
            ok = False
        if ok:
            x, obj, raw, g_loss = x_new, obj_new, raw_new, g_new
            accepted += 1
        else:
            scale *= 0.5
            rejected += 1
        trace.append(obj)

    c_val = cost.feature_cost(x, x0)
    return SurrogateResult(
        z_hat=z0.with_x(x),
        phi_value=raw - gamma * c_val,
        transport_cost=c_val,
        raw_loss=raw,
        trace=trace,
        z0=z0,
        degenerate=accepted == 0 and rejected > 0,
    )


def proximal_ascent(
    model: SmoothNet,
    z0: Sample,
    gamma: float,
    cfg: InnerSolverConfig | None = None,
) -> SurrogateResult:
    """Surrogate maximization under the squared sup-norm cost.

    Alternates a gradient step on the loss with the sup-norm prox
    (alpha = 2 * gamma bridges the cost convention c = ||.||_inf^2 to the
    prox's (alpha/2)-scaled penalty).  The stepsize follows the same
    eta0/sqrt(t) schedule as the smooth solver.  Returns the best iterate
    seen; the trace records raw objective values per step, which need not
    be monotone.
    """
    if cfg is None:
        cfg = InnerSolverConfig()
    if gamma <= 0:
        raise ValueError("gamma must be > 0")

    alpha = 2.0 * gamma
    x0 = z0.x
    x = x0.copy()

    def objective(xv):
        raw = model.loss(z0.with_x(xv))
        d = xv - x0
        c = float(np.max(np.abs(d)) ** 2) if d.size else 0.0
        return raw, c, raw - gamma * c

    raw0, c0, obj0 = objective(x)
    best_x, best_raw, best_c, best_obj = x.copy(), raw0, c0, obj0
    trace = [obj0]
    accepted = 0
    failed = 0

    for t in range(1, cfg.steps + 1):
        lam = cfg.eta0 / np.sqrt(t)
        try:
            _, g = model.loss_and_grad_input(z0.with_x(x))
            if float(np.linalg.norm(g)) <= cfg.tol:
                break
            x_half = x + lam * g
            x = prox_sup_norm(x_half, x0, alpha * lam).z_next
            raw, c, obj = objective(x)
        except NonFiniteError:
            failed += 1
            trace.append(trace[-1])
            continue
        if not np.isfinite(obj):
            failed += 1
            trace.append(trace[-1])
            continue
        accepted += 1
        trace.append(obj)
        if obj > best_obj:
            best_x, best_raw, best_c, best_obj = x.copy(), raw, c, obj

    return SurrogateResult(
        z_hat=z0.with_x(best_x),
        phi_value=best_obj,
        transport_cost=best_c,
        raw_loss=best_raw,
        trace=trace,
        z0=z0,
        degenerate=failed > 0 and accepted == 0,
    )


def solve_surrogate(model, z0, gamma, cost, cfg=None) -> SurrogateResult:
    """Dispatch to the right solver for the cost kind."""
    if cost.smooth:
        return surrogate_maximize(model, z0, gamma, cost, cfg)
    if cost.describe().endswith(SQ_LINF):
        return proximal_ascent(model, z0, gamma, cfg)
    raise ValueError(f"no solver for cost {cost.describe()!r}")


def batch_surrogate(model, data, gamma, cost, cfg=None, workers=1):
    """Elementwise inner maximization over a dataset, order preserved."""
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda z: solve_surrogate(model, z, gamma, cost, cfg), data))
    return [solve_surrogate(model, z, gamma, cost, cfg) for z in data]
