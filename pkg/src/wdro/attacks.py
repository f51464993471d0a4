"""Test-time perturbation generators: FGM, IFGM, PGM, and the Lagrangian
(penalty) attack driven by the inner-maximization solvers.

All attacks perturb features only, never labels, and are deterministic
given (model, sample, spec).  Norm budgets support p in {2, inf}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .innermax import InnerSolverConfig, SurrogateResult, solve_surrogate
from .nets import Sample, SmoothNet

P_NORMS = (2.0, math.inf)


def _steepest(g, p):
    """argmax_{||eta||_p <= 1} <g, eta>; zero gradient maps to no-op."""
    if p == 2.0:
        n = float(np.linalg.norm(g))
        return g / n if n > 0 else np.zeros_like(g)
    return np.sign(g)


def _project(x, center, p, eps):
    d = x - center
    if p == 2.0:
        n = float(np.linalg.norm(d))
        if n > eps and n > 0:
            d = d * (eps / n)
        return center + d
    return center + np.clip(d, -eps, eps)


def _check_p(p):
    p = float(p)
    if p not in P_NORMS:
        raise ValueError(f"only p in {{2, inf}} supported, got {p}")
    return p


def fgm(model: SmoothNet, z: Sample, p, eps: float, clip_box=None) -> Sample:
    """Single steepest-ascent step of size eps in the p-norm."""
    p = _check_p(p)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    g = model.grad_input(z)
    x = z.x + eps * _steepest(g, p)
    if clip_box is not None:
        x = np.clip(x, clip_box[0], clip_box[1])
    return z.with_x(x)


def ifgm(model: SmoothNet, z: Sample, p, eps: float, T_adv: int = 15, clip_box=None) -> Sample:
    """T_adv FGM steps of size eps/T_adv, re-projected onto the eps-ball
    around the natural example after every step."""
    p = _check_p(p)
    if T_adv < 1:
        raise ValueError("T_adv must be >= 1")
    x0 = z.x
    cur = z
    step = eps / T_adv
    for _ in range(T_adv):
        g = model.grad_input(cur)
        x = cur.x + step * _steepest(g, p)
        x = _project(x, x0, p, eps)
        if clip_box is not None:
            x = np.clip(x, clip_box[0], clip_box[1])
        cur = z.with_x(x)
    return cur


def pgm(model: SmoothNet, z: Sample, p, eps: float, T_adv: int = 15, stepsizes=None, clip_box=None) -> Sample:
    """Projected gradient ascent: full-budget steepest direction scaled by
    alpha_t, projected back onto the eps-ball around the natural example.
    Default stepsizes are the constant 2*eps/T_adv."""
    p = _check_p(p)
    if T_adv < 1:
        raise ValueError("T_adv must be >= 1")
    if stepsizes is None:
        stepsizes = [2.0 * eps / T_adv] * T_adv
    x0 = z.x
    cur = z
    for t in range(T_adv):
        g = model.grad_input(cur)
        delta = eps * _steepest(g, p)
        x = _project(cur.x + stepsizes[t] * delta, x0, p, eps)
        if clip_box is not None:
            x = np.clip(x, clip_box[0], clip_box[1])
        cur = z.with_x(x)
    return cur


def wrm_attack(model, z, gamma_adv, cost, cfg: InnerSolverConfig | None = None) -> SurrogateResult:
    """Lagrangian attack: inner maximization at penalty gamma_adv."""
    return solve_surrogate(model, z, gamma_adv, cost, cfg)


def budget_from_wrm(results, p) -> float:
    """Fair-comparison budget from a batch of Lagrangian attacks:
    p=2 gives sqrt(mean transport cost); p=inf gives the mean sup-norm
    displacement of the transported points."""
    p = _check_p(p)
    if not results:
        raise ValueError("no surrogate results to convert")
    if p == 2.0:
        return float(np.sqrt(np.mean([r.transport_cost for r in results])))
    return float(np.mean([r.displacement_inf for r in results]))


@dataclass
class AttackSpec:
    """Parsed attack description.  eps applies to fgm/ifgm/pgm, gamma to
    wrm; exactly one of them is set."""

    method: str
    p: float = 2.0
    eps: float | None = None
    gamma: float | None = None
    steps: int = 15

    def __post_init__(self):
        if self.method not in ("fgm", "ifgm", "pgm", "wrm"):
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.method == "wrm":
            if self.gamma is None or self.eps is not None:
                raise ValueError("wrm takes gamma, not eps")
            if self.gamma <= 0:
                raise ValueError("gamma must be > 0")
        else:
            if self.eps is None or self.gamma is not None:
                raise ValueError(f"{self.method} takes eps, not gamma")
            if self.eps < 0:
                raise ValueError("eps must be >= 0")
            _check_p(self.p)

    def with_budget(self, budget: float) -> "AttackSpec":
        kw = dict(method=self.method, p=self.p, steps=self.steps)
        if self.method == "wrm":
            kw["gamma"] = budget
        else:
            kw["eps"] = budget
        return AttackSpec(**kw)

    def perturb(self, model, z, cost=None, clip_box=None) -> Sample:
        if self.method == "fgm":
            return fgm(model, z, self.p, self.eps, clip_box=clip_box)
        if self.method == "ifgm":
            return ifgm(model, z, self.p, self.eps, self.steps, clip_box=clip_box)
        if self.method == "pgm":
            return pgm(model, z, self.p, self.eps, self.steps, clip_box=clip_box)
        cfg = InnerSolverConfig(steps=self.steps)
        return wrm_attack(model, z, self.gamma, cost, cfg).z_hat


def parse_attack_spec(text: str) -> AttackSpec:
    """Parse strings like "pgm:p=inf,eps=0.1,T=15" or "wrm:gamma=2"."""
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    kw = {}
    if rest:
        for part in rest.split(","):
            key, _, val = part.partition("=")
            key = key.strip().lower()
            val = val.strip()
            if not key or not val:
                raise ValueError(f"malformed attack spec field {part!r}")
            if key == "p":
                kw["p"] = math.inf if val in ("inf", "oo") else float(val)
            elif key == "eps":
                kw["eps"] = float(val)
            elif key == "gamma":
                kw["gamma"] = float(val)
            elif key in ("t", "steps"):
                kw["steps"] = int(val)
            else:
                raise ValueError(f"unknown attack spec field {key!r}")
    return AttackSpec(method=name, **kw)
