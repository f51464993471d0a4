"""Stochastic-gradient training loops.

ERM is plain minibatch SGD.  The attack-augmented variants (fgm/ifgm/pgm)
perturb each minibatch before the gradient step.  WRM replaces every
sampled point with its inner maximizer and descends on the gradient taken
there, which by the envelope property is a gradient of the robust
surrogate objective.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackSpec
from .costs import TransportCost
from .innermax import InnerSolverConfig, solve_surrogate
from .nets import Sample, SmoothNet

METHODS = ("erm", "fgm", "ifgm", "pgm", "wrm")


@dataclass
class TrainConfig:
    method: str = "erm"
    gamma: float | None = None       # wrm only
    eps: float | None = None         # fgm/ifgm/pgm only
    steps: int = 100                 # outer SGD steps
    lr: float = 0.01
    lr_schedule: str = "constant"    # "constant" or "inv_sqrt"
    batch_size: int = 32
    seed: int = 0
    attack_p: float = 2.0
    attack_steps: int = 15
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    # optional curvature/noise estimates: when all three are present and the
    # schedule is "constant", lr is replaced by sqrt(2*delta_F/(L_phi*sigma^2*T))
    delta_F: float | None = None
    sigma: float | None = None
    L_phi: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.lr_schedule not in ("constant", "inv_sqrt"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.method == "wrm":
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("wrm needs gamma > 0")
            if self.eps is not None:
                raise ValueError("wrm takes gamma, not eps")
        elif self.method == "erm":
            if self.gamma is not None or self.eps is not None:
                raise ValueError("erm takes no budget")
        else:
            if self.eps is None or self.eps < 0:
                raise ValueError(f"{self.method} needs eps >= 0")
            if self.gamma is not None:
                raise ValueError(f"{self.method} takes eps, not gamma")

    def stepsize(self, t):
        base = self.lr
        if (
            self.lr_schedule == "constant"
            and None not in (self.delta_F, self.sigma, self.L_phi)
            and self.steps > 0
        ):
            base = float(np.sqrt(2.0 * self.delta_F / (self.L_phi * self.sigma**2 * self.steps)))
        if self.lr_schedule == "inv_sqrt":
            return base / np.sqrt(t + 1.0)
        return base


@dataclass
class TrainReport:
    """Per-outer-step traces plus the divergence flag.  surrogate equals
    raw for non-WRM methods (their perturbations carry no transport
    penalty)."""

    surrogate: list = field(default_factory=list)
    raw: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    grad_sq_norm: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: int | None = None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "surrogate", "raw", "rho", "gradnorm"])
            for i in range(len(self.surrogate)):
                w.writerow([i, self.surrogate[i], self.raw[i], self.rho[i], self.grad_sq_norm[i]])


class DivergenceError(RuntimeError):
    def __init__(self, step, model, report):
        super().__init__(f"training diverged at step {step}")
        self.step = step
        self.model = model
        self.report = report


def _batch_points(model, batch, cfg: TrainConfig, cost):
    """Per-sample training points plus (surrogate, raw, rho) stats."""
    if cfg.method == "erm":
        pts = batch
        raws = [model.loss(z) for z in pts]
        return pts, float(np.mean(raws)), float(np.mean(raws)), 0.0
    if cfg.method == "wrm":
        results = [solve_surrogate(model, z, cfg.gamma, cost, cfg.inner) for z in batch]
        pts = [r.z_hat for r in results]
        return (
            pts,
            float(np.mean([r.phi_value for r in results])),
            float(np.mean([r.raw_loss for r in results])),
            float(np.mean([r.transport_cost for r in results])),
        )
    spec = AttackSpec(method=cfg.method, p=cfg.attack_p, eps=cfg.eps, steps=cfg.attack_steps)
    pts = [spec.perturb(model, z) for z in batch]
    raws = [model.loss(z) for z in pts]
    return pts, float(np.mean(raws)), float(np.mean(raws)), 0.0


def train(model: SmoothNet, data, cfg: TrainConfig, cost: TransportCost | None = None):
    """Run the configured loop and return (trained copy, report).

    Sampling is with replacement, one fresh minibatch per outer step, all
    randomness from a PCG64 stream keyed by cfg.seed.  A non-finite loss or
    parameter aborts with the last finite checkpoint inside the raised
    DivergenceError.
    """
    if not data:
        raise ValueError("empty dataset")
    if cfg.method == "wrm" and cost is None:
        raise ValueError("wrm needs a transport cost")
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    report = TrainReport()

    theta = model.get_flat()
    for t in range(cfg.steps):
        idx = rng.integers(0, len(data), size=cfg.batch_size)
        batch = [data[i] for i in idx]
        try:
            pts, surro, raw, rho = _batch_points(model, batch, cfg, cost)
            grads = [model.grad_theta(z) for z in pts]
        except FloatingPointError:
            report.diverged = True
            report.diverged_at = t
            raise DivergenceError(t, model, report)
        g = np.mean(grads, axis=0)
        theta_new = theta - cfg.stepsize(t) * g
        if not (np.all(np.isfinite(theta_new)) and np.isfinite(surro)):
            report.diverged = True
            report.diverged_at = t
            raise DivergenceError(t, model, report)
        report.surrogate.append(surro)
        report.raw.append(raw)
        report.rho.append(rho)
        report.grad_sq_norm.append(float(g @ g))
        theta = theta_new
        model.set_flat(theta)

    return model, report


def grad_variance_probe(model, data, gamma, cost, probes=None, cfg=None) -> float:
    """Spread of per-sample surrogate gradients around their mean.

    Scans the whole dataset when probes is None or >= len(data), which
    makes the estimate a function of the empirical distribution alone;
    smaller probe counts take evenly spaced indices.
    """
    if not data:
        raise ValueError("empty dataset")
    n = len(data)
    if probes is None or probes >= n:
        idx = range(n)
    else:
        if probes < 1:
            raise ValueError("probes must be >= 1")
        idx = np.linspace(0, n - 1, probes).astype(int)
    grads = []
    for i in idx:
        r = solve_surrogate(model, data[i], gamma, cost, cfg)
        grads.append(model.grad_theta(r.z_hat))
    grads = np.asarray(grads)
    mean = grads.mean(axis=0)
    return float(np.mean(np.sum((grads - mean) ** 2, axis=1)))
