"""Wasserstein distributionally robust training, certificates, and robust
tabular Q-learning at desk scale."""

from .attacks import AttackSpec, budget_from_wrm, fgm, ifgm, parse_attack_spec, pgm, wrm_attack
from .certificates import (
    Certificate,
    FiniteInstance,
    certificate,
    dual_sweep,
    duality_oracle,
    penalty_oracle,
    test_worst_case,
)
from .costs import CovariateShift, TransportCost, parse_cost
from .data import CsvSchema, SyntheticSpec, gen_synthetic, load_csv, norm_stats, write_csv
from .innermax import (
    InnerSolverConfig,
    ProxResult,
    SurrogateResult,
    batch_surrogate,
    prox_sup_norm,
    proximal_ascent,
    solve_surrogate,
    surrogate_maximize,
)
from .nets import Sample, SmoothNet, SmoothnessEstimate, estimate_Lzz
from .training import TrainConfig, TrainReport, grad_variance_probe, train

__version__ = "0.1.0"

__all__ = [
    "AttackSpec",
    "Certificate",
    "CovariateShift",
    "CsvSchema",
    "FiniteInstance",
    "InnerSolverConfig",
    "ProxResult",
    "Sample",
    "SmoothNet",
    "SmoothnessEstimate",
    "SurrogateResult",
    "SyntheticSpec",
    "TrainConfig",
    "TrainReport",
    "TransportCost",
    "batch_surrogate",
    "budget_from_wrm",
    "certificate",
    "dual_sweep",
    "duality_oracle",
    "estimate_Lzz",
    "fgm",
    "gen_synthetic",
    "grad_variance_probe",
    "ifgm",
    "load_csv",
    "norm_stats",
    "parse_attack_spec",
    "parse_cost",
    "penalty_oracle",
    "pgm",
    "prox_sup_norm",
    "proximal_ascent",
    "solve_surrogate",
    "surrogate_maximize",
    "test_worst_case",
    "train",
    "wrm_attack",
    "write_csv",
]
