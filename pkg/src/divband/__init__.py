"""Optimal dividend bands for the compound Poisson risk model with credit
and debit interest, absolute ruin, and discounted dividend payout.

The package solves for the optimal value function and band strategy,
certifies the solution against the problem's structural conditions
(complementarity, envelope bounds, fixed point of the one-claim-step
operator), and cross-validates with a value-iteration oracle and an exact
event-driven Monte Carlo simulator.
"""

from .model import (
    ClaimDistribution,
    DomainError,
    Grid,
    ModelParams,
    ValueGrid,
    claim_integral,
    claim_integral_sweep,
    critical_level,
    drift,
    flow,
    make_grid,
    reach_time,
    validate,
    value_at,
)
from .odeint import (
    NumericalBlowup,
    picard_patch,
    seed_boundary,
    solve_homogeneous,
    solve_patched,
)
from .hjb import (
    BandStrategy,
    CertificationError,
    ClassificationError,
    ResidualReport,
    SolveOptions,
    apply_T,
    build_value,
    classify_regions,
    g_value,
    generator_value,
    hjb_residual,
    t_fixed_point_sup,
    value_iteration_oracle,
)
from .sim import (
    SimConfig,
    SimEstimate,
    Strategy,
    dominance_check,
    estimate_return,
    simulate_path,
)

__version__ = "0.1.0"
