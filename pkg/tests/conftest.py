"""Shared fixtures: canonical problem instances and cached solves.

Two canonical configurations are used throughout:

* "degenerate": point-mass-at-zero claims with p=1, lam=0.5, r=0.05,
  alpha=1, delta=0.1. Claims never move the reserve, so the value
  function has the closed form V(x) = 10*(1+x)**0.1 on (-1, 0] and
  V(x) = x + 10 above, with a single anchor at 0.
* "cfg1": the same rates with Exponential(1) claims; no closed form,
  verified through residuals, the fixed-point operator, the
  value-iteration oracle and Monte Carlo.
"""

import numpy as np
import pytest

from divband import (
    ClaimDistribution,
    ModelParams,
    SimConfig,
    SolveOptions,
    Strategy,
    build_value,
    estimate_return,
    make_grid,
    value_iteration_oracle,
)


def degenerate_params() -> ModelParams:
    return ModelParams(
        p=1.0, lam=0.5, r=0.05, alpha=1.0, delta=0.1,
        claims=ClaimDistribution.point_mass_zero(),
    )


def cfg1_params() -> ModelParams:
    return ModelParams(
        p=1.0, lam=0.5, r=0.05, alpha=1.0, delta=0.1,
        claims=ClaimDistribution.exponential(1.0),
    )


def degenerate_value_exact(x):
    """Closed-form value of the degenerate model."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.0, 10.0 * (1.0 + x) ** 0.1, x + 10.0)


@pytest.fixture(scope="session")
def deg_params():
    return degenerate_params()


@pytest.fixture(scope="session")
def cfg1():
    return cfg1_params()


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Trigger jit compilation on tiny inputs so timed tests measure the
    numerics, not the compiler."""
    params = degenerate_params()
    grid = make_grid(params, 2e-2, 1.0)
    V, strat, _ = build_value(params, grid)
    value_iteration_oracle(params, make_grid(params, 2e-2, 0.5), dt=1e-2, tol=1e-4)
    cfg = SimConfig(n_paths=4, seed=0)
    estimate_return(params, Strategy.from_bands(strat), 0.0, cfg)
    estimate_return(params, Strategy.take_all(), 0.0, cfg)


@pytest.fixture(scope="session")
def deg_solution(deg_params):
    """Fine-grid solve of the degenerate model: (V, strategy, report)."""
    grid = make_grid(deg_params, 1e-4, 2.0)
    return build_value(deg_params, grid)


@pytest.fixture(scope="session")
def cfg1_solution(cfg1):
    """Solve of cfg1 on an explicit grid with roughly 2e4 nodes."""
    grid = make_grid(cfg1, 2e-3, 40.0)
    return build_value(cfg1, grid)
