"""Forward integration of the valuation integro-ODEs.

The homogeneous equation drift(x) W' = (lam+delta) W - lam * E[W(x-U)]
is marched left to right from a power-law seed at the ruin boundary; the
patched equation continues an already-frozen value function upward from an
interior point. Both use a Heun (RK2) step with the claim integral
evaluated at both stage points. A short Picard iteration of the equivalent
integral equation is kept as a desk-scale cross-check.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as _k
from .model import (
    DomainError,
    Grid,
    ModelParams,
    ValueGrid,
    claim_integral,
    critical_level,
    value_at,
)


class NumericalBlowup(RuntimeError):
    """March exceeded the overflow guard; carries the offending node."""

    def __init__(self, node: int, x: float, message: str | None = None):
        self.node = node
        self.x = x
        super().__init__(message or f"integration blew up at node {node} (x={x:g})")


def _overflow_guard(params: ModelParams) -> float:
    # the true value function is capped by a linear envelope when r < delta;
    # anything this far past it is divergence, not growth
    return 1e12 * params.p / (params.delta - params.r)


def _encode_claims(params: ModelParams, grid: Grid):
    """Pack the claim law into the flat arrays the kernels consume.

    Returns (mode, nu, sizes, probs, fgrid, atom_at_zero).
    """
    c = params.claims
    empty = np.empty(0)
    if c.kind == "exponential":
        return _k.CLAIMS_EXP, c.rate, empty, empty, empty, 0.0
    if c.kind == "atoms":
        return (
            _k.CLAIMS_ATOMS,
            0.0,
            np.asarray(c.atom_sizes, dtype=float),
            np.asarray(c.atom_probs, dtype=float),
            empty,
            c.atom_at_zero,
        )
    # generic density, sampled on the grid spacing
    u = grid.step * np.arange(grid.n)
    fgrid = np.array([c.density(v) for v in u])
    return _k.CLAIMS_DENSITY, 0.0, empty, empty, fgrid, 0.0


def seed_boundary(params: ModelParams, eps: float) -> tuple[float, float]:
    """Dominant-balance seed for the homogeneous solution just above the
    ruin level: W = eps**beta, W' = beta * eps**(beta-1), where beta is the
    boundary exponent of the model. Normalization is arbitrary (the
    equation is linear) and fixed to leading coefficient 1."""
    if eps <= 0.0:
        raise DomainError("seed offset must be positive")
    if eps > 1e-3 * params.p / params.alpha:
        raise DomainError("seed offset too large for a boundary-layer expansion")
    beta = params.boundary_exponent
    return eps**beta, beta * eps ** (beta - 1.0)


def solve_homogeneous(params: ModelParams, grid: Grid) -> ValueGrid:
    """March the homogeneous equation over the grid.

    The grid's first node sits eps_c above the critical level and carries
    the boundary-layer seed. Returns a HOMOGENEOUS_W ValueGrid whose deriv
    holds the scheme's own right-derivatives (the ODE slope used by the
    accepted step at each node)."""
    crit = critical_level(params)
    eps = grid.x_lo - crit
    w0, _ = seed_boundary(params, eps)
    cmode, nu, sizes, probs, fgrid, a0 = _encode_claims(params, grid)
    W, dW, bad = _k.march_homogeneous(
        grid.nodes(),
        crit,
        params.p,
        params.r,
        params.alpha,
        params.lam,
        params.delta,
        params.boundary_exponent,
        a0,
        cmode,
        nu,
        sizes,
        probs,
        fgrid,
        w0,
        _overflow_guard(params),
    )
    if bad >= 0:
        raise NumericalBlowup(bad, grid.x_lo + bad * grid.step)
    return ValueGrid(
        grid=grid,
        values=W,
        deriv=dW,
        kind="homogeneous_w",
        boundary_exponent=params.boundary_exponent,
    )


def solve_patched(params: ModelParams, x0: float, V_below: ValueGrid) -> ValueGrid:
    """Continue a frozen value function upward from x0 via the patched
    equation: drift u' = (lam+delta)u - lam * [u-part + frozen-V part of
    the claim integral], with u(x0) = V(x0).

    x0 must lie on (or be rounded to) a strictly interior grid node.
    Returns a PATCH_U ValueGrid on the full grid; nodes below x0 are the
    frozen input values."""
    grid = V_below.grid
    i0 = int(round((x0 - grid.x_lo) / grid.step))
    if i0 <= 0 or i0 >= grid.n - 1:
        raise DomainError("patch point must be strictly inside the grid")
    crit = critical_level(params)
    cmode, nu, sizes, probs, fgrid, a0 = _encode_claims(params, grid)
    U, dU, bad = _k.march_patched(
        grid.nodes(),
        i0,
        np.asarray(V_below.values, dtype=float),
        crit,
        params.p,
        params.r,
        params.alpha,
        params.lam,
        params.delta,
        V_below.boundary_exponent,
        a0,
        cmode,
        nu,
        sizes,
        probs,
        fgrid,
        _overflow_guard(params),
    )
    if bad >= 0:
        raise NumericalBlowup(bad, grid.x_lo + bad * grid.step)
    dU[:i0] = V_below.deriv[:i0]
    return ValueGrid(
        grid=grid,
        values=U,
        deriv=dU,
        kind="patch_u",
        boundary_exponent=V_below.boundary_exponent,
    )


def picard_patch(
    params: ModelParams, x0: float, V_below: ValueGrid, n_iter: int = 10
) -> tuple[np.ndarray, np.ndarray]:
    """Picard iteration of the integral form of the patched equation, on a
    patch short enough that the iteration provably contracts:

        u_{k+1}(x) = V(x0) + int_{x0}^x [(lam+delta) u_k(s)
                     - lam * E[(u_k or V)(s - U)]] / drift(s) ds

    with patch length min(h, 10 dx), h = (p + alpha*x0*1{x0<0}) / (2(2lam+delta)).
    Test oracle only; returns (patch_nodes, u)."""
    grid = V_below.grid
    dx = grid.step
    i0 = int(round((x0 - grid.x_lo) / grid.step))
    if i0 <= 0 or i0 >= grid.n - 1:
        raise DomainError("patch point must be strictly inside the grid")
    h = (params.p + params.alpha * x0 * (x0 < 0.0)) / (2.0 * (2.0 * params.lam + params.delta))
    m = max(2, min(int(np.floor(h / dx)), 10))
    m = min(m, grid.n - 1 - i0)
    xs = grid.x_lo + dx * np.arange(i0, i0 + m + 1)

    v0 = float(V_below.values[i0])
    u = np.full(m + 1, v0)
    drift_s = params.p + np.where(xs >= 0.0, params.r * xs, params.alpha * xs)
    work = ValueGrid(
        grid=grid,
        values=np.asarray(V_below.values, dtype=float).copy(),
        deriv=np.asarray(V_below.deriv, dtype=float).copy(),
        kind=V_below.kind,
        boundary_exponent=V_below.boundary_exponent,
    )
    for _ in range(n_iter):
        work.values[i0 : i0 + m + 1] = u
        integrand = np.empty(m + 1)
        for j in range(m + 1):
            ci = claim_integral(params, work, xs[j])
            integrand[j] = ((params.lam + params.delta) * u[j] - params.lam * ci) / drift_s[j]
        acc = np.concatenate(
            ([0.0], np.cumsum(0.5 * dx * (integrand[1:] + integrand[:-1])))
        )
        u = v0 + acc
    return xs, u
