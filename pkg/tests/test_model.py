"""Model layer: parameters, claim laws, drift, reach times, flow and the
claim integral."""

import math

import numpy as np
import pytest

from divband import (
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
)

from conftest import cfg1_params, degenerate_params


def _params(p=1.0, lam=0.5, r=0.05, alpha=1.0, delta=0.1, claims=None):
    if claims is None:
        claims = ClaimDistribution.exponential(1.0)
    return ModelParams(p=p, lam=lam, r=r, alpha=alpha, delta=delta, claims=claims)


def _flat_grid(params, value, dx=1e-3, x_hi=2.0):
    grid = make_grid(params, dx, x_hi)
    vals = np.full(grid.n, float(value))
    return ValueGrid(grid, vals, np.zeros(grid.n), kind="value_v")


# ----------------------------------------------------------------------
# claim distributions
# ----------------------------------------------------------------------


def test_claim_distribution_means():
    assert ClaimDistribution.exponential(2.0).mean() == pytest.approx(0.5)
    assert ClaimDistribution.erlang(2, 2.0).mean() == pytest.approx(1.0)
    assert ClaimDistribution.uniform(0.0, 3.0).mean() == pytest.approx(1.5)
    assert ClaimDistribution.discrete([(1.0, 0.25), (3.0, 0.75)]).mean() == pytest.approx(2.5)
    assert ClaimDistribution.point_mass_zero().mean() == 0.0


def test_claim_distribution_atom_probs_must_sum_to_one():
    with pytest.raises(DomainError):
        ClaimDistribution.discrete([(1.0, 0.5), (2.0, 0.4)])
    with pytest.raises(DomainError):
        ClaimDistribution.discrete([(1.0, -0.1), (2.0, 1.1)])


def test_claim_distribution_support_nonnegative():
    with pytest.raises(DomainError):
        ClaimDistribution.discrete([(-1.0, 1.0)])
    with pytest.raises(DomainError):
        ClaimDistribution.uniform(-1.0, 1.0)


def test_claim_distribution_cdf_density_consistency():
    d = ClaimDistribution.exponential(1.5)
    us = np.linspace(0.0, 4.0, 2001)
    numeric = np.trapezoid(d.density(us), us)
    assert numeric == pytest.approx(d.cdf(4.0) - d.cdf(0.0), abs=1e-6)


def test_atom_at_zero():
    assert ClaimDistribution.point_mass_zero().atom_at_zero == 1.0
    assert ClaimDistribution.exponential(1.0).atom_at_zero == 0.0
    mix = ClaimDistribution.discrete([(0.0, 0.3), (1.0, 0.7)])
    assert mix.atom_at_zero == pytest.approx(0.3)


# ----------------------------------------------------------------------
# params, validation, critical level
# ----------------------------------------------------------------------


def test_validate_clean_config():
    diag = validate(_params())
    assert diag.ok
    assert diag.violations == ()
    assert diag.warnings == ()


def test_validate_delta_below_r_is_violation():
    diag = validate(_params(delta=0.04, r=0.05))
    assert not diag.ok
    assert any("delta" in v for v in diag.violations)


def test_validate_small_alpha_is_warning_not_error():
    diag = validate(_params(alpha=0.55))
    assert diag.ok
    assert len(diag.warnings) == 1


def test_no_negative_dividends_flag():
    assert _params(alpha=1.0).no_negative_dividends  # 1 > 0.6
    assert not _params(alpha=0.55).no_negative_dividends


def test_critical_level():
    assert critical_level(_params(p=1.0, alpha=1.0)) == pytest.approx(-1.0)
    assert critical_level(_params(p=2.0, alpha=0.8)) == pytest.approx(-2.5)
    assert critical_level(_params(p=1.0, alpha=4.0)) == pytest.approx(-0.25)


# ----------------------------------------------------------------------
# drift
# ----------------------------------------------------------------------


def test_drift_values():
    params = _params()
    assert drift(params, 0.0) == pytest.approx(1.0)
    assert drift(params, -0.5) == pytest.approx(0.5)
    assert drift(params, -1.0) == pytest.approx(0.0, abs=1e-15)
    assert drift(params, 2.0) == pytest.approx(1.1)


def test_drift_rejects_below_critical():
    with pytest.raises(DomainError):
        drift(_params(), -1.0 - 1e-9)


def test_drift_continuous_and_nondecreasing():
    params = _params()
    xs = np.linspace(-1.0, 5.0, 601)
    ds = np.array([drift(params, float(x)) for x in xs])
    assert np.all(np.diff(ds) >= -1e-12)
    # continuity across zero
    assert drift(params, -1e-12) == pytest.approx(drift(params, 1e-12), abs=1e-10)


# ----------------------------------------------------------------------
# reach_time and flow
# ----------------------------------------------------------------------


def test_reach_time_closed_forms():
    params = _params()
    assert reach_time(params, 0.0, 0.0) == 0.0
    assert reach_time(params, -0.5, 0.0) == pytest.approx(math.log(2.0), rel=1e-12)
    assert reach_time(params, 0.0, 1.0) == pytest.approx(20.0 * math.log(1.05), rel=1e-12)


def test_reach_time_matches_rk4():
    params = _params()

    def rk4_time(x, y, n=20000):
        # integrate dt/dx = 1/drift(x) from x to y
        t, h = 0.0, (y - x) / n
        for i in range(n):
            s = x + i * h
            k1 = 1.0 / drift(params, s)
            k2 = 1.0 / drift(params, s + 0.5 * h)
            k4 = 1.0 / drift(params, s + h)
            t += (h / 6.0) * (k1 + 4.0 * k2 + k4)
        return t

    assert reach_time(params, -0.5, 1.0) == pytest.approx(rk4_time(-0.5, 1.0), rel=1e-9)


def test_reach_time_domain_errors():
    params = _params()
    with pytest.raises(DomainError):
        reach_time(params, -1.0, 0.0)
    with pytest.raises(DomainError):
        reach_time(params, 0.5, 0.0)


def test_reach_time_monotone_and_additive():
    params = _params()
    t_xy = reach_time(params, -0.5, 0.3)
    t_yz = reach_time(params, 0.3, 1.7)
    t_xz = reach_time(params, -0.5, 1.7)
    assert t_xy + t_yz == pytest.approx(t_xz, rel=1e-10)
    assert reach_time(params, -0.5, 0.4) > t_xy
    assert reach_time(params, -0.4, 0.3) < t_xy


def test_flow_inverts_reach_time():
    params = _params()
    assert flow(params, -0.5, 0.0) == -0.5
    assert flow(params, -0.5, math.log(2.0)) == pytest.approx(0.0, abs=1e-12)
    assert flow(params, 0.0, 20.0 * math.log(1.05)) == pytest.approx(1.0, rel=1e-10)
    for x, y in [(-0.9, -0.2), (-0.3, 2.0), (0.7, 3.1)]:
        assert flow(params, x, reach_time(params, x, y)) == pytest.approx(y, rel=1e-10)


def test_flow_semigroup():
    params = _params()
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = float(rng.uniform(-0.99, 2.0))
        s, t = rng.uniform(0.0, 2.0, size=2)
        one = flow(params, flow(params, x, float(s)), float(t))
        two = flow(params, x, float(s + t))
        assert one == pytest.approx(two, rel=1e-10, abs=1e-10)


def test_flow_rejects_below_critical():
    with pytest.raises(DomainError):
        flow(_params(), -1.0 - 1e-9, 1.0)


# ----------------------------------------------------------------------
# claim integral
# ----------------------------------------------------------------------


def test_claim_integral_zero_value():
    params = _params()
    vg = _flat_grid(params, 0.0)
    assert claim_integral(params, vg, 0.0) == 0.0


def test_claim_integral_point_mass_zero_returns_value():
    params = degenerate_params()
    grid = make_grid(params, 1e-3, 2.0)
    xs = grid.nodes()
    vals = np.maximum(xs + 1.0, 0.0) ** 2
    vg = ValueGrid(grid, vals, np.zeros(grid.n), kind="value_v")
    for x in (-0.5, 0.0, 1.25):
        i = int(round((x - grid.x_lo) / grid.step))
        assert claim_integral(params, vg, float(xs[i])) == pytest.approx(vals[i], rel=1e-12)


def test_claim_integral_exponential_analytic():
    params = _params()
    vg = _flat_grid(params, 1.0, dx=1e-5, x_hi=0.5)
    got = claim_integral(params, vg, 0.0)
    # the grid pins V to 0 at the ruin level, so the top quadrature panel
    # differs from the pure V=1 analytic value by ~dx/2 * e^{-1}
    assert got == pytest.approx(1.0 - math.exp(-1.0), abs=3e-6)


def test_claim_integral_sweep_matches_pointwise():
    params = _params()
    grid = make_grid(params, 2e-3, 3.0)
    xs = grid.nodes()
    vals = np.log1p(xs - xs[0] + 0.1)
    vg = ValueGrid(grid, vals, np.zeros(grid.n), kind="value_v")
    sweep = claim_integral_sweep(params, vg)
    for i in range(0, grid.n, 157):
        assert sweep[i] == pytest.approx(claim_integral(params, vg, float(xs[i])),
                                         rel=1e-8, abs=1e-10)


def test_claim_integral_monotone_in_value():
    params = cfg1_params()
    grid = make_grid(params, 2e-3, 3.0)
    xs = grid.nodes()
    lo = ValueGrid(grid, xs - xs[0], np.ones(grid.n), kind="value_v")
    hi = ValueGrid(grid, xs - xs[0] + 0.5, np.ones(grid.n), kind="value_v")
    assert np.all(claim_integral_sweep(params, hi) >= claim_integral_sweep(params, lo))


def test_claim_integral_trapezoid_second_order():
    # Erlang(2) has a continuous density; a jump (e.g. uniform at its
    # upper endpoint) would degrade the trapezoid rule to first order
    params = _params(claims=ClaimDistribution.erlang(2, 2.0))

    def integral_at(dx):
        grid = make_grid(params, dx, 2.0)
        xs = grid.nodes()
        vals = (xs - xs[0]) ** 2
        vg = ValueGrid(grid, vals, np.zeros(grid.n), kind="value_v")
        i = int(round((1.5 - grid.x_lo) / grid.step))
        return claim_integral(params, vg, float(xs[i]))

    exact = integral_at(1.25e-4)
    e1 = abs(integral_at(4e-3) - exact)
    e2 = abs(integral_at(2e-3) - exact)
    assert e2 <= e1 / 3.0  # O(dx^2): halving the step cuts the error ~4x


# ----------------------------------------------------------------------
# grid plumbing
# ----------------------------------------------------------------------


def test_make_grid_layout():
    params = _params()
    grid = make_grid(params, 1e-3, 2.0)
    xs = grid.nodes()
    assert grid.x_lo == pytest.approx(-1.0 + 1e-6)
    assert xs[0] == grid.x_lo
    assert grid.x_hi >= 2.0
    assert np.allclose(np.diff(xs), grid.step, rtol=0, atol=1e-12)


def test_make_grid_rejects_bad_inputs():
    params = _params()
    with pytest.raises(DomainError):
        make_grid(params, -1e-3, 2.0)
    with pytest.raises(DomainError):
        make_grid(params, 1e-3, 2.0, eps_c=0.0)
    with pytest.raises(DomainError):
        make_grid(params, 1e-3, -5.0)


def test_value_grid_shape_check():
    params = _params()
    grid = make_grid(params, 1e-2, 1.0)
    with pytest.raises(DomainError):
        ValueGrid(grid, np.zeros(grid.n - 1), np.zeros(grid.n), kind="value_v")


def test_grid_x_hi_property():
    g = Grid(x_lo=0.0, step=0.5, n=5)
    assert g.x_hi == pytest.approx(2.0)
    assert np.allclose(g.nodes(), [0.0, 0.5, 1.0, 1.5, 2.0])
