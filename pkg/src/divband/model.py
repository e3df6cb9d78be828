"""Problem instances: model parameters, claim-size laws, deterministic
reserve motion, and the claim integral used by every downstream equation.

All operations are pure functions of their inputs and safe to call
concurrently. Money and time are plain floats; no unit system is enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "ClaimDistribution",
    "ModelParams",
    "Grid",
    "ValueGrid",
    "Diagnostics",
    "critical_level",
    "drift",
    "reach_time",
    "flow",
    "claim_integral",
    "claim_integral_sweep",
    "validate",
    "make_grid",
    "value_at",
]


class DomainError(ValueError):
    """An argument lies outside the operation's admissible domain."""


# ----------------------------------------------------------------------
# Claim-size laws
# ----------------------------------------------------------------------

_VARIANTS = ("exponential", "erlang", "uniform", "atoms")


@dataclass(frozen=True)
class ClaimDistribution:
    """Claim-size law. A closed set of variants: Exponential(rate),
    Erlang(shape, rate), Uniform(lo, hi), and discrete atoms on [0, inf)
    (a single atom at 0 models claims of size zero).

    Construct through the classmethods; the constructor checks the variant
    invariants (probabilities sum to one, support nonnegative, density a
    true sub-probability density).
    """

    kind: str
    rate: float = 0.0
    shape: int = 1
    lo: float = 0.0
    hi: float = 0.0
    atom_sizes: tuple[float, ...] = ()
    atom_probs: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in _VARIANTS:
            raise DomainError(f"unknown claim variant {self.kind!r}")
        if self.kind in ("exponential", "erlang"):
            if self.rate <= 0.0:
                raise DomainError("claim rate must be positive")
            if self.kind == "erlang" and (self.shape < 1 or self.shape != int(self.shape)):
                raise DomainError("erlang shape must be a positive integer")
        elif self.kind == "uniform":
            if not (0.0 <= self.lo < self.hi):
                raise DomainError("uniform support must satisfy 0 <= lo < hi")
        else:
            sizes = np.asarray(self.atom_sizes, dtype=float)
            probs = np.asarray(self.atom_probs, dtype=float)
            if sizes.size == 0 or sizes.size != probs.size:
                raise DomainError("atoms need matching nonempty sizes/probs")
            if np.any(sizes < 0.0):
                raise DomainError("claim sizes must be nonnegative")
            if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-12:
                raise DomainError("atom probabilities must be >= 0 and sum to 1")

    # -- constructors --------------------------------------------------

    @classmethod
    def exponential(cls, rate: float) -> "ClaimDistribution":
        return cls(kind="exponential", rate=rate)

    @classmethod
    def erlang(cls, shape: int, rate: float) -> "ClaimDistribution":
        return cls(kind="erlang", shape=shape, rate=rate)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ClaimDistribution":
        return cls(kind="uniform", lo=lo, hi=hi)

    @classmethod
    def discrete(cls, atoms: list[tuple[float, float]]) -> "ClaimDistribution":
        atoms = sorted(atoms)
        return cls(
            kind="atoms",
            atom_sizes=tuple(a for a, _ in atoms),
            atom_probs=tuple(w for _, w in atoms),
        )

    @classmethod
    def point_mass_zero(cls) -> "ClaimDistribution":
        return cls(kind="atoms", atom_sizes=(0.0,), atom_probs=(1.0,))

    # -- law queries ----------------------------------------------------

    @property
    def is_continuous(self) -> bool:
        return self.kind in ("exponential", "erlang", "uniform")

    @property
    def atom_at_zero(self) -> float:
        """Probability mass of claims of size exactly zero."""
        if self.kind != "atoms":
            return 0.0
        return sum(p for s, p in zip(self.atom_sizes, self.atom_probs) if s == 0.0)

    def density(self, u):
        """Density for continuous variants (vectorised); zero off support."""
        u = np.asarray(u, dtype=float)
        if self.kind == "exponential":
            return np.where(u >= 0.0, self.rate * np.exp(-self.rate * np.minimum(u * (u >= 0), 700 / self.rate)), 0.0)
        if self.kind == "erlang":
            k, nu = self.shape, self.rate
            up = np.maximum(u, 0.0)
            return np.where(
                u >= 0.0,
                nu**k * up ** (k - 1) * np.exp(-nu * up) / math.factorial(k - 1),
                0.0,
            )
        if self.kind == "uniform":
            return np.where((u >= self.lo) & (u <= self.hi), 1.0 / (self.hi - self.lo), 0.0)
        raise DomainError("discrete claim laws have no density")

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "exponential":
            return np.where(u >= 0.0, 1.0 - np.exp(-self.rate * np.maximum(u, 0.0)), 0.0)
        if self.kind == "erlang":
            k, nu = self.shape, self.rate
            up = np.maximum(u, 0.0)
            acc = np.zeros_like(up)
            term = np.ones_like(up)
            for j in range(k):
                if j > 0:
                    term = term * (nu * up) / j
                acc = acc + term
            return np.where(u >= 0.0, 1.0 - np.exp(-nu * up) * acc, 0.0)
        if self.kind == "uniform":
            return np.clip((u - self.lo) / (self.hi - self.lo), 0.0, 1.0) * (u >= 0.0)
        out = np.zeros_like(u, dtype=float)
        for s, p in zip(self.atom_sizes, self.atom_probs):
            out = out + p * (u >= s)
        return out

    def mean(self) -> float:
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "erlang":
            return self.shape / self.rate
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        return float(np.dot(self.atom_sizes, self.atom_probs))


# ----------------------------------------------------------------------
# Model parameters
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """The five scalar model rates plus the claim law.

    p: premium rate, lam: claim intensity, r: credit interest force,
    alpha: debit interest force, delta: discount force.
    """

    p: float
    lam: float
    r: float
    alpha: float
    delta: float
    claims: ClaimDistribution

    @property
    def no_negative_dividends(self) -> bool:
        """True when alpha > lam + delta; then no dividends are ever paid
        at negative reserve under the optimal strategy."""
        return self.alpha > self.lam + self.delta

    @property
    def boundary_exponent(self) -> float:
        """Power-law exponent of the value function at the critical level.

        Dominant balance of the generator at -p/alpha, accounting for a
        possible claim-size atom at zero (which keeps its value term in
        the balance): (lam + delta - lam*P(U=0)) / alpha.
        """
        return (self.lam + self.delta - self.lam * self.claims.atom_at_zero) / self.alpha


@dataclass(frozen=True)
class Diagnostics:
    """Result of hypothesis validation: hard violations and soft warnings."""

    violations: tuple[str, ...]
    warnings: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(params: ModelParams) -> Diagnostics:
    """Check the standing hypotheses. Violations break the theory the
    solver relies on; warnings mark optional structure that is lost."""
    violations = []
    warnings = []
    if params.p <= 0.0:
        violations.append("premium rate p must be positive")
    if params.lam <= 0.0:
        violations.append("claim intensity lambda must be positive")
    if params.r <= 0.0:
        violations.append("credit interest r must be positive")
    if params.alpha <= params.r:
        violations.append("debit interest alpha must exceed credit interest r")
    if params.delta <= params.r:
        violations.append("discount force delta must exceed r")
    if not params.no_negative_dividends:
        warnings.append(
            "alpha <= lambda + delta: the negative-reserve no-dividend "
            "structure is not guaranteed"
        )
    return Diagnostics(tuple(violations), tuple(warnings))


# ----------------------------------------------------------------------
# Deterministic reserve motion
# ----------------------------------------------------------------------


def critical_level(params: ModelParams) -> float:
    """Absorbing lower boundary -p/alpha; premiums cannot service the debt
    interest at or below this level."""
    return -params.p / params.alpha


def drift(params: ModelParams, x: float) -> float:
    """Claim-free reserve drift p + r*x (x >= 0) or p + alpha*x (x < 0).

    Continuous, nonnegative on the domain, zero exactly at the critical
    level. Raises DomainError below the critical level.
    """
    crit = critical_level(params)
    if x < crit - 1e-15 * max(1.0, abs(crit)):
        raise DomainError(f"x={x} lies below the critical level {crit}")
    if x >= 0.0:
        return params.p + params.r * x
    return max(params.p + params.alpha * x, 0.0)


def reach_time(params: ModelParams, x: float, y: float) -> float:
    """Time for the claim-free, dividend-free reserve to move from x up to y.

    Piecewise-logarithmic closed form; 0 when x == y. Strictly increasing
    in y and decreasing in x.
    """
    p, r, alpha = params.p, params.r, params.alpha
    crit = critical_level(params)
    if x <= crit:
        raise DomainError(f"x={x} must exceed the critical level {crit}")
    if y < x:
        raise DomainError(f"need y >= x, got x={x}, y={y}")
    if y == x:
        return 0.0
    if x >= 0.0:
        return math.log((r * y + p) / (r * x + p)) / r
    if y <= 0.0:
        return math.log((alpha * y + p) / (alpha * x + p)) / alpha
    return math.log((r * y + p) / p) / r + math.log(p / (alpha * x + p)) / alpha


def flow(params: ModelParams, x: float, t: float) -> float:
    """Position after time t of the claim-free deterministic path from x.

    Piecewise exponential: debit-interest regime until the path crosses 0,
    credit-interest regime after. Inverse of reach_time along the path.
    """
    p, r, alpha = params.p, params.r, params.alpha
    crit = critical_level(params)
    if x <= crit:
        raise DomainError(f"x={x} must exceed the critical level {crit}")
    if t < 0.0:
        raise DomainError("t must be nonnegative")
    if x < 0.0:
        t_cross = math.log(p / (alpha * x + p)) / alpha
        if t <= t_cross:
            return (x + p / alpha) * math.exp(alpha * t) - p / alpha
        x, t = 0.0, t - t_cross
    return ((p + r * x) * math.exp(r * t) - p) / r


# ----------------------------------------------------------------------
# Grids and gridded value functions
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform grid x_i = x_lo + i*step, i = 0..n-1, with x_lo strictly
    above the critical level."""

    x_lo: float
    step: float
    n: int

    @property
    def x_hi(self) -> float:
        return self.x_lo + (self.n - 1) * self.step

    def nodes(self) -> np.ndarray:
        return self.x_lo + self.step * np.arange(self.n)


def make_grid(
    params: ModelParams, dx: float, x_hi: float, eps_c: float | None = None
) -> Grid:
    """Grid from critical + eps_c up to (at least) x_hi with step dx.

    eps_c defaults to 1e-6 * (p/alpha); the critical level itself is a
    singular point of the equations and is never a node.
    """
    if dx <= 0.0:
        raise DomainError("dx must be positive")
    if eps_c is None:
        eps_c = 1e-6 * (params.p / params.alpha)
    if eps_c <= 0.0:
        raise DomainError("eps_c must be positive")
    x_lo = critical_level(params) + eps_c
    if x_hi <= max(x_lo, 0.0):
        raise DomainError("x_hi must be positive and above the grid start")
    n = int(math.ceil((x_hi - x_lo) / dx - 1e-12)) + 1
    return Grid(x_lo=x_lo, step=dx, n=n)


@dataclass
class ValueGrid:
    """A value function (or homogeneous/patched solution) on a Grid.

    values: one level per node, finite, nonnegative, nondecreasing.
    deriv:  one-sided (right) derivative estimates, one per node. The
            solvers store the marching scheme's own slope (exactly 1 in
            linear segments), which is the scheme-consistent forward
            derivative.
    kind:   'homogeneous_w' | 'value_v' | 'patch_u'.
    boundary_exponent: power-law exponent used to interpolate between the
            critical level (value 0) and the first node.
    """

    grid: Grid
    values: np.ndarray
    deriv: np.ndarray
    kind: str
    boundary_exponent: float = 1.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.deriv = np.asarray(self.deriv, dtype=float)
        if self.values.shape != (self.grid.n,) or self.deriv.shape != (self.grid.n,):
            raise DomainError("values/deriv must have one entry per grid node")


def value_at(params: ModelParams, vg: ValueGrid, x) -> np.ndarray:
    """Interpolate a gridded value function at arbitrary reserve levels.

    Linear between nodes; power-law (exponent vg.boundary_exponent) between
    the critical level and the first node; 0 at and below the critical
    level; linear continuation with the last stored slope above the grid.
    """
    x = np.asarray(x, dtype=float)
    g = vg.grid
    crit = critical_level(params)
    out = np.interp(x, g.nodes(), vg.values)
    below = x < g.x_lo
    if np.any(below):
        s = np.clip(x - crit, 0.0, None)
        eps = g.x_lo - crit
        frac = np.where(below, s / eps, 1.0)
        out = np.where(below, vg.values[0] * frac**vg.boundary_exponent, out)
    above = x > g.x_hi
    if np.any(above):
        out = np.where(above, vg.values[-1] + (x - g.x_hi) * vg.deriv[-1], out)
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# Claim integral
# ----------------------------------------------------------------------


def claim_integral(params: ModelParams, vg: ValueGrid, x: float) -> float:
    """The integral of V(x-u) over claim sizes u in [0, x + p/alpha].

    Claims beyond x + p/alpha ruin the company and contribute zero.
    Discrete laws: exact summation with interpolated V. Continuous laws:
    composite trapezoid at the grid resolution.
    """
    g = vg.grid
    crit = critical_level(params)
    if x < crit - 1e-12 or x > g.x_hi + 1e-12 * max(1.0, abs(g.x_hi)):
        raise DomainError(f"x={x} outside the value grid")
    span = x - crit
    if span <= 0.0:
        return 0.0
    claims = params.claims
    if claims.kind == "atoms":
        total = 0.0
        for size, prob in zip(claims.atom_sizes, claims.atom_probs):
            if size < span:
                total += prob * value_at(params, vg, x - size)
        return float(total)
    m = int(math.floor(span / g.step + 1e-12))
    u = np.arange(m + 1) * g.step
    if u[-1] < span - 1e-15 * max(1.0, span):
        u = np.append(u, span)
    vals = np.asarray(value_at(params, vg, x - u))
    integrand = vals * claims.density(u)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(integrand, u))


def claim_integral_sweep(params: ModelParams, vg: ValueGrid) -> np.ndarray:
    """Claim integral at every grid node.

    For exponential claims an O(1)-per-node incremental recursion
    reproduces the composite-trapezoid sum exactly (same panels, shifted);
    other variants fall back to per-node quadrature/summation.
    """
    g = vg.grid
    claims = params.claims
    n, dx = g.n, g.step
    eps = g.x_lo - critical_level(params)
    V = vg.values
    if claims.kind == "exponential":
        nu = claims.rate
        e = math.exp(-nu * dx)
        out = np.empty(n)
        # node 0: single partial panel of width eps down to the ruin level
        t = 0.5 * eps * nu * V[0]
        out[0] = t
        for i in range(1, n):
            t = e * t + 0.5 * nu * dx * (V[i] + e * V[i - 1])
            out[i] = t
        return out
    if claims.kind == "atoms":
        xs = g.nodes()
        out = np.zeros(n)
        crit = critical_level(params)
        for size, prob in zip(claims.atom_sizes, claims.atom_probs):
            mask = size < (xs - crit)
            if np.any(mask):
                out[mask] += prob * value_at(params, vg, xs[mask] - size)
        return out
    # generic continuous law: trapezoid with precomputed density samples
    f = claims.density(np.arange(n) * dx)
    f_at = lambda u: float(claims.density(u))
    out = np.empty(n)
    for i in range(n):
        # panels over u = 0..i*dx plus the eps-wide tail panel to ruin
        if i == 0:
            out[0] = 0.5 * eps * V[0] * f_at(0.0)
            continue
        w = V[i::-1] * f[: i + 1]
        acc = dx * (w.sum() - 0.5 * (w[0] + w[-1]))
        acc += 0.5 * eps * V[0] * f_at(i * dx)
        out[i] = acc
    return out
