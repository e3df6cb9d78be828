"""Event-driven Monte Carlo for the controlled reserve.

Paths are simulated exactly: claim-free motion uses the closed-form flow,
held intervals use the closed-form discounted dividend stream, and claims
arrive at exponential times. Each replicate draws from a counter-based
stream keyed by (seed, replicate), so estimates are bit-identical for any
execution order or thread count. Paths are truncated once the discounted
upper envelope of all future dividends drops below tail_tol; the
deterministic bound on the discarded tail is reported, so the estimator is
auditable rather than pretending unbiasedness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .hjb import BandStrategy
from .model import DomainError, ModelParams, ValueGrid, critical_level, value_at


@dataclass
class SimConfig:
    n_paths: int = 200_000
    seed: int = 1
    tail_tol: float = 1e-6
    t_max: float | None = None  # None: derived from tail_tol and the envelope

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be at least 1")
        if self.tail_tol <= 0.0:
            raise DomainError("tail_tol must be positive")


@dataclass
class SimEstimate:
    mean: float
    std_err: float
    n: int
    trunc_bound: float
    ruin_fraction: float


@dataclass
class Strategy:
    """Dividend policy for the simulator.

    kind 'band' wraps a BandStrategy; 'barrier' reflects at a single level
    b; 'threshold' pays at the drift rate while the reserve is at or above
    b (the reserve is frozen there); 'take_all' pays x + p/alpha at time 0
    (immediate ruin); 'none' never pays.
    """

    kind: str
    band: BandStrategy | None = None
    level: float | None = None

    @classmethod
    def from_bands(cls, band: BandStrategy) -> "Strategy":
        return cls(kind="band", band=band)

    @classmethod
    def barrier(cls, b: float) -> "Strategy":
        return cls(kind="barrier", level=float(b))

    @classmethod
    def threshold(cls, b: float) -> "Strategy":
        return cls(kind="threshold", level=float(b))

    @classmethod
    def take_all(cls) -> "Strategy":
        return cls(kind="take_all")

    @classmethod
    def none(cls) -> "Strategy":
        return cls(kind="none")

    @property
    def name(self) -> str:
        if self.kind in ("barrier", "threshold"):
            return f"{self.kind}({self.level:g})"
        return self.kind

    def validate(self, params: ModelParams) -> None:
        crit = critical_level(params)
        if self.kind == "band":
            if self.band is None or self.band.anchors.size == 0:
                raise DomainError("band strategy requires at least one anchor")
            if np.any(self.band.anchors <= crit):
                # a lump down to such an anchor would itself cause ruin,
                # which admissibility forbids
                raise DomainError("anchor at or below the critical level")
        elif self.kind in ("barrier", "threshold"):
            if self.level is None or self.level <= crit:
                raise DomainError(f"{self.kind} level must exceed the critical level")
        elif self.kind not in ("take_all", "none"):
            raise DomainError(f"unknown strategy kind {self.kind!r}")


_LAB = {"A": _k.SEG_A, "B": _k.SEG_B, "C": _k.SEG_C}


def _encode_strategy(params: ModelParams, strategy: Strategy):
    """Flatten a strategy into (smode, anchors, seg_edges, seg_labels,
    b_top, thr_b) for the path kernel."""
    strategy.validate(params)
    crit = critical_level(params)
    empty = np.empty(0)
    if strategy.kind == "band":
        bs = strategy.band
        edges = [bs.segments[0][0]] + [hi for (_, hi, _) in bs.segments]
        edges[-1] = 1e300
        labels = np.array([_LAB[lab] for (_, _, lab) in bs.segments], dtype=np.int64)
        return (
            _k.STRAT_BAND,
            np.asarray(bs.anchors, dtype=float),
            np.asarray(edges, dtype=float),
            labels,
            float(bs.b_top),
            0.0,
        )
    if strategy.kind == "barrier":
        b = strategy.level
        edges = np.array([crit, b, 1e300])
        labels = np.array([_k.SEG_C, _k.SEG_B], dtype=np.int64)
        return _k.STRAT_BAND, np.array([b]), edges, labels, b, 0.0
    if strategy.kind == "threshold":
        return _k.STRAT_THRESHOLD, empty, empty, np.empty(0, dtype=np.int64), strategy.level, strategy.level
    smode = _k.STRAT_TAKE_ALL if strategy.kind == "take_all" else _k.STRAT_NONE
    return smode, empty, empty, np.empty(0, dtype=np.int64), 0.0, 0.0


def _encode_claims_sim(params: ModelParams):
    c = params.claims
    empty = np.empty(0)
    if c.kind == "exponential":
        return _k.SIM_EXP, c.rate, 1, 0.0, 0.0, empty, empty
    if c.kind == "erlang":
        return _k.SIM_ERLANG, c.rate, c.shape, 0.0, 0.0, empty, empty
    if c.kind == "uniform":
        return _k.SIM_UNIFORM, 0.0, 1, c.lo, c.hi, empty, empty
    sizes = np.asarray(c.atom_sizes, dtype=float)
    cum = np.cumsum(np.asarray(c.atom_probs, dtype=float))
    return _k.SIM_ATOMS, 0.0, 1, 0.0, 0.0, sizes, cum


def _default_t_max(params: ModelParams, ref: float, tail_tol: float) -> float:
    env = (params.delta * max(ref, 0.0) + params.p) / (params.delta - params.r) + (
        params.p / params.alpha
    )
    # double the envelope-decay horizon; the envelope check inside the
    # path loop fires first in all normal runs
    return 2.0 * np.log(max(env / tail_tol, np.e)) / params.delta


def simulate_path(
    params: ModelParams,
    strategy: Strategy,
    x0: float,
    rng_stream: int,
    tail_tol: float = 1e-6,
    t_max: float | None = None,
):
    """One path. rng_stream is the replicate's stream key (use
    path_key(seed, k) for replicate k). Returns (discounted_dividends,
    ruin_time) with ruin_time None when the path was truncated instead."""
    crit = critical_level(params)
    if x0 <= crit:
        raise DomainError("start point must be above the critical level")
    smode, anchors, edges, labels, b_top, thr_b = _encode_strategy(params, strategy)
    cmode, nu, kshape, ulo, uhi, sizes, cum = _encode_claims_sim(params)
    if t_max is None:
        t_max = _default_t_max(params, max(x0, b_top, thr_b), tail_tol)
    pay, rt, trunc, _ = _k.sim_path(
        np.uint64(rng_stream),
        float(x0),
        params.p,
        params.r,
        params.alpha,
        params.lam,
        params.delta,
        crit,
        smode,
        anchors,
        edges,
        labels,
        b_top,
        thr_b,
        cmode,
        nu,
        kshape,
        ulo,
        uhi,
        sizes,
        cum,
        tail_tol,
        t_max,
    )
    return float(pay), (float(rt) if rt >= 0.0 else None)


def path_key(seed: int, replicate: int) -> int:
    """Stream key for one replicate of a seeded experiment."""
    return int(_k.stream_key(seed, replicate))


def estimate_return(
    params: ModelParams, strategy: Strategy, x0: float, cfg: SimConfig
) -> SimEstimate:
    """Mean and standard error of the discounted dividends over
    cfg.n_paths independent replicates."""
    crit = critical_level(params)
    if x0 <= crit:
        raise DomainError("start point must be above the critical level")
    smode, anchors, edges, labels, b_top, thr_b = _encode_strategy(params, strategy)
    cmode, nu, kshape, ulo, uhi, sizes, cum = _encode_claims_sim(params)
    t_max = cfg.t_max
    if t_max is None:
        t_max = _default_t_max(params, max(x0, b_top, thr_b), cfg.tail_tol)
    pays, ruined, trunc = _k.estimate_paths(
        np.uint64(cfg.seed),
        cfg.n_paths,
        float(x0),
        params.p,
        params.r,
        params.alpha,
        params.lam,
        params.delta,
        crit,
        smode,
        anchors,
        edges,
        labels,
        b_top,
        thr_b,
        cmode,
        nu,
        kshape,
        ulo,
        uhi,
        sizes,
        cum,
        cfg.tail_tol,
        t_max,
    )
    n = cfg.n_paths
    mean = float(np.sum(pays) / n)
    if n > 1:
        std_err = float(np.sqrt(np.sum((pays - mean) ** 2) / (n - 1) / n))
    else:
        std_err = 0.0
    return SimEstimate(
        mean=mean,
        std_err=std_err,
        n=n,
        trunc_bound=float(np.max(trunc)),
        ruin_fraction=float(np.sum(ruined) / n),
    )


def dominance_check(
    params: ModelParams,
    V: ValueGrid,
    strategies: list,
    x0s: list,
    cfg: SimConfig,
    tol: float | None = None,
) -> dict:
    """Monte Carlo dominance test: no admissible strategy may beat the
    solver's V beyond noise, and the strategy tagged 'band' (the claimed
    optimum) must match V two-sidedly.

    Returns {"rows": [...], "ok": bool}; each row holds x0, strategy name,
    mean, std_err, the solver value, and the pass flag."""
    scale = float(V.values[-1])
    if tol is None:
        tol = 1e-3 * scale
    rows = []
    ok = True
    for strat in strategies:
        for x0 in x0s:
            est = estimate_return(params, strat, float(x0), cfg)
            v = float(value_at(params, V, float(x0)))
            margin = 3.0 * est.std_err + tol
            if strat.kind == "band":
                passed = abs(est.mean - v) <= margin
            else:
                passed = est.mean <= v + margin
            ok = ok and passed
            rows.append(
                {
                    "x0": float(x0),
                    "strategy": strat.name,
                    "mean": est.mean,
                    "std_err": est.std_err,
                    "V": v,
                    "pass": bool(passed),
                }
            )
    return {"rows": rows, "ok": ok}
