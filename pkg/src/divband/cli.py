"""Batch front end: solve / verify / simulate / oracle.

Configuration is a strict JSON document (unknown keys are errors); outputs
are byte-stable CSV and JSON artifacts so downstream tooling can diff
runs. Exit codes: 0 success, 2 configuration error, 3 solver
certification failure, 4 verification failure.

Config schema (defaults in parentheses):

    {
      "model": {
        "p": premium rate, "lam": claim arrival rate, "r": credit interest,
        "alpha": debit interest, "delta": discount rate,
        "claims": {"type": "exponential", "rate": ...}
                | {"type": "erlang", "rate": ..., "shape": ...}
                | {"type": "uniform", "lo": ..., "hi": ...}
                | {"type": "atoms", "sizes": [...], "probs": [...]}
                | {"type": "point_mass_zero"}
      },
      "grid": {"dx": step (2e-3), "x_hi": number or "auto" ("auto"),
               "eps_c": offset of the first node above the critical level
                        (1e-6 * p/alpha)},
      "solver": {"max_bands": (8), "tol_region": (1e-3), "tol_hjb": (null)},
      "sim": {"n_paths": (200000), "seed": (1), "tail_tol": (1e-6),
              "t_max": (null), "x0_list": ([0.0]),
              "strategies": (["optimal"]),
              "probe_strategies": (["take_all", "none", "barrier+0.5",
                                    "barrier-0.5", "threshold"])},
      "oracle": {"n": (1000), "dt": (1e-4), "x_hi": (b_top + 8),
                 "iters": (5000000), "tol": (1e-8)},
      "verify": {"run_oracle": (true), "run_mc": (true),
                 "oracle_tol": (5e-3, scaled by V(x_hi))}
    }

Strategy names: "optimal" (the solver's band strategy), "take_all",
"none", "barrier"/"threshold" with an optional signed offset relative to
the solved b_top (e.g. "barrier-0.5"), or "barrier@2.5"/"threshold@2.5"
for an absolute level.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import _kernels as _k
from .hjb import (
    CertificationError,
    ClassificationError,
    SolveOptions,
    build_value,
    hjb_residual,
    strategy_from_labels,
    t_fixed_point_sup,
    value_iteration_oracle,
)
from .model import (
    ClaimDistribution,
    DomainError,
    Grid,
    ModelParams,
    ValueGrid,
    make_grid,
    validate,
    value_at,
)
from .sim import SimConfig, Strategy, dominance_check, estimate_return

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4

_REGION_NAME = {_k.SEG_A: "A", _k.SEG_B: "B", _k.SEG_C: "C"}
_REGION_CODE = {"A": _k.SEG_A, "B": _k.SEG_B, "C": _k.SEG_C}


class ConfigError(ValueError):
    pass


def _section(cfg: dict, name: str, required: bool = False) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing config section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(sec)


def _pop(sec: dict, key: str, default=None, required: bool = False):
    if key not in sec:
        if required:
            raise ConfigError(f"missing config key {key!r}")
        return default
    return sec.pop(key)

def _no_leftovers(sec: dict, where: str) -> None:
    if sec:
        raise ConfigError(f"unknown config keys in {where}: {sorted(sec)}")


def _parse_claims(obj) -> ClaimDistribution:
    if not isinstance(obj, dict):
        raise ConfigError("model.claims must be an object")
    obj = dict(obj)
    kind = _pop(obj, "type", required=True)
    if kind == "exponential":
        c = ClaimDistribution.exponential(_pop(obj, "rate", required=True))
    elif kind == "erlang":
        c = ClaimDistribution.erlang(
            _pop(obj, "shape", required=True), _pop(obj, "rate", required=True)
        )
    elif kind == "uniform":
        c = ClaimDistribution.uniform(
            _pop(obj, "lo", required=True), _pop(obj, "hi", required=True)
        )
    elif kind == "atoms":
        c = ClaimDistribution.discrete(
            list(
                zip(
                    _pop(obj, "sizes", required=True),
                    _pop(obj, "probs", required=True),
                )
            )
        )
    elif kind == "point_mass_zero":
        c = ClaimDistribution.point_mass_zero()
    else:
        raise ConfigError(f"unknown claims type {kind!r}")
    _no_leftovers(obj, "model.claims")
    return c


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    known = {"model", "grid", "solver", "sim", "oracle", "verify"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _params_from(cfg: dict) -> ModelParams:
    m = _section(cfg, "model", required=True)
    params = ModelParams(
        p=float(_pop(m, "p", required=True)),
        lam=float(_pop(m, "lam", required=True)),
        r=float(_pop(m, "r", required=True)),
        alpha=float(_pop(m, "alpha", required=True)),
        delta=float(_pop(m, "delta", required=True)),
        claims=_parse_claims(_pop(m, "claims", required=True)),
    )
    _no_leftovers(m, "model")
    return params


def _solve_opts_from(cfg: dict) -> SolveOptions:
    g = _section(cfg, "grid")
    s = _section(cfg, "solver")
    x_hi = _pop(g, "x_hi", "auto")
    opts = SolveOptions(
        max_bands=int(_pop(s, "max_bands", 8)),
        tol_region=float(_pop(s, "tol_region", 1e-3)),
        tol_hjb=_pop(s, "tol_hjb", None),
        dx=float(_pop(g, "dx", 2e-3)),
        eps_c=_pop(g, "eps_c", None),
        x_hi=None if x_hi == "auto" else float(x_hi),
    )
    if opts.tol_hjb is not None:
        opts.tol_hjb = float(opts.tol_hjb)
    if opts.eps_c is not None:
        opts.eps_c = float(opts.eps_c)
    _no_leftovers(g, "grid")
    _no_leftovers(s, "solver")
    return opts


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_grid_csv(path: Path, xs, V, dV, lv, gv, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("x,V,dV,L_V,G_V,region\n")
        for i in range(xs.size):
            f.write(
                ",".join(
                    (
                        _fmt(xs[i]),
                        _fmt(V[i]),
                        _fmt(dV[i]),
                        _fmt(lv[i]),
                        _fmt(gv[i]),
                        _REGION_NAME[int(labels[i])],
                    )
                )
                + "\n"
            )


def _read_grid_csv(path: Path):
    xs, V, dV, labels = [], [], [], []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            xs.append(float(row["x"]))
            V.append(float(row["V"]))
            dV.append(float(row["dV"]))
            labels.append(_REGION_CODE[row["region"]])
    xs = np.asarray(xs)
    return xs, np.asarray(V), np.asarray(dV), np.asarray(labels, dtype=np.int64)


def run_solve(cfg: dict, out: Path) -> int:
    params = _params_from(cfg)
    diag = validate(params)
    if not diag.ok:
        print("config error: " + "; ".join(diag.violations), file=sys.stderr)
        return EXIT_CONFIG
    opts = _solve_opts_from(cfg)
    out.mkdir(parents=True, exist_ok=True)
    try:
        V, strategy, report = build_value(params, None, opts)
    except CertificationError as e:
        rep = e.report
        _write_json(
            out / "bands.json",
            {
                "error": str(e),
                "hjb_sup": None if rep is None else rep.hjb_sup,
                "warnings": [] if rep is None else rep.warnings,
            },
        )
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    xs = V.grid.nodes()
    res = hjb_residual(params, V, tol_hjb=opts.tol_hjb)
    _write_grid_csv(
        out / "grid.csv", xs, V.values, V.deriv, res.lv, res.gv, strategy.node_labels
    )
    _write_json(
        out / "bands.json",
        {
            "anchors": [float(a) for a in strategy.anchors],
            "b_top": strategy.b_top,
            "x_lo": float(V.grid.x_lo),
            "dx": float(V.grid.step),
            "x_hi": float(V.grid.x_hi),
            "hjb_sup": report.hjb_sup,
            "tol_hjb": report.tol_hjb,
            "scale": report.scale,
            "envelope_ok": report.envelope_ok,
            "growth_ok": report.growth_ok,
            "super_solution_ok": report.super_ok,
            "region_counts": report.region_counts,
            "warnings": list(report.warnings) + list(diag.warnings),
        },
    )
    return EXIT_OK


def _load_solution(cfg: dict, out: Path):
    params = _params_from(cfg)
    grid_path = out / "grid.csv"
    bands_path = out / "bands.json"
    if not grid_path.exists() or not bands_path.exists():
        return params, None, None, None
    xs, vals, dV, labels = _read_grid_csv(grid_path)
    with open(bands_path, encoding="utf-8") as f:
        bands = json.load(f)
    grid = Grid(x_lo=float(xs[0]), step=float(xs[1] - xs[0]), n=xs.size)
    V = ValueGrid(
        grid=grid,
        values=vals,
        deriv=dV,
        kind="value_v",
        boundary_exponent=params.boundary_exponent,
    )
    strategy = strategy_from_labels(
        params, xs, labels, np.asarray(bands["anchors"], dtype=float)
    )
    return params, V, strategy, bands


def _ensure_solution(cfg: dict, out: Path):
    params, V, strategy, bands = _load_solution(cfg, out)
    if V is None:
        code = run_solve(cfg, out)
        if code != EXIT_OK:
            raise CertificationError(f"solve step failed with exit code {code}")
        params, V, strategy, bands = _load_solution(cfg, out)
    return params, V, strategy, bands


def _parse_strategy(name: str, b_top: float | None) -> Strategy:
    if name == "optimal":
        raise ConfigError("'optimal' strategy is resolved by the caller")
    if name == "take_all":
        return Strategy.take_all()
    if name == "none":
        return Strategy.none()
    for kind in ("barrier", "threshold"):
        if name.startswith(kind):
            rest = name[len(kind) :]
            if rest.startswith("@"):
                level = float(rest[1:])
            else:
                if b_top is None:
                    raise ConfigError(
                        f"strategy {name!r} is relative to b_top; no solve available"
                    )
                level = b_top + (float(rest) if rest else 0.0)
            return Strategy.barrier(level) if kind == "barrier" else Strategy.threshold(level)
    raise ConfigError(f"unknown strategy {name!r}")


def _sim_cfg_from(cfg: dict, overrides: dict):
    s = _section(cfg, "sim")
    sim = SimConfig(
        n_paths=int(overrides.get("paths") or _pop(s, "n_paths", 200_000)),
        seed=int(overrides.get("seed") or _pop(s, "seed", 1)),
        tail_tol=float(_pop(s, "tail_tol", 1e-6)),
        t_max=_pop(s, "t_max", None),
    )
    if overrides.get("paths"):
        _pop(s, "n_paths", None)
    if overrides.get("seed"):
        _pop(s, "seed", None)
    if sim.t_max is not None:
        sim.t_max = float(sim.t_max)
    x0_list = overrides.get("x0") or _pop(s, "x0_list", [0.0])
    if overrides.get("x0"):
        _pop(s, "x0_list", None)
    names = _pop(s, "strategies", ["optimal"])
    probes = _pop(
        s,
        "probe_strategies",
        ["take_all", "none", "barrier+0.5", "barrier-0.5", "threshold"],
    )
    _no_leftovers(s, "sim")
    return sim, [float(v) for v in x0_list], list(names), list(probes)


def run_simulate(cfg: dict, out: Path, overrides: dict) -> int:
    sim, x0_list, names, _ = _sim_cfg_from(cfg, overrides)
    out.mkdir(parents=True, exist_ok=True)
    needs_solve = any(n == "optimal" or ("@" not in n and n not in ("take_all", "none")) for n in names)
    if needs_solve:
        params, V, band_strategy, _bands = _ensure_solution(cfg, out)
        b_top = band_strategy.b_top
    else:
        params = _params_from(cfg)
        band_strategy, b_top = None, None
    rows = []
    for name in names:
        strat = (
            Strategy.from_bands(band_strategy)
            if name == "optimal"
            else _parse_strategy(name, b_top)
        )
        for x0 in x0_list:
            est = estimate_return(params, strat, x0, sim)
            rows.append((name, x0, est))
    with open(out / "sim.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("strategy,x0,mean,std_err,n,trunc_bound,ruin_fraction\n")
        for name, x0, est in rows:
            f.write(
                f"{name},{_fmt(x0)},{_fmt(est.mean)},{_fmt(est.std_err)},"
                f"{est.n},{_fmt(est.trunc_bound)},{_fmt(est.ruin_fraction)}\n"
            )
    return EXIT_OK


def _oracle_cfg_from(cfg: dict, b_top: float | None):
    o = _section(cfg, "oracle")
    n = int(_pop(o, "n", 1000))
    dt = float(_pop(o, "dt", 1e-4))
    x_hi = _pop(o, "x_hi", None)
    iters = int(_pop(o, "iters", 5_000_000))
    tol = float(_pop(o, "tol", 1e-8))
    _no_leftovers(o, "oracle")
    if x_hi is None:
        if b_top is None:
            raise ConfigError("oracle.x_hi is required when no solve output exists")
        x_hi = b_top + 8.0
    return n, dt, float(x_hi), iters, tol


def _run_oracle_grid(params: ModelParams, cfg: dict, b_top: float | None):
    n, dt, x_hi, iters, tol = _oracle_cfg_from(cfg, b_top)
    from .model import critical_level

    eps = 1e-6 * params.p / params.alpha
    dx = (x_hi - (critical_level(params) + eps)) / (n - 1)
    grid = make_grid(params, dx, x_hi, eps)
    return value_iteration_oracle(params, grid, dt, iters=iters, tol=tol)


def run_oracle(cfg: dict, out: Path) -> int:
    params = _params_from(cfg)
    _p, _v, strategy, _b = _load_solution(cfg, out)
    b_top = strategy.b_top if strategy is not None else None
    vg = _run_oracle_grid(params, cfg, b_top)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "oracle.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("x,V\n")
        xs = vg.grid.nodes()
        for i in range(xs.size):
            f.write(f"{_fmt(xs[i])},{_fmt(vg.values[i])}\n")
    return EXIT_OK


def run_verify(cfg: dict, out: Path, overrides: dict) -> int:
    params, V, strategy, bands = _load_solution(cfg, out)
    if V is None:
        print("verify error: no solve output in the output directory", file=sys.stderr)
        return EXIT_CONFIG
    v = _section(cfg, "verify")
    do_oracle = bool(_pop(v, "run_oracle", True))
    do_mc = bool(_pop(v, "run_mc", True))
    oracle_tol_rel = float(_pop(v, "oracle_tol", 5e-3))
    _no_leftovers(v, "verify")
    opts = _solve_opts_from(cfg)

    report = hjb_residual(params, V, tol_hjb=opts.tol_hjb)
    scale = report.scale
    checks = {
        "hjb": report.hjb_sup <= report.tol_hjb and report.super_ok,
        "envelope": report.envelope_ok,
        "growth": report.growth_ok,
    }
    result = {
        "hjb_sup": report.hjb_sup,
        "tol_hjb": report.tol_hjb,
        "T_fixed_sup": None,
        "oracle_gap": None,
        "mc_table": [],
        "warnings": list(report.warnings),
    }

    try:
        t_sup = t_fixed_point_sup(params, V, strategy)
        result["T_fixed_sup"] = t_sup
        checks["t_fixed"] = t_sup <= report.tol_hjb
    except (DomainError, ClassificationError) as e:
        result["warnings"].append(f"fixed-point sweep failed: {e}")
        checks["t_fixed"] = False

    if do_oracle:
        vg = _run_oracle_grid(params, cfg, strategy.b_top)
        ref = np.array([value_at(params, V, float(x)) for x in vg.grid.nodes()])
        gap = float(np.max(np.abs(vg.values - ref)))
        result["oracle_gap"] = gap
        checks["oracle"] = gap <= oracle_tol_rel * scale

    if do_mc:
        sim, x0_list, _names, probes = _sim_cfg_from(cfg, overrides)
        strategies = [Strategy.from_bands(strategy)] + [
            _parse_strategy(p, strategy.b_top) for p in probes
        ]
        mc = dominance_check(params, V, strategies, x0_list, sim, tol=1e-3 * scale)
        result["mc_table"] = mc["rows"]
        checks["mc"] = mc["ok"]

    result["checks"] = {k: bool(ok) for k, ok in sorted(checks.items())}
    all_ok = all(checks.values())
    result["pass"] = bool(all_ok)
    _write_json(out / "verify.json", result)
    if not all_ok:
        failed = sorted(k for k, ok in checks.items() if not ok)
        print(f"verification failed: {failed}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="divband",
        description="Optimal dividend bands under credit and debit interest: "
        "solve, verify, simulate, oracle.",
    )
    parser.add_argument("command", choices=["solve", "verify", "simulate", "oracle"])
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override sim seed")
    parser.add_argument("--paths", type=int, default=None, help="override sim n_paths")
    parser.add_argument(
        "--x0", default=None, help="override sim start points (comma-separated)"
    )
    args = parser.parse_args(argv)
    overrides = {
        "seed": args.seed,
        "paths": args.paths,
        "x0": [float(v) for v in args.x0.split(",")] if args.x0 else None,
    }
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        if args.command == "solve":
            return run_solve(cfg, out)
        if args.command == "verify":
            return run_verify(cfg, out, overrides)
        if args.command == "simulate":
            return run_simulate(cfg, out, overrides)
        return run_oracle(cfg, out)
    except (ConfigError, DomainError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificationError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
