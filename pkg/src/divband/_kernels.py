"""JIT-compiled numerical kernels: integro-ODE marching, value iteration,
and the event-driven Monte Carlo path loop.

Everything here is deterministic. The Monte Carlo kernels use a
counter-based RNG (splitmix64 finalizer over a per-replicate key), so a
replicate's draws depend only on (seed, replicate index, draw counter) and
results are bit-identical for any execution order or thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# claim-law encodings for the ODE marches
CLAIMS_ATOMS = 0
CLAIMS_EXP = 1
CLAIMS_DENSITY = 2

# claim-law encodings for the simulator
SIM_ATOMS = 0
SIM_EXP = 1
SIM_ERLANG = 2
SIM_UNIFORM = 3

# strategy encodings for the simulator
STRAT_BAND = 0
STRAT_THRESHOLD = 1
STRAT_TAKE_ALL = 2
STRAT_NONE = 3

SEG_A = 0
SEG_B = 1
SEG_C = 2


# ----------------------------------------------------------------------
# counter-based RNG
# ----------------------------------------------------------------------

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_CTRM = np.uint64(0xDA942042E4DD58B5)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix64(z):
    z = (z + _GOLD) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, replicate):
    return _mix64(_mix64(np.uint64(seed)) + np.uint64(replicate) * _CTRM)


@njit(cache=True)
def _u01(key, ctr):
    z = _mix64(key ^ (np.uint64(ctr) * _CTRM))
    return float(z >> np.uint64(11)) * _INV53


# ----------------------------------------------------------------------
# shared pieces
# ----------------------------------------------------------------------


@njit(cache=True)
def _interp_value(y, xs, vals, top, crit, eps, beta):
    """Value at y given committed nodes xs[0..top] plus power-law decay to
    zero at the critical level and linear interpolation between nodes."""
    if y <= crit:
        return 0.0
    if y < xs[0]:
        return vals[0] * ((y - crit) / eps) ** beta
    j = int((y - xs[0]) / (xs[1] - xs[0]))
    if j >= top:
        j = top - 1
    w = (y - xs[j]) / (xs[1] - xs[0])
    return vals[j] * (1.0 - w) + vals[j + 1] * w


@njit(cache=True)
def _ci_cont_atoms(x, xs, vals, top, crit, eps, beta, sizes, probs):
    """Claim integral excluding a possible atom at zero; atoms beyond the
    distance to ruin contribute zero."""
    span = x - crit
    acc = 0.0
    for k in range(sizes.size):
        if 0.0 < sizes[k] < span:
            acc += probs[k] * _interp_value(x - sizes[k], xs, vals, top, crit, eps, beta)
    return acc


@njit(cache=True)
def _ci_density(i, vals, vtop, fgrid, dx, eps):
    """Composite trapezoid of V(x_i - u) * f(u) over u in [0, i*dx + eps],
    with vtop standing in for V at node i (stage value during marching)."""
    if i == 0:
        return 0.5 * eps * vals[0] * fgrid[0]
    acc = 0.5 * (vtop * fgrid[0] + vals[0] * fgrid[i])
    for j in range(1, i):
        acc += vals[i - j] * fgrid[j]
    acc *= dx
    acc += 0.5 * eps * vals[0] * fgrid[i]
    return acc


# ----------------------------------------------------------------------
# forward marches for the integro-ODE
# ----------------------------------------------------------------------


@njit(cache=True)
def march_homogeneous(
    xs,
    crit,
    p,
    r,
    alpha,
    lam,
    delta,
    beta,
    a0,
    cmode,
    nu,
    sizes,
    probs,
    fgrid,
    w0,
    overflow,
):
    """Heun (RK2) march of the homogeneous solution W of the generator
    equation, seeded with W = w0 at the first node.

    Below zero the scheme advances g in W = s**beta * g (s = distance to
    the critical level); g has a bounded, slowly varying derivative there,
    so uniform steps stay second order across the power-law layer. At and
    above zero it advances W directly.

    Returns (W, dW, error_node); error_node >= 0 flags overflow there.
    """
    n = xs.size
    dx = xs[1] - xs[0]
    eps = xs[0] - crit
    W = np.zeros(n)
    dW = np.zeros(n)
    W[0] = w0
    g = w0 / eps**beta
    ld = lam + delta
    enu = np.exp(-nu * dx) if cmode == CLAIMS_EXP else 0.0
    T = 0.5 * eps * nu * w0 if cmode == CLAIMS_EXP else 0.0  # trapezoid CI accumulator

    for i in range(n - 1):
        x0 = xs[i]
        x1 = xs[i + 1]
        s0 = x0 - crit
        s1 = x1 - crit

        # continuous/positive-atom part of the claim integral at x0
        if cmode == CLAIMS_EXP:
            ci0 = T
        elif cmode == CLAIMS_ATOMS:
            ci0 = _ci_cont_atoms(x0, xs, W, i, crit, eps, beta, sizes, probs)
        else:
            ci0 = _ci_density(i, W, W[i], fgrid, dx, eps)

        if x1 < 0.0:
            # g-march: g' = -lam * ci_cont / (alpha * s**(1+beta))
            k1 = -lam * ci0 / (alpha * s0 ** (1.0 + beta))
            gp = g + dx * k1
            wpred = s1**beta * gp
            if cmode == CLAIMS_EXP:
                ci1 = enu * T + 0.5 * nu * dx * (wpred + enu * W[i])
            elif cmode == CLAIMS_ATOMS:
                W[i + 1] = wpred
                ci1 = _ci_cont_atoms(x1, xs, W, i + 1, crit, eps, beta, sizes, probs)
            else:
                ci1 = _ci_density(i + 1, W, wpred, fgrid, dx, eps)
            k2 = -lam * ci1 / (alpha * s1 ** (1.0 + beta))
            dW[i] = beta * W[i] / s0 + s0**beta * k1
            g = g + 0.5 * dx * (k1 + k2)
            W[i + 1] = s1**beta * g
        else:
            # plain Heun on W; drift is smooth and bounded away from zero
            d0 = p + (r * x0 if x0 >= 0.0 else alpha * x0)
            d1 = p + (r * x1 if x1 >= 0.0 else alpha * x1)
            k1 = (ld * W[i] - lam * (a0 * W[i] + ci0)) / d0
            wpred = W[i] + dx * k1
            if cmode == CLAIMS_EXP:
                ci1 = enu * T + 0.5 * nu * dx * (wpred + enu * W[i])
            elif cmode == CLAIMS_ATOMS:
                W[i + 1] = wpred
                ci1 = _ci_cont_atoms(x1, xs, W, i + 1, crit, eps, beta, sizes, probs)
            else:
                ci1 = _ci_density(i + 1, W, wpred, fgrid, dx, eps)
            k2 = (ld * wpred - lam * (a0 * wpred + ci1)) / d1
            dW[i] = k1
            W[i + 1] = W[i] + 0.5 * dx * (k1 + k2)
            g = W[i + 1] / s1**beta

        if not np.isfinite(W[i + 1]) or W[i + 1] > overflow:
            return W, dW, i + 1
        if cmode == CLAIMS_EXP:
            T = enu * T + 0.5 * nu * dx * (W[i + 1] + enu * W[i])

    # right-derivative at the last node from the equation itself
    i = n - 1
    if cmode == CLAIMS_EXP:
        ci0 = T
    elif cmode == CLAIMS_ATOMS:
        ci0 = _ci_cont_atoms(xs[i], xs, W, i, crit, eps, beta, sizes, probs)
    else:
        ci0 = _ci_density(i, W, W[i], fgrid, dx, eps)
    d0 = p + (r * xs[i] if xs[i] >= 0.0 else alpha * xs[i])
    dW[i] = (ld * W[i] - lam * (a0 * W[i] + ci0)) / d0
    return W, dW, -1


@njit(cache=True)
def march_patched(
    xs,
    i0,
    vals,
    crit,
    p,
    r,
    alpha,
    lam,
    delta,
    beta,
    a0,
    cmode,
    nu,
    sizes,
    probs,
    fgrid,
    overflow,
):
    """Heun march of the patched equation from node i0 upward.

    vals holds the frozen value function at nodes <= i0 (the march reads
    but never writes them); the claim integral therefore splits naturally
    into the solved part above i0 and the frozen part below. Returns
    (u_values, u_deriv, error_node) on the full grid; entries below i0
    are a copy of the frozen input.
    """
    n = xs.size
    dx = xs[1] - xs[0]
    eps = xs[0] - crit
    U = vals.copy()
    dU = np.zeros(n)
    ld = lam + delta
    enu = np.exp(-nu * dx) if cmode == CLAIMS_EXP else 0.0
    T = 0.0
    if cmode == CLAIMS_EXP:
        T = 0.5 * eps * nu * U[0]
        for i in range(1, i0 + 1):
            T = enu * T + 0.5 * nu * dx * (U[i] + enu * U[i - 1])

    for i in range(i0, n - 1):
        x0 = xs[i]
        x1 = xs[i + 1]
        if cmode == CLAIMS_EXP:
            ci0 = T
        elif cmode == CLAIMS_ATOMS:
            ci0 = _ci_cont_atoms(x0, xs, U, i, crit, eps, beta, sizes, probs)
        else:
            ci0 = _ci_density(i, U, U[i], fgrid, dx, eps)
        d0 = p + (r * x0 if x0 >= 0.0 else alpha * x0)
        d1 = p + (r * x1 if x1 >= 0.0 else alpha * x1)
        k1 = (ld * U[i] - lam * (a0 * U[i] + ci0)) / d0
        upred = U[i] + dx * k1
        if cmode == CLAIMS_EXP:
            ci1 = enu * T + 0.5 * nu * dx * (upred + enu * U[i])
        elif cmode == CLAIMS_ATOMS:
            U[i + 1] = upred
            ci1 = _ci_cont_atoms(x1, xs, U, i + 1, crit, eps, beta, sizes, probs)
        else:
            ci1 = _ci_density(i + 1, U, upred, fgrid, dx, eps)
        k2 = (ld * upred - lam * (a0 * upred + ci1)) / d1
        dU[i] = k1
        U[i + 1] = U[i] + 0.5 * dx * (k1 + k2)
        if not np.isfinite(U[i + 1]) or U[i + 1] > overflow:
            return U, dU, i + 1
        if cmode == CLAIMS_EXP:
            T = enu * T + 0.5 * nu * dx * (U[i + 1] + enu * U[i])

    i = n - 1
    if cmode == CLAIMS_EXP:
        ci0 = T
    elif cmode == CLAIMS_ATOMS:
        ci0 = _ci_cont_atoms(xs[i], xs, U, i, crit, eps, beta, sizes, probs)
    else:
        ci0 = _ci_density(i, U, U[i], fgrid, dx, eps)
    d0 = p + (r * xs[i] if xs[i] >= 0.0 else alpha * xs[i])
    dU[i] = (ld * U[i] - lam * (a0 * U[i] + ci0)) / d0
    return U, dU, -1


# ----------------------------------------------------------------------
# value-iteration oracle
# ----------------------------------------------------------------------


@njit(cache=True)
def _ci_sweep_kernel(xs, V, crit, eps, beta, a0, cmode, nu, sizes, probs, fgrid, out):
    n = xs.size
    dx = xs[1] - xs[0]
    if cmode == CLAIMS_EXP:
        enu = np.exp(-nu * dx)
        t = 0.5 * eps * nu * V[0]
        out[0] = t
        for i in range(1, n):
            t = enu * t + 0.5 * nu * dx * (V[i] + enu * V[i - 1])
            out[i] = t
    elif cmode == CLAIMS_ATOMS:
        for i in range(n):
            out[i] = a0 * V[i] + _ci_cont_atoms(
                xs[i], xs, V, i, crit, eps, beta, sizes, probs
            )
    else:
        for i in range(n):
            out[i] = _ci_density(i, V, V[i], fgrid, dx, eps)


@njit(cache=True)
def value_iteration(
    xs,
    crit,
    eps,
    beta,
    a0,
    cmode,
    nu,
    sizes,
    probs,
    fgrid,
    lam,
    delta,
    dt,
    iters,
    tol,
    flow_j,
    flow_w,
    flow_y,
    V0,
):
    """Discretised dynamic-programming iteration.

    Each sweep takes the max of the lump-dividend branch (left neighbour
    plus the step) and the no-claim continuation over a dt horizon with a
    one-panel trapezoid for the claim-arrival integral. flow_j/flow_w are
    precomputed interpolation stencils for the claim-free motion over dt
    (weights above 1 extrapolate linearly past the last node).

    Returns (V, iterations_used, last_sup_change).
    """
    n = xs.size
    dx = xs[1] - xs[0]
    e1 = np.exp(-(lam + delta) * dt)
    V = V0.copy()
    Vn = np.empty(n)
    CI = np.empty(n)
    last = np.inf
    it = 0
    while it < iters:
        _ci_sweep_kernel(xs, V, crit, eps, beta, a0, cmode, nu, sizes, probs, fgrid, CI)
        last = 0.0
        prev = eps  # value of paying down to the ruin level from node 0
        for i in range(n):
            j = flow_j[i]
            w = flow_w[i]
            vf = V[j] * (1.0 - w) + V[j + 1] * w
            cif = CI[j] * (1.0 - w) + CI[j + 1] * w
            y = flow_y[i]
            if y < 0.0 and y > xs[0]:
                # boundary layer: the value behaves like a power of the
                # distance to the critical level, so interpolate in
                # log-log coordinates where the data allow it
                lw = np.log((y - crit) / (xs[j] - crit)) / np.log(
                    (xs[j + 1] - crit) / (xs[j] - crit)
                )
                if V[j] > 0.0 and V[j + 1] > 0.0:
                    vf = np.exp(np.log(V[j]) * (1.0 - lw) + np.log(V[j + 1]) * lw)
                if CI[j] > 0.0 and CI[j + 1] > 0.0:
                    cif = np.exp(np.log(CI[j]) * (1.0 - lw) + np.log(CI[j + 1]) * lw)
            cont = e1 * vf + 0.5 * dt * lam * (CI[i] + e1 * cif)
            lump = prev + dx if i > 0 else eps
            v = cont if cont > lump else lump
            Vn[i] = v
            prev = v
            d = v - V[i]
            if d < 0.0:
                d = -d
            if d > last:
                last = d
        V, Vn = Vn, V
        it += 1
        if last < tol:
            break
    return V, it, last


# ----------------------------------------------------------------------
# Monte Carlo simulation
# ----------------------------------------------------------------------


@njit(cache=True)
def _reach_time(p, r, alpha, x, y):
    if y <= x:
        return 0.0
    if x >= 0.0:
        return np.log((r * y + p) / (r * x + p)) / r
    if y <= 0.0:
        return np.log((alpha * y + p) / (alpha * x + p)) / alpha
    return np.log((r * y + p) / p) / r + np.log(p / (alpha * x + p)) / alpha


@njit(cache=True)
def _flow(p, r, alpha, x, t):
    if x < 0.0:
        t_cross = np.log(p / (alpha * x + p)) / alpha
        if t <= t_cross:
            return (x + p / alpha) * np.exp(alpha * t) - p / alpha
        x = 0.0
        t = t - t_cross
    return ((p + r * x) * np.exp(r * t) - p) / r


@njit(cache=True)
def _drift(p, r, alpha, x):
    return p + (r * x if x >= 0.0 else alpha * x)


@njit(cache=True)
def _draw_claim(key, ctr, cmode, nu, kshape, ulo, uhi, sizes, cum):
    """Returns (claim_size, new_counter). Inverse-CDF draws; an Erlang
    claim is the sum of its shape-many exponential stages."""
    if cmode == SIM_EXP:
        u = _u01(key, ctr)
        return -np.log1p(-u) / nu, ctr + 1
    if cmode == SIM_ERLANG:
        total = 0.0
        for _ in range(kshape):
            u = _u01(key, ctr)
            ctr += 1
            total += -np.log1p(-u) / nu
        return total, ctr
    if cmode == SIM_UNIFORM:
        u = _u01(key, ctr)
        return ulo + (uhi - ulo) * u, ctr + 1
    u = _u01(key, ctr)
    for k in range(cum.size):
        if u <= cum[k]:
            return sizes[k], ctr + 1
    return sizes[cum.size - 1], ctr + 1


@njit(cache=True)
def sim_path(
    key,
    x0,
    p,
    r,
    alpha,
    lam,
    delta,
    crit,
    smode,
    anchors,
    seg_edges,
    seg_labels,
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
):
    """One controlled path. Exact event-driven arithmetic: claim-free
    motion uses the closed-form flow, held intervals use the closed-form
    discounted dividend stream; no time discretisation.

    Returns (discounted_dividends, ruin_time(-1 if censored),
    truncation_bound, max_reserve_after_first_dividend).
    """
    envc = delta / (delta - r)
    env0 = p / (delta - r) + p / alpha

    if smode == STRAT_TAKE_ALL:
        if x0 <= crit:
            return 0.0, 0.0, 0.0, crit
        return x0 - crit, 0.0, 0.0, crit

    t = 0.0
    pay = 0.0
    x = x0
    ctr = 0
    paid = False
    maxlev = crit
    trunc = 0.0
    while True:
        if paid and x > maxlev:
            maxlev = x
        disc = np.exp(-delta * t)
        ref = x
        if smode == STRAT_BAND and b_top > ref:
            ref = b_top
        if smode == STRAT_THRESHOLD and thr_b > ref:
            ref = thr_b
        bound = disc * (envc * (ref if ref > 0.0 else 0.0) + env0)
        if bound <= tail_tol or t >= t_max:
            trunc = bound
            return pay, -1.0, trunc, maxlev

        if smode == STRAT_BAND and anchors.size > 0:
            # locate segment label
            j = np.searchsorted(seg_edges, x, side="right") - 1
            if j < 0:
                j = 0
            if j >= seg_labels.size:
                j = seg_labels.size - 1
            lab = seg_labels[j]
            if lab == SEG_B:
                # lump down to the largest anchor at or below x
                ka = np.searchsorted(anchors, x) - 1
                if ka >= 0 and x > anchors[ka]:
                    pay += disc * (x - anchors[ka])
                    x = anchors[ka]
                    paid = True
            elif lab == SEG_A:
                # A segments are anchor points smeared by the tolerance;
                # snap to the nearest anchor (down as an immediate lump,
                # up via the hold-target drift below)
                ka = np.searchsorted(anchors, x) - 1
                lo_gap = x - anchors[ka] if ka >= 0 else np.inf
                hi_gap = anchors[ka + 1] - x if ka + 1 < anchors.size else np.inf
                if lo_gap <= hi_gap and 0.0 < lo_gap < np.inf:
                    pay += disc * lo_gap
                    x = anchors[ka]
                    paid = True

        u = _u01(key, ctr)
        ctr += 1
        E = -np.log1p(-u) / lam

        # hold target for this inter-claim interval
        have_target = False
        a = 0.0
        if smode == STRAT_BAND and anchors.size > 0:
            ka = np.searchsorted(anchors, x)
            if ka < anchors.size:
                a = anchors[ka]
                have_target = True
        elif smode == STRAT_THRESHOLD:
            a = x if x >= thr_b else thr_b
            have_target = True

        if have_target:
            tau = _reach_time(p, r, alpha, x, a)
            if E < tau:
                x = _flow(p, r, alpha, x, E)
            else:
                pay += (
                    np.exp(-delta * (t + tau))
                    * _drift(p, r, alpha, a)
                    * (1.0 - np.exp(-delta * (E - tau)))
                    / delta
                )
                x = a
                paid = True
        else:
            x = _flow(p, r, alpha, x, E)
        t += E

        U, ctr = _draw_claim(key, ctr, cmode, nu, kshape, ulo, uhi, sizes, cum)
        x -= U
        if x <= crit:
            return pay, t, 0.0, maxlev


@njit(cache=True, parallel=True)
def estimate_paths(
    seed,
    n_paths,
    x0,
    p,
    r,
    alpha,
    lam,
    delta,
    crit,
    smode,
    anchors,
    seg_edges,
    seg_labels,
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
):
    pays = np.empty(n_paths)
    ruined = np.zeros(n_paths)
    trunc = np.empty(n_paths)
    for k in prange(n_paths):
        key = stream_key(seed, k)
        pay, rt, tb, _ = sim_path(
            key, x0, p, r, alpha, lam, delta, crit,
            smode, anchors, seg_edges, seg_labels, b_top, thr_b,
            cmode, nu, kshape, ulo, uhi, sizes, cum, tail_tol, t_max,
        )
        pays[k] = pay
        ruined[k] = 1.0 if rt >= 0.0 else 0.0
        trunc[k] = tb
    return pays, ruined, trunc
