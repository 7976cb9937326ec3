"""Jitted integration loops behind the simulation engine.

Everything here is private plumbing: tight, loop-based numba kernels for
the closed-loop continuous dynamics (classical fixed-step RK4), the
zero-order-hold sampled dynamics (exact affine update per sampling
interval), the target-relative polar integrator used as a cross-check
oracle, and the scalar consensus system used for graph diagnostics.

Angle conventions shared by all kernels: the angular spacing of every
sensing edge starts at the wrapped measurement in ``[0, 2*pi)`` and is
kept continuous afterwards by accumulating per-agent bearing increments
(nearest-branch unwrapping between evaluations).  Per-agent bearing series
are unwrapped the same way.  This continuity makes the sum of spacings
around any sensing cycle a conserved quantity, which is structural to the
closed loop, not an implementation detail.

Status codes: 0 = completed, 1 = agent/target separation fell below the
degeneracy threshold, 2 = non-finite state (diverged).
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
DEG_EPS = 1e-9

TARGET_STATIC = 0
TARGET_CONSTANT_VELOCITY = 1
TARGET_SINUSOID = 2
TARGET_WAYPOINTS = 3


@njit(cache=True)
def _wrap_pi(x):
    w = (-x + math.pi) % TWO_PI
    return -(w - math.pi)


@njit(cache=True)
def _wrap_2pi(x):
    w = x % TWO_PI
    if w >= TWO_PI:
        w = 0.0
    return w


@njit(cache=True)
def target_state(kind, prm, t):
    """Analytic target position and exact-derivative velocity at time t."""
    if kind == TARGET_STATIC:
        return prm[0], prm[1], 0.0, 0.0
    if kind == TARGET_CONSTANT_VELOCITY:
        return prm[0] + prm[2] * t, prm[1] + prm[3] * t, prm[2], prm[3]
    if kind == TARGET_SINUSOID:
        # prm: x0, y0, forward speed, amplitude, angular frequency
        return (
            prm[0] + prm[2] * t,
            prm[1] + prm[3] * math.sin(prm[4] * t),
            prm[2],
            prm[3] * prm[4] * math.cos(prm[4] * t),
        )
    # piecewise-linear waypoints; prm is flat [t, x, y] triples, t increasing
    k = prm.shape[0] // 3
    if t <= prm[0]:
        return prm[1], prm[2], 0.0, 0.0
    last = 3 * (k - 1)
    if t >= prm[last]:
        return prm[last + 1], prm[last + 2], 0.0, 0.0
    for s in range(k - 1):
        t0 = prm[3 * s]
        t1 = prm[3 * s + 3]
        if t0 <= t < t1:
            inv = 1.0 / (t1 - t0)
            x0 = prm[3 * s + 1]
            y0 = prm[3 * s + 2]
            vx = (prm[3 * s + 4] - x0) * inv
            vy = (prm[3 * s + 5] - y0) * inv
            return x0 + vx * (t - t0), y0 + vy * (t - t0), vx, vy
    return prm[last + 1], prm[last + 2], 0.0, 0.0


@njit(cache=True)
def _state_ok(pos, tpx, tpy):
    n = pos.shape[0]
    for i in range(n):
        x = pos[i, 0]
        y = pos[i, 1]
        if not (math.isfinite(x) and math.isfinite(y)):
            return 2
        dx = x - tpx
        dy = y - tpy
        if math.sqrt(dx * dx + dy * dy) < DEG_EPS:
            return 1
    return 0


@njit(cache=True)
def _init_angles(pos, tpx, tpy, edge_i, edge_j, alpha_raw, alpha_cont, ahat):
    n = pos.shape[0]
    for i in range(n):
        a = math.atan2(pos[i, 1] - tpy, pos[i, 0] - tpx)
        alpha_raw[i] = a
        alpha_cont[i] = a
    for e in range(edge_i.shape[0]):
        ahat[e] = _wrap_2pi(alpha_raw[edge_j[e]] - alpha_raw[edge_i[e]])


@njit(cache=True)
def _advance_angles(pos, tpx, tpy, edge_i, edge_j, alpha_raw, alpha_cont, ahat,
                    dstep):
    n = pos.shape[0]
    for i in range(n):
        a = math.atan2(pos[i, 1] - tpy, pos[i, 0] - tpx)
        dstep[i] = _wrap_pi(a - alpha_raw[i])
        alpha_raw[i] = a
        alpha_cont[i] += dstep[i]
    for e in range(edge_i.shape[0]):
        ahat[e] += dstep[edge_j[e]] - dstep[edge_i[e]]


@njit(cache=True)
def _store(idx, t, pos, alpha_cont, ahat, tpx, tpy, tvx, tvy,
           out_t, out_pos, out_alpha, out_ahat, out_tpos, out_tvel,
           out_rho, out_minrho, out_minpair):
    n = pos.shape[0]
    out_t[idx] = t
    min_rho = np.inf
    for i in range(n):
        out_pos[idx, i, 0] = pos[i, 0]
        out_pos[idx, i, 1] = pos[i, 1]
        out_alpha[idx, i] = alpha_cont[i]
        dx = pos[i, 0] - tpx
        dy = pos[i, 1] - tpy
        r = math.sqrt(dx * dx + dy * dy)
        out_rho[idx, i] = r
        if r < min_rho:
            min_rho = r
    for e in range(ahat.shape[0]):
        out_ahat[idx, e] = ahat[e]
    out_tpos[idx, 0] = tpx
    out_tpos[idx, 1] = tpy
    out_tvel[idx, 0] = tvx
    out_tvel[idx, 1] = tvy
    out_minrho[idx] = min_rho
    min_pair = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            if dist < min_pair:
                min_pair = dist
    out_minpair[idx] = min_pair


@njit(cache=True)
def _eval_rhs(pos, tpx, tpy, tvx, tvy, alpha_raw_ref, ahat_ref,
              edge_i, edge_j, edge_w, edge_d, radii2,
              lam, gamma, mu, c, dxy, rho2, dalpha, f, out):
    """Closed-loop velocity field at one evaluation point.

    Spacing angles at the evaluation state are the step-start continuous
    values plus the per-agent bearing increments relative to the
    step-start raw bearings, which keeps every tanh argument on the branch
    the agents have been tracking.
    """
    n = pos.shape[0]
    for i in range(n):
        dx = pos[i, 0] - tpx
        dy = pos[i, 1] - tpy
        dxy[i, 0] = dx
        dxy[i, 1] = dy
        rho2[i] = dx * dx + dy * dy
        dalpha[i] = _wrap_pi(math.atan2(dy, dx) - alpha_raw_ref[i])
        f[i] = c
    for e in range(edge_i.shape[0]):
        ahat = ahat_ref[e] + dalpha[edge_j[e]] - dalpha[edge_i[e]]
        f[edge_i[e]] += mu * edge_w[e] * math.tanh(ahat - edge_d[e])
    for i in range(n):
        gl = gamma * (radii2[i] - rho2[i])
        s = lam * f[i]
        out[i, 0] = s * (gl * dxy[i, 0] - mu * dxy[i, 1]) + tvx
        out[i, 1] = s * (mu * dxy[i, 0] + gl * dxy[i, 1]) + tvy


@njit(cache=True)
def run_continuous(pos_init, tkind, tprm, dt, n_steps, out_every,
                   edge_i, edge_j, edge_w, edge_d, radii2,
                   lam, gamma, mu, c):
    n = pos_init.shape[0]
    ne = edge_i.shape[0]
    n_out = n_steps // out_every + 1
    out_t = np.empty(n_out)
    out_pos = np.empty((n_out, n, 2))
    out_alpha = np.empty((n_out, n))
    out_ahat = np.empty((n_out, ne))
    out_tpos = np.empty((n_out, 2))
    out_tvel = np.empty((n_out, 2))
    out_rho = np.empty((n_out, n))
    out_minrho = np.empty(n_out)
    out_minpair = np.empty(n_out)

    pos = pos_init.copy()
    alpha_raw = np.empty(n)
    alpha_cont = np.empty(n)
    ahat = np.empty(ne)
    dxy = np.empty((n, 2))
    rho2 = np.empty(n)
    dalpha = np.empty(n)
    f = np.empty(n)
    dstep = np.empty(n)
    k1 = np.empty((n, 2))
    k2 = np.empty((n, 2))
    k3 = np.empty((n, 2))
    k4 = np.empty((n, 2))
    pstage = np.empty((n, 2))

    tpx, tpy, tvx, tvy = target_state(tkind, tprm, 0.0)
    status = _state_ok(pos, tpx, tpy)
    fail_step = 0
    n_filled = 0
    if status == 0:
        _init_angles(pos, tpx, tpy, edge_i, edge_j, alpha_raw, alpha_cont, ahat)
        _store(0, 0.0, pos, alpha_cont, ahat, tpx, tpy, tvx, tvy,
               out_t, out_pos, out_alpha, out_ahat, out_tpos, out_tvel,
               out_rho, out_minrho, out_minpair)
        n_filled = 1
        for step in range(n_steps):
            t0 = step * dt
            _eval_rhs(pos, tpx, tpy, tvx, tvy, alpha_raw, ahat,
                      edge_i, edge_j, edge_w, edge_d, radii2,
                      lam, gamma, mu, c, dxy, rho2, dalpha, f, k1)
            mpx, mpy, mvx, mvy = target_state(tkind, tprm, t0 + 0.5 * dt)
            for i in range(n):
                pstage[i, 0] = pos[i, 0] + 0.5 * dt * k1[i, 0]
                pstage[i, 1] = pos[i, 1] + 0.5 * dt * k1[i, 1]
            _eval_rhs(pstage, mpx, mpy, mvx, mvy, alpha_raw, ahat,
                      edge_i, edge_j, edge_w, edge_d, radii2,
                      lam, gamma, mu, c, dxy, rho2, dalpha, f, k2)
            for i in range(n):
                pstage[i, 0] = pos[i, 0] + 0.5 * dt * k2[i, 0]
                pstage[i, 1] = pos[i, 1] + 0.5 * dt * k2[i, 1]
            _eval_rhs(pstage, mpx, mpy, mvx, mvy, alpha_raw, ahat,
                      edge_i, edge_j, edge_w, edge_d, radii2,
                      lam, gamma, mu, c, dxy, rho2, dalpha, f, k3)
            epx, epy, evx, evy = target_state(tkind, tprm, t0 + dt)
            for i in range(n):
                pstage[i, 0] = pos[i, 0] + dt * k3[i, 0]
                pstage[i, 1] = pos[i, 1] + dt * k3[i, 1]
            _eval_rhs(pstage, epx, epy, evx, evy, alpha_raw, ahat,
                      edge_i, edge_j, edge_w, edge_d, radii2,
                      lam, gamma, mu, c, dxy, rho2, dalpha, f, k4)
            sixth = dt / 6.0
            for i in range(n):
                pos[i, 0] += sixth * (k1[i, 0] + 2.0 * (k2[i, 0] + k3[i, 0]) + k4[i, 0])
                pos[i, 1] += sixth * (k1[i, 1] + 2.0 * (k2[i, 1] + k3[i, 1]) + k4[i, 1])
            tpx, tpy, tvx, tvy = epx, epy, evx, evy
            status = _state_ok(pos, tpx, tpy)
            if status != 0:
                fail_step = step + 1
                break
            _advance_angles(pos, tpx, tpy, edge_i, edge_j,
                            alpha_raw, alpha_cont, ahat, dstep)
            if (step + 1) % out_every == 0:
                _store(n_filled, (step + 1) * dt, pos, alpha_cont, ahat,
                       tpx, tpy, tvx, tvy,
                       out_t, out_pos, out_alpha, out_ahat, out_tpos, out_tvel,
                       out_rho, out_minrho, out_minpair)
                n_filled += 1
    return (status, fail_step, n_filled, out_t, out_pos, out_alpha, out_ahat,
            out_tpos, out_tvel, out_rho, out_minrho, out_minpair)


@njit(cache=True)
def run_sampled(pos_init, tkind, tprm, h, n_steps, out_every,
                edge_i, edge_j, edge_w, edge_d, radii2,
                lam, gamma, mu, c):
    n = pos_init.shape[0]
    ne = edge_i.shape[0]
    n_out = n_steps // out_every + 1
    out_t = np.empty(n_out)
    out_pos = np.empty((n_out, n, 2))
    out_alpha = np.empty((n_out, n))
    out_ahat = np.empty((n_out, ne))
    out_tpos = np.empty((n_out, 2))
    out_tvel = np.empty((n_out, 2))
    out_rho = np.empty((n_out, n))
    out_minrho = np.empty(n_out)
    out_minpair = np.empty(n_out)

    pos = pos_init.copy()
    alpha_raw = np.empty(n)
    alpha_cont = np.empty(n)
    ahat = np.empty(ne)
    f = np.empty(n)
    dstep = np.empty(n)

    tpx, tpy, tvx, tvy = target_state(tkind, tprm, 0.0)
    status = _state_ok(pos, tpx, tpy)
    fail_step = 0
    n_filled = 0
    if status == 0:
        _init_angles(pos, tpx, tpy, edge_i, edge_j, alpha_raw, alpha_cont, ahat)
        _store(0, 0.0, pos, alpha_cont, ahat, tpx, tpy, tvx, tvy,
               out_t, out_pos, out_alpha, out_ahat, out_tpos, out_tvel,
               out_rho, out_minrho, out_minpair)
        n_filled = 1
        for step in range(n_steps):
            for i in range(n):
                f[i] = c
            for e in range(ne):
                f[edge_i[e]] += mu * edge_w[e] * math.tanh(ahat[e] - edge_d[e])
            # command computed at the sample, rotated to the global frame
            # and held: over one interval the position update is exact
            for i in range(n):
                dx = pos[i, 0] - tpx
                dy = pos[i, 1] - tpy
                gl = gamma * (radii2[i] - (dx * dx + dy * dy))
                s = lam * f[i]
                ux = s * (gl * dx - mu * dy) + tvx
                uy = s * (mu * dx + gl * dy) + tvy
                pos[i, 0] += h * ux
                pos[i, 1] += h * uy
            tpx, tpy, tvx, tvy = target_state(tkind, tprm, (step + 1) * h)
            status = _state_ok(pos, tpx, tpy)
            if status != 0:
                fail_step = step + 1
                break
            _advance_angles(pos, tpx, tpy, edge_i, edge_j,
                            alpha_raw, alpha_cont, ahat, dstep)
            if (step + 1) % out_every == 0:
                _store(n_filled, (step + 1) * h, pos, alpha_cont, ahat,
                       tpx, tpy, tvx, tvy,
                       out_t, out_pos, out_alpha, out_ahat, out_tpos, out_tvel,
                       out_rho, out_minrho, out_minpair)
                n_filled += 1
    return (status, fail_step, n_filled, out_t, out_pos, out_alpha, out_ahat,
            out_tpos, out_tvel, out_rho, out_minrho, out_minpair)


@njit(cache=True)
def _polar_rhs(rho_s, alpha_s, ahat_off, edge_i, edge_j, edge_w, edge_d,
               radii2, lam, gamma, mu, c, f, krho, kalpha):
    n = rho_s.shape[0]
    for i in range(n):
        f[i] = c
    for e in range(edge_i.shape[0]):
        ahat = alpha_s[edge_j[e]] - alpha_s[edge_i[e]] + ahat_off[e]
        f[edge_i[e]] += mu * edge_w[e] * math.tanh(ahat - edge_d[e])
    for i in range(n):
        krho[i] = lam * gamma * rho_s[i] * (radii2[i] - rho_s[i] * rho_s[i]) * f[i]
        kalpha[i] = lam * mu * f[i]


@njit(cache=True)
def run_polar(rho0, alpha0, ahat_off, edge_i, edge_j, edge_w, edge_d,
              radii2, lam, gamma, mu, c, dt, n_steps, out_every):
    """Target-relative polar integrator (static target), RK4.

    ``ahat_off`` holds the constant per-edge branch offsets that map
    unwrapped bearing differences onto the spacing branch tracked from the
    initial wrapped measurements.
    """
    n = rho0.shape[0]
    n_out = n_steps // out_every + 1
    out_t = np.empty(n_out)
    out_rho = np.empty((n_out, n))
    out_alpha = np.empty((n_out, n))

    rho = rho0.copy()
    alpha = alpha0.copy()
    f = np.empty(n)
    kr1 = np.empty(n); ka1 = np.empty(n)
    kr2 = np.empty(n); ka2 = np.empty(n)
    kr3 = np.empty(n); ka3 = np.empty(n)
    kr4 = np.empty(n); ka4 = np.empty(n)
    rs = np.empty(n); als = np.empty(n)

    out_t[0] = 0.0
    for i in range(n):
        out_rho[0, i] = rho[i]
        out_alpha[0, i] = alpha[i]
    n_filled = 1
    for step in range(n_steps):
        _polar_rhs(rho, alpha, ahat_off, edge_i, edge_j, edge_w, edge_d,
                   radii2, lam, gamma, mu, c, f, kr1, ka1)
        for i in range(n):
            rs[i] = rho[i] + 0.5 * dt * kr1[i]
            als[i] = alpha[i] + 0.5 * dt * ka1[i]
        _polar_rhs(rs, als, ahat_off, edge_i, edge_j, edge_w, edge_d,
                   radii2, lam, gamma, mu, c, f, kr2, ka2)
        for i in range(n):
            rs[i] = rho[i] + 0.5 * dt * kr2[i]
            als[i] = alpha[i] + 0.5 * dt * ka2[i]
        _polar_rhs(rs, als, ahat_off, edge_i, edge_j, edge_w, edge_d,
                   radii2, lam, gamma, mu, c, f, kr3, ka3)
        for i in range(n):
            rs[i] = rho[i] + dt * kr3[i]
            als[i] = alpha[i] + dt * ka3[i]
        _polar_rhs(rs, als, ahat_off, edge_i, edge_j, edge_w, edge_d,
                   radii2, lam, gamma, mu, c, f, kr4, ka4)
        sixth = dt / 6.0
        for i in range(n):
            rho[i] += sixth * (kr1[i] + 2.0 * (kr2[i] + kr3[i]) + kr4[i])
            alpha[i] += sixth * (ka1[i] + 2.0 * (ka2[i] + ka3[i]) + ka4[i])
        if (step + 1) % out_every == 0:
            out_t[n_filled] = (step + 1) * dt
            for i in range(n):
                out_rho[n_filled, i] = rho[i]
                out_alpha[n_filled, i] = alpha[i]
            n_filled += 1
    return out_t, out_rho, out_alpha


@njit(cache=True)
def _consensus_rhs(xi, adjacency, rate, out):
    n = xi.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            a = adjacency[i, j]
            if a > 0.0:
                s += a * math.tanh(xi[j] - xi[i])
        out[i] = rate * s
    return out


@njit(cache=True)
def run_consensus(xi0, adjacency, rate, dt, n_steps):
    """Scalar tanh-coupled consensus flow, RK4; returns the final state."""
    n = xi0.shape[0]
    xi = xi0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xs = np.empty(n)
    for _ in range(n_steps):
        _consensus_rhs(xi, adjacency, rate, k1)
        for i in range(n):
            xs[i] = xi[i] + 0.5 * dt * k1[i]
        _consensus_rhs(xs, adjacency, rate, k2)
        for i in range(n):
            xs[i] = xi[i] + 0.5 * dt * k2[i]
        _consensus_rhs(xs, adjacency, rate, k3)
        for i in range(n):
            xs[i] = xi[i] + dt * k3[i]
        _consensus_rhs(xs, adjacency, rate, k4)
        sixth = dt / 6.0
        for i in range(n):
            xi[i] += sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
    return xi
