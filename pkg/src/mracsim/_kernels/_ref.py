"""Pure-Python run loops. Reference semantics for the compiled kernels.

Both backends integrate the full closed loop (plant, reference model,
filters, gains, covariance and its inverse) with one joint fixed-step RK4,
so adaptation stays stage-consistent with the plant. Signal profiles are
pre-sampled on the half-step grid by the caller; sensor noise is held over
each step. Everything returned is plain numpy.

Status codes: 0 ok, 1 non-finite state, 2 alarm limit exceeded,
3 vehicle collision (gap reached zero).
"""

from __future__ import annotations

import numpy as np

KERNEL_KIND = "python"

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_ALARM = 2
STATUS_COLLISION = 3

EV_COV_CLAMP = 1
EV_COV_RESET = 2
EV_GAIN_CLAMP = 4


def _pack_sym(M, out):
    m = M.shape[0]
    k = 0
    for i in range(m):
        for j in range(i, m):
            out[k] = M[i, j]
            k += 1


def _project_inplace(k, dk, lower, upper):
    dk[(k >= upper) & (dk > 0.0)] = 0.0
    dk[(k <= lower) & (dk < 0.0)] = 0.0


def _post_step_cov(P, p0, rho_max, m):
    """Re-symmetrize, cap the top eigenvalue, reset on lost definiteness.

    Returns (P, clamped, reset). The eigen-solve is skipped while the
    Gershgorin bound rules the cap out.
    """
    P = 0.5 * (P + P.T)
    clamped = False
    reset = False
    if np.max(np.sum(np.abs(P), axis=1)) > rho_max:
        lam_max = float(np.linalg.eigvalsh(P)[-1])
        if lam_max > rho_max:
            P = P * (rho_max / lam_max)
            clamped = True
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        P = np.eye(m) * p0
        reset = True
    return P, clamped, reset


def run_acc(p):
    """Vehicle-following loop for either adaptive law. See module docstring."""
    dt = float(p["dt"])
    n_steps = int(p["n_steps"])
    out_every = int(p["out_every"])
    law = int(p["law"])  # 0 gradient, 1 rls
    analysis = bool(p["analysis"])
    normalized = bool(p["normalized"])

    a, b, am = float(p["a"]), float(p["b"]), float(p["am"])
    kgain = float(p["kgain"])
    s0, hway = float(p["s0"]), float(p["hway"])
    sgn_b = float(p["sgn_b"])
    gamma = np.asarray(p["gamma"], dtype=float)
    beta = float(p["beta"])
    p0 = float(p["p0"])
    rho_max = float(p["rho_max"])
    lower = np.asarray(p["lower"], dtype=float)
    upper = np.asarray(p["upper"], dtype=float)
    vl = np.asarray(p["vl_half"], dtype=float)
    dd = np.asarray(p["d_half"], dtype=float)
    noise_v = np.asarray(p["noise_v"], dtype=float)
    noise_x = np.asarray(p["noise_x"], dtype=float)
    alarm = float(p["alarm"])

    rls = law == 1
    n_rows = n_steps // out_every + 1
    cols = {
        name: np.zeros(n_rows)
        for name in (
            "t", "v_l", "v", "v_m", "x_r", "s_d", "v_r", "delta", "e", "u",
            "k1", "k2", "k3", "P11", "P22", "P33",
        )
    }
    clamp_flag = np.zeros(n_rows, dtype=np.int64)
    peM = np.zeros((n_rows, 6))
    V = np.zeros(n_steps + 1) if analysis else np.zeros(0)
    vr_full = np.zeros(n_steps + 1)
    delta_full = np.zeros(n_steps + 1)
    v_full = np.zeros(n_steps + 1)

    # state: v, x_r, v_m, k(3), then for RLS phi(3), P(9), and Q(9) in analysis
    dim = 6 + (12 if rls else 0) + (9 if rls and analysis else 0)
    y = np.zeros(dim)
    y[0], y[1], y[2] = float(p["v0"]), float(p["xr0"]), float(p["vm0"])
    y[3:6] = np.asarray(p["k0"], dtype=float)
    if rls:
        y[9:18] = (np.eye(3) * p0).ravel()
        if analysis:
            y[18:27] = (np.eye(3) / p0).ravel()

    k1s = (am - a) / b
    k2s = am * kgain / b

    def rhs(ys, ih, nv, nx):
        dy = np.zeros(dim)
        v, x_r, v_m = ys[0], ys[1], ys[2]
        k = ys[3:6]
        v_l = vl[ih]
        d = dd[ih]
        v_meas = v + nv
        xr_meas = x_r + nx
        vr_m = v_l - v_meas
        delta_m = xr_meas - (s0 + hway * v_meas)
        e_m = v_meas - v_m
        w = np.array([vr_m, delta_m, 1.0])
        u = k @ w
        dy[0] = -a * v + b * u + d
        dy[1] = v_l - v
        dy[2] = -am * v_m + am * (v_l + kgain * delta_m)
        if not rls:
            dk = -gamma * e_m * w
            _project_inplace(k, dk, lower, upper)
            dy[3:6] = dk
            return dy
        phi = ys[6:9]
        P = ys[9:18].reshape(3, 3)
        dy[6:9] = -am * phi + w
        m2 = 1.0 + phi @ phi if normalized else 1.0
        Pphi = P @ phi
        dy[9:18] = (beta * P - np.outer(Pphi, Pphi) / m2).ravel()
        if analysis:
            ks = np.array([k1s, k2s, (a * v_l - d) / b])
            ktil = k - ks
            dk = -sgn_b * e_m * (P @ w) - 0.5 * (ktil @ phi) * Pphi / m2
            dy[18:27] = (-beta * ys[18:27].reshape(3, 3) + np.outer(phi, phi) / m2).ravel()
        else:
            dk = -e_m * np.diag(P) * phi / m2
        _project_inplace(k, dk, lower, upper)
        dy[3:6] = dk
        return dy

    def law_regressor(ys, ih, nv, nx):
        if rls:
            return ys[6:9].copy()
        v_l = vl[ih]
        v_meas = ys[0] + nv
        return np.array([v_l - v_meas, (ys[1] + nx) - (s0 + hway * v_meas), 1.0])

    def record_point(j, ys, nv, nx):
        v, x_r = ys[0], ys[1]
        v_l = vl[2 * j]
        vr_full[j] = v_l - v
        delta_full[j] = x_r - (s0 + hway * v)
        v_full[j] = v
        if analysis:
            e = v - ys[2]
            ks = np.array([k1s, k2s, (a * vl[2 * j] - dd[2 * j]) / b])
            ktil = ys[3:6] - ks
            if rls:
                Q = ys[18:27].reshape(3, 3)
                V[j] = 0.5 * e * e + 0.5 * b * (ktil @ Q @ ktil)
            else:
                V[j] = 0.5 * e * e + 0.5 * b * np.sum(ktil * ktil / gamma)

    def record_row(row, j, ys, nv, nx, M, ev):
        t = j * dt
        v, x_r, v_m = ys[0], ys[1], ys[2]
        v_l = vl[2 * j]
        v_meas = v + nv
        xr_meas = x_r + nx
        vr_m = v_l - v_meas
        delta_m = xr_meas - (s0 + hway * v_meas)
        u = ys[3:6] @ np.array([vr_m, delta_m, 1.0])
        cols["t"][row] = t
        cols["v_l"][row] = v_l
        cols["v"][row] = v
        cols["v_m"][row] = v_m
        cols["x_r"][row] = x_r
        cols["s_d"][row] = s0 + hway * v
        cols["v_r"][row] = v_l - v
        cols["delta"][row] = x_r - (s0 + hway * v)
        cols["e"][row] = v_meas - v_m
        cols["u"][row] = u
        cols["k1"][row], cols["k2"][row], cols["k3"][row] = ys[3], ys[4], ys[5]
        if rls:
            cols["P11"][row] = ys[9]
            cols["P22"][row] = ys[13]
            cols["P33"][row] = ys[17]
        else:
            cols["P11"][row], cols["P22"][row], cols["P33"][row] = gamma
        clamp_flag[row] = ev
        _pack_sym(M, peM[row])

    M = np.zeros((3, 3))
    reg_prev = None
    ev_accum = 0
    counters = {"cov_clamp": 0, "cov_reset": 0, "gain_clamp": 0}
    status = STATUS_OK
    halt_step = -1
    row = 0
    j = 0
    while True:
        nidx = min(j, n_steps - 1)
        nv, nx = noise_v[nidx], noise_x[nidx]
        reg = law_regressor(y, 2 * j, nv, nx)
        if reg_prev is not None:
            M += 0.5 * dt * (np.outer(reg_prev, reg_prev) + np.outer(reg, reg))
        reg_prev = reg
        record_point(j, y, nv, nx)
        if j % out_every == 0:
            record_row(row, j, y, nv, nx, M, ev_accum)
            ev_accum = 0
            row += 1
        if j >= n_steps:
            break

        k1v = rhs(y, 2 * j, nv, nx)
        k2v = rhs(y + 0.5 * dt * k1v, 2 * j + 1, nv, nx)
        k3v = rhs(y + 0.5 * dt * k2v, 2 * j + 1, nv, nx)
        k4v = rhs(y + dt * k3v, 2 * j + 2, nv, nx)
        y = y + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

        knew = np.clip(y[3:6], lower, upper)
        if not np.array_equal(knew, y[3:6]):
            ev_accum |= EV_GAIN_CLAMP
            counters["gain_clamp"] += 1
            y[3:6] = knew
        if rls:
            P, clamped, reset = _post_step_cov(y[9:18].reshape(3, 3), p0, rho_max, 3)
            y[9:18] = P.ravel()
            if clamped:
                ev_accum |= EV_COV_CLAMP
                counters["cov_clamp"] += 1
            if reset:
                ev_accum |= EV_COV_RESET
                counters["cov_reset"] += 1
                if analysis:
                    y[18:27] = (np.eye(3) / p0).ravel()
            if analysis:
                Q = y[18:27].reshape(3, 3)
                y[18:27] = (0.5 * (Q + Q.T)).ravel()
        j += 1
        if not np.all(np.isfinite(y)):
            status = STATUS_NONFINITE
            halt_step = j
            break
        if abs(y[0]) > alarm or np.max(np.abs(y[3:6])) > alarm:
            status = STATUS_ALARM
            halt_step = j
            break
        if y[1] <= 0.0:
            status = STATUS_COLLISION
            halt_step = j
            break

    n_out = row
    result = {name: arr[:n_out] for name, arr in cols.items()}
    result["clamp_flag"] = clamp_flag[:n_out]
    result["peM"] = peM[:n_out]
    result["V"] = V[: j + 1] if analysis else V
    result["vr_full"] = vr_full[: j + 1]
    result["delta_full"] = delta_full[: j + 1]
    result["v_full"] = v_full[: j + 1]
    result["k_final"] = y[3:6].copy()
    result["status"] = status
    result["halt_step"] = halt_step
    result["n_out"] = n_out
    result.update(counters)
    if rls and analysis and status == STATUS_OK:
        P = y[9:18].reshape(3, 3)
        Q = y[18:27].reshape(3, 3)
        result["pq_err"] = float(np.max(np.abs(P @ Q - np.eye(3))))
    return result


def run_mrac(p):
    """Generic SISO closed-loop adaptation run. See module docstring."""
    dt = float(p["dt"])
    n_steps = int(p["n_steps"])
    out_every = int(p["out_every"])
    law = int(p["law"])
    analysis = bool(p["analysis"])
    normalized = bool(p["normalized"])
    track_ec = bool(p.get("track_ec", False))

    Ap = np.asarray(p["Ap"], dtype=float)
    Bp = np.asarray(p["Bp"], dtype=float)
    Cp = np.asarray(p["Cp"], dtype=float)
    Am = np.asarray(p["Am"], dtype=float)
    Bm = np.asarray(p["Bm"], dtype=float)
    Cm = np.asarray(p["Cm"], dtype=float)
    F = np.asarray(p["F"], dtype=float)
    g = np.asarray(p["g"], dtype=float)
    n_p, p_m, q = Ap.shape[0], Am.shape[0], F.shape[0]
    m = 2 * (q + 1)

    theta0 = np.asarray(p["theta0"], dtype=float)
    sgn_rho = float(p["sgn_rho"])
    gamma = np.asarray(p["gamma"], dtype=float)  # diagonal entries, len m
    beta = float(p["beta"])
    p0 = float(p["p0"])
    rho_max = float(p["rho_max"])
    lower = np.asarray(p["lower"], dtype=float)
    upper = np.asarray(p["upper"], dtype=float)
    theta_star = np.asarray(p["theta_star"], dtype=float)
    rho_abs = float(p["rho_abs"])
    inv_km = float(p["inv_km"])
    am_ec = float(p.get("am_ec", 0.0))
    kp_ec = float(p.get("kp_ec", 0.0))
    r_half = np.asarray(p["r_half"], dtype=float)
    noise_y = np.asarray(p["noise_y"], dtype=float)
    alarm = float(p["alarm"])

    rls = law == 1
    # offsets into the packed state
    o_xm = n_p
    o_w1 = o_xm + p_m
    o_w2 = o_w1 + q
    o_th = o_w2 + q
    o_P = o_th + m
    o_Q = o_P + (m * m if rls else 0)
    o_ec = o_Q + (m * m if rls and analysis else 0)
    dim = o_ec + (1 if track_ec else 0)

    y = np.zeros(dim)
    y[:n_p] = np.asarray(p["xp0"], dtype=float)
    y[o_xm:o_w1] = np.asarray(p["xm0"], dtype=float)
    y[o_th : o_th + m] = theta0
    if rls:
        y[o_P : o_P + m * m] = (np.eye(m) * p0).ravel()
        if analysis:
            y[o_Q : o_Q + m * m] = (np.eye(m) / p0).ravel()

    n_rows = n_steps // out_every + 1
    t_out = np.zeros(n_rows)
    r_out = np.zeros(n_rows)
    yp_out = np.zeros(n_rows)
    ym_out = np.zeros(n_rows)
    e1_out = np.zeros(n_rows)
    up_out = np.zeros(n_rows)
    theta_out = np.zeros((n_rows, m))
    gain_out = np.zeros((n_rows, m))
    clamp_flag = np.zeros(n_rows, dtype=np.int64)
    n_pack = m * (m + 1) // 2
    peM = np.zeros((n_rows, n_pack))
    V = np.zeros(n_steps + 1) if analysis else np.zeros(0)
    e1_full = np.zeros(n_steps + 1)
    up_full = np.zeros(n_steps + 1)
    ec_full = np.zeros(n_steps + 1) if track_ec else np.zeros(0)

    def rhs(ys, ih, ny):
        dy = np.zeros(dim)
        xp = ys[:n_p]
        xm = ys[o_xm:o_w1]
        w1 = ys[o_w1:o_w2]
        w2 = ys[o_w2:o_th]
        th = ys[o_th : o_th + m]
        y_meas = Cp @ xp + ny
        y_m = Cm @ xm
        e1 = y_meas - y_m
        r = r_half[ih]
        omega = np.concatenate([w1, w2, [y_meas, r]])
        u = th @ omega
        dy[:n_p] = Ap @ xp + Bp * u
        dy[o_xm:o_w1] = Am @ xm + Bm * r
        if q:
            dy[o_w1:o_w2] = F @ w1 + g * u
            dy[o_w2:o_th] = F @ w2 + g * y_meas
        if rls:
            P = ys[o_P : o_P + m * m].reshape(m, m)
            m2 = 1.0 + omega @ omega if normalized else 1.0
            Pw = P @ omega
            dy[o_P : o_P + m * m] = (beta * P - np.outer(Pw, Pw) / m2).ravel()
            if analysis:
                eps = (th - theta_star) @ omega
                dth = -(sgn_rho * e1 + 0.5 * eps) * Pw / m2
                Q = ys[o_Q : o_Q + m * m].reshape(m, m)
                dy[o_Q : o_Q + m * m] = (-beta * Q + np.outer(omega, omega) / m2).ravel()
            else:
                dth = -sgn_rho * e1 * Pw / m2
        else:
            dth = -sgn_rho * e1 * gamma * omega
        _project_inplace(th, dth, lower, upper)
        dy[o_th : o_th + m] = dth
        if track_ec:
            dy[o_ec] = -am_ec * ys[o_ec] + kp_ec * ((th - theta_star) @ omega)
        return dy

    def signals(ys, ih, ny):
        y_p = float(Cp @ ys[:n_p])
        y_m = float(Cm @ ys[o_xm:o_w1])
        r = r_half[ih]
        omega = np.concatenate([ys[o_w1:o_w2], ys[o_w2:o_th], [y_p + ny, r]])
        u = float(ys[o_th : o_th + m] @ omega)
        return y_p, y_m, r, omega, u

    M = np.zeros((m, m))
    reg_prev = None
    ev_accum = 0
    counters = {"cov_clamp": 0, "cov_reset": 0, "gain_clamp": 0}
    status = STATUS_OK
    halt_step = -1
    row = 0
    j = 0
    while True:
        nidx = min(j, n_steps - 1)
        ny = noise_y[nidx]
        y_p, y_m, r, omega, u = signals(y, 2 * j, ny)
        if reg_prev is not None:
            M += 0.5 * dt * (np.outer(reg_prev, reg_prev) + np.outer(omega, omega))
        reg_prev = omega
        e1_true = y_p - y_m
        e1_full[j] = e1_true
        up_full[j] = u
        if track_ec:
            ec_full[j] = y[o_ec]
        if analysis:
            terr = y[o_th : o_th + m] - theta_star
            if rls:
                Q = y[o_Q : o_Q + m * m].reshape(m, m)
                V[j] = 0.5 * inv_km * e1_true**2 + 0.5 * rho_abs * (terr @ Q @ terr)
            else:
                V[j] = 0.5 * inv_km * e1_true**2 + 0.5 * rho_abs * np.sum(
                    terr * terr / gamma
                )
        if j % out_every == 0:
            t_out[row] = j * dt
            r_out[row] = r
            yp_out[row] = y_p
            ym_out[row] = y_m
            e1_out[row] = e1_true
            up_out[row] = u
            theta_out[row] = y[o_th : o_th + m]
            if rls:
                gain_out[row] = y[o_P : o_P + m * m].reshape(m, m).diagonal()
            else:
                gain_out[row] = gamma
            clamp_flag[row] = ev_accum
            ev_accum = 0
            _pack_sym(M, peM[row])
            row += 1
        if j >= n_steps:
            break

        k1v = rhs(y, 2 * j, ny)
        k2v = rhs(y + 0.5 * dt * k1v, 2 * j + 1, ny)
        k3v = rhs(y + 0.5 * dt * k2v, 2 * j + 1, ny)
        k4v = rhs(y + dt * k3v, 2 * j + 2, ny)
        y = y + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

        th = y[o_th : o_th + m]
        th_new = np.clip(th, lower, upper)
        if not np.array_equal(th_new, th):
            ev_accum |= EV_GAIN_CLAMP
            counters["gain_clamp"] += 1
            y[o_th : o_th + m] = th_new
        if rls:
            P, clamped, reset = _post_step_cov(
                y[o_P : o_P + m * m].reshape(m, m), p0, rho_max, m
            )
            y[o_P : o_P + m * m] = P.ravel()
            if clamped:
                ev_accum |= EV_COV_CLAMP
                counters["cov_clamp"] += 1
            if reset:
                ev_accum |= EV_COV_RESET
                counters["cov_reset"] += 1
                if analysis:
                    y[o_Q : o_Q + m * m] = (np.eye(m) / p0).ravel()
            if analysis:
                Q = y[o_Q : o_Q + m * m].reshape(m, m)
                y[o_Q : o_Q + m * m] = (0.5 * (Q + Q.T)).ravel()
        j += 1
        if not np.all(np.isfinite(y)):
            status = STATUS_NONFINITE
            halt_step = j
            break
        y_p_now = float(Cp @ y[:n_p])
        if (
            abs(y_p_now) > alarm
            or np.max(np.abs(y[o_th : o_th + m])) > alarm
        ):
            status = STATUS_ALARM
            halt_step = j
            break

    n_out = row
    result = {
        "t": t_out[:n_out],
        "r": r_out[:n_out],
        "y_p": yp_out[:n_out],
        "y_m": ym_out[:n_out],
        "e1": e1_out[:n_out],
        "u_p": up_out[:n_out],
        "theta": theta_out[:n_out],
        "gain_diag": gain_out[:n_out],
        "clamp_flag": clamp_flag[:n_out],
        "peM": peM[:n_out],
        "V": V[: j + 1] if analysis else V,
        "e1_full": e1_full[: j + 1],
        "up_full": up_full[: j + 1],
        "ec_full": ec_full[: j + 1] if track_ec else ec_full,
        "theta_final": y[o_th : o_th + m].copy(),
        "status": status,
        "halt_step": halt_step,
        "n_out": n_out,
    }
    result.update(counters)
    if rls and analysis and status == STATUS_OK:
        P = y[o_P : o_P + m * m].reshape(m, m)
        Q = y[o_Q : o_Q + m * m].reshape(m, m)
        result["pq_err"] = float(np.max(np.abs(P @ Q - np.eye(m))))
    return result
