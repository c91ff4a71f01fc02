# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled run loops. Mirrors _ref.py step for step.

Same state layouts, same event flags, same outputs. Small dense linear
algebra is hand-rolled (dimensions never exceed a few dozen); the top
covariance eigenvalue uses cyclic Jacobi behind a Gershgorin prefilter.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, isfinite, sqrt

cnp.import_array()

KERNEL_KIND = "compiled"

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_ALARM = 2
STATUS_COLLISION = 3

EV_COV_CLAMP = 1
EV_COV_RESET = 2
EV_GAIN_CLAMP = 4

cdef enum:
    C_EV_COV_CLAMP = 1
    C_EV_COV_RESET = 2
    C_EV_GAIN_CLAMP = 4

DEF MAXM = 16  # covariance side length cap for the stack scratch


cdef int _cholesky_ok(double* P, int m, double* scratch) noexcept nogil:
    """1 if the symmetric matrix factors with strictly positive pivots."""
    cdef int i, j, k
    cdef double s
    for i in range(m * m):
        scratch[i] = P[i]
    for j in range(m):
        s = scratch[j * m + j]
        for k in range(j):
            s -= scratch[j * m + k] * scratch[j * m + k]
        if s <= 0.0:
            return 0
        scratch[j * m + j] = sqrt(s)
        for i in range(j + 1, m):
            s = scratch[i * m + j]
            for k in range(j):
                s -= scratch[i * m + k] * scratch[j * m + k]
            scratch[i * m + j] = s / scratch[j * m + j]
    return 1


cdef double _sym_eig_max(double* A, int m, double* work) noexcept nogil:
    """Largest eigenvalue of a symmetric matrix by cyclic Jacobi sweeps."""
    cdef int i, p, q, sweep
    cdef double off, app, aqq, apq, c, s, tau, t, akp, akq, best
    for i in range(m * m):
        work[i] = A[i]
    for sweep in range(30):
        off = 0.0
        for p in range(m):
            for q in range(p + 1, m):
                off += work[p * m + q] * work[p * m + q]
        if off < 1e-22:
            break
        for p in range(m):
            for q in range(p + 1, m):
                apq = work[p * m + q]
                if fabs(apq) < 1e-300:
                    continue
                app = work[p * m + p]
                aqq = work[q * m + q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for i in range(m):
                    akp = work[i * m + p]
                    akq = work[i * m + q]
                    work[i * m + p] = c * akp - s * akq
                    work[i * m + q] = s * akp + c * akq
                for i in range(m):
                    akp = work[p * m + i]
                    akq = work[q * m + i]
                    work[p * m + i] = c * akp - s * akq
                    work[q * m + i] = s * akp + c * akq
    best = work[0]
    for i in range(1, m):
        if work[i * m + i] > best:
            best = work[i * m + i]
    return best


cdef int _post_step_cov(double* P, int m, double p0, double rho_max,
                        double* scratch) noexcept nogil:
    """Re-symmetrize, cap the top eigenvalue, reset if definiteness is lost.

    Returns an event bitmask (EV_COV_CLAMP | EV_COV_RESET).
    """
    cdef int i, j, ev = 0
    cdef double v, rowsum, gersh, lam
    for i in range(m):
        for j in range(i + 1, m):
            v = 0.5 * (P[i * m + j] + P[j * m + i])
            P[i * m + j] = v
            P[j * m + i] = v
    gersh = 0.0
    for i in range(m):
        rowsum = 0.0
        for j in range(m):
            rowsum += fabs(P[i * m + j])
        if rowsum > gersh:
            gersh = rowsum
    if gersh > rho_max:
        lam = _sym_eig_max(P, m, scratch)
        if lam > rho_max:
            v = rho_max / lam
            for i in range(m * m):
                P[i] *= v
            ev |= C_EV_COV_CLAMP
    if not _cholesky_ok(P, m, scratch):
        for i in range(m * m):
            P[i] = 0.0
        for i in range(m):
            P[i * m + i] = p0
        ev |= C_EV_COV_RESET
    return ev


cdef inline void _pack_sym3(double* M, double* out) noexcept nogil:
    out[0] = M[0]; out[1] = M[1]; out[2] = M[2]
    out[3] = M[4]; out[4] = M[5]; out[5] = M[8]


def run_acc(p):
    """Vehicle-following loop; same contract as the python backend."""
    cdef double dt = float(p["dt"])
    cdef long long n_steps = int(p["n_steps"])
    cdef long long out_every = int(p["out_every"])
    cdef int law = int(p["law"])
    cdef bint analysis = bool(p["analysis"])
    cdef bint normalized = bool(p["normalized"])
    cdef bint rls = law == 1

    cdef double a = float(p["a"]), b = float(p["b"]), am = float(p["am"])
    cdef double kgain = float(p["kgain"])
    cdef double s0 = float(p["s0"]), hway = float(p["hway"])
    cdef double sgn_b = float(p["sgn_b"])
    cdef double beta = float(p["beta"]), p0 = float(p["p0"])
    cdef double rho_max = float(p["rho_max"])
    cdef double alarm = float(p["alarm"])

    gam_arr = np.ascontiguousarray(p["gamma"], dtype=np.float64)
    lo_arr = np.ascontiguousarray(p["lower"], dtype=np.float64)
    up_arr = np.ascontiguousarray(p["upper"], dtype=np.float64)
    vl_arr = np.ascontiguousarray(p["vl_half"], dtype=np.float64)
    dd_arr = np.ascontiguousarray(p["d_half"], dtype=np.float64)
    nv_arr = np.ascontiguousarray(p["noise_v"], dtype=np.float64)
    nx_arr = np.ascontiguousarray(p["noise_x"], dtype=np.float64)
    cdef double[:] gamma = gam_arr
    cdef double[:] lower = lo_arr
    cdef double[:] upper = up_arr
    cdef double[:] vl = vl_arr
    cdef double[:] dd = dd_arr
    cdef double[:] noise_v = nv_arr
    cdef double[:] noise_x = nx_arr

    cdef int dim = 6
    if rls:
        dim += 12
        if analysis:
            dim += 9

    cdef long long n_rows = n_steps // out_every + 1
    names = ("t", "v_l", "v", "v_m", "x_r", "s_d", "v_r", "delta", "e", "u",
             "k1", "k2", "k3", "P11", "P22", "P33")
    cols = {name: np.zeros(n_rows) for name in names}
    cdef double[:] c_t = cols["t"], c_vl = cols["v_l"], c_v = cols["v"]
    cdef double[:] c_vm = cols["v_m"], c_xr = cols["x_r"], c_sd = cols["s_d"]
    cdef double[:] c_vr = cols["v_r"], c_delta = cols["delta"], c_e = cols["e"]
    cdef double[:] c_u = cols["u"], c_k1 = cols["k1"], c_k2 = cols["k2"]
    cdef double[:] c_k3 = cols["k3"], c_P11 = cols["P11"], c_P22 = cols["P22"]
    cdef double[:] c_P33 = cols["P33"]
    clamp_arr = np.zeros(n_rows, dtype=np.int64)
    cdef long long[:] clamp_flag = clamp_arr
    peM_arr = np.zeros((n_rows, 6))
    cdef double[:, :] peM = peM_arr
    V_arr = np.zeros(n_steps + 1 if analysis else 0)
    cdef double[:] V = V_arr
    vrf_arr = np.zeros(n_steps + 1)
    dlf_arr = np.zeros(n_steps + 1)
    vf_arr = np.zeros(n_steps + 1)
    cdef double[:] vr_full = vrf_arr
    cdef double[:] delta_full = dlf_arr
    cdef double[:] v_full = vf_arr

    cdef double[32] y, ytmp, K1, K2, K3, K4
    cdef double[MAXM * MAXM] scratch
    cdef double[9] Mpe
    cdef double[3] reg_prev, reg_cur, Pw, Pphi
    cdef int i, j2, stage, ev
    cdef long long j = 0, row = 0, ih, nidx
    cdef long long ev_accum = 0
    cdef long long n_cov_clamp = 0, n_cov_reset = 0, n_gain_clamp = 0
    cdef int status = STATUS_OK
    cdef long long halt_step = -1
    cdef double nv, nx
    cdef double v, x_r, v_m, v_l, d, v_meas, xr_meas, vr_m, delta_m, e_m, u, m2
    cdef double e, kt0, kt1, kt2, kphi, w0, w1, w2
    cdef double* src
    cdef double* dst
    cdef bint have_prev = False, do_k, finite_ok
    cdef double k1s = (am - a) / b
    cdef double k2s = am * kgain / b

    for i in range(dim):
        y[i] = 0.0
    y[0] = float(p["v0"]); y[1] = float(p["xr0"]); y[2] = float(p["vm0"])
    k0_arr = np.ascontiguousarray(p["k0"], dtype=np.float64)
    y[3] = k0_arr[0]; y[4] = k0_arr[1]; y[5] = k0_arr[2]
    if rls:
        y[9] = p0; y[13] = p0; y[17] = p0
        if analysis:
            y[18] = 1.0 / p0; y[22] = 1.0 / p0; y[26] = 1.0 / p0
    for i in range(9):
        Mpe[i] = 0.0

    while True:
        nidx = j if j < n_steps else n_steps - 1
        nv = noise_v[nidx]; nx = noise_x[nidx]
        if rls:
            reg_cur[0] = y[6]; reg_cur[1] = y[7]; reg_cur[2] = y[8]
        else:
            v_meas = y[0] + nv
            reg_cur[0] = vl[2 * j] - v_meas
            reg_cur[1] = (y[1] + nx) - (s0 + hway * v_meas)
            reg_cur[2] = 1.0
        if have_prev:
            for i in range(3):
                for j2 in range(3):
                    Mpe[i * 3 + j2] += 0.5 * dt * (
                        reg_prev[i] * reg_prev[j2] + reg_cur[i] * reg_cur[j2]
                    )
        reg_prev[0] = reg_cur[0]; reg_prev[1] = reg_cur[1]; reg_prev[2] = reg_cur[2]
        have_prev = True

        v_l = vl[2 * j]
        d = dd[2 * j]
        vr_full[j] = v_l - y[0]
        delta_full[j] = y[1] - (s0 + hway * y[0])
        v_full[j] = y[0]
        if analysis:
            e = y[0] - y[2]
            kt0 = y[3] - k1s
            kt1 = y[4] - k2s
            kt2 = y[5] - (a * v_l - d) / b
            if rls:
                V[j] = 0.5 * e * e + 0.5 * b * (
                    kt0 * (y[18] * kt0 + y[19] * kt1 + y[20] * kt2)
                    + kt1 * (y[21] * kt0 + y[22] * kt1 + y[23] * kt2)
                    + kt2 * (y[24] * kt0 + y[25] * kt1 + y[26] * kt2)
                )
            else:
                V[j] = 0.5 * e * e + 0.5 * b * (
                    kt0 * kt0 / gamma[0]
                    + kt1 * kt1 / gamma[1]
                    + kt2 * kt2 / gamma[2]
                )
        if j % out_every == 0:
            v_meas = y[0] + nv
            xr_meas = y[1] + nx
            vr_m = v_l - v_meas
            delta_m = xr_meas - (s0 + hway * v_meas)
            c_t[row] = j * dt
            c_vl[row] = v_l
            c_v[row] = y[0]
            c_vm[row] = y[2]
            c_xr[row] = y[1]
            c_sd[row] = s0 + hway * y[0]
            c_vr[row] = v_l - y[0]
            c_delta[row] = y[1] - (s0 + hway * y[0])
            c_e[row] = v_meas - y[2]
            c_u[row] = y[3] * vr_m + y[4] * delta_m + y[5]
            c_k1[row] = y[3]; c_k2[row] = y[4]; c_k3[row] = y[5]
            if rls:
                c_P11[row] = y[9]; c_P22[row] = y[13]; c_P33[row] = y[17]
            else:
                c_P11[row] = gamma[0]; c_P22[row] = gamma[1]; c_P33[row] = gamma[2]
            clamp_flag[row] = ev_accum
            ev_accum = 0
            _pack_sym3(Mpe, &peM[row, 0])
            row += 1
        if j >= n_steps:
            break

        for stage in range(4):
            if stage == 0:
                src = y; dst = K1; ih = 2 * j
            elif stage == 1:
                src = ytmp; dst = K2; ih = 2 * j + 1
            elif stage == 2:
                src = ytmp; dst = K3; ih = 2 * j + 1
            else:
                src = ytmp; dst = K4; ih = 2 * j + 2
            v = src[0]; x_r = src[1]; v_m = src[2]
            v_l = vl[ih]; d = dd[ih]
            v_meas = v + nv
            xr_meas = x_r + nx
            vr_m = v_l - v_meas
            delta_m = xr_meas - (s0 + hway * v_meas)
            e_m = v_meas - v_m
            w0 = vr_m; w1 = delta_m; w2 = 1.0
            u = src[3] * w0 + src[4] * w1 + src[5] * w2
            dst[0] = -a * v + b * u + d
            dst[1] = v_l - v
            dst[2] = -am * v_m + am * (v_l + kgain * delta_m)
            if not rls:
                dst[3] = -gamma[0] * e_m * w0
                dst[4] = -gamma[1] * e_m * w1
                dst[5] = -gamma[2] * e_m * w2
            else:
                dst[6] = -am * src[6] + w0
                dst[7] = -am * src[7] + w1
                dst[8] = -am * src[8] + w2
                m2 = 1.0
                if normalized:
                    m2 = 1.0 + src[6] * src[6] + src[7] * src[7] + src[8] * src[8]
                for i in range(3):
                    Pphi[i] = (src[9 + i * 3] * src[6]
                               + src[10 + i * 3] * src[7]
                               + src[11 + i * 3] * src[8])
                for i in range(3):
                    for j2 in range(3):
                        dst[9 + i * 3 + j2] = (
                            beta * src[9 + i * 3 + j2] - Pphi[i] * Pphi[j2] / m2
                        )
                if analysis:
                    kt0 = src[3] - k1s
                    kt1 = src[4] - k2s
                    kt2 = src[5] - (a * v_l - d) / b
                    kphi = kt0 * src[6] + kt1 * src[7] + kt2 * src[8]
                    for i in range(3):
                        Pw[i] = (src[9 + i * 3] * w0
                                 + src[10 + i * 3] * w1
                                 + src[11 + i * 3] * w2)
                    for i in range(3):
                        dst[3 + i] = (-sgn_b * e_m * Pw[i]
                                      - 0.5 * kphi * Pphi[i] / m2)
                    for i in range(3):
                        for j2 in range(3):
                            dst[18 + i * 3 + j2] = (
                                -beta * src[18 + i * 3 + j2]
                                + src[6 + i] * src[6 + j2] / m2
                            )
                else:
                    dst[3] = -e_m * src[9] * src[6] / m2
                    dst[4] = -e_m * src[13] * src[7] / m2
                    dst[5] = -e_m * src[17] * src[8] / m2
            for i in range(3):
                if src[3 + i] >= upper[i] and dst[3 + i] > 0.0:
                    dst[3 + i] = 0.0
                elif src[3 + i] <= lower[i] and dst[3 + i] < 0.0:
                    dst[3 + i] = 0.0
            if stage == 0:
                for i in range(dim):
                    ytmp[i] = y[i] + 0.5 * dt * K1[i]
            elif stage == 1:
                for i in range(dim):
                    ytmp[i] = y[i] + 0.5 * dt * K2[i]
            elif stage == 2:
                for i in range(dim):
                    ytmp[i] = y[i] + dt * K3[i]
        for i in range(dim):
            y[i] = y[i] + (dt / 6.0) * (K1[i] + 2.0 * K2[i] + 2.0 * K3[i] + K4[i])

        do_k = False
        for i in range(3):
            if y[3 + i] > upper[i]:
                y[3 + i] = upper[i]; do_k = True
            elif y[3 + i] < lower[i]:
                y[3 + i] = lower[i]; do_k = True
        if do_k:
            ev_accum |= C_EV_GAIN_CLAMP
            n_gain_clamp += 1
        if rls:
            ev = _post_step_cov(&y[9], 3, p0, rho_max, scratch)
            if ev & C_EV_COV_CLAMP:
                ev_accum |= C_EV_COV_CLAMP
                n_cov_clamp += 1
            if ev & C_EV_COV_RESET:
                ev_accum |= C_EV_COV_RESET
                n_cov_reset += 1
                if analysis:
                    for i in range(9):
                        y[18 + i] = 0.0
                    y[18] = 1.0 / p0; y[22] = 1.0 / p0; y[26] = 1.0 / p0
            if analysis:
                for i in range(3):
                    for j2 in range(i + 1, 3):
                        m2 = 0.5 * (y[18 + i * 3 + j2] + y[18 + j2 * 3 + i])
                        y[18 + i * 3 + j2] = m2
                        y[18 + j2 * 3 + i] = m2
        j += 1
        finite_ok = True
        for i in range(dim):
            if not isfinite(y[i]):
                finite_ok = False
                break
        if not finite_ok:
            status = STATUS_NONFINITE; halt_step = j; break
        if (fabs(y[0]) > alarm or fabs(y[3]) > alarm or fabs(y[4]) > alarm
                or fabs(y[5]) > alarm):
            status = STATUS_ALARM; halt_step = j; break
        if y[1] <= 0.0:
            status = STATUS_COLLISION; halt_step = j; break

    cdef long long n_pts = j + 1
    result = {name: cols[name][:row] for name in names}
    result["clamp_flag"] = clamp_arr[:row]
    result["peM"] = peM_arr[:row]
    result["V"] = V_arr[:n_pts] if analysis else V_arr
    result["vr_full"] = vrf_arr[:n_pts]
    result["delta_full"] = dlf_arr[:n_pts]
    result["v_full"] = vf_arr[:n_pts]
    result["k_final"] = np.array([y[3], y[4], y[5]])
    result["status"] = status
    result["halt_step"] = halt_step
    result["n_out"] = row
    result["cov_clamp"] = n_cov_clamp
    result["cov_reset"] = n_cov_reset
    result["gain_clamp"] = n_gain_clamp
    if rls and analysis and status == STATUS_OK:
        Pm = np.array([[y[9 + 3 * i + j2] for j2 in range(3)] for i in range(3)])
        Qm = np.array([[y[18 + 3 * i + j2] for j2 in range(3)] for i in range(3)])
        result["pq_err"] = float(np.max(np.abs(Pm @ Qm - np.eye(3))))
    return result


def run_mrac(p):
    """Generic SISO adaptation loop; same contract as the python backend."""
    cdef double dt = float(p["dt"])
    cdef long long n_steps = int(p["n_steps"])
    cdef long long out_every = int(p["out_every"])
    cdef int law = int(p["law"])
    cdef bint analysis = bool(p["analysis"])
    cdef bint normalized = bool(p["normalized"])
    cdef bint track_ec = bool(p.get("track_ec", False))
    cdef bint rls = law == 1

    Ap_a = np.ascontiguousarray(p["Ap"], dtype=np.float64).reshape(-1)
    Bp_a = np.ascontiguousarray(p["Bp"], dtype=np.float64)
    Cp_a = np.ascontiguousarray(p["Cp"], dtype=np.float64)
    Am_a = np.ascontiguousarray(p["Am"], dtype=np.float64).reshape(-1)
    Bm_a = np.ascontiguousarray(p["Bm"], dtype=np.float64)
    Cm_a = np.ascontiguousarray(p["Cm"], dtype=np.float64)
    F_a = np.ascontiguousarray(p["F"], dtype=np.float64).reshape(-1)
    g_a = np.ascontiguousarray(p["g"], dtype=np.float64)
    cdef double[:] Ap = Ap_a
    cdef double[:] Bp = Bp_a
    cdef double[:] Cp = Cp_a
    cdef double[:] Am = Am_a
    cdef double[:] Bm = Bm_a
    cdef double[:] Cm = Cm_a
    cdef double[:] F = F_a
    cdef double[:] g = g_a
    cdef int n_p = Bp_a.shape[0]
    cdef int p_m = Bm_a.shape[0]
    cdef int q = g_a.shape[0]
    cdef int m = 2 * (q + 1)
    if m > MAXM:
        raise ValueError(f"controller dimension {m} exceeds compiled cap {MAXM}")

    th0_a = np.ascontiguousarray(p["theta0"], dtype=np.float64)
    gam_a = np.ascontiguousarray(p["gamma"], dtype=np.float64)
    lo_a = np.ascontiguousarray(p["lower"], dtype=np.float64)
    up_a = np.ascontiguousarray(p["upper"], dtype=np.float64)
    ts_a = np.ascontiguousarray(p["theta_star"], dtype=np.float64)
    r_a = np.ascontiguousarray(p["r_half"], dtype=np.float64)
    ny_a = np.ascontiguousarray(p["noise_y"], dtype=np.float64)
    cdef double[:] gamma = gam_a
    cdef double[:] lower = lo_a
    cdef double[:] upper = up_a
    cdef double[:] theta_star = ts_a
    cdef double[:] r_half = r_a
    cdef double[:] noise_y = ny_a

    cdef double sgn_rho = float(p["sgn_rho"])
    cdef double beta = float(p["beta"]), p0 = float(p["p0"])
    cdef double rho_max = float(p["rho_max"])
    cdef double rho_abs = float(p["rho_abs"])
    cdef double inv_km = float(p["inv_km"])
    cdef double am_ec = float(p.get("am_ec", 0.0))
    cdef double kp_ec = float(p.get("kp_ec", 0.0))
    cdef double alarm = float(p["alarm"])

    cdef int o_xm = n_p
    cdef int o_w1 = o_xm + p_m
    cdef int o_w2 = o_w1 + q
    cdef int o_th = o_w2 + q
    cdef int o_P = o_th + m
    cdef int o_Q = o_P + (m * m if rls else 0)
    cdef int o_ec = o_Q + (m * m if (rls and analysis) else 0)
    cdef int dim = o_ec + (1 if track_ec else 0)

    state_a = np.zeros(dim)
    ytmp_a = np.zeros(dim)
    K_a = np.zeros((4, dim))
    omega_a = np.zeros(m)
    work_a = np.zeros(m)
    cdef double[:] y = state_a
    cdef double[:] ytmp = ytmp_a
    cdef double[:, :] K = K_a
    cdef double[:] omega = omega_a
    cdef double[:] work = work_a
    cdef double[MAXM * MAXM] scratch

    state_a[:n_p] = np.ascontiguousarray(p["xp0"], dtype=np.float64)
    state_a[o_xm:o_w1] = np.ascontiguousarray(p["xm0"], dtype=np.float64)
    state_a[o_th:o_th + m] = th0_a
    if rls:
        state_a[o_P:o_P + m * m] = (np.eye(m) * p0).ravel()
        if analysis:
            state_a[o_Q:o_Q + m * m] = (np.eye(m) / p0).ravel()

    cdef long long n_rows = n_steps // out_every + 1
    t_o = np.zeros(n_rows); r_o = np.zeros(n_rows)
    yp_o = np.zeros(n_rows); ym_o = np.zeros(n_rows)
    e1_o = np.zeros(n_rows); up_o = np.zeros(n_rows)
    th_o = np.zeros((n_rows, m)); gn_o = np.zeros((n_rows, m))
    clamp_a = np.zeros(n_rows, dtype=np.int64)
    cdef int n_pack = m * (m + 1) // 2
    peM_a = np.zeros((n_rows, n_pack))
    V_a = np.zeros(n_steps + 1 if analysis else 0)
    e1f_a = np.zeros(n_steps + 1)
    upf_a = np.zeros(n_steps + 1)
    ecf_a = np.zeros(n_steps + 1 if track_ec else 0)
    Mpe_a = np.zeros((m, m))
    regp_a = np.zeros(m)
    cdef double[:] c_t = t_o, c_r = r_o, c_yp = yp_o, c_ym = ym_o
    cdef double[:] c_e1 = e1_o, c_up = up_o
    cdef double[:, :] c_th = th_o, c_gn = gn_o
    cdef long long[:] clamp_flag = clamp_a
    cdef double[:, :] peM = peM_a
    cdef double[:] V = V_a
    cdef double[:] e1_full = e1f_a
    cdef double[:] up_full = upf_a
    cdef double[:] ec_full = ecf_a
    cdef double[:, :] Mpe = Mpe_a
    cdef double[:] reg_prev = regp_a

    cdef int i, j2, kk, stage, ev
    cdef long long j = 0, row = 0, ih, nidx
    cdef long long ev_accum = 0
    cdef long long n_cov_clamp = 0, n_cov_reset = 0, n_gain_clamp = 0
    cdef int status = STATUS_OK
    cdef long long halt_step = -1
    cdef double ny, y_p, y_m, e1, r, u, m2, s, eps, vterm
    cdef double[:] src
    cdef bint have_prev = False, do_k, finite_ok

    while True:
        nidx = j if j < n_steps else n_steps - 1
        ny = noise_y[nidx]
        y_p = 0.0
        for i in range(n_p):
            y_p += Cp[i] * y[i]
        y_m = 0.0
        for i in range(p_m):
            y_m += Cm[i] * y[o_xm + i]
        r = r_half[2 * j]
        for i in range(q):
            omega[i] = y[o_w1 + i]
            omega[q + i] = y[o_w2 + i]
        omega[2 * q] = y_p + ny
        omega[2 * q + 1] = r
        u = 0.0
        for i in range(m):
            u += y[o_th + i] * omega[i]
        if have_prev:
            for i in range(m):
                for j2 in range(m):
                    Mpe[i, j2] += 0.5 * dt * (
                        reg_prev[i] * reg_prev[j2] + omega[i] * omega[j2]
                    )
        for i in range(m):
            reg_prev[i] = omega[i]
        have_prev = True

        e1 = y_p - y_m
        e1_full[j] = e1
        up_full[j] = u
        if track_ec:
            ec_full[j] = y[o_ec]
        if analysis:
            vterm = 0.0
            if rls:
                for i in range(m):
                    s = 0.0
                    for j2 in range(m):
                        s += y[o_Q + i * m + j2] * (y[o_th + j2] - theta_star[j2])
                    vterm += (y[o_th + i] - theta_star[i]) * s
            else:
                for i in range(m):
                    s = y[o_th + i] - theta_star[i]
                    vterm += s * s / gamma[i]
            V[j] = 0.5 * inv_km * e1 * e1 + 0.5 * rho_abs * vterm
        if j % out_every == 0:
            c_t[row] = j * dt
            c_r[row] = r
            c_yp[row] = y_p
            c_ym[row] = y_m
            c_e1[row] = e1
            c_up[row] = u
            for i in range(m):
                c_th[row, i] = y[o_th + i]
                if rls:
                    c_gn[row, i] = y[o_P + i * m + i]
                else:
                    c_gn[row, i] = gamma[i]
            clamp_flag[row] = ev_accum
            ev_accum = 0
            kk = 0
            for i in range(m):
                for j2 in range(i, m):
                    peM[row, kk] = Mpe[i, j2]
                    kk += 1
            row += 1
        if j >= n_steps:
            break

        for stage in range(4):
            if stage == 0:
                src = y; ih = 2 * j
            elif stage == 3:
                src = ytmp; ih = 2 * j + 2
            else:
                src = ytmp; ih = 2 * j + 1
            y_p = 0.0
            for i in range(n_p):
                y_p += Cp[i] * src[i]
            y_m = 0.0
            for i in range(p_m):
                y_m += Cm[i] * src[o_xm + i]
            r = r_half[ih]
            for i in range(q):
                omega[i] = src[o_w1 + i]
                omega[q + i] = src[o_w2 + i]
            omega[2 * q] = y_p + ny
            omega[2 * q + 1] = r
            e1 = (y_p + ny) - y_m
            u = 0.0
            for i in range(m):
                u += src[o_th + i] * omega[i]
            for i in range(n_p):
                s = 0.0
                for j2 in range(n_p):
                    s += Ap[i * n_p + j2] * src[j2]
                K[stage, i] = s + Bp[i] * u
            for i in range(p_m):
                s = 0.0
                for j2 in range(p_m):
                    s += Am[i * p_m + j2] * src[o_xm + j2]
                K[stage, o_xm + i] = s + Bm[i] * r
            for i in range(q):
                s = 0.0
                for j2 in range(q):
                    s += F[i * q + j2] * src[o_w1 + j2]
                K[stage, o_w1 + i] = s + g[i] * u
                s = 0.0
                for j2 in range(q):
                    s += F[i * q + j2] * src[o_w2 + j2]
                K[stage, o_w2 + i] = s + g[i] * (y_p + ny)
            if rls:
                m2 = 1.0
                if normalized:
                    for i in range(m):
                        m2 += omega[i] * omega[i]
                for i in range(m):
                    s = 0.0
                    for j2 in range(m):
                        s += src[o_P + i * m + j2] * omega[j2]
                    work[i] = s
                for i in range(m):
                    for j2 in range(m):
                        K[stage, o_P + i * m + j2] = (
                            beta * src[o_P + i * m + j2]
                            - work[i] * work[j2] / m2
                        )
                if analysis:
                    eps = 0.0
                    for i in range(m):
                        eps += (src[o_th + i] - theta_star[i]) * omega[i]
                    for i in range(m):
                        K[stage, o_th + i] = (
                            -(sgn_rho * e1 + 0.5 * eps) * work[i] / m2
                        )
                    for i in range(m):
                        for j2 in range(m):
                            K[stage, o_Q + i * m + j2] = (
                                -beta * src[o_Q + i * m + j2]
                                + omega[i] * omega[j2] / m2
                            )
                else:
                    for i in range(m):
                        K[stage, o_th + i] = -sgn_rho * e1 * work[i] / m2
            else:
                for i in range(m):
                    K[stage, o_th + i] = -sgn_rho * e1 * gamma[i] * omega[i]
            for i in range(m):
                if src[o_th + i] >= upper[i] and K[stage, o_th + i] > 0.0:
                    K[stage, o_th + i] = 0.0
                elif src[o_th + i] <= lower[i] and K[stage, o_th + i] < 0.0:
                    K[stage, o_th + i] = 0.0
            if track_ec:
                eps = 0.0
                for i in range(m):
                    eps += (src[o_th + i] - theta_star[i]) * omega[i]
                K[stage, o_ec] = -am_ec * src[o_ec] + kp_ec * eps
            if stage == 0:
                for i in range(dim):
                    ytmp[i] = y[i] + 0.5 * dt * K[0, i]
            elif stage == 1:
                for i in range(dim):
                    ytmp[i] = y[i] + 0.5 * dt * K[1, i]
            elif stage == 2:
                for i in range(dim):
                    ytmp[i] = y[i] + dt * K[2, i]
        for i in range(dim):
            y[i] = y[i] + (dt / 6.0) * (
                K[0, i] + 2.0 * K[1, i] + 2.0 * K[2, i] + K[3, i]
            )

        do_k = False
        for i in range(m):
            if y[o_th + i] > upper[i]:
                y[o_th + i] = upper[i]; do_k = True
            elif y[o_th + i] < lower[i]:
                y[o_th + i] = lower[i]; do_k = True
        if do_k:
            ev_accum |= C_EV_GAIN_CLAMP
            n_gain_clamp += 1
        if rls:
            ev = _post_step_cov(&y[o_P], m, p0, rho_max, scratch)
            if ev & C_EV_COV_CLAMP:
                ev_accum |= C_EV_COV_CLAMP
                n_cov_clamp += 1
            if ev & C_EV_COV_RESET:
                ev_accum |= C_EV_COV_RESET
                n_cov_reset += 1
                if analysis:
                    for i in range(m * m):
                        y[o_Q + i] = 0.0
                    for i in range(m):
                        y[o_Q + i * m + i] = 1.0 / p0
            if analysis:
                for i in range(m):
                    for j2 in range(i + 1, m):
                        s = 0.5 * (y[o_Q + i * m + j2] + y[o_Q + j2 * m + i])
                        y[o_Q + i * m + j2] = s
                        y[o_Q + j2 * m + i] = s
        j += 1
        finite_ok = True
        for i in range(dim):
            if not isfinite(y[i]):
                finite_ok = False
                break
        if not finite_ok:
            status = STATUS_NONFINITE; halt_step = j; break
        y_p = 0.0
        for i in range(n_p):
            y_p += Cp[i] * y[i]
        do_k = fabs(y_p) > alarm
        for i in range(m):
            if fabs(y[o_th + i]) > alarm:
                do_k = True
        if do_k:
            status = STATUS_ALARM; halt_step = j; break

    cdef long long n_pts = j + 1
    result = {
        "t": t_o[:row], "r": r_o[:row], "y_p": yp_o[:row], "y_m": ym_o[:row],
        "e1": e1_o[:row], "u_p": up_o[:row],
        "theta": th_o[:row], "gain_diag": gn_o[:row],
        "clamp_flag": clamp_a[:row], "peM": peM_a[:row],
        "V": V_a[:n_pts] if analysis else V_a,
        "e1_full": e1f_a[:n_pts], "up_full": upf_a[:n_pts],
        "ec_full": ecf_a[:n_pts] if track_ec else ecf_a,
        "theta_final": state_a[o_th:o_th + m].copy(),
        "status": status, "halt_step": halt_step, "n_out": row,
        "cov_clamp": n_cov_clamp, "cov_reset": n_cov_reset,
        "gain_clamp": n_gain_clamp,
    }
    if rls and analysis and status == STATUS_OK:
        Pm = state_a[o_P:o_P + m * m].reshape(m, m)
        Qm = state_a[o_Q:o_Q + m * m].reshape(m, m)
        result["pq_err"] = float(np.max(np.abs(Pm @ Qm - np.eye(m))))
    return result
