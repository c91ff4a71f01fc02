"""Adaptive cruise control case study: vehicle following with adaptation.

Reduced longitudinal model v' = -a v + b u + d under a constant-headway
spacing policy. The follower tracks a first-order reference speed filter
driven by the lead speed plus a spacing correction. Gains (k1, k2, k3)
multiply [relative speed, spacing error, 1] and adapt by either law:

* gradient: k_i' = Pr{-gamma_i e w_i} on the raw regressor;
* RLS: covariance driven by the filtered regressor phi = w / (s + a_m),
  gains k' = Pr{-diag(P) e phi} elementwise (realizable mode).

In analysis mode the RLS law switches to the certified full-covariance
form -P e w sgn(b) - (1/2) P (k_err . phi) phi: the error-feedback term
carries the raw regressor (that is what the tracking-error dynamics
contain) while the correction carries the filtered one (that is what the
covariance integrates), and exactly this pairing makes

    V = e^2/2 + (b/2) k_err^T P^(-1) k_err

nonincreasing for constant lead speed and disturbance. Sensor noise is
additive on measured speed and gap, held over each step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NumericsError
from .laws import Covariance, ProjectionBounds, covariance_update, project
from .lti import rk4_step
from .trace import ACC_COLUMNS, SimTrace, pe_levels

__all__ = [
    "GRAVITY",
    "LeadSpec",
    "DisturbanceSpec",
    "VehicleModel",
    "SpacingPolicy",
    "AccRefModel",
    "AccGains",
    "AccState",
    "AccConfig",
    "carsim_reduction",
    "ideal_acc_gains",
    "lead_profile",
    "inject_noise",
    "acc_step_gradient",
    "acc_step_rls",
    "acc_metrics",
    "simulate_acc",
]

GRAVITY = 9.81


@dataclass
class LeadSpec:
    """Lead-vehicle speed profile; bounded derivative by construction.

    kinds: constant(value), ramp(v_start, v_end, t_start, t_end),
    piecewise(times, values) held between breakpoints, sinusoid(mean,
    amplitude, period).
    """

    kind: str
    value: float = 20.0
    v_start: float = 0.0
    v_end: float = 0.0
    t_start: float = 0.0
    t_end: float = 0.0
    times: tuple = ()
    values: tuple = ()
    mean: float = 20.0
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "ramp", "piecewise", "sinusoid"):
            raise ValueError(f"unknown lead kind {self.kind!r}")
        if self.kind == "ramp" and self.t_end <= self.t_start:
            raise ValueError("ramp needs t_end > t_start")
        if self.kind == "piecewise":
            if len(self.times) != len(self.values) or not self.times:
                raise ValueError("piecewise needs matching nonempty times/values")
            if list(self.times) != sorted(self.times):
                raise ValueError("piecewise times must be increasing")
        if self.kind == "sinusoid" and self.period <= 0:
            raise ValueError("sinusoid needs period > 0")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "ramp":
            frac = np.clip((t - self.t_start) / (self.t_end - self.t_start), 0.0, 1.0)
            return self.v_start + (self.v_end - self.v_start) * frac
        if self.kind == "piecewise":
            idx = np.searchsorted(np.asarray(self.times), t, side="right") - 1
            idx = np.clip(idx, 0, len(self.values) - 1)
            return np.asarray(self.values, dtype=float)[idx]
        w = 2.0 * np.pi / self.period
        return self.mean + self.amplitude * np.sin(w * t)


def lead_profile(spec: LeadSpec, t):
    """Lead speed at time t (scalar in, scalar out)."""
    out = spec.evaluate(np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass
class DisturbanceSpec:
    """Unmeasured acceleration disturbance d(t).

    kinds: constant(value), grade_step(slope_deg, t_on) modeling a road
    grade appearing at t_on: d = -g sin(slope).
    """

    kind: str = "constant"
    value: float = 0.0
    slope_deg: float = 0.0
    t_on: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "grade_step"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        d = -GRAVITY * np.sin(np.deg2rad(self.slope_deg))
        return np.where(t >= self.t_on, d, 0.0)


@dataclass
class VehicleModel:
    """Reduced longitudinal model v' = -a v + b u + d, a and b positive."""

    a: float
    b: float
    d_profile: DisturbanceSpec = field(default_factory=DisturbanceSpec)

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("vehicle constants a and b must be positive")


def carsim_reduction(mass, wheel_radius, wheel_inertia, drag):
    """Map full vehicle parameters onto the reduced (a, b) pair.

    Effective inertia is mass plus rotating wheel inertia referred to the
    ground, m_eff = m + I/R^2; then a = drag/m_eff and b = 1/(R m_eff) so
    u acts as a wheel torque command.
    """
    m_eff = mass + wheel_inertia / wheel_radius**2
    return drag / m_eff, 1.0 / (wheel_radius * m_eff)


@dataclass
class SpacingPolicy:
    """Desired gap s_d = s0 + h v (standstill gap plus constant headway)."""

    s0: float
    h: float

    def __post_init__(self):
        if self.s0 <= 0 or self.h <= 0:
            raise ValueError("spacing policy needs s0 > 0 and h > 0")

    def desired(self, v):
        return self.s0 + self.h * v


@dataclass
class AccRefModel:
    """First-order speed reference v_m = am/(s+am) (v_l + k delta)."""

    am: float
    k: float

    def __post_init__(self):
        if self.am <= 0 or self.k <= 0:
            raise ValueError("reference model needs am > 0 and k > 0")


def ideal_acc_gains(vm: VehicleModel, rm: AccRefModel, v_l, d=0.0):
    """Gains that cancel the plant exactly for the given lead speed and
    disturbance: k1 = (am-a)/b, k2 = am k/b, k3 = (a v_l - d)/b.

    k3 is time-varying whenever v_l or d vary.
    """
    k1 = (rm.am - vm.a) / vm.b
    k2 = rm.am * rm.k / vm.b
    k3 = (vm.a * np.asarray(v_l, dtype=float) - np.asarray(d, dtype=float)) / vm.b
    return k1, k2, float(k3) if np.ndim(k3) == 0 else k3


def inject_noise(signal, sigma, rng):
    """signal plus one zero-mean Gaussian draw of standard deviation sigma."""
    if sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if sigma == 0.0:
        return signal
    return signal + sigma * rng.standard_normal()


@dataclass
class AccGains:
    """Adapted gains and, for RLS, the filtered-regressor states."""

    k: np.ndarray
    phi: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float).reshape(3)
        self.phi = np.asarray(self.phi, dtype=float).reshape(3)


@dataclass
class AccState:
    """Vehicle-following state for the single-step operations."""

    t: float
    v: float
    x_r: float
    v_m: float
    gains: AccGains


def _acc_signals(state, spacing, v_l):
    v_r = v_l - state.v
    delta = state.x_r - spacing.desired(state.v)
    e = state.v - state.v_m
    return v_r, delta, e


def acc_step_gradient(
    state: AccState,
    vehicle: VehicleModel,
    spacing: SpacingPolicy,
    refmodel: AccRefModel,
    gamma,
    bounds: ProjectionBounds,
    dt: float,
    v_l: float,
    d: float = 0.0,
) -> AccState:
    """One joint RK4 step of vehicle, reference filter, and gradient gains.

    Lead speed and disturbance are held over the step.
    """
    if dt <= 0:
        raise ValueError("acc_step_gradient needs dt > 0")
    gamma = np.asarray(gamma, dtype=float).reshape(3)

    def rhs(y, t):
        v, x_r, v_m = y[0], y[1], y[2]
        k = y[3:6]
        v_r = v_l - v
        delta = x_r - spacing.desired(v)
        e = v - v_m
        w = np.array([v_r, delta, 1.0])
        u = k @ w
        dk = project(k, -gamma * e * w, bounds)
        return np.concatenate(
            (
                [
                    -vehicle.a * v + vehicle.b * u + d,
                    v_r,
                    -refmodel.am * v_m + refmodel.am * (v_l + refmodel.k * delta),
                ],
                dk,
            )
        )

    y = np.concatenate(([state.v, state.x_r, state.v_m], state.gains.k))
    y = rk4_step(rhs, y, state.t, dt)
    k, _ = bounds.clamp(y[3:6])
    return AccState(state.t + dt, y[0], y[1], y[2], AccGains(k, state.gains.phi))


def acc_step_rls(
    state: AccState,
    vehicle: VehicleModel,
    spacing: SpacingPolicy,
    refmodel: AccRefModel,
    cov: Covariance,
    bounds: ProjectionBounds,
    dt: float,
    v_l: float,
    d: float = 0.0,
    analysis: bool = False,
    normalized: bool = False,
):
    """One step of the RLS vehicle-following update; returns (state, cov).

    Realizable form uses the diagonal of P on the filtered regressor; the
    analysis form uses the certified full-covariance law (see module
    docstring). The covariance itself advances through covariance_update
    with phi held, inheriting its cap/reset policy.
    """
    if dt <= 0:
        raise ValueError("acc_step_rls needs dt > 0")
    kstar = None
    if analysis:
        kstar = np.array(ideal_acc_gains(vehicle, refmodel, v_l, d))
    P = cov.P

    def rhs(y, t):
        v, x_r, v_m = y[0], y[1], y[2]
        k = y[3:6]
        phi = y[6:9]
        v_r = v_l - v
        delta = x_r - spacing.desired(v)
        e = v - v_m
        w = np.array([v_r, delta, 1.0])
        u = k @ w
        m2 = 1.0 + phi @ phi if normalized else 1.0
        if analysis:
            dk = -e * (P @ w) - 0.5 * ((k - kstar) @ phi) * (P @ phi) / m2
        else:
            dk = -e * np.diag(P) * phi / m2
        dk = project(k, dk, bounds)
        return np.concatenate(
            (
                [
                    -vehicle.a * v + vehicle.b * u + d,
                    v_r,
                    -refmodel.am * v_m + refmodel.am * (v_l + refmodel.k * delta),
                ],
                dk,
                -refmodel.am * phi + w,
            )
        )

    y = np.concatenate(([state.v, state.x_r, state.v_m], state.gains.k, state.gains.phi))
    y = rk4_step(rhs, y, state.t, dt)
    cov = covariance_update(cov, state.gains.phi, dt, normalized=normalized)
    k, _ = bounds.clamp(y[3:6])
    new = AccState(state.t + dt, y[0], y[1], y[2], AccGains(k, y[6:9]))
    return new, cov


def acc_metrics(vr, delta, v, dt, settle_threshold=0.1):
    """Tracking metrics over undecimated series.

    max_accel and max_jerk come from central finite differences of v;
    settle_time is the first time after which |v_r| stays below the
    threshold (None when the run is too short to tell or never settles).
    """
    vr = np.asarray(vr, dtype=float)
    delta = np.asarray(delta, dtype=float)
    v = np.asarray(v, dtype=float)
    if vr.size == 0:
        raise ValueError("empty trace")
    out = {
        "rms_speed_error": float(np.sqrt(np.mean(vr**2))),
        "rms_spacing_error": float(np.sqrt(np.mean(delta**2))),
    }
    if v.size >= 3:
        accel = np.gradient(v, dt)
        out["max_accel"] = float(np.max(np.abs(accel)))
        out["max_jerk"] = float(np.max(np.abs(np.gradient(accel, dt))))
    else:
        out["max_accel"] = float("nan")
        out["max_jerk"] = float("nan")
    if vr.size < 3:
        out["settle_time"] = None
        return out
    loud = np.nonzero(np.abs(vr) >= settle_threshold)[0]
    if loud.size == 0:
        out["settle_time"] = 0.0
    elif loud[-1] == vr.size - 1:
        out["settle_time"] = None  # never settles within the run
    else:
        out["settle_time"] = float((loud[-1] + 1) * dt)
    return out


@dataclass
class AccConfig:
    dt: float
    t_final: float
    seed: int = 0
    noise_sigma: float = 0.0
    noise_hold: float = 0.01  # sensor sample period; draws held this long
    output_every: int = 10
    v0: float = None
    vm0: float = None
    delta0: float = 0.0
    k0: object = (0.0, 0.0, 0.0)
    gamma: object = (50.0, 30.0, 40.0)
    beta: float = 0.95
    p0: float = 100.0
    rho_max: float = 1e4
    normalized: bool = False
    bounds: object = ((-100.0, -100.0, -100.0), (100.0, 100.0, 100.0))
    pe_t0: float = 5.0
    pe_alpha0: float = 0.1
    analysis: bool = False
    alarm: float = 1e6
    backend: object = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_final <= self.dt:
            raise ValueError("t_final must exceed dt")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")


def simulate_acc(
    vehicle: VehicleModel,
    spacing: SpacingPolicy,
    refmodel: AccRefModel,
    lead: LeadSpec,
    law: str,
    config: AccConfig,
) -> SimTrace:
    """Run the vehicle-following loop and return the trace with metrics."""
    if law not in ("gradient", "rls"):
        raise ValueError(f"law must be 'gradient' or 'rls', got {law!r}")
    n_steps = int(round(config.t_final / config.dt))
    if n_steps < 1:
        raise ValueError("t_final must cover at least one step")
    t_half = np.arange(2 * n_steps + 1) * (0.5 * config.dt)
    vl_half = np.asarray(lead.evaluate(t_half), dtype=float)
    d_half = np.asarray(vehicle.d_profile.evaluate(t_half), dtype=float)
    rng = np.random.default_rng(config.seed)
    hold = max(1, int(round(config.noise_hold / config.dt)))
    n_slots = (n_steps + hold - 1) // hold
    noise_v = np.repeat(config.noise_sigma * rng.standard_normal(n_slots), hold)[
        :n_steps
    ]
    noise_x = np.repeat(config.noise_sigma * rng.standard_normal(n_slots), hold)[
        :n_steps
    ]

    v0 = float(vl_half[0]) if config.v0 is None else float(config.v0)
    vm0 = v0 if config.vm0 is None else float(config.vm0)
    xr0 = spacing.desired(v0) + float(config.delta0)
    lower = np.asarray(config.bounds[0], dtype=float).reshape(3)
    upper = np.asarray(config.bounds[1], dtype=float).reshape(3)

    params = {
        "dt": config.dt,
        "n_steps": n_steps,
        "out_every": config.output_every,
        "law": 1 if law == "rls" else 0,
        "analysis": config.analysis,
        "normalized": config.normalized,
        "a": vehicle.a,
        "b": vehicle.b,
        "am": refmodel.am,
        "kgain": refmodel.k,
        "s0": spacing.s0,
        "hway": spacing.h,
        "sgn_b": 1.0 if vehicle.b > 0 else -1.0,
        "v0": v0,
        "xr0": xr0,
        "vm0": vm0,
        "k0": np.asarray(config.k0, dtype=float).reshape(3),
        "gamma": np.broadcast_to(np.asarray(config.gamma, float), (3,)).copy(),
        "beta": config.beta,
        "p0": config.p0,
        "rho_max": np.inf if config.rho_max is None else float(config.rho_max),
        "lower": lower,
        "upper": upper,
        "vl_half": vl_half,
        "d_half": d_half,
        "noise_v": noise_v,
        "noise_x": noise_x,
        "alarm": config.alarm,
    }
    kernel = (
        _kernels.get_backend(config.backend) if config.backend else _kernels
    )
    res = kernel.run_acc(params)
    if res["status"] != _kernels.STATUS_OK:
        reasons = {
            _kernels.STATUS_NONFINITE: "non-finite state",
            _kernels.STATUS_ALARM: "alarm limit exceeded",
            _kernels.STATUS_COLLISION: "vehicle gap reached zero (collision)",
        }
        raise NumericsError(
            f"simulation halted at step {res['halt_step']} "
            f"(t={res['halt_step'] * config.dt:.6g} s): "
            f"{reasons.get(res['status'], 'halt')}; last gains="
            f"{res['k_final'].tolist()}",
            step=res["halt_step"],
        )

    row_dt = config.dt * config.output_every
    pe = pe_levels(res["peM"], row_dt, config.pe_t0)
    n_out = res["n_out"]
    data = {name: res[name] for name in ACC_COLUMNS if name in res}
    data["pe_level"] = pe
    data["V"] = (
        res["V"][:: config.output_every][:n_out]
        if config.analysis
        else np.full(n_out, np.nan)
    )
    data["clamp_flag"] = res["clamp_flag"]

    metrics = acc_metrics(
        res["vr_full"], res["delta_full"], res["v_full"], config.dt
    )
    metrics.update(
        {
            "k_final": res["k_final"],
            "min_gap": float(np.min(res["x_r"])) if n_out else float("nan"),
            "pe_level_final": float(pe[-1]) if n_out else float("nan"),
            "cov_clamp_events": res["cov_clamp"],
            "cov_reset_events": res["cov_reset"],
            "gain_clamp_events": res["gain_clamp"],
        }
    )
    if config.analysis:
        kstar = np.array(
            ideal_acc_gains(
                vehicle, refmodel, float(vl_half[-1]), float(d_half[-1])
            )
        )
        metrics["k_star_final"] = kstar
        metrics["k_tilde_final_norm"] = float(
            np.linalg.norm(res["k_final"] - kstar)
        )
        metrics["V_final"] = float(res["V"][-1])
        metrics["V_initial"] = float(res["V"][0])
        if "pq_err" in res:
            metrics["pq_err"] = res["pq_err"]

    metadata = {
        "mode": "acc",
        "law": law,
        "seed": config.seed,
        "dt": config.dt,
        "t_final": config.t_final,
        "output_every": config.output_every,
        "analysis_mode": config.analysis,
        "noise_sigma": config.noise_sigma,
        "backend": kernel.backend_name if hasattr(kernel, "backend_name") else kernel.KERNEL_KIND,
    }
    full = {
        "v_r": res["vr_full"],
        "delta": res["delta_full"],
        "v": res["v_full"],
        "V": res["V"],
        "t_rows": res["t"],
    }
    return SimTrace("acc", ACC_COLUMNS, data, metadata, metrics, full)
