"""Closed-loop adaptation for generic SISO plants.

The plant runs in its own canonical realization next to the reference
model, filter bank, and adaptive law; the composite error form exists only
as an optional cross-check channel (track_composite_error, first-order
plants). One joint RK4 advances everything, so decrease certificates
measured on the discrete trajectory inherit the integrator's accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import AssumptionError, MatchingError, NumericsError
from .lti import TransferFunction, canonical_realize, companion
from .matching import (
    build_lambda,
    default_lambda0,
    solve_matching,
    validate_problem,
)
from .trace import SimTrace, mrac_columns, pe_levels

__all__ = ["ReferenceSpec", "reference_signal", "MracConfig", "simulate_mrac"]


@dataclass
class ReferenceSpec:
    """Deterministic reference input r(t).

    kinds: constant(value), step(value, t_on), sum_of_sinusoids(amplitudes,
    frequencies[, phases]), square(amplitude, period). A sum of k distinct
    sinusoids is declared rich of order 2k in the run metadata; other
    waveforms are left unlabeled.
    """

    kind: str
    value: float = 0.0
    t_on: float = 0.0
    amplitudes: tuple = ()
    frequencies: tuple = ()
    phases: tuple = ()
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "step", "sum_of_sinusoids", "square"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.kind == "sum_of_sinusoids":
            self.amplitudes = tuple(float(a) for a in self.amplitudes)
            self.frequencies = tuple(float(f) for f in self.frequencies)
            if not self.frequencies:
                raise ValueError("sum_of_sinusoids needs a nonempty frequency list")
            if len(self.amplitudes) != len(self.frequencies):
                raise ValueError("amplitudes and frequencies must pair up")
            if any(f <= 0 for f in self.frequencies):
                raise ValueError("sinusoid frequencies must be positive")
            if not self.phases:
                self.phases = (0.0,) * len(self.frequencies)
        if self.kind == "square" and self.period <= 0:
            raise ValueError("square wave needs period > 0")

    @property
    def richness_order(self):
        if self.kind == "sum_of_sinusoids":
            return 2 * len(set(self.frequencies))
        return None

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "step":
            return np.where(t >= self.t_on, self.value, 0.0)
        if self.kind == "sum_of_sinusoids":
            out = np.zeros_like(t)
            for a, f, ph in zip(self.amplitudes, self.frequencies, self.phases):
                out += a * np.sin(f * t + ph)
            return out
        # square: +amp on the first half period, -amp on the second
        frac = np.mod(t, self.period) / self.period
        return np.where(frac < 0.5, self.amplitude, -self.amplitude)


def reference_signal(spec: ReferenceSpec, t):
    """Evaluate the reference at time t (scalar in, scalar out)."""
    out = spec.evaluate(np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass
class MracConfig:
    dt: float
    t_final: float
    seed: int = 0
    noise_sigma: float = 0.0
    noise_hold: float = 0.01  # sensor sample period; draws held this long
    output_every: int = 10
    theta0: object = None  # None -> zeros, "star" -> ideal gains, or a vector
    gamma: object = 10.0  # gradient law: scalar or per-component diagonal
    beta: float = 0.95
    p0: float = 100.0
    rho_max: float = 1e4
    normalized: bool = False
    bounds: object = None  # None or (lower, upper)
    pe_t0: float = 5.0
    pe_alpha0: float = 0.1
    analysis: bool = False
    track_composite_error: bool = False
    alarm: float = 1e6
    n: int = 0  # 0 -> plant order
    lambda0: object = None
    xp0: object = None
    xm0: object = None
    backend: object = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_final <= self.dt:
            raise ValueError("t_final must exceed dt")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")


def simulate_mrac(
    plant: TransferFunction,
    refmodel: TransferFunction,
    law: str,
    reference: ReferenceSpec,
    config: MracConfig,
) -> SimTrace:
    """Run the adaptive loop and return the trace with metrics attached."""
    if law not in ("gradient", "rls"):
        raise ValueError(f"law must be 'gradient' or 'rls', got {law!r}")
    n = config.n or plant.order
    validate_problem(plant, refmodel, n).require()
    if plant.relative_degree != 1:
        raise AssumptionError(
            "the implemented laws need relative degree 1 "
            f"(got {plant.relative_degree})"
        )
    lambda0 = config.lambda0 or default_lambda0(n, refmodel.num.degree)
    lam = build_lambda(refmodel, lambda0, n)
    m = 2 * n

    theta_star = None
    try:
        theta_star = solve_matching(plant, refmodel, lam, n)
    except MatchingError:
        if config.analysis or config.theta0 == "star":
            raise
    if config.analysis and refmodel.gain <= 0:
        raise AssumptionError(
            "analysis mode needs a positive reference-model gain "
            "(scalar certificate)"
        )

    sgn_rho = float(np.sign(plant.gain) * np.sign(refmodel.gain))
    rho_abs = abs(plant.gain / refmodel.gain)
    inv_km = 1.0 / refmodel.gain if refmodel.gain > 0 else 0.0

    plant_ss = canonical_realize(plant)
    model_ss = canonical_realize(refmodel)
    F = companion(lam)
    g = np.zeros(n - 1)
    if n > 1:
        g[0] = 1.0

    n_steps = int(round(config.t_final / config.dt))
    if n_steps < 1:
        raise ValueError("t_final must cover at least one step")
    t_half = np.arange(2 * n_steps + 1) * (0.5 * config.dt)
    r_half = np.asarray(reference.evaluate(t_half), dtype=float)
    rng = np.random.default_rng(config.seed)
    hold = max(1, int(round(config.noise_hold / config.dt)))
    n_slots = (n_steps + hold - 1) // hold
    noise_y = np.repeat(config.noise_sigma * rng.standard_normal(n_slots), hold)[
        :n_steps
    ]

    if config.theta0 is None:
        theta0 = np.zeros(m)
    elif isinstance(config.theta0, str) and config.theta0 == "star":
        theta0 = theta_star.as_vector()
    else:
        theta0 = np.asarray(config.theta0, dtype=float).reshape(m)

    if config.bounds is None:
        lower = np.full(m, -np.inf)
        upper = np.full(m, np.inf)
    else:
        lower = np.broadcast_to(np.asarray(config.bounds[0], float), (m,)).copy()
        upper = np.broadcast_to(np.asarray(config.bounds[1], float), (m,)).copy()

    gamma = np.broadcast_to(np.asarray(config.gamma, float), (m,)).copy()
    if np.any(gamma <= 0):
        raise ValueError("gradient gains must be positive")

    track_ec = bool(config.track_composite_error)
    if track_ec and (n != 1 or theta_star is None):
        raise AssumptionError(
            "composite-error tracking needs a first-order matchable problem"
        )

    params = {
        "dt": config.dt,
        "n_steps": n_steps,
        "out_every": config.output_every,
        "law": 1 if law == "rls" else 0,
        "analysis": config.analysis,
        "normalized": config.normalized,
        "track_ec": track_ec,
        "Ap": plant_ss.A,
        "Bp": plant_ss.B,
        "Cp": plant_ss.C,
        "xp0": np.zeros(plant.order) if config.xp0 is None else config.xp0,
        "Am": model_ss.A,
        "Bm": model_ss.B,
        "Cm": model_ss.C,
        "xm0": np.zeros(refmodel.order) if config.xm0 is None else config.xm0,
        "F": F,
        "g": g,
        "theta0": theta0,
        "sgn_rho": sgn_rho,
        "gamma": gamma,
        "beta": config.beta,
        "p0": config.p0,
        "rho_max": np.inf if config.rho_max is None else float(config.rho_max),
        "lower": lower,
        "upper": upper,
        "theta_star": (
            theta_star.as_vector() if theta_star is not None else np.zeros(m)
        ),
        "rho_abs": rho_abs,
        "inv_km": inv_km,
        "am_ec": -model_ss.A[0, 0] if refmodel.order == 1 else 0.0,
        "kp_ec": plant.gain,
        "r_half": r_half,
        "noise_y": noise_y,
        "alarm": config.alarm,
    }
    kernel = (
        _kernels.get_backend(config.backend) if config.backend else _kernels
    )
    res = kernel.run_mrac(params)
    if res["status"] != _kernels.STATUS_OK:
        reasons = {
            _kernels.STATUS_NONFINITE: "non-finite state",
            _kernels.STATUS_ALARM: "alarm limit exceeded",
        }
        raise NumericsError(
            f"simulation halted at step {res['halt_step']} "
            f"(t={res['halt_step'] * config.dt:.6g} s): "
            f"{reasons.get(res['status'], 'halt')}; "
            f"last theta={res['theta_final'].tolist()}",
            step=res["halt_step"],
        )

    row_dt = config.dt * config.output_every
    pe = pe_levels(res["peM"], row_dt, config.pe_t0)
    n_out = res["n_out"]
    columns = mrac_columns(m, law)
    data = {
        "t": res["t"],
        "r": res["r"],
        "y_p": res["y_p"],
        "y_m": res["y_m"],
        "e1": res["e1"],
        "u_p": res["u_p"],
        "pe_level": pe,
        "V": (
            res["V"][:: config.output_every][:n_out]
            if config.analysis
            else np.full(n_out, np.nan)
        ),
    }
    for i in range(m):
        data[f"theta_{i}"] = res["theta"][:, i]
    prefix = "Pdiag" if law == "rls" else "Gammadiag"
    for i in range(m):
        data[f"{prefix}_{i}"] = res["gain_diag"][:, i]

    e1_full = res["e1_full"]
    tail = max(1, e1_full.size // 10)
    metrics = {
        "max_abs_e1": float(np.max(np.abs(e1_full))),
        "mean_abs_e1_last10pct": float(np.mean(np.abs(e1_full[-tail:]))),
        "max_abs_u": float(np.max(np.abs(res["up_full"]))),
        "theta_final": res["theta_final"],
        "pe_level_final": float(pe[-1]) if n_out else float("nan"),
        "cov_clamp_events": res["cov_clamp"],
        "cov_reset_events": res["cov_reset"],
        "gain_clamp_events": res["gain_clamp"],
    }
    if theta_star is not None:
        tvec = theta_star.as_vector()
        metrics["theta_star"] = tvec
        metrics["theta_tilde_final_norm"] = float(
            np.linalg.norm(res["theta_final"] - tvec)
        )
    if config.analysis:
        metrics["V_final"] = float(res["V"][-1])
        metrics["V_initial"] = float(res["V"][0])
        if "pq_err" in res:
            metrics["pq_err"] = res["pq_err"]

    metadata = {
        "mode": "generic-mrac",
        "law": law,
        "seed": config.seed,
        "dt": config.dt,
        "t_final": config.t_final,
        "output_every": config.output_every,
        "analysis_mode": config.analysis,
        "richness_order": reference.richness_order,
        "n": n,
        "backend": kernel.backend_name if hasattr(kernel, "backend_name") else kernel.KERNEL_KIND,
    }
    full = {
        "e1": e1_full,
        "u_p": res["up_full"],
        "V": res["V"],
        "theta": res["theta"],
        "theta_final": res["theta_final"],
        "t_rows": res["t"],
    }
    if track_ec:
        full["e_c"] = res["ec_full"]
    return SimTrace("generic-mrac", columns, data, metadata, metrics, full)
