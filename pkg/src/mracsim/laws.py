"""Gradient and forgetting-factor RLS adaptive laws with runtime monitors.

The gradient law updates the controller gains through a constant SPD gain
matrix. The RLS law replaces it with a time-varying covariance P(t) driven
by

    P' = beta * P - P w w^T P

which rewards persistent excitation with exponentially fast parameter
convergence. The covariance inverse Q = P^(-1) obeys the linear dual

    Q' = -beta * Q + w w^T

and is integrated side by side in analysis runs, both as a consistency
check and because the certified decrease function is quadratic in Q.

Two RLS update modes exist:

* realizable (default): theta' = -P e1 w sgn(rho), the form an online
  controller can actually compute;
* analysis: adds the correction -(1/2) P (theta_err . w) w, which needs the
  ideal gains and makes the decrease function

      V = e^T Pc e / 2 + |rho| theta_err^T Q theta_err / 2

  nonincreasing along trajectories. The correction enters with a minus
  sign: with eps = theta_err . w, the V-derivative bookkeeping yields
  dV/dt = (negative terms) + (1/2 + c) |rho| eps^2 for a correction
  coefficient c, so only c = -1/2 cancels the indefinite term. A +1/2
  coefficient doubles it instead and decrease is lost.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError

__all__ = [
    "Covariance",
    "GradientGain",
    "ProjectionBounds",
    "PeWindow",
    "gradient_update",
    "covariance_update",
    "covariance_rhs",
    "rls_update",
    "project",
    "pe_check",
    "dual_q_step",
    "lyapunov_value",
]


class GradientGain:
    """Constant symmetric positive definite adaptation gain."""

    __slots__ = ("Gamma",)

    def __init__(self, Gamma):
        G = np.atleast_2d(np.asarray(Gamma, dtype=float))
        if G.ndim == 2 and G.shape[0] == 1 and G.shape[1] > 1:
            G = np.diag(G[0])
        if G.shape[0] != G.shape[1] or not np.allclose(G, G.T, atol=1e-12):
            raise ValueError("adaptation gain must be square symmetric")
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise ValueError("adaptation gain must be positive definite") from None
        self.Gamma = G

    @property
    def dim(self) -> int:
        return self.Gamma.shape[0]


class Covariance:
    """Time-varying RLS gain matrix with forgetting factor and eigenvalue cap.

    P is kept symmetric by construction ((P + P^T)/2 after every step). If
    the largest eigenvalue exceeds rho_max the whole matrix is rescaled,
    which preserves the update direction; losing positive definiteness
    resets P to its initial value. Both events are flagged for the trace.
    """

    __slots__ = ("P", "beta", "rho_max", "P0", "last_clamped", "last_reset")

    def __init__(self, P, beta, rho_max=1e4):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[0] != P.shape[1]:
            raise ValueError("covariance must be square")
        if not np.allclose(P, P.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        np.linalg.cholesky(P)  # raises if not SPD
        if beta < 0:
            raise ValueError("forgetting factor must be >= 0")
        self.P = P.copy()
        self.beta = float(beta)
        self.rho_max = np.inf if rho_max is None else float(rho_max)
        self.P0 = P.copy()
        self.last_clamped = False
        self.last_reset = False

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def eig_range(self):
        w = np.linalg.eigvalsh(self.P)
        return float(w[0]), float(w[-1])


@dataclass
class ProjectionBounds:
    """Componentwise box the adapted gains must stay inside."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if self.lower.shape != self.upper.shape:
            raise ValueError("bounds must have matching shapes")
        if not np.all(self.lower < self.upper):
            raise ValueError("lower bounds must be strictly below upper bounds")

    def clamp(self, value):
        """Clip into the box; second return flags whether clipping occurred."""
        clipped = np.clip(value, self.lower, self.upper)
        return clipped, bool(np.any(clipped != value))


def project(value, derivative, bounds: ProjectionBounds):
    """Zero derivative components that push a bound-sitting value outward.

    Values found outside the box are treated as sitting on the nearest
    bound (the caller is expected to clamp them back).
    """
    value = np.asarray(value, dtype=float)
    d = np.asarray(derivative, dtype=float).copy()
    d[(value >= bounds.upper) & (d > 0.0)] = 0.0
    d[(value <= bounds.lower) & (d < 0.0)] = 0.0
    return d


def gradient_update(theta, e1, omega, gain: GradientGain, sgn_rho, dt):
    """One step of theta' = -Gamma e1 w sgn(rho) with inputs held.

    The right side is constant over the step, so the RK4 update collapses
    to theta + dt * theta'.
    """
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if theta.shape != omega.shape or theta.size != gain.dim:
        raise ValueError("dimension mismatch in gradient_update")
    if dt <= 0:
        raise ValueError("gradient_update needs dt > 0")
    deriv = -float(sgn_rho) * float(e1) * (gain.Gamma @ omega)
    out = theta + dt * deriv
    if not np.all(np.isfinite(out)):
        raise NumericsError("non-finite gains from gradient_update")
    return out


def covariance_rhs(P, omega, beta, normalized=False):
    """Right side of the covariance ODE, optionally regressor-normalized."""
    Pw = P @ omega
    m2 = 1.0 + omega @ omega if normalized else 1.0
    return beta * P - np.outer(Pw, Pw) / m2


def covariance_update(cov: Covariance, omega, dt, normalized=False) -> Covariance:
    """RK4 step of the covariance ODE, then re-symmetrize, cap, and check.

    Returns a new Covariance; clamp/reset events are flagged on it.
    """
    if dt <= 0:
        raise ValueError("covariance_update needs dt > 0")
    omega = np.asarray(omega, dtype=float)
    P = cov.P
    k1 = covariance_rhs(P, omega, cov.beta, normalized)
    k2 = covariance_rhs(P + 0.5 * dt * k1, omega, cov.beta, normalized)
    k3 = covariance_rhs(P + 0.5 * dt * k2, omega, cov.beta, normalized)
    k4 = covariance_rhs(P + dt * k3, omega, cov.beta, normalized)
    P = P + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise NumericsError("non-finite covariance")

    out = Covariance.__new__(Covariance)
    out.beta = cov.beta
    out.rho_max = cov.rho_max
    out.P0 = cov.P0
    out.last_clamped = False
    out.last_reset = False
    lam_max = float(np.linalg.eigvalsh(P)[-1])
    if lam_max > out.rho_max:
        P = P * (out.rho_max / lam_max)
        out.last_clamped = True
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        P = cov.P0.copy()
        out.last_reset = True
    out.P = P
    return out


def rls_update(theta, e1, omega, eps, cov: Covariance, sgn_rho, dt, normalized=False):
    """One step of the RLS gain update with inputs held.

    theta' = -P e1 w sgn(rho) - (1/2) P eps w, where eps = theta_err . w in
    analysis runs and 0 in realizable ones (see module docstring for why
    the correction is subtracted).
    """
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if theta.shape != omega.shape or theta.size != cov.dim:
        raise ValueError("dimension mismatch in rls_update")
    if dt <= 0:
        raise ValueError("rls_update needs dt > 0")
    m2 = 1.0 + omega @ omega if normalized else 1.0
    deriv = -(float(sgn_rho) * float(e1) + 0.5 * float(eps)) * (cov.P @ omega) / m2
    out = theta + dt * deriv
    if not np.all(np.isfinite(out)):
        raise NumericsError("non-finite gains from rls_update")
    return out


def dual_q_step(Q, omega, beta, dt):
    """RK4 step of the covariance-inverse dual Q' = -beta Q + w w^T."""
    if dt <= 0:
        raise ValueError("dual_q_step needs dt > 0")
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    omega = np.asarray(omega, dtype=float)
    W = np.outer(omega, omega)

    def rhs(q):
        return -beta * q + W

    k1 = rhs(Q)
    k2 = rhs(Q + 0.5 * dt * k1)
    k3 = rhs(Q + 0.5 * dt * k2)
    k4 = rhs(Q + dt * k3)
    out = Q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericsError("non-finite dual covariance")
    return 0.5 * (out + out.T)


class PeWindow:
    """Trailing buffer of regressor samples for excitation checks."""

    def __init__(self, T0: float, alpha0: float):
        if T0 <= 0 or alpha0 < 0:
            raise ValueError("need T0 > 0 and alpha0 >= 0")
        self.T0 = float(T0)
        self.alpha0 = float(alpha0)
        self.buffer = deque()

    def push(self, t: float, omega):
        omega = np.asarray(omega, dtype=float)
        if self.buffer and t <= self.buffer[-1][0]:
            raise ValueError("samples must arrive in increasing time order")
        self.buffer.append((float(t), omega))
        # keep one sample of slack beyond the window for the trapezoid edge
        cutoff = t - self.T0
        while len(self.buffer) > 2 and self.buffer[1][0] < cutoff:
            self.buffer.popleft()

    @property
    def span(self) -> float:
        if len(self.buffer) < 2:
            return 0.0
        return self.buffer[-1][0] - self.buffer[0][0]


def pe_check(win: PeWindow):
    """Windowed excitation verdict from the trapezoidal regressor integral.

    Returns a dict with is_pe (None while the buffer is still shorter than
    the window), the minimum-eigenvalue level lambda_min / T0, and the
    integral itself.
    """
    if win.span < win.T0:
        return {"is_pe": None, "min_eig_level": None, "integral": None}
    t_end = win.buffer[-1][0]
    samples = [(t, w) for t, w in win.buffer if t >= t_end - win.T0]
    m = samples[0][1].size
    M = np.zeros((m, m))
    for (t0, w0), (t1, w1) in zip(samples, samples[1:]):
        M += 0.5 * (t1 - t0) * (np.outer(w0, w0) + np.outer(w1, w1))
    lam_min = float(np.linalg.eigvalsh(M)[0])
    return {
        "is_pe": bool(lam_min >= win.alpha0 * win.T0),
        "min_eig_level": lam_min / win.T0,
        "integral": M,
    }


def lyapunov_value(e, theta_err, metric, e_weight=1.0, param_weight=1.0) -> float:
    """Certified decrease function e_w e^2/2 + p_w theta_err^T M theta_err / 2.

    metric is the inverse adaptation gain: Gamma^(-1) for the gradient law
    or Q = P^(-1) for RLS. Only the scalar tracking-error form is
    supported; the vector-state certificate for higher relative degree is
    out of scope.
    """
    e = np.asarray(e, dtype=float)
    if e.ndim > 0 and e.size > 1:
        raise NotImplementedError(
            "only the scalar-error certificate is supported (relative degree 1)"
        )
    theta_err = np.asarray(theta_err, dtype=float).reshape(-1)
    M = np.atleast_2d(np.asarray(metric, dtype=float))
    return float(
        0.5 * e_weight * float(e) ** 2
        + 0.5 * param_weight * (theta_err @ M @ theta_err)
    )
