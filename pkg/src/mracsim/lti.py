"""Polynomials, transfer functions, companion-form realizations, and RK4.

Numeric substrate for the controller-matching algebra and the simulators.
Degrees stay small (<= ~10), so everything is dense float64.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericsError

__all__ = [
    "Polynomial",
    "TransferFunction",
    "StateSpace",
    "poly_mul",
    "poly_add",
    "is_hurwitz",
    "companion",
    "canonical_realize",
    "rk4_step",
]


class Polynomial:
    """Real polynomial stored as dense descending coefficients, leading first.

    Exact-zero leading entries are trimmed at construction; no epsilon
    trimming, so the degree never changes silently under roundoff.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("polynomial needs a nonempty 1-d coefficient sequence")
        nz = np.nonzero(c)[0]
        c = c[nz[0] :] if nz.size else c[-1:]
        self.coeffs = np.ascontiguousarray(c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def is_monic(self) -> bool:
        return self.coeffs[0] == 1.0

    def monic(self) -> "Polynomial":
        """Scale so the leading coefficient is exactly 1."""
        return Polynomial(self.coeffs / self.coeffs[0])

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return poly_mul(self, other)
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __call__(self, s):
        return np.polyval(self.coeffs, s)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    """Product polynomial by coefficient convolution; deg = deg(a) + deg(b)."""
    return Polynomial(np.convolve(a.coeffs, b.coeffs))


def poly_add(a: Polynomial, b: Polynomial, sign: float = 1.0) -> Polynomial:
    """a + sign*b with right-aligned coefficient arrays."""
    la, lb = a.coeffs.size, b.coeffs.size
    n = max(la, lb)
    out = np.zeros(n)
    out[n - la :] += a.coeffs
    out[n - lb :] += sign * b.coeffs
    return Polynomial(out)


def is_hurwitz(p: Polynomial) -> bool:
    """True iff all roots lie strictly in the open left half-plane.

    Uses the Routh-Hurwitz table rather than an eigen-solver. A zero pivot
    or zero row (marginal cases, e.g. roots on the imaginary axis) returns
    False: only strict stability counts.
    """
    if p.degree < 1:
        raise ValueError("is_hurwitz needs degree >= 1 (constants have no roots)")
    c = p.coeffs.copy()
    if c[0] < 0:
        c = -c
    # all coefficients strictly positive is necessary
    if np.any(c <= 0):
        return False
    if p.degree == 1:
        return True
    row_prev = c[0::2].copy()
    row_cur = c[1::2].copy()
    if row_cur.size < row_prev.size:
        row_cur = np.append(row_cur, 0.0)
    for _ in range(p.degree - 1):
        pivot = row_cur[0]
        if pivot == 0.0:
            return False
        nxt = (pivot * row_prev[1:] - row_prev[0] * row_cur[1:]) / pivot
        nxt = np.append(nxt, 0.0)
        if nxt[0] <= 0.0:
            return False
        row_prev, row_cur = row_cur, nxt
    return True


class TransferFunction:
    """SISO rational transfer function gain * num(s) / den(s).

    num and den are normalized monic at construction, with their leading
    coefficients folded into gain. Must be proper: deg(num) <= deg(den).
    """

    __slots__ = ("gain", "num", "den")

    def __init__(self, gain, num, den):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        g = float(gain) * num.coeffs[0] / den.coeffs[0]
        self.gain = g
        self.num = num.monic()
        self.den = den.monic()
        if self.num.degree > self.den.degree:
            raise ValueError(
                f"improper transfer function: deg(num)={self.num.degree} > "
                f"deg(den)={self.den.degree}"
            )

    @property
    def relative_degree(self) -> int:
        return self.den.degree - self.num.degree

    @property
    def order(self) -> int:
        return self.den.degree

    def __call__(self, s):
        """Evaluate at (complex) frequency points."""
        return self.gain * self.num(s) / self.den(s)

    def __repr__(self):
        return (
            f"TransferFunction(gain={self.gain!r}, num={self.num.coeffs.tolist()}, "
            f"den={self.den.coeffs.tolist()})"
        )


class StateSpace:
    """Realization (A, B, C) with a mutable state vector; y = C @ x."""

    __slots__ = ("A", "B", "C", "state")

    def __init__(self, A, B, C, state=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.asarray(B, dtype=float).reshape(-1)
        self.C = np.asarray(C, dtype=float).reshape(-1)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.size != n or self.C.size != n:
            raise ValueError("inconsistent state-space dimensions")
        self.state = (
            np.zeros(n) if state is None else np.asarray(state, dtype=float).reshape(n)
        )

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def output(self) -> float:
        return float(self.C @ self.state)

    def markov(self, count: int) -> np.ndarray:
        """Impulse-response Markov parameters CB, CAB, CA^2B, ..."""
        out = np.empty(count)
        v = self.B.copy()
        for k in range(count):
            out[k] = self.C @ v
            v = self.A @ v
        return out


def companion(p: Polynomial) -> np.ndarray:
    """Companion matrix with characteristic polynomial p (monic required).

    Top row carries the negated coefficients, subdiagonal is identity, so
    det(sI - F) reproduces p coefficient for coefficient. Degree 0 gives an
    empty 0x0 matrix.
    """
    if not p.is_monic:
        raise ValueError("companion form needs a monic polynomial")
    n = p.degree
    F = np.zeros((n, n))
    if n == 0:
        return F
    F[0, :] = -p.coeffs[1:]
    if n > 1:
        F[1:, :-1] = np.eye(n - 1)
    return F


def canonical_realize(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization of a strictly causal system.

    A is the companion matrix of den (so det(sI - A) = den), B = e1, and C
    holds the numerator coefficients times the gain, padded to order n.
    """
    n = tf.den.degree
    if n == 0:
        raise ValueError("cannot realize a gain-only (degree-0 denominator) system")
    A = companion(tf.den)
    B = np.zeros(n)
    B[0] = 1.0
    C = np.zeros(n)
    nc = tf.gain * tf.num.coeffs
    C[n - nc.size :] = nc
    return StateSpace(A, B, C)


def rk4_step(deriv, state, t, dt):
    """One classical 4th-order Runge-Kutta step of x' = deriv(x, t).

    Halts with NumericsError on non-finite state or derivative.
    """
    if dt <= 0:
        raise ValueError("rk4_step needs dt > 0")
    x = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericsError("non-finite state entering rk4_step", values=x)
    k1 = np.asarray(deriv(x, t))
    k2 = np.asarray(deriv(x + 0.5 * dt * k1, t + 0.5 * dt))
    k3 = np.asarray(deriv(x + 0.5 * dt * k2, t + 0.5 * dt))
    k4 = np.asarray(deriv(x + dt * k3, t + dt))
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericsError("non-finite state produced by rk4_step", values=out)
    return out
