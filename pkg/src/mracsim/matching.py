"""Model-reference controller matching and the regressor filter bank.

The ideal controller gains make the closed loop reproduce the reference
model exactly. They are found by equating coefficients of the closed-loop
characteristic identity, one dense linear solve over polynomial
coefficients (sizes here never exceed a few dozen).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, MatchingError, NumericsError
from .lti import Polynomial, TransferFunction, companion, poly_add, poly_mul, rk4_step

__all__ = [
    "MracTheta",
    "RegressorState",
    "ValidationReport",
    "validate_problem",
    "build_lambda",
    "default_lambda0",
    "solve_matching",
    "closed_loop_tf",
    "regressor_step",
    "control_law",
    "tf_coeff_error",
]

# matching systems with condition number beyond this are treated as
# numerically non-coprime plant numerator/denominator
COND_LIMIT = 1e10


@dataclass
class MracTheta:
    """Controller parameter vector split into its four blocks.

    Flattening order is [theta1, theta2, theta3, c0] everywhere; total
    dimension 2n where n - 1 is the filter order.
    """

    theta1: np.ndarray
    theta2: np.ndarray
    theta3: float
    c0: float

    def __post_init__(self):
        self.theta1 = np.asarray(self.theta1, dtype=float).reshape(-1)
        self.theta2 = np.asarray(self.theta2, dtype=float).reshape(-1)
        if self.theta1.size != self.theta2.size:
            raise ValueError("theta1 and theta2 must have equal length n-1")
        self.theta3 = float(self.theta3)
        self.c0 = float(self.c0)

    @property
    def n(self) -> int:
        return self.theta1.size + 1

    @property
    def dim(self) -> int:
        return 2 * self.n

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.theta1, self.theta2, [self.theta3, self.c0]])

    @classmethod
    def from_vector(cls, vec, n: int) -> "MracTheta":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != 2 * n:
            raise ValueError(f"expected a {2 * n}-vector, got length {vec.size}")
        return cls(vec[: n - 1], vec[n - 1 : 2 * n - 2], vec[2 * n - 2], vec[2 * n - 1])

    @classmethod
    def zeros(cls, n: int) -> "MracTheta":
        return cls(np.zeros(n - 1), np.zeros(n - 1), 0.0, 0.0)


@dataclass
class ValidationReport:
    """Pass/fail record for every design assumption check."""

    checks: list = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = ""):
        self.checks.append((name, bool(ok), detail))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def failed(self):
        return [(n, d) for n, ok, d in self.checks if not ok]

    def require(self):
        if not self.ok:
            msgs = "; ".join(f"{n}: {d}" for n, d in self.failed())
            raise AssumptionError(f"problem assumptions violated: {msgs}")

    def __str__(self):
        lines = []
        for name, ok, detail in self.checks:
            mark = "pass" if ok else "FAIL"
            lines.append(f"[{mark}] {name}" + (f" ({detail})" if detail else ""))
        return "\n".join(lines)


def _hurwitz_or_constant(p: Polynomial) -> bool:
    from .lti import is_hurwitz

    return True if p.degree == 0 else is_hurwitz(p)


def validate_problem(
    plant: TransferFunction, refmodel: TransferFunction, n: int | None = None
) -> ValidationReport:
    """Check every structural assumption the design needs.

    n is the controller order (upper bound on the plant order); defaults to
    the plant order itself.
    """
    rep = ValidationReport()
    n_p = plant.order
    if n is None:
        n = n_p
    rep.add(
        "plant_zeros_hurwitz",
        _hurwitz_or_constant(plant.num),
        "plant numerator must be monic Hurwitz (minimum phase)",
    )
    rep.add("gain_sign_known", plant.gain != 0.0, "plant high-frequency gain is zero")
    rep.add(
        "order_bound",
        n >= n_p and n >= 1,
        f"controller order n={n} must cover plant order {n_p}",
    )
    rep.add(
        "strictly_proper",
        plant.relative_degree >= 1,
        "plant must be strictly proper (relative degree >= 1)",
    )
    rep.add(
        "refmodel_zeros_hurwitz",
        _hurwitz_or_constant(refmodel.num),
        "reference-model numerator must be monic Hurwitz",
    )
    rep.add(
        "refmodel_poles_hurwitz",
        refmodel.order >= 1 and _hurwitz_or_constant(refmodel.den),
        "reference-model denominator must be monic Hurwitz of degree >= 1",
    )
    rep.add(
        "refmodel_gain_nonzero", refmodel.gain != 0.0, "reference-model gain is zero"
    )
    rep.add(
        "relative_degree_match",
        plant.relative_degree == refmodel.relative_degree,
        f"relative degrees differ: plant {plant.relative_degree}, "
        f"reference model {refmodel.relative_degree}",
    )
    return rep


def default_lambda0(n: int, q_m: int, pole: float = 5.0) -> Polynomial:
    """Conventional (s + pole)^(n-1-q_m) filter completion."""
    deg = n - 1 - q_m
    if deg < 0:
        raise ValueError("reference-model numerator degree exceeds n - 1")
    out = Polynomial([1.0])
    for _ in range(deg):
        out = poly_mul(out, Polynomial([1.0, pole]))
    return out


def build_lambda(
    refmodel: TransferFunction, lambda0: Polynomial, n: int
) -> Polynomial:
    """Filter polynomial: lambda0 times the reference-model numerator.

    Must come out monic Hurwitz of degree exactly n - 1 (degree 0 for n = 1,
    where the filter bank is empty).
    """
    if not lambda0.is_monic or not _hurwitz_or_constant(lambda0):
        raise ValueError("lambda0 must be monic Hurwitz")
    lam = poly_mul(lambda0, refmodel.num)
    if lam.degree != n - 1:
        raise ValueError(
            f"filter polynomial degree {lam.degree} != n-1 = {n - 1}; "
            "adjust lambda0"
        )
    return lam


def _pad_desc(coeffs: np.ndarray, length: int) -> np.ndarray:
    out = np.zeros(length)
    out[length - coeffs.size :] = coeffs
    return out


def _poly_from_block(vec: np.ndarray) -> Polynomial:
    # block [v0 ... v_{n-2}] stands for v0 s^{n-2} + ... + v_{n-2}
    return Polynomial(vec) if vec.size else Polynomial([0.0])


def solve_matching(
    plant: TransferFunction,
    refmodel: TransferFunction,
    lam: Polynomial,
    n: int | None = None,
) -> MracTheta:
    """Ideal controller parameters that match the closed loop to the model.

    Solves the coefficient identity

        (theta1 . alpha) R_p + k_p (theta2 . alpha) Z_p + theta3 k_p Z_p L
            = L R_p - Z_p L_0 R_m

    for the 2n-1 feedback gains, with c0 = k_m / k_p. A condition number
    above COND_LIMIT or a residual above 1e-9 is rejected as numerically
    non-coprime.
    """
    n_p = plant.order
    if n is None:
        n = lam.degree + 1
    if lam.degree != n - 1:
        raise ValueError("filter polynomial degree must be n - 1")
    validate_problem(plant, refmodel, n).require()

    k_p, Z_p, R_p = plant.gain, plant.num, plant.den
    k_m, R_m = refmodel.gain, refmodel.den
    lam0_c, rem = np.polydiv(lam.coeffs, refmodel.num.coeffs)
    if rem.size and np.max(np.abs(rem)) > 1e-9 * max(1.0, np.max(np.abs(lam.coeffs))):
        raise MatchingError("filter polynomial must contain the model numerator")
    lam0 = Polynomial(lam0_c)

    L = n + n_p - 1  # coefficient equations, degrees n+n_p-2 .. 0
    cols = []
    for i in range(n - 1):  # theta1 block: s^{n-2-i} R_p
        shifted = np.concatenate([R_p.coeffs, np.zeros(n - 2 - i)])
        cols.append(_pad_desc(shifted, L))
    for i in range(n - 1):  # theta2 block: k_p s^{n-2-i} Z_p
        shifted = np.concatenate([k_p * Z_p.coeffs, np.zeros(n - 2 - i)])
        cols.append(_pad_desc(shifted, L))
    cols.append(_pad_desc(k_p * poly_mul(Z_p, lam).coeffs, L))  # theta3 column
    M = np.column_stack(cols)

    lhs = poly_mul(lam, R_p).coeffs  # monic, degree n-1+n_p
    rhs_full = poly_mul(poly_mul(Z_p, lam0), R_m).coeffs  # monic, same degree
    b = _pad_desc(lhs, L + 1) - _pad_desc(rhs_full, L + 1)
    if abs(b[0]) > 1e-12:
        raise MatchingError("leading coefficients failed to cancel in matching")
    b = b[1:]

    sv = np.linalg.svd(M, compute_uv=False)
    cond = np.inf if sv[-1] == 0.0 else sv[0] / sv[-1]
    if cond > COND_LIMIT:
        raise MatchingError(
            f"matching system condition number {cond:.3g} exceeds {COND_LIMIT:.0e}; "
            "plant numerator and denominator are numerically non-coprime"
        )
    x, *_ = np.linalg.lstsq(M, b, rcond=None)
    residual = np.max(np.abs(M @ x - b))
    if residual > 1e-9 * max(1.0, np.max(np.abs(b))):
        raise MatchingError(f"matching residual {residual:.3g} too large")

    return MracTheta(x[: n - 1], x[n - 1 : 2 * n - 2], x[2 * n - 2], k_m / k_p)


def closed_loop_tf(
    plant: TransferFunction, theta: MracTheta, lam: Polynomial
) -> TransferFunction:
    """Closed-loop transfer from reference to plant output for fixed gains.

    Assembled symbolically (after cancelling one common filter factor):
    numerator c0 k_p Z_p L over the matching denominator, normalized monic.
    """
    n = theta.n
    if lam.degree != n - 1:
        raise ValueError("filter polynomial degree inconsistent with theta")
    k_p, Z_p, R_p = plant.gain, plant.num, plant.den
    den = poly_mul(lam, R_p)
    den = poly_add(den, poly_mul(_poly_from_block(theta.theta1), R_p), sign=-1.0)
    den = poly_add(
        den, k_p * poly_mul(_poly_from_block(theta.theta2), Z_p), sign=-1.0
    )
    den = poly_add(den, (theta.theta3 * k_p) * poly_mul(Z_p, lam), sign=-1.0)
    return TransferFunction(theta.c0 * k_p, poly_mul(Z_p, lam), den)


def tf_coeff_error(t1: TransferFunction, t2: TransferFunction) -> float:
    """Max coefficient discrepancy between two transfer functions.

    Compares the monic cross products num1*den2 vs num2*den1 plus the gain
    difference; returns inf when the relative degrees differ.
    """
    p1 = poly_mul(t1.num, t2.den).coeffs
    p2 = poly_mul(t2.num, t1.den).coeffs
    if p1.size != p2.size:
        return float("inf")
    return max(float(np.max(np.abs(p1 - p2))), abs(t1.gain - t2.gain))


class RegressorState:
    """Input/output filter bank producing the 2n-dimensional regressor.

    Both filters share the companion matrix of the filter polynomial; for
    n = 1 the bank is empty and the regressor is just [y_p, r].
    """

    __slots__ = ("lam", "F", "g", "omega1", "omega2")

    def __init__(self, lam: Polynomial):
        if not lam.is_monic:
            raise ValueError("filter polynomial must be monic")
        self.lam = lam
        self.F = companion(lam)
        m = lam.degree
        self.g = np.zeros(m)
        if m:
            self.g[0] = 1.0
        self.omega1 = np.zeros(m)
        self.omega2 = np.zeros(m)

    @property
    def filter_order(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.filter_order + 1

    def omega(self, y_p: float, r: float) -> np.ndarray:
        return np.concatenate([self.omega1, self.omega2, [y_p, r]])


def regressor_step(
    rs: RegressorState, u_p: float, y_p: float, r: float, dt: float
) -> np.ndarray:
    """Advance both filters one RK4 step (inputs held) and assemble omega."""
    if dt <= 0:
        raise ValueError("regressor_step needs dt > 0")
    if not np.all(np.isfinite([u_p, y_p, r])):
        raise NumericsError("non-finite input to regressor_step")
    if rs.filter_order:
        rs.omega1 = rk4_step(lambda x, t: rs.F @ x + rs.g * u_p, rs.omega1, 0.0, dt)
        rs.omega2 = rk4_step(lambda x, t: rs.F @ x + rs.g * y_p, rs.omega2, 0.0, dt)
    return rs.omega(y_p, r)


def control_law(theta, omega) -> float:
    """Certainty-equivalence control: inner product of gains and regressor."""
    vec = theta.as_vector() if isinstance(theta, MracTheta) else np.asarray(theta)
    omega = np.asarray(omega, dtype=float)
    if vec.shape != omega.shape:
        raise ValueError(
            f"dimension mismatch: theta {vec.shape} vs regressor {omega.shape}"
        )
    return float(vec @ omega)
