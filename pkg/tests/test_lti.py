import math

import numpy as np
import pytest

from mracsim.errors import NumericsError
from mracsim.lti import (
    Polynomial,
    StateSpace,
    TransferFunction,
    canonical_realize,
    companion,
    is_hurwitz,
    poly_add,
    poly_mul,
    rk4_step,
)


def test_poly_trim_and_degree():
    p = Polynomial([0.0, 0.0, 1.0, 3.0, 2.0])
    assert p.degree == 2
    assert p.is_monic
    assert Polynomial([0.0]).degree == 0


def test_poly_mul_identity():
    p = poly_mul(Polynomial([1, 1]), Polynomial([1]))
    assert np.array_equal(p.coeffs, [1, 1])


def test_poly_mul_hand_expansion():
    # (s+1)(s+2) = s^2 + 3s + 2
    p = poly_mul(Polynomial([1, 1]), Polynomial([1, 2]))
    assert np.array_equal(p.coeffs, [1, 3, 2])


def test_poly_mul_monomials():
    p = poly_mul(Polynomial([1, 0]), Polynomial([1, 0]))
    assert np.array_equal(p.coeffs, [1, 0, 0])


def test_poly_add_alignment():
    p = poly_add(Polynomial([1, 0, 0]), Polynomial([1, 2]), sign=-1.0)
    assert np.array_equal(p.coeffs, [1, -1, -2])


def test_hurwitz_first_order():
    assert is_hurwitz(Polynomial([1, 3]))
    assert not is_hurwitz(Polynomial([1, -3]))


def test_hurwitz_root_at_plus_one():
    assert not is_hurwitz(Polynomial([1, 0, -1]))


def test_hurwitz_cubic():
    # s^3 + 2s^2 + 2s + 1 = (s+1)(s^2+s+1), roots -1 and -0.5 +- j0.866
    assert is_hurwitz(Polynomial([1, 2, 2, 1]))


def test_hurwitz_marginal_is_false():
    # pure imaginary pair s^2 + 4
    assert not is_hurwitz(Polynomial([1, 0, 4]))


def test_hurwitz_rejects_constants():
    with pytest.raises(ValueError):
        is_hurwitz(Polynomial([5.0]))


def test_hurwitz_agrees_with_roots():
    # cross-check against companion-matrix roots on random integer polynomials
    rng = np.random.default_rng(42)
    checked = 0
    for _ in range(1000):
        deg = rng.integers(1, 6)
        c = rng.integers(-9, 10, size=deg + 1).astype(float)
        if c[0] == 0:
            continue
        p = Polynomial(c)
        if p.degree < 1:
            continue
        max_re = np.max(np.real(np.roots(p.coeffs)))
        verdict = is_hurwitz(p)
        if abs(max_re) <= 1e-7:
            # too close to the axis for the root solver to arbitrate;
            # strict stability must still call it non-Hurwitz
            assert not verdict
        else:
            assert verdict == (max_re < 0)
        checked += 1
    assert checked > 900


def test_tf_normalizes_monic():
    tf = TransferFunction(3.0, [2.0], [4.0, 8.0])
    assert tf.num.is_monic and tf.den.is_monic
    assert tf.gain == pytest.approx(1.5)
    assert tf.relative_degree == 1


def test_tf_rejects_improper():
    with pytest.raises(ValueError):
        TransferFunction(1.0, [1, 0, 0], [1, 1])


def test_realize_first_order():
    ss = canonical_realize(TransferFunction(1.0, [1.0], [1.0, 2.0]))
    assert np.array_equal(ss.A, [[-2.0]])
    assert np.array_equal(ss.B, [1.0])
    assert np.array_equal(ss.C, [1.0])


def test_realize_second_order():
    ss = canonical_realize(TransferFunction(1.0, [1.0], [1.0, 3.0, 2.0]))
    assert np.array_equal(ss.A, [[-3.0, -2.0], [1.0, 0.0]])
    assert np.array_equal(ss.B, [1.0, 0.0])
    assert np.array_equal(ss.C, [0.0, 1.0])


def test_realize_rejects_gain_only():
    with pytest.raises(ValueError):
        canonical_realize(TransferFunction(2.0, [1.0], [1.0]))


def test_realize_characteristic_polynomial():
    den = Polynomial([1.0, 2.5, -0.5, 4.0])
    ss = canonical_realize(TransferFunction(1.0, [1.0], den))
    assert np.allclose(np.poly(ss.A), den.coeffs, atol=1e-12)


def markov_from_tf(tf, count):
    # long-division Markov parameters: num/den = m0 s^-1 + m1 s^-2 + ...
    # for relative degree >= 1 (strictly proper)
    n = tf.den.degree
    num = np.zeros(n)
    nc = tf.gain * tf.num.coeffs
    num[n - nc.size :] = nc
    den = tf.den.coeffs
    m = np.empty(count)
    rem = num.copy()
    for k in range(count):
        m[k] = rem[0]
        rem = np.append(rem[1:], 0.0) - m[k] * np.append(den[1 : n + 1], 0.0)[:n]
    return m


def test_realize_markov_parameters():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n = int(rng.integers(1, 7))
        den = np.concatenate(([1.0], rng.uniform(-2, 2, size=n)))
        mdeg = int(rng.integers(0, n))
        num = np.concatenate(([1.0], rng.uniform(-2, 2, size=mdeg)))
        tf = TransferFunction(rng.uniform(0.5, 3.0), num, den)
        ss = canonical_realize(tf)
        assert np.allclose(ss.markov(2 * n), markov_from_tf(tf, 2 * n), atol=1e-12)


def test_realize_frequency_response_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        den = np.concatenate(([1.0], rng.uniform(0.5, 3.0, size=n)))
        mdeg = int(rng.integers(0, n))
        num = np.concatenate(([1.0], rng.uniform(0.2, 2.0, size=mdeg)))
        tf = TransferFunction(rng.uniform(0.5, 3.0), num, den)
        ss = canonical_realize(tf)
        w = rng.uniform(0.1, 10.0, size=10)
        s = 1j * w
        sI_A = s[:, None, None] * np.eye(n) - ss.A
        resp_ss = np.array(
            [ss.C @ np.linalg.solve(sI_A[i], ss.B) for i in range(10)]
        )
        resp_tf = tf(s)
        assert np.max(np.abs(resp_ss - resp_tf) / np.abs(resp_tf)) < 1e-9


def test_companion_empty_for_constants():
    F = companion(Polynomial([1.0]))
    assert F.shape == (0, 0)


def test_rk4_constant_field():
    out = rk4_step(lambda x, t: np.zeros_like(x), np.array([5.0]), 0.0, 0.1)
    assert out[0] == 5.0


def test_rk4_exponential_decay():
    x = np.array([1.0])
    dt = 1e-3
    for k in range(1000):
        x = rk4_step(lambda s, t: -s, x, k * dt, dt)
    assert abs(x[0] - math.exp(-1.0)) < 1e-9


def test_rk4_linear_in_time_exact():
    out = rk4_step(lambda x, t: np.ones_like(x), np.array([0.0]), 0.0, 0.1)
    assert out[0] == pytest.approx(0.1, abs=1e-15)


def test_rk4_order():
    # per-step error on x' = lambda x should shrink ~16x when dt halves
    lam = -1.7

    def err(dt):
        out = rk4_step(lambda x, t: lam * x, np.array([1.0]), 0.0, dt)
        return abs(out[0] - math.exp(lam * dt))

    ratio = err(0.1) / err(0.05)
    assert ratio >= 2**4 * 0.9


def test_rk4_halts_on_nonfinite():
    with pytest.raises(NumericsError):
        rk4_step(lambda x, t: x * np.inf, np.array([1.0]), 0.0, 0.1)
    with pytest.raises(ValueError):
        rk4_step(lambda x, t: x, np.array([1.0]), 0.0, 0.0)


def test_statespace_dimension_check():
    with pytest.raises(ValueError):
        StateSpace(np.eye(2), [1.0], [1.0, 0.0])
