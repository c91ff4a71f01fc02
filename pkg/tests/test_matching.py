import numpy as np
import pytest

from mracsim.errors import AssumptionError, MatchingError, NumericsError
from mracsim.lti import Polynomial, TransferFunction
from mracsim.matching import (
    MracTheta,
    RegressorState,
    build_lambda,
    closed_loop_tf,
    control_law,
    default_lambda0,
    regressor_step,
    solve_matching,
    tf_coeff_error,
    validate_problem,
)

from conftest import random_siso_problem

FIRST_ORDER_PLANT = TransferFunction(2.0, [1.0], [1.0, 1.0])
FIRST_ORDER_MODEL = TransferFunction(3.0, [1.0], [1.0, 3.0])


def test_validate_first_order_passes():
    rep = validate_problem(FIRST_ORDER_PLANT, FIRST_ORDER_MODEL)
    assert rep.ok, str(rep)


def test_validate_rejects_nonminimum_phase():
    plant = TransferFunction(1.0, [1.0, -1.0], [1.0, 1.0, 1.0])
    rep = validate_problem(plant, FIRST_ORDER_MODEL)
    assert not rep.ok
    assert any(n == "plant_zeros_hurwitz" for n, _ in rep.failed())
    with pytest.raises(AssumptionError):
        rep.require()


def test_validate_rejects_relative_degree_mismatch():
    model2 = TransferFunction(1.0, [1.0], [1.0, 2.0, 1.0])  # n* = 2
    rep = validate_problem(FIRST_ORDER_PLANT, model2)
    assert any(n == "relative_degree_match" for n, _ in rep.failed())


def test_build_lambda_n1_empty_filter():
    lam = build_lambda(FIRST_ORDER_MODEL, Polynomial([1.0]), n=1)
    assert lam.degree == 0 and lam.is_monic


def test_build_lambda_identity_factor():
    lam = build_lambda(FIRST_ORDER_MODEL, Polynomial([1.0, 5.0]), n=2)
    assert np.array_equal(lam.coeffs, [1.0, 5.0])


def test_build_lambda_hand_expansion():
    model = TransferFunction(1.0, [1.0, 2.0], [1.0, 3.0, 3.0, 1.0])
    lam = build_lambda(model, Polynomial([1.0, 4.0]), n=3)
    assert np.allclose(lam.coeffs, [1.0, 6.0, 8.0])


def test_build_lambda_rejects_bad_degree():
    with pytest.raises(ValueError):
        build_lambda(FIRST_ORDER_MODEL, Polynomial([1.0, 5.0]), n=1)


def test_build_lambda_rejects_unstable_lambda0():
    with pytest.raises(ValueError):
        build_lambda(FIRST_ORDER_MODEL, Polynomial([1.0, -5.0]), n=2)


def test_solve_matching_first_order_analytic():
    # den matching: (s+1) - 2*theta3 = (s+3)  =>  theta3 = -1; c0 = 3/2
    lam = Polynomial([1.0])
    theta = solve_matching(FIRST_ORDER_PLANT, FIRST_ORDER_MODEL, lam)
    assert theta.theta3 == pytest.approx(-1.0, abs=1e-12)
    assert theta.c0 == pytest.approx(1.5, abs=1e-12)
    assert theta.theta1.size == 0 and theta.theta2.size == 0


def test_solve_matching_plant_equals_model():
    theta = solve_matching(FIRST_ORDER_MODEL, FIRST_ORDER_MODEL, Polynomial([1.0]))
    assert theta.theta3 == pytest.approx(0.0, abs=1e-12)
    assert theta.c0 == pytest.approx(1.0, abs=1e-12)


def test_solve_matching_second_order_frequency_oracle(rng):
    for _ in range(10):
        plant, refmodel, lambda0, n = random_siso_problem(rng, n=2)
        lam = build_lambda(refmodel, lambda0, n)
        theta = solve_matching(plant, refmodel, lam)
        gc = closed_loop_tf(plant, theta, lam)
        w = rng.uniform(0.1, 10.0, size=10)
        resp_c = gc(1j * w)
        resp_m = refmodel(1j * w)
        assert np.max(np.abs(resp_c - resp_m)) < 1e-8


def test_solve_matching_rejects_noncoprime():
    # shared root at -1 between numerator and denominator
    plant = TransferFunction(1.0, [1.0, 1.0], [1.0, 3.0, 2.0])
    model = TransferFunction(2.0, [1.0, 2.0], [1.0, 4.0, 4.0])
    lam = build_lambda(model, Polynomial([1.0]), n=2)
    with pytest.raises(MatchingError):
        solve_matching(plant, model, lam)


def test_closed_loop_matches_model_at_theta_star(rng):
    for _ in range(20):
        plant, refmodel, lambda0, n = random_siso_problem(rng)
        lam = build_lambda(refmodel, lambda0, n)
        theta = solve_matching(plant, refmodel, lam)
        gc = closed_loop_tf(plant, theta, lam)
        assert tf_coeff_error(gc, refmodel) <= 1e-9


def test_closed_loop_open_loop_at_zero_gains():
    plant, refmodel, lambda0, n = random_siso_problem(np.random.default_rng(5), n=2)
    lam = build_lambda(refmodel, lambda0, n)
    theta = MracTheta(np.zeros(n - 1), np.zeros(n - 1), 0.0, 1.0)
    gc = closed_loop_tf(plant, theta, lam)
    assert tf_coeff_error(gc, plant) <= 1e-12


def test_closed_loop_perturbed_theta_differs():
    lam = Polynomial([1.0])
    theta = solve_matching(FIRST_ORDER_PLANT, FIRST_ORDER_MODEL, lam)
    bumped = MracTheta(theta.theta1, theta.theta2, theta.theta3 + 0.1, theta.c0)
    gc = closed_loop_tf(FIRST_ORDER_PLANT, bumped, lam)
    assert tf_coeff_error(gc, FIRST_ORDER_MODEL) > 1e-3


def test_matching_property_randomized(rng):
    # randomized matching identity, the n <= 3 population
    for _ in range(100):
        plant, refmodel, lambda0, n = random_siso_problem(rng)
        lam = build_lambda(refmodel, lambda0, n)
        theta = solve_matching(plant, refmodel, lam)
        gc = closed_loop_tf(plant, theta, lam)
        assert tf_coeff_error(gc, refmodel) <= 1e-8


def test_theta_flatten_roundtrip(rng):
    for n in (1, 2, 4):
        vec = rng.standard_normal(2 * n)
        theta = MracTheta.from_vector(vec, n)
        assert np.array_equal(theta.as_vector(), vec)


def test_regressor_n1_has_no_filter_state():
    rs = RegressorState(Polynomial([1.0]))
    assert rs.filter_order == 0
    omega = regressor_step(rs, 1.0, 2.0, 3.0, 1e-3)
    assert omega.shape == (2,)
    assert np.array_equal(omega, [2.0, 3.0])


def test_regressor_zero_inputs_stay_zero():
    rs = RegressorState(Polynomial([1.0, 5.0]))
    for _ in range(50):
        omega = regressor_step(rs, 0.0, 0.0, 0.0, 1e-2)
    assert np.array_equal(omega, np.zeros(4))


def test_regressor_dc_gain():
    # omega1 tracks u_p through 1/(s+5): DC gain 0.2
    rs = RegressorState(Polynomial([1.0, 5.0]))
    for _ in range(4000):
        regressor_step(rs, 1.0, 0.0, 0.0, 5e-3)
    assert rs.omega1[0] == pytest.approx(0.2, abs=1e-9)


def test_regressor_rejects_nonfinite():
    rs = RegressorState(Polynomial([1.0, 5.0]))
    with pytest.raises(NumericsError):
        regressor_step(rs, np.nan, 0.0, 0.0, 1e-3)


def test_control_law_dot_product():
    assert control_law([1.0, 1.0], [2.0, 3.0]) == 5.0
    assert control_law(np.zeros(4), np.ones(4)) == 0.0


def test_control_law_dimension_mismatch():
    with pytest.raises(ValueError):
        control_law([1.0, 2.0], [1.0, 2.0, 3.0])


def test_default_lambda0_degree():
    lam0 = default_lambda0(3, 0)
    assert lam0.degree == 2 and lam0.is_monic
    assert default_lambda0(1, 0).degree == 0
