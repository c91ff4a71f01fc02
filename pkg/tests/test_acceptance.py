"""Acceptance gate: every criterion as one test with a printed verdict.

Run with -s to see the verdict lines; each criterion also hard-asserts, so
the suite fails loudly if any of them regress.
"""

import math
import time

import numpy as np
import pytest

from mracsim.harness import compare, run, run_scenario
from mracsim.laws import (
    Covariance,
    PeWindow,
    covariance_update,
    dual_q_step,
    pe_check,
)
from mracsim.matching import build_lambda, closed_loop_tf, solve_matching, tf_coeff_error
from mracsim.scenario import list_presets, load_scenario, validate_flat

from conftest import random_siso_problem


def _verdict(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_acceptance_matching_oracle():
    rng = np.random.default_rng(20240801)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(100):
        plant, refmodel, lambda0, n = random_siso_problem(rng)
        lam = build_lambda(refmodel, lambda0, n)
        theta = solve_matching(plant, refmodel, lam)
        gc = closed_loop_tf(plant, theta, lam)
        worst = max(worst, tf_coeff_error(gc, refmodel))
    elapsed = time.monotonic() - t0
    _verdict(
        "matching oracle (100 random plants, n<=3)",
        worst <= 1e-8 and elapsed < 5.0,
        f"max coeff error {worst:.3g}, {elapsed:.2f} s",
    )


def test_acceptance_lyapunov_monotonicity():
    t0 = time.monotonic()
    worst = {}
    for law in ("gradient", "rls"):
        sc = load_scenario("acc_lyapunov").with_overrides(law=law)
        trace = run_scenario(sc)
        V = trace.full["V"]
        tol = 1e-8 * max(1.0, V[0])
        worst[law] = float(np.max(np.diff(V)))
        assert V.size == 60001
        if worst[law] > tol:
            _verdict(f"lyapunov monotonicity ({law})", False,
                     f"max step increase {worst[law]:.3g} > tol {tol:.3g}")
    elapsed = time.monotonic() - t0
    _verdict(
        "lyapunov monotonicity (both laws, 60 s at dt=1e-3)",
        elapsed < 30.0,
        f"max dV gradient {worst['gradient']:.3g}, rls {worst['rls']:.3g}, "
        f"{elapsed:.2f} s",
    )


def test_acceptance_covariance_duality():
    dt = 1e-3
    cov = Covariance(np.eye(2), beta=0.95, rho_max=np.inf)
    Q = np.eye(2)
    worst = 0.0
    for k in range(10000):
        t = k * dt
        w = np.array([math.sin(t), math.cos(t)])
        cov = covariance_update(cov, w, dt)
        Q = dual_q_step(Q, w, 0.95, dt)
        worst = max(worst, float(np.max(np.abs(cov.P @ Q - np.eye(2)))))
    _verdict("covariance duality over 10 s", worst <= 1e-6,
             f"max |PQ - I| {worst:.3g}")


def test_acceptance_riccati_closed_form():
    cov = Covariance([[1.0]], beta=0.0, rho_max=np.inf)
    dt = 1e-3
    worst = 0.0
    for k in range(10000):
        cov = covariance_update(cov, np.array([1.0]), dt)
        t = (k + 1) * dt
        if round(t, 9) in (1.0, 5.0, 10.0):
            worst = max(worst, abs(cov.P[0, 0] - 1.0 / (1.0 + t)))
    _verdict("scalar Riccati closed form", worst <= 1e-6,
             f"max deviation {worst:.3g}")


def test_acceptance_pe_detector():
    win = PeWindow(T0=2 * math.pi, alpha0=0.4)
    dt = 1e-3
    for k in range(7000):
        t = k * dt
        win.push(t, np.array([math.sin(t), math.cos(t)]))
    res = pe_check(win)
    rel = float(np.max(np.abs(res["integral"] - math.pi * np.eye(2)))) / math.pi
    const = PeWindow(T0=2 * math.pi, alpha0=0.4)
    for k in range(7000):
        const.push(k * dt, np.array([1.0, 0.5]))
    res_const = pe_check(const)
    _verdict(
        "PE detector (sinusoid window integral + constant regressor)",
        res["is_pe"] is True and rel <= 1e-3 and res_const["is_pe"] is False,
        f"relative integral error {rel:.3g}",
    )


def test_acceptance_convergence_under_pe():
    sc = load_scenario("mrac_first_order")
    trace = run_scenario(sc)
    tstar = trace.metrics["theta_star"]
    t = trace.data["t"]
    theta = np.column_stack([trace.data["theta_0"], trace.data["theta_1"]])
    norms = np.linalg.norm(theta - tstar, axis=1)
    mask = (t >= 10.0) & (t <= 50.0)
    slope = np.polyfit(t[mask], np.log(np.maximum(norms[mask], 1e-300)), 1)[0]
    final = trace.metrics["theta_tilde_final_norm"]
    _verdict(
        "exponential convergence under PE (rls, beta=0.95)",
        slope < 0.0 and final < 0.05,
        f"log-slope {slope:.4f} 1/s, final |theta_err| {final:.3g}",
    )


def test_acceptance_paper_comparison_ordering():
    sc = load_scenario("acc_paper_compare")
    # the preset must pin the published configuration
    assert sc.flat["law.gamma"] == [50.0, 30.0, 40.0]
    assert sc.flat["law.beta"] == 0.95
    assert sc.flat["law.p0"] == 100.0
    assert sc.flat["sim.noise_sigma"] == 0.05
    t0 = time.monotonic()
    report = compare(sc, ["gradient", "rls"], list(range(1, 11)))
    elapsed = time.monotonic() - t0
    wins = report["ordering"]["rls_wins"]
    _verdict(
        "comparison ordering (rls rms speed error <= gradient)",
        wins >= 7 and elapsed < 300.0,
        f"rls wins {wins}/10, {elapsed:.1f} s",
    )


def test_acceptance_boundedness_and_safety():
    failures = []
    for name, _ in list_presets():
        sc = load_scenario(name)
        try:
            trace = run_scenario(sc)
        except Exception as ex:  # any halt is a failure here
            failures.append(f"{name}: {ex}")
            continue
        for col in trace.columns:
            vals = trace.data[col]
            if col in ("pe_level", "V"):
                continue
            if not np.all(np.isfinite(vals)):
                failures.append(f"{name}: non-finite column {col}")
        if sc.mode == "acc":
            if np.min(trace.data["x_r"]) <= 0.0:
                failures.append(f"{name}: gap reached zero")
            lower = np.broadcast_to(
                np.asarray(sc.flat.get("bounds.lower", -100.0), float), (3,)
            )
            upper = np.broadcast_to(
                np.asarray(sc.flat.get("bounds.upper", 100.0), float), (3,)
            )
            for i, col in enumerate(("k1", "k2", "k3")):
                if np.any(trace.data[col] < lower[i]) or np.any(
                    trace.data[col] > upper[i]
                ):
                    failures.append(f"{name}: {col} left its bounds")
    _verdict(
        "boundedness and safety across the shipped preset suite",
        not failures,
        "; ".join(failures) if failures else f"{len(list_presets())} presets clean",
    )


def test_acceptance_determinism(tmp_path):
    sc = load_scenario("acc_paper_compare").with_overrides(seed=7)
    sc.flat["sim.t_final"] = 10.0
    sc = validate_flat(sc.flat)
    run(sc, out_dir=tmp_path / "a")
    run(sc, out_dir=tmp_path / "b")
    same = (tmp_path / "a/trace.csv").read_bytes() == (
        tmp_path / "b/trace.csv"
    ).read_bytes()
    _verdict("determinism (byte-identical trace for fixed seed)", same)
