"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest.
"""

import math
import time
import warnings

import numpy as np
import pytest

from qlinode import SHIPPED_PROBLEMS, shipped_problem
from qlinode.analysis import condition_number, fit_scaling
from qlinode.encoder import StepSizeWarning, build_system, matrix_norm_bound
from qlinode.linalg import spectral_norm
from qlinode.methods import (
    REGISTRY,
    estimate_alpha_angle,
    method_order,
    stability_domain_raster,
)
from qlinode.problem import OdeProblem
from qlinode.qlsa import complexity_formulas, history_state, postselect_final
from qlinode.reference import eigen_condition, exact_solution, multistep_solve

ORDERS = {"euler": 1, "trapezoidal": 2, "bdf2": 2, "bdf3": 3, "bdf4": 4}
SWEEP = (16, 32, 64, 128, 256)


def test_problem() -> OdeProblem:
    return OdeProblem(np.diag([-1.0, -2.0]), [1.0, 0.5], [1.0, 1.0], delta_t=1.0, name="relaxation")


test_problem.__test__ = False


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def test_criterion_1_orders(capsys):
    t0 = time.perf_counter()
    got = {name: method_order(REGISTRY[name]) for name in ORDERS}
    elapsed = time.perf_counter() - t0
    ok = got == ORDERS and elapsed < 1.0
    report(capsys, 1, ok, f"orders {got}, {elapsed:.3f}s")


def _slope(problem, method, starter):
    pts = []
    x_T = exact_solution(problem, problem.t_final)
    for n in SWEEP:
        err = np.linalg.norm(multistep_solve(problem, method, n, starter=starter).final - x_T)
        pts.append((2.0 * problem.delta_t / n, err))
    return fit_scaling(pts).exponent


def test_criterion_2_convergence(capsys):
    # order p is a statement about the method with accurate starting values;
    # the Euler starting steps contribute an O(dt^2) term on their own
    t0 = time.perf_counter()
    prob = test_problem()
    exact_start = {n: _slope(prob, REGISTRY[n], "exact") for n in ORDERS}
    euler_start = {n: _slope(prob, REGISTRY[n], "euler") for n in ORDERS}
    elapsed = time.perf_counter() - t0
    ok_exact = all(abs(exact_start[n] - p) <= 0.3 for n, p in ORDERS.items())
    ok_euler = all(abs(euler_start[n] - min(p, 2)) <= 0.3 for n, p in ORDERS.items())
    ok = ok_exact and ok_euler and elapsed < 10
    fmt = lambda d: ", ".join(f"{k} {v:.2f}" for k, v in d.items())
    report(
        capsys,
        2,
        ok,
        f"exact starts [{fmt(exact_start)}]; Euler starts (expect min(p,2)) [{fmt(euler_start)}]; {elapsed:.2f}s",
    )


def test_criterion_3_condition_number(capsys):
    t0 = time.perf_counter()
    prob = test_problem()
    kv = eigen_condition(prob.A).kappa_V
    details, ok = [], True
    for name in ("euler", "bdf2"):
        kappas = [condition_number(build_system(prob, REGISTRY[name], n).to_dense()) for n in SWEEP]
        exponent = fit_scaling(list(zip(SWEEP, kappas))).exponent
        ratios = [k / (n * kv) for k, n in zip(kappas, SWEEP)]
        spread = max(ratios) / min(ratios)
        ok &= 0.7 <= exponent <= 1.3 and spread <= 10
        details.append(f"{name} exponent {exponent:.3f} ratio spread {spread:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    report(capsys, 3, ok, "; ".join(details) + f"; {elapsed:.2f}s")


def test_criterion_4_norm_bound(capsys):
    checked, worst = 0, -math.inf
    ok = True
    for pname in SHIPPED_PROBLEMS:
        prob = shipped_problem(pname)
        a = spectral_norm(prob.A)
        for name, m in REGISTRY.items():
            for n in range(2 * m.k, 129, 2):
                if 2 * prob.delta_t / n * a > 1:
                    continue
                nb = matrix_norm_bound(build_system(prob, m, n))
                worst = max(worst, nb.computed_norm - nb.bound)
                ok &= nb.computed_norm <= nb.bound + 1e-8
                checked += 1
    ok &= checked > 0
    report(capsys, 4, ok, f"{checked} systems, max(||calA|| - bound) = {worst:.3g}")


def small_euler_matrix(a: float, dt: float) -> np.ndarray:
    g = -(1 + a * dt)
    return np.array(
        [[1, 0, 0, 0, 0], [g, 1, 0, 0, 0], [0, g, 1, 0, 0], [0, 0, -1, 1, 0], [0, 0, 0, -1, 1]],
        dtype=float,
    )


def test_criterion_5_equivalence(capsys):
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StepSizeWarning)
        for pname in SHIPPED_PROBLEMS:
            prob = shipped_problem(pname)
            for m in REGISTRY.values():
                for n in (16, 32):
                    system = build_system(prob, m, n)
                    dense = np.linalg.solve(system.to_dense(), system.calb)
                    seq = multistep_solve(prob, m, n).flat()
                    worst = max(worst, np.linalg.norm(dense - seq) / np.linalg.norm(seq))
    a, b, x0 = -0.5, 1.0, 1.0
    prob = OdeProblem([[a]], [b], [x0], delta_t=1.0)
    system = build_system(prob, REGISTRY["euler"], 4)
    verbatim = np.array_equal(system.to_dense(), small_euler_matrix(a, 0.5)) and np.array_equal(
        system.calb, [x0, b * 0.5, b * 0.5, 0, 0]
    )
    ok = worst <= 1e-10 and verbatim
    report(capsys, 5, ok, f"max relative deviation {worst:.3g} over {len(SHIPPED_PROBLEMS)} problems; Euler N_t=4 verbatim {verbatim}")


def test_criterion_6_postselection(capsys):
    const_err = 0.0
    for n in (4, 8, 16, 64, 256):
        prob = OdeProblem(np.zeros((2, 2)), np.zeros(2), [0.6, 0.8], delta_t=1.0)
        state = history_state(build_system(prob, REGISTRY["euler"], n))
        p = postselect_final(state, prob.x_in, 0.0).p_time
        const_err = max(const_err, abs(p - (n / 2 + 1) / (n + 1)))
    rot = shipped_problem("damped_rotation")
    x_T = exact_solution(rot, rot.t_final)
    p_min = {}
    for name, m in REGISTRY.items():
        p_min[name] = min(
            postselect_final(history_state(build_system(rot, m, n)), x_T, 0.0).p_time for n in (16, 64, 256)
        )
    ok = const_err <= 1e-12 and min(p_min.values()) >= 0.25
    detail = ", ".join(f"{k} {v:.3f}" for k, v in p_min.items())
    report(capsys, 6, ok, f"constant-norm deviation {const_err:.2g}; damped_rotation min p_time [{detail}]")


def test_criterion_7_error_budget(capsys):
    t0 = time.perf_counter()
    prob = test_problem()
    N_t = 256
    state = history_state(build_system(prob, REGISTRY["bdf2"], N_t))
    x_T = exact_solution(prob, prob.t_final)
    levels = (1e-4, 1e-3, 1e-2, 1e-1)
    dists = [postselect_final(state, x_T, e, trials=100, rng_seed=7).trace_distance for e in levels]
    slope = fit_scaling(list(zip(levels, dists))).exponent
    elapsed = time.perf_counter() - t0
    # each epsilon_L corresponds to epsilon = epsilon_L sqrt(N_t) ||x(T)||
    eps = [e * math.sqrt(N_t) * np.linalg.norm(x_T) for e in levels]
    ok = abs(slope - 1.0) <= 0.2 and elapsed < 20
    detail = ", ".join(f"{e:.0e}->{d:.3g}" for e, d in zip(levels, dists))
    report(capsys, 7, ok, f"slope {slope:.3f} [{detail}] (epsilon {eps[0]:.3g}..{eps[-1]:.3g}); {elapsed:.2f}s")


def test_criterion_8_stability_domains(capsys):
    raster = stability_domain_raster(REGISTRY["euler"], (-3, 1), (-2, 2), (100, 100))
    re, im = raster.centers()
    expected = np.abs(1 + re[None, :] + 1j * im[:, None]) <= 1
    mismatches = int(np.count_nonzero(raster.mask != expected))
    trap = math.degrees(estimate_alpha_angle(REGISTRY["trapezoidal"]))
    bdf3 = math.degrees(estimate_alpha_angle(REGISTRY["bdf3"]))
    ok = mismatches == 0 and trap >= 89 and 84 <= bdf3 <= 88
    report(capsys, 8, ok, f"Euler mismatches {mismatches}; trapezoidal {trap:.2f} deg; BDF3 {bdf3:.2f} deg")


def test_criterion_9_resource_formulas(capsys):
    unit = dict(norm_A_dt=1.0, kappa_V=1.0, s=1.0, solution_scale=1.0, x_final_norm=1.0, epsilon=1.0)
    off = {}
    for p in (1, 2, 3, 4, math.inf):
        for key, value in complexity_formulas(**unit, p=p).items():
            off[key] = max(off.get(key, 0.0), abs(value - 1.0))
    base = dict(unit, norm_A_dt=7.0, kappa_V=3.0, s=5.0, epsilon=0.02)
    f1 = complexity_formulas(**base, p=2)["final_calls"]
    f2 = complexity_formulas(**dict(base, epsilon=0.01), p=2)["final_calls"]
    factor = f2 / f1
    ok = max(off.values()) <= 1e-12 and abs(factor - 2 ** (9 / 4)) <= 1e-9
    report(capsys, 9, ok, f"{len(off)} expressions, max |unit - 1| = {max(off.values()):.2g}; halving factor {factor:.12f}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
