import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from qlinode.analysis import (
    SingularSystemError,
    condition_number,
    fit_scaling,
    global_error,
    inverse_norm_probe,
    response,
    run_sweep,
    verify_kappa_bound,
)
from qlinode.encoder import StepSizeWarning, build_system
from qlinode.methods import REGISTRY
from qlinode.problem import OdeProblem

SWEEP = [16, 32, 64, 128, 256]


class TestConditionNumber:
    def test_identity(self):
        assert condition_number(np.eye(5)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert condition_number(np.diag([1.0, 10.0])) == pytest.approx(10.0)

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            condition_number(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_iterative_path_agrees(self, monkeypatch):
        import qlinode.analysis as analysis

        prob = OdeProblem(np.diag([-1.0, -2.0, -0.5]), np.zeros(3), np.ones(3), delta_t=1.0)
        mat = build_system(prob, REGISTRY["bdf2"], 64).to_sparse()
        exact = condition_number(mat)
        monkeypatch.setattr(analysis, "DENSE_LIMIT", 10)
        approx = condition_number(mat, rtol=1e-8)
        assert approx == pytest.approx(exact, rel=1e-3)

    def test_rejects_rectangular(self):
        with pytest.raises(ValueError):
            condition_number(sp.eye(3, 4))


class TestKappaBound:
    def test_scalar_euler(self, scalar_decay):
        fit = verify_kappa_bound(scalar_decay, REGISTRY["euler"], SWEEP)
        assert 0.7 <= fit.exponent <= 1.3
        assert not fit.violation

    def test_zero_matrix_chain(self):
        prob = OdeProblem([[0.0]], [0.0], [1.0], delta_t=1.0)
        _, fit = run_sweep("kappa", prob, REGISTRY["euler"], SWEEP)
        # A = 0 gives the bidiagonal [1; -1 1; ...] whose condition number is ~ 4 N_t / pi
        assert 0.9 <= fit.exponent <= 1.1

    def test_nonnormal_within_bound(self):
        normal = OdeProblem([[-1.0, 0.0], [0.0, -1.01]], [0, 0], [1, 1], delta_t=1.0)
        shear = OdeProblem([[-1.0, 0.5], [0.0, -1.01]], [0, 0], [1, 1], delta_t=1.0)
        for name in ("euler", "bdf2"):
            fn = verify_kappa_bound(normal, REGISTRY[name], SWEEP)
            fs = verify_kappa_bound(shear, REGISTRY[name], SWEEP)
            # kappa_V ~ 100 for the shear; the observed kappa stays below N_t kappa_V
            assert max(fs.ratios) <= 10
            assert math.exp(fs.intercept) <= 100 * math.exp(fn.intercept)
            assert 0.7 <= fs.exponent <= 1.3

    def test_needs_window_points(self):
        prob = OdeProblem([[-100.0]], [0.0], [1.0], delta_t=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StepSizeWarning)
            with pytest.raises(ValueError):
                verify_kappa_bound(prob, REGISTRY["euler"], [4, 8, 16])


class TestProbe:
    def test_impulse_response(self):
        prob = OdeProblem([[0.0]], [0.0], [1.0], delta_t=1.0)
        system = build_system(prob, REGISTRY["euler"], 16)
        y = np.zeros(17)
        y[0] = 1.0
        z = response(system, y)
        np.testing.assert_allclose(z, 1.0, atol=1e-14)
        assert np.linalg.norm(z) == pytest.approx(math.sqrt(17))

    def test_final_row_forcing(self, relaxation):
        system = build_system(relaxation, REGISTRY["bdf2"], 16)
        y = np.zeros(system.dim)
        y[-1] = 1.0
        z = response(system, y).reshape(17, 2)
        assert not np.any(z[:-1])
        np.testing.assert_allclose(z[-1], [0.0, 1.0])

    def test_random_probe_bounded(self, relaxation):
        for n in (16, 64):
            system = build_system(relaxation, REGISTRY["bdf2"], n)
            pr = inverse_norm_probe(system, trials=100, rng_seed=7)
            assert pr.ratio <= 10
            assert pr.max_response >= 1.0

    def test_probe_seeded(self, relaxation):
        system = build_system(relaxation, REGISTRY["bdf3"], 32)
        a = inverse_norm_probe(system, 20, 3)
        assert a == inverse_norm_probe(system, 20, 3)

    def test_sweep_requires_seed(self, relaxation):
        with pytest.raises(ValueError):
            run_sweep("probe", relaxation, REGISTRY["euler"], SWEEP)


class TestGlobalError:
    def test_zero_dynamics(self, method):
        prob = OdeProblem([[0.0]], [0.0], [2.0], delta_t=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert global_error(prob, method, 16).error <= 1e-12

    def test_euler_halves(self, scalar_decay):
        e1 = global_error(scalar_decay, REGISTRY["euler"], 128).error
        e2 = global_error(scalar_decay, REGISTRY["euler"], 256).error
        assert e1 / e2 == pytest.approx(2.0, rel=0.05)

    def test_bdf3_exact_start(self, scalar_decay):
        e1 = global_error(scalar_decay, REGISTRY["bdf3"], 64, starter="exact").error
        e2 = global_error(scalar_decay, REGISTRY["bdf3"], 128, starter="exact").error
        assert e1 / e2 == pytest.approx(8.0, rel=0.1)

    def test_monotone_decrease(self, relaxation, method):
        errs = [global_error(relaxation, method, n).error for n in SWEEP]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_within_unit_bound(self, relaxation, method):
        rows, fit = run_sweep("error", relaxation, method, SWEEP)
        assert fit is not None
        assert all(r.value <= r.bound for r in rows)


class TestFitScaling:
    def test_exact_power_law(self):
        fit = fit_scaling([(x, 3 * x**2) for x in (1, 2, 4, 8)])
        assert fit.exponent == pytest.approx(2.0)
        assert math.exp(fit.intercept) == pytest.approx(3.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.predict(16) == pytest.approx(768)

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_scaling([(1, 1), (2, 2)])
        with pytest.raises(ValueError):
            fit_scaling([(1, 1), (2, 0), (3, 3)])

    @settings(max_examples=50, deadline=None)
    @given(
        p=st.floats(-4, 4),
        c=st.floats(1e-3, 1e3),
        s=st.floats(1e-3, 1e3),
    )
    def test_rescaling_invariance(self, p, c, s):
        xs = [1.0, 2.0, 4.0, 8.0, 16.0]
        base = fit_scaling([(x, c * x**p) for x in xs])
        scaled = fit_scaling([(s * x, c * x**p) for x in xs])
        assert base.exponent == pytest.approx(p, abs=1e-9)
        assert scaled.exponent == pytest.approx(p, abs=1e-9)
