"""
Empirical checks of the norm, condition-number and error-scaling bounds.

The proofs only establish existence of method-dependent constants, so every
check here is relative: bounds are evaluated with unit constants and the
observed/bound ratio is tracked across a sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .encoder import EncodedSystem, build_system, matrix_norm_bound
from .linalg import power_iteration_norm, spectral_norm
from .methods import MultistepMethod, method_order
from .problem import OdeProblem
from .reference import DefectiveMatrixError, eigen_condition, exact_solution, multistep_solve

__all__ = [
    "ScalingFit",
    "SweepRow",
    "GlobalError",
    "ProbeResult",
    "SingularSystemError",
    "condition_number",
    "fit_scaling",
    "global_error",
    "inverse_norm_probe",
    "response",
    "verify_kappa_bound",
    "run_sweep",
    "DENSE_LIMIT",
    "FIT_WINDOW",
]

#: Dimension up to which condition numbers use a full SVD.
DENSE_LIMIT = 2000
#: Points with dt * ||A|| above this are left out of scaling fits.
FIT_WINDOW = 0.5


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line through (log x, log y)."""

    exponent: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]
    ratios: tuple[float, ...] = ()
    violation: bool = False

    def predict(self, x: float) -> float:
        return math.exp(self.intercept) * x**self.exponent

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points": [list(p) for p in self.points],
            "ratios": list(self.ratios),
            "violation": self.violation,
        }


def fit_scaling(points: Sequence[tuple[float, float]]) -> ScalingFit:
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    if any(x <= 0 or y <= 0 or not math.isfinite(x * y) for x, y in pts):
        raise ValueError("fit_scaling needs strictly positive, finite data")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return ScalingFit(float(slope), float(intercept), r2, tuple(pts))


def _lu_solve(lu, v: np.ndarray, trans: str) -> np.ndarray:
    # a real factorisation cannot take complex right-hand sides directly
    if np.iscomplexobj(v) and not np.iscomplexobj(lu.U.data):
        t = "T" if trans == "H" else trans
        return lu.solve(np.ascontiguousarray(v.real), trans=t) + 1j * lu.solve(
            np.ascontiguousarray(v.imag), trans=t
        )
    return lu.solve(v, trans=trans)


def condition_number(matrix, rtol: float = 1e-4) -> float:
    """sigma_max / sigma_min; SVD up to DENSE_LIMIT, iterative above."""
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError(f"matrix must be square, got {matrix.shape}")
    if n <= DENSE_LIMIT:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        s = np.linalg.svd(dense, compute_uv=False)
        smax, smin = s[0], s[-1]
    else:
        mat = sp.csc_matrix(matrix)
        smax = power_iteration_norm(mat, rtol=rtol)
        try:
            lu = spla.splu(mat)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
        inv_norm = power_iteration_norm(
            lambda v: _lu_solve(lu, v, "N"),
            rtol=rtol,
            rmatvec=lambda v: _lu_solve(lu, v, "H"),
            shape=mat.shape,
        )
        smin = 1.0 / inv_norm if inv_norm > 0 else 0.0
    if smin < 1e-14 * smax or smax == 0:
        raise SingularSystemError(f"matrix is numerically singular (sigma_min = {smin:.3g})")
    return float(smax / smin)


class ProbeResult(NamedTuple):
    max_response: float
    scale: float  # N_t * kappa_V

    @property
    def ratio(self) -> float:
        return self.max_response / self.scale


def _factor(system: EncodedSystem):
    try:
        return spla.splu(system.to_sparse().tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc


def response(system: EncodedSystem, y: np.ndarray) -> np.ndarray:
    """calA^-1 y: the trajectory excited by the forcing ``y``."""
    return _factor(system).solve(np.asarray(y, dtype=system.block_data.dtype))


def inverse_norm_probe(
    system: EncodedSystem,
    trials: int,
    rng_seed: int,
    kappa_V: float | None = None,
) -> ProbeResult:
    """Largest ||calA^-1 y|| over ``trials`` random unit vectors y."""
    if kappa_V is None:
        kappa_V = eigen_condition(system.problem.A).kappa_V
    lu = _factor(system)
    rng = np.random.default_rng(rng_seed)
    best = 0.0
    for _ in range(trials):
        y = rng.standard_normal(system.dim)
        y /= np.linalg.norm(y)
        z = lu.solve(y.astype(system.block_data.dtype))
        if not np.all(np.isfinite(z)):
            raise SingularSystemError("non-finite response; system is singular")
        best = max(best, float(np.linalg.norm(z)))
    return ProbeResult(best, system.N_t * kappa_V)


class GlobalError(NamedTuple):
    """Final-time error and the unit-constant error bound (nan if undefined)."""

    error: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.error / self.bound if self.bound > 0 else math.nan


def error_bound(problem: OdeProblem, method: MultistepMethod, N_t: int) -> float:
    """kappa_V^2 (||x_in|| + ||b||/||A||) [kappa_V (dt||A||)^2 + m (dt||A||)^(p+1)]."""
    a = spectral_norm(problem.A)
    if a == 0:
        return math.nan
    try:
        kv = eigen_condition(problem.A).kappa_V
    except DefectiveMatrixError:
        return math.nan
    p = method_order(method)
    h = 2.0 * problem.delta_t / N_t * a
    scale = np.linalg.norm(problem.x_in) + np.linalg.norm(problem.b) / a
    return float(kv**2 * scale * (kv * h**2 + (N_t // 2) * h ** (p + 1)))


def global_error(
    problem: OdeProblem,
    method: MultistepMethod,
    N_t: int,
    starter: str = "euler",
) -> GlobalError:
    hist = multistep_solve(problem, method, N_t, starter=starter)
    err = float(np.linalg.norm(exact_solution(problem, problem.t_final) - hist.final))
    return GlobalError(err, error_bound(problem, method, N_t))


class SweepRow(NamedTuple):
    N_t: int
    dt: float
    value: float
    bound: float
    ratio: float


def _in_window(problem: OdeProblem, N_t: int, window: float) -> bool:
    return 2.0 * problem.delta_t / N_t * spectral_norm(problem.A) <= window


def run_sweep(
    kind: str,
    problem: OdeProblem,
    method: MultistepMethod,
    nt_sweep: Sequence[int],
    seed: int | None = None,
    trials: int = 100,
    window: float = FIT_WINDOW,
    starter: str = "euler",
) -> tuple[list[SweepRow], ScalingFit | None]:
    """Evaluate one quantity along an N_t sweep.

    ``kind`` is ``"kappa"`` (condition number vs N_t kappa_V), ``"error"``
    (global error vs unit-constant bound), ``"norm"`` (||calA|| vs block
    bound) or ``"probe"`` (random inverse probe vs N_t kappa_V, needs
    ``seed``). The fit is taken over points with dt ||A|| <= ``window``,
    against N_t; None if fewer than 3 such points or a non-positive value.
    """
    if kind == "probe" and seed is None:
        raise ValueError("probe sweeps need a seed")
    try:
        kv = eigen_condition(problem.A).kappa_V
    except DefectiveMatrixError:
        kv = math.nan
    rows = []
    for N_t in nt_sweep:
        dt = 2.0 * problem.delta_t / N_t
        if kind == "error":
            ge = global_error(problem, method, N_t, starter=starter)
            value, bound = ge.error, ge.bound
        else:
            system = build_system(problem, method, N_t)
            if kind == "kappa":
                value, bound = condition_number(system.to_sparse()), N_t * kv
            elif kind == "norm":
                nb = matrix_norm_bound(system)
                value, bound = nb.computed_norm, nb.bound
            elif kind == "probe":
                pr = inverse_norm_probe(system, trials, seed, kappa_V=kv)
                value, bound = pr.max_response, pr.scale
            else:
                raise ValueError(f"unknown sweep kind {kind!r}")
        ratio = value / bound if bound and math.isfinite(bound) else math.nan
        rows.append(SweepRow(int(N_t), dt, float(value), float(bound), float(ratio)))
    pts = [(r.N_t, r.value) for r in rows if _in_window(problem, r.N_t, window)]
    if len(pts) < 3 or any(v <= 0 for _, v in pts):
        return rows, None
    fit = fit_scaling(pts)
    ratios = tuple(r.ratio for r in rows)
    violation = False
    if kind == "kappa" and all(math.isfinite(x) and x > 0 for x in ratios):
        violation = max(ratios) > 10 * min(ratios)
    return rows, ScalingFit(fit.exponent, fit.intercept, fit.r_squared, fit.points, ratios, violation)


def verify_kappa_bound(
    problem: OdeProblem, method: MultistepMethod, nt_sweep: Sequence[int]
) -> ScalingFit:
    """Fit kappa(calA) against N_t.

    ``violation`` is set when some kappa / (N_t kappa_V) exceeds ten times
    the smallest such ratio in the sweep.
    """
    _, fit = run_sweep("kappa", problem, method, nt_sweep)
    if fit is None:
        raise ValueError("sweep needs at least 3 points with dt*||A|| <= 0.5")
    return fit
