"""
Classical ground truth: eigen-structure of A, the exact solution through the
matrix exponential, and sequential multistep time stepping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .encoder import _check_nt
from .linalg import spectral_norm
from .methods import MultistepMethod
from .problem import OdeProblem

__all__ = [
    "SpectralData",
    "SolutionHistory",
    "DefectiveMatrixError",
    "WedgeViolationError",
    "SingularStepError",
    "OutsideHypothesisWarning",
    "eigen_condition",
    "exact_solution",
    "multistep_solve",
    "derivative_norm_bound",
]

RECONSTRUCTION_TOL = 1e-8
#: cond(V) above this is treated as numerically defective.
KAPPA_V_LIMIT = 1e12


class DefectiveMatrixError(np.linalg.LinAlgError):
    """A is not (numerically) diagonalisable."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class WedgeViolationError(ValueError):
    """Eigenvalues of A leave the closed left half-plane (or include 0)."""


class SingularStepError(np.linalg.LinAlgError):
    """The implicit update matrix alpha_k I - beta_k A dt is singular."""


class OutsideHypothesisWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    V: np.ndarray
    kappa_V: float
    wedge_angle: float
    residual: float
    has_zero_eigenvalue: bool

    def satisfies_wedge(self, alpha: float = math.pi / 2) -> bool:
        return self.wedge_angle <= alpha + 1e-12


def eigen_condition(A) -> SpectralData:
    """Diagonalise A = V D V^-1 with unit-norm eigenvector columns.

    ``wedge_angle`` is max |arg(-lambda)|; a zero eigenvalue counts as a
    violation and sets the angle to pi.
    """
    A = np.atleast_2d(np.asarray(A))
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    lam, V = np.linalg.eig(A)
    a_norm = spectral_norm(A)
    kappa = float(np.linalg.cond(V, 2))
    if not np.isfinite(kappa) or kappa > KAPPA_V_LIMIT:
        raise DefectiveMatrixError(
            f"eigenvector matrix is numerically singular (cond(V) = {kappa:.3g}); "
            "A is defective",
            residual=math.inf,
        )
    recon = V @ np.diag(lam) @ np.linalg.inv(V)
    residual = spectral_norm(recon - A)
    if residual > RECONSTRUCTION_TOL * max(a_norm, np.finfo(float).tiny):
        if a_norm > 0:
            raise DefectiveMatrixError(
                f"||V D V^-1 - A|| = {residual:.3g} exceeds {RECONSTRUCTION_TOL} ||A||",
                residual=residual,
            )
    zero_tol = 1e-14 * max(1.0, a_norm)
    zero = bool(np.any(np.abs(lam) <= zero_tol))
    if lam.size == 0:
        wedge = 0.0
    elif zero:
        wedge = math.pi
    else:
        wedge = float(np.max(np.abs(np.angle(-lam))))
    return SpectralData(lam, V, max(kappa, 1.0), wedge, float(residual), zero)


@dataclass(frozen=True)
class SolutionHistory:
    times: np.ndarray
    vectors: np.ndarray  # shape (N_t + 1, N_x)

    @property
    def N_t(self) -> int:
        return len(self.times) - 1

    @property
    def final(self) -> np.ndarray:
        return self.vectors[self.N_t // 2]

    def flat(self) -> np.ndarray:
        return self.vectors.ravel()


def _is_singular(A: np.ndarray) -> bool:
    if not np.any(A):
        return True
    s = np.linalg.svd(A, compute_uv=False)
    return s[-1] <= 1e-12 * s[0]


def exact_solution(problem: OdeProblem, t: float) -> np.ndarray:
    """x(t) = e^{A tau}(x_in + A^-1 b) - A^-1 b, tau = t - t0.

    Beyond t0 + delta_t the value is held at x(t0 + delta_t), matching the
    constant padding of the encoded system. For singular A the equivalent
    form e^{A tau} x_in + tau phi_1(A tau) b is used, with a warning.
    """
    if t < problem.t0:
        raise ValueError(f"t = {t} precedes t0 = {problem.t0}")
    tau = min(t, problem.t_final) - problem.t0
    if tau == 0:
        return problem.x_in.copy()
    A, b, x_in = problem.A, problem.b, problem.x_in
    if _is_singular(A):
        warnings.warn(
            "A is singular; exact solution uses the phi_1 form, outside the wedge hypothesis",
            OutsideHypothesisWarning,
            stacklevel=2,
        )
        n = problem.N_x
        aug = np.zeros((n + 1, n + 1), dtype=np.result_type(A, b))
        aug[:n, :n] = A * tau
        aug[:n, n] = b * tau
        E = sla.expm(aug)
        return E[:n, :n] @ x_in + E[:n, n]
    shift = np.linalg.solve(A, b)
    return sla.expm(A * tau) @ (x_in + shift) - shift


def multistep_solve(
    problem: OdeProblem,
    method: MultistepMethod,
    N_t: int,
    starter: str = "euler",
) -> SolutionHistory:
    """Step the recurrence sequentially, dt = 2 delta_t / N_t.

    ``starter="euler"`` produces x_1..x_{k-1} by explicit Euler, exactly as
    the encoded system does. ``starter="exact"`` takes them from the exact
    solution instead, which isolates the multistep method's own error.
    Values after step N_t/2 repeat x_{N_t/2}.
    """
    k = method.k
    N_t = _check_nt(N_t, k)
    if starter not in ("euler", "exact"):
        raise ValueError(f"unknown starter {starter!r}")
    dt = 2.0 * problem.delta_t / N_t
    n = problem.N_x
    times = problem.t0 + dt * np.arange(N_t + 1)
    alphas, betas = method.alphas_float, method.betas_float
    dtype = np.result_type(problem.A, problem.b, problem.x_in, float)
    xs = np.zeros((N_t + 1, n), dtype=dtype)
    xs[0] = problem.x_in
    for j in range(1, k):
        if starter == "exact":
            xs[j] = exact_solution(problem, times[j])
        else:
            A_t, b_t = problem.coefficients_at(times[j - 1])
            xs[j] = xs[j - 1] + dt * (A_t @ xs[j - 1] + b_t)
    eye = np.eye(n)
    half = N_t // 2
    lu_cache = {}
    for m in range(k, half + 1):
        j = m - k
        A_new, b_new = problem.coefficients_at(times[m])
        rhs = dt * betas[k] * b_new
        for ell in range(k):
            A_t, b_t = problem.coefficients_at(times[j + ell])
            rhs = rhs + dt * betas[ell] * (A_t @ xs[j + ell] + b_t) - alphas[ell] * xs[j + ell]
        lhs = alphas[k] * eye - betas[k] * dt * A_new
        key = id(A_new) if problem.coefficients is None else None
        if key is None or key not in lu_cache:
            lu, piv = sla.lu_factor(lhs, check_finite=False)
            if np.any(np.abs(np.diag(lu)) <= 1e-14 * max(1.0, np.abs(lhs).max())):
                raise SingularStepError(f"implicit step matrix singular at step {m}")
            if key is not None:
                lu_cache[key] = (lu, piv)
        else:
            lu, piv = lu_cache[key]
        xs[m] = sla.lu_solve((lu, piv), rhs, check_finite=False)
    xs[half + 1 :] = xs[half]
    return SolutionHistory(times, xs)


def derivative_norm_bound(problem: OdeProblem, spectral: SpectralData, ell: int) -> float:
    """kappa_V (||A||^ell ||x_in|| + ||A||^(ell-1) ||b||), bounding ||x^(ell)(t)||."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if not spectral.satisfies_wedge():
        raise WedgeViolationError(
            f"wedge angle {spectral.wedge_angle:.4g} rad exceeds pi/2"
            + (" (zero eigenvalue)" if spectral.has_zero_eigenvalue else "")
        )
    a = spectral_norm(problem.A)
    return spectral.kappa_V * (
        a**ell * np.linalg.norm(problem.x_in) + a ** (ell - 1) * np.linalg.norm(problem.b)
    )
