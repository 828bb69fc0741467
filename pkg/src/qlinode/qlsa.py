"""
Desk-scale model of the quantum pipeline.

The linear-systems solver is idealised: the encoded system is solved exactly
and then perturbed by a vector of 2-norm epsilon_L. Measuring the time
register and keeping outcomes j >= N_t/2 yields the final-time state.
Oracle-call counts are closed-form expressions evaluated with unit constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .analysis import SingularSystemError
from .encoder import EncodedSystem, choose_time_steps
from .linalg import spectral_norm
from .methods import MultistepMethod, method_order
from .problem import OdeProblem
from .reference import SpectralData, exact_solution

__all__ = [
    "HistoryState",
    "PostselectionResult",
    "ResourceEstimate",
    "PostselectionError",
    "history_state",
    "postselect_final",
    "error_budget",
    "complexity_formulas",
    "resource_estimate",
    "prep_cost",
    "trace_distance",
]

P_TIME_MIN = 1e-12


class PostselectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class HistoryState:
    """Normalised trajectory state; ``amplitudes[j]`` is the time-j block."""

    amplitudes: np.ndarray  # shape (N_t + 1, N_x)
    raw_norm_sq: float

    @property
    def N_t(self) -> int:
        return self.amplitudes.shape[0] - 1

    @property
    def N_x(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def block_probabilities(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)


def history_state(system: EncodedSystem) -> HistoryState:
    try:
        x = spla.splu(system.to_sparse().tocsc()).solve(system.calb)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("history solve produced non-finite values")
    norm_sq = float(np.vdot(x, x).real)
    if norm_sq == 0:
        raise PostselectionError("solution vector is identically zero")
    amps = (x / math.sqrt(norm_sq)).reshape(system.N_t + 1, system.N_x)
    return HistoryState(amps, norm_sq)


def trace_distance(phi: np.ndarray, chi: np.ndarray) -> float:
    """sqrt(1 - |<phi|chi>|^2) for (not necessarily normalised) pure states."""
    phi = phi / np.linalg.norm(phi)
    chi = chi / np.linalg.norm(chi)
    fid = min(1.0, abs(np.vdot(phi, chi)))
    return math.sqrt(max(0.0, 1.0 - fid**2))


@dataclass(frozen=True)
class PostselectionResult:
    """Outcome statistics of measuring time and keeping j in [N_t/2, N_t].

    Distances are per measured time slot. ``trace_distance`` is the worst
    case over slots and random trials; ``trace_distance_mean`` weights slots
    by their outcome probability and averages trials;
    ``trace_distance_adversarial`` puts the whole perturbation on the
    weakest post-selected slot, orthogonal to its content.
    """

    p_time: float
    final_state: np.ndarray
    trace_distance: float
    trace_distance_mean: float
    trace_distance_adversarial: float
    discretisation_distance: float
    epsilon_L_used: float

    def to_dict(self) -> dict:
        return {
            "p_time": self.p_time,
            "trace_distance": self.trace_distance,
            "trace_distance_mean": self.trace_distance_mean,
            "trace_distance_adversarial": self.trace_distance_adversarial,
            "discretisation_distance": self.discretisation_distance,
            "epsilon_L": self.epsilon_L_used,
        }


def _slot_distances(block: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(block, axis=1)
    overlaps = np.abs(block.conj() @ target) / np.where(norms > 0, norms, 1.0)
    dist = np.sqrt(np.clip(1.0 - np.minimum(overlaps, 1.0) ** 2, 0.0, 1.0))
    dist[norms == 0] = 1.0
    return dist, norms**2


def postselect_final(
    state: HistoryState,
    exact_final: np.ndarray,
    epsilon_L: float,
    trials: int = 100,
    rng_seed: int = 0,
) -> PostselectionResult:
    if not 0 <= epsilon_L < 1:
        raise ValueError("epsilon_L must lie in [0, 1)")
    half = state.N_t // 2
    probs = state.block_probabilities
    p_time = float(probs[half:].sum())
    if p_time < P_TIME_MIN:
        raise PostselectionError(f"post-selection probability {p_time:.3g} is negligible")
    target = np.asarray(exact_final, dtype=complex)
    if np.linalg.norm(target) == 0:
        raise PostselectionError("exact final state is zero")
    target = target / np.linalg.norm(target)

    block = state.amplitudes[half:]
    final_state = block.sum(axis=0)
    final_state = final_state / np.linalg.norm(final_state)
    base, _ = _slot_distances(block, target)
    disc = float(base.max())

    worst, mean_acc = disc, 0.0
    n_trials = trials if epsilon_L > 0 else 0
    if n_trials:
        rng = np.random.default_rng(rng_seed)
        cplx = np.iscomplexobj(state.amplitudes)
        for _ in range(n_trials):
            g = rng.standard_normal(state.amplitudes.shape)
            if cplx:
                g = g + 1j * rng.standard_normal(state.amplitudes.shape)
            g *= epsilon_L / np.linalg.norm(g)
            pert = (state.amplitudes + g)[half:]
            dist, w = _slot_distances(pert, target)
            worst = max(worst, float(dist.max()))
            mean_acc += float(np.dot(w, dist) / w.sum())
        mean = mean_acc / n_trials
    else:
        mean = float(np.dot(probs[half:], base) / p_time)

    # adversarial: all of epsilon_L on the weakest slot, orthogonal to target
    weakest = half + int(np.argmin(probs[half:]))
    adv = state.amplitudes[weakest].astype(complex).copy()
    if epsilon_L > 0:
        direction = _orthogonal_unit(target, adv)
        adv = adv + epsilon_L * direction
    adversarial = trace_distance(adv, target) if np.linalg.norm(adv) > 0 else 1.0

    return PostselectionResult(
        p_time=p_time,
        final_state=final_state,
        trace_distance=worst,
        trace_distance_mean=mean,
        trace_distance_adversarial=adversarial,
        discretisation_distance=disc,
        epsilon_L_used=float(epsilon_L),
    )


def _orthogonal_unit(target: np.ndarray, hint: np.ndarray) -> np.ndarray:
    n = target.size
    if n == 1:
        # one-dimensional: only the magnitude can be disturbed
        return -target
    cand = hint - np.vdot(target, hint) * target
    if np.linalg.norm(cand) < 1e-12 * max(1.0, np.linalg.norm(hint)):
        cand = np.zeros(n, dtype=complex)
        cand[int(np.argmin(np.abs(target)))] = 1.0
        cand -= np.vdot(target, cand) * target
    return cand / np.linalg.norm(cand)


def error_budget(problem: OdeProblem, N_t: int, epsilon: float) -> float:
    """epsilon / (sqrt(N_t) ||x(t0 + delta_t)||)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x_norm = float(np.linalg.norm(exact_solution(problem, problem.t_final)))
    if x_norm == 0:
        raise PostselectionError("final solution norm is zero; no meaningful budget")
    return epsilon / (math.sqrt(N_t) * x_norm)


# ---------------------------------------------------------------------------
# Complexity formulas
# ---------------------------------------------------------------------------


def _log_factor(N: float) -> float:
    # polylog prefactors are floored at 1 so unit-size instances evaluate to 1
    return max(1.0, math.log2(N)) if N > 0 else 1.0


def complexity_formulas(
    *,
    norm_A_dt: float,
    kappa_V: float,
    s: float,
    solution_scale: float,
    x_final_norm: float,
    epsilon: float,
    p: float,
    N_x: int = 1,
    ambainis_c: float = 1.0,
) -> dict[str, float]:
    """Unit-constant evaluations of every oracle-call expression.

    ``norm_A_dt`` is ||A|| times the horizon, ``solution_scale`` is
    ||x_in|| + ||b||/||A||. ``p`` may be ``math.inf``. Step counts are kept
    unrounded so exponent identities hold exactly.
    """
    if p <= 0:
        raise ValueError("order p must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    N_t = norm_A_dt ** (1 + inv_p) * math.sqrt(kappa_V**3 * solution_scale / epsilon)
    N_t_optimistic = norm_A_dt ** (1 + inv_p) * (kappa_V**2 * solution_scale / epsilon) ** inv_p
    N_t_simple = norm_A_dt ** (1 + inv_p) / epsilon**inv_p
    kappa = N_t * kappa_V
    eps_L = epsilon / (math.sqrt(N_t) * x_final_norm)
    logN = _log_factor(N_x * N_t)
    logNx = _log_factor(N_x)
    prep = math.sqrt(s) + math.log2(1 << max(0, math.ceil(math.log2(max(N_t, 1)))))
    return {
        "N_t": N_t,
        "N_t_optimistic": N_t_optimistic,
        "N_t_simple": N_t_simple,
        "kappa_bound": kappa,
        "epsilon_L": eps_L,
        "linear_solver_calls": logN * s**4 * kappa**2 / eps_L,
        "hhl_simple_calls": logN * s**4 * norm_A_dt ** (2 + 2 * inv_p) / (epsilon ** (2 * inv_p) * eps_L),
        "ambainis_calls": logN**ambainis_c * N_t_simple,
        "hhl_calls": logNx * s**4.5 * N_t**2.5 * kappa_V**2 * x_final_norm / epsilon,
        "final_calls": logNx
        * s**4.5
        * norm_A_dt ** (2.5 * (1 + inv_p))
        * kappa_V ** (23 / 4)
        * solution_scale ** (5 / 4)
        * x_final_norm
        / epsilon ** (9 / 4),
        "final_calls_optimistic": logNx
        * s**4.5
        * norm_A_dt ** (2.5 * (1 + inv_p))
        * kappa_V ** (2 + 5 * inv_p)
        * solution_scale ** (2.5 * inv_p)
        * x_final_norm
        / epsilon ** (1 + 2.5 * inv_p),
        "final_calls_headline": logNx
        * s**4.5
        * norm_A_dt**2.5
        * kappa_V ** (23 / 4)
        * solution_scale ** (5 / 4)
        * x_final_norm
        / epsilon ** (9 / 4),
        "prep_calls": prep,
    }


def exponents(p: float) -> dict[str, dict[str, float]]:
    """Symbolic exponents of the conservative and optimistic final counts."""
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    return {
        "final_calls": {
            "s": 4.5,
            "norm_A_dt": 2.5 * (1 + inv_p),
            "kappa_V": 23 / 4,
            "solution_scale": 5 / 4,
            "x_final_norm": 1.0,
            "epsilon": -9 / 4,
        },
        "final_calls_optimistic": {
            "s": 4.5,
            "norm_A_dt": 2.5 * (1 + inv_p),
            "kappa_V": 2 + 5 * inv_p,
            "solution_scale": 2.5 * inv_p,
            "x_final_norm": 1.0,
            "epsilon": -(1 + 2.5 * inv_p),
        },
    }


@dataclass(frozen=True)
class ResourceEstimate:
    N_t: int
    kappa_bound: float
    epsilon_L: float
    hhl_calls: float
    final_calls: float
    final_calls_optimistic: float
    ambainis_calls: float
    prep_calls: float
    formulas: dict
    exponents: dict

    def to_dict(self) -> dict:
        return {
            "N_t": self.N_t,
            "kappa_bound": self.kappa_bound,
            "epsilon_L": self.epsilon_L,
            "hhl_calls": self.hhl_calls,
            "final_calls": self.final_calls,
            "final_calls_optimistic": self.final_calls_optimistic,
            "ambainis_calls": self.ambainis_calls,
            "prep_calls": self.prep_calls,
            "formulas": dict(self.formulas),
            "exponents": self.exponents,
        }


def resource_estimate(
    problem: OdeProblem,
    method: MultistepMethod,
    spectral: SpectralData,
    epsilon: float,
    ambainis_c: float = 1.0,
) -> ResourceEstimate:
    p = method_order(method)
    if p < 1:
        raise ValueError(f"method {method.name!r} has order 0")
    if not spectral.satisfies_wedge():
        raise ValueError("eigenvalues of A leave the closed left half-plane")
    a = spectral_norm(problem.A)
    if a == 0:
        raise ValueError("||A|| = 0: complexity formulas are undefined")
    scale = float(np.linalg.norm(problem.x_in) + np.linalg.norm(problem.b) / a)
    x_final = float(np.linalg.norm(exact_solution(problem, problem.t_final)))
    f = complexity_formulas(
        norm_A_dt=a * problem.delta_t,
        kappa_V=spectral.kappa_V,
        s=problem.s,
        solution_scale=scale,
        x_final_norm=x_final,
        epsilon=epsilon,
        p=p,
        N_x=problem.N_x,
        ambainis_c=ambainis_c,
    )
    choice = choose_time_steps(problem, method, epsilon, spectral.kappa_V)
    return ResourceEstimate(
        N_t=choice.N_t,
        kappa_bound=f["kappa_bound"],
        epsilon_L=f["epsilon_L"],
        hhl_calls=f["hhl_calls"],
        final_calls=f["final_calls"],
        final_calls_optimistic=f["final_calls_optimistic"],
        ambainis_calls=f["ambainis_calls"],
        prep_calls=prep_cost(problem, choice.N_t),
        formulas=f,
        exponents=exponents(p),
    )


def prep_cost(problem: OdeProblem, N_t: int) -> float:
    """sqrt(s) + log2(N_t), with N_t first rounded up to a power of two."""
    pow2 = 1 << max(0, math.ceil(math.log2(max(int(N_t), 1))))
    return math.sqrt(problem.s) + math.log2(pow2)
