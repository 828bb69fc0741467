"""
Assembly of the block linear system whose solution is the whole trajectory.

Block rows of the system matrix (each block N_x x N_x, dt = 2 delta_t / N_t):

    row 0                  : I x_0                                  = x_in
    rows 1 .. k-1          : x_j - (I + A dt) x_{j-1}               = b dt
    rows k .. N_t/2        : sum_l (alpha_l I - beta_l A dt) x_{j-k+l} = (sum_l beta_l) b dt
    rows N_t/2+1 .. N_t    : x_j - x_{j-1}                          = 0

The padding rows hold the solution constant over [t0 + delta_t, t0 + 2 delta_t],
so the final value occupies half of the time register.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .linalg import spectral_norm
from .methods import MultistepMethod, method_order
from .problem import OdeProblem

__all__ = [
    "OracleCounter",
    "ProblemOracle",
    "EncodedSystem",
    "StepSizeWarning",
    "TimeStepChoice",
    "NormBound",
    "build_system",
    "choose_time_steps",
    "matrix_norm_bound",
    "rhs_norm_bound",
]


class StepSizeWarning(UserWarning):
    """dt * ||A|| exceeds 1, outside the regime where ||calA|| = O(1) holds."""


@dataclass
class OracleCounter:
    """Query counts against the sparse-access oracles for A, b and x_in.

    Increments are atomic so one counter may be shared between threads.
    """

    a_element_queries: int = 0
    a_locate_queries: int = 0
    b_queries: int = 0
    x_in_queries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, name: str, n: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + n)

    def reset(self) -> None:
        with self._lock:
            self.a_element_queries = self.a_locate_queries = 0
            self.b_queries = self.x_in_queries = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "a_element_queries": self.a_element_queries,
            "a_locate_queries": self.a_locate_queries,
            "b_queries": self.b_queries,
            "x_in_queries": self.x_in_queries,
        }


class ProblemOracle:
    """Sparse-access oracle for one snapshot of (A, b, x_in).

    ``a_locate(col, l)`` gives the row of the l-th nonzero in column ``col``;
    ``a_element(row, col)`` gives the value. Every call is counted.
    """

    def __init__(self, A, b, x_in, counter: OracleCounter):
        self._A = np.asarray(A)
        self._b = np.asarray(b)
        self._x_in = np.asarray(x_in)
        self._col_rows = [np.flatnonzero(self._A[:, c]) for c in range(self._A.shape[1])]
        self.counter = counter

    def column_nnz(self, col: int) -> int:
        return len(self._col_rows[col])

    def a_locate(self, col: int, ell: int) -> int:
        self.counter.add("a_locate_queries")
        return int(self._col_rows[col][ell])

    def a_element(self, row: int, col: int):
        self.counter.add("a_element_queries")
        return self._A[row, col]

    def _read_sparse_vector(self, vec: np.ndarray, name: str) -> np.ndarray:
        out = np.zeros_like(vec)
        idx = np.flatnonzero(vec)
        self.counter.add(name, len(idx))
        out[idx] = vec[idx]
        return out

    def read_A(self) -> np.ndarray:
        out = np.zeros_like(self._A)
        for col in range(self._A.shape[1]):
            for ell in range(self.column_nnz(col)):
                row = self.a_locate(col, ell)
                out[row, col] = self.a_element(row, col)
        return out

    def read_b(self) -> np.ndarray:
        return self._read_sparse_vector(self._b, "b_queries")

    def read_x_in(self) -> np.ndarray:
        return self._read_sparse_vector(self._x_in, "x_in_queries")


@dataclass(frozen=True)
class EncodedSystem:
    """Block-coordinate storage of the trajectory system calA x = calb.

    ``block_rows[i], block_cols[i], block_data[i]`` describe one dense
    N_x x N_x block. ``calb`` is the flattened right-hand side.
    """

    problem: OdeProblem
    method: MultistepMethod
    N_t: int
    dt: float
    block_rows: np.ndarray
    block_cols: np.ndarray
    block_data: np.ndarray
    calb: np.ndarray
    counter: OracleCounter

    @property
    def N_x(self) -> int:
        return self.problem.N_x

    @property
    def dim(self) -> int:
        return (self.N_t + 1) * self.N_x

    @property
    def times(self) -> np.ndarray:
        return self.problem.t0 + self.dt * np.arange(self.N_t + 1)

    @property
    def rhs_blocks(self) -> np.ndarray:
        return self.calb.reshape(self.N_t + 1, self.N_x)

    def block(self, row: int, col: int) -> np.ndarray:
        hits = np.flatnonzero((self.block_rows == row) & (self.block_cols == col))
        if hits.size == 0:
            return np.zeros((self.N_x, self.N_x), dtype=self.block_data.dtype)
        return self.block_data[hits[0]]

    def blocks_in_row(self, row: int) -> dict[int, np.ndarray]:
        return {
            int(self.block_cols[i]): self.block_data[i]
            for i in np.flatnonzero(self.block_rows == row)
        }

    def to_sparse(self) -> sp.csr_matrix:
        n = self.N_x
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        rows = (self.block_rows[:, None, None] * n + ii).ravel()
        cols = (self.block_cols[:, None, None] * n + jj).ravel()
        vals = self.block_data.ravel()
        keep = vals != 0
        mat = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(self.dim, self.dim))
        return mat.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.block_data))

    def nnz_bound(self) -> int:
        return (self.N_t + 1) * self.N_x * (self.method.k + 1) * (self.problem.s + 1)


def _check_nt(N_t: int, k: int) -> int:
    if int(N_t) != N_t:
        raise ValueError(f"N_t must be an integer, got {N_t}")
    N_t = int(N_t)
    if N_t % 2:
        raise ValueError(f"N_t must be even, got {N_t}")
    if N_t < 2 * k:
        raise ValueError(f"N_t must be >= 2k = {2 * k}, got {N_t}")
    return N_t


def build_system(
    problem: OdeProblem,
    method: MultistepMethod,
    N_t: int,
    counter: OracleCounter | None = None,
) -> EncodedSystem:
    """Assemble calA and calb for ``problem`` discretised by ``method``.

    Rows k <= j <= N_t/2 take the multistep form, so for k = 1 the first
    multistep row directly follows the initial-condition row. All reads of
    A, b and x_in go through a counted :class:`ProblemOracle`.
    """
    k = method.k
    N_t = _check_nt(N_t, k)
    dt = 2.0 * problem.delta_t / N_t
    n = problem.N_x
    counter = OracleCounter() if counter is None else counter
    if problem.coefficients is None and dt * spectral_norm(problem.A) > 1:
        warnings.warn(
            f"dt*||A|| = {dt * spectral_norm(problem.A):.3g} > 1; norm bound not guaranteed",
            StepSizeWarning,
            stacklevel=2,
        )

    def oracle(j: int) -> ProblemOracle:
        A_t, b_t = problem.coefficients_at(problem.t0 + j * dt)
        if A_t.shape != (n, n) or b_t.shape != (n,):
            raise ValueError(f"coefficients at step {j} have wrong shape")
        return ProblemOracle(A_t, b_t, problem.x_in, counter)

    alphas, betas = method.alphas_float, method.betas_float
    dtype = np.result_type(problem.A, problem.b, problem.x_in, float)
    eye = np.eye(n, dtype=dtype)
    rows, cols, data = [], [], []
    rhs = np.zeros((N_t + 1, n), dtype=dtype)

    def put(r, c, blk):
        rows.append(r)
        cols.append(c)
        data.append(blk)

    put(0, 0, eye)
    rhs[0] = oracle(0).read_x_in()
    for j in range(1, k):
        orc = oracle(j - 1)
        put(j, j - 1, -(eye + orc.read_A() * dt))
        put(j, j, eye)
        rhs[j] = orc.read_b() * dt
    for j in range(k, N_t // 2 + 1):
        acc = np.zeros(n, dtype=dtype)
        for ell in range(k + 1):
            col = j - k + ell
            if betas[ell] != 0:
                orc = oracle(col)
                put(j, col, alphas[ell] * eye - betas[ell] * dt * orc.read_A())
                acc += betas[ell] * orc.read_b()
            elif alphas[ell] != 0:
                put(j, col, alphas[ell] * eye)
        rhs[j] = acc * dt
    for j in range(N_t // 2 + 1, N_t + 1):
        put(j, j - 1, -eye)
        put(j, j, eye)

    return EncodedSystem(
        problem=problem,
        method=method,
        N_t=N_t,
        dt=dt,
        block_rows=np.array(rows, dtype=int),
        block_cols=np.array(cols, dtype=int),
        block_data=np.array(data, dtype=dtype),
        calb=rhs.ravel(),
        counter=counter,
    )


# ---------------------------------------------------------------------------
# Step-count selection
# ---------------------------------------------------------------------------


class TimeStepChoice(NamedTuple):
    N_t: int
    raw: float
    two_term: float
    simple: float


def _even_ceil(x: float) -> int:
    n = math.ceil(x - 1e-12)
    return n + (n % 2)


def choose_time_steps(
    problem: OdeProblem,
    method: MultistepMethod,
    epsilon: float,
    kappa_V: float,
    C: float = 1.0,
) -> TimeStepChoice:
    """Step count meeting an error budget ``epsilon``.

    ``raw`` is C (||A|| dt_total)^(1+1/p) sqrt(kappa_V^3 (||x_in|| + ||b||/||A||) / epsilon);
    ``N_t`` rounds it up to an even integer no smaller than 2k. ``two_term``
    keeps the separate starting-error and propagation terms, and ``simple``
    is the bare (||A|| dt_total)^(1+1/p) / epsilon^(1/p) estimate.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if kappa_V < 1:
        raise ValueError("kappa_V must be >= 1")
    p = method_order(method)
    if p < 1:
        raise ValueError(f"method {method.name!r} is inconsistent (order 0)")
    floor = max(2 * method.k, 2)
    a_norm = spectral_norm(problem.A)
    if a_norm == 0:
        return TimeStepChoice(floor, 0.0, 0.0, 0.0)
    scale = np.linalg.norm(problem.x_in) + np.linalg.norm(problem.b) / a_norm
    adt = a_norm * problem.delta_t
    raw = C * adt ** (1 + 1 / p) * math.sqrt(kappa_V**3 * scale / epsilon)
    two_term = C * (
        adt * math.sqrt(kappa_V**3 * scale / epsilon)
        + adt ** (1 + 1 / p) * (kappa_V**2 * scale / epsilon) ** (1 / p)
    )
    simple = adt ** (1 + 1 / p) / epsilon ** (1 / p)
    return TimeStepChoice(max(floor, _even_ceil(raw)), raw, two_term, simple)


# ---------------------------------------------------------------------------
# Norm bounds
# ---------------------------------------------------------------------------


class NormBound(NamedTuple):
    """``bound`` sums the block-diagonal norms; ``computed_norm`` is ||calA||.

    ``terms[l]`` is the norm of the l-th block subdiagonal and
    ``analytic_terms[l]`` its closed-form bound in terms of dt ||A||.
    """

    bound: float
    computed_norm: float
    terms: tuple[float, ...]
    analytic_terms: tuple[float, ...]

    @property
    def analytic_bound(self) -> float:
        return float(sum(self.analytic_terms))


def matrix_norm_bound(system: EncodedSystem) -> NormBound:
    k = system.method.k
    offsets = system.block_rows - system.block_cols
    terms = []
    for ell in range(k + 1):
        blocks = system.block_data[offsets == ell]
        terms.append(max((spectral_norm(b) for b in blocks), default=0.0))
    h_a = system.dt * spectral_norm(system.problem.A)
    alphas = [abs(float(a)) for a in system.method.alphas]
    betas = [abs(float(b)) for b in system.method.betas]
    analytic = [max(1.0, alphas[k] + betas[k] * h_a)]
    analytic.append(max(1.0 + h_a, alphas[k - 1] + betas[k - 1] * h_a))
    analytic += [alphas[k - ell] + betas[k - ell] * h_a for ell in range(2, k + 1)]
    return NormBound(
        bound=float(sum(terms)),
        computed_norm=spectral_norm(system.to_sparse()),
        terms=tuple(terms),
        analytic_terms=tuple(analytic),
    )


def rhs_norm_bound(system: EncodedSystem) -> tuple[float, float]:
    """(||calb||^2, ||x_in||^2 + (k-1)||b||^2 dt^2 + dt delta_t ||b||^2 (sum beta)^2)."""
    p = system.problem
    k = system.method.k
    b2 = np.linalg.norm(p.b) ** 2
    bound = (
        np.linalg.norm(p.x_in) ** 2
        + (k - 1) * b2 * system.dt**2
        + system.dt * p.delta_t * b2 * float(system.method.beta_sum) ** 2
    )
    return float(np.linalg.norm(system.calb) ** 2), float(bound)
