"""Constant-coefficient linear ODE problems x' = A x + b and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = ["OdeProblem", "problem_from_dict", "problem_to_dict", "load_problem"]

CoefficientFn = Callable[[float], tuple[np.ndarray, np.ndarray]]


def _nnz_counts(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = A != 0
    return nz.sum(axis=1), nz.sum(axis=0)


@dataclass(frozen=True)
class OdeProblem:
    """x'(t) = A x(t) + b on [t0, t0 + delta_t] with x(t0) = x_in.

    ``s`` bounds the nonzeros per row and column of A and the nonzeros of b
    and x_in; it defaults to the smallest admissible value. ``coefficients``
    optionally maps a time to ``(A(t), b(t))`` for time-dependent problems;
    all analysis in this package assumes the constant ``A`` and ``b``.
    """

    A: np.ndarray
    b: np.ndarray
    x_in: np.ndarray
    delta_t: float
    t0: float = 0.0
    s: int | None = None
    name: str = "problem"
    coefficients: CoefficientFn | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A))
        b = np.atleast_1d(np.asarray(self.b))
        x_in = np.atleast_1d(np.asarray(self.x_in))
        dtype = np.result_type(A, b, x_in, float)
        A, b, x_in = A.astype(dtype), b.astype(dtype), x_in.astype(dtype)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if b.shape != (n,) or x_in.shape != (n,):
            raise ValueError(
                f"dimension mismatch: A is {n}x{n}, b has {b.shape}, x_in has {x_in.shape}"
            )
        if not self.delta_t > 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")
        actual = self.actual_sparsity(A, b, x_in)
        s = actual if self.s is None else int(self.s)
        if s < actual:
            raise ValueError(f"declared sparsity s={s} but A, b or x_in has {actual} nonzeros")
        for arr in (A, b, x_in):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x_in", x_in)
        object.__setattr__(self, "s", max(s, 1))
        object.__setattr__(self, "delta_t", float(self.delta_t))
        object.__setattr__(self, "t0", float(self.t0))

    @staticmethod
    def actual_sparsity(A, b, x_in) -> int:
        rows, cols = _nnz_counts(np.asarray(A))
        return int(
            max(
                rows.max(initial=0),
                cols.max(initial=0),
                np.count_nonzero(b),
                np.count_nonzero(x_in),
            )
        )

    @property
    def N_x(self) -> int:
        return self.A.shape[0]

    @property
    def t_final(self) -> float:
        return self.t0 + self.delta_t

    def coefficients_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if self.coefficients is None:
            return self.A, self.b
        A_t, b_t = self.coefficients(t)
        return np.asarray(A_t), np.asarray(b_t)


def _scalar(value) -> complex | float:
    if isinstance(value, (list, tuple)):
        re, im = value
        return complex(re, im)
    if isinstance(value, dict):
        return complex(value.get("re", 0.0), value.get("im", 0.0))
    return value


def _vector(values) -> np.ndarray:
    items = [_scalar(v) for v in values]
    return np.array(items, dtype=complex if any(isinstance(v, complex) for v in items) else float)


def problem_from_dict(data: dict, name: str = "problem") -> OdeProblem:
    """Build a problem from its JSON object.

    ``A`` is ``{"dense": [[...]]}`` or ``{"coo": [[i, j, re, im], ...]}``;
    vector and dense entries may be numbers or ``[re, im]`` pairs.
    """
    b = _vector(data["b"])
    x_in = _vector(data["x_in"])
    spec_A = data["A"]
    if isinstance(spec_A, list):
        spec_A = {"dense": spec_A}
    if "dense" in spec_A:
        rows = [[_scalar(v) for v in row] for row in spec_A["dense"]]
        A = np.array(rows, dtype=complex if any(isinstance(v, complex) for r in rows for v in r) else float)
    elif "coo" in spec_A:
        n = int(spec_A.get("shape", [len(b)])[0])
        entries = spec_A["coo"]
        cplx = any(len(e) > 3 and e[3] != 0 for e in entries)
        A = np.zeros((n, n), dtype=complex if cplx else float)
        for e in entries:
            i, j, re = int(e[0]), int(e[1]), float(e[2])
            im = float(e[3]) if len(e) > 3 else 0.0
            A[i, j] += complex(re, im) if cplx else re
    else:
        raise ValueError("A must provide 'dense' or 'coo'")
    return OdeProblem(
        A=A,
        b=b,
        x_in=x_in,
        delta_t=float(data["delta_t"]),
        t0=float(data.get("t0", 0.0)),
        s=data.get("s"),
        name=data.get("name", name),
    )


def _jsonable(arr: np.ndarray):
    if np.iscomplexobj(arr):
        return np.vectorize(lambda z: [z.real, z.imag], otypes=[object])(arr).tolist()
    return arr.tolist()


def problem_to_dict(problem: OdeProblem) -> dict:
    return {
        "name": problem.name,
        "A": {"dense": _jsonable(problem.A)},
        "b": _jsonable(problem.b),
        "x_in": _jsonable(problem.x_in),
        "t0": problem.t0,
        "delta_t": problem.delta_t,
        "s": problem.s,
    }


def load_problem(path: str | Path) -> OdeProblem:
    path = Path(path)
    return problem_from_dict(json.loads(path.read_text()), name=path.stem)
