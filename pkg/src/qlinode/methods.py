"""
Linear multistep methods and their stability/order analysis.

A k-step method advances x' = f(t, x) through

    sum_l alpha_l x_{j+l} = dt * sum_l beta_l f_{j+l},    l = 0..k

and is characterised by its generating polynomials rho (alphas) and sigma
(betas). Coefficients are kept as exact fractions, normalised so that
alpha_k = 1. Order conditions are evaluated exactly; only root finding uses
floating point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MultistepMethod",
    "RootSet",
    "DomainRaster",
    "StabilityReport",
    "DegeneratePolynomialError",
    "REGISTRY",
    "EQ_TOL",
    "CLUSTER_TOL",
    "get_method",
    "load_method",
    "generating_polynomials",
    "method_order",
    "order_coefficients",
    "stability_roots",
    "in_stability_domain",
    "stable_mask",
    "is_stable_at_infinity",
    "estimate_alpha_angle",
    "stability_domain_raster",
    "stability_report",
]

#: Boundary tolerance for |zeta| = 1 classification.
EQ_TOL = 1e-9
#: Roots closer than this are merged into one multiple root.
CLUSTER_TOL = 1e-7

DEFAULT_RADII = tuple(np.logspace(-3, 4, 141))


class DegeneratePolynomialError(ValueError):
    """Raised when a stability polynomial vanishes identically."""


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (tuple, list)):
        num, den = value
        return Fraction(int(num), int(den))
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**12)
    return Fraction(value)


@dataclass(frozen=True)
class MultistepMethod:
    """Coefficients of a k-step linear multistep method.

    ``alphas`` and ``betas`` run from index 0 (oldest value) to k (newest).
    They are stored as fractions with ``alphas[k] == 1``; any other leading
    coefficient is divided out on construction.
    """

    name: str
    alphas: tuple[Fraction, ...]
    betas: tuple[Fraction, ...]
    k: int = field(init=False)

    def __post_init__(self):
        alphas = tuple(_frac(a) for a in self.alphas)
        betas = tuple(_frac(b) for b in self.betas)
        if len(alphas) < 2 or len(alphas) != len(betas):
            raise ValueError(
                f"method {self.name!r}: need len(alphas) == len(betas) >= 2, "
                f"got {len(alphas)} and {len(betas)}"
            )
        lead = alphas[-1]
        if lead == 0:
            raise ValueError(f"method {self.name!r}: alpha_k must be nonzero")
        object.__setattr__(self, "alphas", tuple(a / lead for a in alphas))
        object.__setattr__(self, "betas", tuple(b / lead for b in betas))
        object.__setattr__(self, "k", len(alphas) - 1)

    @property
    def is_explicit(self) -> bool:
        return self.betas[-1] == 0

    @property
    def alphas_float(self) -> np.ndarray:
        return np.array([float(a) for a in self.alphas])

    @property
    def betas_float(self) -> np.ndarray:
        return np.array([float(b) for b in self.betas])

    @property
    def beta_sum(self) -> Fraction:
        return sum(self.betas, Fraction(0))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "alphas": [[a.numerator, a.denominator] for a in self.alphas],
            "betas": [[b.numerator, b.denominator] for b in self.betas],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultistepMethod":
        method = cls(data.get("name", "custom"), data["alphas"], data["betas"])
        if "k" in data and int(data["k"]) != method.k:
            raise ValueError(
                f"method {method.name!r}: declared k={data['k']} but "
                f"{method.k + 1} coefficients given"
            )
        return method


F = Fraction

REGISTRY: dict[str, MultistepMethod] = {
    m.name: m
    for m in (
        MultistepMethod("euler", (-1, 1), (1, 0)),
        MultistepMethod("trapezoidal", (-1, 1), (F(1, 2), F(1, 2))),
        MultistepMethod("bdf2", (F(1, 3), F(-4, 3), 1), (0, 0, F(2, 3))),
        MultistepMethod(
            "bdf3", (F(-2, 11), F(9, 11), F(-18, 11), 1), (0, 0, 0, F(6, 11))
        ),
        MultistepMethod(
            "bdf4",
            (F(3, 25), F(-16, 25), F(36, 25), F(-48, 25), 1),
            (0, 0, 0, 0, F(12, 25)),
        ),
    )
}


def get_method(name: str) -> MultistepMethod:
    try:
        return REGISTRY[name.lower()]
    except KeyError:
        raise KeyError(
            f"unknown method {name!r}; registry has {sorted(REGISTRY)}"
        ) from None


def load_method(name_or_path: str | Path) -> MultistepMethod:
    """Resolve a registry name or a JSON method-definition file."""
    if isinstance(name_or_path, str) and name_or_path.lower() in REGISTRY:
        return REGISTRY[name_or_path.lower()]
    path = Path(name_or_path)
    if not path.exists():
        raise KeyError(
            f"{name_or_path!r} is neither a registry method {sorted(REGISTRY)} nor a file"
        )
    return MultistepMethod.from_dict(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# Polynomials and order
# ---------------------------------------------------------------------------


def generating_polynomials(
    method: MultistepMethod,
) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Return (rho, sigma) as coefficient tuples in increasing powers of zeta."""
    return method.alphas, method.betas


def order_coefficients(method: MultistepMethod, q_max: int) -> list[Fraction]:
    """Taylor coefficients c_0..c_{q_max} of rho(e^h) - h sigma(e^h), exactly."""
    coeffs = []
    for q in range(q_max + 1):
        c = sum(
            (a * Fraction(j**q, math.factorial(q)) for j, a in enumerate(method.alphas)),
            Fraction(0),
        )
        if q >= 1:
            c -= sum(
                (
                    b * Fraction(j ** (q - 1), math.factorial(q - 1))
                    for j, b in enumerate(method.betas)
                ),
                Fraction(0),
            )
        coeffs.append(c)
    return coeffs


def method_order(method: MultistepMethod, p_max: int = 12) -> int:
    """Largest p <= p_max with c_0 = ... = c_p = 0 (0 if inconsistent)."""
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    coeffs = order_coefficients(method, p_max + 1)
    if coeffs[0] != 0:
        return 0
    p = 0
    for q in range(1, p_max + 1):
        if coeffs[q] != 0:
            break
        p = q
    return p


# ---------------------------------------------------------------------------
# Roots and the root condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RootSet:
    """Distinct roots of a polynomial with their multiplicities.

    ``degree_drop`` counts how far the degree fell below the nominal k
    because leading coefficients cancelled; each lost degree is a root at
    infinity.
    """

    roots: np.ndarray
    multiplicities: tuple[int, ...]
    degree_drop: int

    def pairs(self) -> list[tuple[complex, int]]:
        return [(complex(z), m) for z, m in zip(self.roots, self.multiplicities)]


def _polish(coeffs_high: np.ndarray, roots: np.ndarray, steps: int = 3) -> np.ndarray:
    deriv = np.polyder(coeffs_high)
    out = roots.astype(complex).copy()
    for _ in range(steps):
        for i, z in enumerate(out):
            d = np.polyval(deriv, z)
            if d == 0:
                continue
            step = np.polyval(coeffs_high, z) / d
            candidate = z - step
            if abs(np.polyval(coeffs_high, candidate)) < abs(np.polyval(coeffs_high, z)):
                out[i] = candidate
    return out


def _cluster(roots: np.ndarray, tol: float = CLUSTER_TOL):
    remaining = list(roots)
    reps, mult = [], []
    while remaining:
        z = remaining.pop(0)
        group = [z]
        rest = []
        for w in remaining:
            (group if abs(w - z) <= tol else rest).append(w)
        remaining = rest
        reps.append(np.mean(group))
        mult.append(len(group))
    return np.array(reps, dtype=complex), tuple(mult)


def _roots_of(coeffs_low: Sequence[complex], nominal_degree: int) -> RootSet:
    coeffs_low = np.asarray(coeffs_low, dtype=complex)
    nz = np.flatnonzero(coeffs_low)
    if nz.size == 0:
        raise DegeneratePolynomialError("polynomial is identically zero")
    degree = int(nz[-1])
    high = coeffs_low[: degree + 1][::-1]
    raw = np.roots(high) if degree > 0 else np.array([], dtype=complex)
    # multiple roots are ill-conditioned under Newton; polish only after clustering
    reps, mult = _cluster(raw)
    simple = np.array([m == 1 for m in mult])
    if simple.any():
        reps[simple] = _polish(high, reps[simple])
    return RootSet(reps, mult, nominal_degree - degree)


def stability_roots(method: MultistepMethod, mu: complex) -> RootSet:
    """Roots of rho(zeta) - mu sigma(zeta) = 0."""
    coeffs = method.alphas_float - mu * method.betas_float
    return _roots_of(coeffs, method.k)


def _root_condition(rs: RootSet, tol: float) -> bool:
    if rs.degree_drop > 0:
        return False
    for z, m in rs.pairs():
        r = abs(z)
        if m > 1:
            if r >= 1 - tol:
                return False
        elif r > 1 + tol:
            return False
    return True


def stable_mask(method: MultistepMethod, mus, tol: float = EQ_TOL) -> np.ndarray:
    """Vectorised root condition for rho - mu sigma over an array of mu.

    Roots come from batched companion-matrix eigenvalues. A root is allowed
    on the unit circle (within ``tol``) only if no other root lies within
    ``CLUSTER_TOL`` of it. A vanishing leading coefficient loses a root to
    infinity and marks the point unstable.
    """
    mus = np.asarray(mus, dtype=complex)
    shape = mus.shape
    mus = mus.ravel()
    a, b = method.alphas_float, method.betas_float
    k = method.k
    coeffs = a[None, :] - mus[:, None] * b[None, :]
    lead = coeffs[:, -1]
    ok = lead != 0
    out = np.zeros(mus.size, dtype=bool)
    if not ok.any():
        return out.reshape(shape)
    monic = coeffs[ok, :-1] / lead[ok, None]
    comp = np.zeros((monic.shape[0], k, k), dtype=complex)
    comp[:, 0, :] = -monic[:, ::-1]
    if k > 1:
        idx = np.arange(k - 1)
        comp[:, idx + 1, idx] = 1.0
    roots = np.linalg.eigvals(comp)
    mod = np.abs(roots)
    fine = np.all(mod <= 1 + tol, axis=1)
    edge = mod > 1 - tol
    if k > 1:
        gaps = np.abs(roots[:, :, None] - roots[:, None, :])
        gaps[:, np.arange(k), np.arange(k)] = np.inf
        repeated = np.any(gaps <= CLUSTER_TOL, axis=2)
        fine &= ~np.any(edge & repeated, axis=1)
    out[ok] = fine
    return out.reshape(shape)


def in_stability_domain(method: MultistepMethod, mu: complex, tol: float = EQ_TOL) -> bool:
    """True iff every root of rho - mu sigma satisfies the root condition."""
    return bool(stable_mask(method, [mu], tol)[0])


def is_stable_at_infinity(method: MultistepMethod, tol: float = EQ_TOL) -> bool:
    coeffs = method.betas_float
    if not np.any(coeffs):
        raise DegeneratePolynomialError(
            f"method {method.name!r}: sigma is identically zero"
        )
    rs = _roots_of(coeffs, int(np.flatnonzero(coeffs)[-1]))
    return _root_condition(rs, tol)


# ---------------------------------------------------------------------------
# A(alpha) angle and domain rasters
# ---------------------------------------------------------------------------


def estimate_alpha_angle(
    method: MultistepMethod,
    radii: Iterable[float] = DEFAULT_RADII,
    angular_resolution: float = 1e-3,
    tol: float = EQ_TOL,
) -> float:
    """Sampled A(alpha) angle in radians, accurate to +- angular_resolution.

    Samples mu = -r e^{i theta} on a theta grid in [0, pi/2] and returns the
    largest grid angle for which every sample with |theta| <= angle lies in
    the stability domain. Returns 0 if the negative real axis already fails.
    """
    radii = np.asarray([float(r) for r in radii])
    if radii.size == 0:
        raise ValueError("radii must be non-empty")
    if angular_resolution > 0.01 or angular_resolution <= 0:
        raise ValueError("angular_resolution must be in (0, 0.01]")
    n = int(math.ceil((math.pi / 2) / angular_resolution))
    thetas = np.linspace(0.0, math.pi / 2, n + 1)
    signed = np.concatenate([thetas, -thetas])
    mus = -radii[None, :] * np.exp(1j * signed)[:, None]
    good = stable_mask(method, mus, tol).all(axis=1)
    good = good[: n + 1] & good[n + 1 :]
    if not good[0]:
        return 0.0
    failures = np.flatnonzero(~good)
    last = n if failures.size == 0 else failures[0] - 1
    return float(thetas[last])


@dataclass(frozen=True)
class DomainRaster:
    """Boolean raster of the stability domain sampled at cell centres."""

    mask: np.ndarray  # shape (n_im, n_re); row 0 is the lowest imaginary part
    re_bounds: tuple[float, float]
    im_bounds: tuple[float, float]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.mask.shape[1], self.mask.shape[0]

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        n_re, n_im = self.resolution
        (a, b), (c, d) = self.re_bounds, self.im_bounds
        re = a + (np.arange(n_re) + 0.5) * (b - a) / n_re
        im = c + (np.arange(n_im) + 0.5) * (d - c) / n_im
        return re, im

    def to_csv(self, path: str | Path) -> None:
        re, im = self.centers()
        lines = ["re,im,stable"]
        for i, y in enumerate(im):
            for j, x in enumerate(re):
                lines.append(f"{x:.17g},{y:.17g},{int(self.mask[i, j])}")
        Path(path).write_text("\n".join(lines) + "\n")

    def to_ppm(self, path: str | Path) -> None:
        """Binary PPM, stable cells light, top row = largest imaginary part."""
        n_re, n_im = self.resolution
        img = np.where(self.mask[::-1, :, None], 230, 40).astype(np.uint8)
        img = np.broadcast_to(img, (n_im, n_re, 3))
        with open(path, "wb") as fh:
            fh.write(f"P6\n{n_re} {n_im}\n255\n".encode())
            fh.write(np.ascontiguousarray(img).tobytes())


def stability_domain_raster(
    method: MultistepMethod,
    re_bounds: tuple[float, float] = (-3.0, 1.0),
    im_bounds: tuple[float, float] = (-2.0, 2.0),
    resolution: tuple[int, int] = (100, 100),
    tol: float = EQ_TOL,
) -> DomainRaster:
    n_re, n_im = resolution
    raster = DomainRaster(np.zeros((n_im, n_re), dtype=bool), tuple(re_bounds), tuple(im_bounds))
    re, im = raster.centers()
    raster.mask[:] = stable_mask(method, re[None, :] + 1j * im[:, None], tol)
    return raster


@dataclass(frozen=True)
class StabilityReport:
    method: MultistepMethod
    order: int
    stable_at_infinity: bool
    alpha_angle_radians: float
    alpha_angle_tolerance: float
    domain: DomainRaster | None = None

    @property
    def alpha_angle_degrees(self) -> float:
        return math.degrees(self.alpha_angle_radians)

    def to_dict(self) -> dict:
        out = {
            "method": self.method.to_dict(),
            "order": self.order,
            "stable_at_infinity": self.stable_at_infinity,
            "alpha_angle_radians": self.alpha_angle_radians,
            "alpha_angle_degrees": self.alpha_angle_degrees,
            "alpha_angle_tolerance": self.alpha_angle_tolerance,
        }
        if self.domain is not None:
            out["domain"] = {
                "re_bounds": list(self.domain.re_bounds),
                "im_bounds": list(self.domain.im_bounds),
                "resolution": list(self.domain.resolution),
                "stable_fraction": float(self.domain.mask.mean()),
            }
        return out


def stability_report(
    method: MultistepMethod,
    radii: Iterable[float] = DEFAULT_RADII,
    angular_resolution: float = 1e-3,
    raster: dict | None = None,
    tol: float = EQ_TOL,
) -> StabilityReport:
    """Order, stability at infinity, A(alpha) angle and optionally a domain raster.

    ``raster`` holds keyword arguments for :func:`stability_domain_raster`;
    pass ``{}`` for the defaults or ``None`` to skip the raster.
    """
    return StabilityReport(
        method=method,
        order=method_order(method),
        stable_at_infinity=is_stable_at_infinity(method, tol),
        alpha_angle_radians=estimate_alpha_angle(method, radii, angular_resolution, tol),
        alpha_angle_tolerance=angular_resolution,
        domain=None if raster is None else stability_domain_raster(method, tol=tol, **raster),
    )
