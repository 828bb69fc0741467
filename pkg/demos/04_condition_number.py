"""
Condition number of the block system grows linearly in the number of steps.

A normal matrix and a strongly non-normal one (kappa_V near 100) are
compared; the non-normal case stays well below the N_t kappa_V scale.
"""

import math

from qlinode import OdeProblem
from qlinode.analysis import verify_kappa_bound
from qlinode.methods import REGISTRY
from qlinode.reference import eigen_condition

problems = {
    "normal": OdeProblem([[-1.0, 0.0], [0.0, -1.01]], [0, 0], [1, 1], delta_t=1.0),
    "shear": OdeProblem([[-1.0, 0.5], [0.0, -1.01]], [0, 0], [1, 1], delta_t=1.0),
}

for label, prob in problems.items():
    kv = eigen_condition(prob.A).kappa_V
    for name in ("euler", "bdf2"):
        fit = verify_kappa_bound(prob, REGISTRY[name], [16, 32, 64, 128, 256])
        print(
            f"{label:7s} kappa_V={kv:8.2f} {name:6s} exponent={fit.exponent:.3f} "
            f"prefactor={math.exp(fit.intercept):.3f} kappa/(N_t kappa_V) in "
            f"[{min(fit.ratios):.4f}, {max(fit.ratios):.4f}]"
        )
