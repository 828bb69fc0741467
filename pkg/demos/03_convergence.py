"""
Global error against step size.

With exact starting values each method converges at its order. With the
Euler starting steps used by the encoding, the start contributes an
O(dt^2) error of its own, so BDF3 and BDF4 drop to second order.
"""

import numpy as np

from qlinode import OdeProblem
from qlinode.analysis import fit_scaling, global_error
from qlinode.methods import REGISTRY, method_order

prob = OdeProblem(np.diag([-1.0, -2.0]), [1.0, 0.5], [1.0, 1.0], delta_t=1.0)
sweep = [16, 32, 64, 128, 256]

print(f"{'method':12s} {'p':>2s} {'exact start':>12s} {'Euler start':>12s}")
for name, method in REGISTRY.items():
    slopes = []
    for starter in ("exact", "euler"):
        pts = [(2.0 / n, global_error(prob, method, n, starter=starter).error) for n in sweep]
        slopes.append(fit_scaling(pts).exponent)
    print(f"{name:12s} {method_order(method):2d} {slopes[0]:12.3f} {slopes[1]:12.3f}")
