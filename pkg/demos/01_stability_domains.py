"""
Stability domains of the built-in multistep methods.

For each method we print its order, whether it is stable at infinity, and
the A(alpha) angle found by sampling rays in the left half-plane. With
matplotlib installed the domains are also drawn to ``stability_domains.png``.
"""

import math

from qlinode.methods import REGISTRY, stability_report

for name, method in REGISTRY.items():
    rep = stability_report(method, raster={"re_bounds": (-8, 2), "im_bounds": (-5, 5), "resolution": (200, 200)})
    print(
        f"{name:12s} k={method.k} order={rep.order} "
        f"stable_at_infinity={rep.stable_at_infinity} "
        f"alpha={math.degrees(rep.alpha_angle_radians):6.2f} deg"
    )

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    raise SystemExit("matplotlib not installed; skipping the figure")

fig, axes = plt.subplots(1, len(REGISTRY), figsize=(3 * len(REGISTRY), 3), sharey=True)
for ax, (name, method) in zip(axes, REGISTRY.items()):
    rep = stability_report(method, raster={"re_bounds": (-8, 2), "im_bounds": (-5, 5), "resolution": (200, 200)})
    ax.imshow(rep.domain.mask, origin="lower", extent=(-8, 2, -5, 5), cmap="Greys")
    ax.axvline(0, lw=0.5, color="r")
    ax.set_title(name)
fig.tight_layout()
fig.savefig("stability_domains.png", dpi=120)
print("wrote stability_domains.png")
