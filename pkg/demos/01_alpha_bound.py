"""
How much extrapolation is allowed?
==================================

For a co-coercive forward operator the extrapolation factor has to
shrink as the normalized step gamma = l * lam / m grows.  At gamma -> 0
the bound approaches 1/3, at gamma = 1 it is about 0.236 and it vanishes
as gamma -> 2.
"""

import numpy as np

from inertialfb import alpha_max_scalar
from inertialfb.cli import emit_alpha_curve

# a few points of the curve
for gamma in (1e-8, 0.25, 0.5, 1.0, 1.5, 1.9, 1.999):
    print(f"gamma = {gamma:<8g} alpha_max = {alpha_max_scalar(gamma):.6f}")

# the full curve, as two columns ready for any plotting tool
curve = emit_alpha_curve(eps=1e-6, grid=199)
print("\nmonotone decreasing:", bool(np.all(np.diff(curve[:, 1]) < 0)))

# the margin eps trades a little extrapolation for a strict inequality
for eps in (0.0, 1e-6, 1e-2, 1e-1):
    print(f"eps = {eps:<6g} alpha_max(gamma=1) = {alpha_max_scalar(1.0, eps):.6f}")
