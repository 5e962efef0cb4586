"""
Inertia in primal-dual TV-l2 denoising
======================================

We denoise a 64x64 synthetic image with the primal-dual method and count
the iterations needed to shrink the primal-dual gap by four orders of
magnitude, with and without extrapolation, and against over-relaxation.
"""

import math

import numpy as np

from inertialfb import AlphaSchedule, PDConfig, ipdfb
from inertialfb.imaging import add_noise, build_rof_saddle, energies, synthetic_image
from inertialfb.operators import project_dual_ball

lam = 10.0
clean = synthetic_image(64)
f = add_noise(clean, 0.1, seed=0)
prob = build_rof_saddle(f, lam)

# tau * sigma * ||grad||^2 < 1 with ||grad||^2 <= 8
def steps(ratio):
    return math.sqrt(ratio * 0.99 / 8), math.sqrt(0.99 / (8 * ratio))


def iterations_to_gap(cfg, rel=1e-4, k_max=3000):
    gap0 = energies(f, np.zeros(prob.dim_y), f, lam).gap
    hit = {}

    def stop(state, info):
        # over-relaxed dual iterates may leave the unit balls; projecting
        # them keeps the dual energy a valid lower bound
        p = project_dual_ball(state.y_curr)
        if energies(state.x_curr, p, f, lam).gap < rel * gap0:
            hit["k"] = state.k
            return True

    ipdfb(prob, cfg, f.ravel(), None, tol=0.0, max_iter=k_max, callback=stop)
    return hit.get("k")


for ratio in (0.1, 0.01):
    tau, sigma = steps(ratio)
    plain = iterations_to_gap(PDConfig(tau, sigma))
    inertial = iterations_to_gap(PDConfig(tau, sigma, AlphaSchedule("constant", 1 / 3)))
    relaxed = iterations_to_gap(PDConfig(tau, sigma, rho=1.9))
    print(f"tau/sigma = {ratio}: alpha=0 -> {plain}, alpha=1/3 -> {inertial}, rho=1.9 -> {relaxed}")

# alpha = 1/3 sits outside the guaranteed range (the margin 1 - 3 alpha - eps
# is negative), yet it still converges here
