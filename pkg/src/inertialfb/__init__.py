"""Inertial forward-backward splitting and inertial primal-dual methods.

Submodules
----------
linops       linear maps, metrics, norm and definiteness checks
operators    resolvents and forward operators
splitting    inertial forward-backward iteration and its conditions
primal_dual  inertial primal-dual iteration, step sizes, preconditioning
imaging      TV-l2 denoising / deconvolution problem builders
pgm          binary PGM image reading and writing
cli          experiment runner (command line entry point)
"""

from . import imaging, linops, operators, primal_dual, splitting
from .linops import Metric, block_pd_check, m_norm_sq, op_norm_estimate, pd_margin
from .primal_dual import (
    PDConfig,
    SaddleProblem,
    alpha_bound_pd,
    diag_precond,
    ipdfb,
    ipdfb_step,
    scalar_steps_from_lemma,
)
from .splitting import AlphaSchedule, MonotonePair, alpha_max_scalar, inertial_fb, inertial_fb_step

__version__ = "0.1.0"
