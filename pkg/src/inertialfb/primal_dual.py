"""Inertial primal-dual forward-backward method for saddle-point problems.

Targets ``min_x max_y G(x) + Q(x) + <K x, y> - F*(y) - P*(y)`` with
``G``, ``F*`` handled by proximal maps and ``Q``, ``P*`` by gradients.
Step sizes are either scalars ``tau``, ``sigma`` or diagonal
preconditioners ``T``, ``Sigma`` stored as arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .linops import (
    DENSE_LIMIT,
    LinearMap,
    Metric,
    block2x2,
    block_pd_check,
    diagonal,
    identity,
    op_norm_estimate,
    pd_margin,
)
from .operators import ForwardOp, Resolvent
from .splitting import AlphaSchedule, alpha_max_scalar, next_alpha

__all__ = [
    "SaddleProblem",
    "PDConfig",
    "PDState",
    "PDResult",
    "StepSizes",
    "pd_metric",
    "pd_norm_sq",
    "ipdfb_step",
    "ipdfb",
    "scalar_steps_from_lemma",
    "alpha_bound_pd",
    "check_theorem3",
    "diag_precond",
    "check_theorem4",
]


@dataclass(frozen=True)
class SaddleProblem:
    K: LinearMap
    prox_G: Resolvent
    prox_Fstar: Resolvent
    grad_Q: Optional[ForwardOp] = None
    grad_Pstar: Optional[ForwardOp] = None
    L_Q: float = 0.0
    L_P: float = 0.0
    D: Optional[np.ndarray] = None
    E: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.L_Q > 0) != (self.grad_Q is not None):
            raise ValueError("L_Q must be positive exactly when grad_Q is given")
        if (self.L_P > 0) != (self.grad_Pstar is not None):
            raise ValueError("L_P must be positive exactly when grad_Pstar is given")
        if self.prox_G.dim != self.dim_x or self.prox_Fstar.dim != self.dim_y:
            raise ValueError("prox dimensions do not match K")

    @property
    def dim_x(self) -> int:
        return self.K.dim_in

    @property
    def dim_y(self) -> int:
        return self.K.dim_out

    def cocoercivity_diagonals(self):
        """``D`` and ``E`` as arrays, defaulting to ``L_Q``/``L_P`` times ones."""
        d = np.full(self.dim_x, self.L_Q) if self.D is None else np.asarray(self.D, float)
        e = np.full(self.dim_y, self.L_P) if self.E is None else np.asarray(self.E, float)
        return d, e


@dataclass(frozen=True)
class PDConfig:
    """Step sizes (scalar or diagonal arrays), extrapolation rule and relaxation.

    ``rho != 1`` selects the over-relaxed baseline; it cannot be combined
    with a nonzero extrapolation schedule.
    """

    tau: object
    sigma: object
    schedule: AlphaSchedule = AlphaSchedule()
    rho: float = 1.0
    eps: float = 1e-6

    def __post_init__(self):
        t, s = np.asarray(self.tau, float), np.asarray(self.sigma, float)
        if np.any(t <= 0) or np.any(s <= 0) or not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ValueError("step sizes must be positive and finite")
        if not 0.0 < self.rho <= 2.0:
            raise ValueError("rho must lie in (0, 2]")
        if self.rho != 1.0 and not self.schedule.is_zero:
            raise ValueError("over-relaxation is only supported with alpha = 0")

    @property
    def preconditioned(self) -> bool:
        return np.ndim(self.tau) > 0 or np.ndim(self.sigma) > 0


class StepSizes(NamedTuple):
    tau: object
    sigma: object


def _inv_map(step, n: int) -> LinearMap:
    if np.ndim(step) == 0:
        return identity(n, 1.0 / float(step))
    step = np.asarray(step, dtype=float)
    if step.shape != (n,):
        raise ValueError(f"step array has shape {step.shape}, expected ({n},)")
    return diagonal(1.0 / step)


def pd_metric(cfg: PDConfig, K: LinearMap) -> Metric:
    """``[[T^-1, -K^*], [-K, Sigma^-1]]`` as a :class:`Metric`.

    Raises ``ValueError`` when it fails to be positive definite, e.g. when
    ``tau * sigma * ||K||^2 >= 1`` in the scalar case.
    """
    n, m = K.dim_in, K.dim_out
    tinv, sinv = _inv_map(cfg.tau, n), _inv_map(cfg.sigma, m)
    chk = block_pd_check(tinv, sinv, -K)
    if not chk.pd:
        raise ValueError(
            f"step sizes give a metric that is not positive definite: "
            f"||Sigma^1/2 K T^1/2|| = {chk.norm:.6g} (must be < 1)"
        )
    mp = block2x2(tinv, -K.H, -K, sinv)
    if n + m <= DENSE_LIMIT:
        margin = pd_margin(mp)
    else:
        # lower bound from the block lemma: (1 - ||C||) * min(lambda_min(T^-1), lambda_min(Sigma^-1))
        margin = (1.0 - chk.norm) * min(pd_margin(tinv), pd_margin(sinv))
    return Metric.from_map(mp, margin=margin)


def pd_norm_sq(cfg: PDConfig, K: LinearMap, dx, dy, kdx=None) -> float:
    """``||(dx, dy)||_M^2`` in the primal-dual metric (includes the cross term)."""
    if kdx is None:
        kdx = K.apply(dx)
    return float(np.sum(dx * dx / cfg.tau) - 2.0 * (kdx @ dy) + np.sum(dy * dy / cfg.sigma))


@dataclass(frozen=True)
class PDState:
    x_prev: np.ndarray
    x_curr: np.ndarray
    y_prev: np.ndarray
    y_curr: np.ndarray
    k: int = 0
    err_sum: float = 0.0

    @classmethod
    def start(cls, x0, y0) -> "PDState":
        x0 = np.array(x0, dtype=float)
        y0 = np.array(y0, dtype=float)
        return cls(x0, x0.copy(), y0, y0.copy(), 0, 0.0)


def ipdfb_step(state: PDState, prob: SaddleProblem, cfg: PDConfig, alpha: float) -> PDState:
    """One step of the inertial primal-dual forward-backward iteration."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if cfg.rho != 1.0 and alpha != 0.0:
        raise ValueError("over-relaxation requires alpha = 0")
    K = prob.K
    tau, sigma = cfg.tau, cfg.sigma
    x, y = state.x_curr, state.y_curr
    dx, dy = x - state.x_prev, y - state.y_prev
    xi = x + alpha * dx
    zeta = y + alpha * dy

    v = K.adjoint(zeta)
    if prob.grad_Q is not None:
        v = v + prob.grad_Q(xi)
    x_new = prob.prox_G(xi - tau * v, tau)
    xbar = 2.0 * x_new - xi
    w = -K.apply(xbar)
    if prob.grad_Pstar is not None:
        w = w + prob.grad_Pstar(zeta)
    y_new = prob.prox_Fstar(zeta - sigma * w, sigma)

    if cfg.rho != 1.0:
        x_new = (1.0 - cfg.rho) * x + cfg.rho * x_new
        y_new = (1.0 - cfg.rho) * y + cfg.rho * y_new

    err = state.err_sum
    if alpha:
        err += alpha * pd_norm_sq(cfg, K, dx, dy)
    return PDState(x, np.asarray(x_new, float), y, np.asarray(y_new, float), state.k + 1, err)


@dataclass
class PDResult:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    converged: bool
    state: PDState
    trace: dict
    diverged: bool = False


def ipdfb(
    prob: SaddleProblem,
    cfg: PDConfig,
    x0=None,
    y0=None,
    tol: float = 1e-10,
    max_iter: int = 1000,
    callback: Optional[Callable] = None,
) -> PDResult:
    """Run the inertial primal-dual iteration.

    The stopping rule and ``callback`` contract mirror
    :func:`inertialfb.splitting.inertial_fb`; norms are taken in the
    primal-dual metric.
    """
    K = prob.K
    x0 = np.zeros(prob.dim_x) if x0 is None else x0
    y0 = np.zeros(prob.dim_y) if y0 is None else y0
    state = PDState.start(x0, y0)
    trace = {"alpha": [], "e_k": [], "residual": [], "err_sum": []}
    converged = diverged = False
    # x_-1 = x_0, so the first increment is zero; afterwards the squared
    # step norm of one iteration is the increment norm of the next
    dz_sq = 0.0
    for k in range(1, max_iter + 1):
        alpha = 0.0 if cfg.rho != 1.0 else next_alpha(cfg.schedule, k, max(dz_sq, 0.0))
        z_norm = math.sqrt(max(pd_norm_sq(cfg, K, state.x_curr, state.y_curr), 0.0))
        state = ipdfb_step(state, prob, cfg, alpha)
        sx = state.x_curr - state.x_prev
        sy = state.y_curr - state.y_prev
        e_k = alpha * dz_sq
        dz_sq = pd_norm_sq(cfg, K, sx, sy)
        res = math.sqrt(max(dz_sq, 0.0)) / max(1.0, z_norm)
        info = {"alpha": alpha, "e_k": e_k, "residual": res}
        for key in ("alpha", "e_k", "residual"):
            trace[key].append(info[key])
        trace["err_sum"].append(state.err_sum)
        if not (np.all(np.isfinite(state.x_curr)) and np.all(np.isfinite(state.y_curr))):
            diverged = True
            break
        if callback is not None and callback(state, info):
            break
        if res < tol:
            converged = True
            break
    return PDResult(
        state.x_curr,
        state.y_curr,
        state.k,
        converged,
        state,
        {k: np.asarray(v) for k, v in trace.items()},
        diverged,
    )


# ---------------------------------------------------------------------------
# step-size rules and condition checks


def scalar_steps_from_lemma(
    K_norm: float, L_Q: float = 0.0, L_P: float = 0.0, gamma: float = 1.0, delta: float = 1.0, r: float = 1.0
) -> StepSizes:
    """``tau = 1/(||K|| r + L_Q/gamma)``, ``sigma = 1/(||K||/r + L_P/delta)``."""
    if not (0 < gamma < 2 and 0 < delta < 2):
        raise ValueError("gamma and delta must lie in (0, 2)")
    if r <= 0:
        raise ValueError("r must be positive")
    den_t = K_norm * r + L_Q / gamma
    den_s = K_norm / r + L_P / delta
    if den_t <= 0 or den_s <= 0:
        raise ValueError("zero denominator: ||K|| and the matching Lipschitz constant are both zero")
    return StepSizes(1.0 / den_t, 1.0 / den_s)


def alpha_bound_pd(gamma: float, delta: float, eps: float = 1e-6) -> float:
    """Largest admissible constant ``alpha`` for normalized steps ``gamma``, ``delta``."""
    return alpha_max_scalar(max(gamma, delta), eps)


def check_theorem3(
    prob: SaddleProblem, cfg: PDConfig, alpha: float, K_norm: Optional[float] = None, eps: Optional[float] = None
) -> bool:
    """Scalar-step conditions guaranteeing a summable inertial error for a given ``alpha``."""
    if cfg.preconditioned:
        raise ValueError("check_theorem3 applies to scalar step sizes; use check_theorem4")
    eps = cfg.eps if eps is None else eps
    if K_norm is None:
        K_norm = op_norm_estimate(prob.K)
    c = 1.0 - 3.0 * alpha - eps
    if c <= 0:
        return False
    a = 0.5 * (1.0 - alpha) ** 2
    p = c / cfg.tau - a * prob.L_Q
    d = c / cfg.sigma - a * prob.L_P
    if p < 0 or d < 0:
        return False
    rhs = c * c * K_norm**2
    return p * d >= rhs * (1.0 - 1e-12)


def diag_precond(
    K: LinearMap,
    D=None,
    E=None,
    gamma: float = 1.0,
    delta: float = 1.0,
    r: float = 1.0,
    s: float = 1.0,
    fill: Optional[float] = None,
    verify: bool = True,
) -> StepSizes:
    """Diagonal step sizes from the entries of ``K``.

    ``tau_j = 1/(d_j/gamma + r sum_i |K_ij|^(2-s))`` and
    ``sigma_i = 1/(e_i/delta + (1/r) sum_j |K_ij|^s)`` with ``0^0 = 0``.

    A row or column with a zero denominator corresponds to a variable that
    does not enter the problem; this raises unless ``fill`` provides a
    value to use instead.
    """
    if not 0.0 <= s <= 2.0:
        raise ValueError("s must lie in [0, 2]")
    if not (0 < gamma < 2 and 0 < delta < 2) or r <= 0:
        raise ValueError("need gamma, delta in (0, 2) and r > 0")
    m, n = K.shape
    a = abs(K.to_sparse()).tocsr()
    a.eliminate_zeros()
    col = np.asarray(a.power(2.0 - s).sum(axis=0)).ravel() if s < 2 else np.asarray((a > 0).sum(axis=0)).ravel().astype(float)
    row = np.asarray(a.power(s).sum(axis=1)).ravel() if s > 0 else np.asarray((a > 0).sum(axis=1)).ravel().astype(float)
    d = np.zeros(n) if D is None else np.broadcast_to(np.asarray(D, float), (n,))
    e = np.zeros(m) if E is None else np.broadcast_to(np.asarray(E, float), (m,))
    den_t = d / gamma + r * col
    den_s = e / delta + row / r
    for name, den in (("column", den_t), ("row", den_s)):
        empty = den <= 0
        if np.any(empty) and fill is None:
            idx = np.flatnonzero(empty)[:5]
            raise ValueError(f"{name}s {idx.tolist()} of K are empty with zero curvature; step would be infinite")
    tau = np.where(den_t > 0, 1.0 / np.where(den_t > 0, den_t, 1.0), fill if fill is not None else 0.0)
    sigma = np.where(den_s > 0, 1.0 / np.where(den_s > 0, den_s, 1.0), fill if fill is not None else 0.0)
    if verify:
        a1 = diagonal(1.0 / tau - 0.5 * d)
        a2 = diagonal(1.0 / sigma - 0.5 * e)
        nrm = block_pd_check(a1, a2, K).norm
        if nrm > 1.0 + 1e-9:
            raise RuntimeError(f"preconditioner check failed: norm {nrm:.12g} > 1")
    return StepSizes(tau, sigma)


def check_theorem4(
    prob: SaddleProblem, T, Sigma, alpha: float, eps: float = 1e-6, tol: float = 1e-9
) -> bool:
    """Diagonal-preconditioned conditions for a given ``alpha``."""
    c = 1.0 - 3.0 * alpha - eps
    if c <= 0:
        return False
    a = 0.5 * (1.0 - alpha) ** 2
    d, e = prob.cocoercivity_diagonals()
    t = np.broadcast_to(np.asarray(T, float), (prob.dim_x,))
    s = np.broadcast_to(np.asarray(Sigma, float), (prob.dim_y,))
    a1 = c / t - a * d
    a2 = c / s - a * e
    if np.any(a1 < 0) or np.any(a2 < 0):
        return False
    if np.any(a1 == 0) or np.any(a2 == 0):
        return False
    nrm = block_pd_check(diagonal(a1), diagonal(a2), prob.K).norm
    return nrm <= (1.0 / c) * (1.0 + tol)
