"""Inertial forward-backward splitting in a fixed metric ``M``.

Solves ``0 in A(x) + B(x)`` with ``A`` given through its resolvent and
``B`` single valued and co-coercive, by iterating::

    y     = x_k + alpha_k (x_k - x_{k-1})
    x_k+1 = (M + lam A)^-1 (M y - lam B(y))

Also provides the extrapolation schedules and the convergence-condition
checkers that go with the iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .linops import LinearMap, Metric, m_norm_sq, pd_margin
from .operators import ForwardOp, Resolvent

__all__ = [
    "AlphaSchedule",
    "FBState",
    "FBResult",
    "MonotonePair",
    "Check",
    "inertial_fb_step",
    "inertial_fb",
    "check_theorem1",
    "check_theorem2",
    "theorem2_margin",
    "alpha_max_scalar",
    "next_alpha",
    "implicit_variant_metric",
]

SCHEDULE_KINDS = ("constant", "nondecreasing-ramp", "fista", "fista-safeguarded", "theorem2-max")


@dataclass(frozen=True)
class AlphaSchedule:
    """Rule producing the extrapolation factor ``alpha_k``.

    kind
        ``constant``: ``alpha``.
        ``nondecreasing-ramp``: ``alpha * min(1, k / ramp)``.
        ``fista``: ``(k-1)/(k+2)``.
        ``fista-safeguarded``: ``min((k-1)/(k+2), c / (k^2 ||x_k - x_k-1||_M^2))``.
        ``theorem2-max``: the largest constant admissible value for the
        normalized step ``max(gamma, delta)`` and margin ``eps``.
    """

    kind: str = "constant"
    alpha: float = 0.0
    c: float = 1e4
    eps: float = 1e-6
    gamma: Optional[float] = None
    delta: Optional[float] = None
    ramp: int = 100

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.c <= 0:
            raise ValueError("safeguard constant c must be positive")
        if self.kind == "theorem2-max" and self.gamma is None:
            raise ValueError("theorem2-max needs gamma")
        if self.kind == "nondecreasing-ramp" and self.ramp < 1:
            raise ValueError("ramp length must be >= 1")

    @property
    def is_zero(self) -> bool:
        return self.kind in ("constant", "nondecreasing-ramp") and self.alpha == 0.0

    def cap(self) -> float:
        """Supremum of the emitted sequence."""
        if self.kind in ("constant", "nondecreasing-ramp"):
            return self.alpha
        if self.kind == "theorem2-max":
            return _theorem2_max(self)
        return 1.0


def _theorem2_max(sched: AlphaSchedule) -> float:
    g = sched.gamma if sched.delta is None else max(sched.gamma, sched.delta)
    return alpha_max_scalar(g, sched.eps)


def next_alpha(sched: AlphaSchedule, k: int, dx_norm_m_sq: float) -> float:
    """Extrapolation factor for iteration ``k >= 1``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if dx_norm_m_sq < 0:
        raise ValueError("squared norm must be nonnegative")
    kind = sched.kind
    if kind == "constant":
        return sched.alpha
    if kind == "nondecreasing-ramp":
        return sched.alpha * min(1.0, k / sched.ramp)
    if kind == "theorem2-max":
        return _theorem2_max(sched)
    fista = (k - 1) / (k + 2)
    if kind == "fista":
        return fista
    guard = math.inf if dx_norm_m_sq == 0 else sched.c / (k * k * dx_norm_m_sq)
    return min(fista, guard)


def alpha_max_scalar(gamma: float, eps: float = 1e-6) -> float:
    """Largest ``alpha`` with ``1 - 3a - eps - (1-a)^2 gamma / 2 >= 0``.

    ``gamma`` is the normalized step ``l * lam / m`` in ``(0, 2)``.  The
    value tends to 1/3 as ``gamma -> 0`` (with ``eps -> 0``).
    """
    if not 0.0 < gamma < 2.0:
        raise ValueError("gamma must lie in (0, 2)")
    # the square root needs eps < (9 - 4g)/(2g); a nonnegative alpha needs the
    # tighter eps <= 1 - g/2
    upper = 1.0 - 0.5 * gamma
    if not 0.0 <= eps <= upper:
        raise ValueError(f"eps must lie in [0, {upper:.6g}] for gamma={gamma}")
    a = 4.0 + 2.0 * eps
    # 1 + (sqrt(9 - a g) - 3)/g, rewritten to avoid cancellation for small g
    return 1.0 - a / (math.sqrt(9.0 - a * gamma) + 3.0)


class Check(NamedTuple):
    ok: bool
    margin: float


def _as_map(m) -> LinearMap:
    return m.map if isinstance(m, Metric) else m


def check_theorem1(m, l: LinearMap, lam: float) -> Check:
    """Is ``M - lam/2 L`` positive definite?  Returns its smallest eigenvalue too."""
    margin = pd_margin(_as_map(m) - (0.5 * lam) * l)
    return Check(margin > 0, margin)


def theorem2_margin(m, l: LinearMap, lam: float, alpha: float, eps: float = 1e-6) -> float:
    """Smallest eigenvalue of ``(1 - 3 alpha - eps) M - (1-alpha)^2 lam/2 L``."""
    mm = _as_map(m)
    return pd_margin((1.0 - 3.0 * alpha - eps) * mm - ((1.0 - alpha) ** 2 * lam / 2.0) * l)


def check_theorem2(m, l: LinearMap, lam: float, alpha: float, eps: float = 1e-6) -> bool:
    """Does ``(1 - 3 alpha) M - (1 - alpha)^2 lam/2 L >= eps M`` hold?"""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return theorem2_margin(m, l, lam, alpha, eps) >= 0.0


def implicit_variant_metric(m, b_linear: LinearMap, lam: float) -> Metric:
    """``M - lam B`` as a metric (raises if it is not positive definite).

    For linear self-adjoint PSD ``B`` the inertial forward-backward iteration
    in ``M`` coincides with the inertial proximal point iteration on
    ``A + B`` in this metric.
    """
    mb = _as_map(m) - lam * b_linear
    margin = pd_margin(mb)
    if margin <= 0:
        raise ValueError(f"M - lam*B is not positive definite (smallest eigenvalue {margin:.3e})")
    return Metric.from_map(mb, margin=margin)


# ---------------------------------------------------------------------------
# iteration


@dataclass(frozen=True)
class MonotonePair:
    """The inclusion ``0 in A(x) + B(x)``; ``recover`` maps a solution to a derived quantity."""

    A: Resolvent
    B: ForwardOp
    recover: Optional[Callable] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.A.dim


@dataclass(frozen=True)
class FBState:
    x_prev: np.ndarray
    x_curr: np.ndarray
    k: int = 0
    err_sum: float = 0.0

    @classmethod
    def start(cls, x0) -> "FBState":
        x0 = np.array(x0, dtype=float)
        return cls(x0, x0.copy(), 0, 0.0)


def inertial_fb_step(
    state: FBState, A: Resolvent, B: ForwardOp, m: Metric, lam: float, alpha: float
) -> FBState:
    """One inertial forward-backward step in the metric ``m``."""
    if lam <= 0:
        raise ValueError("step size must be positive")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    dx = state.x_curr - state.x_prev
    y = state.x_curr + alpha * dx
    w = m.map.apply(y) - lam * B(y)
    try:
        x_next = A.in_metric(w, lam, m)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ValueError(f"resolvent evaluation failed at iteration {state.k}: {exc}") from exc
    err = state.err_sum + alpha * m_norm_sq(m, dx) if alpha else state.err_sum
    return FBState(state.x_curr, np.asarray(x_next, dtype=float), state.k + 1, err)


@dataclass
class FBResult:
    x: np.ndarray
    iterations: int
    converged: bool
    state: FBState
    trace: dict


def inertial_fb(
    pair: MonotonePair,
    metric: Metric,
    lam: float,
    x0=None,
    schedule: AlphaSchedule = AlphaSchedule(),
    tol: float = 1e-10,
    max_iter: int = 1000,
    callback: Optional[Callable] = None,
) -> FBResult:
    """Run the inertial forward-backward iteration.

    Stops when ``||x_k+1 - x_k||_M / max(1, ||x_k||_M) < tol`` or after
    ``max_iter`` steps.  ``callback(state, info)`` is called after every step
    with ``info`` holding ``alpha``, ``e_k`` and ``residual``; returning a
    truthy value stops the run.

    The trace records, per step, ``alpha``, ``e_k = alpha_k ||x_k - x_k-1||_M^2``,
    the relative fixed-point residual and the running error sum.
    """
    if x0 is None:
        x0 = np.zeros(pair.dim)
    state = FBState.start(x0)
    trace = {"alpha": [], "e_k": [], "residual": [], "err_sum": []}
    converged = False
    dx_sq = 0.0  # x_-1 = x_0
    for k in range(1, max_iter + 1):
        alpha = next_alpha(schedule, k, max(dx_sq, 0.0))
        prev_norm = math.sqrt(max(m_norm_sq(metric, state.x_curr), 0.0))
        state = inertial_fb_step(state, pair.A, pair.B, metric, lam, alpha)
        e_k = alpha * dx_sq
        dx_sq = m_norm_sq(metric, state.x_curr - state.x_prev)
        res = math.sqrt(max(dx_sq, 0.0)) / max(1.0, prev_norm)
        info = {"alpha": alpha, "e_k": e_k, "residual": res}
        for key in ("alpha", "e_k", "residual"):
            trace[key].append(info[key])
        trace["err_sum"].append(state.err_sum)
        if not np.all(np.isfinite(state.x_curr)):
            break
        if callback is not None and callback(state, info):
            break
        if res < tol:
            converged = True
            break
    return FBResult(
        state.x_curr, state.k, converged, state, {k: np.asarray(v) for k, v in trace.items()}
    )
