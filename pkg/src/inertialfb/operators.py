"""Resolvents (proximal maps) and single-valued forward operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linops import LinearMap, Metric, identity

__all__ = [
    "Resolvent",
    "ForwardOp",
    "project_dual_ball",
    "prox_l2_data",
    "prox_splitdual_q",
    "grad_q_dual_rof",
    "grad_q_deconv",
    "zero_resolvent",
    "dual_ball_resolvent",
    "l2_data_resolvent",
    "linear_resolvent",
    "zero_forward",
    "linear_forward",
]


@dataclass(frozen=True)
class Resolvent:
    """``(Id + step * A)^-1`` for a maximal monotone ``A``.

    ``fn(v, step)`` accepts a positive scalar step or an array of entrywise
    steps.  Entrywise steps are only meaningful when ``A`` is separable over
    consecutive groups of ``group`` coordinates and the step is constant
    within each group; ``group=0`` means not separable at all.
    ``metric_fn(w, lam, metric)``, when given, evaluates ``(M + lam A)^-1 w``
    for arbitrary metrics.
    """

    dim: int
    fn: Callable = field(repr=False)
    group: int = 1
    metric_fn: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, v, step):
        return self.fn(v, step)

    def in_metric(self, w, lam: float, metric: Metric) -> np.ndarray:
        """``(M + lam A)^-1 w``."""
        if self.metric_fn is not None:
            return self.metric_fn(w, lam, metric)
        m = metric.map
        if m.kind == "identity":
            return self.fn(w / m.payload, lam / m.payload)
        if m.kind == "diagonal" and self.group > 0:
            d = m.payload
            if self.group > 1:
                g = d.reshape(-1, self.group)
                if not np.all(g == g[:, :1]):
                    raise ValueError("diagonal metric must be constant within resolvent groups")
            return self.fn(w / d, lam / d)
        raise ValueError(
            f"resolvent has no evaluation rule for a {m.kind} metric; supply metric_fn"
        )


@dataclass(frozen=True)
class ForwardOp:
    """Single-valued operator ``B`` co-coercive w.r.t. ``L^-1``."""

    dim: int
    fn: Callable = field(repr=False)
    L: LinearMap

    def __call__(self, x):
        return self.fn(x)


def project_dual_ball(p) -> np.ndarray:
    """Project consecutive pairs of ``p`` onto the closed unit Euclidean disc."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size % 2:
        raise ValueError("expected a flat vector of even length")
    pairs = p.reshape(-1, 2)
    nrm = np.hypot(pairs[:, 0], pairs[:, 1])
    return (pairs / np.maximum(nrm, 1.0)[:, None]).ravel()


def _check_same(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"dimension mismatch: {np.shape(a)} vs {np.shape(b)}")


def prox_l2_data(u, f, lam: float, tau) -> np.ndarray:
    """Prox of ``lam/2 ||. - f||^2`` with (possibly entrywise) step ``tau``."""
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)
    _check_same(u, f)
    return (u + tau * lam * f) / (1.0 + tau * lam)


def prox_splitdual_q(qt, f, lam: float, sigma) -> np.ndarray:
    """Prox of ``q -> ||q||^2/(2 lam) - <f, q>`` with step ``sigma``."""
    qt = np.asarray(qt, dtype=float)
    f = np.asarray(f, dtype=float)
    _check_same(qt, f)
    return lam * (qt + sigma * f) / (lam + sigma)


def grad_q_dual_rof(p, f, lam: float, grad_op: LinearMap) -> np.ndarray:
    """Gradient of ``p -> 1/2 ||lam f - grad^T p||^2``, i.e. ``grad(grad^T p - lam f)``."""
    return grad_op.apply(grad_op.adjoint(p) - lam * np.asarray(f, dtype=float))


def grad_q_deconv(u, f, lam: float, h_op: LinearMap) -> np.ndarray:
    """Gradient of ``u -> lam/2 ||H u - f||^2``."""
    return lam * h_op.adjoint(h_op.apply(u) - np.asarray(f, dtype=float))


# concrete resolvent / forward factories -------------------------------------


def zero_resolvent(dim: int) -> Resolvent:
    """Resolvent of the zero operator (the identity)."""
    return Resolvent(dim, lambda v, step: np.array(v, dtype=float))


def dual_ball_resolvent(dim: int) -> Resolvent:
    if dim % 2:
        raise ValueError("dual variable must consist of pairs")
    return Resolvent(dim, lambda v, step: project_dual_ball(v), group=2)


def l2_data_resolvent(f, lam: float) -> Resolvent:
    f = np.asarray(f, dtype=float).ravel()
    return Resolvent(f.size, lambda v, step: prox_l2_data(v, f, lam, step))


def linear_resolvent(a) -> Resolvent:
    """Resolvent of ``x -> A x`` for a (dense) monotone matrix ``A``.

    Works in any metric through a dense solve; intended for small test
    problems.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]

    def fn(v, step):
        step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
        return np.linalg.solve(np.eye(n) + step[:, None] * a, v)

    def metric_fn(w, lam, metric):
        return np.linalg.solve(metric.map.to_dense() + lam * a, w)

    return Resolvent(n, fn, group=0, metric_fn=metric_fn)


def zero_forward(dim: int) -> ForwardOp:
    return ForwardOp(dim, lambda x: np.zeros(dim), identity(dim, 0.0))


def linear_forward(q, b=None, L: Optional[LinearMap] = None) -> ForwardOp:
    """``x -> Q x - b`` for symmetric PSD ``Q``; ``L`` defaults to ``||Q|| Id``."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = q.shape[0]
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    if L is None:
        L = identity(n, float(np.linalg.norm(q, 2)))
    return ForwardOp(n, lambda x: q @ x - b, L)
