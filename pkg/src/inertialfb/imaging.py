"""Operators and problem builders for TV-l2 denoising and deconvolution.

Images are 2-D float arrays of shape ``(M, N)`` (rows, columns) and are
flattened row-major wherever a :class:`~inertialfb.linops.LinearMap` acts
on them.  Dual variables for the gradient are stored interleaved, one
``(horizontal, vertical)`` pair per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .linops import LinearMap, identity, op_norm_estimate, sparse
from .operators import (
    ForwardOp,
    Resolvent,
    dual_ball_resolvent,
    grad_q_deconv,
    grad_q_dual_rof,
    l2_data_resolvent,
    project_dual_ball,
    prox_splitdual_q,
    zero_resolvent,
)
from .primal_dual import SaddleProblem
from .splitting import MonotonePair

__all__ = [
    "Kernel",
    "Energies",
    "grad_op",
    "conv_op",
    "delta_kernel",
    "box_kernel",
    "motion_kernel",
    "total_variation",
    "rof_dual_objective",
    "build_rof_dual",
    "build_rof_saddle",
    "build_deconv",
    "energies",
    "synthetic_image",
    "add_noise",
]


def _forward_diff(n: int) -> sp.csr_matrix:
    # last row zero: Neumann boundary
    main = -np.ones(n)
    main[-1] = 0.0
    return sp.diags([main, np.ones(n - 1)], [0, 1], shape=(n, n), format="csr")


def grad_op(m: int, n: int) -> LinearMap:
    """Forward-difference gradient ``R^{mn} -> R^{2mn}`` of an ``m x n`` image.

    Differences across the last column / last row are zero, so the adjoint
    is the negative discrete divergence and ``||grad||^2 <= 8``.
    """
    if m < 1 or n < 1:
        raise ValueError("image dimensions must be positive")
    dx = sp.kron(sp.identity(m), _forward_diff(n))
    dy = sp.kron(_forward_diff(m), sp.identity(n))
    g = sp.vstack([dx, dy]).tocsr()
    order = np.empty(2 * m * n, dtype=int)
    order[0::2] = np.arange(m * n)
    order[1::2] = np.arange(m * n) + m * n
    return sparse(g[order])


@dataclass(frozen=True)
class Kernel:
    """Point spread function with odd dimensions, anchored at its center."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.atleast_2d(np.asarray(self.taps, dtype=float))
        if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
            raise ValueError("kernel must be 2-D with odd dimensions")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel entries must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def shape(self):
        return self.taps.shape


def delta_kernel(size: int = 1) -> Kernel:
    t = np.zeros((size, size))
    t[size // 2, size // 2] = 1.0
    return Kernel(t)


def box_kernel(rows: int, cols: int) -> Kernel:
    return Kernel(np.full((rows, cols), 1.0 / (rows * cols)))


def motion_kernel(size: int = 7, angle: float = 30.0) -> Kernel:
    """Normalized linear motion blur of length ``size`` at ``angle`` degrees."""
    c = size // 2
    t = np.zeros((size, size))
    th = np.deg2rad(angle)
    for s in np.linspace(-c, c, 8 * size):
        r, q = c - s * np.sin(th), c + s * np.cos(th)
        r0, q0 = int(np.floor(r)), int(np.floor(q))
        fr, fq = r - r0, q - q0
        for dr, wr in ((0, 1 - fr), (1, fr)):
            for dq, wq in ((0, 1 - fq), (1, fq)):
                rr, qq = r0 + dr, q0 + dq
                if 0 <= rr < size and 0 <= qq < size:
                    t[rr, qq] += wr * wq
    return Kernel(t / t.sum())


def conv_op(m: int, n: int, h: Kernel, boundary: str = "replicate") -> LinearMap:
    """``u -> h * u`` on ``m x n`` images as an explicit sparse matrix.

    ``boundary`` is ``"replicate"`` (edge pixels extended) or ``"zero"``.
    The adjoint is the exact matrix transpose.
    """
    if boundary not in ("replicate", "zero"):
        raise ValueError("boundary must be 'replicate' or 'zero'")
    kr, kc = h.shape
    if kr > m or kc > n:
        raise ValueError("kernel larger than image")
    cr, cc = kr // 2, kc // 2
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    out = (ii * n + jj).ravel()
    rows, cols, vals = [], [], []
    for a in range(kr):
        for b in range(kc):
            w = h.taps[a, b]
            if w == 0.0:
                continue
            si = (ii - (a - cr)).ravel()
            sj = (jj - (b - cc)).ravel()
            if boundary == "replicate":
                si = np.clip(si, 0, m - 1)
                sj = np.clip(sj, 0, n - 1)
                keep = slice(None)
            else:
                keep = (si >= 0) & (si < m) & (sj >= 0) & (sj < n)
            rows.append(out[keep])
            cols.append((si * n + sj)[keep])
            vals.append(np.full(rows[-1].size, w))
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * n, m * n)
    )
    return sparse(mat)


# ---------------------------------------------------------------------------
# energies


def total_variation(u, grad: Optional[LinearMap] = None) -> float:
    """Isotropic TV ``sum_pixels |(grad u)_pixel|_2``."""
    u = np.asarray(u, dtype=float)
    if grad is None:
        grad = grad_op(*u.shape)
    g = grad.apply(u.ravel()).reshape(-1, 2)
    return float(np.hypot(g[:, 0], g[:, 1]).sum())


def rof_dual_objective(p, f, lam: float, grad: LinearMap) -> float:
    """``1/2 ||lam f - grad^T p||^2`` (the smooth part of the dual ROF problem)."""
    r = lam * np.asarray(f, float).ravel() - grad.adjoint(p)
    return 0.5 * float(r @ r)


class Energies(NamedTuple):
    primal: float
    dual: float
    gap: float


def energies(
    u,
    p,
    f,
    lam: float,
    kind: str = "denoise",
    grad: Optional[LinearMap] = None,
    H: Optional[LinearMap] = None,
    reference: Optional[float] = None,
    feas_tol: float = 1e-12,
) -> Energies:
    """Primal energy, dual energy and gap.

    ``kind="denoise"``: primal ``TV(u) + lam/2 ||u - f||^2``, dual
    ``<f, grad^T p> - ||grad^T p||^2 / (2 lam)`` (``-inf`` for infeasible
    ``p``) and their difference.

    ``kind="deconv"``: primal ``TV(u) + lam/2 ||H u - f||^2``; the gap is the
    primal energy minus ``reference`` (``nan`` if not given) and the dual
    is reported as ``nan``.
    """
    f = np.asarray(f, dtype=float)
    u = np.asarray(u, dtype=float).reshape(f.shape)
    if grad is None:
        grad = grad_op(*f.shape)
    tv = total_variation(u, grad)
    if kind == "denoise":
        r = u.ravel() - f.ravel()
        primal = tv + 0.5 * lam * float(r @ r)
        p = np.asarray(p, dtype=float)
        pairs = p.reshape(-1, 2)
        if np.any(np.hypot(pairs[:, 0], pairs[:, 1]) > 1.0 + feas_tol):
            dual = -np.inf
        else:
            div = grad.adjoint(p)
            dual = float(f.ravel() @ div) - float(div @ div) / (2.0 * lam)
        return Energies(primal, dual, primal - dual)
    if kind == "deconv":
        if H is None:
            raise ValueError("deconvolution energies need H")
        r = H.apply(u.ravel()) - f.ravel()
        primal = tv + 0.5 * lam * float(r @ r)
        gap = primal - reference if reference is not None else np.nan
        return Energies(primal, np.nan, gap)
    raise ValueError(f"unknown problem kind {kind!r}")


# ---------------------------------------------------------------------------
# problem builders


def build_rof_dual(f, lam: float) -> MonotonePair:
    """Dual ROF problem ``min_p 1/2 ||lam f - grad^T p||^2 + I_P(p)``.

    ``recover(p)`` returns the primal image ``f - grad^T p / lam``.  The
    co-coercivity map is ``8 Id`` (an upper bound on ``||grad||^2``).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    f = np.asarray(f, dtype=float)
    g = grad_op(*f.shape)
    fv = f.ravel()
    dim = g.dim_out
    B = ForwardOp(dim, lambda p: grad_q_dual_rof(p, fv, lam, g), identity(dim, 8.0))

    def recover(p):
        return (fv - g.adjoint(p) / lam).reshape(f.shape)

    return MonotonePair(dual_ball_resolvent(dim), B, recover)


def build_rof_saddle(f, lam: float) -> SaddleProblem:
    """``min_u max_p <grad u, p> + lam/2 ||u - f||^2 - I_P(p)``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    f = np.asarray(f, dtype=float)
    g = grad_op(*f.shape)
    return SaddleProblem(K=g, prox_G=l2_data_resolvent(f.ravel(), lam), prox_Fstar=dual_ball_resolvent(g.dim_out))


def build_deconv(
    f,
    h: Kernel,
    lam: float,
    variant: str = "explicit",
    boundary: str = "replicate",
    H_norm: Optional[float] = None,
) -> SaddleProblem:
    """TV-l2 deconvolution ``min_u TV(u) + lam/2 ||H u - f||^2`` as a saddle problem.

    ``explicit``: ``K = grad``, ``G = 0`` and the data term handled through
    its gradient, with ``L_Q = lam ||H||^2``.

    ``split-dual``: ``K = (grad; H)``, ``G = Q = 0`` and the data term
    dualized into ``F*(p, q) = I_P(p) + ||q||^2/(2 lam) + <f, q>``, the
    conjugate of ``lam/2 ||. - f||^2``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    f = np.asarray(f, dtype=float)
    m, n = f.shape
    fv = f.ravel()
    g = grad_op(m, n)
    H = conv_op(m, n, h, boundary)
    if variant == "explicit":
        if H_norm is None:
            H_norm = op_norm_estimate(H)
        L_Q = lam * H_norm**2
        gq = ForwardOp(m * n, lambda u: grad_q_deconv(u, fv, lam, H), identity(m * n, L_Q))
        return SaddleProblem(
            K=g,
            prox_G=zero_resolvent(m * n),
            prox_Fstar=dual_ball_resolvent(g.dim_out),
            grad_Q=gq,
            L_Q=L_Q,
        )
    if variant == "split-dual":
        K = sparse(sp.vstack([g.payload, H.payload]).tocsr())
        npd = g.dim_out
        # conjugate of lam/2 ||. - f||^2 is ||q||^2/(2 lam) + <f, q>: pass -f
        neg_f = -fv

        def prox(v, step):
            step = np.asarray(step, dtype=float)
            sq = step[npd:] if step.ndim else step
            return np.concatenate([project_dual_ball(v[:npd]), prox_splitdual_q(v[npd:], neg_f, lam, sq)])

        return SaddleProblem(
            K=K,
            prox_G=zero_resolvent(m * n),
            prox_Fstar=Resolvent(K.dim_out, prox, group=0),
        )
    raise ValueError("variant must be 'explicit' or 'split-dual'")


# ---------------------------------------------------------------------------
# test images


def synthetic_image(size: int = 64) -> np.ndarray:
    """Piecewise-smooth test image in ``[0, 1]`` (no randomness)."""
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = 0.15 + 0.2 * x
    img[(x > 0.15) & (x < 0.55) & (y > 0.2) & (y < 0.6)] = 0.85
    img[(x - 0.68) ** 2 + (y - 0.65) ** 2 < 0.05] = 0.5
    img[(y > 0.75) & (x < 0.45) & (y - 0.75 > 0.5 * (x - 0.2))] = 0.95
    stripes = (x > 0.75) & (y < 0.35)
    img[stripes] = 0.3 + 0.4 * (np.floor(8 * y[stripes]) % 2)
    return img


def add_noise(img, sigma: float, seed: int = 0) -> np.ndarray:
    """Additive Gaussian noise with standard deviation ``sigma`` (seeded)."""
    rng = np.random.default_rng(seed)
    img = np.asarray(img, dtype=float)
    return img + sigma * rng.standard_normal(img.shape)
