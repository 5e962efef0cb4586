"""Linear maps over flat real vectors, metrics and spectral checks.

A :class:`LinearMap` wraps one of a handful of concrete representations
(scaled identity, diagonal, dense, sparse, 2x2 block, or a pair of
callbacks) behind ``apply``/``adjoint``.  Linear combinations keep the most
structured representation available so that spectral quantities of things
like ``M - lam/2 * L`` stay cheap and exact when possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "LinearMap",
    "Metric",
    "BlockCheck",
    "identity",
    "diagonal",
    "dense",
    "sparse",
    "block2x2",
    "matrix_free",
    "zeros",
    "m_norm_sq",
    "op_norm_estimate",
    "pd_margin",
    "block_pd_check",
    "DENSE_LIMIT",
]

#: Largest dimension for which exact dense eigensolves are used.
DENSE_LIMIT = 512
BOUNDARY_TOL = 1e-12

KINDS = ("identity", "diagonal", "dense", "sparse", "block2x2", "matrix-free")


class LinearMap:
    """Bounded linear map ``R^n -> R^m`` with an explicit adjoint.

    Use the module-level constructors (:func:`identity`, :func:`diagonal`,
    :func:`dense`, :func:`sparse`, :func:`block2x2`, :func:`matrix_free`)
    rather than calling this directly.
    """

    __slots__ = ("shape", "kind", "_apply", "_adjoint", "payload")

    def __init__(self, shape, kind, apply, adjoint, payload=None):
        if kind not in KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        m, n = int(shape[0]), int(shape[1])
        if m < 1 or n < 1:
            raise ValueError("dimensions must be positive")
        self.shape = (m, n)
        self.kind = kind
        self._apply = apply
        self._adjoint = adjoint
        self.payload = payload

    @property
    def dim_in(self) -> int:
        return self.shape[1]

    @property
    def dim_out(self) -> int:
        return self.shape[0]

    @property
    def is_square(self) -> bool:
        return self.shape[0] == self.shape[1]

    def __repr__(self):
        return f"LinearMap(kind={self.kind!r}, shape={self.shape})"

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim_in,):
            raise ValueError(f"expected vector of length {self.dim_in}, got shape {x.shape}")
        return self._apply(x)

    def adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim_out,):
            raise ValueError(f"expected vector of length {self.dim_out}, got shape {y.shape}")
        return self._adjoint(y)

    __call__ = apply

    @property
    def H(self) -> "LinearMap":
        """The adjoint as a map of its own."""
        if self.kind == "identity" or self.kind == "diagonal":
            return self
        if self.kind == "dense":
            return dense(self.payload.T)
        if self.kind == "sparse":
            return sparse(self.payload.T)
        if self.kind == "block2x2":
            a11, a12, a21, a22 = self.payload
            return block2x2(a11.H, a21.H, a12.H, a22.H)
        return matrix_free((self.dim_in, self.dim_out), self._adjoint, self._apply)

    def diagonal_values(self) -> np.ndarray:
        """Diagonal entries for ``identity``/``diagonal`` kinds."""
        if self.kind == "identity":
            return np.full(self.dim_in, self.payload)
        if self.kind == "diagonal":
            return self.payload
        raise TypeError(f"{self.kind} map has no diagonal payload")

    def to_dense(self) -> np.ndarray:
        if self.kind == "identity":
            return self.payload * np.eye(self.dim_in)
        if self.kind == "diagonal":
            return np.diag(self.payload)
        if self.kind == "dense":
            return np.array(self.payload, dtype=float)
        if self.kind == "sparse":
            return self.payload.toarray()
        if self.kind == "block2x2":
            a11, a12, a21, a22 = self.payload
            return np.block([[a11.to_dense(), a12.to_dense()], [a21.to_dense(), a22.to_dense()]])
        cols = [self._apply(e) for e in np.eye(self.dim_in)]
        return np.column_stack(cols)

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit matrix in CSR form (matrix-free maps are densified)."""
        if self.kind == "identity":
            return sp.identity(self.dim_in, format="csr") * self.payload
        if self.kind == "diagonal":
            return sp.diags(self.payload, format="csr")
        if self.kind == "sparse":
            return sp.csr_matrix(self.payload)
        if self.kind == "block2x2":
            a11, a12, a21, a22 = self.payload
            return sp.bmat(
                [[a11.to_sparse(), a12.to_sparse()], [a21.to_sparse(), a22.to_sparse()]],
                format="csr",
            )
        return sp.csr_matrix(self.to_dense())

    def as_scipy(self) -> spla.LinearOperator:
        return spla.LinearOperator(
            self.shape, matvec=self._apply, rmatvec=self._adjoint, dtype=float
        )

    # algebra ------------------------------------------------------------
    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return _scaled(self, float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return _scaled(self, -1.0)

    def __add__(self, other):
        if not isinstance(other, LinearMap):
            return NotImplemented
        return _lincomb(self, other, 1.0, 1.0)

    def __sub__(self, other):
        if not isinstance(other, LinearMap):
            return NotImplemented
        return _lincomb(self, other, 1.0, -1.0)

    def __matmul__(self, other):
        if not isinstance(other, LinearMap):
            return NotImplemented
        if self.dim_in != other.dim_out:
            raise ValueError("shape mismatch in composition")
        return matrix_free(
            (self.dim_out, other.dim_in),
            lambda x: self._apply(other._apply(x)),
            lambda y: other._adjoint(self._adjoint(y)),
        )


def identity(n: int, scale: float = 1.0) -> LinearMap:
    s = float(scale)
    return LinearMap((n, n), "identity", lambda x: s * x, lambda y: s * y, s)


def diagonal(d) -> LinearMap:
    d = np.array(d, dtype=float).ravel()
    return LinearMap((d.size, d.size), "diagonal", lambda x: d * x, lambda y: d * y, d)


def dense(a) -> LinearMap:
    a = np.atleast_2d(np.array(a, dtype=float))
    return LinearMap(a.shape, "dense", lambda x: a @ x, lambda y: a.T @ y, a)


def sparse(a) -> LinearMap:
    a = sp.csr_matrix(a, dtype=float)
    at = a.T.tocsr()
    return LinearMap(a.shape, "sparse", lambda x: a @ x, lambda y: at @ y, a)


def zeros(m: int, n: int) -> LinearMap:
    return sparse(sp.csr_matrix((m, n)))


def matrix_free(shape, apply: Callable, adjoint: Callable) -> LinearMap:
    return LinearMap(shape, "matrix-free", apply, adjoint)


def block2x2(a11: LinearMap, a12: LinearMap, a21: LinearMap, a22: LinearMap) -> LinearMap:
    """``[[a11, a12], [a21, a22]]`` acting on the concatenation ``(x, y)``."""
    n1, n2 = a11.dim_in, a22.dim_in
    m1, m2 = a11.dim_out, a22.dim_out
    if a12.shape != (m1, n2) or a21.shape != (m2, n1):
        raise ValueError("inconsistent block shapes")

    def apply(z):
        x, y = z[:n1], z[n1:]
        return np.concatenate([a11._apply(x) + a12._apply(y), a21._apply(x) + a22._apply(y)])

    def adjoint(w):
        u, v = w[:m1], w[m1:]
        return np.concatenate(
            [a11._adjoint(u) + a21._adjoint(v), a12._adjoint(u) + a22._adjoint(v)]
        )

    return LinearMap((m1 + m2, n1 + n2), "block2x2", apply, adjoint, (a11, a12, a21, a22))


def _scaled(a: LinearMap, c: float) -> LinearMap:
    if a.kind == "identity":
        return identity(a.dim_in, c * a.payload)
    if a.kind == "diagonal":
        return diagonal(c * a.payload)
    if a.kind == "dense":
        return dense(c * a.payload)
    if a.kind == "sparse":
        return sparse(c * a.payload)
    if a.kind == "block2x2":
        return block2x2(*(_scaled(b, c) for b in a.payload))
    return matrix_free(a.shape, lambda x: c * a._apply(x), lambda y: c * a._adjoint(y))


def _split_diag(a: LinearMap, n1: int):
    d = a.diagonal_values()
    return diagonal(d[:n1]), diagonal(d[n1:])


def _lincomb(a: LinearMap, b: LinearMap, ca: float, cb: float) -> LinearMap:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    kinds = {a.kind, b.kind}
    diag_like = {"identity", "diagonal"}
    if kinds == {"identity"}:
        return identity(a.dim_in, ca * a.payload + cb * b.payload)
    if kinds <= diag_like:
        return diagonal(ca * a.diagonal_values() + cb * b.diagonal_values())
    if kinds <= diag_like | {"dense"}:
        return dense(ca * a.to_dense() + cb * b.to_dense())
    if kinds <= diag_like | {"sparse"}:
        return sparse(ca * a.to_sparse() + cb * b.to_sparse())
    if "block2x2" in kinds and kinds <= diag_like | {"block2x2"}:
        blk = a if a.kind == "block2x2" else b
        n1 = blk.payload[0].dim_in
        if blk.payload[0].dim_out == n1:

            def parts(z):
                if z.kind == "block2x2":
                    return z.payload
                d1, d2 = _split_diag(z, n1)
                return (d1, zeros(n1, z.dim_in - n1), zeros(z.dim_in - n1, n1), d2)

            pa, pb = parts(a), parts(b)
            if all(p.shape == q.shape for p, q in zip(pa, pb)):
                return block2x2(*(_lincomb(p, q, ca, cb) for p, q in zip(pa, pb)))
    return matrix_free(
        a.shape,
        lambda x: ca * a._apply(x) + cb * b._apply(x),
        lambda y: ca * a._adjoint(y) + cb * b._adjoint(y),
    )


# ---------------------------------------------------------------------------
# spectral estimates


def op_norm_estimate(k: LinearMap, iters: int = 1000, tol: float = 1e-9, seed: int = 0) -> float:
    """Estimate ``||K||`` by power iteration on ``K^* K``.

    The returned value is ``||K x||`` for a unit vector ``x`` and therefore
    never exceeds the true norm.  Deterministic for a fixed ``seed``.
    """
    if iters < 1 or tol <= 0:
        raise ValueError("iters must be >= 1 and tol > 0")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(k.dim_in)
    x /= np.linalg.norm(x)
    s_old = 0.0
    s = 0.0
    for _ in range(iters):
        y = k._apply(x)
        s = float(np.linalg.norm(y))
        if s == 0.0:
            return 0.0
        x = k._adjoint(y)
        nx = np.linalg.norm(x)
        if nx == 0.0:
            return s
        x /= nx
        if abs(s - s_old) <= tol * s:
            break
        s_old = s
    return float(np.linalg.norm(k._apply(x))) if s > 0 else 0.0


def _check_self_adjoint(m: LinearMap, tol: float = 1e-10, probes: int = 3, seed: int = 0):
    if not m.is_square:
        raise ValueError("map is not square")
    if m.kind in ("identity", "diagonal"):
        return
    if m.kind == "dense":
        a = m.payload
        if not np.allclose(a, a.T, rtol=0.0, atol=tol * max(1.0, np.abs(a).max())):
            raise ValueError("map is not self-adjoint")
        return
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        x = rng.standard_normal(m.dim_in)
        y = rng.standard_normal(m.dim_in)
        mx, my = m._apply(x), m._apply(y)
        lhs, rhs = mx @ y, x @ my
        scale = np.linalg.norm(mx) * np.linalg.norm(y) + np.linalg.norm(my) * np.linalg.norm(x)
        if abs(lhs - rhs) > tol * max(scale, 1e-300):
            raise ValueError(f"map is not self-adjoint (<Mx,y> - <x,My> = {lhs - rhs:.3e})")


def pd_margin(m: LinearMap, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of a self-adjoint map.

    Exact for diagonal kinds and for dimensions up to :data:`DENSE_LIMIT`
    (dense symmetric eigensolve).  Larger maps use Lanczos (ARPACK).
    Raises ``ValueError`` if the map is detectably not self-adjoint.
    """
    _check_self_adjoint(m)
    if m.kind == "identity":
        return float(m.payload)
    if m.kind == "diagonal":
        return float(m.payload.min())
    if m.dim_in <= DENSE_LIMIT:
        a = m.to_dense()
        return float(scipy.linalg.eigvalsh(0.5 * (a + a.T), subset_by_index=[0, 0])[0])
    vals = spla.eigsh(m.as_scipy(), k=1, which="SA", tol=tol, return_eigenvectors=False)
    return float(vals[0])


class BlockCheck(NamedTuple):
    pd: bool
    norm: float


def _inv_sqrt_diag(a: LinearMap) -> np.ndarray:
    return 1.0 / np.sqrt(a.diagonal_values())


def block_pd_check(a1: LinearMap, a2: LinearMap, b: LinearMap) -> BlockCheck:
    """Positive definiteness of ``[[A1, B^*], [B, A2]]`` via ``||A2^-1/2 B A1^-1/2||``.

    The block map is positive definite iff the returned norm is below one;
    norms within ``BOUNDARY_TOL`` of one count as the (semidefinite)
    boundary case.
    Exact (SVD / generalized eigensolve) for small problems; for large
    problems with diagonal ``A1``, ``A2`` the norm comes from power
    iteration and may slightly underestimate.
    """
    if b.shape != (a2.dim_in, a1.dim_in):
        raise ValueError("B must map the A1 space into the A2 space")
    for name, a in (("A1", a1), ("A2", a2)):
        if pd_margin(a) <= 0:
            raise ValueError(f"{name} is not positive definite")
    diag_like = ("identity", "diagonal")
    small = max(b.shape) <= DENSE_LIMIT
    if a1.kind in diag_like and a2.kind in diag_like:
        w1, w2 = _inv_sqrt_diag(a1), _inv_sqrt_diag(a2)
        if small:
            c = w2[:, None] * b.to_dense() * w1[None, :]
            norm = float(np.linalg.norm(c, 2)) if c.size else 0.0
        elif b.kind == "sparse":
            c = sp.diags(w2) @ b.payload @ sp.diags(w1)
            norm = op_norm_estimate(sparse(c))
        else:
            scaled = matrix_free(
                b.shape,
                lambda x: w2 * b._apply(w1 * x),
                lambda y: w1 * b._adjoint(w2 * y),
            )
            norm = op_norm_estimate(scaled)
    elif small:
        bd = b.to_dense()
        lhs = bd.T @ np.linalg.solve(a2.to_dense(), bd)
        lhs = 0.5 * (lhs + lhs.T)
        top = scipy.linalg.eigh(lhs, a1.to_dense(), eigvals_only=True)[-1]
        norm = float(np.sqrt(max(top, 0.0)))
    else:
        m1, m2 = Metric.from_map(a1), Metric.from_map(a2)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(a1.dim_in)
        rho_old = 0.0
        rho = 0.0
        for _ in range(1000):
            x /= np.sqrt(m_norm_sq(m1, x))
            bx = b._apply(x)
            w = m2.solve(bx)
            rho = float(bx @ w)
            x = m1.solve(b._adjoint(w))
            if abs(rho - rho_old) <= 1e-9 * max(rho, 1e-300):
                break
            rho_old = rho
        norm = float(np.sqrt(max(rho, 0.0)))
    return BlockCheck(norm < 1.0 - BOUNDARY_TOL, norm)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Metric:
    """Self-adjoint positive definite map with a solver for ``M^-1``."""

    map: LinearMap
    solve: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    pd_margin: float

    @property
    def dim(self) -> int:
        return self.map.dim_in

    def __call__(self, x):
        return self.map.apply(x)

    @classmethod
    def from_map(
        cls,
        m: LinearMap,
        solve: Optional[Callable] = None,
        margin: Optional[float] = None,
    ) -> "Metric":
        """Wrap ``m``; raises ``ValueError`` unless it is positive definite."""
        if margin is None:
            margin = pd_margin(m)
        else:
            _check_self_adjoint(m)
        if not margin > 0:
            raise ValueError(f"metric is not positive definite (smallest eigenvalue {margin:.3e})")
        if solve is None:
            solve = _default_solver(m)
        return cls(m, solve, float(margin))

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> "Metric":
        return cls.from_map(identity(n, scale))

    def norm_sq(self, x) -> float:
        return m_norm_sq(self, x)


def _default_solver(m: LinearMap) -> Callable:
    if m.kind == "identity":
        s = m.payload
        return lambda v: v / s
    if m.kind == "diagonal":
        d = m.payload
        return lambda v: v / d
    if m.dim_in <= DENSE_LIMIT or m.kind == "dense":
        factor = scipy.linalg.cho_factor(m.to_dense())
        return lambda v: scipy.linalg.cho_solve(factor, v)
    if m.kind == "sparse":
        lu = spla.splu(sp.csc_matrix(m.payload))
        return lu.solve
    op = m.as_scipy()

    def solve(v):
        x, info = spla.cg(op, v, rtol=1e-12, maxiter=10 * m.dim_in)
        if info != 0:
            raise RuntimeError(f"CG did not converge (info={info})")
        return x

    return solve


def m_norm_sq(m, x) -> float:
    """``<M x, x>`` for a :class:`Metric` or self-adjoint :class:`LinearMap`."""
    lm = m.map if isinstance(m, Metric) else m
    x = np.asarray(x, dtype=float)
    if x.shape != (lm.dim_in,):
        raise ValueError(f"dimension mismatch: metric is {lm.dim_in}, vector is {x.shape}")
    return float(lm._apply(x) @ x)
