import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_psd, random_spd
from inertialfb.linops import (
    Metric,
    block2x2,
    block_pd_check,
    dense,
    diagonal,
    identity,
    m_norm_sq,
    matrix_free,
    op_norm_estimate,
    pd_margin,
    sparse,
    zeros,
)


def make_maps(rng, m, n):
    a = rng.standard_normal((m, n))
    maps = [dense(a), sparse(sp.random(m, n, density=0.4, random_state=rng, format="csr")),
            matrix_free((m, n), lambda x: a @ x, lambda y: a.T @ y)]
    if m == n:
        maps += [identity(n, 2.5), diagonal(rng.standard_normal(n))]
    return maps


# m_norm_sq -----------------------------------------------------------------


def test_m_norm_sq_examples():
    assert m_norm_sq(Metric.identity(2), np.array([3.0, 4.0])) == 25.0
    assert m_norm_sq(diagonal([2.0, 2.0]), np.array([1.0, 1.0])) == 4.0
    m = Metric.from_map(dense([[2.0, 1.0], [1.0, 2.0]]))
    assert m_norm_sq(m, np.array([1.0, -1.0])) == pytest.approx(2.0, abs=1e-14)


def test_m_norm_sq_dimension_mismatch():
    with pytest.raises(ValueError):
        m_norm_sq(Metric.identity(3), np.ones(2))


# op_norm_estimate ----------------------------------------------------------


def test_op_norm_examples():
    assert op_norm_estimate(dense([[3.0]])) == pytest.approx(3.0, abs=1e-10)
    assert op_norm_estimate(dense([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(1.0, abs=1e-8)
    assert op_norm_estimate(zeros(3, 4)) == 0.0


def test_op_norm_rejects_bad_parameters():
    with pytest.raises(ValueError):
        op_norm_estimate(dense([[1.0]]), iters=0)
    with pytest.raises(ValueError):
        op_norm_estimate(dense([[1.0]]), tol=0.0)


def test_op_norm_deterministic():
    a = dense(np.random.default_rng(3).standard_normal((20, 9)))
    assert op_norm_estimate(a, seed=7) == op_norm_estimate(a, seed=7)


def test_op_norm_matches_svd(rng):
    for _ in range(50):
        m, n = rng.integers(1, 65, size=2)
        # a clear gap between the top two singular values keeps power iteration fast
        u, _ = np.linalg.qr(rng.standard_normal((m, m)))
        v, _ = np.linalg.qr(rng.standard_normal((n, n)))
        s = np.sort(rng.uniform(0.0, 1.0, min(m, n)))[::-1]
        s[0] = 2.0
        a = (u[:, : len(s)] * s) @ v[:, : len(s)].T
        est = op_norm_estimate(dense(a))
        ref = np.linalg.svd(a, compute_uv=False)[0]
        assert est <= ref * (1 + 1e-12)
        assert est == pytest.approx(ref, rel=1e-6)


# pd_margin -----------------------------------------------------------------


def test_pd_margin_examples():
    assert pd_margin(diagonal([0.5, 2.0])) == 0.5
    assert pd_margin(identity(3) - identity(3)) == 0.0
    assert pd_margin(dense([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0, abs=1e-10)


def test_pd_margin_rejects_non_self_adjoint():
    with pytest.raises(ValueError):
        pd_margin(dense([[1.0, 2.0], [0.0, 1.0]]))
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        pd_margin(matrix_free((2, 2), lambda x: a @ x, lambda y: a.T @ y))


def test_pd_margin_matches_eigensolve(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        g = rng.standard_normal((n, n))
        a = 0.5 * (g + g.T)
        assert pd_margin(dense(a)) == pytest.approx(np.linalg.eigvalsh(a)[0], abs=1e-8)


def test_pd_margin_large_sparse_uses_iterative_path(rng):
    n = 700
    d = np.linspace(0.3, 5.0, n)
    lap = sp.diags([np.full(n - 1, -0.1), d, np.full(n - 1, -0.1)], [-1, 0, 1], format="csr")
    ref = np.linalg.eigvalsh(lap.toarray())[0]
    assert pd_margin(sparse(lap)) == pytest.approx(ref, abs=1e-8)


# block_pd_check ------------------------------------------------------------


def test_block_pd_examples():
    chk = block_pd_check(identity(2), identity(2), identity(2, 0.5))
    assert chk.pd and chk.norm == pytest.approx(0.5, abs=1e-12)
    chk = block_pd_check(diagonal([1.0, 1.0]), diagonal([2.0]), dense([[1.0, -1.0]]))
    assert not chk.pd
    assert chk.norm == pytest.approx(1.0, abs=1e-9)
    chk = block_pd_check(identity(2), identity(2), identity(2, 2.0))
    assert not chk.pd and chk.norm == pytest.approx(2.0, abs=1e-12)


def test_block_pd_rejects_non_pd_blocks():
    with pytest.raises(ValueError):
        block_pd_check(diagonal([1.0, 0.0]), identity(1), dense([[1.0, 1.0]]))
    with pytest.raises(ValueError):
        block_pd_check(identity(2), diagonal([-1.0]), dense([[1.0, 1.0]]))


def _oracle_norm(a1, a2, b):
    def inv_sqrt(a):
        w, v = np.linalg.eigh(a)
        return (v / np.sqrt(w)) @ v.T

    return np.linalg.norm(inv_sqrt(a2) @ b @ inv_sqrt(a1), 2)


def test_block_pd_matches_full_block_eigensolve(rng):
    for _ in range(300):
        n, m = rng.integers(1, 17, size=2)
        a1, a2 = random_spd(rng, n, 5.0), random_spd(rng, m, 5.0)
        b = rng.standard_normal((m, n)) * rng.uniform(0.1, 1.5)
        if rng.random() < 0.5:
            a1, a2 = np.diag(np.diag(a1)), np.diag(np.diag(a2))
            chk = block_pd_check(diagonal(np.diag(a1)), diagonal(np.diag(a2)), dense(b))
        else:
            chk = block_pd_check(dense(a1), dense(a2), dense(b))
        full = np.block([[a1, b.T], [b, a2]])
        assert chk.pd == (np.linalg.eigvalsh(full)[0] > 0)
        assert chk.norm == pytest.approx(_oracle_norm(a1, a2, b), abs=1e-8)


def test_block_pd_large_paths_agree_with_small(rng):
    n, m = 600, 550
    b = sp.random(m, n, density=0.01, random_state=rng, format="csr")
    d1, d2 = rng.uniform(1, 3, n), rng.uniform(1, 3, m)
    ref = np.linalg.norm((b.toarray() / np.sqrt(d2)[:, None]) / np.sqrt(d1)[None, :], 2)
    for bb in (sparse(b), matrix_free((m, n), lambda x: b @ x, lambda y: b.T @ y)):
        chk = block_pd_check(diagonal(d1), diagonal(d2), bb)
        assert chk.norm <= ref * (1 + 1e-9)
        assert chk.norm == pytest.approx(ref, rel=1e-4)


# LinearMap invariants ------------------------------------------------------


@given(st.integers(0, 2**31), st.integers(1, 12), st.integers(1, 12))
def test_adjoint_round_trip(seed, m, n):
    rng = np.random.default_rng(seed)
    for k in make_maps(rng, m, n):
        knorm = max(np.linalg.norm(k.to_dense(), 2), 1e-300)
        for _ in range(5):
            x, y = rng.standard_normal(k.dim_in), rng.standard_normal(k.dim_out)
            lhs, rhs = k.apply(x) @ y, x @ k.adjoint(y)
            assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y) * knorm + 1e-300


@given(st.integers(0, 2**31), st.integers(1, 12), st.integers(1, 12))
def test_apply_is_linear(seed, m, n):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(2)
    for k in make_maps(rng, m, n):
        x, y = rng.standard_normal((2, k.dim_in))
        lhs = k.apply(a * x + b * y)
        rhs = a * k.apply(x) + b * k.apply(y)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_apply_dimension_checks():
    k = dense(np.ones((2, 3)))
    with pytest.raises(ValueError):
        k.apply(np.ones(2))
    with pytest.raises(ValueError):
        k.adjoint(np.ones(3))


def test_algebra_matches_dense(rng):
    a = dense(rng.standard_normal((4, 4)))
    d = diagonal(rng.uniform(1, 2, 4))
    x = rng.standard_normal(4)
    ad, dd = a.to_dense(), d.to_dense()
    assert np.allclose((a + d).apply(x), (ad + dd) @ x)
    assert np.allclose((a - 2.0 * d).apply(x), (ad - 2 * dd) @ x)
    assert np.allclose((-a).apply(x), -ad @ x)
    assert np.allclose((a @ d).apply(x), ad @ dd @ x)
    assert np.allclose(a.H.apply(x), ad.T @ x)


def test_block2x2_structure_kept_under_diagonal_shift(rng):
    k = dense(rng.standard_normal((3, 2)))
    blk = block2x2(identity(2, 2.0), -k.H, -k, identity(3, 3.0))
    shifted = blk - 0.5 * diagonal(np.arange(1.0, 6.0))
    assert shifted.kind == "block2x2"
    ref = blk.to_dense() - 0.5 * np.diag(np.arange(1.0, 6.0))
    assert np.allclose(shifted.to_dense(), ref)


# Metric --------------------------------------------------------------------


def test_metric_rejects_non_pd():
    with pytest.raises(ValueError):
        Metric.from_map(dense([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        Metric.identity(3, 0.0)


def test_metric_invariants_all_solver_paths(rng):
    n = 40
    a = random_spd(rng, n)
    big = 600
    tri = sp.diags([np.full(big - 1, -0.4), np.full(big, 2.0), np.full(big - 1, -0.4)], [-1, 0, 1], format="csr")
    maps = [
        identity(n, 1.7),
        diagonal(rng.uniform(0.5, 2.0, n)),
        dense(a),
        sparse(sp.csr_matrix(a)),
        sparse(tri),
        matrix_free((big, big), lambda x: tri @ x, lambda y: tri.T @ y),
    ]
    for lm in maps:
        m = Metric.from_map(lm)
        k = lm.dim_in
        for _ in range(3):
            x, y = rng.standard_normal((2, k))
            assert abs(m(x) @ y - m(y) @ x) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y) * 10
            assert m(x) @ x >= m.pd_margin * (x @ x) * (1 - 1e-10)
            v = rng.standard_normal(k)
            assert np.linalg.norm(m(m.solve(v)) - v) <= 1e-8 * np.linalg.norm(v)


def test_metric_psd_helper(rng):
    p = random_psd(rng, 5, rank=2)
    assert pd_margin(dense(p)) == pytest.approx(0.0, abs=1e-12)
