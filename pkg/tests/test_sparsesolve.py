import numpy as np
import pytest
import scipy.sparse as sp

from fvrom.sparsesolve import (SolverError, SolverSettings, SparseSystem,
                               factorized_preconditioner, solve_sparse)


def test_identity_returns_rhs():
    A = sp.identity(6, format="csr")
    b = np.arange(6.0)
    x, rep = solve_sparse(SparseSystem(A, b, symmetric=True))
    assert np.allclose(x, b)
    assert rep.residual <= 1e-12


def test_spd_system_matches_dense_lu_oracle(rng):
    M = rng.normal(size=(5, 5))
    A_dense = M @ M.T + 5.0 * np.eye(5)
    b = rng.normal(size=5)
    oracle = np.linalg.solve(A_dense, b)  # dense LU path
    A = sp.csr_matrix(A_dense)
    x, _ = solve_sparse(SparseSystem(A, b, SolverSettings(rtol=1e-12),
                                     symmetric=True))
    assert np.abs(x - oracle).max() <= 1e-8
    # the direct fallback is its own method and must agree too
    xd, repd = solve_sparse(SparseSystem(A, b, SolverSettings(method="direct"),
                                         symmetric=True))
    assert np.abs(xd - oracle).max() <= 1e-12
    assert repd.iterations == 0


def test_nonsymmetric_bicgstab(rng):
    A_dense = 4 * np.eye(8) + 0.5 * rng.normal(size=(8, 8))
    b = rng.normal(size=8)
    x, _ = solve_sparse(SparseSystem(sp.csr_matrix(A_dense), b,
                                     SolverSettings(rtol=1e-10)))
    assert np.linalg.norm(b - A_dense @ x) <= 1e-10 * np.linalg.norm(b)


def test_singular_neumann_zero_mean():
    # 1D Laplacian with zero-flux ends: nullspace = constants
    n = 8
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    A = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1],
                 format="csr")
    b = np.zeros(n)
    b[2], b[5] = 1.0, -1.0
    vols = np.linspace(1.0, 2.0, n)
    x, _ = solve_sparse(SparseSystem(A, b, SolverSettings(rtol=1e-12),
                                     symmetric=True, nullspace="constant",
                                     volumes=vols))
    assert abs(np.sum(vols * x) / np.sum(vols)) <= 1e-10
    r = b - A @ x
    assert np.linalg.norm(r - r.mean()) <= 1e-10
    # direct fallback handles the singular system through least squares
    xd, _ = solve_sparse(SparseSystem(A, b, SolverSettings(method="direct"),
                                      symmetric=True, nullspace="constant",
                                      volumes=vols))
    assert abs(np.sum(vols * xd) / np.sum(vols)) <= 1e-10


def test_nonconvergence_raises_with_history(rng):
    # iteration-starved system too large for the dense fallback
    n = 2100
    diag = rng.uniform(1.0, 2.0, size=n)
    A = sp.diags([np.full(n - 1, 0.9), diag, np.full(n - 1, 0.9)],
                 [-1, 0, 1], format="csr")
    b = rng.normal(size=n)
    sys = SparseSystem(A, b, SolverSettings(rtol=1e-14, maxiter=2),
                       symmetric=True)
    with pytest.raises(SolverError) as err:
        solve_sparse(sys)
    assert len(err.value.residual_history) > 0


def test_multicolumn_rhs(rng):
    A_dense = 3 * np.eye(6) + 0.1 * rng.normal(size=(6, 6))
    B = rng.normal(size=(6, 2))
    x, _ = solve_sparse(SparseSystem(sp.csr_matrix(A_dense), B,
                                     SolverSettings(rtol=1e-12)))
    assert np.abs(A_dense @ x - B).max() <= 1e-9


def test_zero_rhs_short_circuit():
    A = sp.identity(4, format="csr") * 2.0
    x, rep = solve_sparse(SparseSystem(A, np.zeros(4), symmetric=True))
    assert np.all(x == 0.0)
    assert rep.iterations == 0


def test_factorized_preconditioner_accelerates(rng):
    n = 400
    # 1D Poisson, badly conditioned for plain Jacobi-CG
    A = sp.diags([np.full(n - 1, 1.0), np.full(n, -2.0), np.full(n - 1, 1.0)],
                 [-1, 0, 1], format="csr")
    A = A - 0.001 * sp.identity(n)
    b = rng.normal(size=n)
    st = SolverSettings(rtol=1e-10, maxiter=5000)
    _, rep_plain = solve_sparse(SparseSystem(-A.tocsr(), -b, st,
                                             symmetric=True))
    pre = factorized_preconditioner(-A.tocsr())
    _, rep_pre = solve_sparse(SparseSystem(-A.tocsr(), -b, st, symmetric=True,
                                           preconditioner=pre))
    assert rep_pre.iterations < rep_plain.iterations
    assert rep_pre.residual <= 1e-10 * rep_pre.rhs_norm + 1e-300


def test_direct_respects_size_limit():
    n = 2001
    A = sp.identity(n, format="csr")
    with pytest.raises(SolverError, match="direct"):
        solve_sparse(SparseSystem(A, np.ones(n),
                                  SolverSettings(method="direct")))
