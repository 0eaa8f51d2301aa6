"""Sparse linear solvers behind one contract-checked entry point.

Symmetric systems use diagonally preconditioned conjugate gradients,
non-symmetric ones BiCGStab; a dense direct path (<= 2000 unknowns) serves as
the test oracle. Either the returned solution satisfies
||b - A x||_2 <= rtol * ||b||_2 or a SolverError carrying the residual
history is raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_DIRECT_LIMIT = 2000


class SolverError(RuntimeError):
    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


@dataclass
class SolverSettings:
    method: str = "auto"  # auto | cg | bicgstab | direct
    rtol: float = 1e-8
    maxiter: int = 2000


@dataclass
class SolveReport:
    iterations: int
    residual: float
    rhs_norm: float


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    settings: SolverSettings = field(default_factory=SolverSettings)
    symmetric: bool = False
    # 'constant' marks an all-Neumann pressure system: solve on the
    # zero-mean subspace, volume-weighted by `volumes`.
    nullspace: str = "none"
    volumes: np.ndarray | None = None
    # optional preconditioner with a .solve(r) method (e.g. an ILU); falls
    # back to the diagonal when absent
    preconditioner: object = None

    def __post_init__(self):
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise ValueError("matrix must be square")
        if self.rhs.shape[0] != n:
            raise ValueError("rhs length does not match matrix dimension")


def factorized_preconditioner(matrix, regularize=0.0):
    """Exact sparse-LU preconditioner for SparseSystem.preconditioner.

    An exact factorization keeps the preconditioner action symmetric for
    symmetric matrices (incomplete variants drop entries asymmetrically and
    break conjugate gradients). regularize adds a small diagonal shift for
    singular all-Neumann systems; it only affects the preconditioner, not
    the solution.
    """
    A = matrix.tocsc()
    if regularize:
        A = A + sp.identity(A.shape[0], format="csc") * regularize
    return spla.splu(A)


# backwards-friendly alias used by the flow solver
ilu_preconditioner = factorized_preconditioner


def _pick_method(system: SparseSystem) -> str:
    m = system.settings.method
    if m != "auto":
        return m
    return "cg" if system.symmetric else "bicgstab"


def solve_sparse(system: SparseSystem, x0=None):
    """Solve one system (or one per rhs column). Returns (x, SolveReport)."""
    rhs = np.asarray(system.rhs, dtype=float)
    if rhs.ndim == 2:
        out = np.zeros_like(rhs)
        total_it, worst_res, norm = 0, 0.0, 0.0
        for c in range(rhs.shape[1]):
            col0 = None if x0 is None else np.ascontiguousarray(x0[:, c])
            xc, rep = _solve_single(system, rhs[:, c], col0)
            out[:, c] = xc
            total_it += rep.iterations
            worst_res = max(worst_res, rep.residual)
            norm = max(norm, rep.rhs_norm)
        return out, SolveReport(total_it, worst_res, norm)
    return _solve_single(system, rhs, x0)


def _solve_single(system: SparseSystem, b, x0):
    A = system.matrix
    st = system.settings
    method = _pick_method(system)
    if system.nullspace == "constant":
        b = b - b.mean()  # consistency: constants span the nullspace
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, 0.0)

    if method == "direct":
        if A.shape[0] > DENSE_DIRECT_LIMIT:
            raise SolverError(
                f"direct path limited to {DENSE_DIRECT_LIMIT} unknowns")
        x = _direct(A, b, system)
        return _postprocess(system, x), SolveReport(0, _resid(A, x, b), bnorm)

    if system.preconditioner is not None:
        M = spla.LinearOperator(A.shape, matvec=system.preconditioner.solve)
    else:
        diag = A.diagonal().copy()
        if np.any(diag == 0.0):
            raise SolverError("zero diagonal entry; system not assembled correctly")
        M = spla.LinearOperator(A.shape, matvec=lambda v: v / diag)
    func = spla.cg if method == "cg" else spla.bicgstab
    target = st.rtol * bnorm
    x = x0.copy() if x0 is not None else np.zeros_like(b)
    iterations = 0
    # a few restarts guard against recurrence drift in the residual estimate
    for _ in range(3):
        counter = _IterCounter()
        x, info = func(A, b, x0=x, rtol=st.rtol, atol=0.1 * target,
                       maxiter=st.maxiter, M=M, callback=counter)
        iterations += counter.count
        res = _resid(A, x, b)
        if res <= target:
            return _postprocess(system, x), SolveReport(iterations, res, bnorm)
        if info < 0:
            break
    # Krylov stall or breakdown: small systems fall back to the direct path
    if A.shape[0] <= DENSE_DIRECT_LIMIT:
        try:
            x = _direct(A, b, system)
        except np.linalg.LinAlgError:
            pass
        else:
            res = _resid(A, x, b)
            if res <= max(target, 1e-12 * bnorm):
                return _postprocess(system, x), SolveReport(iterations, res,
                                                            bnorm)
    history = _residual_history(system, b, x0, func, M)
    raise SolverError(
        f"{method} failed to reach {st.rtol:g} (residual {res / bnorm:.3e} "
        f"relative after {iterations} iterations)", history)


class _IterCounter:
    def __init__(self):
        self.count = 0

    def __call__(self, _xk):
        self.count += 1


def _resid(A, x, b) -> float:
    return float(np.linalg.norm(b - A @ x))


def _direct(A, b, system: SparseSystem):
    dense = A.toarray()
    if system.nullspace == "constant":
        x, *_ = np.linalg.lstsq(dense, b, rcond=None)
        return x
    return np.linalg.solve(dense, b)


def _postprocess(system: SparseSystem, x):
    if system.nullspace == "constant":
        w = system.volumes if system.volumes is not None else np.ones_like(x)
        x = x - np.sum(w * x) / np.sum(w)
    return x


def _residual_history(system, b, x0, func, M):
    """Re-run the failing solve with residual recording (diagnostic path)."""
    A = system.matrix
    history = []

    def cb(xk):
        history.append(_resid(A, xk, b))

    func(A, b, x0=x0, rtol=system.settings.rtol, atol=0.0,
         maxiter=system.settings.maxiter, M=M, callback=cb)
    return history
