"""Proper orthogonal decomposition by the method of snapshots.

The correlation matrix holds volume-weighted inner products of snapshot
pairs; its eigenvectors combine snapshots into modes, which are then
re-normalized to unit weighted norm. Truncation is by an explicit rank or a
cumulative-energy threshold on the eigenvalue sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANK_TOL = 1e-12  # relative to the largest eigenvalue


class RankError(ValueError):
    def __init__(self, requested, usable):
        self.usable = usable
        super().__init__(
            f"requested rank {requested} exceeds the usable numerical rank "
            f"{usable}")


@dataclass
class PODBasis:
    modes: np.ndarray            # (n_dof, rank), unit weighted norm each
    eigenvalues: np.ndarray      # full spectrum, descending, clipped at 0
    eigenvectors: np.ndarray     # correlation-matrix eigenvectors (columns)
    weights: np.ndarray          # (n_dof,) inner-product weights
    rank: int
    clipped: float = 0.0         # total magnitude clipped from negatives
    meta: dict = field(default_factory=dict)

    @property
    def cumulative_energy(self) -> np.ndarray:
        return cumulative_energy(self.eigenvalues)


def correlation_matrix(snapshots, weights) -> np.ndarray:
    """C[i, j] = sum_dof w * S_i * S_j, symmetrized against rounding."""
    S = np.asarray(snapshots, dtype=float)
    w = np.asarray(weights, dtype=float)
    C = (S * w[:, None]).T @ S
    return 0.5 * (C + C.T)


def eigendecompose(C):
    """Descending eigenpairs of a symmetric PSD matrix.

    Negative round-off eigenvalues are clipped at zero; the clipped magnitude
    is returned for reporting.
    """
    lam, Q = np.linalg.eigh(np.asarray(C, dtype=float))
    order = np.argsort(lam)[::-1]
    lam, Q = lam[order], Q[:, order]
    clipped = float(-lam[lam < 0].sum())
    lam = np.clip(lam, 0.0, None)
    return lam, Q, clipped


def usable_rank(eigenvalues, rank_tol=RANK_TOL) -> int:
    lam = np.asarray(eigenvalues)
    if len(lam) == 0 or lam[0] <= 0.0:
        return 0
    return int(np.sum(lam > rank_tol * lam[0]))


def cumulative_energy(eigenvalues) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    total = lam.sum()
    if total <= 0:
        return np.zeros_like(lam)
    return np.cumsum(lam) / total


def rank_for_energy(eigenvalues, threshold) -> int:
    """Smallest rank whose cumulative energy reaches the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("energy threshold must lie in (0, 1]")
    curve = cumulative_energy(eigenvalues)
    hit = np.nonzero(curve >= threshold - 1e-15)[0]
    return int(hit[0]) + 1 if len(hit) else usable_rank(eigenvalues)


def build_basis(snapshots, weights, rank=None, energy=None,
                meta=None, rank_tol=RANK_TOL) -> PODBasis:
    """POD basis of the given rank (or cumulative-energy threshold)."""
    S = np.asarray(snapshots, dtype=float)
    w = np.asarray(weights, dtype=float)
    n_s = S.shape[1]
    lam, Q, clipped = eigendecompose(correlation_matrix(S, w))
    max_rank = usable_rank(lam, rank_tol)
    if rank is None:
        rank = rank_for_energy(lam, energy) if energy else max_rank
    if rank > max_rank:
        raise RankError(rank, max_rank)
    modes = np.zeros((S.shape[0], rank))
    for i in range(rank):
        zeta = S @ Q[:, i] / (n_s * lam[i])
        nrm = np.sqrt(np.sum(w * zeta * zeta))
        modes[:, i] = zeta / nrm
    return PODBasis(modes, lam, Q, w, rank, clipped, dict(meta or {}))


def project(values, basis: PODBasis) -> np.ndarray:
    """Weighted-inner-product coefficients of a (flattened) field."""
    v = np.asarray(values, dtype=float).ravel()
    return (basis.modes * basis.weights[:, None]).T @ v


def reconstruct(coeffs, basis: PODBasis) -> np.ndarray:
    return basis.modes @ np.asarray(coeffs, dtype=float)


def projection_error(values, basis: PODBasis) -> float:
    """Weighted norm of the component outside the basis span."""
    v = np.asarray(values, dtype=float).ravel()
    r = v - reconstruct(project(v, basis), basis)
    return float(np.sqrt(np.sum(basis.weights * r * r)))


def orthonormality_defect(basis: PODBasis) -> float:
    G = (basis.modes * basis.weights[:, None]).T @ basis.modes
    return float(np.abs(G - np.eye(basis.rank)).max())
