import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fvrom import pod


def w_inner_oracle(weights, a, b):
    return sum(float(weights[i]) * float(a[i]) * float(b[i])
               for i in range(len(weights)))


# -- correlation matrix -----------------------------------------------------------


def test_correlation_single_snapshot(rng):
    s = rng.normal(size=12)
    w = rng.uniform(0.5, 2.0, size=12)
    C = pod.correlation_matrix(s[:, None], w)
    assert C.shape == (1, 1)
    assert C[0, 0] == pytest.approx(w_inner_oracle(w, s, s), rel=1e-13)
    assert C[0, 0] > 0


def test_correlation_orthogonal_snapshots():
    w = np.ones(4)
    S = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    C = pod.correlation_matrix(S, w)
    assert C[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert C[1, 0] == pytest.approx(0.0, abs=1e-15)


def test_correlation_double_loop_oracle(rng):
    S = rng.normal(size=(20, 5))
    w = rng.uniform(0.1, 3.0, size=20)
    C = pod.correlation_matrix(S, w)
    for i in range(5):
        for j in range(5):
            assert C[i, j] == pytest.approx(
                w_inner_oracle(w, S[:, i], S[:, j]), rel=1e-13)
    assert np.abs(C - C.T).max() <= 1e-13 * np.abs(C).max()
    assert np.linalg.eigvalsh(C).min() >= -1e-12 * np.trace(C)


# -- eigendecomposition --------------------------------------------------------------


def test_eigendecompose_identity():
    lam, Q, clipped = pod.eigendecompose(np.eye(3))
    assert np.allclose(lam, 1.0)
    assert clipped == 0.0


def test_eigendecompose_diag():
    lam, Q, _ = pod.eigendecompose(np.diag([4.0, 1.0]))
    assert np.allclose(lam, [4.0, 1.0])
    # eigenvectors are the signed identity once sorted descending
    assert np.allclose(np.abs(Q), np.eye(2))


def test_eigendecompose_residual_and_cubic_oracle(rng):
    M = rng.normal(size=(8, 8))
    C = M @ M.T
    lam, Q, _ = pod.eigendecompose(C)
    assert np.linalg.norm(C @ Q - Q * lam) <= 1e-10 * np.linalg.norm(C)
    # 3x3 slice: eigenvalues from the characteristic polynomial roots
    C3 = C[:3, :3]
    lam3, _, _ = pod.eigendecompose(C3)
    coeffs = np.poly(C3)  # characteristic polynomial coefficients
    roots = np.sort(np.roots(coeffs).real)[::-1]
    assert np.abs(lam3 - roots).max() <= 1e-10 * max(1.0, roots[0])


def test_eigendecompose_clips_negatives():
    C = np.diag([1.0, -1e-14])
    lam, _, clipped = pod.eigendecompose(C)
    assert lam.min() == 0.0
    assert clipped == pytest.approx(1e-14)


# -- basis construction -----------------------------------------------------------------


def test_repeated_column_rank_one(rng):
    col = rng.normal(size=15)
    S = np.column_stack([col, col, col])
    w = rng.uniform(0.5, 1.5, size=15)
    basis = pod.build_basis(S, w)
    assert basis.rank == 1
    nrm = np.sqrt(w_inner_oracle(w, col, col))
    assert np.abs(np.abs(basis.modes[:, 0]) - np.abs(col) / nrm).max() <= 1e-10


def test_rank_error_reports_usable_rank(rng):
    col = rng.normal(size=10)
    S = np.column_stack([col, 2 * col])
    with pytest.raises(pod.RankError) as err:
        pod.build_basis(S, np.ones(10), rank=2)
    assert err.value.usable == 1


def test_orthonormal_columns_span_preserved(rng):
    # snapshots already orthonormal: the POD projector equals the snapshot
    # projector
    A = rng.normal(size=(30, 4))
    Qmat, _ = np.linalg.qr(A)
    S = Qmat[:, :4]
    basis = pod.build_basis(S, np.ones(30), rank=4)
    P_pod = basis.modes @ basis.modes.T
    P_s = S @ S.T
    assert np.linalg.norm(P_pod - P_s) <= 1e-8


def test_orthonormality_invariant(rng):
    S = rng.normal(size=(40, 8))
    w = rng.uniform(0.2, 2.0, size=40)
    basis = pod.build_basis(S, w, rank=6)
    assert pod.orthonormality_defect(basis) <= 1e-8


def test_cumulative_energy_values():
    assert np.allclose(pod.cumulative_energy([1.0]), [1.0])
    assert np.allclose(pod.cumulative_energy([3.0, 1.0]), [0.75, 1.0])


def test_cumulative_energy_reference_pattern():
    # a published-style decay: curve must be monotone in [0, 1]
    curve = np.array([0.999588, 0.999924, 0.999998])
    lam1 = curve[0]
    lam = np.array([curve[0], curve[1] - curve[0], curve[2] - curve[1],
                    1.0 - curve[2]])
    got = pod.cumulative_energy(lam)
    assert np.all(np.diff(got) >= -1e-15)
    assert got[0] == pytest.approx(0.999588)
    assert got[1] == pytest.approx(0.999924)
    assert 0.0 < got[0] <= got[-1] <= 1.0 + 1e-15


def test_rank_for_energy():
    lam = [3.0, 1.0]
    assert pod.rank_for_energy(lam, 0.7) == 1
    assert pod.rank_for_energy(lam, 0.9) == 2
    with pytest.raises(ValueError):
        pod.rank_for_energy(lam, 0.0)


# -- projection / reconstruction -----------------------------------------------------------


def test_project_mode_gives_unit_vector(rng):
    S = rng.normal(size=(25, 5))
    w = rng.uniform(0.5, 1.5, size=25)
    basis = pod.build_basis(S, w, rank=3)
    coeffs = pod.project(basis.modes[:, 0], basis)
    assert np.abs(coeffs - np.eye(3)[0]).max() <= 1e-12
    back = pod.reconstruct(coeffs, basis)
    assert np.abs(back - basis.modes[:, 0]).max() <= 1e-12


def test_project_orthogonal_component_zero(rng):
    S = rng.normal(size=(25, 4))
    w = np.ones(25)
    basis = pod.build_basis(S, w, rank=4)
    v = rng.normal(size=25)
    v -= pod.reconstruct(pod.project(v, basis), basis)
    assert np.abs(pod.project(v, basis)).max() <= 1e-10


def test_pythagoras_identity(rng):
    S = rng.normal(size=(30, 6))
    w = rng.uniform(0.1, 2.0, size=30)
    basis = pod.build_basis(S, w, rank=5)
    f = rng.normal(size=30)
    coeffs = pod.project(f, basis)
    err = pod.projection_error(f, basis)
    total = w_inner_oracle(w, f, f)
    assert err ** 2 == pytest.approx(total - np.sum(coeffs ** 2), abs=1e-10)


def test_snapshot_reproduction_full_rank(rng):
    S = rng.normal(size=(30, 6))
    w = rng.uniform(0.1, 2.0, size=30)
    basis = pod.build_basis(S, w)
    for k in range(6):
        nrm = np.sqrt(w_inner_oracle(w, S[:, k], S[:, k]))
        assert pod.projection_error(S[:, k], basis) <= 1e-8 * nrm


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), n_s=st.integers(2, 8))
def test_property_orthonormal_and_descending(seed, n_s):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(20, n_s))
    w = rng.uniform(0.5, 2.0, size=20)
    basis = pod.build_basis(S, w)
    assert pod.orthonormality_defect(basis) <= 1e-8
    assert np.all(np.diff(basis.eigenvalues) <= 1e-12 * basis.eigenvalues[0])
    curve = basis.cumulative_energy
    assert np.all(curve >= -1e-15) and curve[-1] <= 1.0 + 1e-12


def test_pod_matches_truncated_svd_oracle(rng):
    # POD projection error equals truncated-SVD projection error (unit weights)
    S = rng.normal(size=(30, 10))
    w = np.ones(30)
    U, sv, Vt = np.linalg.svd(S, full_matrices=False)
    for r in range(1, 6):
        basis = pod.build_basis(S, w, rank=r)
        P = basis.modes @ basis.modes.T
        err_pod = np.linalg.norm(S - P @ S)
        err_svd = np.sqrt(np.sum(sv[r:] ** 2))
        assert abs(err_pod - err_svd) <= 1e-10 * max(1.0, err_svd)
