import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from traj_embed.errors import LogBranchFailure
from traj_embed.linalg import Propagator, logm_principal, psd_sqrt_factor, richardson_table


def random_matrix(seed, n=3, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_logm_inverts_expm(seed):
    A = random_matrix(seed, scale=0.3)
    np.testing.assert_allclose(logm_principal(scipy.linalg.expm(A)), A, atol=1e-9)


def test_logm_branch_cut():
    with pytest.raises(LogBranchFailure):
        logm_principal(np.diag([1.0, -1.0]).astype(complex))


def test_logm_defective_matrix_falls_back():
    K = np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex)
    np.testing.assert_allclose(logm_principal(K), scipy.linalg.logm(K), atol=1e-12)


@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_propagator_matches_expm(seed, t):
    H = random_matrix(seed)
    H = H - 1j * np.abs(np.trace(H)) * np.eye(3)  # keep the norm bounded
    P = Propagator(H)
    np.testing.assert_allclose(P.matrix(t), scipy.linalg.expm(-1j * H * t), atol=1e-8, rtol=1e-8)
    psi = np.array([1.0, 0.5j, -0.25])
    v = scipy.linalg.expm(-1j * H * t) @ psi
    assert P.norm2_function(psi)(t) == pytest.approx(np.vdot(v, v).real, rel=1e-8, abs=1e-12)


def test_richardson_removes_powers():
    hs = [0.1, 0.05, 0.025]
    vals = [np.array(3.0 + 2 * h - 5 * h**2) for h in hs]
    table = richardson_table(vals)
    assert abs(table[-1][-1] - 3.0) < 1e-12
    assert abs(table[1][1] - 3.0) > 1e-3


def test_psd_factor_rank():
    G = np.array([[1, 0.5, -0.5], [0.5, 1, 0.5], [-0.5, 0.5, 1]])
    lam, U, keep = psd_sqrt_factor(G, 1e-10)
    assert keep.sum() == 2
    np.testing.assert_allclose(np.sort(lam), [0, 1.5, 1.5], atol=1e-12)
