import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cstarfourier.numkernel import (
    Check, InnerProduct, NonHermitian, NotPSD, check, dag, default_seed, fro, herm_eig,
    jacobi_eigh, nullspace, orthonormalize, psd_root_pinv, random_hermitian, rng,
)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


def test_identity_spectrum():
    w, v = herm_eig(np.eye(2))
    assert np.allclose(w, [1, 1])
    assert np.allclose(v, np.eye(2))


def test_pauli_x_spectrum():
    w, _ = herm_eig(PAULI_X)
    assert np.allclose(w, [-1, 1])


@pytest.mark.parametrize("method", ["jacobi", "lapack", "auto"])
def test_random_reconstruction(method):
    h = random_hermitian(8, rng(3))
    w, v = herm_eig(h, method=method)
    assert fro(v @ np.diag(w) @ dag(v) - h) < 1e-10 * fro(h)
    assert fro(dag(v) @ v - np.eye(8)) < 1e-12
    assert np.all(np.diff(w) >= 0)


def test_non_hermitian_rejected():
    with pytest.raises(NonHermitian):
        herm_eig(np.array([[0, 1], [0, 0]], dtype=complex))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_jacobi_matches_lapack(n, seed):
    h = random_hermitian(n, rng(seed))
    w, v = jacobi_eigh(h)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(h), atol=1e-10 * max(1.0, fro(h)))
    assert fro(v @ np.diag(w) @ dag(v) - h) < 1e-10 * max(1.0, fro(h))


def test_psd_root_examples():
    assert np.allclose(psd_root_pinv(np.diag([4.0, 0.0]), -0.5), np.diag([0.5, 0.0]))
    assert np.allclose(psd_root_pinv(np.diag([9.0]), 0.5), [[3.0]])
    u = np.linalg.qr(rng(1).standard_normal((4, 4)))[0]
    p = u[:, :2] @ u[:, :2].T
    assert fro(psd_root_pinv(p, -0.5) - p) < 1e-10


def test_psd_root_rejects_negative():
    with pytest.raises(NotPSD):
        psd_root_pinv(np.diag([1.0, -0.5]), 0.5)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 8), rank=st.integers(0, 8), seed=st.integers(0, 2**32 - 1))
def test_root_squares_back(n, rank, seed):
    g = rng(seed)
    x = g.standard_normal((n, min(rank, n))) + 1j * g.standard_normal((n, min(rank, n)))
    h = x @ dag(x)
    r = psd_root_pinv(h, 0.5)
    assert fro(r - dag(r)) < 1e-9 * max(1.0, fro(h))
    assert fro(r @ r - h) < 1e-9 * max(1.0, fro(h))


def test_nullspace_examples():
    assert nullspace(np.zeros((4, 4))).shape[0] == 4
    assert nullspace(np.eye(3)).shape[0] == 0
    # commutator with diag(1, 2) on M_2, acting on row-major vectorizations
    d = np.diag([1.0, 2.0])
    units = np.eye(4).reshape(4, 2, 2)
    m = np.array([(d @ u - u @ d).ravel() for u in units]).T
    ker = nullspace(m)
    assert ker.shape[0] == 2
    mats = ker.reshape(-1, 2, 2)
    for k in mats:
        assert abs(k[0, 1]) < 1e-12 and abs(k[1, 0]) < 1e-12


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(1, 10), cols=st.integers(1, 10), rank=st.integers(0, 10), seed=st.integers(0, 2**32 - 1))
def test_nullspace_is_kernel(rows, cols, rank, seed):
    g = rng(seed)
    r = min(rank, rows, cols)
    m = g.standard_normal((rows, r)) @ g.standard_normal((r, cols))
    ker = nullspace(m)
    assert ker.shape[0] == cols - np.linalg.matrix_rank(m)
    if ker.size:
        assert np.linalg.norm(m @ ker.T) <= 1e-9 * max(1.0, np.linalg.norm(m))
        assert np.allclose(ker.conj() @ ker.T, np.eye(len(ker)), atol=1e-12)


def test_orthonormalize_examples():
    out = orthonormalize([np.eye(2), 2 * np.eye(2)], InnerProduct.tracial(2))
    assert len(out) == 1
    assert abs(InnerProduct.tracial(2)(out[0], out[0]) - 1) < 1e-12
    units = np.eye(4).reshape(4, 2, 2)
    assert len(orthonormalize(units, InnerProduct.tracial(2))) == 4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 9))
def test_orthonormalize_weighted_gram(seed, k):
    g = rng(seed)
    xs = g.standard_normal((k, 3, 3)) + 1j * g.standard_normal((k, 3, 3))
    a = g.standard_normal((3, 3))
    rho = a @ a.T + np.eye(3)
    rho = rho / np.trace(rho)
    ip = InnerProduct(rho)
    out = orthonormalize(xs, ip)
    assert len(out) == min(k, 9)
    assert np.allclose(ip.gram(out), np.eye(len(out)), atol=1e-10)
    # idempotent in cardinality
    assert len(orthonormalize(out, ip)) == len(out)


def test_check_status_rule():
    assert check("a", 1e-12, 1e-9).status == "pass"
    assert check("a", 1e-3, 1e-9).status == "fail"
    assert check("a", 1e-3, 1e-9, hypothesis=False).status == "hypothesis_not_met"
    assert check("a", None, 1e-9).status == "undefined"
    assert check("a", float("nan"), 1e-9).status == "undefined"
    d = check("a", 0.0, 1e-9, ref="fourier-inverse").to_dict()
    assert d == {"name": "a", "paper_ref": "fourier-inverse", "status": "pass", "residual": 0.0, "tolerance": 1e-9}
    assert isinstance(check("a", 0.0, 1.0), Check)


def test_seed_override(monkeypatch):
    monkeypatch.setenv("CSTAR_SEED", "0x10")
    assert default_seed() == 16
    monkeypatch.delenv("CSTAR_SEED")
    assert default_seed() == 0xC57A
    assert rng(5).integers(1 << 30) == np.random.default_rng(5).integers(1 << 30)
