import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cstarfourier import expect as X
from cstarfourier.numkernel import fro
from cstarfourier.staralg import ConcreteAlgebra, InclusionPair, NotInCommutant, relative_commutant

from _cache import model


def units(n):
    out = np.zeros((n * n, n, n), dtype=complex)
    for k in range(n * n):
        out[k, k // n, k % n] = 1
    return out


def scalars_in(n):
    return InclusionPair(ConcreteAlgebra.from_span([np.eye(n)]), ConcreteAlgebra.from_span(units(n)))


def same(n):
    A = ConcreteAlgebra.from_span(units(n))
    return InclusionPair(A, A)


def diagonal(n):
    return ConcreteAlgebra.from_span([np.diag(np.eye(n)[i]) for i in range(n)])


@pytest.fixture(scope="module")
def c_in_m2():
    pair = scalars_in(2)
    return X.trace_preserving_expectation(pair, X.TraceState.normalized(pair.big))


def test_tracial_expectation_is_normalized_trace(c_in_m2):
    g = np.random.default_rng(0)
    x = g.standard_normal((2, 2)) + 1j * g.standard_normal((2, 2))
    assert fro(c_in_m2(x) - np.trace(x) / 2 * np.eye(2)) < 1e-12


def test_trace_state_weights():
    A = ConcreteAlgebra.from_span(units(2))
    tr = X.TraceState.normalized(A)
    assert tr.trace_residual() < 1e-12
    assert abs(tr(np.eye(2)) - 1) < 1e-12
    with pytest.raises(X.NotFaithful):
        X.TraceState.from_weights(diagonal(2), [1.0, 0.0])


def test_quasi_basis_c_in_m2(c_in_m2):
    qb = c_in_m2.quasi_basis
    assert len(qb) == 4
    # each element is a rescaled matrix unit sqrt(2) e_ij up to a phase
    for l in qb:
        assert np.count_nonzero(np.abs(l) > 1e-9) == 1
        assert abs(np.abs(l).max() - np.sqrt(2)) < 1e-9
    assert X.quasi_basis_residual(c_in_m2, qb) < 1e-12


def test_index_c_in_m2(c_in_m2):
    assert fro(c_in_m2.index - 4 * np.eye(2)) < 1e-9
    assert c_in_m2.scalar_index
    assert X.index_independence(c_in_m2) < 1e-9


def test_h_map_c_in_m2(c_in_m2):
    assert fro(X.h_map(c_in_m2, np.eye(2)) - 4 * np.eye(2)) < 1e-9
    e11 = np.diag([1, 0]).astype(complex)
    # sum 2 e_ij e_11 e_ji = 2 (e_11 + e_22)
    assert fro(X.h_map(c_in_m2, e11) - 2 * np.eye(2)) < 1e-9


def test_h_map_rejects_non_commutant():
    E = X.minimal_expectation(model("s3_c2").pair)
    x = next(a for a in E.A.basis if max(fro(a @ b - b @ a) for b in E.B.basis) > 1e-6)
    with pytest.raises(NotInCommutant):
        X.h_map(E, x)


def test_certificate_c_in_m2(c_in_m2):
    cert = X.minimality_check(c_in_m2)
    assert cert.minimal and cert.factor_pair
    assert abs(cert.c - 4) < 1e-9
    assert cert.classic_residual < 1e-9


def test_non_tracial_state_is_not_minimal():
    pair = scalars_in(2)
    E = X.state_expectation(pair, np.diag([0.7, 0.3]))
    e11 = np.diag([1, 0]).astype(complex)
    assert abs(E(e11)[0, 0] - 0.7) < 1e-12
    cert = X.minimality_check(E)
    assert not cert.minimal
    assert cert.classic_residual > 1e-3


def test_trivial_pair():
    E = X.minimal_expectation(same(2))
    x = np.arange(4).reshape(2, 2).astype(complex)
    assert fro(E(x) - x) < 1e-12
    assert len(E.quasi_basis) == 1
    assert fro(E.index - np.eye(2)) < 1e-9
    assert E.certificate.minimal
    c, _ = X.pp_constant(E, samples=100, seed=1)
    assert abs(c - 1) < 1e-9


def bloch_oracle():
    """Brute force over rank-one projections for E = Tr/2 on M_2."""
    best = np.inf
    for th in np.linspace(0, np.pi, 61):
        for ph in np.linspace(0, 2 * np.pi, 61):
            v = np.array([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)])
            p = np.outer(v, v.conj())
            ep = np.trace(p).real / 2 * np.eye(2)
            # largest c with ep - c p >= 0
            lo, hi = 0.0, 10.0
            for _ in range(60):
                mid = (lo + hi) / 2
                if np.linalg.eigvalsh(ep - mid * p)[0] >= -1e-14:
                    lo = mid
                else:
                    hi = mid
            best = min(best, lo)
    return best


PP_C_IN_M2 = 0.5  # frozen from bloch_oracle()


def test_pp_oracle_frozen():
    assert abs(bloch_oracle() - PP_C_IN_M2) < 1e-9


def test_pp_constant_c_in_m2(c_in_m2):
    c, info = X.pp_constant(c_in_m2, samples=400, seed=7)
    assert abs(c - PP_C_IN_M2) < 1e-6
    assert c >= 1 / c_in_m2.index_norm - 1e-6
    assert info["samples"] == 400


def test_pp_constant_z2():
    E = X.minimal_expectation(model("z2").pair)
    c, _ = X.pp_constant(E, samples=400, seed=7)
    assert abs(c - 0.5) < 1e-6


def test_pp_constant_deterministic(c_in_m2):
    assert X.pp_constant(c_in_m2, samples=50, seed=3)[0] == X.pp_constant(c_in_m2, samples=50, seed=3)[0]


@pytest.mark.parametrize("label,coset", [("z2", 2), ("z3", 3), ("z2_in_z4", 2), ("s3_c2", 3)])
def test_group_pairs(label, coset):
    E = X.minimal_expectation(model(label).pair)
    assert fro(E.index - coset * np.eye(E.A.N)) < 1e-8
    assert E.certificate.minimal


def test_group_expectation_is_coefficient_projection():
    m = model("s3_c2")
    E = X.minimal_expectation(m.pair)
    # E(u_g) = u_g on H and 0 off H
    for g, u in m.regular.items():
        inside = m.pair.small.contains(u)
        assert fro(E(u) - (u if inside else 0 * u)) < 1e-9


def test_coset_quasi_basis_size():
    E = X.minimal_expectation(model("s3_c2").pair)
    # the quasi-basis may split into more pieces, but the index is still [G:H]
    assert len(E.quasi_basis) >= 3
    assert abs(E.index_norm - 3) < 1e-8


def test_hadamard_diagonal_index():
    E = X.minimal_expectation(model("diag2").pair)
    assert abs(E.index_norm - 2) < 1e-8


@pytest.mark.parametrize("v,ok", [(1, True), (2, True), (3, True), (4 * np.cos(np.pi / 5) ** 2, True),
                                  (4, True), (7.3, True), (1.5, False), (2.5, False), (3.9, False)])
def test_allowed_scalar_index(v, ok):
    assert X.allowed_scalar_index(v) is ok


def test_certificate_per_component():
    # C^2 in C^3 via (a, b) -> diag(a, a, b): two components
    A = diagonal(3)
    B = ConcreteAlgebra.from_span([np.diag([1, 1, 0]), np.diag([0, 0, 1])])
    E = X.minimal_expectation(InclusionPair(B, A))
    cert = E.certificate
    assert cert.minimal
    assert E.flags["components"] == 2
    assert fro(E.index - np.diag([2, 2, 1])) < 1e-8
    assert not cert.scalar_index


def test_local_index_factor():
    # C in M_4 with a rank-two projection p: [pAp : C] = 4 = tr(p)^2 16
    pair = scalars_in(4)
    p = np.diag([1, 1, 0, 0]).astype(complex)
    assert X.local_index_residual(pair, p) < 1e-8


def test_intermediate_expectation_compatible():
    m = model("s3_quadruple")
    A = m.pair.big
    E = X.minimal_expectation(m.pair)
    g = np.random.default_rng(5)
    x = A.random_element(g)
    for _, C in m.intermediates():
        EC = X.minimal_expectation(InclusionPair(m.pair.small, C))
        FC = X.minimal_expectation(InclusionPair(C, A))
        assert fro(EC(FC(x)) - E(x)) < 1e-9


@pytest.mark.parametrize("label", ["z2", "z3", "z2_in_z4", "s3_c2", "m2", "diag2", "bratteli_d2", "m2_cross_z2"])
def test_expect_suite_no_fail(label):
    checks = X.expect_suite(model(label).pair, seed=0, pp_samples=100)
    assert not [c.name for c in checks if c.status == "fail"]


@settings(max_examples=20, deadline=None)
@given(w=st.lists(st.floats(0.1, 5.0), min_size=3, max_size=3), seed=st.integers(0, 2**16))
def test_trace_preserving_properties(w, seed):
    # C^3 diagonal over C: any faithful trace gives a conditional expectation
    A = diagonal(3)
    pair = InclusionPair(ConcreteAlgebra.from_span([np.eye(3)]), A)
    tr = X.TraceState.from_weights(A, w)
    E = X.trace_preserving_expectation(pair, tr)
    E.validate()
    g = np.random.default_rng(seed)
    x = A.random_element(g)
    assert abs(tr(E(x)) - tr(x)) < 1e-10
    assert X.quasi_basis_residual(E, E.quasi_basis) < 1e-9
    ind = E.index
    assert A.center.residual(ind) < 1e-9
    # the index of a trace-preserving E from C is 1/weights: sum of 1/w_i e_ii
    wn = np.asarray(w) / np.sum(w)
    assert fro(ind - np.diag(1 / wn)) < 1e-7 * max(1, fro(ind))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_h_map_lands_in_center(seed):
    E = X.minimal_expectation(model("s3_c2").pair)
    comm = relative_commutant(E.B, E.A).algebra
    x = comm.random_element(np.random.default_rng(seed))
    h = X.h_map(E, x)
    assert max(fro(h @ a - a @ h) for a in E.A.basis) < 1e-9 * max(1, fro(h))
