import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cstarfourier import biproj as P
from cstarfourier.numkernel import dag, fro
from cstarfourier.staralg import ConcreteAlgebra, NotNested

from _cache import fctx, lifted


def rel(a, b):
    return fro(a - b) / max(1.0, fro(b))


def test_classify_e1():
    fc = fctx("z3", 2)
    be = P.classify(fc, 1, fc.tower.e(1))
    assert be.tag == "biprojection"
    assert abs(be.t - 3 ** -0.5) < 1e-8
    assert fro(be.f - np.eye(fc.N)) < 1e-8


def test_classify_one():
    fc = fctx("z2", 2)
    be = P.classify(fc, 1, np.eye(fc.N))
    # F_1(1) = tau^{-3/2} tau e_2 ... a positive multiple of the projection e_2
    y = be.fourier_value
    w = np.linalg.eigvalsh((y + dag(y)) / 2)
    assert np.all(np.isclose(w, 0, atol=1e-8) | np.isclose(w, w[-1], atol=1e-8))
    assert be.tag == "biprojection"
    assert fro(be.f - fc.tower.e(2)) < 1e-8


def test_classify_unitary():
    # in the Z_2 tower B' n A_1 = A_1 ~ M_2; a rotation unitary has a non-unitary transform
    fc = fctx("z2", 2)
    B1 = fc.Bc(1)
    h = B1.random_element(np.random.default_rng(1), hermitian=True)
    w, v = np.linalg.eigh(h)
    u = v @ np.diag(np.exp(1j * w)) @ dag(v)
    assert B1.residual(u) < 1e-9
    be = P.classify(fc, 1, u)
    y = be.fourier_value
    unitary = fro(dag(y) @ y - np.eye(fc.N)) < 1e-6
    assert (be.tag == "biunitary") == unitary
    assert be.tag in P.TAGS


def test_scalar_relations_e1():
    fc = fctx("s3_c2", 2)
    checks = {c.name: c for c in P.scalar_relations(fc, fc.tower.e(1))}
    for name in ("e_e1", "E1_of_e_scalar", "trace_e", "E2_of_f_scalar", "trace_f", "trace_ef", "f_e1_e2"):
        assert checks[name].status == "pass", name


def test_exchange_e1():
    fc = fctx("z3", 3)
    checks = {c.name: c for c in P.exchange_check(fc, fc.tower.e(1))}
    assert checks["exchange_ef_fe"].status == "pass"
    assert checks["exchange_ef_ee2e"].status == "pass"
    assert checks["fourier2_of_ef"].status == "pass"


def test_not_biprojection():
    fc = fctx("z2", 2)
    B1 = fc.Bc(1)
    h = B1.random_element(np.random.default_rng(3), hermitian=True)
    w, v = np.linalg.eigh(h)
    p = v[:, -1:] @ dag(v[:, -1:])
    p = B1.project(p)
    # a generic rank-one spectral projection of B' n A_1
    with pytest.raises(P.NotBiprojection):
        P.intermediate_from_biprojection(fc, p)


def test_intermediate_from_e1_is_A1():
    fc = fctx("s3_c2", 2)
    bi = P.intermediate_from_biprojection(fc, fc.tower.e(1))
    assert bi.P.dim == fc.tower.alg(1).dim
    assert all(c.status == "pass" for c in bi.checks[:2])


def test_intermediate_from_z4_subgroup():
    fc = fctx("z4", 2)
    (_, C), = lifted("z4", 2)
    data = P.jones_projection_of_intermediate(fc, C)
    bi = P.intermediate_from_biprojection(fc, data.e_C)
    assert bi.P.distance(data.C1) < 1e-8
    assert bi.candidate_contains_B
    # the candidate {e_C}' n A recovers the subgroup algebra
    assert bi.candidate.distance(C) < 1e-8


def test_trace_of_e_C_z4():
    fc = fctx("z4", 2)
    (_, C), = lifted("z4", 2)
    data = P.jones_projection_of_intermediate(fc, C)
    assert abs(fc.tr(data.e_C).real - 0.5) < 1e-9
    assert abs(data.index_AC - 2) < 1e-8 and abs(data.index_CB - 2) < 1e-8


def test_jones_projection_edges():
    fc = fctx("s3_c2", 2)
    t = fc.tower
    assert rel(P.jones_projection_of_intermediate(fc, t.B).e_C, t.e(1)) < 1e-8
    assert rel(P.jones_projection_of_intermediate(fc, t.A).e_C, np.eye(fc.N)) < 1e-8
    with pytest.raises(NotNested):
        P.jones_projection_of_intermediate(fc, t.alg(1))


@pytest.mark.parametrize("label,depth", [("s3_quadruple", 2), ("z4", 2), ("z6", 2), ("hadamard_quadruple", 2),
                                         ("diag2", 3)])
def test_every_intermediate_is_biprojection(label, depth):
    fc = fctx(label, depth)
    e1 = fc.tower.e(1)
    for name, C in lifted(label, depth):
        data = P.jones_projection_of_intermediate(fc, C)
        e = data.e_C
        assert rel(e @ e1, e1) < 1e-8 and rel(e1 @ e, e1) < 1e-8
        be = P.classify(fc, 1, e)
        assert be.tag == "biprojection", name
        assert abs(be.t - np.sqrt(fc.tower.index) / data.index_AC) < 1e-6
        assert P.intermediate_quasi_basis_residual(fc, C, e) < 1e-8


@pytest.mark.parametrize("label,depth", [("z2", 3), ("z4", 2), ("s3_quadruple", 2), ("hadamard_quadruple", 2),
                                         ("m2", 2), ("z2_in_z4", 2)])
def test_biprojection_suite_no_fail(label, depth):
    checks = P.biprojection_suite(fctx(label, depth), list(lifted(label, depth)))
    assert not [c.name for c in checks if c.status == "fail"]


def test_e1_central_minimal_flagged():
    checks = {c.name: c for c in P.biprojection_suite(fctx("z2", 2))}
    # C in C[Z_2] is not irreducible, and e_1 is neither central nor minimal there
    assert checks["e1:e1_central"].status == "hypothesis_not_met"


@settings(max_examples=30, deadline=None)
@given(x=st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_snap_projection_property(x):
    v = np.array(x, dtype=complex)
    if np.linalg.norm(v) < 1e-3:
        return
    v = v / np.linalg.norm(v)
    p = np.outer(v, v.conj())
    assert fro(P.snap_projection(p + 1e-12 * np.eye(2)) - p) < 1e-9
    assert P.snap_projection(0.5 * p) is None
    assert P.projection_defect(p) < 1e-12
