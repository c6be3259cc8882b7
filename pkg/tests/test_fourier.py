import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cstarfourier import fourier as F
from cstarfourier.numkernel import dag, fro
from cstarfourier.staralg import NotInCommutant
from cstarfourier.tower import DepthLimit

from _cache import fctx


def rel(a, b):
    return fro(a - b) / max(1.0, fro(b))


DEEP = ["z2", "z3", "diag2"]  # depth 3
SHALLOW = ["m2", "s3_quadruple", "m2_m4", "s3_c2"]  # depth 2


@pytest.mark.parametrize("label", DEEP + ["m2"])
def test_fourier_of_e1(label):
    fc = fctx(label, 3 if label in DEEP else 2)
    one = np.eye(fc.N)
    assert rel(F.fourier(fc, 1, fc.tower.e(1)), fc.tower.index ** -0.5 * one) < 1e-8


@pytest.mark.parametrize("k", [1, 2])
def test_fourier_of_jones_chain(k):
    fc = fctx("z3", 3)
    one = np.eye(fc.N)
    assert rel(F.fourier(fc, k, fc.up(k)), fc.tau ** (k / 2) * one) < 1e-8
    assert rel(F.fourier_inv(fc, k, one), fc.tau ** (-k / 2) * fc.up(k)) < 1e-8


def test_inverse_of_fourier_e1():
    fc = fctx("z2", 3)
    e1 = fc.tower.e(1)
    assert rel(F.fourier_inv(fc, 1, F.fourier(fc, 1, e1)), e1) < 1e-8


def test_fourier_linear():
    fc = fctx("s3_c2", 2)
    g = np.random.default_rng(2)
    B1 = fc.Bc(1)
    x, y = B1.random_element(g), B1.random_element(g)
    a, b = 0.3 - 1.2j, 2.0
    assert rel(F.fourier(fc, 1, a * x + b * y), a * F.fourier(fc, 1, x) + b * F.fourier(fc, 1, y)) < 1e-9


def test_fourier_routes_agree():
    fc = fctx("s3_quadruple", 2)
    x = fc.Bc(1).random_element(np.random.default_rng(4))
    assert rel(F.fourier(fc, 1, x), F.fourier_ambient(fc, 1, x)) < 1e-8


def test_fourier_guards():
    fc = fctx("s3_c2", 2)
    with pytest.raises(DepthLimit):
        F.fourier(fc, 2, np.eye(fc.N))
    x = next(a for a in fc.tower.A.basis if fc.Bc(0).residual(a) > 1e-3)
    with pytest.raises(NotInCommutant):
        F.fourier(fc, 0, x)


def test_fourier_isometry():
    fc = fctx("z3", 3)
    norm2 = lambda z: np.sqrt(np.real(fc.tr(dag(z) @ z)))
    for b in fc.Bc(1).basis:
        assert abs(norm2(F.fourier(fc, 1, b)) - norm2(b)) < 1e-8
    for c in fc.Ac(2).basis:
        assert abs(norm2(F.fourier_inv(fc, 1, c)) - norm2(c)) < 1e-8


def test_rotation_examples():
    fc = fctx("s3_quadruple", 2)
    e1 = fc.tower.e(1)
    assert rel(F.rotation(fc, 1, e1), e1) < 1e-8
    g = np.random.default_rng(6)
    x, y = fc.Bc(1).random_element(g), fc.Bc(1).random_element(g)
    r = lambda z: F.rotation(fc, 1, z)
    assert rel(r(r(x)), x) < 1e-8
    assert rel(r(x @ y), r(y) @ r(x)) < 1e-8
    assert rel(r(x), F.rotation(fc, 1, x, method="quasi_basis")) < 1e-8


def test_rotation_period_level2():
    fc = fctx("z2", 3)
    x = fc.Bc(2).random_element(np.random.default_rng(1))
    r = lambda z: F.rotation(fc, 2, z)
    assert rel(r(r(r(x))), x) < 1e-8


def test_gamma0_examples():
    fc = fctx("z2", 3)
    e1 = fc.tower.e(1)
    assert rel(F.gamma0(fc, e1), e1) < 1e-8
    u = fc.Bc(1).random_element(np.random.default_rng(9))
    assert rel(dag(F.gamma0(fc, u)), F.gamma0(fc, dag(u))) < 1e-8
    # trace preservation measured directly on the Z_2 tower
    assert abs(fc.tr(F.gamma0(fc, u)) - fc.tr(u)) < 1e-8


def test_gamma1_routes():
    fc = fctx("z2", 3)
    y = fc.Bc(3).random_element(np.random.default_rng(10))
    assert rel(F.gamma1(fc, y), F.gamma1(fc, y, method="literal")) < 1e-8
    r3 = lambda z: F.rotation(fc, 3, z, method="quasi_basis")
    assert rel(r3(r3(y)), F.gamma1(fc, y)) < 1e-8


@pytest.mark.parametrize("label", DEEP)
def test_shift(label):
    fc = fctx(label, 3)
    t = fc.tower
    one = np.eye(fc.N)
    assert rel(F.shift(fc, one), one) < 1e-8
    assert rel(F.shift(fc, t.e(1)), t.e(3)) < 1e-8
    g = np.random.default_rng(12)
    x, y = fc.Bc(1).random_element(g), fc.Bc(1).random_element(g)
    assert rel(F.shift(fc, x @ y), F.shift(fc, x) @ F.shift(fc, y)) < 1e-8
    assert fc.A1c(3).residual(F.shift(fc, x)) < 1e-8
    assert rel(F.shift_inverse(fc, F.shift(fc, x)), x) < 1e-8
    assert abs(fc.tr(F.shift(fc, x)) - fc.tr(x)) < 1e-8


def test_coproduct_identity_and_e1():
    fc = fctx("z3", 3)
    e1 = fc.tower.e(1)
    ident = F.identity_element(fc, 1)
    x = fc.Bc(1).random_element(np.random.default_rng(13))
    assert rel(F.coproduct(fc, 1, x, ident), x) < 1e-8
    assert rel(F.coproduct(fc, 1, ident, x), x) < 1e-8
    # F(e1) = tau^{1/2} 1, so e1 o e1 = tau F^{-1}(1) = tau^{1/2} e1
    assert rel(F.coproduct(fc, 1, e1, e1), fc.tau ** 0.5 * e1) < 1e-8


@pytest.mark.parametrize("label", DEEP + SHALLOW)
def test_fourier_suite_no_fail(label):
    fc = fctx(label, 3 if label in DEEP else 2)
    checks = F.fourier_suite(fc, seed=0, assoc_trials=10)
    assert not [c.name for c in checks if c.status == "fail"]


def test_irreducibility_transport_flagged():
    checks = {c.name: c for c in F.fourier_suite(fctx("m2", 2), seed=0, assoc_trials=2)}
    # C in M_2 has B' n A = M_2, so the transport check does not apply
    assert checks["irreducibility_transport"].status in ("pass", "hypothesis_not_met")
    assert not fctx("m2", 2).irreducible_data


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**20), k=st.integers(0, 2))
def test_fourier_inverse_property(seed, k):
    fc = fctx("z3", 3)
    g = np.random.default_rng(seed)
    x = fc.Bc(k).random_element(g)
    y = fc.Ac(k + 1).random_element(g)
    assert rel(F.fourier_inv(fc, k, F.fourier(fc, k, x)), x) < 1e-8
    assert rel(F.fourier(fc, k, F.fourier_inv(fc, k, y)), y) < 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**20))
def test_adjoint_rule_property(seed):
    fc = fctx("s3_c2", 2)
    x = fc.Bc(1).random_element(np.random.default_rng(seed))
    assert rel(dag(F.fourier(fc, 1, x)), F.fourier(fc, 1, F.gamma0(fc, dag(x)))) < 1e-8


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**20))
def test_coproduct_associative_property(seed):
    fc = fctx("diag2", 3)
    g = np.random.default_rng(seed)
    x, y, z = (fc.Bc(2).random_element(g) for _ in range(3))
    c = lambda a, b: F.coproduct(fc, 2, a, b)
    assert rel(c(c(x, y), z), c(x, c(y, z))) < 1e-7
