import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cstarfourier import models as M
from cstarfourier.numkernel import dag, fro, rng
from cstarfourier.staralg import (
    ConcreteAlgebra, InclusionPair, NotInCommutant, NotNested, NotProjection, compress_by_projection,
    inclusion_matrix, re_represent, relative_commutant, span_closure,
)

from _cache import model

E = np.eye(2, dtype=complex)
E12 = np.array([[0, 1], [0, 0]], dtype=complex)
LABELS = [s.label for s in M.corpus(default=False)]


def full(n):
    return span_closure([np.eye(n, k=1, dtype=complex), np.diag(np.arange(n) + 1.0)], n)


def test_span_closure_examples():
    assert span_closure([E], 2).dim == 1
    assert span_closure([np.diag([1.0, 2.0])], 2).dim == 2
    assert span_closure([E12], 2).dim == 4


def test_relative_commutant_examples():
    M2 = full(2)
    scal = ConcreteAlgebra.from_span([E])
    assert relative_commutant(M2, M2).dim == 1
    assert relative_commutant(scal, M2).dim == 4
    s3 = model("s3_c2")
    assert relative_commutant(s3.pair.small, s3.pair.big).dim == 4


def test_relative_commutant_not_nested():
    diag = ConcreteAlgebra.from_span([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    off = span_closure([np.array([[0, 1], [1, 0]], dtype=complex)], 2)
    with pytest.raises(NotNested):
        relative_commutant(off, diag)


def test_block_examples():
    assert full(3).blocks.dims == (3,)
    assert model("z2").pair.big.blocks.dims == (1, 1)
    assert sorted(model("s3_quadruple").pair.big.blocks.dims) == [1, 1, 2]


def test_inclusion_matrix_examples():
    assert inclusion_matrix(model("m2").pair).tolist() == [[2]]
    assert inclusion_matrix(model("diag2").pair).tolist() == [[1, 1]]
    s3 = model("s3_quadruple")
    k3 = s3.subgroup_algebra([[1, 2, 0]])
    lam = inclusion_matrix(InclusionPair(k3, s3.pair.big)).astype(float)
    assert abs(np.linalg.norm(lam, 2) ** 2 - 2) < 1e-9


@pytest.mark.parametrize("label", LABELS)
def test_corpus_algebra_invariants(label):
    pair = model(label).pair
    for alg in (pair.small, pair.big):
        assert alg.closure_residual() <= 1e-9
        assert fro(alg.unit @ alg.unit - alg.unit) < 1e-12 and fro(alg.unit - dag(alg.unit)) < 1e-12
        assert alg.contains(alg.unit)
        # commutant of the scalars is everything, of itself the center
        scal = ConcreteAlgebra.from_span([alg.unit])
        assert relative_commutant(scal, alg).dim == alg.dim
        assert relative_commutant(alg, alg).dim == alg.center.dim == len(alg.blocks.dims)
        assert sum(d * d for d in alg.blocks.dims) == alg.dim
    # dim(B' n A) = sum_ij Lambda_ij^2 (commutant of B in each block of A)
    lam = pair.inclusion_matrix
    assert relative_commutant(pair.small, pair.big).dim == int(np.sum(lam * lam))


def test_compress_examples():
    pair = model("m2").pair
    assert compress_by_projection(np.eye(2), pair).big.dim == 4
    cut = compress_by_projection(np.diag([1.0, 0.0]).astype(complex), pair)
    assert cut.big.dim == cut.small.dim == 1
    with pytest.raises(NotProjection):
        compress_by_projection(np.diag([0.5, 0.0]), pair)
    flip = ConcreteAlgebra.from_span([E, np.array([[0, 1], [1, 0]], dtype=complex)])
    with pytest.raises(NotInCommutant):
        compress_by_projection(np.diag([1.0, 0.0]).astype(complex), InclusionPair(flip, full(2)))


def test_re_represent_multiplicity():
    # M_2 acting with multiplicity 4 on C^8
    basis = np.kron(np.eye(4).reshape(4, 2, 2), np.eye(4)[None])
    alg = ConcreteAlgebra.from_span(basis)
    rho = np.eye(8, dtype=complex) / 8
    pi, new, ops, new_rho = re_represent(alg, [basis[1]], rho)
    assert new.N == 2 and new.dim == 4
    for a in alg.basis:
        assert abs(np.trace(rho @ a) - np.trace(new_rho @ pi(a))) < 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 4))
def test_span_of_random_hermitian_is_abelian_or_full(seed, n):
    g = rng(seed)
    h = g.standard_normal((n, n)) + 1j * g.standard_normal((n, n))
    h = h + dag(h)
    # one generic self-adjoint generates its polynomial algebra: dimension n
    assert span_closure([h], n).dim == n
    # adding a generic second one gives all of M_n
    k = g.standard_normal((n, n)) + 1j * g.standard_normal((n, n))
    assert span_closure([h, k + dag(k)], n).dim == n * n
