import math
import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cstarfourier import lattice as L
from cstarfourier import models as M
from cstarfourier.models import HADAMARD
from cstarfourier.staralg import ConcreteAlgebra, InclusionPair

from _cache import model


@pytest.fixture(scope="module")
def z4():
    return L.enumerate_intermediates(model("z4"))


def diag_alg(*rows):
    return ConcreteAlgebra.from_span([np.diag(r).astype(complex) for r in rows])


def partitions_oracle(n):
    """All set partitions of range(n) by brute-force block assignment."""
    seen = set()
    for labels in np.ndindex(*([n] * n)):
        blocks = {}
        for i, b in enumerate(labels):
            blocks.setdefault(b, []).append(i)
        seen.add(frozenset(frozenset(b) for b in blocks.values()))
    return seen


@pytest.mark.parametrize("n", range(1, 7))
def test_bell_numbers(n):
    parts = list(L.set_partitions(n))
    assert len(parts) == L.bell(n)
    assert len({frozenset(frozenset(b) for b in p) for p in parts}) == len(parts)
    if n <= 5:
        assert len(parts) == len(partitions_oracle(n))
    assert L.bell(4) == 15


def test_z4_partition_lattice(z4):
    assert z4.strategy == "exact:set_partitions"
    assert len(z4.nodes) == 15
    # dims are block counts: one 1-block, seven 2-block, six 3-block, one 4-block partition
    assert Counter(n.dim for n in z4.nodes) == {1: 1, 2: 7, 3: 6, 4: 1}
    assert not z4.heuristic


def test_z4_covering_is_refinement(z4):
    parts = partitions_oracle(4)
    # merging two blocks is a cover; count sum_p C(|p|, 2)
    covers = sum(math.comb(len(p), 2) for p in parts)
    assert len(z4.edges) == covers == 31
    for i, j in z4.edges:
        assert z4.nodes[j].dim == z4.nodes[i].dim + 1


def test_z4_bounds(z4):
    assert math.log(15) <= L.bound_value(4)
    checks = L.bound_check(z4, 4.0, 16)
    assert all(c.status == "pass" for c in checks)


def test_s3_subgroup_nodes():
    lat = L.enumerate_intermediates(model("s3_quadruple"))
    assert lat.strategy == "subgroups+closure"
    assert len(lat.nodes) == 6
    assert sorted(n.dim for n in lat.nodes) == [1, 2, 2, 2, 3, 6]
    assert len(lat.minimal_nodes()) == 4
    for label, C in model("s3_quadruple").intermediates():
        assert lat.find(C) is not None, label


def test_trivial_lattice_single_node():
    m = M.build(M.ModelSpec("full_matrix", {"k": 2, "n": 2}, "m2m2"))
    lat = L.enumerate_intermediates(m)
    assert lat.strategy == "trivial"
    assert len(lat.nodes) == 1 and lat.edges == []
    dot = L.hasse(lat)
    assert dot.count("[label=") == 1 and "->" not in dot


def test_chain_is_path():
    algs = [diag_alg([1, 1, 1]), diag_alg([1, 1, 0], [0, 0, 1]), diag_alg([1, 0, 0], [0, 1, 0], [0, 0, 1])]
    nodes = [L.Node(name, a, index_top=float(3 // a.dim)) for name, a in zip("BCA", algs)]
    lat = L.IntermediateLattice("chain", nodes, L.covering_edges(algs), "manual")
    assert lat.edges == [(0, 1), (1, 2)]
    dot = L.hasse(lat)
    assert dot.startswith("digraph lattice {\n  rankdir=BT;\n")
    assert "n0 -> n1;" in dot and "n1 -> n2;" in dot and "n0 -> n2" not in dot
    assert 'label="C (dim 2, [A:P]0 = 1)"' in dot


def test_hadamard_lattice():
    lat = L.enumerate_intermediates(model("hadamard_quadruple"), seed=1, candidates=400)
    assert [n.label for n in lat.nodes] == ["B", "C", "D", "A"]
    assert len(lat.minimal_nodes()) == 2


def test_heuristic_labelled_and_deterministic():
    a = L.enumerate_intermediates(model("m2"), seed=5, candidates=300)
    b = L.enumerate_intermediates(model("m2"), seed=5, candidates=300)
    assert a.heuristic
    assert [n.label for n in a.nodes] == [n.label for n in b.nodes]
    assert L.hasse(a) == L.hasse(b)


def test_dot_deterministic(z4):
    assert L.hasse(z4) == L.hasse(L.enumerate_intermediates(model("z4")))


def test_lattice_laws(z4):
    assert L.lattice_law_residual(z4) == 0


def test_meet_join_examples():
    C = diag_alg([1, 1, 0, 0], [0, 0, 1, 1])
    D = diag_alg([1, 0, 0, 1], [0, 1, 1, 0])
    assert L.meet(C, D).dim == 1
    assert L.join(C, D).dim == 4
    assert L.meet(C, C).same_as(C)


def test_node_checks_no_fail(z4):
    assert not [c.name for c in L.node_checks(z4, model("z4").pair) if c.status == "fail"]


def test_exhaustion_warning():
    with pytest.warns(L.ExhaustionWarning):
        lat = L.enumerate_intermediates(model("z4"), cap=5, indices=False)
    assert lat.warnings


def test_index_rigidity_flagged():
    lat = L.enumerate_intermediates(model("z3"))
    assert len(lat.nodes) == 5
    checks = {c.name: c for c in L.bound_check(lat, 3.0, 9, irreducible=False, simple=False)}
    # C in C^3 has index 3 and intermediates; rigidity only holds for simple algebras
    assert checks["index_rigidity_no_intermediates"].status == "hypothesis_not_met"


def test_kk_equal():
    C = diag_alg([1, 0], [0, 1])
    rep = L.kk_distance_upper(C, C, seed=0)
    assert rep.lower < 1e-9 and rep.upper < 1e-6
    assert rep.nested_equal is True


def test_kk_hadamard():
    C = diag_alg([1, 0], [0, 1])
    D = ConcreteAlgebra.from_span(HADAMARD @ C.basis @ HADAMARD.conj().T)
    rep = L.kk_distance_upper(C, D, seed=0)
    assert 0 < rep.lower <= rep.upper + 1e-9
    assert rep.upper <= np.sqrt(2)
    assert abs(rep.lower - 1) < 1e-6


def test_kk_strict_inclusion():
    B = diag_alg([1, 1])
    C = diag_alg([1, 0], [0, 1])
    rep = L.kk_distance_upper(B, C, seed=0)
    assert rep.lower > 0.5
    assert rep.nested_equal is None


@settings(max_examples=10, deadline=None)
@given(eps=st.floats(1e-3, 0.2))
def test_kk_small_rotation(eps):
    C = diag_alg([1, 0], [0, 1])
    u = np.array([[np.cos(eps), -np.sin(eps)], [np.sin(eps), np.cos(eps)]], dtype=complex)
    D = ConcreteAlgebra.from_span(u @ C.basis @ u.conj().T)
    rep = L.kk_distance_upper(C, D, seed=1, samples=8)
    # |u z u* - z| <= 2 sin(eps) for unitary z; the bounds bracket something below that
    assert rep.lower <= rep.upper + 1e-9
    assert rep.upper <= 2 * np.sin(eps) + 1e-6
    assert rep.lower > 0


@pytest.mark.parametrize("label", ["z4", "s3_quadruple", "hadamard_quadruple", "z6", "m2_m4"])
def test_lattice_report_no_fail(label):
    lat, checks = L.lattice_report(model(label), seed=0, candidates=300)
    assert not [c.name for c in checks if c.status == "fail"]


def test_rigidity_candidates_s3():
    lat = L.enumerate_intermediates(model("s3_quadruple"))
    names = [l for l, _ in L.rigidity_candidates(model("s3_quadruple"), lat)]
    assert len(names) == 4
