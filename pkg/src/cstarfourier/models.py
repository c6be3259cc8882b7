"""Builders for the desk-scale corpus of inclusions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .staralg import ConcreteAlgebra, InclusionPair

FAMILIES = ("full_matrix", "diagonal", "group_algebra", "bratteli", "inner_crossed")
MAX_GROUP_ORDER = 24
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class BadSpec(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: dict
    label: str
    trace: tuple | None = None

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadSpec(f"malformed JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: Any) -> "ModelSpec":
        if not isinstance(raw, dict):
            raise BadSpec("spec must be a JSON object")
        fam = raw.get("family")
        if fam not in FAMILIES:
            raise BadSpec(f"unknown family {fam!r}")
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise BadSpec("params must be an object")
        label = raw.get("label") or fam
        trace = raw.get("trace")
        if trace is not None:
            trace = tuple(float(t) for t in trace)
        return cls(fam, params, str(label), trace)

    def to_dict(self) -> dict:
        out = {"family": self.family, "params": self.params, "label": self.label}
        if self.trace is not None:
            out["trace"] = list(self.trace)
        return out


# permutation groups -------------------------------------------------------


def _compose(g: tuple, h: tuple) -> tuple:
    """(g h)(i) = g(h(i))."""
    return tuple(g[i] for i in h)


def enumerate_group(gens, degree: int | None = None) -> list[tuple]:
    """Elements of the group generated by permutations in image notation.

    Breadth-first over generators; identity first, rest in discovery order.
    """
    gens = [tuple(int(v) for v in g) for g in gens]
    if degree is None:
        degree = len(gens[0]) if gens else 1
    for g in gens:
        if len(g) != degree or sorted(g) != list(range(degree)):
            raise BadSpec(f"not a permutation of {degree} points: {g}")
    e = tuple(range(degree))
    elems = [e]
    seen = {e}
    frontier = [e]
    while frontier:
        nxt = []
        for x in frontier:
            for g in gens:
                y = _compose(g, x)
                if y not in seen:
                    seen.add(y)
                    elems.append(y)
                    nxt.append(y)
                    if len(elems) > MAX_GROUP_ORDER:
                        raise BadSpec(f"group order exceeds {MAX_GROUP_ORDER}")
        frontier = nxt
    return elems


def subgroups(elems: list[tuple]) -> list[frozenset]:
    """All subgroups of a finite permutation group.

    Every subgroup is the join of its cyclic subgroups, so start from the
    cyclic ones and close under pairwise joins.
    """
    deg = len(elems[0])
    cyc = {frozenset(enumerate_group([g], deg)) for g in elems}
    found = set(cyc)
    frontier = set(cyc)
    while frontier:
        new = set()
        for a in frontier:
            for b in found:
                if a <= b or b <= a:
                    continue
                j = frozenset(enumerate_group(sorted(a | b), deg))
                if j not in found:
                    new.add(j)
        found |= new
        frontier = new
    return sorted(found, key=lambda s: (len(s), sorted(s)))


def cyclic_gens(n: int) -> list[list[int]]:
    return [[(i + 1) % n for i in range(n)]]


def symmetric3_gens() -> list[list[int]]:
    return [[1, 0, 2], [1, 2, 0]]


@dataclass
class Model:
    spec: ModelSpec
    pair: InclusionPair
    trace_weights: np.ndarray | None = None  # per block of A, if fixed
    group: list | None = None
    regular: dict | None = None  # element -> permutation matrix
    extra: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.spec.label

    def subgroup_algebra(self, gens) -> ConcreteAlgebra:
        if self.group is None:
            raise BadSpec("not a group model")
        deg = len(self.group[0])
        elems = enumerate_group(gens, deg) if gens else [tuple(range(deg))]
        alg = ConcreteAlgebra.from_span([self.regular[g] for g in elems], name=f"C[{len(elems)}]")
        return alg

    def subgroup_lattice(self) -> list[frozenset]:
        """Subgroups K with H <= K <= G."""
        if self.group is None:
            return []
        h = set(self.extra.get("H", [tuple(range(len(self.group[0])))]))
        return [k for k in subgroups(self.group) if h <= k]

    def intermediates(self) -> list[tuple[str, ConcreteAlgebra]]:
        """Declared intermediate algebras B <= C <= A (endpoints excluded).

        Group models: every subgroup algebra between H and G.  Other models:
        quadruple legs and any listed in ``params["intermediates"]``.
        """
        out = []
        if self.group is not None and self.regular is not None:
            n_h = len(self.extra.get("H", [None]))
            for k in self.subgroup_lattice():
                if len(k) in (n_h, len(self.group)):
                    continue
                alg = ConcreteAlgebra.from_span([self.regular[g] for g in sorted(k)], name=f"C[K{len(k)}]")
                out.append((_subgroup_label(k), alg))
            return out
        q = self.quadruple_algebras()
        if q is not None:
            out += [("C", q[0]), ("D", q[1])]
        for i, gens in enumerate(self.spec.params.get("intermediates", []) or []):
            out.append((f"I{i}", self.subgroup_algebra(gens)))
        return out

    def quadruple_algebras(self):
        """(C, D) when the spec names a quadruple, else None."""
        q = self.spec.params.get("quadruple")
        if q is None:
            return None
        if q == "hadamard":
            c = ConcreteAlgebra.from_span([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], name="diag")
            d = ConcreteAlgebra.from_span(
                [HADAMARD @ np.diag(v) @ HADAMARD.conj().T for v in ([1.0, 0.0], [0.0, 1.0])],
                name="hadamard_diag",
            )
            return c, d
        if isinstance(q, list) and len(q) == 2:
            return self.subgroup_algebra(q[0]), self.subgroup_algebra(q[1])
        raise BadSpec(f"bad quadruple {q!r}")


def _subgroup_label(k) -> str:
    return f"K{len(k)}[" + ",".join("".join(map(str, g)) for g in sorted(k)) + "]"


def _regular(elems: list[tuple]) -> dict:
    index = {g: i for i, g in enumerate(elems)}
    n = len(elems)
    out = {}
    for g in elems:
        u = np.zeros((n, n), dtype=complex)
        for h in elems:
            u[index[_compose(g, h)], index[h]] = 1.0
        out[g] = u
    return out


def _matrix_units(n: int) -> np.ndarray:
    eye = np.eye(n, dtype=complex)
    return np.array([np.outer(eye[i], eye[j]) for i in range(n) for j in range(n)])


def _build_full_matrix(spec):
    k = int(spec.params.get("k", 1))
    n = int(spec.params.get("n", 2))
    if k < 1 or n < 1 or n % k:
        raise BadSpec("full_matrix needs k dividing n")
    A = ConcreteAlgebra(_matrix_units(n) / 1.0, name=f"M{n}")
    B = ConcreteAlgebra.from_span(np.kron(_matrix_units(k), np.eye(n // k)[None]), name=f"M{k}")
    return Model(spec, InclusionPair(B, A, spec.label))


def _build_diagonal(spec):
    n = int(spec.params.get("n", 2))
    if n < 1:
        raise BadSpec("diagonal needs n >= 1")
    A = ConcreteAlgebra(_matrix_units(n), name=f"M{n}")
    B = ConcreteAlgebra(np.array([np.diag(np.eye(n)[i]) for i in range(n)], dtype=complex), name=f"D{n}")
    return Model(spec, InclusionPair(B, A, spec.label))


def _build_group(spec):
    g_gens = spec.params.get("G")
    if not g_gens:
        raise BadSpec("group_algebra needs generators G")
    elems = enumerate_group(g_gens)
    deg = len(elems[0])
    reg = _regular(elems)
    h_gens = spec.params.get("H", [])
    h_elems = enumerate_group(h_gens, deg) if h_gens else [tuple(range(deg))]
    if not set(h_elems) <= set(elems):
        raise BadSpec("H is not a subgroup of G")
    A = ConcreteAlgebra.from_span([reg[g] for g in elems], name=f"C[G{len(elems)}]")
    B = ConcreteAlgebra.from_span([reg[h] for h in h_elems], name=f"C[H{len(h_elems)}]")
    A.set_generators(np.array([reg[tuple(g)] for g in g_gens]))
    if h_gens:
        B.set_generators(np.array([reg[tuple(h)] for h in h_gens]))
    return Model(spec, InclusionPair(B, A, spec.label), group=elems, regular=reg, extra={"H": h_elems})


def _build_bratteli(spec):
    lam = np.asarray(spec.params.get("Lambda"), dtype=int)
    dims_b = [int(d) for d in spec.params.get("dims_B", [])]
    if lam.ndim != 2 or lam.shape[1] != len(dims_b) or np.any(lam < 0):
        raise BadSpec("bratteli needs Lambda (rows A-blocks) and dims_B")
    dims_a = [int(v) for v in lam @ np.array(dims_b)]
    if any(d == 0 for d in dims_a):
        raise BadSpec("every A-block must receive some B-block")
    N = sum(dims_a)
    offs = np.cumsum([0] + dims_a)
    a_basis = []
    for i, d in enumerate(dims_a):
        for u in _matrix_units(d):
            m = np.zeros((N, N), dtype=complex)
            m[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = u
            a_basis.append(m)
    b_basis = []
    for j, dj in enumerate(dims_b):
        for u in _matrix_units(dj):
            m = np.zeros((N, N), dtype=complex)
            for i in range(len(dims_a)):
                pos = offs[i] + sum(lam[i, jj] * dims_b[jj] for jj in range(j))
                for _ in range(lam[i, j]):
                    m[pos : pos + dj, pos : pos + dj] = u
                    pos += dj
            b_basis.append(m)
    A = ConcreteAlgebra(np.array(a_basis), name="A")
    B = ConcreteAlgebra.from_span(b_basis, name="B")
    return Model(spec, InclusionPair(B, A, spec.label))


def _build_inner_crossed(spec):
    g_gens = spec.params.get("G")
    if not g_gens:
        raise BadSpec("inner_crossed needs generators G")
    elems = enumerate_group(g_gens)
    n = len(elems[0])
    reg = _regular(elems)

    def perm(g):
        v = np.zeros((n, n), dtype=complex)
        for i in range(n):
            v[g[i], i] = 1.0
        return v

    k = len(elems)
    B = ConcreteAlgebra.from_span(np.kron(_matrix_units(n), np.eye(k)[None]), name=f"M{n}")
    prods = [np.kron(u @ perm(g), reg[g]) for g in elems for u in _matrix_units(n)]
    A = ConcreteAlgebra.from_span(prods, name=f"M{n}xG")
    return Model(spec, InclusionPair(B, A, spec.label), group=elems)


_BUILDERS = {
    "full_matrix": _build_full_matrix,
    "diagonal": _build_diagonal,
    "group_algebra": _build_group,
    "bratteli": _build_bratteli,
    "inner_crossed": _build_inner_crossed,
}


def build(spec: ModelSpec) -> Model:
    if spec.family not in _BUILDERS:
        raise BadSpec(f"unknown family {spec.family!r}")
    try:
        model = _BUILDERS[spec.family](spec)
    except BadSpec:
        raise
    except (TypeError, ValueError, KeyError, IndexError) as exc:
        raise BadSpec(f"bad parameters for {spec.family}: {exc}") from exc
    if spec.trace is not None:
        model.trace_weights = np.asarray(spec.trace, dtype=float)
    if model.pair.big.N > 4096:
        raise BadSpec("ambient dimension exceeds 4096")
    return model


def corpus(default: bool = True) -> list[ModelSpec]:
    """The standard corpus; ``default=False`` appends extra models."""
    z2, z3, z4 = cyclic_gens(2), cyclic_gens(3), cyclic_gens(4)
    s3 = symmetric3_gens()
    specs = [
        ModelSpec("group_algebra", {"G": z2, "H": []}, "z2"),
        ModelSpec("group_algebra", {"G": z3, "H": []}, "z3"),
        ModelSpec("group_algebra", {"G": z4, "H": [], "intermediates": [[[2, 3, 0, 1]]]}, "z4"),
        ModelSpec("group_algebra", {"G": z4, "H": [[2, 3, 0, 1]]}, "z2_in_z4"),
        ModelSpec(
            "group_algebra",
            {"G": s3, "H": [], "quadruple": [[[1, 0, 2]], [[2, 1, 0]]]},
            "s3_quadruple",
        ),
        ModelSpec("group_algebra", {"G": s3, "H": [[1, 0, 2]]}, "s3_c2"),
        ModelSpec("full_matrix", {"k": 1, "n": 2}, "m2"),
        ModelSpec("diagonal", {"n": 2}, "diag2"),
        ModelSpec("full_matrix", {"k": 2, "n": 4}, "m2_m4"),
        ModelSpec("full_matrix", {"k": 1, "n": 2, "quadruple": "hadamard"}, "hadamard_quadruple"),
    ]
    if not default:
        specs += [
            ModelSpec("group_algebra", {"G": cyclic_gens(6), "H": []}, "z6"),
            ModelSpec("bratteli", {"Lambda": [[1, 1]], "dims_B": [1, 1]}, "bratteli_d2"),
            ModelSpec("inner_crossed", {"G": z2}, "m2_cross_z2"),
        ]
    return specs


def by_label(label: str, default: bool = False) -> ModelSpec:
    for s in corpus(default=default):
        if s.label == label:
            return s
    raise BadSpec(f"unknown model {label!r}")
