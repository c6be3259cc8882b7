"""Intermediate subalgebra lattices, Hasse diagrams, counting bounds and the
Kadison-Kastler distance.

Enumeration is exact for commutative tops over the scalars (set partitions
of the minimal projections) and for group algebras whose intermediates are
subgroup algebras; everything else is a seeded heuristic search, and the
lattice says so in ``strategy``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .expect import minimal_expectation
from .numkernel import Check, check, dag, fro, nullspace, opnorm, rng
from .staralg import ConcreteAlgebra, InclusionPair, relative_commutant, span_closure

NODE_CAP = 10_000
DEDUP = 1e-6
PARTITION_MAX_DIM = 8


class ExhaustionWarning(UserWarning):
    pass


@dataclass
class Node:
    label: str
    alg: ConcreteAlgebra
    index_top: float | None = None  # [A:P]_0
    index_bottom: float | None = None  # [P:B]_0
    minimal: bool = False

    @property
    def dim(self) -> int:
        return self.alg.dim


@dataclass
class IntermediateLattice:
    model: str
    nodes: list
    edges: list  # covering pairs (i, j): nodes[i] < nodes[j]
    strategy: str
    warnings: list = field(default_factory=list)
    _index: "_SpanIndex | None" = field(default=None, repr=False, compare=False)
    _ops: dict = field(default_factory=dict, repr=False, compare=False)  # (id a, id b) -> (meet, join)

    @property
    def heuristic(self) -> bool:
        return self.strategy.startswith("heuristic")

    def minimal_nodes(self) -> list:
        return [n for n in self.nodes if n.minimal]

    def find(self, alg: ConcreteAlgebra) -> int | None:
        if self._index is None or self._index.size != len(self.nodes):
            self._index = _SpanIndex()
            for n in self.nodes:
                self._index.add(n.alg)
        return self._index.find(alg)


class _SpanIndex:
    """Subspaces grouped by dimension for batched dedup lookups.

    For orthonormal bases a, b of equal dimension d the projector distance
    satisfies ||P - Q||^2 = 2d - 2||a b*||^2, so one einsum per group suffices.
    """

    def __init__(self):
        self.groups: dict[int, list] = {}  # dim -> [(position, flat)]
        self._stacked: dict[int, np.ndarray] = {}
        self.size = 0

    def add(self, alg: ConcreteAlgebra) -> None:
        self.groups.setdefault(alg.dim, []).append((self.size, alg._flat))
        self._stacked.pop(alg.dim, None)
        self.size += 1

    def find(self, alg: ConcreteAlgebra) -> int | None:
        d = alg.dim
        g = self.groups.get(d)
        if not g:
            return None
        if d not in self._stacked:
            self._stacked[d] = np.stack([f for _, f in g])
        ov = np.einsum("mdk,ek->mde", self._stacked[d], alg._flat.conj())
        dist2 = 2 * d - 2 * np.sum(np.abs(ov) ** 2, axis=(1, 2))
        m = int(np.argmin(dist2))
        return g[m][0] if dist2[m] < DEDUP**2 else None


# set partitions ----------------------------------------------------------------------


def set_partitions(n: int):
    """All set partitions of range(n), as lists of blocks, in a fixed order."""
    if n == 0:
        yield []
        return

    def rec(i, blocks):
        if i == n:
            yield [list(b) for b in blocks]
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1, blocks)
            b.pop()
        blocks.append([i])
        yield from rec(i + 1, blocks)
        blocks.pop()

    yield from rec(0, [])


def bell(n: int) -> int:
    """Bell numbers by the triangle recurrence (independent of the enumerator)."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def _partition_label(blocks) -> str:
    return "".join("{" + ",".join(map(str, b)) + "}" for b in blocks)


def _minimal_projections(A: ConcreteAlgebra) -> list[np.ndarray]:
    """Minimal projections of a commutative algebra, ordered by first support index."""
    projs = list(A.blocks.projections)
    key = lambda p: int(np.argmax(np.abs(np.diag(p)) > 0.5))
    return sorted(projs, key=key)


# lattice operations ------------------------------------------------------------------------


def meet(C: ConcreteAlgebra, D: ConcreteAlgebra) -> ConcreteAlgebra:
    """C n D as subspaces (automatically a *-algebra)."""
    m = np.concatenate([C._flat.T, -D._flat.T], axis=1)
    ker = nullspace(m)
    vecs = (ker[:, : C.dim] @ C._flat).reshape(-1, C.N, C.N)
    return ConcreteAlgebra.from_span(vecs)


def join(C: ConcreteAlgebra, D: ConcreteAlgebra) -> ConcreteAlgebra:
    """C*(C, D)."""
    return span_closure(np.concatenate([C.generators(), D.generators()]), C.N)


def _leq(a: ConcreteAlgebra, b: ConcreteAlgebra) -> bool:
    return a.dim <= b.dim and b.contains_algebra(a, tol=1e-8)


def covering_edges(algs: list) -> list[tuple[int, int]]:
    n = len(algs)
    less = [[i != j and _leq(algs[i], algs[j]) for j in range(n)] for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(n):
            if less[i][j] and not any(less[i][k] and less[k][j] for k in range(n)):
                edges.append((i, j))
    return edges


# candidate sources ---------------------------------------------------------------------


def _partition_nodes(model, B, A):
    minp = _minimal_projections(A)
    out = []
    for blocks in set_partitions(len(minp)):
        sums = np.array([sum(minp[i] for i in b) for b in blocks])
        out.append((_partition_label(blocks), ConcreteAlgebra.from_span(sums)))
    return out


def _subgroup_nodes(model):
    from .models import _subgroup_label

    out = []
    for k in model.subgroup_lattice():
        alg = ConcreteAlgebra.from_span([model.regular[g] for g in sorted(k)])
        out.append((_subgroup_label(k), alg))
    return out


def range_projection(x: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((x + dag(x)) / 2)
    keep = v[:, w > 1e-8 * max(1.0, np.max(np.abs(w)))]
    return keep @ dag(keep)


def _jones_projection_candidates(ctx, gen, count):
    """Projections p >= e_1 in B' n A_1, seeded: ranges of e_1 + sum_{l in S} l e_1 l*
    over random subsets S of the quasi-basis, and e_1 plus spectral partial sums of
    random Hermitian elements of (1 - e_1)(B' n A_1)(1 - e_1)."""
    e1 = ctx.e(1)
    lam = ctx.lam
    Bc1 = ctx.B_commutant(1)
    one = np.eye(ctx.N)
    for i in range(count):
        if i % 2 == 0 and len(lam) > 1:
            S = gen.choice(len(lam), size=int(gen.integers(1, len(lam) + 1)), replace=False)
            s = e1 + sum(lam[j] @ e1 @ dag(lam[j]) for j in S)
            p = range_projection(Bc1.project(s))
        else:
            h = (one - e1) @ Bc1.random_element(gen, hermitian=True) @ (one - e1)
            w, v = np.linalg.eigh(h)
            v = v[:, np.argsort(-np.abs(w))]
            v = v[:, : int(np.sum(np.abs(w) > 1e-9))]
            m = int(gen.integers(0, v.shape[1] + 1))
            p = e1 + v[:, :m] @ dag(v[:, :m])
        yield p


def _unlift(ctx, C: ConcreteAlgebra, pair) -> np.ndarray:
    """Express elements of the lifted A in the model's ambient."""
    base = ctx.base.reshape(len(ctx.base), -1)
    coef, *_ = np.linalg.lstsq(base.T, C._flat.T, rcond=None)
    return np.tensordot(coef.T, pair.big.basis, axes=([1], [0]))


def _search_nodes(model, seed, count):
    """Accept a candidate p when it is the Jones projection of C = {p}' n A."""
    from .tower import basic_construction

    pair = model.pair
    ctx = basic_construction(pair, minimal_expectation(pair))
    gen = rng(seed)
    out, seen = [], []
    for p in _jones_projection_candidates(ctx, gen, count):
        if any(fro(p - s) < DEDUP for s in seen):
            continue
        seen.append(p)
        C = relative_commutant(ConcreteAlgebra.from_span(np.array([p])), ctx.A, check=False).algebra
        if not C.contains_algebra(ctx.B, tol=1e-8):
            continue
        eC = ctx.jones_projection(0, C)
        if fro(eC - p) <= 1e-8 * max(1.0, fro(p)):
            out.append(ConcreteAlgebra.from_span(_unlift(ctx, C, pair)))
    return out


# enumeration ---------------------------------------------------------------------------------


def _dedup_insert(nodes: list, label: str, alg: ConcreteAlgebra, index: "_SpanIndex | None" = None) -> bool:
    if index is not None:
        if index.find(alg) is not None:
            return False
        index.add(alg)
    elif any(a.dim == alg.dim and a.distance(alg) < DEDUP for _, a in nodes):
        return False
    nodes.append((label, alg))
    return True


def _closure_sweep(nodes: list, cap: int, warn: list, ops: dict | None = None) -> None:
    """Close under pairwise meet and join until stable."""
    done = set()
    changed = True
    k = 0
    index = _SpanIndex()
    for _, a in nodes:
        index.add(a)
    while changed:
        changed = False
        n = len(nodes)
        for i in range(n):
            for j in range(i + 1, n):
                if (i, j) in done:
                    continue
                done.add((i, j))
                a, b = nodes[i][1], nodes[j][1]
                if _leq(a, b) or _leq(b, a):
                    continue
                res = (meet(a, b), join(a, b))
                if ops is not None:
                    ops[id(a), id(b)] = res
                for alg in res:
                    if len(nodes) >= cap:
                        msg = f"node cap {cap} reached during the closure sweep"
                        if msg not in warn:
                            warn.append(msg)
                            warnings.warn(msg, ExhaustionWarning)
                        return
                    k += 1
                    if _dedup_insert(nodes, f"N{k}", alg, index):
                        changed = True


def enumerate_intermediates(model, seed: int | None = None, cap: int = NODE_CAP,
                            candidates: int = 5000, indices: bool = True) -> IntermediateLattice:
    pair = model.pair
    B, A = pair.small, pair.big
    warn: list[str] = []
    ops: dict = {}
    nodes: list[tuple[str, ConcreteAlgebra]] = []
    commutative_top = A.center.dim == A.dim
    if B.dim == A.dim:
        strategy = "trivial"
        nodes = [("B", B)]
    elif model.regular is not None and B.dim == 1 and commutative_top and A.dim <= PARTITION_MAX_DIM:
        strategy = "exact:set_partitions"
        nodes = _partition_nodes(model, B, A)
    elif model.regular is not None:
        strategy = "subgroups+closure"
        nodes = _subgroup_nodes(model)
    else:
        strategy = "heuristic:jones_projection_search+closure"
        nodes = [("B", B), ("A", A)]
        for label, C in model.intermediates():
            _dedup_insert(nodes, label, C)
        for C in _search_nodes(model, seed, candidates):
            _dedup_insert(nodes, "S", C)
    if len(nodes) > cap:
        msg = f"node cap {cap} reached before the closure sweep"
        warn.append(msg)
        warnings.warn(msg, ExhaustionWarning)
        nodes = nodes[:cap]
    elif strategy != "trivial":
        _closure_sweep(nodes, cap, warn, ops)
    for label, alg in nodes:
        if not (alg.contains_algebra(B, tol=1e-8) and A.contains_algebra(alg, tol=1e-8)):
            raise RuntimeError(f"node {label} is not an intermediate algebra")
    # canonical labels and order
    out = []
    for label, alg in nodes:
        if alg.dim == B.dim:
            label = "B"
        elif alg.dim == A.dim:
            label = "A"
        out.append(Node(label, alg))
    _relabel(out)
    out.sort(key=lambda n: (n.dim, n.label))
    algs = [n.alg for n in out]
    edges = covering_edges(algs)
    bottom = [i for i, n in enumerate(out) if n.dim == B.dim]
    for i, j in edges:
        if i in bottom and out[j].dim != A.dim:
            out[j].minimal = True
    if indices:
        for n in out:
            n.index_top = _index(n.alg, A)
            n.index_bottom = _index(B, n.alg)
    return IntermediateLattice(model.label, out, edges, strategy, warn, _ops=ops)


def _relabel(nodes: list) -> None:
    """Heuristic discoveries get labels from a basis-independent fingerprint."""
    fresh = [n for n in nodes if n.label.startswith("N") or n.label == "S"]
    fresh.sort(key=lambda n: (n.dim, _fingerprint(n.alg)))
    for i, n in enumerate(fresh):
        n.label = f"P{n.dim}.{i}"


def _fingerprint(alg: ConcreteAlgebra) -> tuple:
    P = alg._flat.T @ alg._flat.conj()  # orthogonal projector onto the span
    return tuple(np.round(np.abs(np.diag(P)), 6))


def _index(small, big) -> float:
    if small.dim == big.dim:
        return 1.0
    return float(minimal_expectation(InclusionPair(small, big)).index_norm)


def node_checks(lat: IntermediateLattice, pair: InclusionPair, tol: float = 1e-8) -> list[Check]:
    """Per node: B <= P <= A, E^P_B o E^A_P = E^A_B for the minimal expectations,
    and index multiplicativity; flagged on scalar indices of both legs."""
    B, A = pair.small, pair.big
    EAB = minimal_expectation(pair)
    X = A.basis
    ref = EAB(X)
    out = []
    for n in lat.nodes:
        P = n.alg
        nested = max(P.residual(b) for b in B.basis) + max(A.residual(p) for p in P.basis)
        out.append(check(f"{n.label}:nested", nested, tol, ref="intermediate-lattice"))
        if P.dim in (B.dim, A.dim):
            continue
        EAP = minimal_expectation(InclusionPair(P, A))
        EPB = minimal_expectation(InclusionPair(B, P))
        scal = EAP.scalar_index and EPB.scalar_index
        res = fro(EPB(EAP(X)) - ref) / max(1.0, fro(ref))
        out.append(check(f"{n.label}:expectation_compatible", res, tol, scal, "intermediate-expectation"))
        out.append(check(f"{n.label}:index_multiplicative", abs(EAB.index_norm - EAP.index_norm * EPB.index_norm),
                         1e-6, scal, "index-multiplicativity"))
    return out


def lattice_law_residual(lat: IntermediateLattice) -> int:
    """Number of pairs whose meet or join is missing from the node set."""
    missing = 0
    for i in range(len(lat.nodes)):
        for j in range(i + 1, len(lat.nodes)):
            a, b = lat.nodes[i].alg, lat.nodes[j].alg
            if _leq(a, b) or _leq(b, a):
                continue  # meet and join are a and b themselves
            res = lat._ops.get((id(a), id(b))) or lat._ops.get((id(b), id(a))) or (meet(a, b), join(a, b))
            for alg in res:
                if lat.find(alg) is None:
                    missing += 1
    return missing


# bounds -----------------------------------------------------------------------------------


def bound_value(index: float) -> float:
    """log of min{9^{I^2}, (I^2)^{I^2}}."""
    i2 = index * index
    return min(i2 * math.log(9), i2 * math.log(i2)) if i2 > 1 else 0.0


def bound_check(lat: IntermediateLattice, index: float, dim_BA1: int,
                irreducible: bool = False, simple: bool = False) -> list[Check]:
    n = len(lat.nodes)
    m = len(lat.minimal_nodes())
    out = [
        check("lattice_count_bound", max(0.0, math.log(n) - bound_value(index)), 0.0, irreducible,
              "intermediate-count-bound"),
        check("minimal_count_bound", max(0.0, math.log(max(m, 1)) - dim_BA1 * math.log(3)), 0.0, irreducible,
              "intermediate-count-bound"),
    ]
    if 1 + 1e-9 < index < 4 - 1e-9:
        # simple pairs of index below 4 have no proper intermediates
        out.append(check("index_rigidity_no_intermediates", float(n - 2), 0.0, simple, "index-rigidity"))
    return out


# Hasse diagram ------------------------------------------------------------------------------


def hasse(lat: IntermediateLattice) -> str:
    lines = ["digraph lattice {", "  rankdir=BT;"]
    for i, n in enumerate(lat.nodes):
        idx = "?" if n.index_top is None else f"{n.index_top:.6g}"
        lines.append(f'  n{i} [label="{n.label} (dim {n.dim}, [A:P]0 = {idx})"];')
    for i, j in sorted(lat.edges):
        lines.append(f"  n{i} -> n{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# Kadison-Kastler distance ---------------------------------------------------------------------


@dataclass
class KKReport:
    lower: float
    upper: float
    nested_equal: bool | None  # verdict of the nested rule when it applies


def _ball_distance(b: np.ndarray, C: ConcreteAlgebra, iters: int = 200) -> tuple[float, float]:
    """Bounds on inf{|b - c| : c in C, |c| <= 1}; b has operator norm 1."""
    N = len(b)
    lower = fro(b - C.project(b)) / math.sqrt(N)
    c = C.coords(b)
    best = np.inf
    step0 = 0.5
    for it in range(iters):
        x = C.from_coords(c)
        s = opnorm(x)
        if s > 1:
            c = c / s
            x = x / s
        r = b - x
        u, sv, vh = np.linalg.svd(r)
        best = min(best, sv[0])
        g = np.outer(u[:, 0], vh[0])  # subgradient of |r| in r
        grad = -C.coords(g)
        nrm = np.linalg.norm(grad)
        if nrm < 1e-14:
            break
        c = c - step0 / math.sqrt(it + 1) * grad / nrm
    return lower, min(best, 1.0)


def unitary_net(X: ConcreteAlgebra, gen: np.random.Generator, samples: int = 24) -> np.ndarray:
    """Points of the unit sphere of X: the orthonormal basis scaled to norm 1,
    the sign unitaries sum +-z_i over minimal central projections, and seeded
    unitaries exp(ih).  dist(., C_1) is convex, so its supremum over the unit
    ball is attained on unitaries (the ball is their closed convex hull)."""
    pts = [x / opnorm(x) for x in X.basis]
    zs = X.blocks.projections
    if len(zs) <= 10:
        for signs in np.ndindex(*(2,) * len(zs)):
            pts.append(sum((1 - 2 * s) * z for s, z in zip(signs, zs)))
    for _ in range(samples):
        w, v = np.linalg.eigh(X.random_element(gen, hermitian=True) * 2)
        pts.append((v * np.exp(1j * w)) @ dag(v))
    return np.array(pts)


def kk_distance_upper(B: ConcreteAlgebra, C: ConcreteAlgebra, iters: int = 200, samples: int = 24,
                      seed: int | None = None) -> KKReport:
    """Bounds for the Kadison-Kastler distance over a net of the unit spheres.
    ``lower`` is a true lower bound of d(B, C); ``upper`` bounds the distance
    attained on the net (and is capped by the trivial bound 1)."""
    gen = rng(seed)
    lo, up = 0.0, 0.0
    for X, Y in ((B, C), (C, B)):
        for x in unitary_net(X, gen, samples):
            l, u = _ball_distance(x, Y, iters)
            lo, up = max(lo, l), max(up, u)
    nested = None
    if up < 1 and (_leq(B, C) or _leq(C, B)):
        nested = B.dim == C.dim
    return KKReport(float(lo), float(up), nested)


# full lattice report --------------------------------------------------------------------------


def rigidity_candidates(model, lat: IntermediateLattice) -> list[tuple[str, ConcreteAlgebra]]:
    """Minimal intermediates used for the angle rigidity check: the atoms of the
    subgroup lattice for group models, the minimal lattice nodes otherwise."""
    if model.regular is None:
        return [(n.label, n.alg) for n in lat.minimal_nodes()]
    ints = model.intermediates()
    algs = [a for _, a in ints]
    return [(l, a) for l, a in ints if not any(b.dim < a.dim and _leq(b, a) for b in algs)]


def lattice_report(model, seed: int | None = None, cap: int = NODE_CAP, candidates: int = 5000):
    """Enumerate, then run the node, law, bound and rigidity checks."""
    from .angles import rigidity_check
    from .fourier import FourierContext
    from .tower import jones_tower

    lat = enumerate_intermediates(model, seed=seed, cap=cap, candidates=candidates)
    pair = model.pair
    E = minimal_expectation(pair)
    tw = jones_tower(pair, 1)
    fc = FourierContext(tw)
    simple = pair.small.center.dim == 1 and pair.big.center.dim == 1
    checks = node_checks(lat, pair)
    checks.append(check("lattice_laws", float(lattice_law_residual(lat)), 0.0, ref="intermediate-lattice"))
    checks += bound_check(lat, E.index_norm, tw.B_commutant(1).dim, fc.irreducible_data, simple)
    minimal = [(l, tw.lift_algebra(a)) for l, a in rigidity_candidates(model, lat)]
    checks += rigidity_check(fc, minimal)
    return lat, checks
