"""Interior and exterior angles between intermediate algebras.

A quadruple (B, C, D, A) is realized at some level j of a built tower:
B = A_{j-1}, A = A_j, with the Jones projections e_C, e_D in A_{j+1} and the
A-valued inner product <x, y> = E_{j+1}(x* y).  Level 1 is the dual
quadruple (A, C_1, D_1, A_1) of a level-0 quadruple.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biproj import basic_span
from .expect import minimal_expectation, projection_expectation, quasi_basis
from .fourier import FourierContext, _member_residual, gamma0
from .numkernel import TOL_ROUNDING, Check, check, dag, fro, nullspace, opnorm
from .staralg import ConcreteAlgebra, InclusionPair, NotNested, relative_commutant

TOL_ANGLE = 1e-7
CLAMP = 1e-10


class DegenerateLeg(ValueError):
    pass


class AngleOutOfRange(ValueError):
    pass


@dataclass
class Quadruple:
    level: int
    B: ConcreteAlgebra
    C: ConcreteAlgebra
    D: ConcreteAlgebra
    A: ConcreteAlgebra
    e_B: np.ndarray
    e_C: np.ndarray
    e_D: np.ndarray
    index: dict  # keys AB, CB, DB, AC, AD
    scalar_indices: bool
    irreducible: bool
    label: str = ""
    _next: dict = field(default_factory=dict, repr=False)

    @property
    def r(self) -> float:
        return self.index["CB"] / self.index["AD"]

    @property
    def r_alt(self) -> float:
        return self.index["DB"] / self.index["AC"]


def _index(fc: FourierContext, small: ConcreteAlgebra, big: ConcreteAlgebra) -> tuple[float, bool]:
    if small.dim == big.dim:
        return 1.0, True

    def make():
        E = minimal_expectation(InclusionPair(small, big))
        return small, big, E.index_norm, E.scalar_index

    # the algebras are kept in the cache, so their ids stay unique
    return fc._get(("index", id(small), id(big)), make)[2:]


def _basic(fc: FourierContext, A: ConcreteAlgebra, C: ConcreteAlgebra, e_C: np.ndarray, name: str):
    return fc._get(("basic", id(A), id(C)), lambda: (A, C, basic_span(A, e_C, name)))[2]


def quadruple(fc: FourierContext, C: ConcreteAlgebra, D: ConcreteAlgebra, level: int = 0,
              label: str = "") -> Quadruple:
    """Quadruple (A_{level-1}, C, D, A_level); C, D already in the tower ambient."""
    t = fc.tower
    t.need(level + 1)
    B, A = t.alg(level - 1), t.alg(level)
    for X in (C, D):
        if not (X.contains_algebra(B, tol=1e-8) and A.contains_algebra(X, tol=1e-8)):
            raise NotNested(f"{X.name or 'leg'} is not between the ends of the quadruple")
    idx, scal = {}, True
    for key, (s, b) in {"AB": (B, A), "CB": (B, C), "DB": (B, D), "AC": (C, A), "AD": (D, A)}.items():
        idx[key], ok = _index(fc, s, b)
        scal = scal and ok
    e_C = fc._get(("jones", level, id(C)), lambda: (C, t.jones_projection(level, C)))[1]
    e_D = fc._get(("jones", level, id(D)), lambda: (D, t.jones_projection(level, D)))[1]
    return Quadruple(level, B, C, D, A, t.e(level + 1), e_C, e_D, idx, scal, fc.irreducible_data, label)


def dual(fc: FourierContext, q: Quadruple) -> Quadruple:
    """(A, C_1, D_1, A_1) with C_1 = span A e_C A."""
    if "dual" not in q._next:
        C1 = _basic(fc, q.A, q.C, q.e_C, "C1")
        D1 = _basic(fc, q.A, q.D, q.e_D, "D1")
        q._next["dual"] = quadruple(fc, C1, D1, q.level + 1, q.label + "~")
    return q._next["dual"]


# angles ----------------------------------------------------------------------------


@dataclass
class AngleReport:
    cos: float | None
    angle: float | None
    method: str = "module_inner_product"
    cos_trace: float | None = None
    irreducible: bool = False

    @property
    def undefined(self) -> bool:
        return self.cos is None


def _clamp(c: float) -> float:
    if c < -CLAMP or c > 1 + CLAMP:
        raise AngleOutOfRange(f"cosine {c:.3e} outside [0, 1]")
    return float(min(max(c, 0.0), 1.0))


def module_cosine(fc: FourierContext, q: Quadruple) -> float:
    """|<e_C - e_B, e_D - e_B>_A| / (|e_C - e_B|_A |e_D - e_B|_A)."""
    E = fc.tower.E(q.level + 1)
    x, y = q.e_C - q.e_B, q.e_D - q.e_B
    nx = opnorm(E(dag(x) @ x)) ** 0.5
    ny = opnorm(E(dag(y) @ y)) ** 0.5
    if nx < 1e-9 or ny < 1e-9:
        raise DegenerateLeg("a leg equals the bottom algebra")
    return _clamp(opnorm(E(dag(x) @ y)) / (nx * ny))


def trace_cosine(fc: FourierContext, q: Quadruple) -> float:
    """(tr(e_C e_D) - tau) / sqrt(tr e_C - tau) sqrt(tr e_D - tau)."""
    tau = fc.tau
    a = fc.tr(q.e_C).real - tau
    b = fc.tr(q.e_D).real - tau
    if a < 1e-12 or b < 1e-12:
        raise DegenerateLeg("a leg equals the bottom algebra")
    return (fc.tr(q.e_C @ q.e_D).real - tau) / np.sqrt(a * b)


def interior_angle(fc: FourierContext, q: Quadruple) -> AngleReport:
    try:
        c = module_cosine(fc, q)
    except DegenerateLeg:
        return AngleReport(None, None, irreducible=q.irreducible)
    ct = trace_cosine(fc, q)
    return AngleReport(c, float(np.arccos(c)), cos_trace=float(ct), irreducible=q.irreducible)


def exterior_angle(fc: FourierContext, q: Quadruple) -> AngleReport:
    """Interior angle of the dual quadruple."""
    return interior_angle(fc, dual(fc, q))


def _legs(q: Quadruple) -> tuple[float, float, float, float]:
    i = q.index
    vals = (i["AC"] - 1, i["AD"] - 1, i["CB"] - 1, i["DB"] - 1)
    if min(vals) < 1e-9:
        raise DegenerateLeg("an index equals 1")
    return tuple(np.sqrt(v) for v in vals)


def relation_rhs(q: Quadruple, cos_beta: float) -> float:
    """r sqrt([A:C]-1)sqrt([A:D]-1)/(sqrt([C:B]-1)sqrt([D:B]-1)) cos b + (r-1)/(...)."""
    ac, ad, cb, db = _legs(q)
    r = q.r
    return r * ac * ad / (cb * db) * cos_beta + (r - 1) / (cb * db)


def relation_solve_beta(q: Quadruple, cos_alpha: float) -> float:
    """Invert the alpha-beta relation for cos beta."""
    ac, ad, cb, db = _legs(q)
    r = q.r
    return (cos_alpha - (r - 1) / (cb * db)) * cb * db / (r * ac * ad)


def alpha_beta_relation_residual(fc: FourierContext, q: Quadruple) -> float | None:
    a, b = interior_angle(fc, q), exterior_angle(fc, q)
    if a.undefined or b.undefined:
        return None
    try:
        return abs(a.cos - relation_rhs(q, b.cos))
    except DegenerateLeg:
        return None


def duality_residual(fc: FourierContext, q: Quadruple) -> tuple[float | None, str]:
    """|cos alpha(C, D) - cos beta(C_1, D_1)| where beta(C_1, D_1) is the exterior
    angle of the dual quadruple.  Direct at depth >= 3; otherwise through the
    alpha-beta relation of the dual quadruple (route ``relation``)."""
    a = interior_angle(fc, q)
    if a.undefined:
        return None, "undefined"
    qd = dual(fc, q)
    if fc.depth >= q.level + 3:
        bb = exterior_angle(fc, qd)
        return (None if bb.undefined else abs(a.cos - bb.cos)), "direct"
    b = exterior_angle(fc, q)  # = alpha of the dual quadruple
    if b.undefined:
        return None, "undefined"
    try:
        cb = relation_solve_beta(qd, b.cos)
    except DegenerateLeg:
        return None, "undefined"
    return abs(a.cos - cb), "relation"


# auxiliary operators -----------------------------------------------------------------


def _tp_quasi_basis(fc: FourierContext, small, big, seed=None) -> np.ndarray:
    return quasi_basis(projection_expectation(InclusionPair(small, big), fc.tower.rho), seed=seed)


def _pq(fc: FourierContext, q: Quadruple, seed=None) -> tuple[np.ndarray, np.ndarray]:
    gam = _tp_quasi_basis(fc, q.B, q.C, seed)
    dlt = _tp_quasi_basis(fc, q.B, q.D, None if seed is None else seed + 1)
    p = np.zeros_like(q.e_B)
    qq = np.zeros_like(q.e_B)
    for g in gam:
        for d in dlt:
            p = p + g @ d @ q.e_B @ dag(d) @ dag(g)
            qq = qq + d @ g @ q.e_B @ dag(g) @ dag(d)
    return p, qq


def pq_operators(fc: FourierContext, q: Quadruple) -> tuple[np.ndarray, np.ndarray]:
    """p(C, D) = sum g_i d_j e_B d_j* g_i*, q(C, D) = sum d_j g_i e_B g_i* d_j*."""
    if q.level != 0:
        raise ValueError("p and q are built for level-0 quadruples")
    return _pq(fc, q)


def range_projection(x: np.ndarray, cutoff: float = 1e-8) -> np.ndarray:
    h = (x + dag(x)) / 2
    w, v = np.linalg.eigh(h)
    keep = v[:, w > cutoff * max(1.0, np.max(np.abs(w)))]
    return keep @ dag(keep)


def meet(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Projection onto the intersection of the ranges."""
    n = len(p)
    one = np.eye(n)
    ker = nullspace(np.concatenate([one - p, one - q]))
    if ker.size == 0:
        return np.zeros_like(p)
    # kernel rows are orthonormal
    return ker.T @ ker.conj()


def join(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return range_projection(p + q)


def _rel(a, b) -> float:
    return fro(a - b) / max(1.0, fro(b))


def pq_suite(fc: FourierContext, q: Quadruple, seed: int = 0x9A, tol: float = TOL_ANGLE) -> list[Check]:
    t = fc.tower
    irr = q.irreducible
    p, qq = pq_operators(fc, q)
    p2, q2 = _pq(fc, q, seed)
    tval = q.index["AB"] * fc.tr(q.e_C @ q.e_D).real
    C1 = _basic(fc, q.A, q.C, q.e_C, "C1")
    D1 = _basic(fc, q.A, q.D, q.e_D, "D1")
    CD1 = relative_commutant(q.C, D1, check=False).algebra
    DC1 = relative_commutant(q.D, C1, check=False).algebra
    out = [
        check("pq_basis_independence", max(_rel(p, p2), _rel(qq, q2)), tol, irr, "auxiliary-operators"),
        check("p_in_C'nD1", _member_residual(CD1, p), tol, irr, "auxiliary-operators"),
        check("q_in_D'nC1", _member_residual(DC1, qq), tol, irr, "auxiliary-operators"),
        check("p_eD", _rel(p @ q.e_D, tval * q.e_D), tol, irr, "auxiliary-operator-multiple"),
        check("q_eC", _rel(qq @ q.e_C, tval * q.e_C), tol, irr, "auxiliary-operator-multiple"),
        check("p_eC", _rel(p @ q.e_C, tval * q.e_C), tol, irr, "auxiliary-operator-multiple"),
        check("q_eD", _rel(qq @ q.e_D, tval * q.e_D), tol, irr, "auxiliary-operator-multiple"),
        check("p_squared", _rel(p @ p, tval * p), tol, irr, "auxiliary-operator-multiple"),
        check("q_squared", _rel(qq @ qq, tval * qq), tol, irr, "auxiliary-operator-multiple"),
        check("trace_p", abs(fc.tr(p).real - q.r), tol, irr, "auxiliary-operator-trace"),
        check("trace_q", abs(fc.tr(qq).real - q.r), tol, irr, "auxiliary-operator-trace"),
    ]
    jn = join(q.e_C, q.e_D)
    for name, x in (("p", p), ("q", qq)):
        supp = range_projection(x)
        out.append(check(f"support_{name}_dominates_join", opnorm(jn - supp @ jn), tol, irr,
                         "auxiliary-operator-support"))
    Bc1 = t.B_commutant(1)
    Cc1 = relative_commutant(q.C, t.alg(1), check=False).algebra
    E_c = projection_expectation(InclusionPair(Cc1, Bc1), t.rho)
    out.append(check("p_commutant_formula", _rel(p, q.index["CB"] * E_c(q.e_D)), tol, irr, "auxiliary-operator-formula"))
    E_D1 = projection_expectation(InclusionPair(D1, t.alg(1)), t.rho)
    E_C1 = projection_expectation(InclusionPair(C1, t.alg(1)), t.rho)
    out.append(check("p_dual_formula", _rel(p, q.index["DB"] * E_D1(q.e_C)), tol, irr, "auxiliary-operator-formula"))
    out.append(check("q_dual_formula", _rel(qq, q.index["CB"] * E_C1(q.e_D)), tol, irr, "auxiliary-operator-formula"))
    if fc.depth >= 2:
        out.append(check("gamma0_p_is_q", _rel(gamma0(fc, p), qq), tol, irr, "auxiliary-operators-mirror"))
        out.append(check("gamma0_q_is_p", _rel(gamma0(fc, qq), p), tol, irr, "auxiliary-operators-mirror"))
    return out


# commuting squares, rigidity -----------------------------------------------------------


def _square_residual(fc: FourierContext, q: Quadruple) -> float:
    rho = fc.tower.rho
    EC = projection_expectation(InclusionPair(q.C, q.A), rho)
    ED = projection_expectation(InclusionPair(q.D, q.A), rho)
    EB = projection_expectation(InclusionPair(q.B, q.A), rho)
    X = q.A.basis
    eb = EB(X)
    return max(_rel(EC(ED(X)), eb), _rel(ED(EC(X)), eb))


@dataclass
class SquareReport:
    tag: str
    commuting_residual: float
    cocommuting_residual: float | None
    checks: list = field(default_factory=list)


def commuting_square_check(fc: FourierContext, q: Quadruple, tol: float = 1e-8) -> SquareReport:
    res = _square_residual(fc, q)
    commuting = res <= tol
    co_res = None
    if fc.depth >= q.level + 2:
        co_res = _square_residual(fc, dual(fc, q))
    cocommuting = co_res is not None and co_res <= tol
    tag = {(True, True): "both", (True, False): "commuting", (False, True): "cocommuting"}.get(
        (commuting, cocommuting), "neither")
    out = []
    a = interior_angle(fc, q)
    if not a.undefined:
        # commuting square forces alpha = pi/2; the converse is claimed for simple pairs
        if commuting:
            out.append(check("commuting_implies_right_angle", a.cos, tol, ref="commuting-square-angle"))
        else:
            out.append(check("right_angle_implies_commuting", 0.0 if a.cos > tol else res, tol, q.irreducible,
                             "commuting-square-angle"))
    if co_res is not None:
        b = exterior_angle(fc, q)
        if not b.undefined:
            if cocommuting:
                out.append(check("cocommuting_implies_right_angle", b.cos, tol, ref="commuting-square-angle"))
            else:
                out.append(check("right_angle_implies_cocommuting", 0.0 if b.cos > tol else co_res, tol,
                                 q.irreducible, "commuting-square-angle"))
    return SquareReport(tag, res, co_res, out)


def rigidity_check(fc: FourierContext, minimal, tol: float = TOL_ANGLE) -> list[Check]:
    """Pairwise interior angles of minimal intermediates exceed pi/3, with the
    inequalities used on the way.  ``minimal`` holds (label, algebra) pairs."""
    out: list[Check] = []
    minimal = list(minimal)
    for i in range(len(minimal)):
        for j in range(i + 1, len(minimal)):
            (lc, C), (ld, D) = minimal[i], minimal[j]
            q = quadruple(fc, C, D, label=f"{lc}|{ld}")
            irr = q.irreducible
            a = interior_angle(fc, q)
            name = q.label
            if a.undefined:
                out.append(check(f"{name}:angle_above_pi_over_3", None, 0.0, irr, "minimal-rigidity"))
                continue
            out.append(check(f"{name}:angle_above_pi_over_3", max(0.0, a.cos - 0.5 + 1e-12), 0.0, irr,
                             "minimal-rigidity"))
            eC, eD = q.e_C, q.e_D
            jn, mt = join(eC, eD), meet(eC, eD)
            tr = lambda x: fc.tr(x).real
            out.append(check(f"{name}:join_trace", abs(tr(jn) - tr(eC) - tr(eD) + tr(mt)), tol,
                             ref="projection-join-trace"))
            out.append(check(f"{name}:meet_is_e_B", _rel(mt, q.e_B), tol, irr, "minimal-rigidity"))
            p, _ = pq_operators(fc, q)
            out.append(check(f"{name}:support_trace_bound", max(0.0, tr(jn) - tr(range_projection(p))), tol, irr,
                             "minimal-rigidity"))
            tval = q.index["AB"] * tr(eC @ eD)
            bound = (tval - 1) / np.sqrt((q.index["CB"] - 1) * (q.index["DB"] - 1))
            out.append(check(f"{name}:final_bound", max(0.0, bound - 0.5 + 1e-12), 0.0, irr, "minimal-rigidity"))
    return out


def angle_suite(fc: FourierContext, quads, tol: float = TOL_ANGLE) -> list[Check]:
    """Angles, relations and p/q checks over (label, C, D) triples."""
    out: list[Check] = []
    for label, C, D in quads:
        q = quadruple(fc, C, D, label=label)
        qs = quadruple(fc, D, C, label=label)
        irr = q.irreducible
        pre = f"{label}:"
        a, as_ = interior_angle(fc, q), interior_angle(fc, qs)
        if a.undefined:
            out.append(check(pre + "interior_angle", None, tol, ref="interior-angle"))
            continue
        out.append(check(pre + "r_consistent", abs(q.r - q.r_alt), TOL_ROUNDING, irr, "quadruple-ratio"))
        out.append(check(pre + "angle_symmetry", abs(a.cos - as_.cos), 1e-10, ref="interior-angle"))
        out.append(check(pre + "angle_methods_agree", abs(a.cos - a.cos_trace), tol, irr, "angle-trace-formula"))
        same = C.same_as(D, tol=1e-8)
        out.append(check(pre + "zero_angle_iff_equal", 0.0 if (a.cos > 1 - 1e-9) == same else 1.0, 0.5,
                         irr or same, "zero-angle"))
        if fc.depth >= 2:
            b = exterior_angle(fc, q)
            bs = exterior_angle(fc, qs)
            if not b.undefined:
                out.append(check(pre + "exterior_symmetry", abs(b.cos - bs.cos), 1e-10, ref="exterior-angle"))
            res = alpha_beta_relation_residual(fc, q)
            out.append(check(pre + "alpha_beta_relation", res, tol, q.scalar_indices and irr, "angle-relation"))
            if abs(q.r - 1) < 1e-9 and not b.undefined:
                out.append(check(pre + "parallelogram_equal_angles", abs(a.cos - b.cos), tol, irr,
                                 "parallelogram-angles"))
            d, route = duality_residual(fc, q)
            out.append(check(pre + f"duality[{route}]", d, tol, irr, "angle-duality"))
        sq = commuting_square_check(fc, q)
        for c in sq.checks:
            c.name = pre + c.name
        out += sq.checks
        if sq.tag in ("commuting", "both") and fc.depth >= 2:
            b = exterior_angle(fc, q)
            if not b.undefined:
                try:
                    ac, ad, _, _ = _legs(q)
                    pred = (1 / q.r - 1) / (ac * ad)
                    out.append(check(pre + "commuting_exterior_formula", abs(b.cos - pred), tol, irr,
                                     "commuting-square-exterior"))
                except DegenerateLeg:
                    pass
        for c in pq_suite(fc, q, tol=tol):
            c.name = pre + c.name
            out.append(c)
    return out
