"""Biunitaries, biprojections and the intermediate algebras they encode.

Everything here lives in a built tower (through a ``FourierContext``).  The
identities were derived for irreducible pairs; each check records the
``irreducible_data`` flag so that a miss on a reducible pair is reported as
``hypothesis_not_met`` rather than a failure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expect import minimal_expectation, projection_expectation, quasi_basis, watatani_index
from .fourier import FourierContext, _member_residual, fourier, gamma0, gamma1
from .numkernel import TOL_OPERATOR, TOL_PROJECTION, TOL_ROUNDING, Check, check, dag, fro, opnorm
from .staralg import ConcreteAlgebra, InclusionPair, NotNested, relative_commutant, span_closure

TAGS = ("biunitary", "biprojection", "bipartial_isometry", "none")


class NotBiprojection(ValueError):
    pass


@dataclass
class BiElement:
    k: int
    x: np.ndarray
    fourier_value: np.ndarray
    tag: str
    t: float | None = None
    f: np.ndarray | None = None  # the projection F(x)/t, snapped


def _rel(a, b) -> float:
    return fro(a - b) / max(1.0, fro(b))


def projection_defect(p: np.ndarray) -> float:
    """max(|p - p*|, |p^2 - p|) relative to max(1, |p|)."""
    s = max(1.0, opnorm(p))
    return max(opnorm(p - dag(p)), opnorm(p @ p - p)) / s


def snap_projection(p: np.ndarray, tol: float = TOL_PROJECTION) -> np.ndarray | None:
    """Round the spectrum of a near-projection to {0, 1}; None if too far."""
    h = (p + dag(p)) / 2
    if opnorm(p - h) > tol * max(1.0, opnorm(p)):
        return None
    w, v = np.linalg.eigh(h)
    r = np.round(w)
    if np.any((r != 0) & (r != 1)) or np.max(np.abs(w - r)) > tol:
        return None
    keep = v[:, r == 1]
    return keep @ dag(keep)


def _unitary_defect(u: np.ndarray) -> float:
    one = np.eye(len(u))
    return max(opnorm(dag(u) @ u - one), opnorm(u @ dag(u) - one))


def _partial_isometry_defect(x: np.ndarray) -> float:
    n = opnorm(x)
    if n == 0:
        return np.inf
    y = x / n
    return projection_defect(dag(y) @ y)


def classify(fc: FourierContext, k: int, x: np.ndarray, tol: float = TOL_PROJECTION) -> BiElement:
    x = np.asarray(x, dtype=complex)
    y = fourier(fc, k, x)
    if _unitary_defect(x) <= tol and _unitary_defect(y) <= tol:
        return BiElement(k, x, y, "biunitary")
    if opnorm(x) > tol and projection_defect(x) <= tol:
        t = opnorm(y)
        f = snap_projection(y / t, tol) if t > tol else None
        if f is not None and fro(y / t - f) <= tol * max(1.0, fro(f)):
            return BiElement(k, x, y, "biprojection", t=t, f=f)
    if _partial_isometry_defect(x) <= tol and _partial_isometry_defect(y) <= tol:
        return BiElement(k, x, y, "bipartial_isometry")
    return BiElement(k, x, y, "none")


def _as_biprojection(fc: FourierContext, e) -> BiElement:
    be = e if isinstance(e, BiElement) else classify(fc, 1, e)
    if be.tag != "biprojection" or be.k != 1:
        raise NotBiprojection(f"classified as {be.tag} at level {be.k}")
    return be


# identities for a biprojection ----------------------------------------------------


def e1_minimal_central(fc: FourierContext) -> tuple[float, float]:
    """(centrality, minimality) residuals of e_1 in B' n A_1."""
    e1 = fc.tower.e(1)
    X = fc.Bc(1).basis
    central = max(fro(x @ e1 - e1 @ x) for x in X)
    # minimal: e1 x e1 must be a multiple of e1
    n1 = fro(e1) ** 2
    minimal = 0.0
    for x in X:
        z = e1 @ x @ e1
        c = np.vdot(e1, z) / n1
        minimal = max(minimal, fro(z - c * e1) / max(1.0, fro(x)))
    return central, minimal


def scalar_relations(fc: FourierContext, e, tol: float = TOL_PROJECTION) -> list[Check]:
    """The scalar identities tying e, f = [F(e)] and t together (depth >= 2)."""
    t_ = fc.tower
    t_.need(2)
    be = _as_biprojection(fc, e)
    e, f, t = be.x, be.f, be.t
    tau = fc.tau
    irr = fc.irreducible_data
    e1, e2 = t_.e(1), t_.e(2)
    out = [
        check("e_e1", max(_rel(e @ e1, e1), _rel(e1 @ e, e1)), tol, irr, "biprojection-absorbs-e1"),
    ]
    E1e = t_.E(1)(e)
    tre = fc.tr(e).real
    out.append(check("E1_of_e_scalar", _rel(E1e, tre * np.eye(fc.N)), tol, irr, "biprojection-trace-e"))
    out.append(check("trace_e", abs(tre - t * tau ** 0.5), tol, irr, "biprojection-trace-e"))
    E2f = t_.E(2)(f)
    trf = fc.tr(f).real
    out.append(check("E2_of_f_scalar", _rel(E2f, trf * np.eye(fc.N)), tol, irr, "biprojection-trace-f"))
    out.append(check("trace_f", abs(trf - tau ** 0.5 / t), tol, irr, "biprojection-trace-f"))
    out.append(check("trace_ef", abs(fc.tr(e @ f) - tau), tol, irr, "biprojection-trace-ef"))
    out.append(check("f_e1_e2", _rel(f @ e1 @ e2, tau ** 0.5 / t * e @ e2), tol, irr, "biprojection-f-e1-e2"))
    central, minimal = e1_minimal_central(fc)
    out.append(check("e1_central", central, tol, irr, "e1-central-in-commutant"))
    out.append(check("e1_minimal", minimal, tol, irr, "e1-minimal-in-commutant"))
    return out


def exchange_check(fc: FourierContext, e, tol: float = TOL_PROJECTION) -> list[Check]:
    """ef = fe = e e_2 e / tr(e); at depth 3 also ef as a level-two biprojection."""
    t_ = fc.tower
    t_.need(2)
    be = _as_biprojection(fc, e)
    e, f = be.x, be.f
    irr = fc.irreducible_data
    ef, fe = e @ f, f @ e
    tre = fc.tr(e).real
    out = [
        check("exchange_ef_fe", _rel(ef, fe), tol, irr, "exchange-relation"),
        check("exchange_ef_ee2e", _rel(ef, e @ t_.e(2) @ e / tre), tol, irr, "exchange-relation"),
    ]
    if fc.depth >= 3:
        trf = fc.tr(f).real
        F2 = fourier(fc, 2, ef, check_in=False)
        target = f @ t_.e(3) @ f / trf
        out.append(check("fourier2_of_ef", _rel(F2, target), tol, irr, "exchange-product-fourier"))
        out.append(check("fourier2_of_ef_projection", projection_defect(target), tol, irr,
                         "exchange-product-fourier"))
        tag = classify(fc, 2, ef, tol).tag if _member_residual(fc.Bc(2), ef) <= 1e-8 else "none"
        out.append(check("ef_is_biprojection", 0.0 if tag == "biprojection" else np.inf, tol, irr,
                         "exchange-product-biprojection"))
    return out


@dataclass
class BiprojectionIntermediate:
    P: ConcreteAlgebra
    e_P: np.ndarray
    candidate: ConcreteAlgebra  # {e}' n A, reported without any claim
    candidate_contains_B: bool
    checks: list = field(default_factory=list)


def intermediate_from_biprojection(fc: FourierContext, e, tol: float = TOL_PROJECTION) -> BiprojectionIntermediate:
    """P = algebra generated by A and e, with its certificate against f = [F(e)]."""
    t_ = fc.tower
    t_.need(2)
    be = _as_biprojection(fc, e)
    e, f = be.x, be.f
    irr = fc.irreducible_data
    A, A1 = t_.A, t_.alg(1)
    P = span_closure(np.concatenate([t_.A.generators(), e[None]]), fc.N)
    P.name = "P"
    out = [
        check("A_in_P", max(P.residual(a) for a in A.basis), tol, ref="biprojection-intermediate"),
        check("P_in_A1", max(A1.residual(p) for p in P.basis), tol, ref="biprojection-intermediate"),
    ]
    fcomm = relative_commutant(ConcreteAlgebra.from_span(np.array([f])), A1, check=False).algebra
    out.append(check("P_is_commutant_of_f", P.distance(fcomm), tol, irr, "biprojection-intermediate"))
    e_P = t_.jones_projection(1, P)
    out.append(check("f_is_e_P", _rel(f, e_P), tol, irr, "biprojection-intermediate"))
    idx = minimal_expectation(InclusionPair(P, A1)).index_norm
    out.append(check("index_A1_P", abs(idx - 1.0 / fc.tr(f).real), TOL_ROUNDING, irr, "biprojection-intermediate"))
    cand = relative_commutant(ConcreteAlgebra.from_span(np.array([e])), A, check=False).algebra
    has_B = cand.contains_algebra(t_.B, tol=1e-8)
    return BiprojectionIntermediate(P, e_P, cand, has_B, out)


# intermediate algebras ----------------------------------------------------------------


@dataclass
class IntermediateData:
    C: ConcreteAlgebra
    e_C: np.ndarray
    C1: ConcreteAlgebra
    index_AC: float
    index_CB: float
    e_C1: np.ndarray | None = None
    C2: ConcreteAlgebra | None = None
    e_C2: np.ndarray | None = None
    checks: list = field(default_factory=list)


def basic_span(X: ConcreteAlgebra, p: np.ndarray, name: str = "") -> ConcreteAlgebra:
    """span{x p y : x, y in X}."""
    prods = np.einsum("aij,jk,bkl->abil", X.basis, p, X.basis, optimize=True)
    return ConcreteAlgebra.from_span(prods.reshape(-1, *p.shape), name=name)


def intermediate_quasi_basis_residual(fc: FourierContext, D: ConcreteAlgebra, e_D: np.ndarray) -> float:
    """|sum delta e_1 delta* - e_D| for a quasi-basis of the tr-preserving E^D_B."""
    E = projection_expectation(InclusionPair(fc.tower.B, D), fc.tower.rho)
    qb = quasi_basis(E)
    s = sum(d @ fc.tower.e(1) @ dag(d) for d in qb)
    return _rel(s, e_D)


def jones_projection_of_intermediate(fc: FourierContext, C: ConcreteAlgebra,
                                     tol: float = TOL_PROJECTION) -> IntermediateData:
    """e_C, C_1 (and e_{C_1}, C_2, e_{C_2} when the tower is deep enough) with
    the relation suite.  ``C`` must already live in the tower's ambient space."""
    t_ = fc.tower
    t_.need(1)
    B, A, A1 = t_.B, t_.A, t_.alg(1)
    if not (C.contains_algebra(B, tol=1e-8) and A.contains_algebra(C, tol=1e-8)):
        raise NotNested("C is not between B and A")
    irr = fc.irreducible_data
    tau = fc.tau
    one = np.eye(fc.N, dtype=complex)
    e1 = t_.e(1)

    E_AC_min = minimal_expectation(InclusionPair(C, A))
    E_CB_min = minimal_expectation(InclusionPair(B, C))
    iAC, iCB = E_AC_min.index_norm, E_CB_min.index_norm
    iAB = t_.index
    # legs as realized in the tower: trace-preserving projections
    E_AC = projection_expectation(InclusionPair(C, A), t_.rho)
    E_CB = projection_expectation(InclusionPair(B, C), t_.rho)
    tp_AC = float(np.max(np.abs(watatani_index(E_AC) - iAC * one)))
    tp_CB = float(np.max(np.abs(watatani_index(E_CB) - iCB * one)))

    e_C = t_.jones_projection(0, C)
    C1 = basic_span(A, e_C, "C1")
    data = IntermediateData(C, e_C, C1, iAC, iCB)
    out = data.checks
    out.append(check("legs_minimal_AC", tp_AC, TOL_ROUNDING, irr, "intermediate-minimal-leg"))
    out.append(check("legs_minimal_CB", tp_CB, TOL_ROUNDING, irr, "intermediate-minimal-leg"))
    out.append(check("index_multiplicative", abs(iAB - iCB * iAC), TOL_ROUNDING, ref="index-multiplicativity"))
    out.append(check("e_C_projection", projection_defect(e_C), tol, ref="intermediate-jones-projection"))
    out.append(check("e_C_absorbs_e1", max(_rel(e_C @ e1, e1), _rel(e1 @ e_C, e1)), tol,
                     ref="intermediate-jones-projection"))
    out.append(check("trace_e_C", abs(fc.tr(e_C).real - 1.0 / iAC), tol, irr, "intermediate-trace"))
    out.append(check("C1_unital", C1.residual(one), tol, ref="intermediate-basic-construction"))
    out.append(check("C1_in_A1", max(A1.residual(c) for c in C1.basis), tol, ref="intermediate-basic-construction"))
    E_C1 = projection_expectation(InclusionPair(C1, A1), t_.rho)
    out.append(check("E_C1_of_e1", _rel(E_C1(e1), e_C / iCB), tol, irr, "intermediate-expectation-e1"))
    out.append(check("quasi_basis_e_C", intermediate_quasi_basis_residual(fc, C, e_C), tol,
                     ref="intermediate-quasi-basis"))

    if fc.depth < 2:
        return data
    e2 = t_.e(2)
    e_C1 = t_.jones_projection(1, C1)
    data.e_C1 = e_C1
    out.append(check("gamma0_e_C", _rel(gamma0(fc, e_C), e_C), tol, irr, "mirroring-fixes-intermediate"))
    out.append(check("e_C_e2_e_C", _rel(e_C @ e2 @ e_C, e_C @ e_C1 / iAC), tol, irr, "intermediate-compression"))
    out.append(check("trace_e_C_e_C1", abs(fc.tr(e_C @ e_C1) - tau), tol, irr, "intermediate-trace"))
    out.append(check("fourier_e_C", _rel(fourier(fc, 1, e_C), np.sqrt(iAB) / iAC * e_C1), tol, irr,
                     "fourier-of-intermediate"))
    be = classify(fc, 1, e_C, tol)
    t_err = abs(be.t - np.sqrt(iAB) / iAC) if be.tag == "biprojection" else np.inf
    out.append(check("e_C_biprojection", t_err, TOL_ROUNDING, ref="intermediate-biprojection"))
    BC1 = relative_commutant(B, C1, check=False).algebra
    CA1 = relative_commutant(C, A1, check=False).algebra
    img = ConcreteAlgebra.from_span(gamma0(fc, BC1.basis))
    out.append(check("gamma0_swaps_commutants", img.distance(CA1), tol, irr, "mirroring-swaps-commutants"))

    if fc.depth < 3:
        return data
    C2 = basic_span(A1, e_C1, "C2")
    e_C2 = t_.jones_projection(2, C2)
    data.C2, data.e_C2 = C2, e_C2
    out.append(check("e_C1_e3_e_C1", _rel(e_C1 @ t_.e(3) @ e_C1, e_C1 @ e_C2 / iCB), tol, irr,
                     "intermediate-compression"))
    out.append(check("shift_e_C", _rel(gamma1(fc, gamma0(fc, e_C)), e_C2), tol, irr, "shift-of-intermediate"))
    return data


def biprojection_suite(fc: FourierContext, intermediates=(), tol: float = TOL_PROJECTION) -> list[Check]:
    """Every biprojection identity the tower allows, over e_1, 1 and each e_C.

    ``intermediates`` are (label, algebra) pairs already lifted into the tower.
    """
    t_ = fc.tower
    out: list[Check] = []
    e1 = t_.e(1)
    one = np.eye(fc.N, dtype=complex)
    out.append(check("fourier_of_e1_value", _rel(fourier(fc, 1, e1), t_.index ** -0.5 * one), TOL_OPERATOR,
                     ref="fourier-of-jones-projection") if fc.depth >= 2 else
               check("fourier_of_e1_value", None, TOL_OPERATOR, ref="fourier-of-jones-projection"))
    if fc.depth < 2:
        return out
    be1 = classify(fc, 1, e1, tol)
    out.append(check("e1_biprojection", 0.0 if be1.tag == "biprojection" and _rel(be1.f, one) <= tol else np.inf,
                     tol, ref="fourier-of-jones-projection"))
    out.append(check("e1_commutant_is_B", _e1_commutant_distance(fc), tol, ref="e1-commutant"))
    out += _prefixed("e1", scalar_relations(fc, be1, tol))
    out += _prefixed("e1", exchange_check(fc, be1, tol))
    for label, C in [("B", t_.B), ("A", t_.A)] + list(intermediates):
        data = jones_projection_of_intermediate(fc, C, tol)
        out += _prefixed(label, data.checks)
        be = classify(fc, 1, data.e_C, tol)
        if be.tag == "biprojection":
            out += _prefixed(label, scalar_relations(fc, be, tol))
            out += _prefixed(label, exchange_check(fc, be, tol))
            bi = intermediate_from_biprojection(fc, be, tol)
            out += _prefixed(label, bi.checks)
            out.append(check(f"{label}:P_is_C1", bi.P.distance(data.C1), tol, fc.irreducible_data,
                             "biprojection-intermediate"))
    return out


def _e1_commutant_distance(fc: FourierContext) -> float:
    from .tower import e1_commutant_residual

    return e1_commutant_residual(fc.tower)


def _prefixed(label: str, checks: list[Check]) -> list[Check]:
    for c in checks:
        c.name = f"{label}:{c.name}"
    return checks
