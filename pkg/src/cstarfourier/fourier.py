"""Fourier transforms, rotations, mirrorings, shift and coproduct.

All maps act on relative commutants inside a built Jones tower.  The
transform is evaluated with the quasi-basis average
``tau * sum_i l_i x l_i*`` (the trace-preserving expectation of
B' n A_{k+1} onto A' n A_{k+1}); the ambient orthogonal projection is kept
as an independent route for cross-checks.
"""
from __future__ import annotations

import numpy as np

from .expect import projection_expectation
from .numkernel import TOL_OPERATOR, Check, check, dag, fro, rng
from .staralg import ConcreteAlgebra, InclusionPair, NotInCommutant
from .tower import (
    DepthLimit,
    TowerContext,
    chain,
    composed_quasi_basis,
    multi_step_projection,
)

TOL_MEMBER = 1e-8


class FourierContext:
    """A tower plus cached chains, commutants and expectation maps."""

    def __init__(self, tower: TowerContext):
        self.tower = tower
        self.tau = tower.tau
        self._cache: dict = {}

    @property
    def depth(self) -> int:
        return self.tower.depth

    @property
    def N(self) -> int:
        return self.tower.N

    @property
    def irreducible_data(self) -> bool:
        return self.Bc(0).dim == 1

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def down(self, k: int) -> np.ndarray:
        """e_k e_{k-1} .. e_1."""
        return self._get(("down", k), lambda: chain(self.tower, range(k, 0, -1)))

    def up(self, k: int) -> np.ndarray:
        """e_1 e_2 .. e_k."""
        return self._get(("up", k), lambda: chain(self.tower, range(1, k + 1)))

    def Bc(self, k: int) -> ConcreteAlgebra:
        return self.tower.B_commutant(k)

    def Ac(self, k: int) -> ConcreteAlgebra:
        return self.tower.A_commutant(k)

    def A1c(self, k: int) -> ConcreteAlgebra:
        """A_1' n A_k."""
        return self._get(("A1c", k), lambda: self.tower.commutant_of(1, k))

    def average(self, x: np.ndarray) -> np.ndarray:
        """tau sum_i l_i x l_i*, batched."""
        lam = self.tower.lam
        out = np.zeros(np.shape(x), dtype=complex)
        for l in lam:
            out = out + l @ x @ dag(l)
        return self.tau * out

    def ambient_projection(self, k: int):
        """Trace-preserving expectation A_k -> A' n A_k as an orthogonal projection."""
        def make():
            pair = InclusionPair(self.Ac(k), self.tower.alg(k))
            return projection_expectation(pair, self.tower.rho, name=f"A'nA_{k}")
        return self._get(("amb", k), make)

    def tr(self, x):
        return self.tower.tr(x)


def fourier_context(tower: TowerContext) -> FourierContext:
    return FourierContext(tower)


def _member_residual(alg: ConcreteAlgebra, x: np.ndarray) -> float:
    x = np.asarray(x)
    r = np.linalg.norm(x - alg.project(x), axis=(-2, -1))
    s = np.maximum(1.0, np.linalg.norm(x, axis=(-2, -1)))
    return float(np.max(r / s))


def _require(alg: ConcreteAlgebra, x: np.ndarray, what: str) -> None:
    res = _member_residual(alg, x)
    if res > TOL_MEMBER:
        raise NotInCommutant(f"{what} (residual {res:.2e})")


# transforms ------------------------------------------------------------------


def fourier(fc: FourierContext, k: int, x: np.ndarray, check_in: bool = True) -> np.ndarray:
    """F_k: B' n A_k -> A' n A_{k+1}."""
    fc.tower.need(k + 1)
    x = np.asarray(x, dtype=complex)
    if check_in:
        _require(fc.Bc(k), x, f"argument not in B' n A_{k}")
    y = fc.tau ** (-(k + 2) / 2) * fc.average(x @ fc.down(k + 1))
    if check_in:
        _require(fc.Ac(k + 1), y, f"F_{k} value left A' n A_{k + 1}")
    return y


def fourier_ambient(fc: FourierContext, k: int, x: np.ndarray) -> np.ndarray:
    """F_k through the orthogonal projection onto A' n A_{k+1}."""
    fc.tower.need(k + 1)
    P = fc.ambient_projection(k + 1)
    return fc.tau ** (-(k + 2) / 2) * P(np.asarray(x, dtype=complex) @ fc.down(k + 1))


def fourier_inv(fc: FourierContext, k: int, y: np.ndarray, check_in: bool = True) -> np.ndarray:
    """F_k^{-1}: A' n A_{k+1} -> B' n A_k."""
    fc.tower.need(k + 1)
    y = np.asarray(y, dtype=complex)
    if check_in:
        _require(fc.Ac(k + 1), y, f"argument not in A' n A_{k + 1}")
    E = fc.tower.E(k + 1)
    return fc.tau ** (-(k + 2) / 2) * E(y @ fc.up(k + 1))


def identity_element(fc: FourierContext, k: int) -> np.ndarray:
    """tau^{-k/2} e_1..e_k, the unit of the coproduct."""
    if k == 0:
        return np.eye(fc.N, dtype=complex)
    return fc.tau ** (-k / 2) * fc.up(k)


def rotation(fc: FourierContext, k: int, x: np.ndarray, method: str = "fourier") -> np.ndarray:
    """rho_k on B' n A_k.

    ``fourier``: (F^{-1}(F(x)*))*, needs depth k+1.
    ``quasi_basis``: tau^{-k} sum_i E_k(v l_i x) v l_i*, v = e_k..e_1.
    """
    x = np.asarray(x, dtype=complex)
    if method == "fourier":
        return dag(fourier_inv(fc, k, dag(fourier(fc, k, x))))
    if method != "quasi_basis":
        raise ValueError(f"unknown method {method!r}")
    fc.tower.need(k)
    if k == 0:
        return x
    v = fc.down(k)
    Ek = fc.tower.E(k)
    out = np.zeros_like(x)
    for l in fc.tower.lam:
        out = out + Ek(v @ l @ x) @ v @ dag(l)
    return fc.tau ** (-k) * out


def rotation_inverse(fc: FourierContext, k: int, x: np.ndarray, method: str = "fourier") -> np.ndarray:
    """rho_k^{-1} = rho_k^k; the rotation has period k+1."""
    for _ in range(k):
        x = rotation(fc, k, x, method)
    return x


def gamma0(fc: FourierContext, x: np.ndarray, method: str = "fourier") -> np.ndarray:
    if method == "fourier":
        fc.tower.need(2)
    return rotation(fc, 1, x, method)


def gamma1(fc: FourierContext, y: np.ndarray, method: str = "composed") -> np.ndarray:
    """The level-one rotation of B in A_1, acting on B' n A_3.

    ``composed`` treats A_1 in A_3 as the basic construction of B in A_1:
    Jones projection tau^{-1} e_2 e_1 e_3 e_2, expectation E_2 E_3, index
    tau^{-2} and the quasi-basis tau^{-1/2} l_i e_1 l_j.
    ``literal`` expands the double sum with the individual e's.
    """
    t = fc.tower
    t.need(3)
    y = np.asarray(y, dtype=complex)

    def E23(z):
        return t.E(2)(t.E(3)(z))

    out = np.zeros_like(y)
    if method == "composed":
        ep = fc._get("e[-1,1]", lambda: multi_step_projection(t, 1))
        qb = fc._get("qb1", lambda: composed_quasi_basis(t, 1))
        for m in qb:
            out = out + E23(ep @ m @ y) @ ep @ dag(m)
        return fc.tau ** (-2) * out
    if method != "literal":
        raise ValueError(f"unknown method {method!r}")
    e1, e2, e3 = t.e(1), t.e(2), t.e(3)
    f = e2 @ e1 @ e3 @ e2
    lam = t.lam
    for li in lam:
        for lj in lam:
            out = out + E23(f @ li @ e1 @ lj @ y) @ f @ dag(lj) @ e1 @ dag(li)
    return fc.tau ** (-5) * out


def shift(fc: FourierContext, x: np.ndarray) -> np.ndarray:
    """gamma_1 gamma_0: B' n A_1 -> A_1' n A_3."""
    fc.tower.need(3)
    return gamma1(fc, gamma0(fc, x))


def shift_inverse(fc: FourierContext, z: np.ndarray) -> np.ndarray:
    return gamma0(fc, gamma1(fc, z))


def shift_direct(fc: FourierContext, x: np.ndarray) -> np.ndarray:
    """gamma_1(x) for x in B' n A_1 as tau^{-2} E_{A_1' n A_3}(x e_{[-1,1]})."""
    t = fc.tower
    t.need(3)
    ep = fc._get("e[-1,1]", lambda: multi_step_projection(t, 1))
    qb = fc._get("qb1", lambda: composed_quasi_basis(t, 1))
    z = np.asarray(x, dtype=complex) @ ep
    out = np.zeros_like(z)
    for m in qb:
        out = out + m @ z @ dag(m)
    return out


def coproduct(fc: FourierContext, k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x o y = F^{-1}(F(y) F(x))."""
    return fourier_inv(fc, k, fourier(fc, k, y) @ fourier(fc, k, x))


# suite -------------------------------------------------------------------------


def _rel(a, b) -> float:
    return fro(a - b) / max(1.0, fro(b))


def fourier_suite(fc: FourierContext, seed: int | None = None, trials: int = 5,
                  assoc_trials: int = 50, tol: float = TOL_OPERATOR) -> list[Check]:
    """Every Fourier/rotation identity the tower depth allows."""
    g = rng(seed)
    t = fc.tower
    tau = fc.tau
    irr = fc.irreducible_data
    out: list[Check] = []
    one = np.eye(fc.N, dtype=complex)

    def worst(f, n=trials):
        return max(f() for _ in range(n))

    for k in range(0, fc.depth):
        Bk, Ak1 = fc.Bc(k), fc.Ac(k + 1)
        out.append(check(f"fourier_inverse_left_k{k}",
                         worst(lambda: _rel(fourier_inv(fc, k, fourier(fc, k, x := Bk.random_element(g))), x)),
                         tol, ref="fourier-inverse"))
        out.append(check(f"fourier_inverse_right_k{k}",
                         worst(lambda: _rel(fourier(fc, k, fourier_inv(fc, k, y := Ak1.random_element(g))), y)),
                         tol, ref="fourier-inverse"))
        out.append(check(f"fourier_routes_k{k}",
                         worst(lambda: _rel(fourier(fc, k, x := Bk.random_element(g)), fourier_ambient(fc, k, x))),
                         tol, ref="fourier-average-formula"))
        if k >= 1:
            val = fourier(fc, k, fc.up(k))
            out.append(check(f"fourier_of_jones_chain_k{k}", _rel(val, tau ** (k / 2) * one), tol,
                             ref="fourier-jones-chain"))
            out.append(check(f"fourier_inv_of_one_k{k}",
                             _rel(fourier_inv(fc, k, one), tau ** (-k / 2) * fc.up(k)), tol,
                             ref="fourier-jones-chain"))
        # coproduct
        ident = identity_element(fc, k)

        def unit_res():
            x = Bk.random_element(g)
            return max(_rel(coproduct(fc, k, x, ident), x), _rel(coproduct(fc, k, ident, x), x))

        out.append(check(f"coproduct_identity_k{k}", worst(unit_res), tol, ref="coproduct-identity"))

        def assoc_res():
            x, y, z = (Bk.random_element(g) for _ in range(3))
            lhs = coproduct(fc, k, coproduct(fc, k, x, y), z)
            rhs = coproduct(fc, k, x, coproduct(fc, k, y, z))
            return _rel(lhs, rhs)

        out.append(check(f"coproduct_associative_k{k}", worst(assoc_res, assoc_trials), 1e-7,
                         ref="coproduct-associativity"))

    if fc.depth >= 2:
        e1 = t.e(1)
        B1 = fc.Bc(1)
        out.append(check("fourier_of_e1", _rel(fourier(fc, 1, e1), tau ** 0.5 * one), tol,
                         ref="fourier-of-jones-projection"))
        norm2 = lambda z: float(np.sqrt(max(np.real(fc.tr(dag(z) @ z)), 0.0)))
        iso = max(abs(norm2(fourier(fc, 1, b)) - norm2(b)) for b in B1.basis)
        iso_inv = max(abs(norm2(fourier_inv(fc, 1, c)) - norm2(c)) for c in fc.Ac(2).basis)
        out.append(check("fourier_isometry", iso, tol, ref="fourier-isometry"))
        out.append(check("fourier_inv_isometry", iso_inv, tol, ref="fourier-isometry"))
        out.append(check("rotation_routes_k1",
                         worst(lambda: _rel(gamma0(fc, x := B1.random_element(g)),
                                            gamma0(fc, x, method="quasi_basis"))),
                         tol, ref="rotation-quasi-basis-formula"))
        out.append(check("gamma0_fixes_e1", _rel(gamma0(fc, e1), e1), tol, ref="mirroring-fixes-jones-projection"))
        out.append(check("gamma0_involution",
                         worst(lambda: _rel(gamma0(fc, gamma0(fc, x := B1.random_element(g))), x)), tol,
                         ref="mirroring-involution"))
        out.append(check("gamma0_star",
                         worst(lambda: _rel(dag(gamma0(fc, u := B1.random_element(g))), gamma0(fc, dag(u)))), tol,
                         ref="mirroring-star"))

        def anti():
            x, y = B1.random_element(g), B1.random_element(g)
            return _rel(gamma0(fc, x @ y), gamma0(fc, y) @ gamma0(fc, x))

        out.append(check("gamma0_antimultiplicative", worst(anti), tol, ref="mirroring-anti-multiplicative"))
        out.append(check("adjoint_rule_k1",
                         worst(lambda: _rel(dag(fourier(fc, 1, x := B1.random_element(g))),
                                            fourier(fc, 1, gamma0(fc, dag(x))))),
                         tol, ref="fourier-adjoint-rule"))
        trp = worst(lambda: abs(fc.tr(gamma0(fc, x := B1.random_element(g))) - fc.tr(x)))
        out.append(check("gamma0_trace_preserving", trp, tol, hypothesis=irr, ref="mirroring-trace"))
    if fc.depth >= 1:
        out.append(check("irreducibility_transport", abs(fc.Ac(1).dim - 1), 0.5, hypothesis=irr,
                         ref="irreducibility-transport"))

    if fc.depth >= 3:
        B1, B2, B3 = fc.Bc(1), fc.Bc(2), fc.Bc(3)
        out.append(check("rotation_routes_k2",
                         worst(lambda: _rel(rotation(fc, 2, x := B2.random_element(g)),
                                            rotation(fc, 2, x, method="quasi_basis"))),
                         tol, ref="rotation-quasi-basis-formula"))
        # at level 2 the rotation has period 3, so the adjoint rule needs rho_2^{-1}
        out.append(check("adjoint_rule_k2",
                         worst(lambda: _rel(dag(fourier(fc, 2, x := B2.random_element(g))),
                                            fourier(fc, 2, rotation_inverse(fc, 2, dag(x))))),
                         tol, ref="fourier-adjoint-rule"))
        out.append(check("rotation_period_k2",
                         worst(lambda: _rel(rotation(fc, 2, rotation_inverse(fc, 2, x := B2.random_element(g))), x)),
                         tol, ref="rotation-period"))
        r3 = lambda z: rotation(fc, 3, z, method="quasi_basis")
        out.append(check("rho3_squared_is_gamma1",
                         worst(lambda: _rel(r3(r3(y := B3.random_element(g))), gamma1(fc, y))),
                         tol, ref="rotation-square-root"))
        out.append(check("gamma1_routes",
                         worst(lambda: _rel(gamma1(fc, y := B3.random_element(g)), gamma1(fc, y, "literal")), 2),
                         tol, ref="mirroring-literal-formula"))
        out.append(check("gamma1_involution",
                         worst(lambda: _rel(gamma1(fc, gamma1(fc, y := B3.random_element(g))), y)), tol,
                         ref="mirroring-involution"))
        out.append(check("gamma1_star",
                         worst(lambda: _rel(dag(gamma1(fc, y := B3.random_element(g))), gamma1(fc, dag(y)))), tol,
                         ref="mirroring-star"))

        def anti1():
            x, y = B3.random_element(g), B3.random_element(g)
            return _rel(gamma1(fc, x @ y), gamma1(fc, y) @ gamma1(fc, x))

        out.append(check("gamma1_antimultiplicative", worst(anti1), tol, ref="mirroring-anti-multiplicative"))
        A13 = fc.A1c(3)
        out.append(check("shift_unit", _rel(shift(fc, one), one), tol, ref="shift"))
        out.append(check("shift_e1_is_e3", _rel(shift(fc, t.e(1)), t.e(3)), tol, ref="shift-of-jones-projection"))
        out.append(check("shift_image",
                         worst(lambda: _member_residual(A13, shift(fc, B1.random_element(g)))), tol, ref="shift"))
        out.append(check("shift_direct_formula",
                         worst(lambda: _rel(gamma1(fc, x := B1.random_element(g)), shift_direct(fc, x))), tol,
                         ref="shift-expectation-formula"))

        def mult():
            x, y = B1.random_element(g), B1.random_element(g)
            return _rel(shift(fc, x @ y), shift(fc, x) @ shift(fc, y))

        out.append(check("shift_multiplicative", worst(mult), tol, ref="shift"))
        out.append(check("shift_star",
                         worst(lambda: _rel(dag(shift(fc, x := B1.random_element(g))), shift(fc, dag(x)))), tol,
                         ref="shift"))
        out.append(check("shift_trace",
                         worst(lambda: abs(fc.tr(shift(fc, x := B1.random_element(g))) - fc.tr(x))), tol,
                         ref="shift"))
        out.append(check("shift_left_inverse",
                         worst(lambda: _rel(shift_inverse(fc, shift(fc, x := B1.random_element(g))), x)), tol,
                         ref="shift-inverse"))
        out.append(check("shift_right_inverse",
                         worst(lambda: _rel(shift(fc, shift_inverse(fc, z := A13.random_element(g))), z)), tol,
                         ref="shift-inverse"))
        out.append(check("shift_onto", abs(A13.dim - B1.dim), 0.5, ref="shift"))
    return out
