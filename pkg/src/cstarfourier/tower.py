"""Basic construction, dual expectations and the iterated Jones tower.

Each step represents the current top algebra A_k on L^2(A_k, tr_k) by
left multiplication; the Jones projection e_{k+1} is the orthogonal
projection onto the image of A_{k-1}.  Every stored operator is carried
along to the newest ambient space, and one density matrix rho on that
space restricts to the consistent trace on every level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expect import CondExp, TraceState, minimal_expectation, projection_expectation, quasi_basis_residual
from .numkernel import InnerProduct, dag, fro, nullspace, opnorm, orthonormalize, rng
from .staralg import (
    ConcreteAlgebra,
    InclusionPair,
    NotInCommutant,
    NotNested,
    re_represent,
    relative_commutant,
)

MAX_DEPTH = 3
REREPRESENT_THRESHOLD = 4096


class DepthLimit(ValueError):
    pass


class NonScalarIndex(ValueError):
    pass


class InconsistentSpan(RuntimeError):
    pass


@dataclass
class Level:
    """Bookkeeping for one step A_{j} in A_{j+1}."""

    l2_basis: np.ndarray  # tr-orthonormal basis of A_j (current ambient)
    native: np.ndarray  # Frobenius basis of A_{j+1} on L^2(A_j)
    images: np.ndarray  # the same elements in the current ambient


@dataclass
class TowerContext:
    pair: InclusionPair
    E0: CondExp
    tau: float
    algebras: list  # A_{-1} = B, A_0 = A, A_1, ...; index shifted by one
    jones: list  # e_1 .. e_k
    rho: np.ndarray
    lam: np.ndarray  # quasi-basis of E_0
    levels: list = field(default_factory=list)
    threshold: int = REREPRESENT_THRESHOLD
    re_represented: int = 0
    base: np.ndarray | None = None  # the original basis of A, carried along
    _cache: dict = field(default_factory=dict, repr=False)

    # access ------------------------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self.jones)

    @property
    def N(self) -> int:
        return self.rho.shape[0]

    @property
    def index(self) -> float:
        return 1.0 / self.tau

    def alg(self, j: int) -> ConcreteAlgebra:
        """A_j for j >= -1."""
        if j < -1 or j > self.depth:
            raise DepthLimit(f"level {j} outside tower of depth {self.depth}")
        return self.algebras[j + 1]

    @property
    def B(self) -> ConcreteAlgebra:
        return self.alg(-1)

    @property
    def A(self) -> ConcreteAlgebra:
        return self.alg(0)

    def e(self, j: int) -> np.ndarray:
        if j < 1 or j > self.depth:
            raise DepthLimit(f"e_{j} not available at depth {self.depth}")
        return self.jones[j - 1]

    def tr(self, x: np.ndarray):
        return np.einsum("ij,...ji->...", self.rho, x, optimize=True)

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Carry elements of A (given in the original ambient) into the tower."""
        c = self.pair.big.coords(np.asarray(x, dtype=complex))
        return np.tensordot(c, self.base, axes=([-1], [0]))

    def lift_algebra(self, S: ConcreteAlgebra, name: str | None = None) -> ConcreteAlgebra:
        if not self.pair.big.contains_algebra(S, tol=1e-8):
            raise NotNested(f"{S.name or 'subalgebra'} is not inside A")
        return ConcreteAlgebra.from_span(self.lift(S.basis), self.lift(S.unit[None])[0],
                                         S.name if name is None else name)

    def need(self, k: int) -> None:
        if self.depth < k:
            raise DepthLimit(f"tower depth {self.depth} < {k}")

    def E(self, j: int) -> CondExp:
        """E_j: A_j -> A_{j-1} (E_0: A -> B), trace-preserving."""
        key = ("E", j)
        if key not in self._cache:
            pair = InclusionPair(self.alg(j - 1), self.alg(j))
            E = projection_expectation(pair, self.rho, name=f"E_{j}")
            if j == 0:
                E.set_quasi_basis(self.lam)
            else:
                E.set_quasi_basis(self.quasi_basis_of(j))
            self._cache[key] = E
        return self._cache[key]

    def E_down(self, x: np.ndarray, frm: int, to: int) -> np.ndarray:
        """E_{to+1} o ... o E_{frm}: A_frm -> A_to."""
        for j in range(frm, to, -1):
            x = self.E(j)(x)
        return x

    def quasi_basis_of(self, j: int) -> np.ndarray:
        """Quasi-basis of E_j: {tau^{-1/2} mu e_j} from one of E_{j-1}."""
        if j == 0:
            return self.lam
        prev = self.quasi_basis_of(j - 1)
        return self.tau ** -0.5 * prev @ self.e(j)[None]

    def B_commutant(self, k: int) -> ConcreteAlgebra:
        key = ("Bc", k)
        if key not in self._cache:
            self._cache[key] = relative_commutant(self.B, self.alg(k)).algebra
        return self._cache[key]

    def A_commutant(self, k: int) -> ConcreteAlgebra:
        """A' n A_k."""
        key = ("Ac", k)
        if key not in self._cache:
            self._cache[key] = relative_commutant(self.A, self.alg(k)).algebra
        return self._cache[key]

    def commutant_of(self, j: int, k: int) -> ConcreteAlgebra:
        """A_j' n A_k."""
        key = ("c", j, k)
        if key not in self._cache:
            self._cache[key] = relative_commutant(self.alg(j), self.alg(k)).algebra
        return self._cache[key]

    # Jones projections of intermediate subspaces --------------------------------

    def jones_projection(self, j: int, S: ConcreteAlgebra) -> np.ndarray:
        """Projection of L^2(A_j) onto the image of a subspace S of A_j,
        as an element of A_{j+1} in the current ambient."""
        self.need(j + 1)
        lvl = self.levels[j]
        w = orthonormalize(S.basis, InnerProduct(self.rho))
        c = np.einsum("ij,pkj,qki->pq", self.rho, dag(lvl.l2_basis), w, optimize=True)
        p = c @ dag(c)
        nb = lvl.native
        coords = nb.reshape(len(nb), -1).conj() @ p.reshape(-1)
        back = np.tensordot(coords, nb, axes=(0, 0))
        if fro(back - p) > 1e-8 * max(1.0, fro(p)):
            raise InconsistentSpan("Jones projection not inside the next level")
        return np.tensordot(coords, lvl.images, axes=(0, 0))

    # transport -------------------------------------------------------------

    def _transport(self, f) -> None:
        self.algebras = [
            ConcreteAlgebra.from_span(f(a.basis), f(a.unit[None])[0], a.name) for a in self.algebras
        ]
        self.jones = [f(e[None])[0] for e in self.jones]
        self.lam = f(self.lam)
        self.base = f(self.base)
        for lvl in self.levels:
            lvl.l2_basis = f(lvl.l2_basis)
            lvl.images = f(lvl.images)
        self._cache.clear()


def _left_regular(V: np.ndarray, rho: np.ndarray, X: np.ndarray) -> np.ndarray:
    """pi(x)_{pq} = Tr(rho v_p* x v_q) for a batch X."""
    K = rho[None] @ dag(V)  # rho v_p*
    n, N = len(V), V.shape[-1]
    Vt = np.swapaxes(V, -1, -2).reshape(n, -1).T  # Tr(y v_q) = y.flat @ Vt[:, q]
    out = np.empty((len(X), n, n), dtype=complex)
    for m, x in enumerate(X):
        out[m] = (K @ x).reshape(n, N * N) @ Vt
    return out


def basic_construction_step(ctx: TowerContext) -> None:
    """Extend the tower by one level in place."""
    k = ctx.depth
    top = ctx.alg(k)
    rho = ctx.rho
    V = orthonormalize(top.basis, InnerProduct(rho))
    n = len(V)
    if n != top.dim:
        raise InconsistentSpan("L2 basis has wrong size")
    images = _left_regular(V, rho, top.basis)

    def pi(X):
        X = np.asarray(X)
        c = top.coords(X)
        return np.tensordot(c, images, axes=([-1], [0]))

    # the new Jones projection: projection onto the image of A_{k-1}
    below = ctx.alg(k - 1)
    w = orthonormalize(below.basis, InnerProduct(rho))
    c = np.einsum("ij,pkj,qki->pq", rho, dag(V), w, optimize=True)
    e_new = c @ dag(c)
    mu = ctx.quasi_basis_of(k)
    mu_new = pi(mu)
    span = np.einsum("aij,jk,bkl->abil", mu_new, e_new, images, optimize=True).reshape(-1, n, n)
    new_alg = ConcreteAlgebra.from_span(np.concatenate([images, span]), name=f"A{k + 1}")
    # trace on the new level from E_{k+1}(x e y) = tau x y
    prods = np.einsum("aij,bjk->abik", mu, top.basis, optimize=True).reshape(-1, top.N, top.N)
    t_vals = ctx.tau * np.einsum("ij,aji->a", rho, prods, optimize=True)
    M = np.einsum("rij,aji->ar", new_alg.basis, span, optimize=True)
    alpha, *_ = np.linalg.lstsq(M, t_vals, rcond=None)
    new_rho = np.tensordot(alpha, new_alg.basis, axes=(0, 0))
    new_rho = (new_rho + dag(new_rho)) / 2
    if np.linalg.eigvalsh(new_rho)[0] <= 0:
        raise InconsistentSpan("dual trace is not faithful")
    # carry everything to the new ambient
    algebras = [ConcreteAlgebra.from_span(pi(a.basis), pi(a.unit[None])[0], a.name) for a in ctx.algebras]
    ctx.algebras = algebras + [new_alg]
    ctx.jones = [pi(e[None])[0] for e in ctx.jones] + [e_new]
    ctx.lam = pi(ctx.lam)
    ctx.base = pi(ctx.base)
    for lvl in ctx.levels:
        lvl.l2_basis = pi(lvl.l2_basis)
        lvl.images = pi(lvl.images)
    ctx.levels.append(Level(pi(V), new_alg.basis.copy(), new_alg.basis.copy()))
    ctx.rho = new_rho
    ctx._cache.clear()
    if ctx.N > ctx.threshold:
        re_represent_top(ctx)


def re_represent_top(ctx: TowerContext) -> None:
    """Move the whole tower to a faithful representation of minimal size."""
    top = ctx.alg(ctx.depth)
    pi, _, _, new_rho = re_represent(top, density=ctx.rho)
    ctx._transport(pi)
    ctx.rho = new_rho
    ctx.re_represented += 1


def basic_construction(pair: InclusionPair, E: CondExp | None = None, tr: TraceState | None = None):
    """One-step basic construction; returns the tower context of depth 1."""
    ctx = start_tower(pair, E, tr)
    basic_construction_step(ctx)
    return ctx


def start_tower(pair: InclusionPair, E: CondExp | None = None, tr: TraceState | None = None,
                threshold: int = REREPRESENT_THRESHOLD) -> TowerContext:
    if E is None:
        E = minimal_expectation(pair)
    if tr is None:
        tr = getattr(E, "trace", None)
        if tr is None:
            if E.density is None:
                raise ValueError("a trace compatible with E is required")
            tr = TraceState.from_density(pair.big, E.density)
    if not E.scalar_index:
        raise NonScalarIndex("the tower needs a scalar index")
    return TowerContext(
        pair=pair,
        E0=E,
        tau=1.0 / E.index_norm,
        algebras=[pair.small, pair.big],
        jones=[],
        rho=np.asarray(tr.density, dtype=complex),
        lam=E.quasi_basis,
        base=np.array(pair.big.basis, dtype=complex),
        threshold=threshold,
    )


def jones_tower(pair: InclusionPair, depth: int, E: CondExp | None = None,
                max_depth: int = MAX_DEPTH, threshold: int = REREPRESENT_THRESHOLD) -> TowerContext:
    if depth < 0:
        raise DepthLimit("depth must be non-negative")
    if depth > max_depth:
        raise DepthLimit(f"depth {depth} exceeds the guard {max_depth}")
    ctx = start_tower(pair, E, threshold=threshold)
    for _ in range(depth):
        basic_construction_step(ctx)
    return ctx


# operations on a built tower ------------------------------------------------------


def dual_expectation(ctx: TowerContext, j: int = 1) -> CondExp:
    return ctx.E(j)


def dual_expectation_residual(ctx: TowerContext, j: int = 1, seed: int = 21, trials: int = 4) -> float:
    """Residual of E_j(x e_j y) = tau x y on random x, y in A_{j-1}."""
    g = rng(seed)
    Ej = ctx.E(j)
    low = ctx.alg(j - 1)
    worst = 0.0
    for _ in range(trials):
        x, y = low.random_element(g), low.random_element(g)
        worst = max(worst, fro(Ej(x @ ctx.e(j) @ y) - ctx.tau * x @ y) / max(1.0, fro(x) * fro(y)))
    return worst


def push_down(ctx: TowerContext, x1: np.ndarray, j: int = 1) -> np.ndarray:
    """x0 in A_{j-1} with x1 e_j = x0 e_j; x0 = tau^{-1} E_j(x1 e_j)."""
    return ctx.E(j)(x1 @ ctx.e(j)) / ctx.tau


def multi_step_projection(ctx: TowerContext, n: int) -> np.ndarray:
    """e_{[-1, 2n+1]} = tau^{-n(n+1)/2} (e_{n+1}..e_1)(e_{n+2}..e_2)..(e_{2n+1}..e_{n+1})."""
    if n == 0:
        return ctx.e(1)
    ctx.need(2 * n + 1)
    out = np.eye(ctx.N, dtype=complex)
    for start in range(1, n + 2):
        for j in range(start + n, start - 1, -1):
            out = out @ ctx.e(j)
    return ctx.tau ** (-n * (n + 1) / 2) * out


def chain(ctx: TowerContext, idx) -> np.ndarray:
    out = np.eye(ctx.N, dtype=complex)
    for j in idx:
        out = out @ ctx.e(j)
    return out


def composed_quasi_basis(ctx: TowerContext, n: int) -> np.ndarray:
    """Quasi-basis of E_0 o ... o E_n: A_n -> B.

    tau^{-n(n+1)/4} l_{i_n}(e_1..e_n) l_{i_{n-1}}(e_1..e_{n-1}) .. l_{i_1} e_1 l_{i_0}.
    """
    ctx.need(n)
    lam = ctx.lam
    out = lam
    for m in range(1, n + 1):
        w = chain(ctx, range(1, m + 1))
        out = np.einsum("aij,jk,bkl->abil", lam, w, out, optimize=True).reshape(-1, ctx.N, ctx.N)
    return ctx.tau ** (-n * (n + 1) / 4) * out


def composed_expectation(ctx: TowerContext, n: int) -> CondExp:
    pair = InclusionPair(ctx.B, ctx.alg(n))
    E = projection_expectation(pair, ctx.rho, name=f"E_0..E_{n}")
    E.set_quasi_basis(composed_quasi_basis(ctx, n))
    return E


def commutant_expectation(ctx: TowerContext, k: int, x: np.ndarray, check: bool = True) -> np.ndarray:
    """E^{B' n A_k}_{A' n A_k}(x) = tau sum_i l_i x l_i*."""
    x = np.asarray(x, dtype=complex)
    if check:
        for b in ctx.B.basis:
            if fro(x @ b - b @ x) > 1e-8 * max(1.0, fro(x)):
                raise NotInCommutant("x is not in B' n A_k")
    lam = ctx.lam
    return ctx.tau * np.einsum("aij,...jk,alk->...il", lam, x, lam.conj(), optimize=True)


# invariant suite -------------------------------------------------------------------


def tl_residuals(ctx: TowerContext) -> dict:
    """Temperley-Lieb relations among e_1..e_k."""
    out = {"projection": 0.0, "far_commute": 0.0, "tl": 0.0}
    k = ctx.depth
    for i in range(1, k + 1):
        e = ctx.e(i)
        out["projection"] = max(out["projection"], fro(e @ e - e), fro(e - dag(e)))
        for j in range(1, k + 1):
            f = ctx.e(j)
            if abs(i - j) >= 2:
                out["far_commute"] = max(out["far_commute"], fro(e @ f - f @ e))
            if abs(i - j) == 1:
                out["tl"] = max(out["tl"], fro(e @ f @ e - ctx.tau * e))
    return out


def compression_residual(ctx: TowerContext, seed: int = 31, trials: int = 3) -> float:
    """e_j x e_j = E_{j-1}(x) e_j for x in A_{j-1}."""
    g = rng(seed)
    worst = 0.0
    for j in range(1, ctx.depth + 1):
        low = ctx.alg(j - 1)
        Ej = ctx.E(j - 1)
        e = ctx.e(j)
        for _ in range(trials):
            x = low.random_element(g)
            worst = max(worst, fro(e @ x @ e - Ej(x) @ e) / max(1.0, fro(x)))
    return worst


def markov_residual(ctx: TowerContext) -> float:
    """tr(x e_j) = tau tr(x) on a basis of B' n A_{j-1}."""
    worst = 0.0
    for j in range(1, ctx.depth + 1):
        X = ctx.B_commutant(j - 1).basis
        lhs = ctx.tr(X @ ctx.e(j)[None])
        rhs = ctx.tau * ctx.tr(X)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def trace_consistency_residual(ctx: TowerContext) -> float:
    """tr_k on B' n A_k equals tr_0 o E_1 o ... o E_k there."""
    worst = 0.0
    for k in range(1, ctx.depth + 1):
        X = ctx.B_commutant(k).basis
        down = ctx.E_down(X, k, 0)
        worst = max(worst, float(np.max(np.abs(ctx.tr(X) - ctx.tr(down)))))
    return worst


def commutant_dims(ctx: TowerContext) -> list[int]:
    return [ctx.B_commutant(k).dim for k in range(0, ctx.depth + 1)]


def dimension_bound_ok(ctx: TowerContext) -> bool:
    return all(d <= ctx.index ** (k + 1) + 1e-8 for k, d in enumerate(commutant_dims(ctx)))


def e1_commutant_residual(ctx: TowerContext) -> float:
    """B = {e_1}' n A as subspaces (distance of projectors)."""
    ctx.need(1)
    e1 = ctx.e(1)
    X = ctx.A.basis
    m = (X @ e1 - e1 @ X).reshape(len(X), -1).T
    ker = nullspace(m)
    sub = ConcreteAlgebra(orthonormalize(np.tensordot(ker, X, axes=(1, 0))))
    if sub.dim != ctx.B.dim:
        return float("inf")
    return sub.distance(ctx.B)


def push_down_residual(ctx: TowerContext, samples: int = 100, seed: int = 41) -> float:
    g = rng(seed)
    A1 = ctx.alg(1)
    e1 = ctx.e(1)
    worst = 0.0
    for _ in range(samples):
        x1 = A1.random_element(g)
        x0 = push_down(ctx, x1)
        worst = max(worst, fro(x0 @ e1 - x1 @ e1) / max(1.0, fro(x1)), ctx.A.residual(x0))
    return worst


def support_residual(ctx: TowerContext) -> float:
    """sum_i l_i e_1 l_i* = 1."""
    lam = ctx.lam
    s = np.einsum("aij,jk,alk->il", lam, ctx.e(1), lam.conj(), optimize=True)
    return fro(s - np.eye(ctx.N))


def composed_quasi_basis_residual(ctx: TowerContext, n: int) -> tuple[float, float]:
    """(quasi-basis residual, |index - tau^{-(n+1)}|) for E_0 o..o E_n."""
    E = composed_expectation(ctx, n)
    res = quasi_basis_residual(E, E.quasi_basis)
    ind = np.sum(E.quasi_basis @ dag(E.quasi_basis), axis=0)
    return res, fro(ind - ctx.tau ** (-(n + 1)) * np.eye(ctx.N)) / max(1.0, fro(ind))


def commutant_expectation_residual(ctx: TowerContext, k: int, seed: int = 51) -> float:
    """Quasi-basis formula against the trace-orthogonal projection."""
    Bc = ctx.B_commutant(k)
    Ac = ctx.A_commutant(k)
    g = rng(seed)
    x = Bc.random_element(g)
    lhs = commutant_expectation(ctx, k, x)
    pair = InclusionPair(Ac, Bc)
    rhs = projection_expectation(pair, ctx.rho)(x)
    return fro(lhs - rhs) / max(1.0, fro(x))


def dual_index_residual(ctx: TowerContext, j: int = 1) -> float:
    """Index of E_j from its quasi-basis against the base index."""
    E = ctx.E(j)
    ind = np.sum(E.quasi_basis @ dag(E.quasi_basis), axis=0)
    return fro(ind - ctx.index * np.eye(ctx.N)) / max(1.0, fro(ind))


def opnorm_index(ctx: TowerContext) -> float:
    return opnorm(np.sum(ctx.lam @ dag(ctx.lam), axis=0))


def tower_suite(ctx: TowerContext, tol: float = 1e-8) -> list:
    """Invariants of a built tower."""
    from .numkernel import check

    tl = tl_residuals(ctx)
    dims = commutant_dims(ctx)
    bound = max(max(0.0, d - ctx.index ** (k + 1)) for k, d in enumerate(dims))
    simple = ctx.pair.small.center.dim == 1 and ctx.pair.big.center.dim == 1
    out = [
        check("e_projections", tl["projection"], tol, ref="temperley-lieb"),
        check("e_far_commute", tl["far_commute"], tol, ref="temperley-lieb"),
        check("e_tl_relation", tl["tl"], tol, ref="temperley-lieb"),
        check("compression", compression_residual(ctx), tol, ref="basic-construction"),
        check("markov_trace", markov_residual(ctx), tol, ref="markov-trace"),
        check("trace_consistency", trace_consistency_residual(ctx), 1e-9, ref="consistent-traces"),
        # stated for simple algebras; C[Z_2] in C[Z_4] has dim(B' n A) = 4 > 2
        check("commutant_dimension_bound", bound, 1e-8, simple, "relative-commutant-dimension"),
    ]
    if ctx.depth >= 1:
        out += [
            check("B_is_e1_commutant", e1_commutant_residual(ctx), tol, ref="e1-commutant"),
            check("push_down", push_down_residual(ctx), tol, ref="push-down"),
            check("support_of_e1", support_residual(ctx), tol, ref="support"),
            check("dual_expectation", dual_expectation_residual(ctx), tol, ref="dual-expectation"),
            check("dual_index", dual_index_residual(ctx), tol, ref="dual-index"),
        ]
    for n in range(1, ctx.depth + 1):
        res, ind = composed_quasi_basis_residual(ctx, n)
        out.append(check(f"composed_quasi_basis_{n}", res, tol, ref="multi-step-basis"))
        out.append(check(f"composed_index_{n}", ind, tol, ref="multi-step-basis"))
        out.append(check(f"commutant_expectation_{n}", commutant_expectation_residual(ctx, n), tol,
                         ref="commutant-expectation"))
    return out
