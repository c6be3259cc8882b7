"""Traces, conditional expectations, quasi-bases and the Watatani index."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .numkernel import (
    InnerProduct,
    dag,
    fro,
    opnorm,
    orthonormalize,
    psd_root_pinv,
    rng,
)
from .staralg import (
    ConcreteAlgebra,
    InclusionPair,
    NotInCommutant,
    connected_components,
    relative_commutant,
)


class NotFaithful(ValueError):
    pass


class NotConditionalExpectation(ValueError):
    pass


class CertificateFailure(RuntimeError):
    pass


class NotCentral(RuntimeError):
    pass


class InfiniteIndex(RuntimeError):
    pass


@dataclass
class TraceState:
    """Tracial state given by weights on minimal projections of each block."""

    algebra: ConcreteAlgebra
    weights: np.ndarray
    density: np.ndarray

    @classmethod
    def from_weights(cls, alg: ConcreteAlgebra, weights) -> "TraceState":
        w = np.asarray(weights, dtype=float)
        bl = alg.blocks
        if len(w) != len(bl.dims):
            raise ValueError("one weight per block expected")
        if np.any(w <= 0):
            raise NotFaithful("trace weights must be positive")
        w = w / float(np.dot(w, bl.dims))
        rho = sum((wi / mi) * z for wi, mi, z in zip(w, bl.multiplicities, bl.projections))
        return cls(alg, w, np.asarray(rho, dtype=complex))

    @classmethod
    def normalized(cls, alg: ConcreteAlgebra) -> "TraceState":
        """Restriction of Tr/N."""
        bl = alg.blocks
        return cls.from_weights(alg, [m / alg.N for m in bl.multiplicities])

    @classmethod
    def from_density(cls, alg: ConcreteAlgebra, rho: np.ndarray) -> "TraceState":
        bl = alg.blocks
        w = []
        for z, d, m in zip(bl.projections, bl.dims, bl.multiplicities):
            w.append(float(np.real(np.trace(rho @ z))) / d)
        return cls(alg, np.array(w), np.asarray(rho, dtype=complex))

    def __call__(self, x: np.ndarray):
        return np.einsum("ij,...ji->...", self.density, x, optimize=True)

    @property
    def inner_product(self) -> InnerProduct:
        return InnerProduct(self.density)

    def trace_residual(self, seed: int = 3) -> float:
        g = rng(seed)
        x = self.algebra.random_element(g)
        y = self.algebra.random_element(g)
        return abs(self(x @ y) - self(y @ x)) / max(1.0, fro(x) * fro(y))


@dataclass
class MinimalityCertificate:
    minimal: bool
    c: float
    residual: float  # ||H_E(x) - c ctr(x)|| over the commutant basis
    tracial_residual: float
    classic_residual: float  # ||H_E(x) - c E(x)||
    factor_pair: bool
    scalar_index: bool


class CondExp:
    """A conditional expectation E: A -> B given as a linear map."""

    def __init__(self, pair: InclusionPair, apply, density: np.ndarray | None = None, name: str = ""):
        self.pair = pair
        self._apply = apply
        self.density = density  # trace density when E is trace-preserving
        self.name = name
        self._qb: np.ndarray | None = None
        self._index: np.ndarray | None = None
        self._cert: MinimalityCertificate | None = None
        self.pp: float | None = None
        self.flags: dict = {}
        # E(x) = sum_q <kern_q, x> range_q when E is a weighted projection
        self.factors: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def A(self) -> ConcreteAlgebra:
        return self.pair.big

    @property
    def B(self) -> ConcreteAlgebra:
        return self.pair.small

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._apply(np.asarray(x, dtype=complex))

    @property
    def quasi_basis(self) -> np.ndarray:
        if self._qb is None:
            self._qb = quasi_basis(self)
        return self._qb

    def set_quasi_basis(self, qb: np.ndarray) -> None:
        self._qb = np.asarray(qb, dtype=complex)
        self._index = None

    @property
    def index(self) -> np.ndarray:
        if self._index is None:
            self._index = watatani_index(self)
        return self._index

    @property
    def index_norm(self) -> float:
        return opnorm(self.index)

    @property
    def scalar_index(self) -> bool:
        ind = self.index
        return fro(ind - self.index_norm * np.eye(self.A.N)) <= 1e-8 * max(1.0, fro(ind))

    @property
    def certificate(self) -> MinimalityCertificate:
        if self._cert is None:
            self._cert = minimality_check(self)
        return self._cert

    def matrix(self) -> np.ndarray:
        """E on A-coordinates (Frobenius basis of A)."""
        return self.A.coords(self(self.A.basis)).T

    # checks ---------------------------------------------------------------

    def bimodule_residual(self, seed: int = 11, trials: int = 4) -> float:
        g = rng(seed)
        worst = 0.0
        for _ in range(trials):
            x = self.A.random_element(g)
            b = self.B.random_element(g)
            c = self.B.random_element(g)
            lhs = self(b @ x @ c)
            rhs = b @ self(x) @ c
            worst = max(worst, fro(lhs - rhs) / max(1.0, fro(b) * fro(x) * fro(c)))
        return worst

    def unital_residual(self) -> float:
        return fro(self(self.A.unit) - self.A.unit)

    def positivity_floor(self, seed: int = 12, trials: int = 8) -> float:
        """Most negative relative eigenvalue of E(xx*) over a battery."""
        g = rng(seed)
        worst = 0.0
        for _ in range(trials):
            x = self.A.random_element(g)
            y = self(x @ dag(x))
            w = np.linalg.eigvalsh((y + dag(y)) / 2)
            worst = min(worst, float(w[0]) / max(1.0, fro(x) ** 2))
        return worst

    def kadison_schwarz_floor(self, seed: int = 13, trials: int = 8) -> float:
        """Most negative relative eigenvalue of E(x*x) - E(x)*E(x)."""
        g = rng(seed)
        worst = 0.0
        for _ in range(trials):
            x = self.A.random_element(g)
            ex = self(x)
            y = self(dag(x) @ x) - dag(ex) @ ex
            w = np.linalg.eigvalsh((y + dag(y)) / 2)
            worst = min(worst, float(w[0]) / max(1.0, fro(x) ** 2))
        return worst

    def idempotent_residual(self, seed: int = 14) -> float:
        g = rng(seed)
        x = self.A.random_element(g)
        ex = self(x)
        return max(fro(self(ex) - ex), self.B.residual(ex) * max(1.0, fro(ex))) / max(1.0, fro(x))

    def validate(self, tol: float = 1e-9) -> None:
        if self.unital_residual() > tol:
            raise NotConditionalExpectation("E(1) != 1")
        if self.idempotent_residual() > tol:
            raise NotConditionalExpectation("E is not a projection onto B")
        if self.bimodule_residual() > tol:
            raise NotConditionalExpectation("E is not a B-bimodule map")
        if self.positivity_floor() < -1e-8:
            raise NotConditionalExpectation("E is not positive")


def projection_expectation(pair: InclusionPair, rho: np.ndarray, name: str = "") -> CondExp:
    """Orthogonal projection of A onto B for <x, y> = Tr(rho x* y)."""
    rho = np.asarray(rho, dtype=complex)
    w = np.linalg.eigvalsh((rho + dag(rho)) / 2)
    if w[0] <= 1e-14 * max(1.0, w[-1]):
        raise NotFaithful("weight is not faithful")
    rho = rho / np.trace(rho).real
    wb = orthonormalize(pair.small.basis, InnerProduct(rho))
    # coefficient of x along w_q is Tr(rho w_q* x)
    kern = np.swapaxes(rho[None] @ dag(wb), -1, -2).reshape(len(wb), -1)

    def apply(x):
        flat = x.reshape(x.shape[:-2] + (-1,))
        c = flat @ kern.T
        return np.tensordot(c, wb, axes=([-1], [0]))

    E = CondExp(pair, apply, rho, name)
    E.factors = (kern, wb)
    return E


def trace_preserving_expectation(pair: InclusionPair, tr: TraceState) -> CondExp:
    if np.any(tr.weights <= 0):
        raise NotFaithful("trace is not faithful")
    E = projection_expectation(pair, tr.density, name="tr-preserving")
    return E


def state_expectation(pair: InclusionPair, rho: np.ndarray) -> CondExp:
    """Expectation preserving the state Tr(rho .); validated."""
    E = projection_expectation(pair, rho, name="state")
    E.density = None
    E.validate()
    return E


def quasi_basis(E: CondExp, seed: int | None = None, passes: int = 2) -> np.ndarray:
    """Quasi-basis by module Gram-Schmidt over B.

    Each remainder r is normalized by E(r* r)^{-1/2} on its support, so the
    generators m satisfy E(m_i* m_j) = delta_ij q_i with q_i projections.
    ``seed`` shuffles and mixes the spanning set to produce another basis.
    """
    A = E.A
    if E.B.dim == A.dim:
        return A.unit[None].astype(complex)
    span = A.basis
    if seed is not None:
        g = rng(seed)
        mix = g.standard_normal((A.dim, A.dim)) + 1j * g.standard_normal((A.dim, A.dim))
        q, _ = np.linalg.qr(mix)
        span = np.tensordot(q, A.basis, axes=([1], [0]))
    scale = max(1.0, max(fro(x) for x in span))
    gens: list[np.ndarray] = []
    for x in span:
        r = x.copy()
        for _ in range(passes):
            if gens:
                G = np.array(gens)
                r = r - np.sum(G @ E(dag(G) @ r[None]), axis=0)
        er = E(dag(r) @ r)
        er = (er + dag(er)) / 2
        if opnorm(er) <= 1e-20 * scale**2:
            continue
        s = psd_root_pinv(er, -0.5, cutoff=1e-10)
        m = r @ s
        if fro(m) > 1e-9:
            gens.append(m)
    qb = np.array(gens)
    res = quasi_basis_residual(E, qb)
    if res > 1e-6:
        raise InfiniteIndex(f"quasi-basis did not converge (residual {res:.2e})")
    return qb


def quasi_basis_residual(E: CondExp, qb: np.ndarray, both: bool = True) -> float:
    """Worst relative residual of x = sum l E(l* x) (and x = sum E(x l) l*)."""
    X = E.A.basis
    N = E.A.N
    flatX = X.reshape(len(X), -1)
    if E.factors is not None:
        # l E(l* x) = sum_q Tr(K_q l* x) l w_q, so both sums are a rank-factored map
        kern, wb = E.factors
        K = kern.reshape(-1, N, N)
        Kt = np.swapaxes(K, -1, -2)  # <kern_q, y> = Tr(Kt_q y)
        lk = (Kt[None] @ dag(qb)[:, None]).reshape(-1, N * N)  # Tr(Kt_q l* x)
        lw = (qb[:, None] @ wb[None]).reshape(-1, N * N)
        left = (flatX @ np.swapaxes(lk.reshape(-1, N, N), -1, -2).reshape(-1, N * N).T) @ lw
        worst = fro(left - flatX) / max(1.0, fro(X))
        if both:
            # E(x l) l* = sum_q Tr(l Kt_q x) w_q l*
            rk = (qb[:, None] @ Kt[None]).reshape(-1, N, N)
            rw = (wb[None] @ dag(qb)[:, None]).reshape(-1, N * N)
            right = (flatX @ np.swapaxes(rk, -1, -2).reshape(-1, N * N).T) @ rw
            worst = max(worst, fro(right - flatX) / max(1.0, fro(X)))
        return worst
    left = np.zeros_like(X)
    right = np.zeros_like(X)
    for lam in qb:
        left += lam[None] @ E(dag(lam)[None] @ X)
        if both:
            right += E(X @ lam[None]) @ dag(lam)[None]
    worst = fro(left - X) / max(1.0, fro(X))
    if both:
        worst = max(worst, fro(right - X) / max(1.0, fro(X)))
    return worst


def watatani_index(E: CondExp, check: bool = True) -> np.ndarray:
    qb = E.quasi_basis
    ind = np.sum(qb @ dag(qb), axis=0)
    if check:
        A = E.A
        comm = max(fro(ind @ a - a @ ind) for a in A.basis)
        if comm > 1e-9 * max(1.0, fro(ind)):
            raise NotCentral(f"index commutator {comm:.2e}")
    return ind


def index_independence(E: CondExp, seed: int = 0xBA5E) -> float:
    """Difference of the index computed from a second quasi-basis."""
    qb2 = quasi_basis(E, seed=seed)
    ind2 = np.sum(qb2 @ dag(qb2), axis=0)
    return fro(ind2 - E.index) / max(1.0, fro(E.index))


def allowed_scalar_index(v: float, tol: float = 1e-6) -> bool:
    """Whether v lies in {1} u {4 cos^2(pi/n) : n >= 3} u [4, inf)."""
    if v >= 4 - tol:
        return True
    if abs(v - 1) <= tol:
        return True
    n = 3
    while True:
        val = 4 * np.cos(np.pi / n) ** 2
        if abs(v - val) <= tol:
            return True
        if val > v + tol:
            return False
        n += 1
        if n > 10**6:
            return False


def pp_ratio(E: CondExp, a: np.ndarray) -> float:
    """Largest c with E(a) - c a >= 0 for a positive a."""
    ea = E(a)
    s = psd_root_pinv((ea + dag(ea)) / 2, -0.5, cutoff=1e-12)
    m = s @ a @ s
    top = float(np.linalg.eigvalsh((m + dag(m)) / 2)[-1])
    return np.inf if top <= 0 else 1.0 / top


def pp_constant(E: CondExp, samples: int = 2000, seed: int | None = None, refine: int = 200):
    """Sampled Pimsner-Popa constant.

    The minimum over the battery is an upper bound on the true constant.
    Samples are minimal spectral projections of random self-adjoint
    elements (rank-one in A) and random positives xx*; the best sample is
    then improved by a random local search.  Returns (c, info).
    """
    A = E.A
    g = rng(seed)

    def top_projection(h):
        w, v = np.linalg.eigh(h)
        k = np.isclose(w, w[-1], rtol=0, atol=1e-9 * max(1.0, abs(w[-1])))
        vv = v[:, k]
        return vv @ dag(vv)

    best = np.inf
    best_h = None
    for i in range(samples):
        h = A.random_element(g, hermitian=True)
        a = top_projection(h) if i % 2 == 0 else h @ h
        c = pp_ratio(E, a)
        if c < best:
            best, best_h = c, h
    step = 0.3
    for _ in range(refine):
        h = best_h + step * A.random_element(g, hermitian=True)
        c = pp_ratio(E, top_projection(h))
        if c < best:
            best, best_h = c, h
        else:
            step *= 0.98
        if step < 1e-10:
            break
    E.pp = best
    return best, {"samples": samples, "seed": g.bit_generator.seed_seq.entropy, "refine": refine}


def h_map(E: CondExp, x: np.ndarray, check: bool = True) -> np.ndarray:
    """H_E(x) = sum_i l_i x l_i* for x in B' n A."""
    x = np.asarray(x, dtype=complex)
    if check:
        for b in E.B.basis:
            if fro(x @ b - b @ x) > 1e-8 * max(1.0, fro(x)):
                raise NotInCommutant("x does not commute with B")
    out = np.zeros(x.shape, dtype=complex)
    for l in E.quasi_basis:
        out += l @ x @ dag(l)
    return out


def center_valued_trace(A: ConcreteAlgebra, x: np.ndarray) -> np.ndarray:
    """sum_i z_i tr_i(x) with tr_i the normalized trace of block i."""
    bl = A.blocks
    out = np.zeros_like(np.asarray(x, dtype=complex))
    for z in bl.projections:
        val = np.einsum("ij,...ji->...", z, x, optimize=True) / np.trace(z).real
        out = out + np.multiply.outer(val, z)
    return out


def _component_supports(pair: InclusionPair) -> list[np.ndarray]:
    """Central supports in A of the connected components of the Bratteli graph."""
    projs = pair.big.blocks.projections
    comps = connected_components(pair.inclusion_matrix)
    return [sum(projs[i] for i in ca) for ca, _ in comps]


def minimality_check(E: CondExp) -> MinimalityCertificate:
    """Minimality certificate: H_E = c ctr_A on B' n A and E tracial there,
    with one constant c per connected component of the Bratteli graph.

    For a pair of factors ctr_A(x) = E(x) on B' n A for the minimal E, so
    the condition is H_E = c E; that classical residual is also reported.
    """
    A = E.A
    comm = relative_commutant(E.B, A).algebra
    X = comm.basis
    H = h_map(E, X, check=False)
    one = A.unit
    H1 = h_map(E, one, check=False)
    c = float(np.real(np.trace(H1))) / A.N
    ctr = center_valued_trace(A, X)
    # one constant per connected component of the Bratteli graph
    zs = _component_supports(E.pair)
    cs = [float(np.real(np.trace(z @ H1) / np.trace(z))) for z in zs]
    cz = sum(ci * z for ci, z in zip(cs, zs))
    if len(zs) > 1:
        c = max(cs)
    res = fro(H - cz[None] @ ctr) / max(1.0, fro(X))
    EX = E(X)
    classic = fro(H - c * EX) / max(1.0, fro(X))
    prods = np.einsum("aij,bjk->abik", X, X, optimize=True)
    EP = E(prods)
    tracial = fro(EP - np.swapaxes(EP, 0, 1)) / max(1.0, fro(X) ** 2)
    factor_pair = A.center.dim == 1 and E.B.center.dim == 1
    scalar = fro(H1 - c * one) <= 1e-8 * max(1.0, fro(H1))
    central = fro(H1 - cz) <= 1e-8 * max(1.0, fro(H1))
    minimal = res <= 1e-8 and tracial <= 1e-8 and central
    if factor_pair:
        minimal = minimal and classic <= 1e-8
    return MinimalityCertificate(minimal, c, res, tracial, classic, factor_pair, scalar)


def perron_weights(pair: InclusionPair, reference: TraceState | None = None) -> np.ndarray:
    """Trace weights on A-blocks from Perron-Frobenius vectors of Lambda Lambda^T.

    Each connected component gets its own vector, scaled so that the mass of
    the component's central support matches ``reference`` (default Tr/N).
    """
    A = pair.big
    lam = pair.inclusion_matrix.astype(float)
    bl = A.blocks
    dims = np.array(bl.dims, dtype=float)
    if reference is None:
        reference = TraceState.normalized(A)
    ref_mass = reference.weights * dims
    w = np.zeros(len(dims))
    for ca, cb in connected_components(lam):
        sub = lam[np.ix_(ca, cb)]
        vals, vecs = np.linalg.eigh(sub @ sub.T)
        v = np.abs(vecs[:, -1])
        mass = float(np.dot(v, dims[ca]))
        w[ca] = v * (float(np.sum(ref_mass[ca])) / mass)
    return w


def expectation_from_h(E: CondExp, h: np.ndarray) -> CondExp:
    """E_h(x) = E(h^{1/2} x h^{1/2}) for positive h in B' n A with E(h) = 1."""
    r = psd_root_pinv(h, 0.5)
    return CondExp(E.pair, lambda x: E(r @ x @ r), None, name="E_h")


def refine_minimal(E: CondExp, seed: int | None = None, maxiter: int = 2000) -> CondExp:
    """Minimize ||Ind(E_h)|| over positive h in B' n A with E(h) = 1."""
    comm = relative_commutant(E.B, E.A).algebra
    herm = orthonormalize(np.concatenate([comm.basis + dag(comm.basis), 1j * (comm.basis - dag(comm.basis))]))
    g = rng(seed)

    def candidate(theta):
        k = np.tensordot(theta, herm, axes=(0, 0))
        k = (k + dag(k)) / 2
        w, v = np.linalg.eigh(k)
        h = (v * np.exp(w)) @ dag(v)
        eh = E(h)
        s = psd_root_pinv((eh + dag(eh)) / 2, -0.5)
        h = s @ h @ s
        return expectation_from_h(E, (h + dag(h)) / 2)

    def objective(theta):
        try:
            return candidate(theta).index_norm
        except (InfiniteIndex, NotCentral, np.linalg.LinAlgError):
            return 1e12

    x0 = 1e-3 * g.standard_normal(len(herm))
    res = scipy.optimize.minimize(
        objective, x0, method="Nelder-Mead",
        options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-12},
    )
    out = candidate(res.x)
    out.name = "refined"
    return out


def minimal_expectation(pair: InclusionPair, reference: TraceState | None = None) -> CondExp:
    """Certified minimal conditional expectation.

    Built as the trace-preserving expectation for Perron-Frobenius weights
    (per connected component), then certified; on failure a numerical
    refinement is tried and re-certified.
    """
    w = perron_weights(pair, reference)
    tr = TraceState.from_weights(pair.big, w)
    E = trace_preserving_expectation(pair, tr)
    E.name = "minimal"
    E.flags["components"] = len(connected_components(pair.inclusion_matrix))
    E.flags["connected"] = E.flags["components"] == 1
    if not E.certificate.minimal:
        E2 = refine_minimal(E)
        if not E2.certificate.minimal:
            raise CertificateFailure("no candidate passed the minimality certificate")
        E = E2
    if E.scalar_index and not allowed_scalar_index(E.index_norm):
        raise CertificateFailure(f"scalar index {E.index_norm} outside the allowed set")
    E.trace = tr
    return E


def local_index_residual(pair: InclusionPair, p: np.ndarray) -> float:
    """|[pAp:pBp]_0 - tr(p)^2 [A:B]_0| for a projection p in B' n A."""
    from .staralg import compress_by_projection

    E = minimal_expectation(pair)
    trp = float(np.real(E.trace(p)))
    cut = compress_by_projection(p, pair)
    # act on the range of p so the compressed algebras are unital
    w, v = np.linalg.eigh((p + dag(p)) / 2)
    U = v[:, w > 0.5]
    small = ConcreteAlgebra.from_span(dag(U) @ cut.small.basis @ U)
    big = ConcreteAlgebra.from_span(dag(U) @ cut.big.basis @ U)
    local = minimal_expectation(InclusionPair(small, big)).index_norm
    return abs(local - trp ** 2 * E.index_norm)


def expect_suite(pair: InclusionPair, seed: int | None = None, tol: float = 1e-8,
                 pp_samples: int = 200) -> list:
    """Invariants of the minimal expectation of one inclusion."""
    from .numkernel import check
    from .staralg import relative_commutant

    E = minimal_expectation(pair)
    cert = E.certificate
    factor = cert.factor_pair
    qb2 = quasi_basis(E, seed=0xBA5E if seed is None else seed)
    ind = watatani_index(E, check=False)
    out = [
        check("quasi_basis_two_sided", quasi_basis_residual(E, E.quasi_basis), tol, ref="quasi-basis"),
        check("quasi_basis_second_basis", quasi_basis_residual(E, qb2), tol, ref="quasi-basis"),
        check("index_basis_independent", index_independence(E), tol, ref="index-independence"),
        check("index_central", E.A.center.residual(ind) * max(1.0, fro(ind)), tol, ref="watatani-index"),
        check("unital", E.unital_residual(), tol, ref="conditional-expectation"),
        check("idempotent", E.idempotent_residual(), tol, ref="conditional-expectation"),
        check("bimodule", E.bimodule_residual(), tol, ref="conditional-expectation"),
        check("positive", max(0.0, -E.positivity_floor()), tol, ref="conditional-expectation"),
        check("kadison_schwarz", max(0.0, -E.kadison_schwarz_floor()), tol, ref="kadison-schwarz"),
        check("minimality_certificate", max(cert.residual, cert.tracial_residual), tol, ref="minimality-certificate"),
        check("minimality_certificate_classic", cert.classic_residual, tol, factor, "minimality-certificate"),
    ]
    if E.scalar_index:
        ok = allowed_scalar_index(E.index_norm)
        out.append(check("scalar_index_allowed", 0.0 if ok else 1.0, 1e-6, ref="index-rigidity"))
    c, _ = pp_constant(E, samples=pp_samples, seed=seed)
    out.append(check("pp_constant_lower_bound", max(0.0, 1.0 / E.index_norm - c), 1e-6, ref="pimsner-popa"))
    comm = relative_commutant(pair.small, pair.big).algebra
    worst = 0.0
    for p in comm.blocks.projections:
        if fro(p - pair.big.unit) > 1e-9:
            worst = max(worst, local_index_residual(pair, p))
    out.append(check("local_index", worst, 1e-6, factor, "local-index"))
    return out
