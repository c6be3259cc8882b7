"""Concrete finite-dimensional *-algebras of matrices.

An algebra is stored extensionally: a Frobenius-orthonormal basis of its
underlying subspace of M_N.  Membership is a projection residual.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .numkernel import (
    TOL_OPERATOR,
    TOL_ROUNDING,
    dag,
    fro,
    herm_eig,
    nullspace,
    orthonormalize,
    rng,
)


class NotNested(ValueError):
    pass


class InconsistentBlocks(ValueError):
    pass


class NotProjection(ValueError):
    pass


class NotInCommutant(ValueError):
    pass


class RepresentationFailure(ValueError):
    pass


def is_projection(p: np.ndarray, tol: float = 1e-8) -> bool:
    """All eigenvalues within ``tol`` of {0, 1} and p = p*."""
    if fro(p - dag(p)) > tol * max(1.0, fro(p)):
        return False
    w = np.linalg.eigvalsh((p + dag(p)) / 2)
    return bool(np.all(np.minimum(np.abs(w), np.abs(w - 1)) <= tol))


class ConcreteAlgebra:
    """Unital *-subalgebra of M_N given by an orthonormal basis."""

    def __init__(self, basis: np.ndarray, unit: np.ndarray | None = None, name: str = ""):
        # contiguous storage keeps batched matmuls on the BLAS path
        basis = np.ascontiguousarray(basis, dtype=complex)
        self.basis = basis
        self.N = basis.shape[-1]
        self.unit = np.eye(self.N, dtype=complex) if unit is None else np.asarray(unit, dtype=complex)
        self.name = name
        self._gens: np.ndarray | None = None

    @classmethod
    def from_span(cls, mats, unit=None, name: str = "") -> "ConcreteAlgebra":
        return cls(orthonormalize(np.asarray(mats, dtype=complex)), unit, name)

    def __repr__(self):
        return f"ConcreteAlgebra({self.name or '?'}, dim={self.dim}, N={self.N})"

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def ambient_dim(self) -> int:
        return self.N

    @cached_property
    def _flat(self) -> np.ndarray:
        return self.basis.reshape(self.dim, -1)

    def coords(self, x: np.ndarray) -> np.ndarray:
        """Frobenius coordinates, batched over leading axes of ``x``."""
        x = np.asarray(x)
        flat = x.reshape(x.shape[:-2] + (-1,))
        return flat @ self._flat.conj().T

    def from_coords(self, c: np.ndarray) -> np.ndarray:
        return np.tensordot(c, self.basis, axes=([-1], [0]))

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.from_coords(self.coords(x))

    def residual(self, x: np.ndarray) -> float:
        return fro(x - self.project(x)) / max(1.0, fro(x))

    def contains(self, x: np.ndarray, tol: float = TOL_OPERATOR) -> bool:
        return self.residual(x) <= tol

    def contains_algebra(self, other: "ConcreteAlgebra", tol: float = TOL_OPERATOR) -> bool:
        if other.N != self.N:
            return False
        return all(self.residual(b) <= tol for b in other.basis)

    @cached_property
    def projector(self) -> np.ndarray:
        """Orthogonal projector onto the subspace in vectorized coordinates."""
        return self._flat.T @ self._flat.conj()

    def distance(self, other: "ConcreteAlgebra") -> float:
        """Frobenius distance of the subspace projectors."""
        if self.dim * other.dim == 0:
            return float(abs(self.dim - other.dim)) ** 0.5
        # ||P - Q||^2 = ||(1 - Q) P||^2 + ||(1 - P) Q||^2, summed over orthonormal bases
        a, b = self._flat, other._flat
        ra = a - (a @ b.conj().T) @ b
        rb = b - (b @ a.conj().T) @ a
        return float(np.sqrt(np.sum(np.abs(ra) ** 2) + np.sum(np.abs(rb) ** 2)))

    def same_as(self, other: "ConcreteAlgebra", tol: float = TOL_ROUNDING) -> bool:
        return self.dim == other.dim and self.distance(other) < tol

    def random_element(self, gen: np.random.Generator, hermitian: bool = False) -> np.ndarray:
        c = gen.standard_normal(self.dim) + 1j * gen.standard_normal(self.dim)
        x = self.from_coords(c)
        if hermitian:
            x = (x + dag(x)) / 2
        return x

    def generators(self, seed: int = 0x5EED) -> np.ndarray:
        """A small generating set: three random self-adjoint elements.

        Generic self-adjoint elements of a multi-matrix algebra generate it;
        callers that depend on this verify the result against the basis.
        """
        if self._gens is None:
            if self.dim <= 3:
                self._gens = self.basis
            else:
                g = rng(seed)
                self._gens = np.array([self.random_element(g, hermitian=True) for _ in range(3)])
        return self._gens

    def set_generators(self, gens: np.ndarray) -> None:
        self._gens = np.asarray(gens, dtype=complex)

    def closure_residual(self, max_pairs: int | None = None, seed: int = 1) -> float:
        """Worst relative residual of basis products and adjoints."""
        worst = max((self.residual(dag(b)) for b in self.basis), default=0.0)
        idx = [(i, j) for i in range(self.dim) for j in range(self.dim)]
        if max_pairs is not None and len(idx) > max_pairs:
            g = rng(seed)
            pick = g.choice(len(idx), size=max_pairs, replace=False)
            idx = [idx[k] for k in pick]
        for i, j in idx:
            worst = max(worst, self.residual(self.basis[i] @ self.basis[j]))
        return worst

    @cached_property
    def center(self) -> "ConcreteAlgebra":
        return relative_commutant(self, self).algebra

    @cached_property
    def blocks(self) -> "Blocks":
        return block_decompose(self)

    def mapped(self, f, name: str | None = None) -> "ConcreteAlgebra":
        """Image under a linear *-map given on matrices (batched)."""
        return ConcreteAlgebra.from_span(f(self.basis), f(self.unit[None])[0], name or self.name)


@dataclass
class Blocks:
    projections: np.ndarray  # minimal central projections z_i
    dims: tuple  # block sizes d_i
    multiplicities: tuple  # ambient multiplicities m_i (rank z_i = d_i m_i)


@dataclass
class InclusionPair:
    small: ConcreteAlgebra
    big: ConcreteAlgebra
    label: str = ""
    _lam: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.small.N != self.big.N:
            raise NotNested("ambient dimensions differ")
        if fro(self.small.unit - self.big.unit) > 1e-12:
            raise NotNested("units differ")
        if not self.big.contains_algebra(self.small):
            raise NotNested("small algebra not contained in big algebra")

    @property
    def B(self) -> ConcreteAlgebra:
        return self.small

    @property
    def A(self) -> ConcreteAlgebra:
        return self.big

    @property
    def inclusion_matrix(self) -> np.ndarray:
        if self._lam is None:
            self._lam = inclusion_matrix(self)
        return self._lam

    @cached_property
    def commutant(self) -> "CommutantSpace":
        return relative_commutant(self.small, self.big)


@dataclass
class CommutantSpace:
    small: ConcreteAlgebra
    big: ConcreteAlgebra
    algebra: ConcreteAlgebra

    @property
    def basis(self) -> np.ndarray:
        return self.algebra.basis

    @property
    def dim(self) -> int:
        return self.algebra.dim


def span_closure(generators, ambient_dim: int, max_rounds: int = 64) -> ConcreteAlgebra:
    """Smallest unital *-algebra containing ``generators``.

    Grows the span of words: S <- span(S, S g) for g in gens and gens*.
    """
    gens = np.asarray(generators, dtype=complex).reshape(-1, ambient_dim, ambient_dim)
    gens = np.concatenate([gens, dag(gens)])
    eye = np.eye(ambient_dim, dtype=complex)[None]
    basis = orthonormalize(np.concatenate([eye, gens]))
    for _ in range(max_rounds):
        prods = np.einsum("aij,bjk->abik", basis, gens, optimize=True).reshape(-1, ambient_dim, ambient_dim)
        new = orthonormalize(np.concatenate([basis, prods]))
        if len(new) == len(basis):
            break
        basis = new
    return ConcreteAlgebra(basis)


def relative_commutant(B: ConcreteAlgebra, A: ConcreteAlgebra, check: bool = True) -> CommutantSpace:
    """{x in A : xb = bx for all b in B}."""
    if check and not A.contains_algebra(B):
        raise NotNested("B is not contained in A")
    gens = B.generators()
    # x = sum c_p a_p; stack the commutator map column by column
    cols = []
    for g in gens:
        comm = A.basis @ g - g @ A.basis
        cols.append(comm.reshape(A.dim, -1).T)
    m = np.concatenate(cols, axis=0)
    scale = max(1.0, max(fro(g) for g in gens))
    ker = nullspace(m) if fro(m) > 1e-10 * scale else np.eye(A.dim, dtype=complex)
    basis = np.tensordot(ker, A.basis, axes=([1], [0]))
    alg = ConcreteAlgebra(orthonormalize(basis) if len(basis) else basis.reshape(0, A.N, A.N), A.unit)
    if check and len(gens) < B.dim:
        # generic generators: confirm against the full basis of B
        worst = 0.0
        for b in B.basis:
            worst = max(worst, fro(alg.basis @ b - b @ alg.basis))
        if worst > 1e-8:
            raise InconsistentBlocks("generating set of B is not generic")
    return CommutantSpace(B, A, alg)


def block_decompose(alg: ConcreteAlgebra, seed: int = 0xB10C) -> Blocks:
    """Minimal central projections and block sizes."""
    z = alg.center
    g = rng(seed)
    h = z.random_element(g, hermitian=True)
    unit = alg.unit
    if fro(unit - np.eye(alg.N)) > 1e-9:
        # non-unital in the ambient: diagonalize on the range of the unit only
        wu, vu = np.linalg.eigh((unit + dag(unit)) / 2)
        U = vu[:, wu > 0.5]
        w, v = herm_eig(dag(U) @ h @ U, method="lapack")
        v = U @ v
    else:
        w, v = herm_eig(h, method="lapack")
    # cluster the spectrum; each cluster is one minimal central projection
    scale = max(1.0, float(np.max(np.abs(w))))
    groups = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[i - 1] > 1e-6 * scale:
            groups.append([i])
        else:
            groups[-1].append(i)
    if len(groups) != z.dim:
        raise InconsistentBlocks(f"{len(groups)} spectral clusters for a {z.dim}-dim center")
    projs, dims, mults = [], [], []
    for grp in groups:
        p = v[:, grp] @ v[:, grp].conj().T
        d2 = float(np.real(np.einsum("aji,jk,aki->", alg.basis.conj(), p, alg.basis, optimize=True)))
        d2r = round(d2)
        if abs(d2 - d2r) > TOL_ROUNDING or d2r < 1:
            raise InconsistentBlocks(f"non-integer block dimension squared {d2}")
        d = int(round(d2r ** 0.5))
        if d * d != d2r:
            raise InconsistentBlocks(f"{d2r} is not a square")
        rank = len(grp)
        if rank % d:
            raise InconsistentBlocks("rank not a multiple of block size")
        projs.append(p)
        dims.append(d)
        mults.append(rank // d)
    first = [int(np.argmax(np.abs(np.diag(p)) > 0.5)) for p in projs]
    order = sorted(range(len(projs)), key=lambda i: (dims[i], mults[i], first[i]))
    return Blocks(
        np.array([projs[i] for i in order]),
        tuple(dims[i] for i in order),
        tuple(mults[i] for i in order),
    )


def inclusion_matrix(pair: InclusionPair) -> np.ndarray:
    """Lambda_ij = multiplicity of B-block j inside A-block i."""
    a, b = pair.big.blocks, pair.small.blocks
    lam = np.zeros((len(a.dims), len(b.dims)), dtype=int)
    for i, zi in enumerate(a.projections):
        for j, wj in enumerate(b.projections):
            rank = float(np.real(np.trace(zi @ wj)))
            val = rank / (a.multiplicities[i] * b.dims[j])
            r = round(val)
            if abs(val - r) > TOL_ROUNDING:
                raise InconsistentBlocks(f"non-integer multiplicity {val}")
            lam[i, j] = r
    return lam


def connected_components(lam: np.ndarray) -> list[tuple[list[int], list[int]]]:
    """Connected components of the bipartite Bratteli graph of ``lam``."""
    na, nb = lam.shape
    seen_a, seen_b = set(), set()
    comps = []
    for start in range(na):
        if start in seen_a:
            continue
        ca, cb = {start}, set()
        stack = [("a", start)]
        while stack:
            side, k = stack.pop()
            if side == "a":
                for j in range(nb):
                    if lam[k, j] and j not in cb:
                        cb.add(j)
                        stack.append(("b", j))
            else:
                for i in range(na):
                    if lam[i, k] and i not in ca:
                        ca.add(i)
                        stack.append(("a", i))
        seen_a |= ca
        seen_b |= cb
        comps.append((sorted(ca), sorted(cb)))
    return comps


def compress_by_projection(p: np.ndarray, pair: InclusionPair) -> InclusionPair:
    """The inclusion pBp in pAp with unit p."""
    if not is_projection(p) or fro(p) < 1e-12:
        raise NotProjection("p must be a non-zero projection")
    if not pair.big.contains(p, 1e-8):
        raise NotInCommutant("p is not in A")
    for b in pair.small.basis:
        if fro(p @ b - b @ p) > 1e-8:
            raise NotInCommutant("p does not commute with B")
    pb = ConcreteAlgebra.from_span(p @ pair.small.basis @ p, p)
    pa = ConcreteAlgebra.from_span(p @ pair.big.basis @ p, p)
    return InclusionPair(pb, pa, label=pair.label + "|p")


def irreducible_subspace(alg: ConcreteAlgebra, z: np.ndarray, seed: int = 7) -> np.ndarray:
    """Orthonormal columns spanning an irreducible A-submodule inside range(z)."""
    g = rng(seed)
    comp = alg.from_coords(alg.coords(z[None] @ alg.basis))  # z A
    h = np.tensordot(g.standard_normal(len(comp)), comp, axes=(0, 0))
    h = (h + dag(h)) / 2
    w, v = np.linalg.eigh(z @ h @ z)
    # an eigenvector of a generic element of zA for a nonzero eigenvalue lies
    # in the range of a minimal projection of A
    k = int(np.argmax(np.abs(w)))
    xi = v[:, k]
    vecs = np.einsum("aij,j->ia", alg.basis, xi, optimize=True)
    u, s, _ = np.linalg.svd(vecs, full_matrices=False)
    r = int(np.sum(s > 1e-9 * s[0]))
    return u[:, :r]


def re_represent(alg: ConcreteAlgebra, operators=(), density: np.ndarray | None = None):
    """Faithful representation of ``alg`` on sum of its block sizes.

    Returns ``(pi, new_alg, new_ops, new_density)`` where ``pi`` maps
    batches of elements of ``alg`` to the new ambient.  The density (if
    given) is transported so that traces of elements are preserved.
    """
    blocks = alg.blocks
    us = []
    for z, d in zip(blocks.projections, blocks.dims):
        u = irreducible_subspace(alg, z)
        if u.shape[1] != d:
            raise RepresentationFailure(f"submodule of size {u.shape[1]} for block of size {d}")
        us.append(u)
    U = np.concatenate(us, axis=1)  # N x sum(d)

    def pi(x):
        return dag(U) @ x @ U

    new_alg = ConcreteAlgebra.from_span(pi(alg.basis), np.eye(U.shape[1], dtype=complex), alg.name)
    err = max(fro(pi(a @ b) - pi(a) @ pi(b)) for a in alg.basis[:8] for b in alg.basis[:8])
    if err > 1e-8 or new_alg.dim != alg.dim:
        raise RepresentationFailure(f"isomorphism residual {err:.2e}")
    new_ops = [pi(np.asarray(o)) for o in operators]
    new_rho = None
    if density is not None:
        # Tr(rho a) = sum_i m_i Tr(pi_i(rho a)) for rho in alg
        r = alg.project(dag(np.asarray(density)))
        r = dag(r)
        weights = np.concatenate([np.full(d, m) for d, m in zip(blocks.dims, blocks.multiplicities)])
        new_rho = np.diag(weights) @ pi(r)
        new_rho = (new_rho + dag(new_rho)) / 2
    return pi, new_alg, new_ops, new_rho
