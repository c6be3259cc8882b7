"""Dense complex-matrix kernel.

Hermitian eigendecomposition (parallel-ordered cyclic Jacobi), spectral
roots and pseudo-inverses, nullspaces and orthonormalization under
weighted trace inner products.  Matrices are plain ``numpy`` arrays;
batches of matrices are arrays of shape ``(n, N, N)``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_SEED = 0xC57A

# tolerance ledger
TOL_OPERATOR = 1e-9
TOL_PROJECTION = 1e-8
TOL_ROUNDING = 1e-6

# above this size herm_eig hands off to LAPACK unless jacobi is forced
JACOBI_MAX_DIM = 128


class NonHermitian(ValueError):
    pass


class NotPSD(ValueError):
    pass


def default_seed() -> int:
    """Seed from ``CSTAR_SEED`` if set, else the package default."""
    raw = os.environ.get("CSTAR_SEED")
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    return int(raw, 0)


def rng(seed: int | None = None) -> np.random.Generator:
    return np.random.default_rng(default_seed() if seed is None else seed)


def dag(x: np.ndarray) -> np.ndarray:
    """Conjugate transpose, batched over leading axes."""
    return np.conj(np.swapaxes(x, -1, -2))


def opnorm(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    return float(np.linalg.norm(x, 2))


def fro(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


def rel_residual(x: np.ndarray, y: np.ndarray) -> float:
    """``||x - y|| / max(1, ||y||)`` in Frobenius norm."""
    return fro(x - y) / max(1.0, fro(y))


def random_hermitian(n: int, gen: np.random.Generator) -> np.ndarray:
    a = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
    return (a + a.conj().T) / 2


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering all pairs of range(m), m even."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([min(players[i], players[m - 1 - i]) for i in range(m // 2)])
        q = np.array([max(players[i], players[m - 1 - i]) for i in range(m // 2)])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(h: np.ndarray, tol: float = 1e-13, max_sweeps: int = 60):
    """Cyclic Jacobi with round-robin ordering; each round applies n/2
    disjoint complex rotations at once."""
    a = np.array(h, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    if n == 1:
        return np.real(np.diag(a)).copy(), v
    scale = fro(a)
    if scale == 0.0:
        return np.zeros(n), v
    m = n + (n % 2)
    rounds = _round_robin(m)
    for _ in range(max_sweeps):
        off = fro(a - np.diag(np.diag(a)))
        if off < tol * scale:
            break
        for p, q in rounds:
            keep = q < n
            p, q = p[keep], q[keep]
            apq = a[p, q]
            mag = np.abs(apq)
            live = mag > 1e-300
            if not np.any(live):
                continue
            p, q, apq, mag = p[live], q[live], apq[live], mag[live]
            app = np.real(a[p, p])
            aqq = np.real(a[q, q])
            phase = apq / mag
            zeta = (aqq - app) / (2.0 * mag)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t[zeta == 0.0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # columns: A <- A G with G = [[c, s], [-s/phase, c/phase]]
            ap = a[:, p].copy()
            aq = a[:, q].copy()
            a[:, p] = ap * c - aq * (s / phase)
            a[:, q] = ap * s + aq * (c / phase)
            # rows: A <- G* A
            ap = a[p, :].copy()
            aq = a[q, :].copy()
            a[p, :] = c[:, None] * ap - (s * phase)[:, None] * aq
            a[q, :] = s[:, None] * ap + (c * phase)[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = vp * c - vq * (s / phase)
            v[:, q] = vp * s + vq * (c / phase)
    w = np.real(np.diag(a))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def herm_eig(h: np.ndarray, method: str = "auto"):
    """Eigendecomposition ``h = V diag(w) V*`` with ascending ``w``.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_DIM``).
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("square matrix expected")
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite entries")
    scale = fro(h)
    if fro(h - h.conj().T) > 1e-12 * max(scale, 1e-300):
        raise NonHermitian("matrix is not Hermitian")
    h = (h + h.conj().T) / 2
    if method == "auto":
        method = "jacobi" if h.shape[0] <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        return jacobi_eigh(h)
    if method == "lapack":
        w, v = np.linalg.eigh(h)
        return w, v
    raise ValueError(f"unknown method {method!r}")


def psd_root_pinv(h: np.ndarray, power: float, cutoff: float = 1e-10) -> np.ndarray:
    """``h**power`` on the support of a PSD matrix, zero on its kernel."""
    if power not in (0.5, -0.5, 1.0, -1.0):
        raise ValueError("power must be one of 1/2, -1/2, 1, -1")
    w, v = herm_eig(h)
    top = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    if top == 0.0:
        return np.zeros_like(v)
    if w[0] < -1e-8 * top:
        raise NotPSD(f"minimum eigenvalue {w[0]:.3e} below floor")
    f = np.zeros_like(w)
    live = w > cutoff * top
    f[live] = w[live] ** power
    return (v * f) @ v.conj().T


def nullspace(m: np.ndarray, rel_cutoff: float = 1e-9) -> np.ndarray:
    """Orthonormal kernel basis of ``m`` as rows of an array ``(k, n)``."""
    m = np.asarray(m)
    n = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(n, dtype=complex)
    # tall stacks: the kernel of m equals that of its triangular factor
    if m.shape[0] > 2 * n:
        m = np.linalg.qr(m, mode="r")
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    top = float(s[0]) if s.size else 0.0
    if top == 0.0:
        return np.eye(n, dtype=complex)
    rank = int(np.sum(s > rel_cutoff * top))
    return vh[rank:].conj()


@dataclass(frozen=True)
class InnerProduct:
    """``<x, y> = Tr(rho x* y)`` for a positive definite density ``rho``."""

    weight: np.ndarray

    @classmethod
    def tracial(cls, n: int) -> "InnerProduct":
        return cls(np.eye(n, dtype=complex) / n)

    def __post_init__(self):
        rho = np.asarray(self.weight, dtype=complex)
        if fro(rho - rho.conj().T) > 1e-10 * max(fro(rho), 1.0):
            raise NonHermitian("weight must be Hermitian")
        w = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
        if w[0] <= 0:
            raise NotPSD("weight must be positive definite")
        if abs(np.trace(rho).real - 1.0) > 1e-8:
            raise ValueError("weight must have unit trace")

    def __call__(self, x: np.ndarray, y: np.ndarray) -> complex:
        return complex(np.trace(self.weight @ x.conj().T @ y))

    def gram(self, xs: np.ndarray) -> np.ndarray:
        r = _whiten(xs, self.weight)
        flat = r.reshape(len(r), -1)
        return flat.conj() @ flat.T


def _whiten(xs: np.ndarray, rho: np.ndarray | None) -> np.ndarray:
    """Map x to x rho^{1/2} so the weighted product becomes Frobenius."""
    if rho is None:
        return xs
    return xs @ psd_root_pinv(rho, 0.5)


def orthonormalize(vectors, ip: InnerProduct | None = None, drop: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (rows of a batch) of the span of ``vectors``.

    ``ip=None`` is the plain Frobenius product ``Tr(x* y)``.  Greedy
    column-pivoted Gram-Schmidt: a vector whose residual after removing
    the already chosen directions is below ``drop`` times the largest
    input norm is discarded.
    """
    xs = np.asarray(vectors, dtype=complex)
    if xs.ndim == 2:
        xs = xs[None]
    if len(xs) == 0:
        return xs
    shape = xs.shape[1:]
    rho = None if ip is None else np.asarray(ip.weight)
    w = _whiten(xs, rho).reshape(len(xs), -1)
    norms = np.linalg.norm(w, axis=1)
    top = float(np.max(norms))
    if top == 0.0:
        return np.zeros((0,) + shape, dtype=complex)
    q, r, _ = scipy.linalg.qr(w.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > drop * top))
    basis = q[:, :rank]
    # one re-orthogonalization pass against round-off
    basis, _ = np.linalg.qr(basis)
    out = np.ascontiguousarray(basis.T).reshape((rank,) + shape)
    if rho is not None:
        out = out @ psd_root_pinv(rho, -0.5)
    return out


# check records -------------------------------------------------------------

STATUSES = ("pass", "fail", "hypothesis_not_met", "undefined")


@dataclass
class Check:
    """One verified identity: measured residual against a tolerance."""

    name: str
    paper_ref: str
    status: str
    residual: float | None
    tolerance: float

    def to_dict(self) -> dict:
        res = None if self.residual is None or not np.isfinite(self.residual) else float(self.residual)
        return {
            "name": self.name,
            "paper_ref": self.paper_ref,
            "status": self.status,
            "residual": res,
            "tolerance": self.tolerance,
        }


def check(name: str, residual, tol: float, hypothesis: bool = True, ref: str = "") -> Check:
    """Pass when residual <= tol; otherwise fail, or hypothesis_not_met when
    the identity is only claimed under a hypothesis that does not hold."""
    if residual is None or not np.isfinite(residual):
        return Check(name, ref or name, "undefined", None, tol)
    residual = float(residual)
    if residual <= tol:
        status = "pass"
    else:
        status = "fail" if hypothesis else "hypothesis_not_met"
    return Check(name, ref or name, status, residual, tol)
