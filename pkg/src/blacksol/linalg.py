"""Banded symmetric factorizations, Lanczos in a user metric, dense cross-check solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack


class LinalgError(RuntimeError):
    pass


class PivotError(LinalgError):
    def __init__(self, index: int):
        super().__init__(f"non-positive pivot at row {index}")
        self.index = index


class LanczosBreakdown(LinalgError):
    pass


class QLConvergenceError(LinalgError):
    pass


@dataclass(frozen=True)
class BandedMatrix:
    """Symmetric banded matrix in LAPACK upper storage.

    ``ab[b + i - j, j] = A[i, j]`` for ``max(0, j - b) <= i <= j``.
    """

    ab: np.ndarray

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.ab.shape[0] - 1

    @classmethod
    def from_diagonals(cls, diags) -> "BandedMatrix":
        """``diags[k]`` is the k-th superdiagonal (length n - k)."""
        b = len(diags) - 1
        n = len(diags[0])
        ab = np.zeros((b + 1, n))
        for k, d in enumerate(diags):
            d = np.asarray(d, dtype=float)
            if d.shape != (n - k,):
                raise LinalgError(f"diagonal {k} has length {d.size}, expected {n - k}")
            ab[b - k, k:] = d
        if not np.all(np.isfinite(ab)):
            raise LinalgError("non-finite band entries")
        return cls(ab)

    @classmethod
    def from_dense(cls, A, bandwidth: int) -> "BandedMatrix":
        A = np.asarray(A, dtype=float)
        return cls.from_diagonals([np.diagonal(A, k).copy() for k in range(bandwidth + 1)])

    def diagonal(self, k: int = 0) -> np.ndarray:
        return self.ab[self.bandwidth - k, k:]

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x)
        y = self.diagonal(0) * x
        for k in range(1, self.bandwidth + 1):
            d = self.diagonal(k)
            y[:-k] += d * x[k:]
            y[k:] += d * x[:-k]
        return y

    def tosparse(self) -> sp.csc_matrix:
        b = self.bandwidth
        offs = list(range(-b, b + 1))
        data = [self.diagonal(abs(k)) for k in offs]
        return sp.diags(data, offs, shape=(self.n, self.n), format="csc")

    def todense(self) -> np.ndarray:
        return self.tosparse().toarray()

    def __add__(self, other: "BandedMatrix") -> "BandedMatrix":
        b = max(self.bandwidth, other.bandwidth)
        return BandedMatrix.from_diagonals(
            [_diag_or_zero(self, k) + _diag_or_zero(other, k) for k in range(b + 1)]
        )

    def scaled(self, a: float) -> "BandedMatrix":
        return BandedMatrix(a * self.ab)

    def add_diagonal(self, d) -> "BandedMatrix":
        ab = self.ab.copy()
        ab[self.bandwidth] += d
        return BandedMatrix(ab)


def _diag_or_zero(M: BandedMatrix, k: int) -> np.ndarray:
    return M.diagonal(k) if k <= M.bandwidth else np.zeros(M.n - k)


@dataclass(frozen=True)
class CholeskyFactor:
    cb: np.ndarray  # upper band Cholesky factor, LAPACK layout

    def solve(self, b) -> np.ndarray:
        x, info = lapack.dpbtrs(self.cb, np.asarray(b, dtype=float), lower=0)
        if info != 0:
            raise LinalgError(f"banded triangular solve failed (info={info})")
        return x


def cholesky_banded(A: BandedMatrix) -> CholeskyFactor:
    """Banded Cholesky via LAPACK dpbtrf; reports the first failing pivot."""
    cb, info = lapack.dpbtrf(A.ab, lower=0)
    if info > 0:
        raise PivotError(info - 1)
    if info < 0:
        raise LinalgError(f"dpbtrf argument error {info}")
    return CholeskyFactor(cb)


class BorderedSolver:
    """Solve [[A, C], [C^T, 0]] [x; y] = [f; g] by sparse LU.

    Used wherever the constrained block A is indefinite or has a
    near-kernel that the constraints remove.
    """

    def __init__(self, A, C):
        A = sp.csc_matrix(A)
        C = np.asarray(C, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        n, m = A.shape[0], C.shape[1]
        K = sp.bmat([[A, sp.csc_matrix(C)], [sp.csc_matrix(C.T), None]], format="csc")
        try:
            self._lu = spla.splu(K)
        except RuntimeError as exc:
            raise LinalgError(f"bordered system is singular: {exc}") from exc
        self.n, self.m = n, m

    def solve(self, f, g=None) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.zeros(self.n + self.m)
        rhs[: self.n] = f
        if g is not None:
            rhs[self.n :] = g
        z = self._lu.solve(rhs)
        return z[: self.n], z[self.n :]


@dataclass
class RitzPairs:
    values: np.ndarray  # descending
    vectors: np.ndarray  # columns, unit length in the metric
    residual_bounds: np.ndarray
    converged: np.ndarray
    steps: int
    restarts: int


def lanczos_custom_inner(
    op_apply: Callable[[np.ndarray], np.ndarray],
    inner: Callable[[np.ndarray], np.ndarray] | None,
    k: int,
    reorth: bool = True,
    *,
    n: int | None = None,
    v0: np.ndarray | None = None,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-11,
    max_dim: int | None = None,
    max_restarts: int = 3,
    seed: int = 0,
) -> RitzPairs:
    """Lanczos for the k largest eigenvalues of an operator self-adjoint in <x, My>.

    ``inner`` applies the Gram matrix M of the inner product (None means
    Euclidean).  Only one M application is made per step because M q_j is
    carried alongside the basis.  ``project`` maps a vector back onto an
    invariant constraint subspace and is applied to every Krylov vector.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if v0 is None:
        if n is None:
            raise ValueError("need n or v0")
        v0 = np.random.default_rng(seed).standard_normal(n)
    n = v0.size
    metric = inner if inner is not None else (lambda z: z)
    proj = project if project is not None else (lambda z: z)
    max_dim = min(n, max_dim or max(4 * k + 40, 80))
    rng = np.random.default_rng(seed + 1)

    Q = np.zeros((n, max_dim))
    MQ = np.zeros((n, max_dim))
    alpha = np.zeros(max_dim)
    beta = np.zeros(max_dim)
    restarts = 0

    def normalize(w, Mw):
        nrm2 = float(w @ Mw)
        if nrm2 <= 0 or not np.isfinite(nrm2):
            return None
        s = np.sqrt(nrm2)
        return w / s, Mw / s, s

    w = proj(np.asarray(v0, dtype=float))
    out = normalize(w, metric(w))
    if out is None:
        raise LanczosBreakdown("start vector has zero norm in the given metric")
    Q[:, 0], MQ[:, 0], _ = out

    j = 0
    check_every = max(5, k)
    theta = s = None
    while True:
        w = proj(op_apply(Q[:, j]))
        alpha[j] = MQ[:, j] @ w
        w = w - alpha[j] * Q[:, j]
        if j > 0:
            w = w - beta[j - 1] * Q[:, j - 1]
        Mw = metric(w)
        if reorth:
            for _ in range(2):
                c = MQ[:, : j + 1].T @ w
                w = w - Q[:, : j + 1] @ c
                Mw = Mw - MQ[:, : j + 1] @ c
        m = j + 1
        bnorm2 = float(w @ Mw)
        bj = np.sqrt(bnorm2) if bnorm2 > 0 else 0.0
        scale = max(np.max(np.abs(alpha[:m])), 1e-300)

        done = m == max_dim
        if m >= k and (m % check_every == 0 or done or bj <= 1e-13 * scale):
            theta, s = sla.eigh_tridiagonal(alpha[:m], beta[: m - 1])
            order = np.argsort(theta)[::-1]
            theta, s = theta[order], s[:, order]
            bounds = np.abs(bj * s[-1, :k])
            if np.all(bounds <= tol * np.maximum(np.abs(theta[:k]), scale * 1e-3)):
                break
        if done:
            break

        if bj <= 1e-13 * scale:
            # invariant subspace: continue from a fresh direction
            restarts += 1
            if restarts > max_restarts:
                raise LanczosBreakdown(f"breakdown after {restarts - 1} restarts at step {m}")
            r = proj(rng.standard_normal(n))
            Mr = metric(r)
            for _ in range(2):
                c = MQ[:, :m].T @ r
                r = r - Q[:, :m] @ c
                Mr = Mr - MQ[:, :m] @ c
            out = normalize(r, Mr)
            if out is None:
                raise LanczosBreakdown("restart vector vanished")
            Q[:, m], MQ[:, m], _ = out
            beta[j] = 0.0
        else:
            beta[j] = bj
            Q[:, m] = w / bj
            MQ[:, m] = Mw / bj
        j += 1

    kk = min(k, m)
    vecs = Q[:, :m] @ s[:, :kk]
    # rounding cushion so the bound stays above the true residual
    cushion = 10.0 * np.finfo(float).eps * scale * np.sqrt(m)
    bounds = np.abs(bj * s[-1, :kk]) + cushion
    conv = bounds <= tol * np.maximum(np.abs(theta[:kk]), scale * 1e-3) + cushion
    return RitzPairs(theta[:kk].copy(), vecs, bounds, conv, m, restarts)


def symmetric_ql_dense(A) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of a dense symmetric matrix, ascending.

    LAPACK ``?syev``: Householder tridiagonalization followed by implicit QL/QR.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise LinalgError("need a square matrix")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise LinalgError("matrix is not symmetric")
    try:
        vals, vecs = sla.eigh(0.5 * (A + A.T), driver="ev")
    except sla.LinAlgError as exc:
        raise QLConvergenceError(str(exc)) from exc
    return vals, vecs
