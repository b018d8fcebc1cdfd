"""Dense linear-algebra kernels

Every matrix is a float64 numpy array in row-major (C) order. Index vectors
are flat int64 arrays of zero-based global indices. Zero-sized inputs are
legal everywhere and give empty results.

"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    ShapeError,
    NullspaceError,
    RankDeficientError,
    SingularPivotError,
)
from .util import as_index

log = logging.getLogger("rsrs")

# Singular values at or below this fraction of the largest count as zero
RANK_CUTOFF = 1e-13


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {M.shape}")
    return M


def numerical_rank(s):
    """Count singular values above the cutoff

    :param s: singular values in non-increasing order
    :type s: numpy.ndarray
    :rtype: int
    """
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_CUTOFF * s[0]))


def orthonormal_columns(M):
    """Orthonormal basis for the range of `M`

    :param numpy.ndarray M: tall or square matrix
    :return: Q with as many columns as the numerical rank of M
    :rtype: numpy.ndarray
    """
    M = as_matrix(M)
    rows, cols = M.shape
    if rows < cols:
        raise ShapeError(f"Expected rows >= cols, got {M.shape}")
    if M.size == 0:
        return np.zeros((rows, 0))

    U, s, _ = scipy.linalg.svd(M, full_matrices=False)
    return U[:, :numerical_rank(s)].copy()


def nullspace_basis(M):
    """Orthonormal basis for the nullspace of `M`

    :param numpy.ndarray M:
    :rtype: numpy.ndarray
    :raises NullspaceError: when M has full column rank
    """
    M = as_matrix(M)
    rows, cols = M.shape
    if rows == 0:
        return np.eye(cols)

    _, s, Vh = scipy.linalg.svd(M, full_matrices=True)
    rank = numerical_rank(s)
    if rank >= cols:
        raise NullspaceError(
            f"Nullspace of a {rows}x{cols} matrix of rank {rank} is empty"
        )
    return Vh[rank:].T.copy()


def right_pseudoinverse(M):
    """Right pseudo-inverse M† with M·M† = I

    :param numpy.ndarray M: wide or square matrix of full row rank
    :rtype: numpy.ndarray
    :raises RankDeficientError: carrying the condition number
    """
    M = as_matrix(M)
    rows, cols = M.shape
    if rows > cols:
        raise RankDeficientError(
            f"A {rows}x{cols} matrix cannot have full row rank",
            condition=float("inf"),
        )
    if rows == 0:
        return np.zeros((cols, 0))

    U, s, Vh = scipy.linalg.svd(M, full_matrices=False)
    if s[-1] <= RANK_CUTOFF * s[0]:
        condition = s[0] / s[-1] if s[-1] > 0 else float("inf")
        raise RankDeficientError(
            f"Matrix of shape {M.shape} is row-rank-deficient "
            f"(condition {condition:.3e})",
            condition=condition,
        )
    return (Vh.T / s) @ U.T


@dataclass(frozen=True, eq=False)
class IdResult:
    """Interpolative decomposition

    For a column ID, M(:, resid) ≈ M(:, skel)·T with T of shape
    rank×(n−rank). For a row ID, M(resid, :) ≈ T·M(skel, :) with T of shape
    (m−rank)×rank. Positions index the input's columns (rows).
    """
    skel: np.ndarray
    resid: np.ndarray
    T: np.ndarray
    rank: int
    tolerance_reached: bool = True


def column_id(M, atol, kmax=None):
    """Column interpolative decomposition by column-pivoted QR

    The rank is the first k whose (k+1)-th pivot magnitude is at or below
    `atol`, capped by `kmax` (clamped to the column count). When the cap is
    hit first, `tolerance_reached` is False.

    :param numpy.ndarray M:
    :param float atol: absolute tolerance
    :param int kmax: rank cap, defaults to the column count
    :rtype: IdResult
    """
    M = as_matrix(M)
    rows, cols = M.shape
    if atol < 0:
        raise ValueError(f"atol must be non-negative, got {atol}")
    kmax = cols if kmax is None else min(int(kmax), cols)

    if rows == 0 or cols == 0 or kmax == 0:
        reached = M.size == 0 or not np.any(M)
        return IdResult(
            skel=np.zeros(0, dtype=np.int64),
            resid=np.arange(cols, dtype=np.int64),
            T=np.zeros((0, cols)),
            rank=0,
            tolerance_reached=bool(reached),
        )

    R, P = scipy.linalg.qr(M, mode="r", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    limit = min(kmax, diag.size)

    below = np.flatnonzero(diag[:limit] <= atol)
    k = int(below[0]) if below.size else limit
    reached = k == diag.size or diag[k] <= atol

    P = P.astype(np.int64)
    if k == 0:
        T = np.zeros((0, cols))
    else:
        T = scipy.linalg.solve_triangular(
            R[:k, :k], R[:k, k:cols], check_finite=False
        )

    return IdResult(
        skel=P[:k].copy(),
        resid=P[k:].copy(),
        T=T,
        rank=k,
        tolerance_reached=bool(reached),
    )


def row_id(M, atol, kmax=None):
    """Row interpolative decomposition, the transpose dual of `column_id`

    :rtype: IdResult
    """
    M = as_matrix(M)
    result = column_id(M.T, atol, kmax)
    return IdResult(
        skel=result.skel,
        resid=result.resid,
        T=result.T.T.copy(),
        rank=result.rank,
        tolerance_reached=result.tolerance_reached,
    )


@dataclass(frozen=True, eq=False)
class LuFactors:
    """Pivoted LU factors with M[perm] = L·U"""
    lu: np.ndarray
    piv: np.ndarray
    perm: np.ndarray

    @property
    def n(self):
        return self.lu.shape[0]

    def matmul(self, X, transposed=False):
        """M·X, or Mᵀ·X, rebuilt from the stored factors

        :param numpy.ndarray X: n rows
        :rtype: numpy.ndarray
        """
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.n:
            raise ShapeError(f"Expected {self.n} rows, got {X.shape[0]}")
        if self.n == 0:
            return X.copy()

        lower = np.tril(self.lu, -1) + np.eye(self.n)
        upper = np.triu(self.lu)

        if transposed:
            return upper.T @ (lower.T @ X[self.perm])

        out = np.empty_like(X)
        out[self.perm] = lower @ (upper @ X)
        return out


def _permutation(piv):
    perm = np.arange(piv.size, dtype=np.int64)
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    return perm


def lu_factor(M):
    """Partially pivoted LU factorization

    :param numpy.ndarray M: square matrix
    :rtype: LuFactors
    :raises SingularPivotError: on a (numerically) zero pivot
    """
    M = as_matrix(M)
    n, cols = M.shape
    if n != cols:
        raise ShapeError(f"LU needs a square matrix, got {M.shape}")
    if n == 0:
        empty = np.zeros(0, dtype=np.int32)
        return LuFactors(lu=np.zeros((0, 0)), piv=empty,
                         perm=np.zeros(0, dtype=np.int64))
    if not np.all(np.isfinite(M)):
        raise SingularPivotError("Matrix has non-finite entries", pivot=0)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)

    diag = np.abs(np.diag(lu))
    scale = np.abs(lu).max()
    bad = np.flatnonzero(diag <= n * np.finfo(np.float64).eps * scale)
    if bad.size:
        raise SingularPivotError(
            f"Singular pivot at index {bad[0]} of a {n}x{n} matrix",
            pivot=int(bad[0]),
        )

    piv = piv.astype(np.int32)
    return LuFactors(lu=lu, piv=piv, perm=_permutation(piv))


def lu_solve(factors, B, transposed=False):
    """Solve M·X = B, or Mᵀ·X = B

    :param LuFactors factors:
    :param numpy.ndarray B:
    :param bool transposed:
    :rtype: numpy.ndarray
    """
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != factors.n:
        raise ShapeError(
            f"Right-hand side has {B.shape[0]} rows, expected {factors.n}"
        )
    if factors.n == 0:
        return B.copy()
    return scipy.linalg.lu_solve(
        (factors.lu, factors.piv), B,
        trans=1 if transposed else 0,
        check_finite=False,
    )


def elim_apply(T, I, J, X, inverse=False, adjoint=False, overwrite=False):
    """Apply the block elimination matrix elim(T, I, J) to X

    elim(T, I, J) is the identity with T placed in block (I, J). The
    forward map changes rows I only: X(I,:) += T·X(J,:). Inverse toggles the
    sign, adjoint moves the update to rows J: X(J,:) += Tᵀ·X(I,:).

    :param numpy.ndarray T: |I|×|J| block
    :param I: row index set
    :param J: column index set, disjoint from I
    :param numpy.ndarray X: 1- or 2-dimensional operand
    :param bool inverse:
    :param bool adjoint:
    :param bool overwrite: update X in place
    :rtype: numpy.ndarray
    """
    T = as_matrix(T, "T")
    I = as_index(I)
    J = as_index(J)
    if T.shape != (I.size, J.size):
        raise ShapeError(
            f"T has shape {T.shape}, expected {(I.size, J.size)}"
        )

    X = np.asarray(X, dtype=np.float64)
    vector = X.ndim == 1
    out = X if overwrite else X.copy()
    if vector:
        out = out.reshape(-1, 1)

    n = out.shape[0]
    for name, index in (("I", I), ("J", J)):
        if index.size and (index.min() < 0 or index.max() >= n):
            raise ShapeError(f"Index set {name} out of range for {n} rows")
    if I.size and J.size and np.intersect1d(I, J).size:
        raise ShapeError("Index sets I and J must be disjoint")

    if T.size:
        sign = -1.0 if inverse else 1.0
        if adjoint:
            out[J] += sign * (T.T @ out[I])
        else:
            out[I] += sign * (T @ out[J])

    return out.reshape(-1) if vector else out


@dataclass(frozen=True, eq=False)
class Elim:
    """Block elimination operator elim(T, rows, cols)"""
    T: np.ndarray
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        if self.T.shape != (self.rows.size, self.cols.size):
            raise ShapeError(
                f"Elimination block has shape {self.T.shape}, expected "
                f"{(self.rows.size, self.cols.size)}"
            )

    @property
    def size(self):
        return int(self.T.size)

    def apply(self, X, inverse=False, adjoint=False, overwrite=False):
        return elim_apply(self.T, self.rows, self.cols, X,
                          inverse=inverse,
                          adjoint=adjoint,
                          overwrite=overwrite)

    def toarray(self, n):
        E = np.eye(n)
        E[np.ix_(self.rows, self.cols)] = self.T
        return E


def spectral_norm_estimate(apply, apply_adjoint, n, iters=20, seed=0):
    """Power iteration on the normal operator

    Returns the largest ‖A·x‖ seen over unit vectors x, which is a lower
    bound on ‖A‖₂ and nondecreasing in `iters` for a fixed seed.

    :param apply: callback mapping an n×s block to A times it
    :param apply_adjoint: callback for Aᵀ
    :param int n: operator dimension
    :param int iters: at least 2
    :param int seed:
    :rtype: float
    """
    if iters < 2:
        raise ValueError(f"iters must be at least 2, got {iters}")
    if n == 0:
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)

    best = 0.0
    for _ in range(iters):
        y = np.asarray(apply(x[:, None]), dtype=np.float64).reshape(-1)
        sigma = float(np.linalg.norm(y))
        best = max(best, sigma)
        if sigma == 0.0:
            break

        x = np.asarray(apply_adjoint(y[:, None]),
                       dtype=np.float64).reshape(-1)
        norm = np.linalg.norm(x)
        if norm == 0.0:
            break
        x /= norm

    return best
