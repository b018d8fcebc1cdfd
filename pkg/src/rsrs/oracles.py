"""Black-box operators

An oracle exposes `n`, `apply(X)` and `apply_adjoint(X)` on n×s blocks.
Entry access, point geometry and kernel evaluation are optional
capabilities advertised through the `has_*` flags.

"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from scipy.spatial.distance import cdist

from .exceptions import OracleError, UnsupportedOracleError, ShapeError
from .tree import PointSet
from .util import counter_generator

log = logging.getLogger("rsrs")

_DMAT_MAGIC = b"DMAT"
_DMAT_HEADER = np.dtype([
    ("magic", "S4"),
    ("rows", "<u4"),
    ("cols", "<u4"),
    ("reserved", "<u4"),
])


class LinearOracle(object):
    n: int
    points = None
    has_entries = False
    has_points = False
    has_kernel = False

    def apply(self, X):
        """Return A·X for an n×s block X"""
        raise NotImplementedError

    def apply_adjoint(self, X):
        """Return Aᵀ·X for an n×s block X"""
        raise NotImplementedError

    def entries(self, rows, cols):
        """Return the dense block A(rows, cols)"""
        raise UnsupportedOracleError(
            f"{type(self).__name__} does not expose entries"
        )

    def entry(self, i, j):
        return float(self.entries([i], [j])[0, 0])

    def kernel_block(self, targets, sources):
        """Evaluate the kernel between arbitrary coordinates"""
        raise UnsupportedOracleError(
            f"{type(self).__name__} does not expose a kernel"
        )

    def _block(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ShapeError(
                f"Operand of shape {X.shape} does not have {self.n} rows"
            )
        return X


class DenseOracle(LinearOracle):
    has_entries = True

    def __init__(self, M):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ShapeError(f"Dense oracle needs a square matrix, "
                             f"got shape {M.shape}")
        self.matrix = M
        self.n = M.shape[0]

    def __repr__(self):
        return f"DenseOracle(n={self.n})"

    def apply(self, X):
        return self.matrix @ self._block(X)

    def apply_adjoint(self, X):
        return self.matrix.T @ self._block(X)

    def entries(self, rows, cols):
        return self.matrix[np.ix_(np.asarray(rows), np.asarray(cols))]


class KernelOracle(LinearOracle):
    """A(i, j) = log|x_i − x_j| off the diagonal, `diag_shift` on it

    Products are formed by dense evaluation in row chunks, O(N²) per column.
    """
    has_entries = True
    has_points = True
    has_kernel = True

    def __init__(self, points, kernel="log2d", diag_shift=0.0, chunk=512):
        if kernel != "log2d":
            raise UnsupportedOracleError(f"Unknown kernel {kernel!r}")
        if not isinstance(points, PointSet):
            points = PointSet(points)

        distinct = np.unique(points.coords, axis=0).shape[0]
        if distinct != points.n:
            raise OracleError(
                f"Kernel points must be distinct, "
                f"found {points.n - distinct} duplicates"
            )

        self.points = points
        self.kernel = kernel
        self.diag_shift = float(diag_shift)
        self.chunk = max(1, int(chunk))
        self.n = points.n

    def __repr__(self):
        return (f"KernelOracle(n={self.n}, dim={self.points.dim}, "
                f"diag_shift={self.diag_shift:g})")

    def kernel_block(self, targets, sources):
        distance = cdist(np.atleast_2d(targets), np.atleast_2d(sources))
        with np.errstate(divide="ignore"):
            return np.log(distance)

    def entries(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        coords = self.points.coords
        block = self.kernel_block(coords[rows], coords[cols])
        block[rows[:, None] == cols[None, :]] = self.diag_shift
        return block

    def apply(self, X):
        X = self._block(X)
        coords = self.points.coords
        out = np.empty((self.n, X.shape[1]))

        for start in range(0, self.n, self.chunk):
            stop = min(start + self.chunk, self.n)
            block = self.kernel_block(coords[start:stop], coords)
            local = np.arange(stop - start)
            block[local, start + local] = self.diag_shift
            out[start:stop] = block @ X

        return out

    # Symmetric kernel
    apply_adjoint = apply


class SchurSlabOracle(LinearOracle):
    """Interface Schur complement T₁₁ = A₁₁ − A₁₂·A₂₂⁻¹·A₂₁ of a 2D slab

    Unknowns of the n×n five-point Poisson grid are numbered column by
    column, i·n + j for grid column i and row j. Block 1 is grid column 0,
    block 2 the next `b` columns.
    """
    has_points = True

    def __init__(self, n, b, pde="poisson5pt"):
        if pde != "poisson5pt":
            raise UnsupportedOracleError(f"Unknown PDE {pde!r}")
        if n < 3 or not 1 <= b < n:
            raise OracleError(f"Slab needs n >= 3 and 1 <= b < n, "
                              f"got n={n}, b={b}")

        A = poisson5pt(n)
        interface = slice(0, n)
        interior = slice(n, n + b * n)

        self.A11 = _sorted(A[interface, interface])
        self.A12 = _sorted(A[interface, interior])
        self.A21 = _sorted(A[interior, interface])
        self.A22 = _sorted(A[interior, interior])

        try:
            self._lu = scipy.sparse.linalg.splu(self.A22.tocsc())
        except RuntimeError as e:
            raise OracleError(f"Slab interior factorization failed: {e}")

        self.grid = n
        self.width = b
        self.n = n
        self.points = PointSet((np.arange(n) + 1.0) / (n + 1))
        log.debug(f"Prefactored slab interior of size {b * n}")

    def __repr__(self):
        return f"SchurSlabOracle(n={self.grid}, b={self.width})"

    def apply(self, X):
        X = self._block(X)
        correction = self._lu.solve(np.asfortranarray(self.A21 @ X))
        return self.A11 @ X - self.A12 @ correction

    def apply_adjoint(self, X):
        X = self._block(X)
        correction = self._lu.solve(
            np.asfortranarray(self.A12.T @ X), trans="T")
        return self.A11.T @ X - self.A21.T @ correction


def poisson5pt(n):
    """Five-point −Δ on an n×n interior grid, unscaled, as CSR"""
    chain = scipy.sparse.diags(
        [-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    eye = scipy.sparse.identity(n)
    return _sorted(scipy.sparse.kron(eye, chain) + scipy.sparse.kron(chain, eye))


def _sorted(A):
    A = scipy.sparse.csr_matrix(A)
    A.sort_indices()
    return A


def dense_oracle(M):
    return DenseOracle(M)


def kernel_oracle(points, kernel="log2d", diag_shift=0.0):
    return KernelOracle(points, kernel=kernel, diag_shift=diag_shift)


def schur_slab_oracle(n, b, pde="poisson5pt"):
    return SchurSlabOracle(n, b, pde=pde)


def line_points(n):
    """Cell centres of n equal cells on [0, 1]"""
    return PointSet((np.arange(n) + 0.5) / n)


def square_points(n, seed=0):
    """n uniform random points in the unit square"""
    generator = np.random.Generator(counter_generator(seed, stream=2))
    return PointSet(generator.random((n, 2)))


def quadrature_diag_shift(points):
    """Average of log|x| over the cell a point stands for

    The cell is a segment of length h in 1D, a disk of area h² in 2D and a
    ball of volume h³ in 3D, with h the mean spacing.

    :param PointSet points:
    :rtype: float
    """
    if not isinstance(points, PointSet):
        points = PointSet(points)

    extent = points.upper - points.lower
    dim = points.dim
    n = points.n
    if n == 1 or not np.any(extent):
        return 0.0

    if dim == 1:
        h = extent[0] / (n - 1)
        return float(np.log(h / 2) - 1)

    widest = extent.max()
    volume = np.prod(np.where(extent > 0, extent, widest))
    h = (volume / n) ** (1.0 / dim)
    if dim == 2:
        return float(np.log(h / np.sqrt(np.pi)) - 0.5)
    radius = h * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)
    return float(np.log(radius) - 1.0 / 3.0)


def load_dense_matrix(path):
    """Read a DMAT file

    Layout: magic "DMAT", u32 rows, u32 cols, u32 reserved, then rows·cols
    little-endian float64 values in row-major order.

    :rtype: numpy.ndarray
    """
    with open(path, "rb") as f:
        raw = f.read()

    if len(raw) < _DMAT_HEADER.itemsize:
        raise OracleError(f"{path}: too short for a DMAT header")
    header = np.frombuffer(raw, dtype=_DMAT_HEADER, count=1)[0]
    if header["magic"] != _DMAT_MAGIC:
        raise OracleError(f"{path}: bad magic {header['magic']!r}")

    rows, cols = int(header["rows"]), int(header["cols"])
    expected = _DMAT_HEADER.itemsize + 8 * rows * cols
    if len(raw) != expected:
        raise OracleError(
            f"{path}: expected {expected} bytes for {rows}x{cols}, "
            f"got {len(raw)}"
        )

    values = np.frombuffer(raw, dtype="<f8", count=rows * cols,
                           offset=_DMAT_HEADER.itemsize)
    return values.astype(np.float64).reshape(rows, cols)


def save_dense_matrix(path, M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ShapeError(f"Expected a matrix, got shape {M.shape}")

    header = np.zeros(1, dtype=_DMAT_HEADER)
    header["magic"] = _DMAT_MAGIC
    header["rows"], header["cols"] = M.shape

    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


@dataclass(frozen=True)
class SelftestReport:
    passed: bool
    linearity_residual: float
    adjoint_residual: float
    probes: int
    tolerance: float = 1e-12


def oracle_selftest(o, seed=0, probes=10, tolerance=1e-12):
    """Probe linearity and adjoint consistency with seeded random vectors

    :param LinearOracle o:
    :param int seed:
    :param int probes: number of (x, y) pairs
    :rtype: SelftestReport
    """
    rng = np.random.default_rng(seed)
    linearity = 0.0
    adjoint = 0.0

    for _ in range(probes):
        x = rng.standard_normal((o.n, 1))
        y = rng.standard_normal((o.n, 1))
        alpha = rng.standard_normal()

        ax = o.apply(x)
        ay = o.apply(y)
        combined = o.apply(alpha * x + y)
        residual = np.linalg.norm(combined - alpha * ax - ay)
        scale = abs(alpha) * np.linalg.norm(ax) + np.linalg.norm(ay)
        linearity = max(linearity, residual / scale if scale else residual)

        aty = o.apply_adjoint(y)
        gap = abs(float(np.vdot(ax, y)) - float(np.vdot(x, aty)))
        scale = np.linalg.norm(ax) * np.linalg.norm(y) + 1e-300
        adjoint = max(adjoint, gap / scale)

    passed = linearity <= tolerance and adjoint <= tolerance
    if not passed:
        log.warning(f"Self-test failed for {o!r}: linearity {linearity:.2e}, "
                    f"adjoint {adjoint:.2e}")

    return SelftestReport(
        passed=bool(passed),
        linearity_residual=float(linearity),
        adjoint_residual=float(adjoint),
        probes=probes,
        tolerance=tolerance,
    )
