import os
import shutil
import logging
import tempfile
import unittest

import numpy as np


def relative_error(actual, expected):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = np.linalg.norm(expected)
    error = np.linalg.norm(actual - expected)
    return error / scale if scale else error


def low_rank_plus_diagonal(n, rank=5, seed=0):
    """Well-conditioned dense matrix whose off-diagonal blocks have low rank"""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, rank)) / np.sqrt(n)
    V = rng.standard_normal((n, rank)) / np.sqrt(n)
    D = np.diag(10.0 + rng.random(n))
    return D + U @ V.T


def log_kernel_1d(n, diag_shift="quadrature"):
    from rsrs import oracles
    points = oracles.line_points(n)
    if diag_shift == "quadrature":
        diag_shift = oracles.quadrature_diag_shift(points)
    return oracles.kernel_oracle(points, diag_shift=diag_shift)


def assemble(o):
    """Dense matrix of an oracle, column by column through apply"""
    return o.apply(np.eye(o.n))


def explicit_elimination(A, step):
    """V⁻¹·A·W⁻¹ for the step's V = E·L and W = U·F"""
    out = A.copy()
    for op in step.left_factors:
        op.apply(out, inverse=True, overwrite=True)
    out = out.T.copy()
    for op in reversed(step.right_factors):
        op.apply(out, inverse=True, adjoint=True, overwrite=True)
    return out.T.copy()


class TestBase(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1234)
        self.tempdir = tempfile.mkdtemp(prefix="rsrs-test-")

        # Keep recoverable warnings out of the test output
        logging.getLogger("rsrs").setLevel(logging.ERROR)

    def tearDown(self):
        shutil.rmtree(self.tempdir, ignore_errors=True)
        logging.getLogger("rsrs").setLevel(logging.NOTSET)

    def path(self, name):
        return os.path.join(self.tempdir, name)

    def assertRelativeClose(self, actual, expected, tol):
        error = relative_error(actual, expected)
        self.assertLessEqual(error, tol,
                             "relative error %.3e exceeds %.1e" % (error, tol))

    def assertSmall(self, value, tol):
        value = float(np.linalg.norm(value))
        self.assertLessEqual(value, tol, "%.3e exceeds %.1e" % (value, tol))
