import struct

import numpy as np

from rsrs import container, core, oracles
from rsrs.core import ToleranceSchedule
from rsrs.exceptions import ContainerError
from rsrs.tree import build_tree
from tests import util


class TestContainer(util.TestBase):

    def setUp(self):
        super(TestContainer, self).setUp()
        o = oracles.dense_oracle(util.low_rank_plus_diagonal(256))
        tree = build_tree(oracles.line_points(256), 32)
        sched = ToleranceSchedule(1e-10, kmax=16)
        self.f = core.rsrs_factor(o, tree, core.auto_sample_count(tree, 16),
                                  sched, seed=2)
        self.file = self.path("factor.rsrs")
        container.save_factorization(self.f, self.file)

    def _read(self):
        with open(self.file, "rb") as f:
            return f.read()

    def _write(self, raw):
        with open(self.file, "wb") as f:
            f.write(raw)

    def test_round_trip(self):
        """Loaded factors are bit-for-bit the saved ones"""
        loaded = container.load_factorization(self.file)
        self.assertEqual(loaded.n, 256)
        self.assertEqual(loaded.method, "loaded")
        self.assertEqual(loaded.tolerances, self.f.tolerances)
        self.assertEqual(len(loaded.steps), len(self.f.steps))

        for a, b in zip(self.f.steps, loaded.steps):
            self.assertEqual((a.box, a.level), (b.box, b.level))
            for name in ("residual", "skeleton", "coupled",
                         "T_rs", "T_sr", "G_left", "G_right"):
                np.testing.assert_array_equal(getattr(a, name),
                                              getattr(b, name))
            np.testing.assert_array_equal(a.Xrr_factors.lu, b.Xrr_factors.lu)
            np.testing.assert_array_equal(a.Xrr_factors.piv,
                                          b.Xrr_factors.piv)

        X = self.rng.standard_normal((256, 3))
        np.testing.assert_array_equal(core.factor_solve(self.f, X),
                                      core.factor_solve(loaded, X))
        np.testing.assert_array_equal(core.factor_apply(self.f, X),
                                      core.factor_apply(loaded, X))

    def test_header(self):
        """Magic, version and sizes lead the file"""
        magic, version, n, steps, levels = struct.unpack_from(
            "<4sIIII", self._read())
        self.assertEqual(magic, b"RSRS")
        self.assertEqual(version, 1)
        self.assertEqual(n, 256)
        self.assertEqual(steps, len(self.f.steps))
        self.assertEqual(levels, 2)

    def test_bad_magic(self):
        raw = self._read()
        self._write(b"RSRX" + raw[4:])
        with self.assertRaises(ContainerError):
            container.load_factorization(self.file)

    def test_bad_version(self):
        raw = self._read()
        self._write(raw[:4] + struct.pack("<I", 2) + raw[8:])
        with self.assertRaises(ContainerError) as cm:
            container.load_factorization(self.file)
        self.assertIn("version 2", str(cm.exception))

    def test_truncated(self):
        """A missing byte anywhere fails the load"""
        raw = self._read()
        for size in (3, 30, len(raw) // 2, len(raw) - 1):
            self._write(raw[:size])
            with self.assertRaises(ContainerError):
                container.load_factorization(self.file)

    def test_trailing_bytes(self):
        self._write(self._read() + b"\0")
        with self.assertRaises(ContainerError) as cm:
            container.load_factorization(self.file)
        self.assertIn("1 trailing", str(cm.exception))

    def test_index_mismatch(self):
        """Indices not adding up to N only warn"""
        raw = self._read()
        self._write(raw[:8] + struct.pack("<I", 300) + raw[12:])
        with self.assertLogs("rsrs", level="WARNING"):
            loaded = container.load_factorization(self.file)
        self.assertEqual(loaded.n, 300)

    def test_empty_skeleton(self):
        """A diagonal operator stores no final block"""
        o = oracles.dense_oracle(np.diag(1.0 + self.rng.random(64)))
        tree = build_tree(oracles.line_points(64), 16)
        f = core.rsrs_factor(o, tree, core.auto_sample_count(tree, 8),
                             ToleranceSchedule(1e-8, kmax=8), seed=0,
                             stop_level=1)
        container.save_factorization(f, self.file)
        loaded = container.load_factorization(self.file)
        self.assertEqual(loaded.skeleton.size, 0)
        b = self.rng.standard_normal(64)
        np.testing.assert_array_equal(core.factor_solve(f, b),
                                      core.factor_solve(loaded, b))
