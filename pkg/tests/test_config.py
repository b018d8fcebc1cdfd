import json

import numpy as np

from rsrs import config, oracles
from rsrs.exceptions import ConfigError
from tests import util


def document(**overrides):
    doc = {"problem": {"type": "log-kernel-1d", "n": 256}}
    doc.update(overrides)
    return json.dumps(doc)


class TestParse(util.TestBase):

    def test_defaults(self):
        """Only the problem is required"""
        cfg = config.parse_config(document())
        self.assertEqual(cfg.problem.n, 256)
        self.assertEqual(cfg.problem.diag_shift, "quadrature")
        self.assertEqual(cfg.tree.m, 32)
        self.assertEqual(cfg.tree.admissibility, "strong")
        self.assertEqual(cfg.method, "rsrs")
        self.assertEqual(cfg.sampling.p, "auto")
        self.assertEqual(cfg.sampling.kmax, 40)
        self.assertEqual(cfg.schedule.atol_leaf, 1e-8)
        self.assertEqual(cfg.schedule.growth, 2.0)
        self.assertEqual(cfg.schedule.stop_level, 2)
        self.assertEqual(cfg.proxy.radius_factor, 1.5)
        self.assertEqual(cfg.verify.power_iterations, 20)
        self.assertEqual(cfg.bench.sweep, [])
        self.assertFalse(cfg.parallel)
        self.assertEqual(cfg.seed, 0)

    def test_round_trip(self):
        """parse(dump(c)) == c"""
        cfg = config.parse_config(document(
            problem={"type": "log-kernel-2d", "n": 1024,
                     "geometry_seed": 4, "diag_shift": -3.5},
            tree={"m": 64, "admissibility": "weak", "dim": 2},
            method="srs-proxy",
            sampling={"p": 200, "kmax": 30},
            bench={"sweep": [256, 512], "include_sketch_time": True},
            seed=9,
        ))
        again = config.parse_config(config.dump_config(cfg))
        self.assertEqual(again, cfg)
        self.assertEqual(again.problem.diag_shift, -3.5)
        self.assertEqual(again.sampling.p, 200)

    def test_every_problem(self):
        """Each problem type parses with its own fields"""
        for problem in ({"type": "log-kernel-1d", "n": 8},
                        {"type": "log-kernel-2d", "n": 8},
                        {"type": "schur-slab-2d", "grid_n": 16},
                        {"type": "dense-file", "path": "a.dmat"}):
            cfg = config.parse_config(document(problem=problem))
            self.assertEqual(cfg.problem.type, problem["type"])

    def test_missing_n(self):
        """The offending field is named without the type tag"""
        with self.assertRaises(ConfigError) as cm:
            config.parse_config(document(problem={"type": "log-kernel-1d"}))
        self.assertEqual(cm.exception.field, "problem.n")

    def test_unknown_field(self):
        """Extra keys are rejected"""
        with self.assertRaises(ConfigError) as cm:
            config.parse_config(document(schedule={"atol": 1e-6}))
        self.assertEqual(cm.exception.field, "schedule.atol")

    def test_unknown_problem(self):
        with self.assertRaises(ConfigError) as cm:
            config.parse_config(document(problem={"type": "helmholtz"}))
        self.assertEqual(cm.exception.field, "problem")

    def test_out_of_range(self):
        """Range checks on numeric fields"""
        for overrides, field in (
                (dict(schedule={"growth": 0.5}), "schedule.growth"),
                (dict(proxy={"radius_factor": 1.0}), "proxy.radius_factor"),
                (dict(tree={"m": 0}), "tree.m"),
                (dict(sampling={"p": 0}), "sampling.p"),
                (dict(verify={"power_iterations": 1}),
                 "verify.power_iterations")):
            with self.assertRaises(ConfigError) as cm:
                config.parse_config(document(**overrides))
            self.assertTrue(cm.exception.field.startswith(field),
                            cm.exception.field)

    def test_slab_width(self):
        """The slab must be narrower than the grid"""
        with self.assertRaises(ConfigError) as cm:
            config.parse_config(document(problem={
                "type": "schur-slab-2d", "grid_n": 8, "slab_width": 8}))
        self.assertEqual(cm.exception.field, "problem.slab_width")

    def test_dimension_mismatch(self):
        with self.assertRaises(ConfigError) as cm:
            config.parse_config(document(tree={"dim": 2}))
        self.assertEqual(cm.exception.field, "tree.dim")

    def test_malformed(self):
        """Not JSON at all"""
        with self.assertRaises(ConfigError):
            config.parse_config("{problem: ")

    def test_frozen(self):
        cfg = config.parse_config(document())
        with self.assertRaises(Exception):
            cfg.seed = 3


class TestLoad(util.TestBase):

    def test_file(self):
        path = self.path("cfg.json")
        with open(path, "w") as f:
            f.write(document(seed=5))
        self.assertEqual(config.load_config(path).seed, 5)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            config.load_config(self.path("missing.json"))

    def test_seed_override(self):
        cfg = config.parse_config(document(seed=5))
        self.assertEqual(config.with_overrides(cfg).seed, 5)
        self.assertEqual(config.with_overrides(cfg, seed=7).seed, 7)
        self.assertEqual(cfg.seed, 5)


class TestOracleFor(util.TestBase):

    def test_log_kernel_1d(self):
        cfg = config.parse_config(document())
        o = config.oracle_for(cfg.problem)
        self.assertEqual(o.n, 256)
        self.assertAlmostEqual(
            o.diag_shift, oracles.quadrature_diag_shift(o.points))

    def test_log_kernel_2d(self):
        """Geometry follows the configured seed"""
        cfg = config.parse_config(document(problem={
            "type": "log-kernel-2d", "n": 100, "geometry_seed": 3,
            "diag_shift": 0.25}))
        o = config.oracle_for(cfg.problem)
        self.assertEqual(o.diag_shift, 0.25)
        np.testing.assert_array_equal(o.points.coords,
                                      oracles.square_points(100, 3).coords)

    def test_schur_slab(self):
        cfg = config.parse_config(document(problem={
            "type": "schur-slab-2d", "grid_n": 12, "slab_width": 3}))
        o = config.oracle_for(cfg.problem)
        self.assertEqual(o.n, 12)
        self.assertIs(config.points_for(o), o.points)

    def test_dense_file(self):
        """Dense problems load a matrix and get line geometry"""
        M = self.rng.standard_normal((10, 10))
        path = self.path("m.dmat")
        oracles.save_dense_matrix(path, M)
        cfg = config.parse_config(document(problem={
            "type": "dense-file", "path": path}))
        o = config.oracle_for(cfg.problem)
        np.testing.assert_array_equal(o.matrix, M)
        np.testing.assert_allclose(config.points_for(o).coords[:, 0],
                                   oracles.line_points(10).coords[:, 0])


class TestResize(util.TestBase):

    def test_kernels(self):
        cfg = config.parse_config(document())
        self.assertEqual(config.resize(cfg.problem, 1024).n, 1024)
        self.assertEqual(cfg.problem.n, 256)

    def test_slab(self):
        cfg = config.parse_config(document(problem={
            "type": "schur-slab-2d", "grid_n": 16}))
        self.assertEqual(config.resize(cfg.problem, 64).grid_n, 64)

    def test_dense_file(self):
        """A stored matrix has a fixed size"""
        cfg = config.parse_config(document(problem={
            "type": "dense-file", "path": "a.dmat"}))
        with self.assertRaises(ConfigError) as cm:
            config.resize(cfg.problem, 64)
        self.assertEqual(cm.exception.field, "bench.sweep")
