import io
import os
import csv
import json
import logging
from unittest import mock

import numpy as np

from rsrs import cli, oracles
from rsrs.cli.verbs import CSV_HEADER
from tests import util


class TestCli(util.TestBase):

    def setUp(self):
        super(TestCli, self).setUp()
        self.config = self.write_config({
            "problem": {"type": "log-kernel-1d", "n": 256},
            "tree": {"m": 32},
            "sampling": {"kmax": 24},
        })

    def write_config(self, doc, name="config.json"):
        path = self.path(name)
        with open(path, "w") as f:
            json.dump(doc, f)
        return path

    def run_cli(self, *argv):
        """Run the command line, returning exit code, stdout and stderr"""
        stdout, stderr = io.StringIO(), io.StringIO()
        with mock.patch("sys.stdout", stdout), \
                mock.patch("sys.stderr", stderr):
            code = cli.standalone_cli(list(argv))
        return code, stdout.getvalue(), stderr.getvalue()

    def error_record(self, stderr):
        return json.loads(stderr.strip().splitlines()[-1])

    def test_factor(self):
        """Statistics are printed as one JSON record"""
        code, out, _ = self.run_cli("factor", "--config", self.config)
        self.assertEqual(code, 0)
        stats = json.loads(out)
        self.assertEqual(stats["command"], "factor")
        self.assertEqual(stats["problem"], "log-kernel-1d")
        self.assertEqual(stats["n"], 256)
        self.assertEqual(stats["method"], "rsrs")
        self.assertEqual(stats["p"], 130)
        self.assertGreater(stats["memory"], 0)
        self.assertNotIn("out", stats)

    def test_factor_then_verify(self):
        """A stored factorization verifies against its operator"""
        out = self.path("factor.rsrs")
        code, stdout, _ = self.run_cli("factor", "--config", self.config,
                                       "--out", out)
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(stdout)["out"], out)
        self.assertTrue(os.path.exists(out))

        code, stdout, _ = self.run_cli("verify", out, "--config", self.config)
        self.assertEqual(code, 0)
        result = json.loads(stdout)
        self.assertEqual(result["command"], "verify")
        self.assertEqual(result["n"], 256)
        self.assertLess(result["errsolve_est"], 1e-4)
        self.assertLess(result["relerr_est"], 1e-4)

    def test_verify_wrong_operator(self):
        """A factorization of another size fails with a runtime error"""
        out = self.path("factor.rsrs")
        self.run_cli("factor", "--config", self.config, "--out", out)
        other = self.write_config(
            {"problem": {"type": "log-kernel-1d", "n": 128}}, "other.json")
        code, _, err = self.run_cli("verify", out, "--config", other)
        self.assertEqual(code, 1)
        self.assertEqual(self.error_record(err)["error"], "ShapeError")

    def test_factor_schur_slab(self):
        """The slab Schur complement factorizes and verifies"""
        config = self.write_config({
            "problem": {"type": "schur-slab-2d", "grid_n": 64,
                        "slab_width": 10},
            "tree": {"m": 8},
            "schedule": {"atol_leaf": 1e-5},
        }, "slab.json")
        out = self.path("slab.rsrs")
        code, stdout, _ = self.run_cli("factor", "--config", config,
                                       "--out", out)
        self.assertEqual(code, 0)
        stats = json.loads(stdout)
        self.assertEqual(stats["problem"], "schur-slab-2d")
        self.assertEqual(stats["n"], 64)
        self.assertEqual(stats["p"], 64)

        code, stdout, _ = self.run_cli("verify", out, "--config", config)
        self.assertEqual(code, 0)
        self.assertLessEqual(json.loads(stdout)["errsolve_est"], 1e-3)

    def test_proxy_method(self):
        config = self.write_config({
            "problem": {"type": "log-kernel-1d", "n": 256},
            "method": "srs-proxy",
        }, "proxy.json")
        code, out, _ = self.run_cli("factor", "--config", config)
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["method"], "srs-proxy")

    def test_bench(self):
        """One CSV row per sweep entry, failures recorded in place"""
        config = self.write_config({
            "problem": {"type": "log-kernel-1d", "n": 128},
            "tree": {"m": 32},
            "sampling": {"kmax": 24},
            "bench": {"sweep": [128, 256, 64]},
        }, "bench.json")
        table = self.path("bench.csv")
        code, _, _ = self.run_cli("bench", "--config", config, "--csv", table)
        self.assertEqual(code, 0)

        with open(table, newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], CSV_HEADER)
        self.assertEqual(rows[0], [
            "N", "m", "p", "atol", "t_factor_s", "memory_scalars",
            "relerr_est", "errsolve_est", "status"])
        self.assertEqual(len(rows), 4)

        records = [dict(zip(rows[0], row)) for row in rows[1:]]
        self.assertEqual([r["N"] for r in records], ["128", "256", "64"])
        for record in records[:2]:
            self.assertEqual(record["status"], "ok")
            self.assertLess(float(record["errsolve_est"]), 1e-4)
        self.assertEqual(records[2]["status"],
                         "error: FinalSkeletonTooLargeError")

    def test_bench_empty_sweep(self):
        """No sweep, header only"""
        code, out, _ = self.run_cli("bench", "--config", self.config)
        self.assertEqual(code, 0)
        self.assertEqual(out.strip().splitlines(), [",".join(CSV_HEADER)])

    def test_bench_fixed_size(self):
        """Stored matrices cannot be swept"""
        path = self.path("m.dmat")
        oracles.save_dense_matrix(path, np.eye(8))
        config = self.write_config({
            "problem": {"type": "dense-file", "path": path},
            "bench": {"sweep": [16]},
        }, "dense.json")
        code, _, err = self.run_cli("bench", "--config", config)
        self.assertEqual(code, 2)
        self.assertEqual(self.error_record(err)["field"], "bench.sweep")

    def test_selftest(self):
        code, out, _ = self.run_cli("selftest", "--config", self.config)
        self.assertEqual(code, 0)
        result = json.loads(out)
        self.assertEqual(result["command"], "selftest")
        self.assertTrue(result["passed"])

    def test_malformed_config(self):
        """Validation errors exit with 2 and name the field"""
        config = self.write_config({"problem": {"type": "log-kernel-1d"}},
                                   "bad.json")
        code, out, err = self.run_cli("factor", "--config", config)
        self.assertEqual(code, 2)
        self.assertEqual(out, "")
        record = self.error_record(err)
        self.assertEqual(record["error"], "ConfigError")
        self.assertEqual(record["field"], "problem.n")

    def test_missing_config(self):
        code, _, err = self.run_cli("factor", "--config",
                                    self.path("missing.json"))
        self.assertEqual(code, 2)
        self.assertEqual(self.error_record(err)["error"], "ConfigError")

    def test_runtime_error(self):
        """A corrupt matrix file exits with 1"""
        path = self.path("bad.dmat")
        with open(path, "wb") as f:
            f.write(b"NOPE" + bytes(12))
        config = self.write_config(
            {"problem": {"type": "dense-file", "path": path}}, "dense.json")
        code, _, err = self.run_cli("selftest", "--config", config)
        self.assertEqual(code, 1)
        record = self.error_record(err)
        self.assertEqual(record["error"], "OracleError")
        self.assertNotIn("field", record)

    def test_verbose(self):
        """Verbosity only lasts for the command"""
        code, _, _ = self.run_cli("-vv", "selftest", "--config", self.config)
        self.assertEqual(code, 0)
        log = logging.getLogger("rsrs")
        stream = next(h for h in log.handlers if h.name == "stream")
        self.assertEqual(stream.level, logging.WARNING)

    def test_version(self):
        code, out, _ = self.run_cli("--version")
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("rsrs "))

    def test_no_verb(self):
        code, _, err = self.run_cli()
        self.assertEqual(code, 2)
        self.assertIn("usage", err)
