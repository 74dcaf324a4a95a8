# -*- coding: utf-8 -*-
#
import contextlib
import io
import json
import os
import os.path
import tempfile
import unittest

import mfglab
from mfglab._cli import main, parse_args
from mfglab._defaults import getdefaultthreads, setdefaultthreads

"""
test_cli.py
mfglab - numerical laboratory for finite-state master equations

Copyright 2026 mfg-lab contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""


def _data(fname):
    return os.path.join(os.path.dirname(__file__), "data", fname)


def _quiet(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        status = main(argv)
    return status, out.getvalue(), err.getvalue()


class ArgsTest(unittest.TestCase):
    def test_verbosity(self):
        self.assertEqual(parse_args(["run", "--config", "x.json"]).verbose, 0)
        self.assertEqual(parse_args(["run", "--config", "x.json", "-v"]).verbose, 1)
        self.assertEqual(parse_args(["run", "--config", "x.json", "-v", "2"]).verbose, 2)
        self.assertEqual(parse_args(["run", "--config", "x.json", "-vv"]).verbose, 2)

    def test_overrides(self):
        args = parse_args(["run", "--config", "x.json", "--out", "o", "--seed", "9", "--threads", "2"])
        self.assertEqual((args.out, args.seed, args.threads), ("o", 9, 2))


class MainTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name
        self.threads = getdefaultthreads()

    def tearDown(self):
        setdefaultthreads(self.threads)
        self._tmp.cleanup()

    def test_list(self):
        status, out, _ = _quiet(["list"])
        self.assertEqual(status, 0)
        names = [line.split()[0] for line in out.splitlines()]
        self.assertEqual(tuple(names), mfglab.SCENARIO_NAMES)

    def test_show(self):
        status, out, _ = _quiet(["show", "abm-path"])
        self.assertEqual(status, 0)
        document = json.loads(out)
        self.assertEqual(document["scenario"], "abm-path")
        self.assertEqual(document["params"]["rate"], 1.0)

        status, _, err = _quiet(["show", "nope"])
        self.assertEqual(status, 2)
        self.assertIn("abm-path", err)

    def test_run(self):
        out_dir = os.path.join(self.tmp, "run")
        status, _, _ = _quiet(["run", "--config", _data("threshold_only.json"), "--out", out_dir])
        self.assertEqual(status, 0)
        with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as f:
            summary = json.load(f)
        self.assertEqual(summary["scenario"], "uniqueness-threshold")
        self.assertEqual(summary["seed"], 0)

    def test_seed_override(self):
        out_dir = os.path.join(self.tmp, "run")
        status, _, _ = _quiet(["run", "--config", _data("abm_short.json"), "--out", out_dir, "--seed", "5"])
        self.assertEqual(status, 0)
        with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as f:
            self.assertEqual(json.load(f)["seed"], 5)

    def test_config_errors(self):
        out_dir = os.path.join(self.tmp, "run")
        status, _, _ = _quiet(["run", "--config", os.path.join(self.tmp, "missing.json"), "--out", out_dir])
        self.assertEqual(status, 2)
        status, _, _ = _quiet(["run", "--config", _data("abm_short.json"), "--out", out_dir, "--seed", "-1"])
        self.assertEqual(status, 2)
        status, _, _ = _quiet(["run", "--config", _data("abm_short.json"), "--out", out_dir, "--threads", "0"])
        self.assertEqual(status, 2)
        status, _, _ = _quiet(["run", "--config", _data("negative_dt.json"), "--out", out_dir])
        self.assertEqual(status, 2)
        self.assertFalse(os.path.exists(out_dir))

    def test_solver_failure_status(self):
        out_dir = os.path.join(self.tmp, "run")
        status, _, _ = _quiet(["run", "--config", _data("stiff_common_jumps.json"), "--out", out_dir])
        self.assertEqual(status, 3)


if __name__ == "__main__":
    unittest.main()
