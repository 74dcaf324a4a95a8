# -*- coding: utf-8 -*-
#
import logging
import threading
import unittest

import mfglab
from mfglab._defaults import (
    getdefaultblowupfactor,
    getdefaultthreads,
    setdefaultblowupfactor,
    setdefaultthreads,
)
from mfglab._exceptions import ConfigException
from mfglab._utils import (
    XorShift64Star,
    format_float,
    mix_seed,
    parallel_map,
    splitmix64,
    step_sizes,
)

"""
test_utils.py
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


class RandomTest(unittest.TestCase):
    def test_splitmix64_reference_value(self):
        self.assertEqual(splitmix64(0), 0xE220A8397B1DCDAF)

    def test_same_seed_same_stream(self):
        a = XorShift64Star(42)
        b = XorShift64Star(42)
        self.assertEqual([a.next_u64() for _ in range(100)], [b.next_u64() for _ in range(100)])
        c = XorShift64Star(43)
        self.assertNotEqual(XorShift64Star(42).next_u64(), c.next_u64())

    def test_zero_seed_is_usable(self):
        rng = XorShift64Star(0)
        self.assertNotEqual(rng.state, 0)
        values = {rng.next_u64() for _ in range(10)}
        self.assertEqual(len(values), 10)

    def test_uniform_range(self):
        rng = XorShift64Star(7)
        samples = [rng.uniform() for _ in range(10000)]
        self.assertGreaterEqual(min(samples), 0.0)
        self.assertLess(max(samples), 1.0)
        self.assertAlmostEqual(sum(samples) / len(samples), 0.5, delta=0.02)

    def test_exponential_mean(self):
        rng = XorShift64Star(9)
        rate = 4.0
        samples = [rng.exponential(rate) for _ in range(20000)]
        self.assertTrue(all(s >= 0.0 for s in samples))
        self.assertAlmostEqual(sum(samples) / len(samples), 1.0 / rate, delta=0.05 / rate)

    def test_mix_seed(self):
        self.assertEqual(mix_seed(5, 3), mix_seed(5, 3))
        seeds = {mix_seed(5, i) for i in range(1000)}
        self.assertEqual(len(seeds), 1000)
        self.assertNotEqual(mix_seed(5, 0), mix_seed(6, 0))


class HelpersTest(unittest.TestCase):
    def test_parallel_map_keeps_order(self):
        items = list(range(50))
        self.assertEqual(parallel_map(lambda i: i * i, items, 1), [i * i for i in items])
        self.assertEqual(parallel_map(lambda i: i * i, items, 4), [i * i for i in items])

    def test_parallel_map_uses_threads(self):
        seen = set()

        def record(_):
            seen.add(threading.get_ident())
            return 0

        parallel_map(record, range(8), 1)
        self.assertEqual(seen, {threading.get_ident()})

    def test_format_float(self):
        for value in (0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0):
            self.assertEqual(float(format_float(value)), value)
        self.assertEqual(format_float(1.0), "1")
        self.assertEqual(format_float(float("inf")), "inf")

    def test_step_sizes(self):
        steps = step_sizes(1.0, 0.25)
        self.assertEqual(len(steps), 4)
        self.assertAlmostEqual(sum(steps), 1.0, places=14)

        steps = step_sizes(1.0, 0.3)
        self.assertEqual(len(steps), 4)
        self.assertAlmostEqual(steps[-1], 0.1)
        self.assertAlmostEqual(sum(steps), 1.0, places=14)

        self.assertEqual(len(step_sizes(0.5, 1.0)), 1)
        self.assertAlmostEqual(step_sizes(0.5, 1.0)[0], 0.5)


class DefaultsTest(unittest.TestCase):
    def setUp(self):
        self.threads = getdefaultthreads()
        self.factor = getdefaultblowupfactor()

    def tearDown(self):
        setdefaultthreads(self.threads)
        setdefaultblowupfactor(self.factor)

    def test_threads(self):
        setdefaultthreads(3)
        self.assertEqual(getdefaultthreads(), 3)
        with self.assertRaises(ConfigException):
            setdefaultthreads(0)
        self.assertEqual(getdefaultthreads(), 3)

    def test_blowup_factor(self):
        setdefaultblowupfactor(10)
        self.assertEqual(getdefaultblowupfactor(), 10.0)
        with self.assertRaises(ConfigException):
            setdefaultblowupfactor(0.0)

    def test_config_exception_names(self):
        e = ConfigException("bad", ["a", "b"])
        self.assertEqual(e.valid_names, ["a", "b"])
        self.assertIsNone(ConfigException("bad").valid_names)
        self.assertTrue(issubclass(ConfigException, mfglab.MfgLabException))


class _ListHandler(logging.Handler):
    def __init__(self):
        super().__init__()
        self.records = []

    def emit(self, record):
        self.records.append(record.getMessage())


class LoggingTest(unittest.TestCase):
    def tearDown(self):
        mfglab.enableTrace(False)
        logger = logging.getLogger("mfglab")
        for handler in list(logger.handlers):
            if isinstance(handler, _ListHandler):
                logger.removeHandler(handler)

    def test_trace_switch(self):
        handler = _ListHandler()
        mfglab.enableTrace(True, handler)
        self.assertTrue(mfglab.isEnabledForTrace())
        mfglab.trace("step 1")
        mfglab.enableTrace(False)
        self.assertFalse(mfglab.isEnabledForTrace())
        mfglab.trace("step 2")
        self.assertEqual(handler.records, ["step 1"])
        self.assertNotIn(handler, logging.getLogger("mfglab").handlers)

    def test_dump_replaces_handler(self):
        first, second = _ListHandler(), _ListHandler()
        mfglab.enableTrace(True, first)
        mfglab.enableTrace(True, second)
        mfglab.dump("params", "a = 1")
        self.assertEqual(first.records, [])
        self.assertEqual(second.records, ["--- params ---\na = 1\n--------------"])


if __name__ == "__main__":
    unittest.main()
