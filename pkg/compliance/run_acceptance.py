import filecmp
import json
import os
import sys
import traceback

import numpy as np

import mfglab

"""
run_acceptance.py
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

SUITE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "acceptance.json")


def run_case(case, seed, threads, out_dir):
    config = mfglab.ScenarioConfig(case["scenario"], seed, dict(case["params"]), out_dir)
    status = mfglab.run_scenario(config, threads)
    if status != mfglab.EXIT_OK:
        return [f"exit status {status}"]
    with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as f:
        summary = json.load(f)
    problems = []
    for name in case["verdicts"]:
        if name not in summary["verdicts"]:
            problems.append(f"verdict {name} missing")
        elif not summary["verdicts"][name]:
            problems.append(f"verdict {name} false")
    for name, expected in case.get("results", {}).items():
        if summary["results"].get(name) != expected:
            problems.append(f"{name} = {summary['results'].get(name)!r}, expected {expected!r}")
    return problems


def check_oracles():
    problems = []
    residuals = []
    for n in (32, 64):
        phi = mfglab.ScalarField1D.from_function(n, lambda x: 0.1 * np.cos(2.0 * np.pi * x))
        traj = mfglab.cole_hopf_hjb(phi, 0.1, 0.5, 1e-3)
        residuals.append(mfglab.hjb_residual(traj, 0.1))
    ratio = residuals[0] / residuals[1]
    if not 3.0 <= ratio <= 5.0:
        problems.append(f"Cole-Hopf residual ratio {ratio:.3f} outside [3, 5]")

    m0 = mfglab.ScalarField1D.density(50, lambda x: np.exp(-((x - 0.3) ** 2) / 0.02))
    fp = mfglab.solve_fp(0.0, 0.05, m0, 1.0, dt=2e-3)
    if not mfglab.max_principle_check(fp.m, tol=1e-12).holds:
        problems.append("diffusion run is not positivity preserving")
    injected = np.array(fp.m)
    injected[len(injected) // 2, 7] = -1e-3
    broken = mfglab.max_principle_check(injected, tol=1e-12)
    if broken.holds or broken.arg != (len(injected) // 2, (7,)):
        problems.append(f"injected negative not reported, got {broken.arg}")
    return problems


def check_reproducible(name, seed, threads, out_dir):
    runs = []
    for attempt in ("first", "second"):
        target = os.path.join(out_dir, attempt)
        status = mfglab.run_scenario(mfglab.ScenarioConfig(name, seed, {}, target), threads)
        if status != mfglab.EXIT_OK:
            return [f"{attempt} run exit status {status}"]
        runs.append(target)
    csvs = sorted(f for f in os.listdir(runs[0]) if f.endswith(".csv"))
    _, mismatch, errors = filecmp.cmpfiles(runs[0], runs[1], csvs, shallow=False)
    return [f"{f} differs" for f in mismatch + errors]


with open(SUITE, encoding="utf-8") as f:
    suite = json.load(f)

seed = suite["seed"]
threads = suite["threads"]
failed = 0

for i, case in enumerate(suite["cases"]):
    out_dir = os.path.join(suite["outdir"], f"{i:02d}-{case['scenario']}")
    try:
        problems = run_case(case, seed, threads, out_dir)
    except Exception:
        problems = [traceback.format_exc()]
    failed += bool(problems)
    print(f"[{'FAIL' if problems else 'ok'}] {case['criterion']}: {case['name']}")
    for problem in problems:
        print(f"       {problem}")

problems = check_oracles()
failed += bool(problems)
print(f"[{'FAIL' if problems else 'ok'}] 10: Cole-Hopf residual and maximum principle")
for problem in problems:
    print(f"       {problem}")

for name in suite["reproducible"]:
    problems = check_reproducible(name, seed, threads, os.path.join(suite["outdir"], f"repro-{name}"))
    failed += bool(problems)
    print(f"[{'FAIL' if problems else 'ok'}] 11: {name} is reproducible")
    for problem in problems:
        print(f"       {problem}")

print(f"Ran {len(suite['cases']) + 1 + len(suite['reproducible'])} checks, {failed} failed.")
sys.exit(1 if failed else 0)
