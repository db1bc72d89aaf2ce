"""Speed comparison of the compiled and interpreted mask kernels.

The backend is chosen at import time from the MARKOSPARSE_DISABLE_NUMBA
environment variable, so each side runs in its own subprocess; the parent
only compares wall times and checks that both backends produced the
bit-identical mask sequence (they consume the PCG64 stream identically).
"""

import json
import os
import subprocess
import sys

from .errors import NumericalError
from .kernels import DISABLE_ENV

_CHILD = r"""
import hashlib, json, sys, time
import numpy as np
from markosparse import kernels

kind, act, d, m, K, b, steps, repeats, seed = json.loads(sys.argv[1])
# warm-up call so JIT compilation stays out of the timed region
warm = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
kernels.simulate_masks(warm, kind, act, d, m, K, b, min(steps, 64))
best = float("inf")
digest = None
for _ in range(repeats):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    t0 = time.perf_counter()
    masks = kernels.simulate_masks(rng, kind, act, d, m, K, b, steps)
    best = min(best, time.perf_counter() - t0)
    digest = hashlib.sha256(masks.tobytes()).hexdigest()
print(json.dumps({"backend": kernels.backend_name(), "seconds": best, "digest": digest}))
"""


def _run_child(disable_numba, payload):
    env = os.environ.copy()
    if disable_numba:
        env[DISABLE_ENV] = "1"
    else:
        env.pop(DISABLE_ENV, None)
    proc = subprocess.run(
        [sys.executable, "-c", _CHILD, json.dumps(payload)],
        capture_output=True, text=True, env=env,
    )
    if proc.returncode != 0:
        raise NumericalError(f"benchmark child failed:\n{proc.stderr}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def benchmark(kind=1, activation=0, d=500, m=50, K=3, b=50.0,
              steps=5000, repeats=3, seed=0):
    """Times simulate_masks under both backends; returns a report dict."""
    payload = [kind, activation, d, m, K, float(b), steps, repeats, seed]
    compiled = _run_child(False, payload)
    interpreted = _run_child(True, payload)
    report = {
        "config": {"kind": kind, "activation": activation, "d": d, "m": m,
                   "K": K, "b": b, "steps": steps, "repeats": repeats, "seed": seed},
        "compiled": compiled,
        "interpreted": interpreted,
        "identical_output": compiled["digest"] == interpreted["digest"],
        "speedup": interpreted["seconds"] / compiled["seconds"],
    }
    if compiled["backend"] == interpreted["backend"]:
        report["note"] = "numba unavailable; both sides ran interpreted"
    return report


def format_report(report):
    c, i = report["compiled"], report["interpreted"]
    lines = [
        f"steps={report['config']['steps']} d={report['config']['d']} "
        f"m={report['config']['m']} K={report['config']['K']}",
        f"{c['backend']:>12}: {c['seconds'] * 1e3:9.2f} ms",
        f"{i['backend']:>12}: {i['seconds'] * 1e3:9.2f} ms",
        f"     speedup: {report['speedup']:.1f}x",
        f"   identical: {report['identical_output']}",
    ]
    if "note" in report:
        lines.append(f"        note: {report['note']}")
    return "\n".join(lines)
