"""Compare the compiled and interpreted kernel backends.

Each backend runs in its own subprocess: a short fixed workload checks that
the two paths agree digit for digit (they execute the same kernel source),
then a throughput run times the per-step QR loop. The interpreted run uses
proportionally fewer steps so the script stays quick.

Usage: python bench/bench_backends.py [--steps 20000] [--sites 1 2]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKLOAD = r"""
import json
import time
import numpy as np
import kickedtorus as kt

sites = %(sites)s
steps = %(steps)d
agree_steps = 400
results = []
for n_sites in sites:
    fam = kt.coupled_standard(n_sites, 1000.0)
    model = kt.rotational_model(n_sites, per_axis=3, mode="light")
    z0 = kt.derive_stream(1, 0).random(2 * n_sites)
    # warm-up triggers compilation (or a first interpreted pass)
    kt.qr_spectrum(z0, fam, model, 50, 1, burn_in=10)
    agree = kt.qr_spectrum(z0, fam, model, agree_steps, 1, burn_in=50)
    t0 = time.perf_counter()
    kt.qr_spectrum(z0, fam, model, steps, 1, burn_in=100)
    elapsed = time.perf_counter() - t0
    results.append({
        "sites": n_sites,
        "seconds": elapsed,
        "steps": steps,
        "steps_per_s": steps / elapsed,
        "agree_exponents": agree.exponents.tolist(),
    })
print(json.dumps({"backend": kt.backend_name(), "results": results}))
"""


def run_backend(pure, steps, sites):
    env = dict(os.environ)
    if pure:
        env["KICKEDTORUS_PURE_NUMPY"] = "1"
    else:
        env.pop("KICKEDTORUS_PURE_NUMPY", None)
    code = _WORKLOAD % {"steps": steps, "sites": list(sites)}
    proc = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=20_000,
                        help="measured trajectory steps for the compiled run")
    parser.add_argument("--sites", type=int, nargs="+", default=[1, 2],
                        help="site counts N to benchmark")
    args = parser.parse_args()

    pure_steps = max(200, args.steps // 100)
    compiled = run_backend(False, args.steps, args.sites)
    interpreted = run_backend(True, pure_steps, args.sites)

    print(f"{'N':>3} {'backend':>8} {'steps':>9} {'steps/s':>12}")
    status = 0
    for comp, interp in zip(compiled["results"], interpreted["results"]):
        print(f"{comp['sites']:>3} {'numba':>8} {comp['steps']:>9} "
              f"{comp['steps_per_s']:>12.0f}")
        print(f"{interp['sites']:>3} {'numpy':>8} {interp['steps']:>9} "
              f"{interp['steps_per_s']:>12.0f}")
        ratio = comp["steps_per_s"] / interp["steps_per_s"]
        gap = max(
            abs(a - b)
            for a, b in zip(comp["agree_exponents"], interp["agree_exponents"])
        )
        verdict = "ok" if gap <= 1e-12 else "MISMATCH"
        print(f"    speedup x{ratio:,.1f}; shared 400-step spectrum gap "
              f"{gap:.2e} [{verdict}]")
        if gap > 1e-12:
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
