"""Compare the numba and pure-numpy kernel paths.

The backend is fixed at import time, so each path runs in its own
interpreter with STATDISTORT_DISABLE_NUMBA set accordingly.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from statdistort import backend
from statdistort.distortion import BinningSpec, bin_flat_index, statistical_distortion, transport
from statdistort.synth import reference_dataset

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)

def best(fn):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

out = {"backend": backend()}
for n in (50, 150, 300):
    a = rng.random(n); a /= a.sum()
    b = rng.random(n); b /= b.sum()
    cost = rng.random((n, n))
    out[f"transport_{n}x{n}"] = best(lambda: transport(a, b, cost))

pts = rng.random((200_000, 3))
spec = BinningSpec.from_points(pts, bins=8)
out["binning_200k"] = best(lambda: bin_flat_index(pts, spec))

ds = reference_dataset()
shifted = ds.with_values(ds.values * 1.1)
out["distortion_reference"] = best(lambda: statistical_distortion(ds, shifted))
print(json.dumps(out))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, STATDISTORT_DISABLE_NUMBA="1" if disable else "")
    proc = subprocess.run([sys.executable, "-c", CHILD, str(repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    fast = run(False, args.repeat)
    slow = run(True, args.repeat)
    print(f"{'kernel':<24}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<24}{fast[key]:>11.4f}s{slow[key]:>11.4f}s{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
