"""Time the compiled and NumPy grid kernels, then a full grid simulation with each.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernels(repeat: int) -> None:
    from weaktrace import kernels as k

    rng = np.random.default_rng(0)
    T, N = 500, 1024
    x = rng.normal(size=(T, N)) + 1j * rng.normal(size=(T, N))
    y = rng.normal(size=(T, N)) + 1j * rng.normal(size=(T, N))
    d = rng.uniform(-0.02, 0.02, T)
    dk = np.pi / 6.0
    w = rng.normal(size=N)
    rows = [("translate", k.translate_inplace_numpy, lambda f: f(x.copy(), d, dk)),
            ("beam_split", k.beam_split_numpy, lambda f: f(x, y, 0.6, 0.8)),
            ("weighted", k.weighted_intensity_numpy, lambda f: f(x, w))]
    if k.BACKEND == "compiled":
        from weaktrace import _kernels as c

        a = x.copy()
        b = x.copy()
        c.translate_inplace(a, d, dk)
        k.translate_inplace_numpy(b, d, dk)
        print(f"translate max abs diff compiled vs numpy: {np.abs(a - b).max():.2e}")
        comp = {"translate": c.translate_inplace, "beam_split": c.beam_split,
                "weighted": c.weighted_intensity}
    else:
        comp = {}
        print("compiled kernels unavailable; timing the NumPy path only")
    for name, ref, call in rows:
        t_np = _best(lambda: call(ref), repeat)
        line = f"{name:<11} numpy {t_np * 1e3:8.2f} ms"
        if name in comp:
            t_c = _best(lambda: call(comp[name]), repeat)
            line += f"   compiled {t_c * 1e3:8.2f} ms   speedup {t_np / t_c:5.2f}x"
        print(line)


def end_to_end() -> None:
    code = (
        "import time; from weaktrace import *; from weaktrace.presets import preset_text;"
        "from weaktrace.netlang import scale_vibrations; from weaktrace.kernels import BACKEND;"
        "net = validate(scale_vibrations(parse_network(preset_text('nested_aligned')), 20));"
        "t0 = time.perf_counter(); simulate(net, TimeBase(), Grid());"
        "print(f'{BACKEND:<9} grid:1024 nested_aligned 1 s @ 10 kHz: {time.perf_counter() - t0:.2f} s')"
    )
    for pure in ("0", "1"):
        env = dict(os.environ, WEAKTRACE_PURE=pure)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    kernels(args.repeat)
    sys.stdout.flush()
    end_to_end()
