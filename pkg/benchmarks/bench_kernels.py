"""Time the numba and pure-numpy kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 200] [--train]

``--train`` also times a short end-to-end training run under each backend,
selected with PEMM_DISABLE_NUMBA in a subprocess.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pemm import _kernels

TRAIN_SNIPPET = """
import time
import numpy as np
from pemm import _kernels
from pemm.experiments import run_arm
from pemm.trainer import TrainConfig
C = np.ones((2, 2))
_kernels.head_loss(C, C, np.zeros(2, dtype=np.int64), 1.0, 1.0, 1.0, -4.0, 0.0, 0.7)
_kernels.pe_center(C, 3, 2, 2.0, 0.3)
t = time.perf_counter()
run_arm("pemm", 0, train_cfg=TrainConfig(epochs=20))
print(time.perf_counter() - t)
"""


def bench(fn, args, repeat):
    fn(*args)  # compile / warm up
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=3)) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--train", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'kernel':<28}{'numpy (us)':>12}{'numba (us)':>12}{'speedup':>9}")
    for B, K, m in [(128, 4, 16), (128, 10, 16), (512, 10, 64)]:
        z, C = rng.normal(size=(B, m)), rng.normal(size=(K, m))
        y = rng.integers(0, K, B)
        a = (z, C, y, 1.0, 0.1, 1.0, -4.0, 0.0, 0.7)
        t_np = bench(_kernels.head_loss_numpy, a, args.repeat)
        t_jit = bench(_kernels._head_loss_jit_entry, a, args.repeat)
        print(f"{f'head_loss B={B} K={K} m={m}':<28}{t_np * 1e6:>12.1f}{t_jit * 1e6:>12.1f}"
              f"{t_np / t_jit:>9.1f}")
    for K, m in [(4, 16), (10, 16), (100, 64)]:
        C = rng.normal(size=(K, m))
        a = (C, 3.0, 2.0, 2.0, 0.3)
        t_np = bench(_kernels.pe_center_numpy, a, args.repeat)
        t_jit = bench(_kernels._pe_center_jit_entry, a, args.repeat)
        print(f"{f'pe_center K={K} m={m}':<28}{t_np * 1e6:>12.1f}{t_jit * 1e6:>12.1f}"
              f"{t_np / t_jit:>9.1f}")

    if args.train:
        for flag in ("1", "0"):
            env = dict(os.environ, PEMM_DISABLE_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env,
                                 capture_output=True, text=True, check=True)
            name = "numpy" if flag == "1" else "numba"
            print(f"train 20 epochs ({name}): {float(out.stdout):.2f} s")


if __name__ == "__main__":
    main()
