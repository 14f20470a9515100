"""Compare the compiled and pure-numpy convolution backends.

Run directly: ``python benchmarks/bench_kernels.py``. The backend is fixed at
import time by DISTILL_SEQ_BACKEND, so this script re-executes itself once per
backend and prints a combined table.
"""

import os
import subprocess
import sys
import time

SHAPES = [
    # (T, Cin, Cout, k, dilation)
    (64, 32, 32, 3, 1),
    (256, 32, 32, 3, 4),
    (1024, 64, 64, 3, 16),
    (4096, 64, 64, 3, 16),
]
REPEATS = 20


def run_one_backend():
    import numpy as np

    from distilldet import kernels as kn

    rows = []
    for T, cin, cout, k, dil in SHAPES:
        rng = np.random.default_rng(0)
        x = rng.normal(size=(T, cin))
        w = rng.normal(size=(k, cin, cout))
        gy = rng.normal(size=(T, cout))
        kn.conv1d_forward(x, w, dil)  # warm-up (includes jit compile)
        kn.conv1d_backward(x, w, dil, gy)
        t0 = time.perf_counter()
        for _ in range(REPEATS):
            kn.conv1d_forward(x, w, dil)
        fwd = (time.perf_counter() - t0) / REPEATS
        t0 = time.perf_counter()
        for _ in range(REPEATS):
            kn.conv1d_backward(x, w, dil, gy)
        bwd = (time.perf_counter() - t0) / REPEATS
        rows.append((T, cin, cout, k, dil, fwd * 1e3, bwd * 1e3))
    for row in rows:
        print("RESULT", *row)


def main():
    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, DISTILL_SEQ_BACKEND=backend)
        out = subprocess.run([sys.executable, __file__, "--worker"],
                             env=env, capture_output=True, text=True, check=True)
        results[backend] = [line.split()[1:] for line in out.stdout.splitlines()
                            if line.startswith("RESULT")]
    header = f"{'shape (T,Cin,Cout,k,d)':<26} {'numpy fwd':>10} {'numba fwd':>10} " \
             f"{'numpy bwd':>10} {'numba bwd':>10}  (ms/call)"
    print(header)
    for np_row, nb_row in zip(results["numpy"], results["numba"]):
        shape = "x".join(np_row[:5])
        print(f"{shape:<26} {float(np_row[5]):>10.3f} {float(nb_row[5]):>10.3f} "
              f"{float(np_row[6]):>10.3f} {float(nb_row[6]):>10.3f}")


if __name__ == "__main__":
    if "--worker" in sys.argv:
        run_one_backend()
    else:
        main()
