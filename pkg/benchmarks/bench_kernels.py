"""Numba vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python benchmarks/bench_kernels.py --e2e      # plus a short training run per backend

The end-to-end mode runs ``coronet train`` twice in subprocesses, once with
CORONET_DISABLE_JIT=1, so the import-time dispatch is exercised for real.
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time
import timeit

import numpy as np

from coronet import kernels
from coronet._accel import HAVE_NUMBA

FIXTURE = os.path.join(os.path.dirname(kernels.__file__), "data", "conceptnet_fixture.csv")


def best_of(fn, repeat=5):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n


def cases(rng):
    # shapes match the defaults: T=32 frames, d=64 (GRU hidden 32 per direction)
    gx = rng.normal(size=(32, 96))
    uh = rng.normal(size=(32, 96)) * 0.2
    fwd = kernels.gru_forward_numpy(gx, uh)
    dh = rng.normal(size=(32, 32))
    pts = rng.normal(size=(32, 32))
    ctr = rng.normal(size=(5, 32))
    x = rng.normal(size=(32, 16))
    return {
        "gru_forward (T=32, h=32)": (lambda: kernels.gru_forward_numpy(gx, uh),
                                     lambda: kernels.gru_forward_jit(gx, uh)),
        "gru_backward (T=32, h=32)": (lambda: kernels.gru_backward_numpy(dh, *fwd, uh),
                                      lambda: kernels.gru_backward_jit(dh, *fwd, uh)),
        "assign_nearest (32 pts, 5 ctr)": (lambda: kernels.assign_nearest_numpy(pts, ctr),
                                           lambda: kernels.assign_nearest_jit(pts, ctr)),
        "cosine_similarity (32x16)": (lambda: kernels.cosine_similarity_numpy(x),
                                      lambda: kernels.cosine_similarity_jit(x)),
    }


def run_kernels():
    if not HAVE_NUMBA:
        print("numba not importable; *_jit names are the plain-Python loops")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy':>11s} {'numba':>11s} {'speedup':>8s}")
    for name, (f_np, f_jit) in cases(rng).items():
        f_jit()  # compile outside the timing
        t_np, t_jit = best_of(f_np), best_of(f_jit)
        print(f"{name:34s} {t_np * 1e6:9.1f}us {t_jit * 1e6:9.1f}us {t_np / t_jit:7.1f}x")


def run_e2e(epochs):
    with tempfile.TemporaryDirectory() as d:
        data = os.path.join(d, "synth")
        subprocess.run(["coronet", "synth", "--videos", "16", "--out-dir", data, "--seed", "1"],
                       check=True, capture_output=True)
        pq = os.path.join(d, "pq.jsonl")
        graph = os.path.join(d, "graph.json")
        subprocess.run(["coronet", "pqgen", "--data", data, "--out", pq],
                       check=True, capture_output=True)
        subprocess.run(["coronet", "extract-graph", "--dump", FIXTURE, "--seeds-from", pq,
                        "--out", graph], check=True, capture_output=True)
        cfg = os.path.join(d, "cfg.json")
        with open(cfg, "w") as fh:
            fh.write('{"epochs": %d, "seed": 1}' % epochs)
        for label, flag in (("numba", ""), ("numpy", "1")):
            env = dict(os.environ, CORONET_DISABLE_JIT=flag)
            t0 = time.perf_counter()
            subprocess.run(["coronet", "train", "--config", cfg, "--data", data,
                            "--graph", graph, "--out", os.path.join(d, label), "-q"],
                           check=True, capture_output=True, env=env)
            print(f"train {epochs} epochs, 16 videos [{label}]: "
                  f"{time.perf_counter() - t0:.1f}s (includes import/JIT compile)")


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--e2e", action="store_true")
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args(argv)
    run_kernels()
    if args.e2e:
        run_e2e(args.epochs)


if __name__ == "__main__":
    sys.exit(main())
