"""Compiled vs numpy cycle kernel.

Times the fused cycle on single manifolds of increasing window width and
on the full nominal sequence.  Run with ``python3 benchmarks/bench_kernels.py``.
"""
import argparse
import time

import numpy as np

from spinfeedback import kernels
from spinfeedback.dicke import EnsembleModel, ManifoldSpec, thermal_manifold
from spinfeedback.engine import FeedbackConfig, _evolve, _prepare, run_sequence


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_window(half, backend, repeat, cycles=44):
    spec = ManifoldSpec(14 * half, -half, half)
    model = EnsembleModel(manifolds=[spec])
    cfg = FeedbackConfig(n_cycles=cycles)
    sp = model.species[0]
    prep = _prepare(spec, sp, cfg, model)
    rho = thermal_manifold(spec).rho
    taus = cfg.tau_schedule.taus(cycles)
    kernel = kernels.get_cycle(backend)
    return best_of(lambda: _evolve(rho, prep, taus, [0.0] * cycles, kernel), repeat) / cycles


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["python"] + (["cython"] if kernels.compiled_cycle is not None else [])
    print(f"backends: {', '.join(backends)}")
    print(f"{'window':>8} " + " ".join(f"{b + ' us/cycle':>18}" for b in backends) + f"{'speedup':>10}")
    for half in (1, 5, 15, 30, 45):
        t = {b: bench_window(half, b, args.repeat) for b in backends}
        speed = t["python"] / t["cython"] if "cython" in t else np.nan
        print(f"{2 * half + 1:>8} " + " ".join(f"{1e6 * t[b]:>18.1f}" for b in backends)
              + f"{speed:>10.2f}")
    model = EnsembleModel.nominal()
    cfg = FeedbackConfig()
    t = {b: best_of(lambda: run_sequence(model, cfg, backend=b), args.repeat) for b in backends}
    line = ", ".join(f"{b} {t[b]:.2f} s" for b in backends)
    print(f"nominal sequence (46 manifolds x 2 species x 44 cycles): {line}")


if __name__ == "__main__":
    main()
