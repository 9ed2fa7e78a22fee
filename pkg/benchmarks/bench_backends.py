"""Compare the numba kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_backends.py``. Numba timings exclude the
first (compiling) call. Each result is also checked for agreement between
the two backends.
"""

import time

import numpy as np

from nmrproj import kernels
from nmrproj import pulse_engine as pe
from nmrproj._backend import NUMBA_AVAILABLE
from nmrproj.spectroscopy import _fid_terms
from nmrproj.state_prep import thermal_equilibrium
from nmrproj.system_model import Cluster


def best_of(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_jacobi(n=64, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    a = a + a.conj().T
    res = {}
    for backend in ("numba", "numpy"):
        kernels.jacobi_eigh(a, backend=backend)
        res[backend] = best_of(lambda: kernels.jacobi_eigh(a, backend=backend))
    err = np.abs(res["numba"][1][0] - res["numpy"][1][0]).max()
    return {b: t for b, (t, _) in res.items()}, err


def bench_propagation(dur=2e-3):
    cluster = Cluster()
    seg = pe.Lock(dur_s=dur, sweep_s=dur, ramp_s=0.0)
    sched = pe.lock_schedule(seg, cluster)
    cfg = pe.PropagationConfig()
    res = {}
    for backend in ("numba", "numpy"):
        run = lambda: pe.propagator(sched, 0.1 * dur, cfg, backend=backend)[0]
        run()
        res[backend] = best_of(lambda: pe.propagator(sched, dur, cfg, backend=backend)[0], repeats=2)
    err = np.abs(res["numba"][1] - res["numpy"][1]).max()
    return {b: t for b, (t, _) in res.items()}, err


def bench_fid(points=8192):
    cluster = Cluster()
    amps, omegas = _fid_terms(thermal_equilibrium(0.01), cluster.eigensystem, np.deg2rad(1.0))
    res = {}
    for backend in ("numba", "numpy"):
        kernels.fid_signal(amps, omegas, 50e-6, 16, 0.0, backend=backend)
        res[backend] = best_of(lambda: kernels.fid_signal(amps, omegas, 50e-6, points, np.pi * 2.0, backend=backend))
    err = np.abs(res["numba"][1] - res["numpy"][1]).max() / np.abs(res["numpy"][1]).max()
    return {b: t for b, (t, _) in res.items()}, err, amps.size


def main():
    if not NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy path exists")
        return
    print(f"{'kernel':<34}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max diff':>12}")
    print("-" * 80)
    t, err = bench_jacobi()
    print(f"{'Jacobi eigh, 64x64 complex':<34}{t['numba']:>12.4f}{t['numpy']:>12.4f}{t['numpy'] / t['numba']:>10.2f}{err:>12.1e}")
    t, err = bench_propagation()
    print(f"{'lock propagation, 2 ms @ 0.5 us':<34}{t['numba']:>12.4f}{t['numpy']:>12.4f}{t['numpy'] / t['numba']:>10.2f}{err:>12.1e}")
    t, err, lines = bench_fid()
    label = f"FID synthesis, {lines} lines"
    print(f"{label:<34}{t['numba']:>12.4f}{t['numpy']:>12.4f}{t['numpy'] / t['numba']:>10.2f}{err:>12.1e}")


if __name__ == "__main__":
    main()
