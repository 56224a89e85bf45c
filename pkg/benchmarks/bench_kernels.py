"""Time the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is called once
to trigger compilation, then timed over several repeats on the same inputs;
the table reports the best time per call and the speedup of numba over numpy.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from episodic.kernels import NUMBA_KERNELS, NUMPY_KERNELS


def best_of(fn, args, repeat: int) -> float:
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def track(rng, n: int):
    """A walk with dwell periods: stays of 30 fixes separated by moves."""
    t = np.cumsum(rng.integers(30, 90, n)).astype(np.float64)
    moving = (np.arange(n) // 30) % 2 == 1
    step = np.where(moving, 0.002, 0.00001)
    lat = 40.0 + np.cumsum(rng.normal(0, 1, n) * step)
    lon = -74.0 + np.cumsum(rng.normal(0, 1, n) * step)
    return t, lat, lon


def cases(rng, n_pairs: int, n_track: int):
    la, lo = rng.uniform(40, 41, n_pairs), rng.uniform(-75, -74, n_pairs)
    s = rng.uniform(0, 1e6, n_pairs)
    e = s + rng.uniform(0, 3600, n_pairs)
    t, lat, lon = track(rng, n_track)
    return {
        "pairwise_haversine": (la, lo, la, lo),
        "interval_gaps": (s, e, s, e),
        "stay_point_bounds": (t, lat, lon, 200.0, 1200.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=2000, help="points per side of the distance/gap matrices")
    ap.add_argument("--track", type=int, default=200_000, help="GPS fixes in the stay-point track")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not NUMBA_KERNELS:
        print("numba is not available; only the numpy backend can run")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20} {'numpy (s)':>10} {'numba (s)':>10} {'speedup':>8}")
    for name, inputs in cases(rng, args.pairs, args.track).items():
        a = NUMPY_KERNELS[name](*inputs)
        b = NUMBA_KERNELS[name](*inputs)
        if isinstance(a, tuple):
            assert all(np.array_equal(x, y) for x, y in zip(a, b)), name
        else:
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-6)
        t_np = best_of(NUMPY_KERNELS[name], inputs, args.repeat)
        t_nb = best_of(NUMBA_KERNELS[name], inputs, args.repeat)
        print(f"{name:<20} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
