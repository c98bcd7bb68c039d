"""Time the compiled kernels against the NumPy fallback.

Run with ``python3 benchmarks/bench_kernels.py``; ``--repeat`` and ``--number``
control the timing loops. Each kernel is checked for agreement between the
backends before it is timed.
"""

import argparse
import timeit

import numpy as np

from gaitseg import kernels
from gaitseg.segmentation import detect_change_points


def cases(rng):
    levels = rng.integers(0, 256, size=(64, 64), dtype=np.uint8)
    n, p = 64, 45
    corr = rng.normal(size=(n - 1, p))
    direction = rng.normal(size=(n - 1, p))
    active = np.zeros(n - 1, dtype=np.uint8)
    active[[10, 30]] = 1
    common = float(np.max(np.einsum("ij,ij->i", corr, corr))) * 1.5
    gallery = rng.normal(size=(500, 23))
    query = rng.normal(size=23)
    E = np.repeat(rng.normal(size=(4, p)) * 5, [8, 26, 15, 15], axis=0) + rng.normal(size=(n, p))
    return {
        "row_entropy 64x64": (kernels.row_entropy, (levels,)),
        "lars_gammas 63x45": (kernels.lars_gammas, (corr, direction, common, active)),
        "sq_distances 500x23": (kernels.sq_distances, (gallery, query)),
        "group LARS k=6 on 64x45": (lambda E: detect_change_points(E, 6).sets, (E,)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the NumPy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}" + "".join(f"{b + ' (us)':>16}" for b in backends) + f"{'speedup':>10}")
    for name, (fn, fargs) in cases(rng).items():
        results, times = {}, {}
        for b in backends:
            with kernels.using_backend(b):
                results[b] = fn(*fargs)
                t = timeit.repeat(lambda: fn(*fargs), repeat=args.repeat, number=args.number)
            times[b] = 1e6 * min(t) / args.number
        ref = results[backends[-1]]
        for b in backends:
            if isinstance(ref, list):
                assert results[b] == ref, f"{name}: backends disagree"
            else:
                np.testing.assert_allclose(results[b], ref, rtol=1e-10, atol=1e-12, err_msg=name)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<26}" + "".join(f"{times[b]:>16.1f}" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
