"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time for each backend and the
speed-up.  Both backends run on identical inputs and their results are
checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from ccregion import kernels
from ccregion.milp import _LpModel, solve_milp
from ccregion.region import region_from_bands, to_milp


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _region_problem(seed=0, n=30, d=3, k=18):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(d)
    x = rng.random((n, d))
    y = x @ theta + rng.standard_normal(n)
    spec = region_from_bands(x, y - 1.9, y + 1.9, k, 100.0)
    return to_milp(spec, np.eye(d)[0], "max")


def cases():
    p = np.random.default_rng(1).random(20_000)
    v = np.linspace(0.0, 0.9, 400, endpoint=False)
    u = np.linspace(0.9, 1.0, 400)[1:]
    fv = kernels.binomial_tail_many(30, 20, v)
    fu = kernels.binomial_tail_many(30, 20, u)
    prob = _region_problem()
    model = _LpModel(prob.A, prob.relations, prob.rhs)
    c = -prob.objective
    lo, up = prob.variable_bounds()
    root = model.solve(c, lo, up)
    child_up = up.copy()
    frac = np.abs(root.x[3:] - np.round(root.x[3:]))
    child_up[3 + int(np.argmax(frac))] = 0.0
    return {
        "binomial_tail_many (20k points, n=30)": lambda: kernels.binomial_tail_many(30, 20, p),
        "min_mixture (400 x 399 grid)": lambda: kernels.min_mixture(v, fv, u, fu, 0.9),
        "primal simplex, cold LP (61 x 154)": lambda: model.solve(c, lo, up).value,
        "dual simplex, warm child LP": lambda: model.solve_from(c, lo, child_up, root.warm).value,
        "branch and bound, region max (n=30, k=18)": lambda: solve_milp(prob).value,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback is available")
    results = {}
    for name in backends:
        kernels.use_backend(name)
        for label, fn in cases().items():
            value = fn()
            results.setdefault(label, {})[name] = (value, _best(fn, args.repeat))
    print(f"{'kernel':45s} " + " ".join(f"{b:>11s}" for b in backends) + "    speed-up  agree")
    for label, per in results.items():
        times = " ".join(f"{per[b][1] * 1e3:9.2f}ms" for b in backends)
        vals = [per[b][0] for b in backends]
        agree = all(np.allclose(np.asarray(vals[0], dtype=object).astype(float),
                                np.asarray(w, dtype=object).astype(float), rtol=1e-9, atol=1e-12)
                    for w in vals[1:])
        speed = per["python"][1] / per["cython"][1] if "cython" in per else float("nan")
        print(f"{label:45s} {times} {speed:9.1f}x  {'yes' if agree else 'NO'}")


if __name__ == "__main__":
    main()
