"""Compare the compiled and pure-numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--sites N] [--radius R] [--repeat K] [--iters K]

Each timing is the best of ``--repeat`` runs. Results from the two backends
are also checked against each other, so a speedup never hides a wrong answer.
"""
import argparse
import time

import numpy as np

from rbfdeflate import InterpolationProblem, RadialBasis, available_backends
from rbfdeflate.assembly import assemble, build_grid
from rbfdeflate.core import spmv
from rbfdeflate.solvers import SolverConfig, gcr_solve


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=20000)
    ap.add_argument("--radius", type=float, default=0.03)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--iters", type=int, default=200, help="GCR iterations to time")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    sites = rng.random((args.sites, 2))
    prob = InterpolationProblem(sites, rng.random(args.sites), RadialBasis(args.radius))
    grid = build_grid(sites, args.radius)
    queries = rng.random((4 * args.sites, 2))
    weights = rng.standard_normal(args.sites)
    x = rng.standard_normal(args.sites)
    backends = available_backends()
    print(f"N={args.sites} radius={args.radius} backends={', '.join(backends)}")

    results = {}
    for name in backends:
        system = assemble(prob, name)
        phi = system.phi_block
        # a fixed iteration budget; full GCR work grows with k^2, so converging
        # to a tolerance would measure the problem rather than the kernels
        cfg = SolverConfig(tols=(1e-14,), max_iter=args.iters, record_history=False)

        def solve():
            def op(v):
                top = spmv(phi, v[:args.sites], name) + system.poly_block @ v[args.sites:]
                return np.concatenate([top, system.poly_block.T @ v[:args.sites]])
            return gcr_solve(op, system.rhs, cfg=cfg)

        results[name] = {
            "assemble": best_of(lambda: assemble(prob, name), args.repeat),
            "spmv": best_of(lambda: spmv(phi, x, name), args.repeat),
            "eval_sum": best_of(lambda: grid.weighted_sum(queries, weights, name), args.repeat),
            "gcr_solve": best_of(solve, 1),
        }
        print(f"  {name}: nnz/row={phi.nnz / args.sites:.1f}")

    ref = backends[0]
    print(f"{'kernel':<10}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for kernel in ("assemble", "spmv", "eval_sum", "gcr_solve"):  # gcr: --iters steps
        times = [results[b][kernel][0] for b in backends]
        speed = times[-1] / times[0] if len(times) > 1 else 1.0
        print(f"{kernel:<10}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
              + f"  {speed:>8.1f}x")

    a = results[ref]
    for other in backends[1:]:
        b = results[other]
        assert np.array_equal(a["spmv"][1], b["spmv"][1]), "spmv differs between backends"
        assert np.array_equal(a["assemble"][1].phi_block.data, b["assemble"][1].phi_block.data)
        np.testing.assert_allclose(a["eval_sum"][1], b["eval_sum"][1], rtol=1e-12, atol=1e-12)
    print("backend results agree")


if __name__ == "__main__":
    main()
