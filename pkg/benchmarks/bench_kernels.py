"""Compare the compiled and pure-Python sampling kernels.

    python3 benchmarks/bench_kernels.py [--pairs N] [--horizon H] [--repeat R]

Both backends consume the same random stream, so the outputs are also
checked for equality.
"""
import argparse
import time

import numpy as np

from npglab import kernels
from npglab.envs import random_mdp


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, default=20)
    ap.add_argument("--actions", type=int, default=4)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--pairs", type=int, default=20000)
    ap.add_argument("--horizon", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    m = random_mdp(args.states, args.actions, args.gamma, rng)
    pi = rng.dirichlet(np.ones(args.actions), size=args.states)
    rho = np.full(args.states * args.actions, 1.0 / (args.states * args.actions))
    rho_c, pi_c, p_c = kernels.cdf(rho), kernels.cdf(pi), kernels.cdf(m.transition)

    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("compiled", kernels.compiled_backend))
    else:
        print("compiled extension not built; timing the Python fallback only")

    results = {}
    for name, impl in backends:
        t_pairs, (s, a) = best_of(lambda: kernels.sample_pairs(
            rho_c, pi_c, p_c, m.gamma, args.pairs, np.random.default_rng(1), backend=impl), args.repeat)
        t_roll, ret = best_of(lambda: kernels.rollouts(
            p_c, pi_c, m.reward, m.gamma, s, a, args.horizon, np.random.default_rng(2), backend=impl),
            args.repeat)
        results[name] = (t_pairs, t_roll, s, a, ret)

    print(f"{'backend':<10} {'sample_pairs [s]':>17} {'rollouts [s]':>13}")
    for name, (tp, tr, *_) in results.items():
        print(f"{name:<10} {tp:>17.4f} {tr:>13.4f}")
    if "compiled" in results:
        py, cc = results["python"], results["compiled"]
        print(f"speedup    {py[0] / cc[0]:>17.1f}x {py[1] / cc[1]:>12.1f}x")
        same = all(np.array_equal(x, y) for x, y in zip(py[2:], cc[2:]))
        print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()
