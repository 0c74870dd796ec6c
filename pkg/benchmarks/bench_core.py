"""Compiled versus fallback kernels on random problems.

    python3 benchmarks/bench_core.py [--states 200] [--frames 300] [--repeat 5]

Prints the best-of-N wall time of each kernel for both backends and the
speedup.  Results are also checked for agreement.
"""

import argparse
import timeit

import numpy as np

from mstrenet import _core
from mstrenet.graph import HmmGraph


def random_graph(num_states, rng, fanin=4):
    g = HmmGraph()
    for s in range(num_states):
        g.add_state(int(rng.integers(42)))
    for s in range(num_states):
        for src in rng.choice(num_states, size=fanin, replace=False):
            g.add_arc(int(src), s, float(np.log(rng.uniform(0.1, 1.0))))
    g.start = {0: 0.0}
    g.final = {num_states - 1: 0.0}
    return g.compiled()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, default=200)
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--words", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _core.compiled is None:
        raise SystemExit("compiled extension not available; rebuild with Cython installed")
    rng = np.random.default_rng(args.seed)
    cg = random_graph(args.states, rng)
    emit = rng.standard_normal((args.frames, len(cg.origin)))
    ref = rng.integers(0, 50, args.words)
    hyp = rng.integers(0, 50, args.words + 7)
    cases = {
        "forward_backward": lambda m: m.hmm_forward_backward(
            emit, cg.start_w, cg.final_w, cg.in_ptr, cg.in_src, cg.in_w,
            cg.out_ptr, cg.out_dst, cg.out_w),
        "viterbi": lambda m: m.hmm_viterbi(emit, cg.start_w, cg.final_w,
                                           cg.in_ptr, cg.in_src, cg.in_w),
        "edit_ops": lambda m: m.edit_ops(ref, hyp),
    }
    print(f"{'kernel':<18}{'cython s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in cases.items():
        a, b = fn(_core.compiled), fn(_core.fallback)
        np.testing.assert_allclose(np.asarray(a[0], float), np.asarray(b[0], float), rtol=1e-9)
        times = []
        for mod in (_core.compiled, _core.fallback):
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        print(f"{name:<18}{times[0]:>12.5f}{times[1]:>12.5f}{times[1] / times[0]:>9.1f}x")


if __name__ == "__main__":
    main()
