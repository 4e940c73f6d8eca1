"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs through both backends; the table shows
the best of ``--repeat`` runs and the speedup.
"""

import argparse
import copy
import time

import numpy as np

from hamh.kernels import _fallback
from hamh.scenario import parse_scenario
from hamh.sim import SimState, apply_actions, build_network, generate_vehicles

try:
    from hamh.kernels import _ext
except ImportError:
    _ext = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    T, B, H = 360, 3, 128
    xp = rng.normal(size=(T, B, 3 * H))
    U = rng.normal(size=(H, 3 * H)) / np.sqrt(H)
    h0 = np.zeros((B, H))
    hs, gates = _fallback.gru_forward(xp, U, h0)
    dhs = rng.normal(size=(T, B, H))
    yield "gru_forward T=360 B=3 H=128", lambda m: m.gru_forward(xp, U, h0)
    yield "gru_backward T=360 B=3 H=128", lambda m: m.gru_backward(dhs, hs, gates, U)

    r, v = rng.normal(size=(360, 9)), rng.normal(size=(361, 9))
    yield "gae T=360 N=9", lambda m: m.gae(r, v, 0.98, 0.95)

    sc = parse_scenario("grid_3x3")
    net = build_network(sc)
    veh = generate_vehicles(net, sc, np.random.default_rng(0))
    acts = np.random.default_rng(1).integers(0, 8, size=(360, net.n))

    def episode(m):
        s = SimState(net, copy.deepcopy(veh))
        for a in acts:
            apply_actions(s, a)
            m.sim_advance(s.arrays, 10)

    yield "sim_advance 3x3 grid, 3600 s", episode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ext is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':34s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases():
        py = best_of(lambda: fn(_fallback), args.repeat)
        if _ext is None:
            print(f"{name:34s} {py * 1e3:10.2f}")
            continue
        c = best_of(lambda: fn(_ext), args.repeat)
        print(f"{name:34s} {py * 1e3:10.2f} {c * 1e3:12.2f} {py / c:7.1f}x")


if __name__ == "__main__":
    main()
