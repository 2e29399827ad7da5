"""Compare the compiled and pure-Python twin kernels.

    python3 benchmarks/bench_kernels.py [--flows 100] [--repeat 20]
"""
import argparse
import os
import random
import time

import numpy as np

from resiloop.kgraph import load_topology_file
from resiloop.testbeds import random_traffic
from resiloop.twin import kernels
from resiloop.twin.engine import NetworkIndex

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_TOPOLOGY = os.path.join(HERE, "..", "tests", "data", "TataNld.graphml")


def _inputs(path, n_flows, seed):
    kg = load_topology_file(path)
    tm = random_traffic(kg, n_flows, random.Random(seed))
    ix = NetworkIndex(kg)
    src = np.array([ix.r_idx[f.src] for f in tm], dtype=np.int64)
    dst = np.array([ix.r_idx[f.dst] for f in tm], dtype=np.int64)
    dem = np.array([f.demand_mbps for f in tm])
    on = np.ones(len(tm), dtype=np.uint8)
    lok = np.ones(len(ix.links), dtype=np.uint8)
    nok = np.ones(len(ix.routers), dtype=np.uint8)
    return ix, src, dst, dem, on, lok, nok


def bench(mod, args, repeat):
    ix, src, dst, dem, on, lok, nok = args
    best_r = best_m = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        ptr, links, hops = mod.route_flows(ix.indptr, ix.adj_node, ix.adj_link, ix.prop, lok, nok, src, dst, on)
        t1 = time.perf_counter()
        out = mod.flow_metrics(ptr, links, hops, dst, dem, on, ix.cap0, ix.prop, lok,
                               np.zeros(len(ix.routers)), ix.units, 20.0)
        t2 = time.perf_counter()
        best_r, best_m = min(best_r, t1 - t0), min(best_m, t2 - t1)
    return best_r, best_m, (ptr, links, hops) + tuple(out)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--topology", default=DEFAULT_TOPOLOGY)
    p.add_argument("--flows", type=int, default=100)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args(argv)
    args = _inputs(a.topology, a.flows, a.seed)
    results = {}
    for name, mod in sorted(kernels.BACKENDS.items()):
        r, m, out = bench(mod, args, a.repeat)
        results[name] = out
        print(f"{name:7s} route_flows {r * 1e3:9.3f} ms   flow_metrics {m * 1e3:9.3f} ms")
    if len(results) == 2:
        a_out, b_out = results.values()
        same = all(np.array_equal(x, y) for x, y in zip(a_out, b_out))
        print("outputs bit-identical:", same)
    else:
        print("compiled kernels not built; only the Python backend was measured")


if __name__ == "__main__":
    main()
