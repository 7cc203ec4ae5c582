"""Time the conic backends on planted SOCPs and on real SCA subproblems.

    python benchmarks/bench_conic.py [--repeats N]

Prints one line per (problem set, backend): median wall time per solve,
the number of non-optimal returns and the worst constraint violation.
"""

import argparse
import statistics
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from rsma_istn import conic  # noqa: E402
from rsma_istn.channel import realize  # noqa: E402
from rsma_istn.sca import ALL_STREAMS, PRIVATE_ONLY, build_subproblem, initialize  # noqa: E402
from rsma_istn.scenario import ScenarioConfig  # noqa: E402
from socp_instances import as_program, planted_socp  # noqa: E402


def planted(count):
    return [as_program(*planted_socp(seed)[:5]) for seed in range(count)]


def subproblems(count):
    cfg = ScenarioConfig()
    progs = []
    for t in range(count):
        ch = realize(cfg.replace(sat_altitude_m=(300e3, 2000e3, 36000e3)[t % 3]), t)
        streams = ALL_STREAMS if t % 2 == 0 else PRIVATE_ONLY
        progs.append(build_subproblem(initialize(ch, cfg, streams), ch, cfg))
    return progs


def bench(progs, backend, repeats):
    times, bad, worst = [], 0, 0.0
    for prog in progs:
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            res = conic.solve(prog, backend)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
        bad += res.status != "optimal"
        worst = max(worst, res.max_violation)
    return statistics.median(times), bad, worst


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--count", type=int, default=20)
    args = p.parse_args(argv)
    sets = {"planted (n=5)": planted(args.count), "SCA subproblem": subproblems(args.count)}
    print(f"{'problem set':28s} {'backend':9s} {'median ms':>10s} {'non-opt':>8s} {'max viol':>9s}")
    for name, progs in sets.items():
        for backend in conic.available_backends():
            med, bad, worst = bench(progs, backend, args.repeats)
            print(f"{name:28s} {backend:9s} {1e3 * med:10.2f} {bad:8d} {worst:9.1e}")


if __name__ == "__main__":
    main()
