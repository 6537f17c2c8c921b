"""Wall time of block-2 vs greedy-5 (best of several repeats), CC-UP by default.

    python3 scripts/cpu_time_table.py --slenderness 5,10,50,100,200 --repeats 5
"""

import argparse
import time

from pgd_strip.model import CASE_IDS, SolverSettings, make_case, plane_strain_moduli
from pgd_strip.pgd import fixed_point_block, operators_for, solve_greedy


def best_ms(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return 1e3 * best


def cli():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--case", choices=CASE_IDS, default="CC-UP")
    parser.add_argument("--slenderness", default="5,10,50,100,200")
    parser.add_argument("--modes", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    mat = plane_strain_moduli(1.0, 0.3)
    settings = SolverSettings()
    print(f"{'L/t':>8} {'block-2 ms':>11} {f'greedy-{args.modes} ms':>12} {'ratio':>6}")
    for s in map(float, args.slenderness.split(",")):
        case = make_case(args.case, s)
        ops = operators_for(case, settings)
        tb = best_ms(lambda: fixed_point_block(case, mat, settings, ops=ops), args.repeats)
        tg = best_ms(lambda: solve_greedy(case, mat, settings, args.modes, ops=ops),
                     args.repeats)
        print(f"{s:>8g} {tb:>11.1f} {tg:>12.1f} {tg / tb:>6.1f}")


if __name__ == "__main__":
    cli()
