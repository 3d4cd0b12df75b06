"""Run every built-in scenario and print the stability picture.

One line per case: spectral abscissa of the assembled deviation matrix,
growth-detector verdict, settling time after the last event, the largest
interface energy ratio, and wall time. Artifact export is the command
line's job (gridpei simulate); this is the quick regression view.

Run:  python3 scripts/run_cases.py [--cases substr]
"""

import argparse
import math
import time

import numpy as np

from gridpei import cases
from gridpei.errors import NoConvergence, NumericBlowup
from gridpei.simulator import (energy_report, growth_detected, settling_time,
                               simulate)
from gridpei.smallsignal import assemble_small_signal


def run_one(case_id):
    scenario = cases.build(case_id)
    t_first = scenario.events[0].t if scenario.events else 0.0
    t_last = scenario.events[-1].t if scenario.events else 0.0

    try:
        at = scenario.events[-1].t if scenario.events else 0.0
        max_re = assemble_small_signal(scenario, at_time=at).max_real()
    except NoConvergence:
        max_re = math.nan

    t0 = time.perf_counter()
    blow = None
    try:
        traj = simulate(scenario)
    except NumericBlowup as e:
        traj = e.trajectory
        blow = e.t_exceed
    wall = time.perf_counter() - t0

    grew = None
    for ch in traj.ibr:
        flag, t_flag = growth_detected(traj.t, ch.i_odq, t_first)
        if flag and (grew is None or t_flag < grew):
            grew = t_flag

    settle = math.nan
    ratio = 0.0
    if blow is None:
        stacked = np.hstack([ch.i_odq for ch in traj.ibr])
        settle = settling_time(traj.t, stacked, t_last)
        rep = energy_report(traj, t_first, float(traj.t[-1]))
        ratio = float(np.max(rep.ratio))
    return max_re, grew, blow, settle, ratio, wall


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cases", default="",
                        help="only ids containing this substring")
    args = parser.parse_args()

    ids = [c for c in cases.case_ids() if args.cases in c]
    print(f"{'case':<26} {'maxRe':>9} {'grow@':>7} {'blow@':>7} "
          f"{'settle':>7} {'Eratio':>8} {'wall':>6}")
    total = 0.0
    for cid in ids:
        max_re, grew, blow, settle, ratio, wall = run_one(cid)
        total += wall

        def cell(x, spec, width):
            missing = x is None or (isinstance(x, float) and math.isnan(x))
            return "-".rjust(width) if missing else format(x, spec)

        print(f"{cid:<26} {cell(max_re, '+9.3f', 9)} {cell(grew, '7.3f', 7)} "
              f"{cell(blow, '7.3f', 7)} {cell(settle, '7.3f', 7)} "
              f"{ratio:>8.4f} {wall:>5.1f}s")
    print(f"{'total':<26} {'':>9} {'':>7} {'':>7} {'':>7} {'':>8} {total:>5.1f}s")


if __name__ == "__main__":
    main()
