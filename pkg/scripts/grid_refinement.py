"""Grid refinement for the shipped problem: solve at h, h/2, h/4 and report
the differences on the coarse grid together with the observed order."""

import argparse
import math

import numpy as np

from reflide.cli import load_config, run_check, shipped_config, Report
from reflide.funcspace import GridFunction
from reflide.solver import picard_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.08)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--T", type=float, default=40.0)
    args = ap.parse_args()

    cfg = load_config(shipped_config())
    cr = run_check(cfg, Report())
    coarse = GridFunction.constant(0.0, args.T, args.h).grid
    inner = np.abs(coarse) <= 10
    sols = []
    for k in range(args.levels):
        h = args.h / 2**k
        tr = picard_solve(cfg.ps, GridFunction.constant(0.0, args.T, h), cfg.picard_tol, cfg.max_iter, cfg.quad, contraction=cr)
        sols.append(np.asarray(tr.solution(coarse[inner])))
        print(f"h = {h:<8g} iterations = {len(tr.iterations):2d} residual = {tr.final_residual:.3e}")
    diffs = [float(np.max(np.abs(sols[k + 1] - sols[k]))) for k in range(len(sols) - 1)]
    for k, d in enumerate(diffs):
        order = math.log2(diffs[k - 1] / d) if k and d > 0 else float("nan")
        print(f"|u_h/{2**(k + 1)} - u_h/{2**k}| = {d:.3e}  order = {order:.2f}")


if __name__ == "__main__":
    main()
