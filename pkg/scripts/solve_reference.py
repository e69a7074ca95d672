"""Solve the shipped decaying-profile problem and print the full trail:
contraction constants, Picard steps with their ratios, residual and the
almost automorphic surrogate."""

import argparse
import time
from pathlib import Path

from reflide.cli import Report, load_config, run_check, shipped_config
from reflide.funcspace import GridFunction
from reflide.solver import picard_solve
from reflide.verify import paa_diagnostics


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=shipped_config())
    ap.add_argument("--csv", type=Path, help="write the solution here")
    args = ap.parse_args()

    cfg = load_config(args.config)
    rep = Report()
    cr = run_check(cfg, rep)
    print(f"lhs = {cr.lhs:.12f}  rhs = {cr.rhs:.12f}  factor = {cr.factor:.5f}  ({cr.summary})")

    start = time.perf_counter()
    x0 = GridFunction.constant(0.0, cfg.half_width, cfg.step)
    tr = picard_solve(cfg.ps, x0, cfg.picard_tol, cfg.max_iter, cfg.quad, contraction=cr)
    print(f"\n{'k':>3} {'sup|x_k+1 - x_k|':>18} {'ratio':>8} {'a priori':>12}")
    ratios = [float("nan")] + tr.ratios
    for k, (d, r) in enumerate(zip(tr.iterations, ratios)):
        print(f"{k:3d} {d:18.6e} {r:8.4f} {tr.apriori_bound(k + 1):12.3e}")
    print(f"\nconverged={tr.converged} residual={tr.final_residual:.3e} time={time.perf_counter() - start:.2f}s")

    u = tr.solution
    for t in (-10, -2, -0.5, 0, 0.5, 2, 10):
        print(f"u({t:5g}) = {float(u(t)): .10f}")

    er = paa_diagnostics(u, cfg.ps.mu)
    print("\nremainder ergodic means:")
    for r, m in zip(er.radii, er.means):
        print(f"  r = {r:6g}  mean = {m:.3e}")
    print(f"verdict: {er.verdict}\n{er.note}")
    if args.csv:
        u.to_csv(args.csv)


if __name__ == "__main__":
    main()
