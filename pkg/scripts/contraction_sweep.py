"""How much room the two contraction conditions leave: scale the Lipschitz
data of the shipped problem and sweep the reflection coefficient b."""

import numpy as np

from reflide.cli import load_config, shipped_config
from reflide.expr import parse
from reflide.solver import check_thm1, check_thm2

PROFILE = "exp(-abs(t))/9"


def main():
    ps = load_config(shipped_config()).ps
    print("scaling the Lipschitz profile  L(t) = s exp(-|t|)/9, p = 2")
    print(f"{'s':>6} {'lhs':>12} {'rhs':>12} {'factor':>8}  verdict")
    for s in (0.25, 0.5, 1.0, 1.05, 1.09, 1.1, 1.5, 2.0):
        prof = parse(f"{s}*{PROFILE}")
        cr = check_thm2(ps, prof, prof, 2.0)
        print(f"{s:6.2f} {cr.lhs:12.8f} {cr.rhs:12.8f} {cr.factor:8.4f}  {cr.summary}")

    print("\nsweeping b with a = sqrt(2), constant bounds Lf = Lh = 1/20")
    print(f"{'b':>6} {'lam':>8} {'thm1':>10} {'thm2 rhs':>10}")
    prof = parse(PROFILE)
    for b in np.linspace(0.15, 1.35, 9):
        var = ps.replace(b=float(b))
        c1 = check_thm1(var, 1 / 20, 1 / 20)
        c2 = check_thm2(var, prof, prof, 2.0)
        print(f"{b:6.3f} {var.lam:8.4f} {c1.lhs:10.5f} {c2.rhs:10.5f}")


if __name__ == "__main__":
    main()
