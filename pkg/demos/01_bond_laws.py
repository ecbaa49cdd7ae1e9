"""Bond laws on the circle, one spin pair at a time.

The reflection trick: for two spins on the same side of an axis, the
bond between them opens with probability 1 - w(Ru_x, u_y)/w(u_x, u_y).
Closing it costs exactly the weight lost by reflecting one endpoint, so
swapping a whole cluster across the axis leaves the joint law intact.

Run:  python3 demos/01_bond_laws.py
"""

import math

import numpy as np

from o2clusters import R, R1, R2, Villain, XYExp, pair_bond_law, single_bond_prob, wrapped_heat_kernel

# The Villain weight is the heat kernel on the circle.
t = 1.0
theta = np.linspace(-math.pi, math.pi, 9)
print("wrapped heat kernel, t = 1")
for a, v in zip(theta, wrapped_heat_kernel(theta, 0.0, t)):
    print(f"  theta={a:+.3f}  p_t={v:.6f}")

# Single bonds for the axis through +-i.  XY has the closed form
# 1 - exp(-2 beta cos u_x cos u_y).
beta = 1.5
ux, uy = 0.3, -0.4
print("\nsingle bond, XY beta=1.5")
print(f"  library    {single_bond_prob(XYExp(beta), ux, uy, R):.12f}")
print(f"  closed form {1 - math.exp(-2 * beta * math.cos(ux) * math.cos(uy)):.12f}")
print(f"  opposite sides: {single_bond_prob(XYExp(beta), ux, math.pi - 0.1, R)}")

# Pair bonds use the two diagonal axes at once.  The joint cell c must
# sit inside the Frechet bounds for a valid coupling.
print("\npair bonds, Villain t=1")
for ux, uy in [(0.1, 0.2), (0.1, -0.3), (0.5, 2.0)]:
    law = pair_bond_law(Villain(t), ux, uy)
    lo, hi = max(0.0, law.p + law.q - 1), min(law.p, law.q)
    print(f"  u=({ux:+.1f},{uy:+.1f})  p={float(law.p):.4f} q={float(law.q):.4f} "
          f"c={float(law.c):.4f}  bounds [{lo:.4f}, {hi:.4f}]")
    assert lo - 1e-12 <= law.c <= hi + 1e-12

# The marginals agree with the single-axis laws for R1 and R2.
law = pair_bond_law(Villain(t), 0.1, 0.2)
print(f"\n  p vs R1 single law: {float(law.p):.12f} {single_bond_prob(Villain(t), 0.1, 0.2, R1):.12f}")
print(f"  q vs R2 single law: {float(law.q):.12f} {single_bond_prob(Villain(t), 0.1, 0.2, R2):.12f}")
