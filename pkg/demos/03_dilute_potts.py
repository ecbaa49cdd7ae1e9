"""Dilute Potts spins from a vacancy-mediated Markov chain.

Each edge carries a continuous-time chain on {0, 1, ..., Q}.  A spin
state jumps to the vacancy 0 at rate 1 and the vacancy jumps to each
spin at rate lam.  A bond opens when the bridge between equal spins
never visits 0.  Connectivity then measures spin agreement:

    E[1{s_x = s_y} | both occupied] - 1/Q = (1 - 1/Q) P(x <-> y | both occupied)

Run:  python3 demos/03_dilute_potts.py
"""

import math

import numpy as np

from o2clusters import DilutePottsParams, DPConfig, Graph, build_box, dp_bond_open_prob, dp_run, tau_estimator
from o2clusters.oracle import OracleSpec, exact_dilute_potts
from o2clusters.potts import fk_limit_params, transition_matrix

P = DilutePottsParams(Q=3, lam=0.5, t=0.8)
print("transition matrix, Q=3, lam=0.5, t=0.8")
print(np.array2string(transition_matrix(P), precision=4))

# Exact check on a three-vertex path by enumeration.
g = Graph.from_edges(3, [(0, 1), (1, 2)], bc="free")
spec = OracleSpec(g, params=P, site=0, other=2)
lhs, rhs = exact_dilute_potts(spec, "tau_lhs"), exact_dilute_potts(spec, "tau_rhs")
print(f"\npath of three: lhs={lhs:.12f} rhs={rhs:.12f}")

# The same identity by simulation on a 3x3 torus.
torus = build_box(2, 3, bc="torus")
rng = np.random.default_rng(0)
cfg = DPConfig.new(torus, P, init="random", rng=rng)
est = tau_estimator(dp_run(cfg, 0, 4, 50_000, rng, burn_in=500), P.Q)
print(f"3x3 torus:     lhs={est.tau:.4f}+-{est.tau_err:.4f}  rhs={est.rhs:.4f}+-{est.rhs_err:.4f}")

# Few vacancies: lam -> infinity recovers the ordinary FK bond probability.
print("\nlarge lam limit, Q=2")
for t in (0.3, 1.0, 2.0):
    beta, p_fk = fk_limit_params(t, 2)
    for lam in (1.0, 1e2, 1e6):
        q = dp_bond_open_prob(1, 1, DilutePottsParams(2, lam, t))
        print(f"  t={t} lam={lam:<8g} bond={q:.6f}   FK 1-e^-beta={p_fk:.6f} (beta={beta:.4f})")
