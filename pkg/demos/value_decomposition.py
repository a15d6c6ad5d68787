"""
Splitting cache-conditional values into decoupled parts
=======================================================

A tabular model with a random cache schedule, solved exactly and then
learned by the two cache-aware critics.
"""

import numpy as np

from carl.algos import recover_q
from carl.harness import fit_tabular
from carl.oracle import eigen_residuals, exact_eigen, exact_q, random_mdp, random_policy

rng = np.random.default_rng(3)
mdp = random_mdp(rng, S=5, A=3, T=4, gamma=0.9)
policy = random_policy(rng, 5, 3)
print("real-time probability per step:", np.round(mdp.d0, 3))

# exact values by backward induction
Q0, Q1 = exact_q(mdp, policy)
La, Lb = exact_eigen(mdp, policy)
print("Q0 - Q1 at t=0, s=0:", Q0[0, 0] - Q1[0, 0])
print("difference part at t=0, s=0:", La[0, 0])

# the difference part needs no bootstrap and the weighted part bootstraps only on itself
line1, line2 = eigen_residuals(mdp, policy)
print(f"difference residual {line1:.1e}, weighted recursion residual {line2:.1e}")

# the two parts give back both conditional values
d0 = mdp.d0[:, None, None]
q0, q1 = recover_q(La, Lb, d0)
print("recovery error:", np.max(np.abs(q0 - Q0)), np.max(np.abs(q1 - Q1[:, :, None])))

# learn the same tables from the enumerated transitions
for method in ("CARL-DL", "CARL-EL"):
    fit = fit_tabular(method, mdp, policy, steps=3000)
    print(method, "max error by step:", [(s, f"{e:.1e}") for s, e in fit.errors])
