"""
Outer approximation of the Van der Pol limit cycle
===================================================

Solve the degree-8 program on the annulus 0.4 <= |x| <= 2, check that a
simulated limit cycle sits inside K, and print a coarse picture of K.
"""

import numpy as np

from sosattractor import VAN_DER_POL, DynamicalSystem, SemialgebraicSet, SolveParams, solve_attractor
from sosattractor.attractor import member
from sosattractor.verify import attractor_samples, check_invariance, estimate_volume

# The system and the constraint set.  The annulus cuts out the unstable
# focus at the origin.
system = DynamicalSystem.parse("continuous", VAN_DER_POL)
X = SemialgebraicSet.annulus(2, 0.4, 2.0)

# Solve a short hierarchy.  d_k bounds vol(K) from above and decreases with k.
certs = {}
for k in (4, 6, 8):
    certs[k] = solve_attractor(system, X, SolveParams.continuous(k, beta=0.2))
    vol, se = estimate_volume(certs[k], n_mc=50_000)
    print(f"k={k}: {certs[k].status:12s} d_k={certs[k].d_k:.4f}  vol(K)={vol:.3f} +- {se:.3f}")

# Simulated limit cycle: discard 30 time units, then record every 10th step.
cert = certs[8]
A = attractor_samples(system, X, n_init=200, transient=30.0, keep=2000, seed=1)
print("fraction of limit-cycle samples in K:", np.mean(member(cert, A)))

# {J <= eps} is positively invariant, so trajectories started in K stay there.
inv = check_invariance(cert, n_points=200, horizon=20.0)
print("invariance violations:", inv.violations)

# A character plot of K on a 41 x 41 grid ('#' = in K, '.' = in X only).
g = np.linspace(-2, 2, 41)
xx, yy = np.meshgrid(g, g[::-1])
pts = np.column_stack([xx.ravel(), yy.ravel()])
inK = member(cert, pts).reshape(xx.shape)
inX = (np.hypot(xx, yy) >= 0.4) & (np.hypot(xx, yy) <= 2)
for row_k, row_x in zip(inK, inX):
    print("".join("#" if a else ("." if b else " ") for a, b in zip(row_k, row_x)))
