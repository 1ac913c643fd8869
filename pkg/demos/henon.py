"""
The Henon map
=============

Discrete-time certificates use alpha and gamma instead of beta.  The map is
a rescaled classical Henon map whose attractor spans roughly
[-0.86, 0.85] x [-0.39, 0.38].
"""

import numpy as np

from sosattractor import HENON, DynamicalSystem, SemialgebraicSet, SolveParams, solve_attractor
from sosattractor.attractor import member
from sosattractor.verify import EmptySampleError, attractor_samples, estimate_volume

system = DynamicalSystem.parse("discrete", HENON)
params = SolveParams.discrete(6, alpha=0.002, gamma=0.05)

# On [-1, 1]^2 the attractor fits inside X.
square = SemialgebraicSet.box([-1, -1], [1, 1], np.sqrt(2))
cert = solve_attractor(system, square, params)
A = attractor_samples(system, square, n_init=1000, transient=1000, keep=10_000, seed=1)
vol, se = estimate_volume(cert, n_mc=100_000)
print(f"[-1,1]^2: {cert.status}, d_k={cert.d_k:.4f}, vol(K)={vol:.3f} +- {se:.3f} of 4")
print("orbit points in K:", np.mean(member(cert, A)))

# On [0, 1]^2 every orbit leaves X after a few dozen steps, so the maximal
# positively invariant set is thin and the certificate's K is tiny.
unit = SemialgebraicSet.box([0, 0], [1, 1], np.sqrt(2))
cert = solve_attractor(system, unit, params)
vol, se = estimate_volume(cert, n_mc=100_000)
print(f"[0,1]^2: {cert.status}, d_k={cert.d_k:.4f}, vol(K)={vol:.5f} +- {se:.5f} of 1")
try:
    attractor_samples(system, unit, n_init=1000, transient=1000, keep=100, seed=1)
except EmptySampleError as exc:
    print("no post-transient orbit in [0,1]^2:", exc)

# The saddle fixed point lies in [0,1]^2 and must be in K.
fixed = np.array([0.4209, 0.18941])
print("fixed point residual:", np.abs(system.f(fixed) - fixed).max(), " in K:", member(cert, fixed))
