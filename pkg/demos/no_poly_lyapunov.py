"""
A globally stable system without a polynomial Lyapunov function
================================================================

The origin attracts every trajectory, yet no polynomial Lyapunov function
exists.  The certificate needs no Lyapunov function, only a polynomial J
whose eps-sublevel set is invariant.
"""

import numpy as np

from sosattractor import NO_POLY_LYAPUNOV, DynamicalSystem, SemialgebraicSet, SolveParams, solve_attractor
from sosattractor.attractor import member
from sosattractor.verify import check_invariance, estimate_volume, simulate_ode

system = DynamicalSystem.parse("continuous", NO_POLY_LYAPUNOV)
X = SemialgebraicSet.box([-1, -1], [1, 1], np.sqrt(2))
cert = solve_attractor(system, X, SolveParams.continuous(8, beta=0.2))
vol, se = estimate_volume(cert, n_mc=100_000)
print(f"{cert.status}: d_k={cert.d_k:.4f}, eps={cert.epsilon:.4f}, vol(K)={vol:.3f} +- {se:.3f}")
print("origin in K:", member(cert, [0.0, 0.0]))

# Trajectories from the corners are slow near the origin but enter K and stay.
for x0 in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
    traj = simulate_ode(system.f, x0, 50.0, 0.01)
    inside = member(cert, traj.states)
    print(f"from {x0}: first in K at t={traj.times[np.argmax(inside)]:.2f}, "
          f"in K at the end: {inside[-1]}, leaves afterwards: {not inside[np.argmax(inside):].all()}")

# Enlarging the sublevel (epsilon_scale > 1) trades tightness for robustness.
for scale in (1.0, 8.0):
    inv = check_invariance(cert, n_points=200, horizon=20.0, epsilon_scale=scale)
    print(f"epsilon_scale={scale}: {inv.violations} invariance violations")
