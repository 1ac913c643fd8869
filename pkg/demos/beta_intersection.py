"""
Intersecting certificates for several discount factors
=======================================================

Every feasible certificate gives an outer approximation, so certificates
for different beta can be intersected for a tighter set.
"""

from sosattractor import VAN_DER_POL, DynamicalSystem, SemialgebraicSet, SolveParams, solve_attractor
from sosattractor.attractor import intersect_members
from sosattractor.verify import estimate_volume

system = DynamicalSystem.parse("continuous", VAN_DER_POL)
X = SemialgebraicSet.annulus(2, 0.4, 2.0)
certs = [solve_attractor(system, X, SolveParams.continuous(6, beta=b)) for b in (0.1, 0.2, 0.5)]

for c in certs:
    vol, se = estimate_volume(c, n_mc=100_000)
    print(f"beta={c.params.beta}: d_k={c.d_k:.4f}, vol(K)={vol:.3f} +- {se:.3f}")

vol, se = estimate_volume(None, X, n_mc=100_000, predicate=lambda p: intersect_members(certs, p))
print(f"intersection: vol={vol:.3f} +- {se:.3f}")
