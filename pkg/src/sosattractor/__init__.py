"""Outer approximations of global attractors of polynomial dynamical systems.

The approximations are sublevel sets of polynomial "almost Lyapunov"
functions, found by a sum-of-squares program whose optimal values decrease
to the volume of the attractor as the polynomial degree grows.
"""

from .polycore import (Polynomial, PolynomialMap, PolynomialSyntaxError, basis, compose, differentiate,
                       evaluate, lie_derivative, multiply, parse_polynomial)
from .semialg import MomentVector, SemialgebraicSet, contains, moments, sample
from .sosprog import (ConicProblem, SosProgram, add_poly_var, add_putinar_constraint, add_scalar_var,
                      new_program, reconstruct, set_objective, to_conic)
from .conic import ConicSolution, SolverError, SolverSettings, solve, verify_solution
from .attractor import (HENON, NO_POLY_LYAPUNOV, VAN_DER_POL, Certificate, DynamicalSystem, SolveParams,
                        build_continuous, build_discrete, intersect_members, load_certificate, member,
                        member_interior_variant, save_certificate, solve_attractor)
from .verify import (VerificationReport, attractor_samples, check_interior, check_invariance, check_residuals,
                     estimate_volume, iterate_map, simulate_ode, verify_certificate)

__all__ = [
    "Polynomial",
    "PolynomialMap",
    "PolynomialSyntaxError",
    "basis",
    "compose",
    "differentiate",
    "evaluate",
    "lie_derivative",
    "multiply",
    "parse_polynomial",
    "MomentVector",
    "SemialgebraicSet",
    "contains",
    "moments",
    "sample",
    "ConicProblem",
    "SosProgram",
    "add_poly_var",
    "add_putinar_constraint",
    "add_scalar_var",
    "new_program",
    "reconstruct",
    "set_objective",
    "to_conic",
    "ConicSolution",
    "SolverError",
    "SolverSettings",
    "solve",
    "verify_solution",
    "HENON",
    "NO_POLY_LYAPUNOV",
    "VAN_DER_POL",
    "Certificate",
    "DynamicalSystem",
    "SolveParams",
    "build_continuous",
    "build_discrete",
    "intersect_members",
    "load_certificate",
    "member",
    "member_interior_variant",
    "save_certificate",
    "solve_attractor",
    "VerificationReport",
    "attractor_samples",
    "check_interior",
    "check_invariance",
    "check_residuals",
    "estimate_volume",
    "iterate_map",
    "simulate_ode",
    "verify_certificate",
]

__version__ = "0.1.0"
