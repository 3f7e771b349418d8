"""relaxa: hyperbolic relaxation of reaction-diffusion equations with dynamic boundary conditions.

Solves ε·u_tt + u_t − Δu + f(u) = 0 in Ω with ∂ₙu + u + u_t = 0 on Γ, and its
parabolic limit ε = 0, by P1 finite elements and an energy-exact midpoint
scheme, then certifies the dissipative estimates on the computed ledgers.
"""
__version__ = "0.1.0"

from relaxa.schema.mesh import Interval, Rectangle, Mesh, Operators
from relaxa.schema.nonlinearity import AssumptionReport, NonlinearitySpec
from relaxa.schema.params import FunctionalParams
from relaxa.schema.state import Cloud, ExtState, HypState, ParState, StepReport, TrajectoryRecord
from relaxa.schema.ledger import EnergyLedger

from relaxa.fem.mesh import build_mesh
from relaxa.fem.assembly import assemble
from relaxa.fem.norms import NormSuite, norm_h1

from relaxa.nonlinearity import (
    check_assumptions,
    doublewell,
    eval_F,
    eval_f,
    eval_fprime,
    eval_psi,
    eval_Psi,
    linear,
    polynomial,
)

from relaxa.solver.stepper import step_hyperbolic, step_parabolic
from relaxa.solver.trajectory import continuous_dependence_experiment, solve_trajectory

from relaxa.analysis.functionals import E_eps, FunctionalSuite, poincare_constant, rates
from relaxa.analysis.decomposition import difference_split, solve_split
from relaxa.analysis.attractor import absorbing_radius, lift, omega_cloud, semicontinuity_sweep, semidistance
from relaxa.analysis.verify import certify_run, check_gronwall, fit_envelope

from relaxa.parser.config_parser import parse_config, parse_config_file
from relaxa.serializer.snapshot import read_snapshot, write_snapshot
from relaxa.serializer.csv_serializer import read_ledger, write_ledger

__all__ = [
    # Schema
    "Interval", "Rectangle", "Mesh", "Operators",
    "NonlinearitySpec", "AssumptionReport", "FunctionalParams",
    "HypState", "ParState", "ExtState", "StepReport", "TrajectoryRecord", "Cloud",
    "EnergyLedger",
    # Finite elements
    "build_mesh", "assemble", "NormSuite", "norm_h1",
    # Nonlinearity
    "doublewell", "polynomial", "linear",
    "eval_f", "eval_F", "eval_fprime", "eval_psi", "eval_Psi", "check_assumptions",
    # Evolution
    "step_hyperbolic", "step_parabolic", "solve_trajectory", "continuous_dependence_experiment",
    # Analysis
    "poincare_constant", "E_eps", "FunctionalSuite", "rates",
    "solve_split", "difference_split",
    "absorbing_radius", "lift", "omega_cloud", "semidistance", "semicontinuity_sweep",
    "check_gronwall", "fit_envelope", "certify_run",
    # Parsers
    "parse_config", "parse_config_file",
    # Serializers
    "read_snapshot", "write_snapshot", "read_ledger", "write_ledger",
]
