"""Functionals, decompositions, attractor experiments and certification."""
from relaxa.analysis.attractor import (
    absorbing_radius,
    cloud_saturation,
    hausdorff,
    lift,
    omega_cloud,
    semicontinuity_sweep,
    semidistance,
    stationarity_residual,
)
from relaxa.analysis.decomposition import (
    difference_ledger,
    difference_split,
    h_cross_check,
    measure_K_regularity,
    solve_split,
    split_ledger,
    time_lipschitz,
    z_decay_fit,
)
from relaxa.analysis.functionals import (
    EigenError,
    FunctionalSuite,
    SandwichBounds,
    E_eps,
    default_beta,
    poincare_constant,
    rates,
    sandwich_report,
)
from relaxa.analysis.verify import Targets, certify_run, check_gronwall, fit_envelope, report_text
