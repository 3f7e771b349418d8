"""Time stepping of the hyperbolic problem and its parabolic limit."""
from relaxa.solver.stepper import (
    MidpointScheme,
    StepFailure,
    hyperbolic_energy,
    lyapunov,
    parabolic_velocity,
    step_hyperbolic,
    step_parabolic,
)
from relaxa.solver.trajectory import (
    continuous_dependence_experiment,
    convergence_order,
    random_state,
    seed_rngs,
    solve_trajectory,
    well_prepared_velocity,
)
