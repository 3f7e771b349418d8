"""Schema models for meshes, states, ledgers, parameters and reports."""
from relaxa.schema.ledger import BASE_COLUMNS, EnergyLedger
from relaxa.schema.mesh import Domain, Interval, Mesh, Operators, Rectangle
from relaxa.schema.nonlinearity import AssumptionReport, NonlinearityError, NonlinearitySpec
from relaxa.schema.params import FunctionalParams, ParamsError
from relaxa.schema.reports import (
    AbsorbingReport,
    CertEntry,
    CertificationReport,
    DependenceResult,
    DifferenceSplit,
    EnvelopeFit,
    GronwallInstance,
    GronwallReport,
    SplitTrajectory,
    SweepResult,
    SweepRow,
)
from relaxa.schema.state import Cloud, ExtState, HypState, ParState, StepReport, TrajectoryRecord
