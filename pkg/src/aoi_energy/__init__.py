"""Age-of-information scheduling with a harvesting battery and paid backup.

The package models a sensor that each slot either idles or transmits over an
erasure channel, spending battery charge when available and paid backup
energy when not. It solves the long-run average cost trade-off between
update age and backup spending by relative value iteration, certifies the
structural properties of the solution numerically, and evaluates the solved
threshold policy against standard baselines by exact stationary analysis,
Monte Carlo simulation, and brute-force enumeration on small instances.
"""

from .evaluation import (
    BoundaryMassError,
    CSV_COLUMNS,
    EvalReport,
    METHOD_EXACT,
    METHOD_MONTE_CARLO,
    ReducibilityError,
    SimConfig,
    append_report_row,
    enumerate_optimal,
    evaluate_exact,
    report_row_values,
    simulate,
    stationary_distribution,
    write_report_rows,
)
from .model import (
    Action,
    State,
    StepOutcome,
    SystemParams,
    TransitionDist,
    index_state,
    sample_step,
    stage_cost,
    state_index,
    states,
    transition,
)
from .policies import (
    EnergyFirst,
    Periodic,
    PolicySpec,
    PolicyTable,
    Randomized,
    ThresholdPolicy,
    ZeroWait,
    decide,
    is_markov_stationary,
    parse_policy_spec,
    policy_label,
)
from .solver import (
    ConvergenceError,
    QTable,
    SolverConfig,
    ThresholdStructureError,
    ValueTable,
    bellman_qvalues,
    check_truncation_adequacy,
    extract_thresholds,
    greedy_policy,
    greedy_policy_shortcircuit,
    read_value_csv,
    solve,
    write_value_csv,
)
from .structure import (
    DEFAULT_TOLERANCE,
    MarginCheck,
    StructureReport,
    certify_structure,
    check_value_increments,
    check_value_monotone,
    check_submodularity,
)

__version__ = "0.1.0"
