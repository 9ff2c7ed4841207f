"""Safety-admissible set-points and maximal droop gains for grid-forming inverters."""

__version__ = "0.1.0"

from .network import (  # noqa: E402
    InverterParams,
    Line,
    NetworkModel,
    NetworkParseError,
    NetworkValidationError,
    SafetySpec,
    load_bundled,
    load_network,
    neighbors,
    parse_network,
    save_network,
)
from .powerflow import (  # noqa: E402
    NodeAssignment,
    PolynomialExpr,
    active_power,
    reactive_power,
    taylor3_power,
    taylor_remainder_bound,
)
from .optimize import (  # noqa: E402
    CertifiedBound,
    DisturbanceBox,
    extremize_bnb,
    extremize_separable,
    grid_oracle,
)
from .verify import (  # noqa: E402
    AdmissibleInterval,
    AdmissibleReport,
    PowerEnvelope,
    admissible_controls,
    droop_sweep,
    max_droop,
    nagumo_check,
    power_envelope,
    sensitivity_sweep,
    simple_example,
    verify_node,
)
from .simulate import (  # noqa: E402
    Scenario,
    SimTrace,
    safety_monitor,
    simulate,
    switching_policy_step,
    write_trace_csv,
)
