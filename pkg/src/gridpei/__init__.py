"""gridpei: EMT simulation and passivity certification for inverter microgrids.

The public surface, roughly in workflow order: device models and their
linearizations (devices), L2 gain and interface gain checks (passivity),
branch-network algebra and the network index (network), scenario
descriptions and their text format (scenario, scenario_io, cases), the
transient simulator and its metrics (simulator), composite small-signal
assembly (smallsignal), and the command line (cli).
"""

from .cases import build as build_case
from .cases import case_ids
from .devices import (
    GflParameters,
    GfmParameters,
    StateSpaceModel,
    benchmark_gfl_parameters,
    benchmark_gfm_parameters,
    linearize_fast_subsystem,
)
from .network import Branch, NetworkTopology, network_passivity_index
from .passivity import PeiConfig, design_pei, l2_gain, verify_pei
from .scenario import Event, GridSpec, IbrSpec, LoadSpec, Scenario, SimOptions
from .scenario_io import (
    emit_scenario,
    load_scenario,
    parse_scenario,
    save_scenario,
)
from .simulator import (
    Trajectory,
    energy_report,
    growth_detected,
    power_sharing_error,
    settling_time,
    simulate,
    simulate_droop_only,
)
from .smallsignal import SmallSignalModel, assemble_small_signal

__version__ = "0.1.0"
