"""Scenario description: devices, network, loads, grid source, events.

A scenario is a complete, immutable description of one simulation study.
Node numbering is 1-based and every node hosts exactly one device; loads
and the optional stiff grid attach at nodes. Events are snapped to the
output sampling grid by the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .devices import GflParameters, GfmParameters
from .errors import InvalidScenario
from .network import NetworkTopology
from .passivity import PeiConfig

LOAD_Z = "constant-impedance"
LOAD_CP = "constant-power"

EV_CLOSE_TIE = "close-tie"
EV_LOAD_STEP = "load-step"
EV_FREQ_STEP = "grid-frequency-step"
EV_PEI_ENABLE = "pei-enable"

_EVENT_KINDS = (EV_CLOSE_TIE, EV_LOAD_STEP, EV_FREQ_STEP, EV_PEI_ENABLE)


@dataclass(frozen=True)
class IbrSpec:
    """One device: kind ('gfm' | 'gfl'), its parameters, optional interface.

    pei_enabled controls the initial segment; a pei-enable event can turn
    an initially disabled interface on mid-run. References are always the
    certified pre-event operating point.
    """

    kind: str
    params: GfmParameters | GflParameters
    pei: PeiConfig | None = None
    pei_enabled: bool = True

    def __post_init__(self):
        if self.kind not in ("gfm", "gfl"):
            raise InvalidScenario(f"unknown device kind {self.kind!r}")
        want = GfmParameters if self.kind == "gfm" else GflParameters
        if not isinstance(self.params, want):
            raise InvalidScenario(
                f"{self.kind} device needs {want.__name__}, got "
                f"{type(self.params).__name__}")


@dataclass(frozen=True)
class LoadSpec:
    """Load at a node: constant-impedance (ohms per phase) or
    constant-power (P W, Q var) realized as a filtered current sink."""

    node: int
    model: str
    ohms: float | None = None
    p: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.model == LOAD_Z:
            if self.ohms is None or not self.ohms > 0.0:
                raise InvalidScenario("constant-impedance load needs ohms > 0")
        elif self.model == LOAD_CP:
            if self.p is None:
                raise InvalidScenario("constant-power load needs p (W)")
        else:
            raise InvalidScenario(f"unknown load model {self.model!r}")


@dataclass(frozen=True)
class GridSpec:
    """Stiff three-phase source behind a series RL, attached at a node.

    f_hz is the initial frequency; grid-frequency-step events change it
    phase-continuously.
    """

    node: int
    v_peak: float           # per-phase peak volts of the source EMF
    f_hz: float = 50.0
    r: float = 0.05         # ohm
    L: float = 0.5e-3       # H

    def __post_init__(self):
        if not (self.v_peak > 0.0 and self.r > 0.0 and self.L > 0.0):
            raise InvalidScenario("grid needs v_peak, r, L all > 0")


@dataclass(frozen=True)
class Event:
    """Timed change: close-tie(line index), load-step(load index, new
    value(s)), grid-frequency-step(new Hz), pei-enable(device index)."""

    t: float
    kind: str
    target: int = 0             # line / load / device index (0-based)
    value: float = 0.0          # new ohms, new Hz, or new P for loads
    value2: float = 0.0         # new Q for constant-power load steps

    def __post_init__(self):
        if self.kind not in _EVENT_KINDS:
            raise InvalidScenario(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class SimOptions:
    dt: float = 5e-6
    t_end: float = 1.0
    decimation: int = 20            # output every decimation-th step
    blowup_factor: float = 100.0    # of nominal voltage/current scales
    cp_tau: float = 10e-3           # constant-power load filter, s
    # Apply the per-island secondary frequency trim during the run. On,
    # an eventless run is an exact fixed point in the nominal frame; off,
    # islands run at their raw droop frequencies and a tie closing
    # between them redistributes power, as with no secondary layer.
    secondary_trim: bool = True
    # With the trim off, islands drift apart in phase. Setting this to a
    # tie-close instant chooses each island's free initial angle so the
    # island phases coincide right then, the way a synchronism-check
    # breaker picks its moment; the closing disturbance is then only the
    # power redistribution itself.
    align_islands_at: float | None = None

    def __post_init__(self):
        if not self.dt > 0.0:
            raise InvalidScenario("dt must be > 0")
        if not self.t_end > self.dt:
            raise InvalidScenario("t_end must exceed dt")
        if self.decimation < 1:
            raise InvalidScenario("decimation must be >= 1")


@dataclass(frozen=True)
class Scenario:
    name: str
    ibrs: tuple[IbrSpec, ...]
    topology: NetworkTopology
    loads: tuple[LoadSpec, ...] = ()
    grid: GridSpec | None = None
    events: tuple[Event, ...] = ()
    open_lines: tuple[int, ...] = ()    # line indices closed later by events
    sim: SimOptions = field(default_factory=SimOptions)

    def __post_init__(self):
        object.__setattr__(self, "ibrs", tuple(self.ibrs))
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "open_lines", tuple(self.open_lines))

        n = self.topology.n_nodes
        if len(self.ibrs) != n:
            raise InvalidScenario(
                f"{n} nodes need {n} devices, got {len(self.ibrs)}")
        for ld in self.loads:
            if not 1 <= ld.node <= n:
                raise InvalidScenario(f"load node {ld.node} out of range")
        if self.grid is not None and not 1 <= self.grid.node <= n:
            raise InvalidScenario(f"grid node {self.grid.node} out of range")

        m = self.topology.m_lines
        for idx in self.open_lines:
            if not 0 <= idx < m:
                raise InvalidScenario(f"open line index {idx} out of range")

        last = 0.0
        for ev in self.events:
            if not 0.0 < ev.t < self.sim.t_end:
                raise InvalidScenario(
                    f"event at t={ev.t} outside (0, {self.sim.t_end})")
            if ev.t <= last:
                raise InvalidScenario("event times must be strictly increasing")
            last = ev.t
            if ev.kind == EV_CLOSE_TIE:
                if ev.target not in self.open_lines:
                    raise InvalidScenario(
                        f"close-tie target {ev.target} is not an open line")
            elif ev.kind == EV_LOAD_STEP:
                if not 0 <= ev.target < len(self.loads):
                    raise InvalidScenario(f"load-step target {ev.target} out of range")
            elif ev.kind == EV_FREQ_STEP:
                if self.grid is None:
                    raise InvalidScenario("grid-frequency-step without a grid")
            elif ev.kind == EV_PEI_ENABLE:
                if not 0 <= ev.target < len(self.ibrs):
                    raise InvalidScenario(f"pei-enable target {ev.target} out of range")
                if self.ibrs[ev.target].pei is None:
                    raise InvalidScenario(
                        f"pei-enable for device {ev.target + 1} which has no interface")

    @property
    def n_ibr(self) -> int:
        return len(self.ibrs)

    def gfm_only(self) -> bool:
        return all(s.kind == "gfm" for s in self.ibrs)


def z_load_conductance(loads, node: int, overrides=None) -> float:
    """Summed conductance of the constant-impedance loads at a node."""
    g = 0.0
    for k, ld in enumerate(loads):
        if ld.node == node and ld.model == LOAD_Z:
            ohms = ld.ohms
            if overrides and k in overrides:
                ohms = overrides[k]
            g += 1.0 / ohms
    return g
