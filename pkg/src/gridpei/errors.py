"""Exception types shared across the toolkit.

Numeric faults (NoConvergence, NumericBlowup, NotHurwitz) map to CLI exit
code 3; scenario/input problems (InvalidScenario, ScenarioParseError,
TopologyError) map to exit code 2.
"""


class GridPeiError(Exception):
    """Base class for all toolkit errors."""


class TopologyError(GridPeiError):
    """Branch list violates the incidence-structure rules."""


class EmptyNetwork(GridPeiError):
    """No dynamic line branches: the network state space is degenerate."""


class NotHurwitz(GridPeiError):
    """A gain was requested for a model whose A matrix is not Hurwitz."""

    def __init__(self, msg: str, eigenvalues=None):
        super().__init__(msg)
        self.eigenvalues = eigenvalues


class NoConvergence(GridPeiError):
    """Iterative solve stalled; carries the last residual seen."""

    def __init__(self, msg: str, residual: float = float("nan"), detail: str = ""):
        super().__init__(msg)
        self.residual = residual
        self.detail = detail


class UnstableDeviceModel(GridPeiError):
    """A certified device model was requested but A has an eigenvalue with
    nonnegative real part."""

    def __init__(self, msg: str, eigenvalues=None):
        super().__init__(msg)
        self.eigenvalues = eigenvalues


class SetpointSingularity(GridPeiError):
    """Current set-point generation hit the terminal-voltage floor."""


class InfeasiblePolicy(GridPeiError):
    """No interface parameters satisfy the constraints under the policy."""


class LengthMismatch(GridPeiError):
    """Sampled series passed to a quadrature have different lengths."""


class InvalidScenario(GridPeiError):
    """Scenario fails validation before simulation starts."""


class NumericBlowup(GridPeiError):
    """A state magnitude crossed the divergence ceiling during simulation.

    Carries the first time the ceiling was exceeded; for instability studies
    this is itself a measurement.
    """

    def __init__(self, msg: str, t_exceed: float = float("nan")):
        super().__init__(msg)
        self.t_exceed = t_exceed


class WindowOutOfRange(GridPeiError):
    """Requested accounting window is not covered by the trajectory."""


class NotSettled(GridPeiError):
    """Tail-window statistics were requested but the signal is still moving."""


class ScenarioParseError(GridPeiError):
    """Scenario file rejected; message carries file and line anchors."""

    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class StaleReference(UserWarning):
    """Tracker-mode interface references drifted persistently."""
