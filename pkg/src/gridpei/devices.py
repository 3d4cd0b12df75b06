"""Grid-forming and grid-following device models.

Conventions, used consistently across the toolkit:

- All quantities are SI, amplitude-invariant d-q (peak per-phase volts/amps),
  so real power is p = (3/2) v.i.
- The terminal current i_odq points INTO the device: the instantaneous power
  produced by the device is p = -(3/2)(v_od*i_od + v_oq*i_oq).
- Cross-coupling terms in the filter and in the controller feedforwards use
  the constant nominal frequency omega_0, not the instantaneous device
  frequency. The terminal capacitor equation is C_f*dv_od/dt =
  C_f*omega_0*v_oq + i_ld + i_od with the plus sign on i_od (current into
  the device charges the capacitor); this follows the stated reference
  direction even though the Pogaku/Prodanovic/Green benchmark writes the
  same equation with the opposite current direction.

Default numeric constants are taken from the inverter-microgrid benchmark of
Pogaku, Prodanovic & Green, "Modeling, analysis and testing of autonomous
operation of an inverter-based microgrid" (IEEE TPEL 2007); see
`benchmark_gfm_parameters`. The grid-following current-loop gains are not
part of that benchmark; the shipped values are documented in
`benchmark_gfl_parameters`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SetpointSingularity, UnstableDeviceModel

OMEGA_NOM = 2.0 * np.pi * 50.0
# 380 V line-line RMS expressed as peak per-phase volts.
V_NOM = 380.0 * np.sqrt(2.0) / np.sqrt(3.0)

GFM_STATE_NAMES = (
    "delta", "P", "Q",
    "phi_d", "phi_q", "gam_d", "gam_q", "i_ld", "i_lq", "v_od", "v_oq",
)
GFM_FAST_NAMES = GFM_STATE_NAMES[3:]

GFL_STATE_NAMES = (
    "eta", "theta",
    "gam_d", "gam_q", "i_ld", "i_lq", "v_od", "v_oq",
)
GFL_FAST_NAMES = GFL_STATE_NAMES[2:]


def _require_positive(obj, names):
    for name in names:
        if not getattr(obj, name) > 0.0:
            raise ValueError(f"{type(obj).__name__}.{name} must be > 0")


@dataclass(frozen=True)
class GfmParameters:
    """Physical and control constants of one grid-forming device."""

    r_f: float          # filter resistance, ohm
    L_f: float          # filter inductance, H
    C_f: float          # filter capacitance, F
    omega_c: float      # power-filter cutoff, rad/s
    droop_mp: float     # frequency droop, rad/s per W
    droop_nq: float     # voltage droop, V per var
    V0: float           # voltage setpoint, peak per-phase V
    omega_s: float      # secondary frequency setpoint, rad/s
    K_pv: float
    K_iv: float
    F_ff: float         # terminal-current feedforward in the voltage loop
    K_pc: float
    K_ic: float
    omega_0: float = OMEGA_NOM

    def __post_init__(self):
        _require_positive(self, ("r_f", "L_f", "C_f", "omega_c", "omega_0"))


@dataclass(frozen=True)
class GflParameters:
    """Physical and control constants of one grid-following device."""

    r_f: float
    L_f: float
    C_f: float
    K_pp: float         # frequency-tracker proportional gain
    K_ip: float         # frequency-tracker integral gain
    K_pc: float
    K_ic: float
    P_star: float       # real-power setpoint, W
    Q_star: float       # reactive-power setpoint, var
    omega_0: float = OMEGA_NOM
    v_floor: float = 0.05 * V_NOM   # guards the set-point division

    def __post_init__(self):
        _require_positive(self, ("r_f", "L_f", "C_f", "omega_0", "K_ip"))


@dataclass(frozen=True)
class GfmState:
    """Full 11-dimensional grid-forming state (slow: delta, P, Q)."""

    delta: float
    P: float
    Q: float
    phi_d: float
    phi_q: float
    gam_d: float
    gam_q: float
    i_ld: float
    i_lq: float
    v_od: float
    v_oq: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in GFM_STATE_NAMES])

    @classmethod
    def from_array(cls, a) -> "GfmState":
        return cls(*(float(x) for x in a))


@dataclass(frozen=True)
class GflState:
    """Full 8-dimensional grid-following state.

    theta is the absolute electrical angle integrated from the tracked
    frequency; the frame offset against the common frame at time t is
    theta - omega_0*t.
    """

    eta: float
    theta: float
    gam_d: float
    gam_q: float
    i_ld: float
    i_lq: float
    v_od: float
    v_oq: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in GFL_STATE_NAMES])

    @classmethod
    def from_array(cls, a) -> "GflState":
        return cls(*(float(x) for x in a))


def measure_power(v_odq, i_odq) -> tuple[float, float]:
    """Instantaneous (p, q) at a terminal, current measured into the device.

    Production is positive: i flowing out against positive v gives p > 0.
    """
    v_od, v_oq = v_odq
    i_od, i_oq = i_odq
    p = -1.5 * (v_od * i_od + v_oq * i_oq)
    q = -1.5 * (v_oq * i_od - v_od * i_oq)
    return p, q


def gfm_derivatives(state: GfmState, i_odq, params: GfmParameters) -> GfmState:
    """Time derivative of the full grid-forming state.

    Pure function. i_odq is the terminal current (into the device) in the
    device d-q frame.
    """
    p = params
    s = state
    i_od, i_oq = float(i_odq[0]), float(i_odq[1])

    p_inst, q_inst = measure_power((s.v_od, s.v_oq), (i_od, i_oq))
    dP = p.omega_c * (p_inst - s.P)
    dQ = p.omega_c * (q_inst - s.Q)

    omega_n = p.omega_s - p.droop_mp * s.P
    ddelta = omega_n - p.omega_0
    v_od_ref = p.V0 - p.droop_nq * s.Q
    v_oq_ref = 0.0

    dphi_d = v_od_ref - s.v_od
    dphi_q = v_oq_ref - s.v_oq
    i_ld_ref = (p.K_pv * (v_od_ref - s.v_od) - p.F_ff * i_od
                - p.omega_0 * p.C_f * s.v_oq + p.K_iv * s.phi_d)
    i_lq_ref = (p.K_pv * (v_oq_ref - s.v_oq) - p.F_ff * i_oq
                + p.omega_0 * p.C_f * s.v_od + p.K_iv * s.phi_q)

    dgam_d = -s.i_ld + i_ld_ref
    dgam_q = -s.i_lq + i_lq_ref
    v_id = p.K_pc * (i_ld_ref - s.i_ld) - p.omega_0 * p.L_f * s.i_lq + p.K_ic * s.gam_d
    v_iq = p.K_pc * (i_lq_ref - s.i_lq) + p.omega_0 * p.L_f * s.i_ld + p.K_ic * s.gam_q

    di_ld = (-p.r_f * s.i_ld + p.L_f * p.omega_0 * s.i_lq + v_id - s.v_od) / p.L_f
    di_lq = (-p.r_f * s.i_lq - p.L_f * p.omega_0 * s.i_ld + v_iq - s.v_oq) / p.L_f
    dv_od = p.omega_0 * s.v_oq + (s.i_ld + i_od) / p.C_f
    dv_oq = -p.omega_0 * s.v_od + (s.i_lq + i_oq) / p.C_f

    return GfmState(ddelta, dP, dQ, dphi_d, dphi_q, dgam_d, dgam_q,
                    di_ld, di_lq, dv_od, dv_oq)


def gfl_set_points(state: GflState, params: GflParameters) -> tuple[float, float]:
    """Current set points from the power set points (algebraic).

    Positive P_star/Q_star mean produced power, matching measure_power, so
    at equilibrium (i_l = i_l_ref, i_o = -i_l) the device exports exactly
    the set points. An importing device (P_star < 0) behaves as a
    constant-power load; its open-terminal fast dynamics are then unstable
    for any current-loop tuning, which linearize_fast_subsystem reports.

    Raises SetpointSingularity when |v_od| is below the configured floor,
    where the division blows up.
    """
    if abs(state.v_od) < params.v_floor:
        raise SetpointSingularity(
            f"|v_od| = {abs(state.v_od):.3g} V below floor {params.v_floor:.3g} V")
    i_ld_ref = (2.0 / 3.0) * params.P_star / state.v_od
    i_lq_ref = -(2.0 / 3.0) * params.Q_star / state.v_od
    return i_ld_ref, i_lq_ref


def gfl_derivatives(state: GflState, i_odq, params: GflParameters) -> GflState:
    """Time derivative of the full grid-following state."""
    p = params
    s = state
    i_od, i_oq = float(i_odq[0]), float(i_odq[1])

    deta = p.K_ip * s.v_oq
    omega_n = s.eta + p.K_pp * s.v_oq + p.omega_0
    dtheta = omega_n

    i_ld_ref, i_lq_ref = gfl_set_points(s, p)
    dgam_d = -s.i_ld + i_ld_ref
    dgam_q = -s.i_lq + i_lq_ref
    v_id = p.K_pc * (i_ld_ref - s.i_ld) - p.omega_0 * p.L_f * s.i_lq + p.K_ic * s.gam_d
    v_iq = p.K_pc * (i_lq_ref - s.i_lq) + p.omega_0 * p.L_f * s.i_ld + p.K_ic * s.gam_q

    di_ld = (-p.r_f * s.i_ld + p.L_f * p.omega_0 * s.i_lq + v_id - s.v_od) / p.L_f
    di_lq = (-p.r_f * s.i_lq - p.L_f * p.omega_0 * s.i_ld + v_iq - s.v_oq) / p.L_f
    dv_od = p.omega_0 * s.v_oq + (s.i_ld + i_od) / p.C_f
    dv_oq = -p.omega_0 * s.v_od + (s.i_lq + i_oq) / p.C_f

    return GflState(deta, dtheta, dgam_d, dgam_q, di_ld, di_lq, dv_od, dv_oq)


@dataclass(frozen=True)
class StateSpaceModel:
    """Linear (A, B, C) triple; input di_odq (A), output dv_odq (V)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        if len(self.labels) != n:
            raise ValueError("labels must name every state")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def is_hurwitz(self) -> bool:
        return bool(np.all(self.eigenvalues().real < 0.0))


def _gfm_fast_abc(p: GfmParameters):
    # States: phi_d, phi_q, gam_d, gam_q, i_ld, i_lq, v_od, v_oq.
    # The fast equations are exactly linear at frozen slow states, so these
    # coefficients are the Jacobian.
    A = np.zeros((8, 8))
    B = np.zeros((8, 2))
    C = np.zeros((2, 8))
    w0 = p.omega_0

    A[0, 6] = -1.0
    A[1, 7] = -1.0

    # dgam = -i_l + i_l_ref
    A[2, 0] = p.K_iv
    A[2, 4] = -1.0
    A[2, 6] = -p.K_pv
    A[2, 7] = -w0 * p.C_f
    B[2, 0] = -p.F_ff

    A[3, 1] = p.K_iv
    A[3, 5] = -1.0
    A[3, 6] = w0 * p.C_f
    A[3, 7] = -p.K_pv
    B[3, 1] = -p.F_ff

    # di_l: the omega_0 L_f couplings of filter and decoupling feedforward
    # cancel exactly.
    A[4, 0] = p.K_pc * p.K_iv / p.L_f
    A[4, 2] = p.K_ic / p.L_f
    A[4, 4] = -(p.r_f + p.K_pc) / p.L_f
    A[4, 6] = (-p.K_pc * p.K_pv - 1.0) / p.L_f
    A[4, 7] = -p.K_pc * w0 * p.C_f / p.L_f
    B[4, 0] = -p.K_pc * p.F_ff / p.L_f

    A[5, 1] = p.K_pc * p.K_iv / p.L_f
    A[5, 3] = p.K_ic / p.L_f
    A[5, 5] = -(p.r_f + p.K_pc) / p.L_f
    A[5, 6] = p.K_pc * w0 * p.C_f / p.L_f
    A[5, 7] = (-p.K_pc * p.K_pv - 1.0) / p.L_f
    B[5, 1] = -p.K_pc * p.F_ff / p.L_f

    A[6, 4] = 1.0 / p.C_f
    A[6, 7] = w0
    B[6, 0] = 1.0 / p.C_f

    A[7, 5] = 1.0 / p.C_f
    A[7, 6] = -w0
    B[7, 1] = 1.0 / p.C_f

    C[0, 6] = 1.0
    C[1, 7] = 1.0
    return A, B, C, GFM_FAST_NAMES


def _gfl_fast_abc(p: GflParameters, v_od0: float, include_tracker: bool):
    # States: gam_d, gam_q, i_ld, i_lq, v_od, v_oq (optionally eta first).
    # Set-point slopes from the 1/v_od nonlinearity at the operating voltage.
    if abs(v_od0) < p.v_floor:
        raise SetpointSingularity(
            f"linearization voltage {v_od0:.3g} V below floor {p.v_floor:.3g} V")
    s_d = -(2.0 / 3.0) * p.P_star / v_od0 ** 2
    s_q = (2.0 / 3.0) * p.Q_star / v_od0 ** 2

    A = np.zeros((6, 6))
    B = np.zeros((6, 2))
    C = np.zeros((2, 6))
    w0 = p.omega_0

    A[0, 2] = -1.0
    A[0, 4] = s_d
    A[1, 3] = -1.0
    A[1, 4] = s_q

    A[2, 0] = p.K_ic / p.L_f
    A[2, 2] = -(p.r_f + p.K_pc) / p.L_f
    A[2, 4] = (p.K_pc * s_d - 1.0) / p.L_f

    A[3, 1] = p.K_ic / p.L_f
    A[3, 3] = -(p.r_f + p.K_pc) / p.L_f
    A[3, 4] = p.K_pc * s_q / p.L_f
    A[3, 5] = -1.0 / p.L_f

    A[4, 2] = 1.0 / p.C_f
    A[4, 5] = w0
    B[4, 0] = 1.0 / p.C_f

    A[5, 3] = 1.0 / p.C_f
    A[5, 4] = -w0
    B[5, 1] = 1.0 / p.C_f

    C[0, 4] = 1.0
    C[1, 5] = 1.0
    labels = GFL_FAST_NAMES

    if include_tracker:
        # Sensitivity-study variant: prepend the frequency-tracker integrator.
        # It integrates v_oq and feeds nothing back inside this subset, so it
        # contributes a zero eigenvalue; the certified path rejects it.
        n = A.shape[0] + 1
        Ae = np.zeros((n, n))
        Ae[1:, 1:] = A
        Ae[0, 1 + 5] = p.K_ip
        Be = np.vstack([np.zeros((1, 2)), B])
        Ce = np.hstack([np.zeros((2, 1)), C])
        A, B, C = Ae, Be, Ce
        labels = ("eta",) + labels
    return A, B, C, labels


def linearize_fast_subsystem(params, op_state=None, *, certified: bool = False,
                             include_tracker: bool = False) -> StateSpaceModel:
    """Linear small-signal model of a device's fast subsystem.

    For a grid-forming device the fast equations are linear and the result
    is operating-point independent (op_state may be omitted). A
    grid-following device needs the operating terminal voltage, passed
    either as a GflState or as a bare v_od float.

    certified=True additionally requires A Hurwitz and raises
    UnstableDeviceModel otherwise. include_tracker applies to
    grid-following models only (see _gfl_fast_abc).
    """
    if isinstance(params, GfmParameters):
        A, B, C, labels = _gfm_fast_abc(params)
    elif isinstance(params, GflParameters):
        if op_state is None:
            raise ValueError("grid-following linearization needs the operating v_od")
        v_od0 = op_state.v_od if isinstance(op_state, GflState) else float(op_state)
        A, B, C, labels = _gfl_fast_abc(params, v_od0, include_tracker)
    else:
        raise TypeError(f"unsupported parameter type {type(params).__name__}")

    model = StateSpaceModel(A=A, B=B, C=C, labels=labels)
    if certified and not model.is_hurwitz():
        eigs = model.eigenvalues()
        raise UnstableDeviceModel(
            "device model has eigenvalues with nonnegative real part; "
            f"max Re = {eigs.real.max():.4g}", eigenvalues=eigs)
    return model


# --- benchmark parameter sets -------------------------------------------------

#: Pogaku/Prodanovic/Green (2007) grid-forming constants, 50 Hz system.
BENCHMARK_GFM = dict(
    r_f=0.1,
    L_f=1.35e-3,
    C_f=50e-6,
    omega_c=31.41,
    droop_mp=9.4e-5,
    droop_nq=1.3e-3,
    V0=V_NOM,
    omega_s=OMEGA_NOM,
    K_pv=0.05,
    K_iv=390.0,
    F_ff=0.75,
    K_pc=10.5,
    K_ic=16000.0,
    omega_0=OMEGA_NOM,
)

#: Grid-following constants. Filter and frequency-tracker values are from the
#: same benchmark family. The current-loop gains are not published there;
#: the shipped pair is calibrated so the fast model's certified L2 gain at
#: the nominal voltage is 157.25 (a lightly damped current loop; all modes
#: still decay with Re < -34 s^-1).
BENCHMARK_GFL = dict(
    r_f=0.1,
    L_f=1.35e-3,
    C_f=50e-6,
    K_pp=0.37,
    K_ip=2.14,
    K_pc=0.1,
    K_ic=5260.0,
    P_star=2500.0,
    Q_star=0.0,
    omega_0=OMEGA_NOM,
)


def benchmark_gfm_parameters(**overrides) -> GfmParameters:
    """The benchmark grid-forming parameter set, with per-field overrides."""
    cfg = dict(BENCHMARK_GFM)
    cfg.update(overrides)
    return GfmParameters(**cfg)


def benchmark_gfl_parameters(**overrides) -> GflParameters:
    """The benchmark grid-following parameter set, with per-field overrides."""
    cfg = dict(BENCHMARK_GFL)
    cfg.update(overrides)
    return GflParameters(**cfg)


def with_overrides(params, **overrides):
    """Copy a parameter set with some fields replaced."""
    return replace(params, **overrides)
