"""Transient runs: event staging, recorded channels, trajectory metrics.

simulate() integrates the packed system with the classic fourth-order
fixed-step rule, switching the right-hand side at event instants snapped
to the output grid. The run starts from the solved pre-event equilibrium
and interface references are captured there, so an eventless run holds
every channel constant.

A state-magnitude ceiling turns runaway growth into NumericBlowup; the
exception carries the truncated trajectory and the first-exceed time,
which unstable studies use as a measurement rather than a failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .devices import measure_power  # noqa: F401  (re-exported convenience)
from .engine import (EMIT_DID, EMIT_DIQ, EMIT_DVD, EMIT_DVQ, EMIT_IOD,
                     EMIT_IOQ, GFM_KIND, GFM_NS, PackedSystem)

# bandwidth of the measurement-only power average for following devices,
# chosen to match the formers' droop filter
DISPLAY_FILTER_W0 = 31.41
from .errors import (InvalidScenario, NotSettled, NumericBlowup,
                     WindowOutOfRange)
from .operating_point import OperatingPoint, solve_packed
from .scenario import EV_CLOSE_TIE, EV_LOAD_STEP, LOAD_Z, Scenario

_TWO_THIRDS_PI = 2.0 * math.pi / 3.0


@dataclass(frozen=True)
class IbrChannels:
    """Recorded per-device signals; d-q pairs are in the device frame."""

    kind: str
    state_names: tuple[str, ...]
    states: np.ndarray          # (T, n_states), angles made absolute
    v_odq: np.ndarray           # (T, 2)
    i_odq: np.ndarray           # (T, 2) into the device
    i_abc: np.ndarray           # (T, 3) terminal phase currents
    p_inst: np.ndarray          # (T,) produced instantaneous power
    q_inst: np.ndarray
    p_avg: np.ndarray           # (T,) droop filter state / display average
    q_avg: np.ndarray
    dv_cmd: np.ndarray          # (T, 2) series injection, zero when idle
    di_cmd: np.ndarray          # (T, 2) shunt injection
    p_series: np.ndarray        # (T,) power consumed by the series source
    p_shunt: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    scenario: Scenario
    t: np.ndarray
    ibr: tuple[IbrChannels, ...]
    line_i: np.ndarray          # (T, M, 2) common-frame line currents
    op: OperatingPoint
    events_applied: tuple       # events with output-grid-snapped times
    blowup_t: float | None = None

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def phase_peak(self, i: int, t0: float, t1: float) -> float:
        """Largest absolute phase current of device i over [t0, t1]."""
        m = (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)
        if not np.any(m):
            raise WindowOutOfRange(f"no samples in [{t0}, {t1}]")
        return float(np.max(np.abs(self.ibr[i].i_abc[m])))


def _snap_events(scenario: Scenario, dt: float, n_dec: int, n_steps: int):
    out = []
    last = -1
    for ev in scenario.events:
        k = int(round(ev.t / (dt * n_dec))) * n_dec
        if not 0 < k < n_steps:
            raise InvalidScenario(
                f"event at t={ev.t} falls outside the run after snapping")
        if k <= last:
            raise InvalidScenario(
                f"events at t={ev.t} collide on the output grid")
        last = k
        out.append((k, replace(ev, t=k * dt)))
    return out


def simulate(scenario: Scenario, *, op: OperatingPoint | None = None) -> Trajectory:
    """Run a scenario end to end and return the recorded channels.

    Raises NumericBlowup when any voltage or current class state crosses
    the configured ceiling; the exception's .trajectory holds everything
    recorded up to and including the offending sample.
    """
    sim = scenario.sim
    dt = sim.dt
    n_dec = sim.decimation
    n_steps = int(round(sim.t_end / dt))
    n_steps = ((n_steps + n_dec - 1) // n_dec) * n_dec
    snapped = _snap_events(scenario, dt, n_dec, n_steps)

    pack = PackedSystem(scenario)
    if op is None:
        op = solve_packed(pack)
    pack.gfm_trim[:] = op.gfm_trim if sim.secondary_trim else 0.0
    for i, spec in enumerate(scenario.ibrs):
        if spec.pei is not None:
            pack.pei_ref[i, 0:2] = op.v_odq[i]
            pack.pei_ref[i, 2:4] = op.i_odq[i]

    n_rows = n_steps // n_dec + 1
    rows = np.empty((n_rows, pack.n_state))
    emit = np.empty((n_rows, pack.n_ibr, 8))
    x = op.x.copy()
    if sim.align_islands_at is not None and not sim.secondary_trim:
        _pre_rotate_islands(pack, op, x, sim.align_islands_at)

    bounds = [0] + [k for k, _ in snapped] + [n_steps]
    seg_events = [None] + [ev for _, ev in snapped]
    blow_t = None
    rows_kept = n_rows
    for s in range(len(bounds) - 1):
        if seg_events[s] is not None:
            pack.apply_event(seg_events[s])
        k0, k1 = bounds[s], bounds[s + 1]
        final = s == len(bounds) - 2
        status, k_stop = pack.run(x, k0, k1, dt, n_dec, final, rows)
        r0 = k0 // n_dec
        r1 = (k_stop // n_dec + 1) if (status == 1 or final) else k1 // n_dec
        pack.emit_rows_into(rows, emit, r0, r1)
        if status == 1:
            blow_t = k_stop * dt
            rows_kept = k_stop // n_dec + 1
            break

    traj = _build_trajectory(scenario, pack, op, rows[:rows_kept],
                             emit[:rows_kept], dt * n_dec,
                             tuple(ev for _, ev in snapped), blow_t)
    if blow_t is not None:
        err = NumericBlowup(
            f"state ceiling crossed at t = {blow_t:.6g} s", t_exceed=blow_t)
        err.trajectory = traj
        raise err
    return traj


def _pre_rotate_islands(pack, op, x, t_align):
    """Spin each drifting island forward so phases meet at t_align.

    An untrimmed island drifts at minus its solved trim rate, and its
    absolute angle is a free gauge, so adding trim * t_align to every
    angle-like state in the island puts all islands at their gauge
    angles exactly at t_align. Common-frame phasor states of the island
    rotate along.
    """
    for isl in op.islands:
        members = [nn - 1 for nn in isl]
        gfms = [i for i in members if pack.ibr_kind[i] == GFM_KIND]
        if not gfms:
            continue
        c = float(op.gfm_trim[gfms[0]]) * t_align
        if c == 0.0:
            continue
        rot = np.array([[math.cos(c), -math.sin(c)],
                        [math.sin(c), math.cos(c)]])
        for i in members:
            off = int(pack.ibr_off[i])
            x[off if pack.ibr_kind[i] == GFM_KIND else off + 1] += c
        for k in range(pack.n_line):
            if pack.line_act[k] and int(pack.line_from[k]) in members:
                base = pack.line_off + 2 * k
                x[base:base + 2] = rot @ x[base:base + 2]
        for j in range(pack.n_cp):
            if int(pack.cp_node[j]) in members:
                base = pack.cp_off + 2 * j
                x[base:base + 2] = rot @ x[base:base + 2]


def _build_trajectory(scenario, pack, op, rows, emit, dt_out, events, blow_t):
    n_rows = rows.shape[0]
    t = np.arange(n_rows) * dt_out
    w0 = pack.omega0

    chans = []
    for i, spec in enumerate(scenario.ibrs):
        off = int(pack.ibr_off[i])
        gfm = pack.ibr_kind[i] == GFM_KIND
        ns = GFM_NS if gfm else 8
        states = rows[:, off:off + ns].copy()
        if gfm:
            delta = states[:, 0]
            v_odq = states[:, 9:11].copy()
            p_avg = states[:, 1].copy()
            q_avg = states[:, 2].copy()
        else:
            delta = states[:, 1].copy()
            states[:, 1] = delta + w0 * t     # report the absolute angle
            v_odq = states[:, 6:8].copy()
        i_odq = emit[:, i, EMIT_IOD:EMIT_IOQ + 1].copy()
        p_inst = -1.5 * (v_odq[:, 0] * i_odq[:, 0] + v_odq[:, 1] * i_odq[:, 1])
        q_inst = -1.5 * (v_odq[:, 1] * i_odq[:, 0] - v_odq[:, 0] * i_odq[:, 1])
        if not gfm:
            p_avg = _display_filter(p_inst, dt_out)
            q_avg = _display_filter(q_inst, dt_out)

        theta = w0 * t + delta
        i_abc = _to_phases(i_odq, theta)

        dv = emit[:, i, EMIT_DVD:EMIT_DVQ + 1].copy()
        di = emit[:, i, EMIT_DID:EMIT_DIQ + 1].copy()
        i_pr = i_odq - di
        p_series = -1.5 * (dv[:, 0] * i_pr[:, 0] + dv[:, 1] * i_pr[:, 1])
        p_shunt = -1.5 * (v_odq[:, 0] * di[:, 0] + v_odq[:, 1] * di[:, 1])

        chans.append(IbrChannels(
            kind=spec.kind,
            state_names=tuple(n.split(".", 1)[1] for n in
                              pack.state_names[off:off + ns]),
            states=states, v_odq=v_odq, i_odq=i_odq, i_abc=i_abc,
            p_inst=p_inst, q_inst=q_inst, p_avg=p_avg, q_avg=q_avg,
            dv_cmd=dv, di_cmd=di, p_series=p_series, p_shunt=p_shunt))

    m = pack.n_line
    line_i = rows[:, pack.line_off:pack.line_off + 2 * m].reshape(n_rows, m, 2).copy() \
        if m else np.zeros((n_rows, 0, 2))

    return Trajectory(scenario=scenario, t=t, ibr=tuple(chans),
                      line_i=line_i, op=op, events_applied=events,
                      blowup_t=blow_t)


def _display_filter(y, dt_out, w_c=DISPLAY_FILTER_W0):
    """First-order average of a following device's instantaneous power,
    matching the formers' droop filter bandwidth. Measurement only."""
    a = 1.0 - math.exp(-w_c * dt_out)
    out = np.empty_like(y)
    out[0] = y[0]
    for k in range(1, y.shape[0]):
        out[k] = out[k - 1] + a * (y[k] - out[k - 1])
    return out


def _to_phases(i_dq, theta):
    d, q = i_dq[:, 0], i_dq[:, 1]
    a = d * np.sin(theta) + q * np.cos(theta)
    b = d * np.sin(theta - _TWO_THIRDS_PI) + q * np.cos(theta - _TWO_THIRDS_PI)
    c = d * np.sin(theta + _TWO_THIRDS_PI) + q * np.cos(theta + _TWO_THIRDS_PI)
    return np.stack([a, b, c], axis=1)


@dataclass(frozen=True)
class EnergyReport:
    """Trapezoid energies over a window, per device.

    ratio[n] = |e_interface[n] / e_out[n]| measures how much the
    enforcement sources contribute relative to what the device delivers.
    """

    t0: float
    t1: float
    e_out: np.ndarray
    e_series: np.ndarray
    e_shunt: np.ndarray
    e_interface: np.ndarray
    ratio: np.ndarray


def energy_report(traj: Trajectory, t0: float, t1: float) -> EnergyReport:
    if t0 >= t1:
        raise WindowOutOfRange("window must satisfy t0 < t1")
    if t0 < traj.t[0] - 1e-12 or t1 > traj.t[-1] + 1e-12:
        raise WindowOutOfRange(
            f"window [{t0}, {t1}] outside recorded [{traj.t[0]}, {traj.t[-1]}]")
    m = (traj.t >= t0 - 1e-12) & (traj.t <= t1 + 1e-12)
    tt = traj.t[m]
    n = len(traj.ibr)
    e_out = np.empty(n)
    e_v = np.empty(n)
    e_c = np.empty(n)
    for i, ch in enumerate(traj.ibr):
        e_out[i] = np.trapezoid(ch.p_inst[m], tt)
        e_v[i] = np.trapezoid(ch.p_series[m], tt)
        e_c[i] = np.trapezoid(ch.p_shunt[m], tt)
    e_i = e_v + e_c
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(e_i == 0.0, 0.0, np.abs(e_i) / np.abs(e_out))
    return EnergyReport(t0=float(tt[0]), t1=float(tt[-1]), e_out=e_out,
                        e_series=e_v, e_shunt=e_c, e_interface=e_i,
                        ratio=ratio)


def settling_time(t, y, t_event, band=0.02, floor=0.5):
    """Earliest time after t_event from which every later sample of every
    column stays within band of its final value (tail mean). The band is
    relative with an absolute floor for channels that settle near zero.
    Returns inf when the record never settles."""
    t = np.asarray(t)
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    m = t >= t_event
    ts, ys = t[m], y[m]
    tail = max(10, int(0.1 * len(ts)))
    final = ys[-tail:].mean(axis=0)
    scale = np.maximum(np.abs(final), floor)
    ok = np.all(np.abs(ys - final) <= band * scale, axis=1)
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(ts[0])
    if bad[-1] == len(ts) - 1:
        return math.inf
    return float(ts[bad[-1] + 1])


def growth_detected(t, y, t_start, cycle=0.02, n_grow=5, factor=1.02):
    """Sustained-growth test: n_grow consecutive cycle peaks, each more
    than factor times the one before. Returns (flag, time of detection)."""
    t = np.asarray(t)
    y = np.abs(np.asarray(y, dtype=float))
    k0 = int(np.searchsorted(t, t_start))
    if len(t) < 2:
        return False, None
    dt_out = t[1] - t[0]
    per = max(1, int(round(cycle / dt_out)))
    peaks = []
    times = []
    k = k0
    while k + per <= len(t):
        seg = y[k:k + per]
        peaks.append(float(np.max(seg)))
        times.append(float(t[k + per - 1]))
        k += per
    run = 0
    for j in range(1, len(peaks)):
        if peaks[j] > factor * peaks[j - 1] and peaks[j - 1] > 0.0:
            run += 1
            if run >= n_grow:
                return True, times[j]
        else:
            run = 0
    return False, None


def power_sharing_error(traj: Trajectory, ref, tail_frac=0.2,
                        settle_tol=0.005):
    """Percent deviation of each former's steady output from the
    droop-only reference, using tail-window means of the averaged power.

    Raises NotSettled when either record still drifts across the tail
    (half-window means differing by more than settle_tol relative).
    """
    t_tail = min(traj.t[-1], ref.t[-1])
    t0 = t_tail - tail_frac * t_tail
    out = []
    for i, ch in enumerate(traj.ibr):
        if ch.kind != "gfm":
            continue
        p = _tail_mean(traj.t, ch.p_avg, t0, t_tail, settle_tol,
                       f"device {i + 1}")
        p_ref = _tail_mean(ref.t, ref.p[:, i], t0, t_tail, settle_tol,
                           f"reference device {i + 1}")
        out.append(abs(p - p_ref) / abs(p_ref) * 100.0)
    return np.array(out)


def _tail_mean(t, y, t0, t1, tol, what):
    m = (t >= t0) & (t <= t1)
    yy = y[m]
    if yy.size < 4:
        raise NotSettled(f"{what}: tail window has too few samples")
    half = yy.size // 2
    m1, m2 = yy[:half].mean(), yy[half:].mean()
    if abs(m2 - m1) > max(tol * abs(m2), 1.0):
        raise NotSettled(
            f"{what}: tail means {m1:.4g} and {m2:.4g} still drift")
    return yy.mean()


@dataclass(frozen=True)
class DroopTrajectory:
    """Slow-subsystem run: droop states only, network solved as phasors."""

    t: np.ndarray
    delta: np.ndarray       # (T, n)
    p: np.ndarray           # (T, n) droop filter states
    q: np.ndarray
    p_inst: np.ndarray


def simulate_droop_only(scenario: Scenario, *, op: OperatingPoint | None = None,
                        dt: float = 1e-3) -> DroopTrajectory:
    """Integrate only the droop states of an all-former scenario.

    The fast loops are taken as converged: each device holds its droop
    voltage reference at its terminal and the network responds
    quasi-statically at nominal frequency, so the model reduces to three
    states per device. Useful as the sharing reference and as the
    slow-timescale picture of runs whose fast dynamics diverge.
    """
    if not scenario.gfm_only():
        raise InvalidScenario("droop-only model covers all-former scenarios")
    if scenario.grid is not None:
        raise InvalidScenario("droop-only model is islanded")

    pack = PackedSystem(scenario)
    if op is None:
        op = solve_packed(pack)
    n = scenario.n_ibr
    pars = [s.params for s in scenario.ibrs]
    w0 = pack.omega0

    for ev in scenario.events:
        if ev.kind not in (EV_CLOSE_TIE, EV_LOAD_STEP):
            raise InvalidScenario(
                f"droop-only model has no {ev.kind} mechanism")
        if ev.kind == EV_LOAD_STEP and \
                scenario.loads[ev.target].model != LOAD_Z:
            raise InvalidScenario(
                "droop-only load steps cover constant-impedance loads")

    n_steps = int(round(scenario.sim.t_end / dt))
    snapped = _snap_events(scenario, dt, 1, n_steps)

    y = np.empty(3 * n)
    for i in range(n):
        off = int(pack.ibr_off[i])
        y[3 * i:3 * i + 3] = op.x[off:off + 3]
    trim = op.gfm_trim if scenario.sim.secondary_trim else np.zeros(n)

    t_axis = np.arange(n_steps + 1) * dt
    delta = np.empty((n_steps + 1, n))
    pp = np.empty((n_steps + 1, n))
    qq = np.empty((n_steps + 1, n))
    p_inst = np.empty((n_steps + 1, n))

    ycur = y.copy()
    bounds = [0] + [k for k, _ in snapped] + [n_steps]
    seg_events = [None] + [ev for _, ev in snapped]

    def rhs(yv):
        d = yv[0::3]
        p_f = yv[1::3]
        q_f = yv[2::3]
        e = np.array([pars[i].V0 - pars[i].droop_nq * q_f[i] for i in range(n)])
        v = e * np.exp(1j * d)
        inj = np.zeros(n, dtype=complex)        # current leaving each node
        for k in range(pack.n_line):
            if not pack.line_act[k]:
                continue
            f, tn = int(pack.line_from[k]), int(pack.line_to[k])
            yb = 1.0 / (pack.line_r[k] + 1j * w0 * pack.line_l[k])
            vt = v[tn] if tn >= 0 else 0.0
            ib = (v[f] - vt) * yb
            inj[f] += ib
            if tn >= 0:
                inj[tn] -= ib
        inj += pack.zg * v
        for j in range(pack.n_cp):
            nn = int(pack.cp_node[j])
            s_cp = pack.cp_pq[j, 0] + 1j * pack.cp_pq[j, 1]
            inj[nn] += np.conj(s_cp) * v[nn] / (1.5 * abs(v[nn]) ** 2)
        i_into = -inj
        p_t = -1.5 * (v.real * i_into.real + v.imag * i_into.imag)
        q_t = -1.5 * (v.imag * i_into.real - v.real * i_into.imag)
        dy = np.empty_like(yv)
        for i in range(n):
            pr = pars[i]
            dy[3 * i] = pr.omega_s + trim[i] - pr.droop_mp * p_f[i] - w0
            dy[3 * i + 1] = pr.omega_c * (p_t[i] - p_f[i])
            dy[3 * i + 2] = pr.omega_c * (q_t[i] - q_f[i])
        return dy, p_t

    def record(k, yv):
        _, p_t = rhs(yv)
        delta[k] = yv[0::3]
        pp[k] = yv[1::3]
        qq[k] = yv[2::3]
        p_inst[k] = p_t

    record(0, ycur)
    for s in range(len(bounds) - 1):
        if seg_events[s] is not None:
            pack.apply_event(seg_events[s])
        for k in range(bounds[s], bounds[s + 1]):
            k1v, _ = rhs(ycur)
            k2v, _ = rhs(ycur + 0.5 * dt * k1v)
            k3v, _ = rhs(ycur + 0.5 * dt * k2v)
            k4v, _ = rhs(ycur + dt * k3v)
            ycur = ycur + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
            record(k + 1, ycur)

    return DroopTrajectory(t=t_axis, delta=delta, p=pp, q=qq, p_inst=p_inst)
