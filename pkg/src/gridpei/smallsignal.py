"""Networked small-signal screening model.

Builds one composite state matrix for a scenario configuration out of
the complete per-device deviation blocks (droop, power sensor, control
loops, output filter), the line and load-filter states, and the grid
branch, with each device block rotated into the common frame at its
operating angle. The droop and sensor rows stay in the blocks on
purpose: the oscillation that appears when stiffly coupled devices
fight over power lives in the angle/power interaction, and a model
that freezes those states reports comfortable damping for
configurations the transient solver shows diverging. The certificate
path is the opposite trade and keeps the frozen fast blocks; this
module is the eigenvalue cross-check against the full nonlinear model.

Enforcement wraps a device block as

    A - alpha B C,   B,   (kappa - alpha beta) C,   beta I

which is the static interface law folded around the device. The node
algebra then mirrors the transient solver, including the (1 + beta G)
division at nodes with shunt conductance.

Angle bookkeeping: a device's rotation angle is one of its states, so
the frame maps contribute rank-one terms proportional to the operating
port quantities (the angle derivative of a rotated vector). One angle
per island is pure gauge, rotating the whole island maps equilibria to
equilibria, so the first forming device's angle in each island without
a grid is dropped from the deviation state, exactly where the
equilibrium solver pins its gauge. The grid phase is the reference for
islands that have one and is likewise not a deviation state.

The assembly is evaluated at the equilibrium of the configuration
obtained after applying all events up to a chosen time, solved with
the enforcement active (references from the initial capture point), so
rotation angles and set-point slopes match the system actually
running.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .devices import GFL_STATE_NAMES, GFM_STATE_NAMES
from .engine import (
    EMIT_DID, EMIT_DIQ, EMIT_IOD, EMIT_IOQ, EMIT_VPD, EMIT_VPQ,
    GFM_KIND, PackedSystem,
)
from .errors import NoConvergence
from .operating_point import OperatingPoint, _islands, _solve, solve_packed
from .scenario import Scenario

# d/dt cross coupling of a common-frame RL pair
_J_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])
# generator of the frame rotation, dR/d(delta) = _GEN @ R
_GEN = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class SmallSignalModel:
    """Composite state matrix with labeled states and its base point."""

    a: np.ndarray
    labels: tuple[str, ...]
    op: OperatingPoint

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.a)

    def max_real(self) -> float:
        return float(np.max(self.eigenvalues().real))

    def is_hurwitz(self) -> bool:
        return self.max_real() < 0.0


def _rotation(c: float) -> np.ndarray:
    return np.array([[np.cos(c), -np.sin(c)], [np.sin(c), np.cos(c)]])


def _gfm_block(p, v, i):
    """Deviation block of one forming device around (v_odq, i_odq).

    State order matches the transient solver:
    delta P Q phi_d phi_q gam_d gam_q i_ld i_lq v_od v_oq.
    """
    w0, wc, lf, cf = p.omega_0, p.omega_c, p.L_f, p.C_f
    a = np.zeros((11, 11))
    b = np.zeros((11, 2))
    c = np.zeros((2, 11))

    a[0, 1] = -p.droop_mp
    # power sensor, production-positive sign
    a[1, 1] = -wc
    a[1, 9] = -1.5 * wc * i[0]
    a[1, 10] = -1.5 * wc * i[1]
    b[1, 0] = -1.5 * wc * v[0]
    b[1, 1] = -1.5 * wc * v[1]
    a[2, 2] = -wc
    a[2, 9] = 1.5 * wc * i[1]
    a[2, 10] = -1.5 * wc * i[0]
    b[2, 0] = -1.5 * wc * v[1]
    b[2, 1] = 1.5 * wc * v[0]
    # voltage-loop integrators; v_ref_d carries the reactive droop
    a[3, 2] = -p.droop_nq
    a[3, 9] = -1.0
    a[4, 10] = -1.0
    # current set points as rows over (state, input)
    istar_d = np.zeros(11)
    istar_d[2] = -p.K_pv * p.droop_nq
    istar_d[3] = p.K_iv
    istar_d[9] = -p.K_pv
    istar_d[10] = -w0 * cf
    istar_q = np.zeros(11)
    istar_q[4] = p.K_iv
    istar_q[9] = w0 * cf
    istar_q[10] = -p.K_pv
    bd = np.array([-p.F_ff, 0.0])
    bq = np.array([0.0, -p.F_ff])
    a[5] = istar_d
    a[5, 7] -= 1.0
    b[5] = bd
    a[6] = istar_q
    a[6, 8] -= 1.0
    b[6] = bq
    # inductor rows; the decoupling feedforward cancels the w0 L cross term
    a[7] = p.K_pc * istar_d / lf
    a[7, 5] += p.K_ic / lf
    a[7, 7] += (-p.r_f - p.K_pc) / lf
    a[7, 9] += -1.0 / lf
    b[7] = p.K_pc * bd / lf
    a[8] = p.K_pc * istar_q / lf
    a[8, 6] += p.K_ic / lf
    a[8, 8] += (-p.r_f - p.K_pc) / lf
    a[8, 10] += -1.0 / lf
    b[8] = p.K_pc * bq / lf
    # capacitor rows
    a[9, 10] = w0
    a[9, 7] = 1.0 / cf
    b[9, 0] = 1.0 / cf
    a[10, 9] = -w0
    a[10, 8] = 1.0 / cf
    b[10, 1] = 1.0 / cf

    c[0, 9] = 1.0
    c[1, 10] = 1.0
    return a, b, c


def _gfl_block(p, v):
    """Deviation block of one following device around v_odq.

    State order matches the transient solver:
    eta theta gam_d gam_q i_ld i_lq v_od v_oq.
    """
    w0, lf, cf = p.omega_0, p.L_f, p.C_f
    a = np.zeros((8, 8))
    b = np.zeros((8, 2))
    c = np.zeros((2, 8))

    a[0, 7] = p.K_ip
    a[1, 0] = 1.0
    a[1, 7] = p.K_pp
    # set-point slopes vanish when the division floor is active
    if v[0] > p.v_floor:
        d_id = -(2.0 / 3.0) * p.P_star / (v[0] * v[0])
        d_iq = (2.0 / 3.0) * p.Q_star / (v[0] * v[0])
    else:
        d_id = 0.0
        d_iq = 0.0
    a[2, 6] = d_id
    a[2, 4] = -1.0
    a[3, 6] = d_iq
    a[3, 5] = -1.0
    a[4, 2] = p.K_ic / lf
    a[4, 4] = (-p.r_f - p.K_pc) / lf
    a[4, 6] = (p.K_pc * d_id - 1.0) / lf
    a[5, 3] = p.K_ic / lf
    a[5, 5] = (-p.r_f - p.K_pc) / lf
    a[5, 6] = p.K_pc * d_iq / lf
    a[5, 7] = -1.0 / lf
    a[6, 7] = w0
    a[6, 4] = 1.0 / cf
    b[6, 0] = 1.0 / cf
    a[7, 6] = -w0
    a[7, 5] = 1.0 / cf
    b[7, 1] = 1.0 / cf

    c[0, 6] = 1.0
    c[1, 7] = 1.0
    return a, b, c


def assemble_small_signal(scenario: Scenario, *, at_time: float | None = None,
                          op: OperatingPoint | None = None) -> SmallSignalModel:
    """Build the composite deviation matrix for a scenario state.

    at_time selects which events have fired (None: the pre-event
    configuration). When an operating point is not supplied it is solved
    here: the initial bare equilibrium fixes the interface references,
    then the selected configuration is re-solved with enforcement on.
    """
    pack = PackedSystem(scenario)
    if op is None:
        op0 = solve_packed(pack)
    else:
        op0 = op
    for i, spec in enumerate(scenario.ibrs):
        if spec.pei is not None:
            pack.pei_ref[i, 0:2] = op0.v_odq[i]
            pack.pei_ref[i, 2:4] = op0.i_odq[i]
    pack.gfm_trim[:] = op0.gfm_trim

    if at_time is not None:
        for ev in scenario.events:
            if ev.t <= at_time:
                pack.apply_event(ev)
        op_eff = _solve_enforced(pack, op0.x.copy())
    elif op is not None:
        op_eff = op
    else:
        op_eff = (op0 if not np.any(pack.pei_active)
                  else _solve_enforced(pack, op0.x.copy()))

    return _assemble(scenario, pack, op_eff)


def _solve_enforced(pack, x_guess):
    """Equilibrium with enforcement on, staged through the bare point.

    After an event the enforced system can sit far from the reference
    capture point and the direct solve may stall, so converge the bare
    configuration first and restart the enforced solve from there. When
    that still stalls, ramp the interface strength: scaling the series
    law by s (kappa -> 1 - s(1 - kappa), beta -> s beta) scales both
    injections by s and sweeps bare to enforced continuously.
    """
    if not np.any(pack.pei_active):
        return _solve(pack, x_guess)
    saved = pack.pei_active.copy()
    pack.pei_active[:] = 0
    try:
        mid = _solve(pack, x_guess)
    finally:
        pack.pei_active[:] = saved
    try:
        return _solve(pack, mid.x.copy())
    except NoConvergence:
        pass
    par0 = pack.pei_par.copy()
    x = mid.x.copy()
    try:
        for s in np.linspace(0.125, 1.0, 8):
            pack.pei_par[:, 1] = s * par0[:, 1]
            pack.pei_par[:, 2] = 1.0 - s * (1.0 - par0[:, 2])
            op = _solve(pack, x)
            x = op.x.copy()
    finally:
        pack.pei_par[:] = par0
    return op


def _assemble(scenario, pack, op: OperatingPoint) -> SmallSignalModel:
    n = pack.n_ibr
    active_lines = [k for k in range(pack.n_line) if pack.line_act[k]]

    emit = np.zeros((n, 8))
    pack.rhs(op.x.copy(), emit=emit)

    # composite layout: devices (full state), load filters, lines, grid
    dev_off = []
    labels: list[str] = []
    off = 0
    for i, spec in enumerate(scenario.ibrs):
        names = GFM_STATE_NAMES if spec.kind == "gfm" else GFL_STATE_NAMES
        dev_off.append(off)
        labels += [f"ibr{i + 1}.{s}" for s in names]
        off += len(names)
    cp_off = {}
    for j in range(pack.n_cp):
        cp_off[j] = off
        labels += [f"cp{j + 1}.iD", f"cp{j + 1}.iQ"]
        off += 2
    line_off = {}
    for k in active_lines:
        line_off[k] = off
        labels += [f"line{k + 1}.iD", f"line{k + 1}.iQ"]
        off += 2
    grid_off = None
    if pack.grid_present:
        grid_off = off
        labels += ["grid.iD", "grid.iQ"]
        off += 2
    ntot = off

    eye2 = np.eye(2)
    m_arr = np.zeros((n, 2, ntot))      # arriving-current deviation rows
    for k in active_lines:
        cols = slice(line_off[k], line_off[k] + 2)
        f, t = int(pack.line_from[k]), int(pack.line_to[k])
        m_arr[f, :, cols] -= eye2
        if t >= 0:
            m_arr[t, :, cols] += eye2
    for j in range(pack.n_cp):
        cols = slice(cp_off[j], cp_off[j] + 2)
        m_arr[int(pack.cp_node[j]), :, cols] -= eye2
    if grid_off is not None:
        m_arr[pack.grid_node, :, grid_off:grid_off + 2] += eye2

    dev_of_node = {int(pack.ibr_node[i]): i for i in range(n)}

    a_tot = np.zeros((ntot, ntot))
    # per-node network-side voltage rows, common frame, filled per device
    vpr_rows = [None] * pack.n_nodes
    vpr_op = [None] * pack.n_nodes

    for i, spec in enumerate(scenario.ibrs):
        o = int(pack.ibr_off[i])
        if pack.ibr_kind[i] == GFM_KIND:
            delta = float(op.x[o])
            v_o = op.x[o + 9:o + 11]
            a, b, c = _gfm_block(spec.params, v_o, emit[i, EMIT_IOD:EMIT_IOQ + 1])
            dpos = 0
        else:
            delta = float(op.x[o + 1])
            v_o = op.x[o + 6:o + 8]
            a, b, c = _gfl_block(spec.params, v_o)
            dpos = 1
        d = 0.0
        if pack.pei_active[i]:
            al, be, ka = pack.pei_par[i]
            a = a - al * (b @ c)
            c = (ka - al * be) * c
            d = be

        nn = int(pack.ibr_node[i])
        rot = _rotation(delta)
        g = pack.zg[nn]
        ns = a.shape[0]
        sl = slice(dev_off[i], dev_off[i] + ns)

        e_i = np.zeros(ntot)
        e_i[dev_off[i] + dpos] = 1.0

        # operating port values in the device frame
        i_dev = emit[i, EMIT_IOD:EMIT_IOQ + 1]
        di = emit[i, EMIT_DID:EMIT_DIQ + 1]
        v_pr = emit[i, EMIT_VPD:EMIT_VPQ + 1]
        i_til = (i_dev - di) + g * v_pr

        c_emb = np.zeros((2, ntot))
        c_emb[:, sl] = c
        rt_m = rot.T @ m_arr[nn] - np.outer(_GEN @ i_til, e_i)
        p_i = (c_emb + d * rt_m) / (1.0 + d * g)
        u_i = rt_m - g * p_i

        a_tot[sl, sl] += a
        a_tot[sl, :] += b @ u_i

        vpr_common = rot @ v_pr
        vpr_rows[nn] = rot @ p_i + np.outer(_GEN @ vpr_common, e_i)
        vpr_op[nn] = vpr_common

    for k in active_lines:
        sl = slice(line_off[k], line_off[k] + 2)
        r, ll = pack.line_r[k], pack.line_l[k]
        f, t = int(pack.line_from[k]), int(pack.line_to[k])
        a_tot[sl, sl] += -r / ll * eye2 + pack.omega0 * _J_ROT
        a_tot[sl, :] += vpr_rows[f] / ll
        if t >= 0:
            a_tot[sl, :] -= vpr_rows[t] / ll

    for j in range(pack.n_cp):
        sl = slice(cp_off[j], cp_off[j] + 2)
        nn = int(pack.cp_node[j])
        v_c = vpr_op[nn]
        nu = float(v_c @ v_c)
        s_pq = np.array([[pack.cp_pq[j, 0], pack.cp_pq[j, 1]],
                         [-pack.cp_pq[j, 1], pack.cp_pq[j, 0]]])
        icmd = (2.0 / 3.0) * s_pq @ v_c / nu
        j_cmd = (2.0 / 3.0) * s_pq / nu - 2.0 * np.outer(icmd, v_c) / nu
        tau = pack.cp_tau
        a_tot[sl, sl] += -eye2 / tau
        a_tot[sl, :] += (j_cmd @ vpr_rows[nn]) / tau

    if grid_off is not None:
        sl = slice(grid_off, grid_off + 2)
        a_tot[sl, sl] += (-pack.grid_r / pack.grid_l * eye2
                          + pack.omega0 * _J_ROT)
        a_tot[sl, :] -= vpr_rows[pack.grid_node] / pack.grid_l

    # Gauge reduction, one angle per island without a grid reference.
    # Plain deletion of a delta row/col would distort the spectrum (the
    # delta row is not empty), so quotient along the island's rotation
    # generator instead: deltas move together, common-frame pairs turn
    # with the frame, device-frame states stay put. The update zeroes
    # the generator direction exactly and leaves the physical modes.
    pinned = []
    for group in _islands(pack):
        if pack.grid_present and pack.grid_node in group:
            continue
        gen = np.zeros(ntot)
        pin = None
        for i in range(n):
            if int(pack.ibr_node[i]) not in group:
                continue
            dpos = 0 if pack.ibr_kind[i] == GFM_KIND else 1
            gen[dev_off[i] + dpos] = 1.0
            if pin is None and pack.ibr_kind[i] == GFM_KIND:
                pin = dev_off[i]
        if pin is None:
            continue
        for k in active_lines:
            if int(pack.line_from[k]) in group:
                i_op = op.x[pack.line_off + 2 * k:pack.line_off + 2 * k + 2]
                gen[line_off[k]:line_off[k] + 2] = _GEN @ i_op
        for j in range(pack.n_cp):
            if int(pack.cp_node[j]) in group:
                i_op = op.x[pack.cp_off + 2 * j:pack.cp_off + 2 * j + 2]
                gen[cp_off[j]:cp_off[j] + 2] = _GEN @ i_op
        a_tot -= np.outer(gen, a_tot[pin, :])
        pinned.append(pin)
    keep = [j for j in range(ntot) if j not in pinned]
    a_red = a_tot[np.ix_(keep, keep)]
    labels_red = tuple(labels[j] for j in keep)

    return SmallSignalModel(a=a_red, labels=labels_red, op=op)
