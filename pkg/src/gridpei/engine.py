"""Flat-array integration core for the transient solver.

The full system state is one float64 vector: device states in scenario
order, then constant-power load filter states, then line currents, then
the grid source block. Everything electrical outside the devices lives
in the common frame rotating at omega_0; device states stay in their own
frames and the interconnection rotates by each device's angle.

Grid-following devices store the angle relative to the common frame
(theta - omega_0 t) so the right-hand side is autonomous within a
segment. The absolute angle is reconstructed on output.

The interface law closes algebraically at each node. With a shunt
conductance G at the node the series command satisfies

    (1 + beta G) dv'' = (1 - kappa) dv - beta (i_arr - G v_o + di'' - i_ref)

which the per-node solve applies directly; without PEI the node reduces
to plain current balance. Inside the integrator the current set point of
a grid-following device saturates at the voltage floor instead of
raising, so diverging runs stay integrable and report their growth.

Compiled with numba when available; the pure-python path is the same
code object and gives bit-identical samples.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap

GFM_KIND = 0
GFL_KIND = 1

GFM_NS = 11
GFL_NS = 8

# parameter slot layout, per device kind
# gfm: r_f L_f C_f omega_c m_p n_q V0 omega_s K_pv K_iv F_ff K_pc K_ic omega_0
# gfl: r_f L_f C_f K_pp K_ip K_pc K_ic P* Q* omega_0 v_floor
N_PAR = 14

# emit buffer columns, device frame
EMIT_IOD, EMIT_IOQ = 0, 1
EMIT_DVD, EMIT_DVQ = 2, 3
EMIT_DID, EMIT_DIQ = 4, 5
EMIT_VPD, EMIT_VPQ = 6, 7
N_EMIT = 8


@njit(cache=True)
def _rhs(x, dx, emit, want_emit,
         n_ibr, ibr_kind, ibr_off, ibr_node, ibr_par, gfm_trim,
         pei_active, pei_par, pei_ref,
         zg,
         n_cp, cp_node, cp_pq, cp_off, cp_tau, cp_vmin2,
         n_line, line_from, line_to, line_r, line_l, line_act, line_off,
         grid_present, grid_node, grid_v, grid_r, grid_l, grid_omega,
         grid_off, omega0, n_nodes, arr, vpr, csn):
    for nn in range(n_nodes):
        arr[nn, 0] = 0.0
        arr[nn, 1] = 0.0

    for i in range(n_ibr):
        off = ibr_off[i]
        if ibr_kind[i] == GFM_KIND:
            d = x[off]
        else:
            d = x[off + 1]
        csn[i, 0] = math.cos(d)
        csn[i, 1] = math.sin(d)

    # currents arriving at each node from stateful elements, common frame
    for k in range(n_line):
        if line_act[k] != 0:
            base = line_off + 2 * k
            ibd = x[base]
            ibq = x[base + 1]
            f = line_from[k]
            t = line_to[k]
            arr[f, 0] -= ibd
            arr[f, 1] -= ibq
            if t >= 0:
                arr[t, 0] += ibd
                arr[t, 1] += ibq
    for k in range(n_cp):
        base = cp_off + 2 * k
        nn = cp_node[k]
        arr[nn, 0] -= x[base]
        arr[nn, 1] -= x[base + 1]
    if grid_present != 0:
        arr[grid_node, 0] += x[grid_off + 1]
        arr[grid_node, 1] += x[grid_off + 2]

    # per-node interface solve and device derivatives
    for i in range(n_ibr):
        nn = ibr_node[i]
        off = ibr_off[i]
        c = csn[i, 0]
        s = csn[i, 1]
        if ibr_kind[i] == GFM_KIND:
            vod = x[off + 9]
            voq = x[off + 10]
        else:
            vod = x[off + 6]
            voq = x[off + 7]

        tid = c * arr[nn, 0] + s * arr[nn, 1]
        tiq = -s * arr[nn, 0] + c * arr[nn, 1]
        g = zg[nn]

        if pei_active[i] != 0:
            al = pei_par[i, 0]
            be = pei_par[i, 1]
            ka = pei_par[i, 2]
            dvd = vod - pei_ref[i, 0]
            dvq = voq - pei_ref[i, 1]
            did = -al * dvd
            diq = -al * dvq
            den = 1.0 + be * g
            dvpd = ((1.0 - ka) * dvd - be * (tid - g * vod + did - pei_ref[i, 2])) / den
            dvpq = ((1.0 - ka) * dvq - be * (tiq - g * voq + diq - pei_ref[i, 3])) / den
        else:
            did = 0.0
            diq = 0.0
            dvpd = 0.0
            dvpq = 0.0

        vprd = vod - dvpd
        vprq = voq - dvpq
        iprd = tid - g * vprd
        iprq = tiq - g * vprq
        iod = iprd + did
        ioq = iprq + diq

        vpr[nn, 0] = c * vprd - s * vprq
        vpr[nn, 1] = s * vprd + c * vprq

        if want_emit != 0:
            emit[i, EMIT_IOD] = iod
            emit[i, EMIT_IOQ] = ioq
            emit[i, EMIT_DVD] = dvpd
            emit[i, EMIT_DVQ] = dvpq
            emit[i, EMIT_DID] = did
            emit[i, EMIT_DIQ] = diq
            emit[i, EMIT_VPD] = vprd
            emit[i, EMIT_VPQ] = vprq

        r_f = ibr_par[i, 0]
        l_f = ibr_par[i, 1]
        c_f = ibr_par[i, 2]

        if ibr_kind[i] == GFM_KIND:
            omega_c = ibr_par[i, 3]
            m_p = ibr_par[i, 4]
            n_q = ibr_par[i, 5]
            v0 = ibr_par[i, 6]
            omega_s = ibr_par[i, 7] + gfm_trim[i]
            k_pv = ibr_par[i, 8]
            k_iv = ibr_par[i, 9]
            f_ff = ibr_par[i, 10]
            k_pc = ibr_par[i, 11]
            k_ic = ibr_par[i, 12]

            pp = x[off + 1]
            qq = x[off + 2]
            phid = x[off + 3]
            phiq = x[off + 4]
            gamd = x[off + 5]
            gamq = x[off + 6]
            ild = x[off + 7]
            ilq = x[off + 8]

            pt = -1.5 * (vod * iod + voq * ioq)
            qt = -1.5 * (voq * iod - vod * ioq)

            vrefd = v0 - n_q * qq
            istar_d = k_pv * (vrefd - vod) - f_ff * iod - omega0 * c_f * voq \
                + k_iv * phid
            istar_q = k_pv * (-voq) - f_ff * ioq + omega0 * c_f * vod \
                + k_iv * phiq
            vi_d = k_pc * (istar_d - ild) - omega0 * l_f * ilq + k_ic * gamd
            vi_q = k_pc * (istar_q - ilq) + omega0 * l_f * ild + k_ic * gamq

            dx[off] = omega_s - m_p * pp - omega0
            dx[off + 1] = omega_c * (pt - pp)
            dx[off + 2] = omega_c * (qt - qq)
            dx[off + 3] = vrefd - vod
            dx[off + 4] = -voq
            dx[off + 5] = istar_d - ild
            dx[off + 6] = istar_q - ilq
            dx[off + 7] = (-r_f * ild + omega0 * l_f * ilq + vi_d - vod) / l_f
            dx[off + 8] = (-r_f * ilq - omega0 * l_f * ild + vi_q - voq) / l_f
            dx[off + 9] = omega0 * voq + (ild + iod) / c_f
            dx[off + 10] = -omega0 * vod + (ilq + ioq) / c_f
        else:
            k_pp = ibr_par[i, 3]
            k_ip = ibr_par[i, 4]
            k_pc = ibr_par[i, 5]
            k_ic = ibr_par[i, 6]
            p_star = ibr_par[i, 7]
            q_star = ibr_par[i, 8]
            v_floor = ibr_par[i, 10]

            eta = x[off]
            gamd = x[off + 2]
            gamq = x[off + 3]
            ild = x[off + 4]
            ilq = x[off + 5]

            vden = vod if vod > v_floor else v_floor
            istar_d = (2.0 / 3.0) * p_star / vden
            istar_q = -(2.0 / 3.0) * q_star / vden

            vi_d = k_pc * (istar_d - ild) - omega0 * l_f * ilq + k_ic * gamd
            vi_q = k_pc * (istar_q - ilq) + omega0 * l_f * ild + k_ic * gamq

            dx[off] = k_ip * voq
            dx[off + 1] = eta + k_pp * voq
            dx[off + 2] = istar_d - ild
            dx[off + 3] = istar_q - ilq
            dx[off + 4] = (-r_f * ild + omega0 * l_f * ilq + vi_d - vod) / l_f
            dx[off + 5] = (-r_f * ilq - omega0 * l_f * ild + vi_q - voq) / l_f
            dx[off + 6] = omega0 * voq + (ild + iod) / c_f
            dx[off + 7] = -omega0 * vod + (ilq + ioq) / c_f

    # line, load filter and grid source derivatives, common frame
    for k in range(n_line):
        base = line_off + 2 * k
        if line_act[k] != 0:
            f = line_from[k]
            t = line_to[k]
            r = line_r[k]
            ll = line_l[k]
            ibd = x[base]
            ibq = x[base + 1]
            vfd = vpr[f, 0]
            vfq = vpr[f, 1]
            if t >= 0:
                vtd = vpr[t, 0]
                vtq = vpr[t, 1]
            else:
                vtd = 0.0
                vtq = 0.0
            dx[base] = (-r * ibd + omega0 * ll * ibq + vfd - vtd) / ll
            dx[base + 1] = (-r * ibq - omega0 * ll * ibd + vfq - vtq) / ll
        else:
            dx[base] = 0.0
            dx[base + 1] = 0.0

    for k in range(n_cp):
        base = cp_off + 2 * k
        nn = cp_node[k]
        vd = vpr[nn, 0]
        vq = vpr[nn, 1]
        vn2 = vd * vd + vq * vq
        if vn2 < cp_vmin2:
            vn2 = cp_vmin2
        p = cp_pq[k, 0]
        q = cp_pq[k, 1]
        icd = (2.0 / 3.0) * (p * vd + q * vq) / vn2
        icq = (2.0 / 3.0) * (p * vq - q * vd) / vn2
        dx[base] = (icd - x[base]) / cp_tau
        dx[base + 1] = (icq - x[base + 1]) / cp_tau

    if grid_present != 0:
        phi = x[grid_off]
        igd = x[grid_off + 1]
        igq = x[grid_off + 2]
        ed = grid_v * math.cos(phi)
        eq = grid_v * math.sin(phi)
        dx[grid_off] = grid_omega - omega0
        dx[grid_off + 1] = (-grid_r * igd + omega0 * grid_l * igq
                            + ed - vpr[grid_node, 0]) / grid_l
        dx[grid_off + 2] = (-grid_r * igq - omega0 * grid_l * igd
                            + eq - vpr[grid_node, 1]) / grid_l


@njit(cache=True)
def _run_segment(x, k_start, k_end, dt, n_dec, include_end, out,
                 v_idx, i_idx, v_ceiling, i_ceiling,
                 n_ibr, ibr_kind, ibr_off, ibr_node, ibr_par, gfm_trim,
                 pei_active, pei_par, pei_ref,
                 zg,
                 n_cp, cp_node, cp_pq, cp_off, cp_tau, cp_vmin2,
                 n_line, line_from, line_to, line_r, line_l, line_act,
                 line_off,
                 grid_present, grid_node, grid_v, grid_r, grid_l, grid_omega,
                 grid_off, omega0, n_nodes):
    """Fixed-step fourth-order run over [k_start, k_end] steps.

    Decimated samples land in out[k // n_dec]. Returns (status, k) where
    status 1 means a state magnitude ceiling was crossed at step k; the
    offending sample is still written.
    """
    nx = x.shape[0]
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    xt = np.empty(nx)
    arr = np.empty((n_nodes, 2))
    vpr = np.empty((n_nodes, 2))
    csn = np.empty((n_ibr, 2))
    emit = np.empty((1, N_EMIT))

    if k_start % n_dec == 0:
        out[k_start // n_dec] = x

    for k in range(k_start, k_end):
        _rhs(x, k1, emit, 0, n_ibr, ibr_kind, ibr_off, ibr_node, ibr_par,
             gfm_trim, pei_active, pei_par, pei_ref, zg, n_cp, cp_node,
             cp_pq, cp_off, cp_tau, cp_vmin2, n_line, line_from, line_to,
             line_r, line_l, line_act, line_off, grid_present, grid_node,
             grid_v, grid_r, grid_l, grid_omega, grid_off, omega0, n_nodes,
             arr, vpr, csn)
        for j in range(nx):
            xt[j] = x[j] + 0.5 * dt * k1[j]
        _rhs(xt, k2, emit, 0, n_ibr, ibr_kind, ibr_off, ibr_node, ibr_par,
             gfm_trim, pei_active, pei_par, pei_ref, zg, n_cp, cp_node,
             cp_pq, cp_off, cp_tau, cp_vmin2, n_line, line_from, line_to,
             line_r, line_l, line_act, line_off, grid_present, grid_node,
             grid_v, grid_r, grid_l, grid_omega, grid_off, omega0, n_nodes,
             arr, vpr, csn)
        for j in range(nx):
            xt[j] = x[j] + 0.5 * dt * k2[j]
        _rhs(xt, k3, emit, 0, n_ibr, ibr_kind, ibr_off, ibr_node, ibr_par,
             gfm_trim, pei_active, pei_par, pei_ref, zg, n_cp, cp_node,
             cp_pq, cp_off, cp_tau, cp_vmin2, n_line, line_from, line_to,
             line_r, line_l, line_act, line_off, grid_present, grid_node,
             grid_v, grid_r, grid_l, grid_omega, grid_off, omega0, n_nodes,
             arr, vpr, csn)
        for j in range(nx):
            xt[j] = x[j] + dt * k3[j]
        _rhs(xt, k4, emit, 0, n_ibr, ibr_kind, ibr_off, ibr_node, ibr_par,
             gfm_trim, pei_active, pei_par, pei_ref, zg, n_cp, cp_node,
             cp_pq, cp_off, cp_tau, cp_vmin2, n_line, line_from, line_to,
             line_r, line_l, line_act, line_off, grid_present, grid_node,
             grid_v, grid_r, grid_l, grid_omega, grid_off, omega0, n_nodes,
             arr, vpr, csn)
        for j in range(nx):
            x[j] = x[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j]
                                        + k4[j])
        kn = k + 1
        if kn % n_dec == 0 and (kn < k_end or include_end != 0):
            out[kn // n_dec] = x
            bad = False
            for j in range(v_idx.shape[0]):
                if not (abs(x[v_idx[j]]) <= v_ceiling):
                    bad = True
            for j in range(i_idx.shape[0]):
                if not (abs(x[i_idx[j]]) <= i_ceiling):
                    bad = True
            if bad:
                return 1, kn
    return 0, k_end


@njit(cache=True)
def _emit_rows(rows, emit_out,
               n_ibr, ibr_kind, ibr_off, ibr_node, ibr_par, gfm_trim,
               pei_active, pei_par, pei_ref,
               zg,
               n_cp, cp_node, cp_pq, cp_off, cp_tau, cp_vmin2,
               n_line, line_from, line_to, line_r, line_l, line_act,
               line_off,
               grid_present, grid_node, grid_v, grid_r, grid_l, grid_omega,
               grid_off, omega0, n_nodes):
    """Recompute interface and terminal-current algebra for saved samples."""
    nx = rows.shape[1]
    dx = np.empty(nx)
    arr = np.empty((n_nodes, 2))
    vpr = np.empty((n_nodes, 2))
    csn = np.empty((n_ibr, 2))
    for r in range(rows.shape[0]):
        _rhs(rows[r], dx, emit_out[r], 1, n_ibr, ibr_kind, ibr_off,
             ibr_node, ibr_par, gfm_trim, pei_active, pei_par, pei_ref, zg,
             n_cp, cp_node, cp_pq, cp_off, cp_tau, cp_vmin2, n_line,
             line_from, line_to, line_r, line_l, line_act, line_off,
             grid_present, grid_node, grid_v, grid_r, grid_l, grid_omega,
             grid_off, omega0, n_nodes, arr, vpr, csn)


# nominal magnitude scales for ceilings and solver conditioning
V_SCALE = 310.27
I_SCALE = 25.0

_CLASS_SCALE = {
    "angle": 1.0,
    "power": 1.0e4,
    "phi": 0.1,
    "gam": 0.05,
    "current": I_SCALE,
    "voltage": V_SCALE,
    "eta": 10.0,
}

_GFM_CLASSES = ("angle", "power", "power", "phi", "phi", "gam", "gam",
                "current", "current", "voltage", "voltage")
_GFL_CLASSES = ("eta", "angle", "gam", "gam", "current", "current",
                "voltage", "voltage")


class PackedSystem:
    """Scenario flattened into the arrays the compiled core consumes.

    Owns the per-segment switches (active lines, load values, interface
    enables, grid frequency); events mutate them between segments. The
    argument tuple is rebuilt per call because scalars change.
    """

    def __init__(self, scenario):
        from .devices import GFL_STATE_NAMES, GFM_STATE_NAMES

        sc = scenario
        self.scenario = sc
        n = sc.n_ibr
        self.n_nodes = n
        self.n_ibr = n

        self.ibr_kind = np.empty(n, dtype=np.int64)
        self.ibr_off = np.empty(n, dtype=np.int64)
        self.ibr_node = np.arange(n, dtype=np.int64)
        self.ibr_par = np.zeros((n, N_PAR))
        self.gfm_trim = np.zeros(n)

        names: list[str] = []
        classes: list[str] = []
        off = 0
        for i, spec in enumerate(sc.ibrs):
            self.ibr_off[i] = off
            p = spec.params
            if spec.kind == "gfm":
                self.ibr_kind[i] = GFM_KIND
                self.ibr_par[i, :14] = (
                    p.r_f, p.L_f, p.C_f, p.omega_c, p.droop_mp, p.droop_nq,
                    p.V0, p.omega_s, p.K_pv, p.K_iv, p.F_ff, p.K_pc, p.K_ic,
                    p.omega_0)
                names += [f"ibr{i + 1}.{s}" for s in GFM_STATE_NAMES]
                classes += list(_GFM_CLASSES)
                off += GFM_NS
            else:
                self.ibr_kind[i] = GFL_KIND
                self.ibr_par[i, :11] = (
                    p.r_f, p.L_f, p.C_f, p.K_pp, p.K_ip, p.K_pc, p.K_ic,
                    p.P_star, p.Q_star, p.omega_0, p.v_floor)
                names += [f"ibr{i + 1}.{s}" for s in GFL_STATE_NAMES]
                classes += list(_GFL_CLASSES)
                off += GFL_NS

        cp_loads = [(k, ld) for k, ld in enumerate(sc.loads)
                    if ld.model == "constant-power"]
        self.cp_load_index = [k for k, _ in cp_loads]
        self.n_cp = len(cp_loads)
        self.cp_off = off
        self.cp_node = np.array([ld.node - 1 for _, ld in cp_loads] or [0],
                                dtype=np.int64)
        self.cp_pq = np.zeros((max(1, self.n_cp), 2))
        for j, (_, ld) in enumerate(cp_loads):
            self.cp_pq[j] = (ld.p, 0.0 if ld.q is None else ld.q)
        self.cp_tau = sc.sim.cp_tau
        self.cp_vmin2 = (0.05 * V_SCALE) ** 2
        for j in range(self.n_cp):
            names += [f"cp{j + 1}.iD", f"cp{j + 1}.iQ"]
            classes += ["current", "current"]
        off += 2 * self.n_cp

        lines = sc.topology.lines
        self.n_line = len(lines)
        self.line_off = off
        self.line_from = np.array([b.i - 1 for b in lines] or [0],
                                  dtype=np.int64)
        self.line_to = np.array([b.j - 1 for b in lines] or [0],
                                dtype=np.int64)
        self.line_r = np.array([b.r for b in lines] or [1.0])
        self.line_l = np.array([b.L for b in lines] or [1.0])
        self.line_act = np.ones(max(1, self.n_line), dtype=np.uint8)
        for idx in sc.open_lines:
            self.line_act[idx] = 0
        for k in range(self.n_line):
            names += [f"line{k + 1}.iD", f"line{k + 1}.iQ"]
            classes += ["current", "current"]
        off += 2 * self.n_line

        self.grid_present = 0
        self.grid_node = 0
        self.grid_v = 0.0
        self.grid_r = 1.0
        self.grid_l = 1.0
        self.grid_omega = 0.0
        self.grid_off = off
        if sc.grid is not None:
            self.grid_present = 1
            self.grid_node = sc.grid.node - 1
            self.grid_v = sc.grid.v_peak
            self.grid_r = sc.grid.r
            self.grid_l = sc.grid.L
            self.grid_omega = 2.0 * math.pi * sc.grid.f_hz
            names += ["grid.phi", "grid.iD", "grid.iQ"]
            classes += ["angle", "current", "current"]
            off += 3

        self.n_state = off
        self.state_names = tuple(names)
        self.state_classes = tuple(classes)
        self.scales = np.array([_CLASS_SCALE[c] for c in classes])
        self.v_idx = np.array(
            [j for j, c in enumerate(classes) if c == "voltage"],
            dtype=np.int64)
        self.i_idx = np.array(
            [j for j, c in enumerate(classes) if c == "current"],
            dtype=np.int64)
        self.v_ceiling = sc.sim.blowup_factor * V_SCALE
        self.i_ceiling = sc.sim.blowup_factor * I_SCALE

        self.pei_active = np.zeros(n, dtype=np.uint8)
        self.pei_par = np.zeros((n, 3))
        self.pei_ref = np.zeros((n, 4))
        for i, spec in enumerate(sc.ibrs):
            if spec.pei is not None:
                cfg = spec.pei
                self.pei_par[i] = (cfg.alpha, cfg.beta, cfg.kappa)
                if spec.pei_enabled:
                    self.pei_active[i] = 1

        self.z_over: dict[int, float] = {}
        self.zg = np.zeros(n)
        self._refresh_zg()
        self.omega0 = sc.ibrs[0].params.omega_0

    def _refresh_zg(self):
        from .scenario import z_load_conductance

        for nn in range(self.n_nodes):
            self.zg[nn] = z_load_conductance(self.scenario.loads, nn + 1,
                                             self.z_over)

    def apply_event(self, ev) -> None:
        from .scenario import (EV_CLOSE_TIE, EV_FREQ_STEP, EV_LOAD_STEP,
                               EV_PEI_ENABLE, LOAD_Z)

        if ev.kind == EV_CLOSE_TIE:
            self.line_act[ev.target] = 1
        elif ev.kind == EV_LOAD_STEP:
            ld = self.scenario.loads[ev.target]
            if ld.model == LOAD_Z:
                self.z_over[ev.target] = ev.value
                self._refresh_zg()
            else:
                j = self.cp_load_index.index(ev.target)
                self.cp_pq[j] = (ev.value, ev.value2)
        elif ev.kind == EV_FREQ_STEP:
            self.grid_omega = 2.0 * math.pi * ev.value
        elif ev.kind == EV_PEI_ENABLE:
            self.pei_active[ev.target] = 1

    def _tail_args(self):
        return (self.n_ibr, self.ibr_kind, self.ibr_off, self.ibr_node,
                self.ibr_par, self.gfm_trim, self.pei_active, self.pei_par,
                self.pei_ref, self.zg, self.n_cp, self.cp_node, self.cp_pq,
                self.cp_off, self.cp_tau, self.cp_vmin2, self.n_line,
                self.line_from, self.line_to, self.line_r, self.line_l,
                self.line_act, self.line_off, self.grid_present,
                self.grid_node, self.grid_v, self.grid_r, self.grid_l,
                self.grid_omega, self.grid_off, self.omega0, self.n_nodes)

    def rhs(self, x, dx=None, emit=None):
        """Single evaluation; convenience for the solver and tests."""
        x = np.asarray(x, dtype=float)
        if dx is None:
            dx = np.empty_like(x)
        want = 0
        if emit is None:
            emit = np.empty((self.n_ibr, N_EMIT))
        else:
            want = 1
        arr = np.empty((self.n_nodes, 2))
        vpr = np.empty((self.n_nodes, 2))
        csn = np.empty((self.n_ibr, 2))
        _rhs(x, dx, emit, want, *self._tail_args(), arr, vpr, csn)
        return dx

    def run(self, x, k_start, k_end, dt, n_dec, include_end, out):
        return _run_segment(x, k_start, k_end, dt, n_dec,
                            1 if include_end else 0, out, self.v_idx,
                            self.i_idx, self.v_ceiling, self.i_ceiling,
                            *self._tail_args())

    def emit_rows(self, rows):
        emit = np.empty((rows.shape[0], self.n_ibr, N_EMIT))
        _emit_rows(np.ascontiguousarray(rows), emit, *self._tail_args())
        return emit

    def emit_rows_into(self, rows, emit, r0, r1):
        if r1 > r0:
            _emit_rows(rows[r0:r1], emit[r0:r1], *self._tail_args())

    def initial_guess(self) -> np.ndarray:
        """Cold-start state for the equilibrium solver: rated voltage,
        local loads served locally, integrators preloaded consistently."""
        x = np.zeros(self.n_state)
        w0 = self.omega0
        for i in range(self.n_ibr):
            off = self.ibr_off[i]
            par = self.ibr_par[i]
            g = self.zg[self.ibr_node[i]]
            if self.ibr_kind[i] == GFM_KIND:
                v0 = par[6]
                i_ld = v0 * g
                x[off + 1] = 1.5 * v0 * i_ld
                x[off + 3] = i_ld * (1.0 - par[10]) / par[9]
                x[off + 4] = w0 * par[2] * v0 / par[9]
                x[off + 5] = (par[0] * i_ld + v0) / par[12]
                x[off + 6] = w0 * par[1] * i_ld / par[12]
                x[off + 7] = i_ld
                x[off + 9] = v0
            else:
                v0 = self.grid_v if self.grid_present else V_SCALE
                i_ld = (2.0 / 3.0) * par[7] / v0
                i_lq = -(2.0 / 3.0) * par[8] / v0
                x[off + 2] = (par[0] * i_ld - w0 * par[1] * i_lq + v0) / par[6]
                x[off + 3] = (par[0] * i_lq + w0 * par[1] * i_ld) / par[6]
                x[off + 4] = i_ld
                x[off + 5] = i_lq
                x[off + 6] = v0
        for j in range(self.n_cp):
            base = self.cp_off + 2 * j
            x[base] = (2.0 / 3.0) * self.cp_pq[j, 0] / V_SCALE
            x[base + 1] = (2.0 / 3.0) * self.cp_pq[j, 1] / V_SCALE
        return x
