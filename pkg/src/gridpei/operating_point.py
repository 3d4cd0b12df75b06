"""Equilibrium of a scenario's pre-event configuration.

The solver works on the same packed right-hand side the integrator uses,
so a converged point is an equilibrium of the simulated system by
construction, not of a separate model.

Droop makes an islanded equilibrium rotate: the devices settle at a
common frequency below nominal, which in the nominal common frame is a
slow collective rotation, not a fixed point. A per-island secondary trim
(one scalar added to every droop frequency set point in the island)
restores an exact fixed point, mirroring how a secondary controller
holds an island at nominal frequency. Power sharing is unchanged since
the shift is common. One device angle per trimmed island is pinned to
zero as the rotational gauge; a grid-connected island is anchored by the
source angle instead and gets no trim.

Interface enforcement is left out of the solve: references captured at
the equilibrium make the interface sources vanish there, so the bare and
enforced systems share the point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import GFM_KIND, N_EMIT, PackedSystem
from .errors import InvalidScenario, NoConvergence

RESIDUAL_TOL = 1e-9
_MAX_ITER = 80


def _islands(pack: PackedSystem) -> list[list[int]]:
    """Connected node groups under the initially active lines (0-based)."""
    n = pack.n_nodes
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k in range(pack.n_line):
        if pack.line_act[k] and pack.line_to[k] >= 0:
            ra, rb = find(int(pack.line_from[k])), find(int(pack.line_to[k]))
            if ra != rb:
                parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for nn in range(n):
        groups.setdefault(find(nn), []).append(nn)
    return sorted(groups.values())


@dataclass(frozen=True)
class OperatingPoint:
    """Converged pre-event equilibrium in flat-state form.

    v_odq / i_odq are per-device terminal quantities in each device's own
    frame; the reference-capture helper reads them by device index.
    """

    x: np.ndarray
    gfm_trim: np.ndarray
    islands: tuple[tuple[int, ...], ...]
    scaled_residual: float
    v_odq: np.ndarray
    i_odq: np.ndarray
    state_names: tuple[str, ...]

    def state_of(self, i: int, pack: PackedSystem) -> np.ndarray:
        off = int(pack.ibr_off[i])
        n = 11 if pack.ibr_kind[i] == GFM_KIND else 8
        return self.x[off:off + n]


def find_operating_point(scenario, x_guess=None) -> OperatingPoint:
    """Damped Newton on the packed right-hand side.

    Residual rows are scaled per state class and by the nominal angular
    rate, so the tolerance reads as a per-unit rate imbalance. Raises
    NoConvergence carrying the last scaled residual and the worst rows.
    """
    pack = PackedSystem(scenario)
    pack.pei_active[:] = 0
    return _solve(pack, x_guess)


def solve_packed(pack: PackedSystem, x_guess=None) -> OperatingPoint:
    saved = pack.pei_active.copy()
    pack.pei_active[:] = 0
    try:
        return _solve(pack, x_guess)
    finally:
        pack.pei_active[:] = saved


def _solve(pack: PackedSystem, x_guess=None) -> OperatingPoint:
    islands = _islands(pack)
    node_kind = {int(pack.ibr_node[i]): int(pack.ibr_kind[i])
                 for i in range(pack.n_ibr)}
    grid_nodes = {pack.grid_node} if pack.grid_present else set()

    pinned: list[int] = []          # state indices removed from unknowns
    trim_members: list[list[int]] = []
    for isl in islands:
        gfms = [nn for nn in isl if node_kind[nn] == GFM_KIND]
        pinned_by_grid = any(nn in grid_nodes for nn in isl)
        if pinned_by_grid:
            continue
        if not gfms:
            raise InvalidScenario(
                "an island without a grid source needs a grid-forming device")
        pinned.append(int(pack.ibr_off[gfms[0]]))    # delta of first former
        trim_members.append(gfms)

    row_mask = np.ones(pack.n_state, dtype=bool)
    unk_mask = np.ones(pack.n_state, dtype=bool)
    if pack.grid_present:
        # source angle: exogenous, flat at nominal frequency; gauge = 0
        row_mask[pack.grid_off] = False
        unk_mask[pack.grid_off] = False
    for j in pinned:
        unk_mask[j] = False
    unk_idx = np.flatnonzero(unk_mask)
    row_idx = np.flatnonzero(row_mask)
    n_trim = len(trim_members)
    n_unk = unk_idx.size + n_trim
    if n_unk != row_idx.size:
        raise AssertionError("equilibrium system is not square")

    s_unk = pack.scales[unk_idx]
    r_scale = 1.0 / (pack.scales[row_idx] * pack.omega0)

    x_work = pack.initial_guess() if x_guess is None else np.array(
        x_guess, dtype=float)
    if pack.grid_present:
        x_work[pack.grid_off] = 0.0
    for j in pinned:
        x_work[j] = 0.0

    z = np.concatenate([x_work[unk_idx] / s_unk, np.zeros(n_trim)])
    dx = np.empty(pack.n_state)

    def residual(zv):
        x_work[unk_idx] = zv[:unk_idx.size] * s_unk
        for t, members in enumerate(trim_members):
            u = zv[unk_idx.size + t]
            for nn in members:
                pack.gfm_trim[nn] = u
        pack.rhs(x_work, dx)
        return dx[row_idx] * r_scale

    r = residual(z)
    for _ in range(_MAX_ITER):
        r_inf = float(np.max(np.abs(r)))
        if r_inf < RESIDUAL_TOL:
            break
        jac = np.empty((row_idx.size, n_unk))
        for j in range(n_unk):
            h = 1e-7 * (1.0 + abs(z[j]))
            zp = z.copy()
            zp[j] += h
            jac[:, j] = (residual(zp) - r) / h
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        r2 = float(np.linalg.norm(r))
        lam = 1.0
        accepted = False
        while lam >= 1e-4:
            z_try = z + lam * step
            r_try = residual(z_try)
            if float(np.linalg.norm(r_try)) <= (1.0 - 0.25 * lam) * r2:
                z, r = z_try, r_try
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
    else:
        pass

    r = residual(z)
    r_inf = float(np.max(np.abs(r)))
    if not r_inf < RESIDUAL_TOL:
        worst = np.argsort(np.abs(r))[::-1][:3]
        names = [pack.state_names[row_idx[w]] for w in worst]
        raise NoConvergence(
            f"equilibrium solve stalled at scaled residual {r_inf:.3e}",
            residual=r_inf,
            detail="dominant rows: " + ", ".join(names))

    emit = np.empty((pack.n_ibr, N_EMIT))
    pack.rhs(x_work, dx, emit)
    v_odq = np.empty((pack.n_ibr, 2))
    for i in range(pack.n_ibr):
        off = int(pack.ibr_off[i])
        if pack.ibr_kind[i] == GFM_KIND:
            v_odq[i] = x_work[off + 9:off + 11]
        else:
            v_odq[i] = x_work[off + 6:off + 8]
    i_odq = emit[:, 0:2].copy()

    return OperatingPoint(
        x=x_work.copy(),
        gfm_trim=pack.gfm_trim.copy(),
        islands=tuple(tuple(nn + 1 for nn in isl) for isl in islands),
        scaled_residual=r_inf,
        v_odq=v_odq,
        i_odq=i_odq,
        state_names=pack.state_names,
    )
